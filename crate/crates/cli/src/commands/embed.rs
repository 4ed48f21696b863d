use cltv_core::pairgen::{build_negative_table, build_view_streams, generate_all_pairs};
use cltv_core::sgns::{init_model, train, warm_start_init, CohortMap};
use cltv_core::Embeddings;

use crate::artifacts::{EMBEDDINGS_BIN, EMBEDDINGS_TSV};
use crate::CliError;

use super::Ctx;

/// Trains customer embeddings from product view sequences; warm-starts from
/// a prior period's bundle when configured.
pub fn cmd_embed(ctx: &Ctx) -> Result<(), CliError> {
    let events = ctx.load_events()?;
    let split = ctx.split()?;
    let sgns = &ctx.config.sgns;

    let streams = build_view_streams(&events, &split);
    if streams.streams.is_empty() {
        return Err(CliError::data(
            "no product has two distinct viewers in the feature window",
        ));
    }
    let pairs = generate_all_pairs(&streams, sgns.window_length);
    let table = build_negative_table(&streams, sgns.exponent)?;

    let (mut model, cohorts): (Embeddings, Option<CohortMap>) = if ctx.config.mode.warm_start {
        let prior_path = ctx.config.paths.prior_embeddings.as_ref().ok_or_else(|| {
            CliError::config("mode.warm_start requires paths.prior_embeddings")
        })?;
        if !prior_path.exists() {
            return Err(CliError::MissingArtifact {
                artifact: prior_path.display().to_string(),
                producer: "embed".to_string(),
            });
        }
        let prior = Embeddings::load(prior_path)?;
        let cohorts = CohortMap::from_prior(prior.index(), &streams.index);
        let model = warm_start_init(&prior, streams.index.clone(), &cohorts, sgns)?;
        println!(
            "embed: warm start, {} returning / {} new customers",
            cohorts.n_old(),
            cohorts.n_new()
        );
        (model, Some(cohorts))
    } else {
        (init_model(streams.index.clone(), sgns), None)
    };

    let report = train(&mut model, &pairs, &table, sgns, cohorts.as_ref(), ctx.train_mode())?;

    let mut bin = Vec::new();
    model.write_to(&mut bin)?;
    let bin_path = ctx.store.write_atomic(EMBEDDINGS_BIN, &bin)?;
    let mut tsv = Vec::new();
    model.write_tsv(&mut tsv)?;
    let tsv_path = ctx.store.write_atomic(EMBEDDINGS_TSV, &tsv)?;

    let mut manifest = ctx.manifest("embed");
    manifest.seed = Some(sgns.seed);
    manifest.input_file("events", &ctx.config.paths.events)?;
    if let Some(prior) = &ctx.config.paths.prior_embeddings {
        if ctx.config.mode.warm_start {
            manifest.input_file("prior_embeddings", prior)?;
        }
    }
    manifest.output_file("embeddings_bin", &bin_path)?;
    manifest.output_file("embeddings_tsv", &tsv_path)?;
    ctx.store.write_manifest(&manifest)?;

    let losses: Vec<String> =
        report.epoch_mean_loss.iter().map(|l| format!("{l:.4}")).collect();
    println!(
        "embed: {} customers, {} pairs, epoch losses [{}] -> {}",
        model.n_customers(),
        pairs.len(),
        losses.join(", "),
        bin_path.display()
    );
    Ok(())
}
