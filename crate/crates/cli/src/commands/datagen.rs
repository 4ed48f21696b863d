use cltv_core::data_model::io as event_io;
use cltv_core::datagen::generate;

use crate::artifacts::EVENTS_SIDECAR;
use crate::CliError;

use super::Ctx;

/// Generates the synthetic event log and its ground-truth sidecar.
pub fn cmd_datagen(ctx: &Ctx) -> Result<(), CliError> {
    let generated = generate(&ctx.config.datagen)?;

    let events_path = &ctx.config.paths.events;
    if let Some(parent) = events_path.parent() {
        std::fs::create_dir_all(parent).map_err(CliError::io)?;
    }
    event_io::write_events(events_path, &generated.log)?;

    let sidecar = serde_json::to_vec_pretty(&generated.truth).map_err(CliError::json)?;
    let sidecar_path = ctx.store.write_atomic(EVENTS_SIDECAR, &sidecar)?;

    let mut manifest = ctx.manifest("datagen");
    manifest.seed = Some(ctx.config.datagen.seed);
    manifest.output_file("events", events_path)?;
    manifest.output_file("latent_truth", &sidecar_path)?;
    ctx.store.write_manifest(&manifest)?;

    println!(
        "datagen: {} events for {} customers -> {}",
        generated.log.len(),
        ctx.config.datagen.n_customers,
        events_path.display()
    );
    Ok(())
}
