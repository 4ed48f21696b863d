use cltv_core::features::{compute_features, encode_categoricals};

use crate::artifacts::{FEATURES_BIN, FEATURES_CSV};
use crate::CliError;

use super::Ctx;

/// Computes the handcrafted feature table over the feature window.
pub fn cmd_features(ctx: &Ctx) -> Result<(), CliError> {
    let events = ctx.load_events()?;
    let split = ctx.split()?;
    let vectors = compute_features(&events, &split);
    if vectors.is_empty() {
        return Err(CliError::data("no customer has an event in the feature window"));
    }
    let table = encode_categoricals(&vectors);

    let mut bin = Vec::new();
    table.write_to(&mut bin).map_err(CliError::io)?;
    let bin_path = ctx.store.write_atomic(FEATURES_BIN, &bin)?;

    let mut csv = Vec::new();
    table.write_csv(&mut csv).map_err(CliError::io)?;
    let csv_path = ctx.store.write_atomic(FEATURES_CSV, &csv)?;

    let mut manifest = ctx.manifest("features");
    manifest.input_file("events", &ctx.config.paths.events)?;
    manifest.output_file("features_bin", &bin_path)?;
    manifest.output_file("features_csv", &csv_path)?;
    ctx.store.write_manifest(&manifest)?;

    println!(
        "features: {} customers x {} columns -> {}",
        table.n_rows(),
        table.columns().len(),
        bin_path.display()
    );
    Ok(())
}
