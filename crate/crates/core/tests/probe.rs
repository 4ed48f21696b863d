// Scratch calibration probe for freezing the uplift experiment config.

use cltv_core::data_model::{TimeSplit, Timestamp};
use cltv_core::datagen::{generate, GenConfig};
use cltv_core::evaluation::{uplift_experiment, UpliftConfig};
use cltv_core::forest::ForestConfig;
use cltv_core::sgns::SgnsConfig;

fn default_split(cfg: &GenConfig) -> TimeSplit {
    let t0 = Timestamp::parse_date(&cfg.start_date).unwrap();
    TimeSplit::with_default_spans(t0.plus_days(cfg.horizon_days - 730))
}

#[test]
#[ignore]
fn probe_uplift_policies() {
    let gen_cfg = GenConfig::default();
    let split = default_split(&gen_cfg);
    let g = generate(&gen_cfg).unwrap();
    let g0 = generate(&GenConfig { affinity_strength: 0.0, ..gen_cfg }).unwrap();
    for (mtry, dim, min_leaf) in [(Some(99), 8, 25), (Some(22), 8, 50), (Some(64), 16, 25)] {
        let cfg = UpliftConfig {
            sgns: SgnsConfig { dim, epochs: 8, eta: 0.05, ..SgnsConfig::default() },
            forest: ForestConfig {
                n_trees: 100,
                max_depth: 10,
                mtry,
                min_samples_leaf: min_leaf,
                ..ForestConfig::default()
            },
            test_fraction: 0.2,
            n_seeds: 10,
            seed: 1000,
        };
        let hi = uplift_experiment(&g.log, &split, &cfg).unwrap();
        let null = uplift_experiment(&g0.log, &split, &cfg).unwrap();
        println!(
            "mtry {mtry:?} dim {dim} leaf {min_leaf}: high [{:.4}, {:.4}] null [{:.4}, {:.4}]",
            hi.ci_low, hi.ci_high, null.ci_low, null.ci_high
        );
    }
}
