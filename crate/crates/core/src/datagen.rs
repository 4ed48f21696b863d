//! Synthetic event-log generator with a planted latent customer value.
//!
//! Each customer draws a log-normal latent value; order rates and item
//! values grow with it. Products sit in value tiers and customers
//! preferentially view products of their own tier, so view sequences carry
//! a value signal that handcrafted aggregates cannot see directly. A
//! configurable fraction of customers place no label-window orders.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::{
    CustomerEvent, CustomerId, EventLog, Money, ProductId, Timestamp, DAY_SECS,
};

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n_customers: usize,
    pub n_products: usize,
    /// Total simulated span; the label window is its final 365 days.
    pub horizon_days: i64,
    pub seed: u64,
    /// Dispersion (log-space sigma) of the latent customer value.
    pub latent_value_spread: f64,
    /// Zipf exponent of product popularity.
    pub product_popularity_exponent: f64,
    /// How strongly customers prefer products of their own value tier;
    /// 0 makes views independent of the latent value.
    pub affinity_strength: f64,
    /// Expected fraction of customers with no label-window orders.
    pub churner_fraction: f64,
    /// Simulation start (midnight UTC).
    pub start_date: String,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_customers: 5000,
            n_products: 500,
            horizon_days: 730,
            seed: 42,
            latent_value_spread: 0.75,
            product_popularity_exponent: 1.05,
            affinity_strength: 3.0,
            churner_fraction: 0.35,
            start_date: "2014-01-01".to_string(),
        }
    }
}

impl GenConfig {
    fn validate(&self) -> Result<Timestamp, DatagenError> {
        if self.n_customers < 1 || self.n_products < 1 {
            return Err(DatagenError::InvalidConfig("counts must be >= 1".into()));
        }
        if self.horizon_days < 2 {
            return Err(DatagenError::InvalidConfig("horizon must be >= 2 days".into()));
        }
        if self.latent_value_spread <= 0.0 || self.product_popularity_exponent <= 0.0 {
            return Err(DatagenError::InvalidConfig(
                "spread and popularity exponent must be positive".into(),
            ));
        }
        if self.affinity_strength < 0.0 {
            return Err(DatagenError::InvalidConfig("affinity must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.churner_fraction) {
            return Err(DatagenError::InvalidConfig("churner fraction must be in [0, 1)".into()));
        }
        Timestamp::parse_date(&self.start_date)
            .ok_or_else(|| DatagenError::InvalidConfig(format!("bad start_date {:?}", self.start_date)))
    }
}

pub const N_TIERS: usize = 5;

/// Planted ground truth per customer, written as a sidecar for tests only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerTruth {
    pub latent_value: f64,
    /// Latent-value quintile, 0 = lowest.
    pub tier: u8,
    pub churner: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub customers: BTreeMap<CustomerId, CustomerTruth>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub log: EventLog,
    pub truth: GroundTruth,
}

/// Dimension of the value-independent interest space that shapes which
/// products a customer browses.
const INTEREST_DIMS: usize = 12;

struct Product {
    id: ProductId,
    /// Position on the latent value axis in [0, 1].
    value_position: f64,
    /// Taste coordinates, independent of value.
    interests: Vec<f64>,
    new_collection: bool,
}

/// Zipf popularity weights plus product positions in value/interest space.
struct ProductCatalogue {
    popularity: Vec<f64>,
    value_position: Vec<f64>,
    interests: Vec<Vec<f64>>,
}

impl ProductCatalogue {
    fn build(products: &[Product], zipf_exponent: f64) -> ProductCatalogue {
        ProductCatalogue {
            popularity: (0..products.len())
                .map(|i| 1.0 / ((i + 1) as f64).powf(zipf_exponent))
                .collect(),
            value_position: products.iter().map(|p| p.value_position).collect(),
            interests: products.iter().map(|p| p.interests.clone()).collect(),
        }
    }
}

/// Per-customer product sampler: popularity shaped by taste alignment and
/// by proximity on the value axis, both scaled by affinity_strength, so
/// same-value customers co-view the same products while browsing remains
/// spread over many independent interest communities. affinity = 0 reduces
/// to pure popularity.
struct CustomerProductSampler {
    cdf: Vec<f64>,
}

impl CustomerProductSampler {
    fn build(
        catalogue: &ProductCatalogue,
        value_position: f64,
        interests: &[f64],
        affinity: f64,
    ) -> Self {
        let mut cdf = Vec::with_capacity(catalogue.popularity.len());
        let mut acc = 0.0;
        for i in 0..catalogue.popularity.len() {
            let taste: f64 = interests
                .iter()
                .zip(&catalogue.interests[i])
                .map(|(a, b)| a * b)
                .sum();
            let d = value_position - catalogue.value_position[i];
            acc += catalogue.popularity[i] * (affinity * (taste - 4.0 * d * d)).exp();
            cdf.push(acc);
        }
        let total = acc;
        for c in &mut cdf {
            *c /= total;
        }
        CustomerProductSampler { cdf }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }
}

const COUNTRIES: [(&str, f64); 6] = [
    ("UK", 0.35),
    ("DE", 0.20),
    ("FR", 0.15),
    ("US", 0.12),
    ("AU", 0.10),
    ("SE", 0.08),
];

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic generation: a master stream lays out products and latent
/// values; every customer then gets an independent stream derived from
/// (seed, customer index), so the output is byte-stable.
pub fn generate(config: &GenConfig) -> Result<Generated, DatagenError> {
    let t0 = config.validate()?;
    let horizon_secs = config.horizon_days * DAY_SECS;
    let label_start_secs = (config.horizon_days - 365).max(1) * DAY_SECS;

    let mut master = ChaCha8Rng::seed_from_u64(config.seed);

    let interest_scale = 1.0 / (INTEREST_DIMS as f64).sqrt();
    let unit_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let products: Vec<Product> = (0..config.n_products)
        .map(|i| Product {
            id: ProductId::new(format!("p{i:05}")),
            value_position: master.gen(),
            interests: (0..INTEREST_DIMS)
                .map(|_| unit_normal.sample(&mut master) * interest_scale)
                .collect(),
            new_collection: master.gen_bool(0.2),
        })
        .collect();
    let catalogue = ProductCatalogue::build(&products, config.product_popularity_exponent);

    // latent values and rank-based quintile tiers
    let latent_dist = LogNormal::new(3.3, config.latent_value_spread)
        .map_err(|e| DatagenError::InvalidConfig(e.to_string()))?;
    let latents: Vec<f64> = (0..config.n_customers).map(|_| latent_dist.sample(&mut master)).collect();
    let mut order: Vec<usize> = (0..config.n_customers).collect();
    order.sort_by(|&a, &b| latents[a].partial_cmp(&latents[b]).expect("finite latent"));
    let mut percentile = vec![0.0f64; config.n_customers];
    for (rank, &i) in order.iter().enumerate() {
        percentile[i] = (rank as f64 + 0.5) / config.n_customers as f64;
    }

    // churn probability falls steeply with the value tier
    const TIER_CHURN_MULTIPLIER: [f64; N_TIERS] = [2.2, 1.5, 0.9, 0.35, 0.1];

    let mut events: Vec<CustomerEvent> = Vec::new();
    let mut truth = GroundTruth::default();

    for c in 0..config.n_customers {
        let id = CustomerId::new(format!("c{c:06}"));
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(config.seed ^ (c as u64 + 1)));
        let u = percentile[c];
        let latent = latents[c];
        let tier = ((u * N_TIERS as f64) as usize).min(N_TIERS - 1);
        let churn_p =
            (config.churner_fraction * TIER_CHURN_MULTIPLIER[tier]).clamp(0.02, 0.97);
        let churner = rng.gen_bool(churn_p);
        // per-customer activity level, independent of the latent value
        let activity: f64 = {
            let z: f64 = Normal::new(0.0, 1.0).unwrap().sample(&mut rng);
            (0.35 * z).exp()
        };

        truth.customers.insert(
            id.clone(),
            CustomerTruth { latent_value: latent, tier: tier as u8, churner },
        );

        let interests: Vec<f64> = (0..INTEREST_DIMS)
            .map(|_| unit_normal.sample(&mut rng) * interest_scale * 3.0)
            .collect();
        let sampler =
            CustomerProductSampler::build(&catalogue, u, &interests, config.affinity_strength);
        let years_total = config.horizon_days as f64 / 365.0;
        let pre_years = label_start_secs as f64 / DAY_SECS as f64 / 365.0;

        let mut attrs = BTreeMap::new();
        let country = {
            let mut u: f64 = rng.gen();
            let mut chosen = COUNTRIES[0].0;
            for (name, w) in COUNTRIES {
                if u < w {
                    chosen = name;
                    break;
                }
                u -= w;
            }
            chosen
        };
        attrs.insert("country".to_string(), country.to_string());
        if rng.gen_bool(0.85) {
            let birth_year = 1960 + rng.gen_range(0..40);
            attrs.insert("birth_year".to_string(), birth_year.to_string());
        }

        // sessions across the whole horizon
        let session_rate = (8.0 + 8.0 * u) * activity * years_total;
        for _ in 0..poisson(&mut rng, session_rate) {
            let ts = t0.plus_secs(rng.gen_range(0..horizon_secs));
            events.push(CustomerEvent::session(id.clone(), ts).with_attrs(attrs.clone()));
        }

        // product views across the whole horizon, biased toward the
        // customer's own value position; volume itself is value-blind so
        // the affinity dial fully controls how much value signal the view
        // streams carry
        let view_rate = 30.0 * activity * years_total;
        for _ in 0..poisson(&mut rng, view_rate) {
            let ts = t0.plus_secs(rng.gen_range(0..horizon_secs));
            let p = sampler.sample(&mut rng);
            events.push(CustomerEvent::view(id.clone(), ts, products[p].id.clone()));
        }

        // orders before the label window
        let pre_orders = poisson(&mut rng, (0.7 + 1.3 * u) * activity * pre_years);
        for _ in 0..pre_orders {
            let ts = t0.plus_secs(rng.gen_range(0..label_start_secs));
            emit_order(&mut events, &mut rng, &id, ts, latent, &sampler, &products, horizon_secs, t0);
        }

        // label-window orders: churners place none, everyone else at least one
        if !churner {
            let n_orders = 1 + poisson(&mut rng, (0.4 + 1.8 * u) * activity);
            for _ in 0..n_orders {
                let ts = t0.plus_secs(rng.gen_range(label_start_secs..horizon_secs));
                emit_order(&mut events, &mut rng, &id, ts, latent, &sampler, &products, horizon_secs, t0);
            }
        }
    }

    let mut log = EventLog::new(events);
    log.sort_canonical();
    Ok(Generated { log, truth })
}

fn poisson<R: Rng>(rng: &mut R, rate: f64) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

#[allow(clippy::too_many_arguments)]
fn emit_order(
    events: &mut Vec<CustomerEvent>,
    rng: &mut ChaCha8Rng,
    id: &CustomerId,
    ts: Timestamp,
    latent: f64,
    sampler: &CustomerProductSampler,
    products: &[Product],
    horizon_secs: i64,
    t0: Timestamp,
) {
    let n_items = 1 + (poisson(rng, 0.6) as usize).min(3);
    for _ in 0..n_items {
        let p = sampler.sample(rng);
        let noise: f64 = Normal::new(0.0, 0.3).unwrap().sample(rng);
        let value = Money::from_pounds((latent * noise.exp()).max(3.0));
        let mut order = CustomerEvent::order(id.clone(), ts, products[p].id.clone(), value);
        if products[p].new_collection {
            let mut attrs = BTreeMap::new();
            attrs.insert("is_new_collection".to_string(), "true".to_string());
            order = order.with_attrs(attrs);
        }
        events.push(order);
        // full-value return within five weeks
        if rng.gen_bool(0.18) {
            let ret_ts = ts.plus_secs(rng.gen_range(1..35) * DAY_SECS);
            if ret_ts.epoch() < t0.epoch() + horizon_secs {
                events.push(CustomerEvent::item_return(
                    id.clone(),
                    ret_ts,
                    products[p].id.clone(),
                    value,
                ));
            }
        }
    }
}
