//! Customer embeddings trained by skip-gram with negative sampling.
//!
//! Two weight matrices hold input and output embeddings per customer; each
//! training pair updates the output rows of the positive target and the
//! sampled negatives, then the single input row, all from one forward pass.
//! A warm-start initializer copies the prior period's rows for returning
//! customers and gives new customers small random input rows, keeping
//! embedding dimensions comparable across retraining periods.

use std::cell::UnsafeCell;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::CustomerId;
use crate::index::CustomerIndex;
use crate::matrix::{bad_data, read_u32, read_u64};
use crate::pairgen::{NegativeTable, TrainingPair};

fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut x = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
use crate::scalar::{log_sigmoid, sigmoid, Scalar};

#[derive(Debug, Error)]
pub enum SgnsError {
    #[error("no training pairs")]
    EmptyPairs,
    #[error("customer {0} not present in the prior model")]
    MissingFromPrior(CustomerId),
    #[error("cohort is empty")]
    EmptyCohort,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Training hyper-parameters. The learning rate decays linearly from `eta`
/// to `eta_floor` over all steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgnsConfig {
    pub dim: usize,
    pub window_length: usize,
    pub k_negatives: usize,
    pub eta: f64,
    pub eta_floor: f64,
    pub epochs: usize,
    pub exponent: f64,
    /// Input rows initialize uniform in [-init_scale, init_scale];
    /// defaults to 0.5 / dim when unset.
    pub init_scale: Option<f64>,
    /// Scale for new customers under warm start; defaults to 1% of
    /// init_scale so new rows are small next to trained embeddings.
    pub warm_init_scale: Option<f64>,
    pub seed: u64,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        SgnsConfig {
            dim: 64,
            window_length: 11,
            k_negatives: 5,
            eta: 0.025,
            eta_floor: 0.0001,
            epochs: 5,
            exponent: 0.75,
            init_scale: None,
            warm_init_scale: None,
            seed: 1,
        }
    }
}

impl SgnsConfig {
    pub fn init_scale(&self) -> f64 {
        self.init_scale.unwrap_or(0.5 / self.dim as f64)
    }

    pub fn warm_init_scale(&self) -> f64 {
        self.warm_init_scale.unwrap_or(0.01 * self.init_scale())
    }
}

/// Input/output embedding matrices plus the customer index mapping ids to
/// rows. The input rows are the embeddings exported as features.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel<S> {
    dim: usize,
    index: CustomerIndex,
    input: Vec<S>,
    output: Vec<S>,
}

impl<S: Scalar> EmbeddingModel<S> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn index(&self) -> &CustomerIndex {
        &self.index
    }

    pub fn n_customers(&self) -> usize {
        self.index.len()
    }

    #[inline]
    pub fn input_row(&self, row: u32) -> &[S] {
        &self.input[row as usize * self.dim..(row as usize + 1) * self.dim]
    }

    #[inline]
    pub fn output_row(&self, row: u32) -> &[S] {
        &self.output[row as usize * self.dim..(row as usize + 1) * self.dim]
    }

    pub fn input_vector(&self, id: &CustomerId) -> Option<&[S]> {
        self.index.row(id).map(|r| self.input_row(r))
    }

    pub fn input_row_mut(&mut self, row: u32) -> &mut [S] {
        &mut self.input[row as usize * self.dim..(row as usize + 1) * self.dim]
    }

    pub fn output_row_mut(&mut self, row: u32) -> &mut [S] {
        &mut self.output[row as usize * self.dim..(row as usize + 1) * self.dim]
    }
}

/// Fresh model: input rows i.i.d. uniform in [-init_scale, +init_scale],
/// output rows all zero, deterministic under the config seed.
pub fn init_model<S: Scalar>(index: CustomerIndex, config: &SgnsConfig) -> EmbeddingModel<S> {
    assert!(!index.is_empty(), "cohort must be nonempty");
    let dim = config.dim;
    let scale = config.init_scale();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = index.len();
    let mut input = Vec::with_capacity(n * dim);
    for _ in 0..n * dim {
        let u: f64 = rng.gen();
        input.push(S::from_f64_lossy((2.0 * u - 1.0) * scale));
    }
    EmbeddingModel { dim, index, input, output: vec![S::zero(); n * dim] }
}

/// Membership of the current cohort relative to the prior training period.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortMap {
    old: Vec<bool>,
}

impl CohortMap {
    /// Marks current-cohort customers that were present in the prior index.
    pub fn from_prior(prior: &CustomerIndex, current: &CustomerIndex) -> CohortMap {
        CohortMap { old: current.ids().iter().map(|id| prior.contains(id)).collect() }
    }

    /// Builds from an explicit old-customer predicate over the current index.
    pub fn from_predicate<F: Fn(&CustomerId) -> bool>(
        current: &CustomerIndex,
        is_old: F,
    ) -> CohortMap {
        CohortMap { old: current.ids().iter().map(|id| is_old(id)).collect() }
    }

    #[inline]
    pub fn is_old(&self, row: u32) -> bool {
        self.old[row as usize]
    }

    pub fn n_old(&self) -> usize {
        self.old.iter().filter(|&&o| o).count()
    }

    pub fn n_new(&self) -> usize {
        self.old.len() - self.n_old()
    }

    /// Epoch phase of a pair: (old,old), (new,old), (old,new), (new,new).
    pub fn phase(&self, pair: &TrainingPair) -> usize {
        match (self.is_old(pair.input), self.is_old(pair.output)) {
            (true, true) => 0,
            (false, true) => 1,
            (true, false) => 2,
            (false, false) => 3,
        }
    }
}

/// Warm-start initializer: rows for customers present in the prior model
/// are copied (both matrices); new customers get input rows uniform in
/// [-warm_init_scale, +warm_init_scale] and zero output rows.
pub fn warm_start_init<S: Scalar>(
    prior: &EmbeddingModel<S>,
    current: CustomerIndex,
    cohorts: &CohortMap,
    config: &SgnsConfig,
) -> Result<EmbeddingModel<S>, SgnsError> {
    if current.is_empty() {
        return Err(SgnsError::EmptyCohort);
    }
    assert_eq!(cohorts.old.len(), current.len(), "cohort map must cover the current index");
    let dim = prior.dim;
    let scale = config.warm_init_scale();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = current.len();
    let mut input = vec![S::zero(); n * dim];
    let mut output = vec![S::zero(); n * dim];
    for (row, id) in current.ids().iter().enumerate() {
        if cohorts.old[row] {
            let prior_row = prior
                .index
                .row(id)
                .ok_or_else(|| SgnsError::MissingFromPrior(id.clone()))?;
            input[row * dim..(row + 1) * dim].copy_from_slice(prior.input_row(prior_row));
            output[row * dim..(row + 1) * dim].copy_from_slice(prior.output_row(prior_row));
        } else {
            for v in &mut input[row * dim..(row + 1) * dim] {
                let u: f64 = rng.gen();
                *v = S::from_f64_lossy((2.0 * u - 1.0) * scale);
            }
        }
    }
    Ok(EmbeddingModel { dim, index: current, input, output })
}

/// One gradient step on a (input, output) pair with sampled negatives.
///
/// For each j in {output} + negatives, with t_j = 1 iff row j equals the
/// positive output row:
///   output_j -= eta * (sigmoid(output_j . input) - t_j) * input
/// then, using the pre-update output rows for the gradient,
///   input -= eta * sum_j (sigmoid(output_j . input) - t_j) * output_j
///
/// Returns the pair's negative-sampling loss at the pre-update parameters.
pub fn sgd_step<S: Scalar>(
    model: &mut EmbeddingModel<S>,
    pair: &TrainingPair,
    negatives: &[u32],
    eta: S,
) -> S {
    let dim = model.dim;
    let in_off = pair.input as usize * dim;

    let mut loss = S::zero();
    let mut input_delta = vec![S::zero(); dim];
    let mut coeffs: Vec<(u32, S)> = Vec::with_capacity(1 + negatives.len());

    for (k, &j) in std::iter::once(&pair.output).chain(negatives.iter()).enumerate() {
        let out_off = j as usize * dim;
        let mut dot = S::zero();
        for d in 0..dim {
            dot += model.output[out_off + d] * model.input[in_off + d];
        }
        let positive = k == 0 || j == pair.output;
        let target = if positive { S::one() } else { S::zero() };
        loss -= if positive { log_sigmoid(dot) } else { log_sigmoid(-dot) };
        let g = sigmoid(dot) - target;
        for d in 0..dim {
            input_delta[d] += g * model.output[out_off + d];
        }
        coeffs.push((j, g));
    }

    for &(j, g) in &coeffs {
        let out_off = j as usize * dim;
        let step = eta * g;
        for d in 0..dim {
            model.output[out_off + d] = model.output[out_off + d] - step * model.input[in_off + d];
        }
    }
    for d in 0..dim {
        model.input[in_off + d] = model.input[in_off + d] - eta * input_delta[d];
    }
    loss
}

/// Negative-sampling loss of one pair at the current parameters:
/// -log sigmoid(output . input) - sum_neg log sigmoid(-neg . input),
/// with a negative that collides with the positive output contributing a
/// positive-direction term, matching the gradient applied by [`sgd_step`].
pub fn embedding_loss<S: Scalar>(
    model: &EmbeddingModel<S>,
    pair: &TrainingPair,
    negatives: &[u32],
) -> S {
    let input = model.input_row(pair.input);
    let mut loss = S::zero();
    for (k, &j) in std::iter::once(&pair.output).chain(negatives.iter()).enumerate() {
        let out = model.output_row(j);
        let mut dot = S::zero();
        for d in 0..model.dim {
            dot += out[d] * input[d];
        }
        let positive = k == 0 || j == pair.output;
        loss -= if positive { log_sigmoid(dot) } else { log_sigmoid(-dot) };
    }
    loss
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// Single-threaded, bit-reproducible under a fixed seed.
    Deterministic,
    /// Lock-free asynchronous updates over pair shards; statistically
    /// equivalent but not reproducible.
    Hogwild { threads: usize },
}

/// Per-epoch mean training loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_mean_loss: Vec<f64>,
}

/// Runs `epochs` passes over the pairs. With a cohort map, each epoch
/// processes pairs in the four-phase order (old,old), (new,old), (old,new),
/// (new,new), shuffled within each phase; otherwise globally shuffled. The
/// learning rate decays linearly from `eta` to `eta_floor` over all steps.
pub fn train<S: Scalar>(
    model: &mut EmbeddingModel<S>,
    pairs: &[TrainingPair],
    table: &NegativeTable,
    config: &SgnsConfig,
    cohorts: Option<&CohortMap>,
    mode: TrainMode,
) -> Result<TrainReport, SgnsError> {
    if pairs.is_empty() {
        return Err(SgnsError::EmptyPairs);
    }
    let total_steps = (config.epochs * pairs.len()).max(1) as f64;
    let mut order: Vec<u32> = (0..pairs.len() as u32).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, u64::MAX));
    let mut epoch_mean_loss = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        match cohorts {
            Some(map) => {
                // shuffle, then stable-partition into the four phase buckets
                order.shuffle(&mut shuffle_rng);
                order.sort_by_key(|&i| map.phase(&pairs[i as usize]));
            }
            None => order.shuffle(&mut shuffle_rng),
        }
        let steps_done = epoch * pairs.len();
        let epoch_loss = match mode {
            TrainMode::Deterministic => run_epoch_serial(
                model,
                pairs,
                &order,
                table,
                config,
                steps_done,
                total_steps,
                ChaCha8Rng::seed_from_u64(mix_seed(config.seed, epoch as u64)),
            ),
            TrainMode::Hogwild { threads } => run_epoch_hogwild(
                model,
                pairs,
                &order,
                table,
                config,
                steps_done,
                total_steps,
                epoch,
                threads.max(1),
            ),
        };
        epoch_mean_loss.push(epoch_loss / pairs.len() as f64);
    }
    Ok(TrainReport { epoch_mean_loss })
}

#[allow(clippy::too_many_arguments)]
fn run_epoch_serial<S: Scalar>(
    model: &mut EmbeddingModel<S>,
    pairs: &[TrainingPair],
    order: &[u32],
    table: &NegativeTable,
    config: &SgnsConfig,
    steps_done: usize,
    total_steps: f64,
    mut rng: ChaCha8Rng,
) -> f64 {
    let mut negatives = Vec::with_capacity(config.k_negatives);
    let mut loss_sum = 0.0;
    for (i, &pi) in order.iter().enumerate() {
        let pair = &pairs[pi as usize];
        let t = (steps_done + i) as f64 / total_steps;
        let eta = config.eta + (config.eta_floor - config.eta) * t;
        table.sample_negatives(config.k_negatives, pair.output, &mut rng, &mut negatives);
        loss_sum += sgd_step(model, pair, &negatives, S::from_f64_lossy(eta)).into_f64();
    }
    loss_sum
}

/// Shared mutable access for lock-free training. Racing updates may read
/// torn rows; acceptance for this mode is statistical, not bitwise.
struct RacyModel<S>(UnsafeCell<*mut EmbeddingModel<S>>);
unsafe impl<S> Sync for RacyModel<S> {}

#[allow(clippy::too_many_arguments)]
fn run_epoch_hogwild<S: Scalar>(
    model: &mut EmbeddingModel<S>,
    pairs: &[TrainingPair],
    order: &[u32],
    table: &NegativeTable,
    config: &SgnsConfig,
    steps_done: usize,
    total_steps: f64,
    epoch: usize,
    threads: usize,
) -> f64 {
    let shared = RacyModel(UnsafeCell::new(model as *mut _));
    let chunk = order.len().div_ceil(threads);
    let losses: Vec<f64> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (t, shard) in order.chunks(chunk).enumerate() {
            let shared = &shared;
            let seed = mix_seed(config.seed, (epoch as u64) << 32 | t as u64);
            handles.push(scope.spawn(move || {
                let model = unsafe { &mut **shared.0.get() };
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut negatives = Vec::with_capacity(config.k_negatives);
                let mut loss_sum = 0.0;
                for (i, &pi) in shard.iter().enumerate() {
                    let pair = &pairs[pi as usize];
                    let t = (steps_done + i * threads) as f64 / total_steps;
                    let eta = config.eta + (config.eta_floor - config.eta) * t.min(1.0);
                    table.sample_negatives(
                        config.k_negatives,
                        pair.output,
                        &mut rng,
                        &mut negatives,
                    );
                    loss_sum +=
                        sgd_step(model, pair, &negatives, S::from_f64_lossy(eta)).into_f64();
                }
                loss_sum
            }));
        }
        handles.into_iter().map(|h| h.join().expect("trainer thread")).collect()
    });
    losses.into_iter().sum()
}

/// Euclidean distance from `v` to the span of `basis` rows, via modified
/// Gram-Schmidt in double precision.
pub fn distance_to_span<S: Scalar>(basis: &[&[S]], v: &[S]) -> f64 {
    let dim = v.len();
    let mut ortho: Vec<Vec<f64>> = Vec::new();
    for b in basis {
        assert_eq!(b.len(), dim);
        let mut q: Vec<f64> = b.iter().map(|x| x.into_f64()).collect();
        for _ in 0..2 {
            for o in &ortho {
                let proj: f64 = q.iter().zip(o).map(|(a, b)| a * b).sum();
                for (qd, od) in q.iter_mut().zip(o) {
                    *qd -= proj * od;
                }
            }
        }
        let norm: f64 = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for qd in &mut q {
                *qd /= norm;
            }
            ortho.push(q);
        }
    }
    let mut r: Vec<f64> = v.iter().map(|x| x.into_f64()).collect();
    for o in &ortho {
        let proj: f64 = r.iter().zip(o).map(|(a, b)| a * b).sum();
        for (rd, od) in r.iter_mut().zip(o) {
            *rd -= proj * od;
        }
    }
    r.iter().map(|x| x * x).sum::<f64>().sqrt()
}

const EMB_MAGIC: &[u8; 8] = b"CLTVEMB1";
const EMB_VERSION: u32 = 1;

impl<S: Scalar> EmbeddingModel<S> {
    /// Binary bundle: header {magic, version, |C|, dim}, customer index
    /// table, then row-major input and output matrices as 32-bit floats.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), SgnsError> {
        w.write_all(EMB_MAGIC)?;
        w.write_all(&EMB_VERSION.to_le_bytes())?;
        w.write_all(&(self.index.len() as u64).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        for id in self.index.ids() {
            let bytes = id.as_str().as_bytes();
            w.write_all(&(bytes.len() as u32).to_le_bytes())?;
            w.write_all(bytes)?;
        }
        for &v in self.input.iter().chain(self.output.iter()) {
            w.write_all(&(v.into_f64() as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<EmbeddingModel<S>, SgnsError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != EMB_MAGIC {
            return Err(bad_data("bad embedding magic").into());
        }
        let version = read_u32(r)?;
        if version != EMB_VERSION {
            return Err(bad_data(format!("unsupported embedding version {version}")).into());
        }
        let n = read_u64(r)? as usize;
        let dim = read_u32(r)? as usize;
        let mut ids = Vec::with_capacity(n);
        for _ in 0..n {
            let len = read_u32(r)? as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            let s = String::from_utf8(buf).map_err(|e| bad_data(format!("bad id utf8: {e}")))?;
            ids.push(CustomerId::new(s));
        }
        let index = CustomerIndex::from_ids(ids.clone());
        if index.ids() != ids.as_slice() {
            return Err(bad_data("embedding index not sorted").into());
        }
        let mut read_matrix = |count: usize| -> Result<Vec<S>, SgnsError> {
            let mut m = Vec::with_capacity(count);
            for _ in 0..count {
                let mut b = [0u8; 4];
                r.read_exact(&mut b)?;
                m.push(S::from_f64_lossy(f32::from_le_bytes(b) as f64));
            }
            Ok(m)
        };
        let input = read_matrix(n * dim)?;
        let output = read_matrix(n * dim)?;
        Ok(EmbeddingModel { dim, index, input, output })
    }

    pub fn save(&self, path: &Path) -> Result<(), SgnsError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)
    }

    pub fn load(path: &Path) -> Result<EmbeddingModel<S>, SgnsError> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        EmbeddingModel::read_from(&mut f)
    }

    /// TSV export of the input embeddings: customer id then one column per
    /// dimension, in stable dimension order.
    pub fn write_tsv<W: Write>(&self, w: &mut W) -> Result<(), SgnsError> {
        for (row, id) in self.index.ids().iter().enumerate() {
            write!(w, "{}", id)?;
            for v in self.input_row(row as u32) {
                write!(w, "\t{}", v)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}
