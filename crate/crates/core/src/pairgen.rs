//! Per-product customer view sequences, skip-gram training pairs, and the
//! negative-sampling distribution.
//!
//! Each product's view events in the feature window become an ordered
//! sequence of customers; a sliding window over that sequence pairs the
//! central customer with every other customer in the window. Negatives are
//! drawn from appearance counts raised to a smoothing exponent.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::data_model::{CustomerEvent, EventKind, EventLog, ProductId, TimeSplit};
use crate::index::CustomerIndex;
use crate::matrix::{bad_data, read_u32, read_u64};

#[derive(Debug, Error)]
pub enum PairgenError {
    #[error("no view streams to build a negative table from")]
    EmptyStreams,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ordered sequence of viewers of one product, as rows into a shared
/// [`CustomerIndex`]. Consecutive duplicate views by the same customer are
/// collapsed; streams retain non-consecutive repeats.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewStream {
    pub product_id: ProductId,
    pub viewers: Vec<u32>,
}

/// All retained view streams plus the customer index they refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewStreams {
    pub index: CustomerIndex,
    pub streams: Vec<ViewStream>,
}

impl ViewStreams {
    /// Total number of stream entries across all streams.
    pub fn total_len(&self) -> usize {
        self.streams.iter().map(|s| s.viewers.len()).sum()
    }
}

/// One skip-gram training example: the window's central customer paired
/// with one context customer. Always `input != output`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TrainingPair {
    pub input: u32,
    pub output: u32,
}

/// Builds one stream per product from feature-window views, ordered by view
/// timestamp with ties broken by customer id. Consecutive duplicates are
/// collapsed and streams with fewer than two distinct viewers are dropped.
pub fn build_view_streams(events: &EventLog, split: &TimeSplit) -> ViewStreams {
    let mut per_product: HashMap<&ProductId, Vec<&CustomerEvent>> = HashMap::new();
    for e in &events.events {
        if e.kind == EventKind::ProductView && split.in_feature_window(e.ts) {
            if let Some(pid) = &e.product_id {
                per_product.entry(pid).or_default().push(e);
            }
        }
    }

    let mut raw: Vec<(ProductId, Vec<&crate::data_model::CustomerId>)> = Vec::new();
    for (pid, mut views) in per_product {
        views.sort_by(|a, b| (a.ts, &a.customer_id).cmp(&(b.ts, &b.customer_id)));
        let mut seq: Vec<&crate::data_model::CustomerId> = Vec::with_capacity(views.len());
        for v in views {
            if seq.last() != Some(&&v.customer_id) {
                seq.push(&v.customer_id);
            }
        }
        let mut distinct: Vec<_> = seq.clone();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() >= 2 {
            raw.push((pid.clone(), seq));
        }
    }
    raw.sort_by(|a, b| a.0.cmp(&b.0));

    let index = CustomerIndex::from_ids(
        raw.iter()
            .flat_map(|(_, seq)| seq.iter().map(|id| (*id).clone())),
    );
    let streams = raw
        .into_iter()
        .map(|(product_id, seq)| ViewStream {
            product_id,
            viewers: seq.iter().map(|id| index.row(id).expect("indexed viewer")).collect(),
        })
        .collect();
    ViewStreams { index, streams }
}

/// Slides a window of odd length over the stream; at each position the
/// central customer pairs with every other in-window customer. The window
/// truncates at sequence boundaries, and pairs with equal input and output
/// are skipped.
pub fn generate_pairs(stream: &ViewStream, window_length: usize) -> Vec<TrainingPair> {
    assert!(window_length >= 3 && window_length % 2 == 1, "window must be odd and >= 3");
    let half = window_length / 2;
    let seq = &stream.viewers;
    let mut pairs = Vec::new();
    for centre in 0..seq.len() {
        let lo = centre.saturating_sub(half);
        let hi = (centre + half).min(seq.len().saturating_sub(1));
        for ctx in lo..=hi {
            if ctx != centre && seq[ctx] != seq[centre] {
                pairs.push(TrainingPair { input: seq[centre], output: seq[ctx] });
            }
        }
    }
    pairs
}

/// Pairs for every stream, concatenated in stream (product id) order.
pub fn generate_all_pairs(streams: &ViewStreams, window_length: usize) -> Vec<TrainingPair> {
    streams
        .streams
        .iter()
        .flat_map(|s| generate_pairs(s, window_length))
        .collect()
}

/// Inverse-CDF sampler over customers weighted by stream appearance counts
/// raised to `exponent`.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeTable {
    /// Sampling probability per row.
    probs: Vec<f64>,
    /// cdf[r] is the cumulative probability of rows 0..=r; strictly
    /// increasing with last element exactly 1.0.
    cdf: Vec<f64>,
    exponent: f64,
}

/// Builds the sampling table over all customers appearing in any stream,
/// with probability proportional to count^exponent.
pub fn build_negative_table(
    streams: &ViewStreams,
    exponent: f64,
) -> Result<NegativeTable, PairgenError> {
    if streams.streams.is_empty() || streams.index.is_empty() {
        return Err(PairgenError::EmptyStreams);
    }
    let mut counts = vec![0u64; streams.index.len()];
    for s in &streams.streams {
        for &row in &s.viewers {
            counts[row as usize] += 1;
        }
    }
    // exp2(e * log2(c)) keeps powers of two exact, e.g. 16^0.75 = 8.
    let weights: Vec<f64> = counts
        .iter()
        .map(|&c| {
            debug_assert!(c >= 1, "indexed customer with no appearances");
            (exponent * (c as f64).log2()).exp2()
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in &probs {
        acc += p;
        cdf.push(acc);
    }
    *cdf.last_mut().expect("nonempty cdf") = 1.0;
    Ok(NegativeTable { probs, cdf, exponent })
}

impl NegativeTable {
    pub fn len(&self) -> usize {
        self.cdf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cdf.is_empty()
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// Sampling probability of a row.
    pub fn probability(&self, row: u32) -> f64 {
        self.probs[row as usize]
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    /// One inverse-CDF draw.
    pub fn sample_one<R: Rng>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.gen();
        self.cdf.partition_point(|&c| c <= u) as u32
    }

    /// Draws `k` negatives; draws equal to `exclude` are redrawn up to 8
    /// times and then passed through (the trainer's identity check on the
    /// positive output makes such draws positive-direction updates).
    pub fn sample_negatives<R: Rng>(
        &self,
        k: usize,
        exclude: u32,
        rng: &mut R,
        out: &mut Vec<u32>,
    ) {
        out.clear();
        for _ in 0..k {
            let mut draw = self.sample_one(rng);
            let mut retries = 0;
            while draw == exclude && retries < 8 {
                draw = self.sample_one(rng);
                retries += 1;
            }
            out.push(draw);
        }
    }
}

const PAIRS_MAGIC: &[u8; 8] = b"CLTVPAIR";
const PAIRS_VERSION: u32 = 1;

/// Writes pairs as `magic, version, count` then fixed-width little-endian
/// (u64 input, u64 output) records.
pub fn write_pairs<W: Write>(w: &mut W, pairs: &[TrainingPair]) -> Result<(), PairgenError> {
    w.write_all(PAIRS_MAGIC)?;
    w.write_all(&PAIRS_VERSION.to_le_bytes())?;
    w.write_all(&(pairs.len() as u64).to_le_bytes())?;
    for p in pairs {
        w.write_all(&(p.input as u64).to_le_bytes())?;
        w.write_all(&(p.output as u64).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_pairs<R: Read>(r: &mut R) -> Result<Vec<TrainingPair>, PairgenError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != PAIRS_MAGIC {
        return Err(bad_data("bad pairs magic").into());
    }
    let version = read_u32(r)?;
    if version != PAIRS_VERSION {
        return Err(bad_data(format!("unsupported pairs version {version}")).into());
    }
    let count = read_u64(r)? as usize;
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..count {
        let input = read_u64(r)? as u32;
        let output = read_u64(r)? as u32;
        pairs.push(TrainingPair { input, output });
    }
    Ok(pairs)
}

pub fn write_pairs_file(path: &Path, pairs: &[TrainingPair]) -> Result<(), PairgenError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_pairs(&mut f, pairs)
}

pub fn read_pairs_file(path: &Path) -> Result<Vec<TrainingPair>, PairgenError> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_pairs(&mut f)
}
