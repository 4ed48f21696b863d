//! Handcrafted customer features over the feature window: order and session
//! recency/frequency/dispersion statistics, returns, demographics, and the
//! country categorical.
//!
//! Conventions: date statistics are fractional days relative to the window
//! start, "days since" features are measured at the window end, the last
//! quarter is the final 91 days of the window and the previous quarter the
//! 91 days before that, standard deviations are population standard
//! deviations (zero for fewer than two events), and order events sharing a
//! timestamp form one order of several items. Features that are undefined
//! for a customer (no orders, unknown age) are NaN and handled by the
//! forest's missing-value routing.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use crate::data_model::{
    CustomerEvent, CustomerId, EventKind, EventLog, TimeSplit, Timestamp,
};
use crate::forest::{ColumnKind, ColumnMeta};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::sgns::EmbeddingModel;

/// Names of the numeric features, in stable column order.
pub const NUMERIC_FEATURES: [&str; 21] = [
    "num_orders",
    "std_order_dates",
    "num_sessions_last_quarter",
    "num_items_new_collection",
    "num_items_kept",
    "net_sales",
    "days_first_to_last_session",
    "num_sessions",
    "customer_tenure",
    "total_items_ordered",
    "days_since_last_order",
    "days_since_last_session",
    "std_session_dates",
    "orders_last_quarter",
    "age",
    "avg_order_date",
    "total_ordered_value",
    "num_products_viewed",
    "days_since_first_order_in_window",
    "avg_session_date",
    "num_sessions_previous_quarter",
];

pub const COUNTRY_FEATURE: &str = "country";

const QUARTER_DAYS: i64 = 91;

/// Per-customer handcrafted features plus the raw country value.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub customer_id: CustomerId,
    /// Values in [`NUMERIC_FEATURES`] order; NaN marks missing.
    pub numeric: Vec<f64>,
    pub country: Option<String>,
}

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        NUMERIC_FEATURES.iter().position(|&n| n == name).map(|i| self.numeric[i])
    }
}

/// One vector per customer with at least one feature-window event, sorted
/// by customer id. Only events strictly before the window end contribute.
pub fn compute_features(events: &EventLog, split: &TimeSplit) -> Vec<FeatureVector> {
    let mut per_customer: BTreeMap<&CustomerId, Vec<&CustomerEvent>> = BTreeMap::new();
    for e in &events.events {
        if e.ts < split.feature_end() {
            per_customer.entry(&e.customer_id).or_default().push(e);
        }
    }
    per_customer
        .into_iter()
        .filter_map(|(id, mut evs)| {
            evs.sort_by(|a, b| {
                (a.ts, a.kind, &a.product_id, a.value).cmp(&(b.ts, b.kind, &b.product_id, b.value))
            });
            customer_vector(id, &evs, split)
        })
        .collect()
}

fn customer_vector(
    id: &CustomerId,
    events: &[&CustomerEvent],
    split: &TimeSplit,
) -> Option<FeatureVector> {
    let fs = split.feature_start();
    let fe = split.feature_end();
    let q1_start = fe.plus_days(-QUARTER_DAYS);
    let q2_start = fe.plus_days(-2 * QUARTER_DAYS);

    let in_window: Vec<&&CustomerEvent> =
        events.iter().filter(|e| split.in_feature_window(e.ts)).collect();
    if in_window.is_empty() {
        return None;
    }

    let mut order_ts: Vec<Timestamp> = Vec::new(); // distinct checkout instants
    let mut order_items = 0u32;
    let mut returned_items = 0u32;
    let mut new_collection_items = 0u32;
    let mut ordered_value = 0i64;
    let mut returned_value = 0i64;
    let mut session_ts: Vec<Timestamp> = Vec::new();
    let mut products_viewed: HashSet<&str> = HashSet::new();

    for e in &in_window {
        match e.kind {
            EventKind::OrderPlaced => {
                if order_ts.last() != Some(&e.ts) {
                    order_ts.push(e.ts);
                }
                order_items += 1;
                ordered_value += e.value.pennies();
                if e.attr("is_new_collection") == Some("true") {
                    new_collection_items += 1;
                }
            }
            EventKind::ItemReturned => {
                returned_items += 1;
                returned_value += e.value.pennies();
            }
            EventKind::SessionStart => session_ts.push(e.ts),
            EventKind::ProductView => {
                if let Some(p) = &e.product_id {
                    products_viewed.insert(p.as_str());
                }
            }
        }
    }

    let order_days: Vec<f64> = order_ts.iter().map(|t| t.days_since(fs)).collect();
    let session_days: Vec<f64> = session_ts.iter().map(|t| t.days_since(fs)).collect();

    // demographics come from the earliest event that carries them
    let mut age = f64::NAN;
    let mut country = None;
    for e in events {
        if country.is_none() {
            if let Some(c) = e.attr("country") {
                country = Some(c.to_string());
            }
        }
        if age.is_nan() {
            if let Some(by) = e.attr("birth_year").and_then(|s| s.parse::<i32>().ok()) {
                age = (fe.year() - by) as f64;
            }
        }
        if country.is_some() && !age.is_nan() {
            break;
        }
    }

    let first_ever = events.first().expect("nonempty history").ts;
    let tenure = fe.days_since(first_ever).min(365.0);

    let sessions_in = |from: Timestamp, to: Timestamp| {
        session_ts.iter().filter(|t| from <= **t && **t < to).count() as f64
    };
    let orders_in = |from: Timestamp, to: Timestamp| {
        order_ts.iter().filter(|t| from <= **t && **t < to).count() as f64
    };

    let numeric = vec![
        order_ts.len() as f64,
        population_std(&order_days),
        sessions_in(q1_start, fe),
        new_collection_items as f64,
        (order_items as f64 - returned_items as f64).max(0.0),
        (ordered_value - returned_value) as f64 / 100.0,
        span(&session_days),
        session_ts.len() as f64,
        tenure,
        order_items as f64,
        order_ts.last().map_or(f64::NAN, |t| fe.days_since(*t)),
        session_ts.last().map_or(f64::NAN, |t| fe.days_since(*t)),
        population_std(&session_days),
        orders_in(q1_start, fe),
        age,
        mean(&order_days),
        ordered_value as f64 / 100.0,
        products_viewed.len() as f64,
        order_ts.first().map_or(f64::NAN, |t| fe.days_since(*t)),
        mean(&session_days),
        sessions_in(q2_start, q1_start),
    ];
    debug_assert_eq!(numeric.len(), NUMERIC_FEATURES.len());
    Some(FeatureVector { customer_id: id.clone(), numeric, country })
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn population_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

fn span(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    v.last().unwrap() - v.first().unwrap()
}

/// Encodes countries by descending frequency (ties alphabetical); the next
/// id after the known categories is the reserved unknown bucket. At or
/// below the cardinality threshold the column splits by category subset,
/// above it the ids are used as a frequency-ordered ordinal.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CountryEncoder {
    categories: Vec<String>,
    subset_threshold: usize,
}

impl CountryEncoder {
    pub fn fit(values: impl Iterator<Item = Option<String>>, subset_threshold: usize) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for v in values.flatten() {
            *counts.entry(v).or_default() += 1;
        }
        let mut categories: Vec<(String, usize)> = counts.into_iter().collect();
        categories.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        CountryEncoder {
            categories: categories.into_iter().map(|(c, _)| c).collect(),
            subset_threshold,
        }
    }

    pub fn encode(&self, value: Option<&str>) -> f64 {
        match value {
            Some(v) => self
                .categories
                .iter()
                .position(|c| c == v)
                .unwrap_or(self.categories.len()) as f64,
            None => self.categories.len() as f64,
        }
    }

    pub fn unknown_id(&self) -> u32 {
        self.categories.len() as u32
    }

    pub fn n_categories(&self) -> u32 {
        self.categories.len() as u32 + 1
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn column_kind(&self) -> ColumnKind {
        if (self.categories.len() as u32) <= self.subset_threshold as u32 {
            ColumnKind::Categorical { n_categories: self.n_categories() }
        } else {
            // high cardinality: frequency-ordered ordinal
            ColumnKind::Numeric
        }
    }
}

/// Design matrix: numeric features plus the encoded country column, with
/// column metadata the tree learner consumes directly.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    ids: Vec<CustomerId>,
    columns: Vec<ColumnMeta>,
    matrix: Matrix<f64>,
    encoder: CountryEncoder,
}

/// Default cardinality at or below which country splits by subset.
pub const SUBSET_CARDINALITY_THRESHOLD: usize = 12;

/// Turns feature vectors into a design matrix, encoding the country
/// categorical natively for small cardinalities and as a frequency-ordered
/// ordinal above [`SUBSET_CARDINALITY_THRESHOLD`].
pub fn encode_categoricals(vectors: &[FeatureVector]) -> FeatureTable {
    let encoder = CountryEncoder::fit(
        vectors.iter().map(|v| v.country.clone()),
        SUBSET_CARDINALITY_THRESHOLD,
    );
    let n_cols = NUMERIC_FEATURES.len() + 1;
    let mut data = Vec::with_capacity(vectors.len() * n_cols);
    let mut ids = Vec::with_capacity(vectors.len());
    for v in vectors {
        ids.push(v.customer_id.clone());
        data.extend_from_slice(&v.numeric);
        data.push(encoder.encode(v.country.as_deref()));
    }
    let mut columns: Vec<ColumnMeta> =
        NUMERIC_FEATURES.iter().map(|&n| ColumnMeta::numeric(n)).collect();
    columns.push(ColumnMeta { name: COUNTRY_FEATURE.into(), kind: encoder.column_kind() });
    FeatureTable {
        ids,
        columns,
        matrix: Matrix::from_vec(vectors.len(), n_cols, data),
        encoder,
    }
}

impl FeatureTable {
    pub fn n_rows(&self) -> usize {
        self.matrix.n_rows()
    }

    pub fn ids(&self) -> &[CustomerId] {
        &self.ids
    }

    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn matrix(&self) -> &Matrix<f64> {
        &self.matrix
    }

    pub fn encoder(&self) -> &CountryEncoder {
        &self.encoder
    }

    pub fn row_of(&self, id: &CustomerId) -> Option<usize> {
        self.ids.binary_search(id).ok()
    }

    /// Appends one numeric column per embedding dimension; customers
    /// without an embedding get NaN and route by the forest's default
    /// directions.
    pub fn with_embedding_columns<S: Scalar>(&self, model: &EmbeddingModel<S>) -> FeatureTable {
        let dim = model.dim();
        let mut columns = self.columns.clone();
        for d in 0..dim {
            columns.push(ColumnMeta::numeric(format!("embedding_{d}")));
        }
        let n_cols = self.matrix.n_cols() + dim;
        let mut data = Vec::with_capacity(self.n_rows() * n_cols);
        for (i, id) in self.ids.iter().enumerate() {
            data.extend_from_slice(self.matrix.row(i));
            match model.input_vector(id) {
                Some(row) => data.extend(row.iter().map(|v| v.into_f64())),
                None => data.extend(std::iter::repeat(f64::NAN).take(dim)),
            }
        }
        FeatureTable {
            ids: self.ids.clone(),
            columns,
            matrix: Matrix::from_vec(self.n_rows(), n_cols, data),
            encoder: self.encoder.clone(),
        }
    }

    /// CSV with a header row; country is written as its raw category id.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["customer_id".to_string()];
        header.extend(self.columns.iter().map(|c| c.name.clone()));
        wtr.write_record(&header)?;
        for (i, id) in self.ids.iter().enumerate() {
            let mut record = vec![id.to_string()];
            for v in self.matrix.row(i) {
                record.push(if v.is_nan() { String::new() } else { format!("{v}") });
            }
            wtr.write_record(&record)?;
        }
        wtr.flush()
    }

    /// Versioned binary: encoder and column metadata as a JSON header line,
    /// ids, then the shared matrix block.
    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let header = serde_json::json!({
            "version": 1,
            "encoder": self.encoder,
            "columns": self.columns,
            "ids": self.ids,
        });
        let header = serde_json::to_vec(&header)?;
        w.write_all(b"CLTVFTBL")?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        self.matrix.write_to(w)
    }

    pub fn read_from<R: std::io::Read>(r: &mut R) -> std::io::Result<FeatureTable> {
        use crate::matrix::{bad_data, read_u64};
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != b"CLTVFTBL" {
            return Err(bad_data("bad feature table magic"));
        }
        let len = read_u64(r)? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        let header: serde_json::Value = serde_json::from_slice(&buf)?;
        if header["version"].as_u64() != Some(1) {
            return Err(bad_data("unsupported feature table version"));
        }
        let encoder: CountryEncoder = serde_json::from_value(header["encoder"].clone())?;
        let columns: Vec<ColumnMeta> = serde_json::from_value(header["columns"].clone())?;
        let ids: Vec<CustomerId> = serde_json::from_value(header["ids"].clone())?;
        let matrix = Matrix::read_from(r)?;
        Ok(FeatureTable { ids, columns, matrix, encoder })
    }
}
