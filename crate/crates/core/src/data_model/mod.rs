//! Event schema, time windows, and label derivation shared by every other
//! module.
//!
//! A customer is treated as churned when they placed no order in the label
//! window; customer value is net spend (orders minus returns) over that
//! window, and value targets are modelled as percentiles of net spend within
//! the cohort.

pub mod io;
mod time;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use time::{civil_from_days, days_from_civil, Timestamp, DAY_SECS};

/// Opaque customer identifier.
#[derive(
    Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct CustomerId(pub String);

impl CustomerId {
    pub fn new(s: impl Into<String>) -> Self {
        CustomerId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CustomerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Opaque product identifier.
#[derive(
    Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct ProductId(pub String);

impl ProductId {
    pub fn new(s: impl Into<String>) -> Self {
        ProductId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ProductId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Currency amount in integer pennies, so sums and ties are exact and
/// independent of summation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Money(i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn from_pennies(p: i64) -> Money {
        Money(p)
    }

    /// Rounds a fractional amount in pounds to the nearest penny.
    pub fn from_pounds(v: f64) -> Money {
        Money((v * 100.0).round() as i64)
    }

    pub fn pennies(self) -> i64 {
        self.0
    }

    pub fn as_pounds(self) -> f64 {
        self.0 as f64 / 100.0
    }

    pub fn is_zero(&self) -> bool {
        self.0 == 0
    }

    pub fn is_negative(&self) -> bool {
        self.0 < 0
    }

    pub fn clamp_non_negative(self) -> Money {
        Money(self.0.max(0))
    }
}

impl std::ops::Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl std::ops::Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl std::ops::AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl std::ops::SubAssign for Money {
    fn sub_assign(&mut self, rhs: Money) {
        self.0 -= rhs.0;
    }
}

impl std::iter::Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        Money(iter.map(|m| m.0).sum())
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}", self.as_pounds())
    }
}

impl Serialize for Money {
    fn serialize<Ser: serde::Serializer>(&self, s: Ser) -> Result<Ser::Ok, Ser::Error> {
        s.serialize_f64(self.as_pounds())
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Ok(Money::from_pounds(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ProductView,
    SessionStart,
    OrderPlaced,
    ItemReturned,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::ProductView => "product_view",
            EventKind::SessionStart => "session_start",
            EventKind::OrderPlaced => "order_placed",
            EventKind::ItemReturned => "item_returned",
        }
    }

    pub fn parse(s: &str) -> Option<EventKind> {
        match s {
            "product_view" => Some(EventKind::ProductView),
            "session_start" => Some(EventKind::SessionStart),
            "order_placed" => Some(EventKind::OrderPlaced),
            "item_returned" => Some(EventKind::ItemReturned),
            _ => None,
        }
    }
}

/// One timestamped customer interaction record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerEvent {
    pub customer_id: CustomerId,
    pub ts: Timestamp,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub product_id: Option<ProductId>,
    #[serde(default, skip_serializing_if = "Money::is_zero")]
    pub value: Money,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attrs: Option<BTreeMap<String, String>>,
}

impl CustomerEvent {
    pub fn view(customer_id: CustomerId, ts: Timestamp, product_id: ProductId) -> Self {
        CustomerEvent {
            customer_id,
            ts,
            kind: EventKind::ProductView,
            product_id: Some(product_id),
            value: Money::ZERO,
            attrs: None,
        }
    }

    pub fn session(customer_id: CustomerId, ts: Timestamp) -> Self {
        CustomerEvent {
            customer_id,
            ts,
            kind: EventKind::SessionStart,
            product_id: None,
            value: Money::ZERO,
            attrs: None,
        }
    }

    pub fn order(
        customer_id: CustomerId,
        ts: Timestamp,
        product_id: ProductId,
        value: Money,
    ) -> Self {
        CustomerEvent {
            customer_id,
            ts,
            kind: EventKind::OrderPlaced,
            product_id: Some(product_id),
            value,
            attrs: None,
        }
    }

    pub fn item_return(
        customer_id: CustomerId,
        ts: Timestamp,
        product_id: ProductId,
        value: Money,
    ) -> Self {
        CustomerEvent {
            customer_id,
            ts,
            kind: EventKind::ItemReturned,
            product_id: Some(product_id),
            value,
            attrs: None,
        }
    }

    pub fn with_attrs(mut self, attrs: BTreeMap<String, String>) -> Self {
        self.attrs = Some(attrs);
        self
    }

    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attrs.as_ref().and_then(|a| a.get(key)).map(String::as_str)
    }
}

/// The single raw input: a batch of interaction events.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventLog {
    pub events: Vec<CustomerEvent>,
}

impl EventLog {
    pub fn new(events: Vec<CustomerEvent>) -> Self {
        EventLog { events }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, CustomerEvent> {
        self.events.iter()
    }

    /// Sorts events into the canonical order used for deterministic output:
    /// (ts, customer_id, kind, product_id, value).
    pub fn sort_canonical(&mut self) {
        self.events.sort_by(|a, b| {
            (a.ts, &a.customer_id, a.kind, &a.product_id, a.value).cmp(&(
                b.ts,
                &b.customer_id,
                b.kind,
                &b.product_id,
                b.value,
            ))
        });
    }

    /// Checks the schema invariants: non-negative values, zero value on
    /// views/sessions, product ids on product-bearing kinds, and returns
    /// referencing a product previously ordered by the same customer.
    pub fn validate(&self) -> Result<(), DataError> {
        let mut sorted: Vec<&CustomerEvent> = self.events.iter().collect();
        sorted.sort_by_key(|e| (e.ts, e.kind));
        let mut ordered: HashMap<&CustomerId, HashSet<&ProductId>> = HashMap::new();
        for e in &sorted {
            if e.value.is_negative() {
                return Err(DataError::InvalidEvent(format!(
                    "negative monetary value {} for customer {}",
                    e.value, e.customer_id
                )));
            }
            match e.kind {
                EventKind::ProductView | EventKind::SessionStart => {
                    if !e.value.is_zero() {
                        return Err(DataError::InvalidEvent(format!(
                            "{} events must carry zero value (customer {})",
                            e.kind.as_str(),
                            e.customer_id
                        )));
                    }
                }
                _ => {}
            }
            match e.kind {
                EventKind::ProductView | EventKind::OrderPlaced | EventKind::ItemReturned => {
                    let Some(pid) = &e.product_id else {
                        return Err(DataError::InvalidEvent(format!(
                            "{} event without product_id (customer {})",
                            e.kind.as_str(),
                            e.customer_id
                        )));
                    };
                    if e.kind == EventKind::OrderPlaced {
                        ordered.entry(&e.customer_id).or_default().insert(pid);
                    }
                    if e.kind == EventKind::ItemReturned
                        && !ordered
                            .get(&e.customer_id)
                            .is_some_and(|p| p.contains(pid))
                    {
                        return Err(DataError::InvalidEvent(format!(
                            "return of product {} never ordered by customer {}",
                            pid, e.customer_id
                        )));
                    }
                }
                EventKind::SessionStart => {}
            }
        }
        Ok(())
    }
}

/// Disjoint feature/label windows: features come from `[feature_start,
/// feature_end)` and labels from `[feature_end, label_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSplit {
    feature_start: Timestamp,
    feature_end: Timestamp,
    label_end: Timestamp,
}

impl TimeSplit {
    pub fn new(
        feature_start: Timestamp,
        feature_end: Timestamp,
        label_end: Timestamp,
    ) -> Result<Self, DataError> {
        if !(feature_start < feature_end && feature_end <= label_end) {
            return Err(DataError::InvalidSplit {
                feature_start,
                feature_end,
                label_end,
            });
        }
        Ok(TimeSplit { feature_start, feature_end, label_end })
    }

    /// Both windows spanning exactly 365 days from `feature_start`.
    pub fn with_default_spans(feature_start: Timestamp) -> Self {
        TimeSplit {
            feature_start,
            feature_end: feature_start.plus_days(365),
            label_end: feature_start.plus_days(730),
        }
    }

    pub fn feature_start(&self) -> Timestamp {
        self.feature_start
    }

    pub fn feature_end(&self) -> Timestamp {
        self.feature_end
    }

    pub fn label_end(&self) -> Timestamp {
        self.label_end
    }

    pub fn in_feature_window(&self, ts: Timestamp) -> bool {
        self.feature_start <= ts && ts < self.feature_end
    }

    pub fn in_label_window(&self, ts: Timestamp) -> bool {
        self.feature_end <= ts && ts < self.label_end
    }

    /// Shifts both windows forward by `days`, keeping the spans.
    pub fn shifted(&self, days: i64) -> TimeSplit {
        TimeSplit {
            feature_start: self.feature_start.plus_days(days),
            feature_end: self.feature_end.plus_days(days),
            label_end: self.label_end.plus_days(days),
        }
    }
}

/// Per-customer label over the label window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub customer_id: CustomerId,
    pub net_spend: Money,
    pub churned: bool,
    /// Fractional rank of net spend within the cohort, ties sharing the
    /// average rank; strictly inside (0, 1).
    pub percentile: f64,
}

/// Labels for a cohort, with a counter of customers whose label-window
/// returns exceeded their orders and were clamped to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    pub records: Vec<LabelRecord>,
    pub clamp_warnings: u64,
}

impl LabelSet {
    pub fn by_customer(&self) -> HashMap<&CustomerId, &LabelRecord> {
        self.records.iter().map(|r| (&r.customer_id, r)).collect()
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("no customer has an event in the feature window")]
    EmptyCohort,
    #[error("invalid time split: feature_start={feature_start} feature_end={feature_end} label_end={label_end} (need feature_start < feature_end <= label_end)")]
    InvalidSplit {
        feature_start: Timestamp,
        feature_end: Timestamp,
        label_end: Timestamp,
    },
    #[error("invalid event: {0}")]
    InvalidEvent(String),
    #[error("malformed record at line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Derives one [`LabelRecord`] per customer with at least one event in the
/// feature window. Net spend sums orders minus returns inside the label
/// window only; negative nets are clamped to zero and counted. Percentiles
/// are average fractional ranks of net spend over the cohort.
pub fn derive_labels(log: &EventLog, split: &TimeSplit) -> Result<LabelSet, DataError> {
    let mut cohort: BTreeSet<&CustomerId> = BTreeSet::new();
    for e in &log.events {
        if split.in_feature_window(e.ts) {
            cohort.insert(&e.customer_id);
        }
    }
    if cohort.is_empty() {
        return Err(DataError::EmptyCohort);
    }

    #[derive(Default, Clone, Copy)]
    struct Tally {
        orders: Money,
        returns: Money,
        order_events: u32,
    }
    let mut tallies: BTreeMap<&CustomerId, Tally> = BTreeMap::new();
    for e in &log.events {
        if !split.in_label_window(e.ts) || !cohort.contains(&e.customer_id) {
            continue;
        }
        let t = tallies.entry(&e.customer_id).or_default();
        match e.kind {
            EventKind::OrderPlaced => {
                t.orders += e.value;
                t.order_events += 1;
            }
            EventKind::ItemReturned => t.returns += e.value,
            _ => {}
        }
    }

    let mut clamp_warnings = 0u64;
    let mut records: Vec<LabelRecord> = cohort
        .iter()
        .map(|&id| {
            let t = tallies.get(id).copied().unwrap_or_default();
            let net = t.orders - t.returns;
            if net.is_negative() {
                clamp_warnings += 1;
            }
            LabelRecord {
                customer_id: id.clone(),
                net_spend: net.clamp_non_negative(),
                churned: t.order_events == 0,
                percentile: 0.0,
            }
        })
        .collect();

    for (i, pct) in average_fractional_ranks(&records).into_iter().enumerate() {
        records[i].percentile = pct;
    }
    Ok(LabelSet { records, clamp_warnings })
}

/// Fractional ranks `(average 0-based position + 0.5) / n` of net spend,
/// ties sharing their group's average position.
fn average_fractional_ranks(records: &[LabelRecord]) -> Vec<f64> {
    let n = records.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| records[i].net_spend);
    let mut pct = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && records[order[end]].net_spend == records[order[start]].net_spend {
            end += 1;
        }
        // average of 0-based positions start..end, plus the half-sample offset
        let mid = (start + end - 1) as f64 / 2.0 + 0.5;
        for &i in &order[start..end] {
            pct[i] = mid / n as f64;
        }
        start = end;
    }
    pct
}
