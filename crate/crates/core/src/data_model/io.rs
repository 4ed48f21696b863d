//! Event-log serialization: newline-delimited JSON and CSV with the same
//! column names.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{CustomerEvent, CustomerId, DataError, EventKind, EventLog, Money, ProductId, Timestamp};

/// Reads events from a path, picking the format from the extension:
/// `.csv` is CSV, anything else is newline-delimited JSON.
pub fn read_events(path: &Path) -> Result<EventLog, DataError> {
    let file = File::open(path)?;
    if path.extension().is_some_and(|e| e == "csv") {
        read_csv(file)
    } else {
        read_ndjson(file)
    }
}

pub fn write_events(path: &Path, log: &EventLog) -> Result<(), DataError> {
    let file = File::create(path)?;
    if path.extension().is_some_and(|e| e == "csv") {
        write_csv(file, log)
    } else {
        write_ndjson(file, log)
    }
}

pub fn read_ndjson<R: Read>(reader: R) -> Result<EventLog, DataError> {
    let mut events = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: CustomerEvent =
            serde_json::from_str(&line).map_err(|e| DataError::Malformed {
                line: i + 1,
                msg: e.to_string(),
            })?;
        events.push(event);
    }
    Ok(EventLog::new(events))
}

pub fn write_ndjson<W: Write>(writer: W, log: &EventLog) -> Result<(), DataError> {
    let mut w = BufWriter::new(writer);
    for e in &log.events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

const CSV_HEADER: [&str; 6] = ["customer_id", "ts", "kind", "product_id", "value", "attrs"];

/// CSV uses the same column names as the JSON fields; `attrs` holds a JSON
/// object when present.
pub fn read_csv<R: Read>(reader: R) -> Result<EventLog, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(c_id), Some(c_ts), Some(c_kind)) =
        (col("customer_id"), col("ts"), col("kind"))
    else {
        return Err(DataError::Malformed {
            line: 1,
            msg: "CSV must have customer_id, ts and kind columns".into(),
        });
    };
    let c_product = col("product_id");
    let c_value = col("value");
    let c_attrs = col("attrs");

    let mut events = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let field = |idx: Option<usize>| idx.and_then(|j| record.get(j)).unwrap_or("");
        let kind = EventKind::parse(field(Some(c_kind))).ok_or_else(|| DataError::Malformed {
            line,
            msg: format!("unknown event kind {:?}", field(Some(c_kind))),
        })?;
        let ts: i64 = field(Some(c_ts)).parse().map_err(|_| DataError::Malformed {
            line,
            msg: format!("bad ts {:?}", field(Some(c_ts))),
        })?;
        let value = match field(c_value) {
            "" => Money::ZERO,
            s => Money::from_pounds(s.parse().map_err(|_| DataError::Malformed {
                line,
                msg: format!("bad value {s:?}"),
            })?),
        };
        let product_id = match field(c_product) {
            "" => None,
            s => Some(ProductId::new(s)),
        };
        let attrs = match field(c_attrs) {
            "" => None,
            s => Some(serde_json::from_str(s).map_err(|e| DataError::Malformed {
                line,
                msg: format!("bad attrs: {e}"),
            })?),
        };
        events.push(CustomerEvent {
            customer_id: CustomerId::new(field(Some(c_id))),
            ts: Timestamp::from_epoch(ts),
            kind,
            product_id,
            value,
            attrs,
        });
    }
    Ok(EventLog::new(events))
}

pub fn write_csv<W: Write>(writer: W, log: &EventLog) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for e in &log.events {
        let attrs = match &e.attrs {
            Some(a) => serde_json::to_string(a)?,
            None => String::new(),
        };
        w.write_record([
            e.customer_id.as_str(),
            &e.ts.epoch().to_string(),
            e.kind.as_str(),
            e.product_id.as_ref().map(ProductId::as_str).unwrap_or(""),
            &(if e.value.is_zero() { String::new() } else { e.value.to_string() }),
            &attrs,
        ])?;
    }
    w.flush()?;
    Ok(())
}
