//! Replayable input files.
//!
//! ```text
//! streamckpt-src v1
//! bids<TAB>0<TAB>1500<TAB>{"Bid":{...}}
//! ```
//!
//! One record per line: stream name, partition, ingestion time in ticks and
//! the record as JSON. Lines of a partition must be in time order.

use std::collections::BTreeMap;

use streamckpt_core::dataflow::Record;
use streamckpt_core::workloads::{SourceLog, SourceRecord};

use crate::HarnessError;

pub const SOURCE_HEADER: &str = "streamckpt-src v1";

pub fn write_source_log(log: &SourceLog) -> String {
    let mut out = String::from(SOURCE_HEADER);
    out.push('\n');
    for (stream, parts) in &log.streams {
        for (p, recs) in parts.iter().enumerate() {
            for r in recs {
                let json = serde_json::to_string(&r.record).expect("records serialize");
                out.push_str(&format!("{stream}\t{p}\t{}\t{json}\n", r.time));
            }
        }
    }
    out
}

pub fn parse_source_log(text: &str) -> Result<SourceLog, HarnessError> {
    let err = |line: usize, msg: &str| HarnessError::SourceLog { line, msg: msg.to_string() };
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(SOURCE_HEADER) {
        return Err(err(1, &format!("missing `{SOURCE_HEADER}` header")));
    }
    let mut streams: BTreeMap<String, Vec<Vec<SourceRecord>>> = BTreeMap::new();
    for (n, line) in lines.enumerate() {
        let at = n + 2;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut f = line.splitn(4, '\t');
        let (Some(stream), Some(part), Some(time), Some(json)) = (f.next(), f.next(), f.next(), f.next()) else {
            return Err(err(at, "expected 4 tab-separated fields"));
        };
        let part: usize = part.parse().map_err(|_| err(at, "bad partition"))?;
        let time = time.parse().map_err(|_| err(at, "bad time"))?;
        let record: Record = serde_json::from_str(json).map_err(|e| err(at, &e.to_string()))?;
        let parts = streams.entry(stream.to_string()).or_default();
        if parts.len() <= part {
            parts.resize_with(part + 1, Vec::new);
        }
        if parts[part].last().is_some_and(|r| r.time > time) {
            return Err(err(at, "records of a partition must be in time order"));
        }
        parts[part].push(SourceRecord { time, record });
    }
    Ok(SourceLog { streams })
}

#[cfg(test)]
mod tests {
    use super::*;
    use streamckpt_core::workloads::{build_query, generate, GeneratorConfig, QueryId, QuerySpec};

    #[test]
    fn generated_log_round_trips() {
        let q = build_query(&QuerySpec::new(QueryId::Q8, 2)).unwrap();
        let cfg = GeneratorConfig { rate: 300.0, max_records: Some(200), ..Default::default() };
        let log = generate(&q, &cfg, 5.0).unwrap();
        let text = write_source_log(&log);
        assert_eq!(parse_source_log(&text).unwrap(), log);
    }

    #[test]
    fn rejects_out_of_order_and_garbage() {
        let bad = format!("{SOURCE_HEADER}\nbids\t0\t5\t{{\"Bid\":1}}\n");
        assert!(parse_source_log(&bad).is_err());
        assert!(parse_source_log("bids\t0\t5\t{}").is_err());
    }
}
