//! Maximum sustainable throughput: the highest input rate the pipeline
//! absorbs without backpressure building up.
//!
//! A rate is sustainable when, after the warmup, the operators reading the
//! sources take up at least `throughput_ratio` of the records offered in
//! that window and the p50 latency of the last
//! quarter of the measurement window is at most `latency_trend` times the
//! p50 of its first quarter. Rates are searched by geometric bisection.

use serde::{Deserialize, Serialize};
use streamckpt_core::sim::{run, RunConfig};
use streamckpt_core::time::{ticks, units};
use streamckpt_core::workloads::{generate, Query};

use crate::config::ExperimentConfig;
use crate::metrics::{bucket_rate, window_percentile};
use crate::HarnessError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateProbe {
    pub rate: f64,
    /// Records per unit offered by the input after the warmup.
    pub offered: f64,
    pub throughput: f64,
    pub first_p50: Option<f64>,
    pub last_p50: Option<f64>,
    pub sustainable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MstResult {
    pub mst: f64,
    pub probes: Vec<RateProbe>,
}

/// Runs one failure-free probe at `rate` and judges it.
pub fn probe(cfg: &ExperimentConfig, query: &Query, rate: f64) -> Result<RateProbe, HarnessError> {
    let m = &cfg.mst;
    let mut gen = cfg.generator();
    gen.rate = rate;
    gen.max_records = None;
    let sources = generate(query, &gen, m.horizon).map_err(|e| HarnessError::Config(e.to_string()))?;
    let run_cfg = RunConfig {
        horizon: m.horizon,
        failures: Vec::new(),
        drain: false,
        record_trace: false,
        record_history: false,
        ..cfg.run_config()
    };
    let out = run(&query.graph, &query.params, &sources, &run_cfg)?;
    let warm = ticks(m.horizon * cfg.run.warmup_fraction);
    let end = ticks(m.horizon);
    let window = units(end - warm);
    let offered = sources.records().filter(|r| (warm..end).contains(&r.time)).count() as f64 / window;
    let throughput = bucket_rate(&out.raw.processed, warm, end);
    let quarter = (end - warm) / 4;
    let p50 = |a, b| window_percentile(&out.raw.latencies, a, b, 50.0).map(units);
    let first_p50 = p50(warm, warm + quarter);
    let last_p50 = p50(end - quarter, end);
    // windowed queries may leave a quarter without output; then only the
    // throughput test applies
    let trend_ok = match (first_p50, last_p50) {
        (Some(f), Some(l)) => l <= m.latency_trend * f,
        _ => true,
    };
    let sustainable = throughput >= m.throughput_ratio * offered && trend_ok;
    Ok(RateProbe { rate, offered, throughput, first_p50, last_p50, sustainable })
}

pub fn measure_mst(cfg: &ExperimentConfig, query: &Query) -> Result<MstResult, HarnessError> {
    let m = &cfg.mst;
    let mut probes = Vec::new();
    let check = |rate: f64, probes: &mut Vec<RateProbe>| -> Result<bool, HarnessError> {
        let p = probe(cfg, query, rate)?;
        let ok = p.sustainable;
        probes.push(p);
        Ok(ok)
    };
    if !check(m.min_rate, &mut probes)? {
        return Err(HarnessError::NeverSustainable(m.min_rate));
    }
    if check(m.max_rate, &mut probes)? {
        return Ok(MstResult { mst: m.max_rate, probes });
    }
    let (mut lo, mut hi) = (m.min_rate, m.max_rate);
    while hi / lo > 1.0 + m.resolution {
        let mid = (lo * hi).sqrt();
        if check(mid, &mut probes)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(MstResult { mst: lo, probes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use streamckpt_core::sim::{CostModel, Protocol};
    use streamckpt_core::workloads::QueryId;

    /// Q1 with one instance per stage and all cost on the map: a single
    /// server with service time s absorbs at most 1/s records per unit.
    fn single_server(s: f64) -> ExperimentConfig {
        let mut c = ExperimentConfig::for_query(QueryId::Q1, 1, Protocol::None);
        c.cost = CostModel {
            source_service: 0.0,
            sink_service: 0.0,
            serde_time_per_byte: 0.0,
            map_service: s,
            ..CostModel::default()
        };
        c.workload.jitter = 0.0;
        c.mst = crate::config::MstSection { min_rate: 10.0, max_rate: 5000.0, horizon: 10.0, ..Default::default() };
        c
    }

    #[test]
    fn single_server_mst_is_inverse_service_time() {
        let c = single_server(0.002);
        let q = c.build_query().unwrap();
        let r = measure_mst(&c, &q).unwrap();
        assert!((r.mst - 500.0).abs() / 500.0 < 0.05, "mst {}", r.mst);
    }

    #[test]
    fn doubling_service_time_halves_mst() {
        let a = single_server(0.002);
        let b = single_server(0.004);
        let ma = measure_mst(&a, &a.build_query().unwrap()).unwrap().mst;
        let mb = measure_mst(&b, &b.build_query().unwrap()).unwrap().mst;
        assert!((ma / mb - 2.0).abs() / 2.0 < 0.05, "{ma} vs {mb}");
    }

    #[test]
    fn hopeless_cost_is_never_sustainable() {
        let c = single_server(1.0);
        let q = c.build_query().unwrap();
        assert!(matches!(measure_mst(&c, &q), Err(HarnessError::NeverSustainable(_))));
    }
}
