//! Single runs and sweep matrices.

use std::path::Path;

use streamckpt_core::batch;
use streamckpt_core::sim::{run, write_trace, Protocol, RunConfig, RunOutput};
use streamckpt_core::workloads::{generate, Query, SourceLog};

use crate::config::ExperimentConfig;
use crate::metrics::{compute_report, MetricsReport, ReportInputs};
use crate::mst::measure_mst;
use crate::report::{summary_csv, CellKey, CellReport};
use crate::srclog::parse_source_log;
use crate::{write_atomic, HarnessError};

/// A query and its input, ready to run under any protocol.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub query: Query,
    pub sources: SourceLog,
}

impl Prepared {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let query = cfg.build_query()?;
        let sources = match &cfg.workload.source_log {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
                parse_source_log(&text)?
            }
            None => generate(&query, &cfg.generator(), cfg.run.horizon).map_err(|e| HarnessError::Config(e.to_string()))?,
        };
        Ok(Prepared { query, sources })
    }

    pub fn run(&self, cfg: &RunConfig) -> Result<RunOutput, HarnessError> {
        Ok(run(&self.query.graph, &self.query.params, &self.sources, cfg)?)
    }

    /// Total bytes of a failure-free checkpoint-free run on this input.
    pub fn baseline_bytes(&self, cfg: &RunConfig) -> Result<u64, HarnessError> {
        let base = RunConfig {
            protocol: Protocol::None,
            failures: Vec::new(),
            record_trace: false,
            record_history: false,
            ..cfg.clone()
        };
        Ok(self.run(&base)?.raw.bytes.total())
    }
}

fn inputs(cfg: &ExperimentConfig, baseline_bytes: Option<u64>) -> ReportInputs {
    ReportInputs {
        protocol: cfg.protocol.name,
        horizon: cfg.run.horizon,
        warmup_fraction: cfg.run.warmup_fraction,
        recovery_factor: cfg.run.recovery_factor,
        baseline_bytes,
    }
}

fn cell_key(cfg: &ExperimentConfig, schedule: usize) -> CellKey {
    CellKey {
        query: cfg.query_label(),
        parallelism: cfg.graph.parallelism,
        protocol: cfg.protocol.name,
        hot_ratio: cfg.workload.hot_ratio,
        schedule,
        rate: cfg.workload.rate,
        seed: cfg.seed,
    }
}

/// Runs one config and its checkpoint-free baseline and computes the report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(MetricsReport, RunOutput), HarnessError> {
    let prep = Prepared::new(cfg)?;
    run_prepared(cfg, &prep)
}

pub fn run_prepared(cfg: &ExperimentConfig, prep: &Prepared) -> Result<(MetricsReport, RunOutput), HarnessError> {
    let rc = cfg.run_config();
    let out = prep.run(&rc)?;
    let baseline = prep.baseline_bytes(&rc)?;
    let report = compute_report(&out, &inputs(cfg, Some(baseline)));
    Ok((report, out))
}

/// Trace file contents with the config embedded as `# config:` comments,
/// so `replay` can re-execute it.
pub fn trace_file(cfg: &ExperimentConfig, out: &RunOutput) -> Option<String> {
    let lines = out.trace.as_ref()?;
    let comments: Vec<String> = cfg.to_text().lines().map(|l| format!(" config: {l}")).collect();
    Some(write_trace(&comments, lines))
}

/// Recovers the embedded config of a trace file.
pub fn config_from_comments(comments: &[String]) -> Result<ExperimentConfig, HarnessError> {
    let text: Vec<&str> = comments.iter().filter_map(|c| c.strip_prefix(" config: ")).collect();
    if text.is_empty() {
        return Err(HarnessError::Config("trace has no embedded config".into()));
    }
    ExperimentConfig::parse(&text.join("\n"))
}

/// Expands the sweep matrix. Empty axes fall back to the base config.
pub fn expand_cells(cfg: &ExperimentConfig) -> Vec<(ExperimentConfig, usize)> {
    let sweep = cfg.sweep.clone().unwrap_or_default();
    fn or<T>(v: Vec<T>, d: T) -> Vec<T> {
        if v.is_empty() {
            vec![d]
        } else {
            v
        }
    }
    let queries: Vec<Option<_>> = if sweep.queries.is_empty() {
        vec![cfg.graph.query]
    } else {
        sweep.queries.iter().map(|q| Some(*q)).collect()
    };
    let protocols = or(sweep.protocols.clone(), cfg.protocol.name);
    let pars = or(sweep.parallelisms.clone(), cfg.graph.parallelism);
    let hots = or(sweep.hot_ratios.clone(), cfg.workload.hot_ratio);
    let schedules = or(sweep.failure_schedules.clone(), cfg.failures.clone());
    let mut cells = Vec::new();
    for q in &queries {
        for &p in &pars {
            for &h in &hots {
                for (s, sched) in schedules.iter().enumerate() {
                    for &proto in &protocols {
                        let mut c = cfg.clone();
                        c.sweep = None;
                        c.graph.query = *q;
                        if q.is_some() {
                            c.graph.file = None;
                        }
                        c.graph.parallelism = p;
                        c.workload.hot_ratio = h;
                        c.failures = sched.clone();
                        c.protocol.name = proto;
                        cells.push((c, s));
                    }
                }
            }
        }
    }
    cells
}

/// Per (query, parallelism, hot ratio) data shared by that group's cells.
struct Group {
    rate: f64,
    none_mst: Option<f64>,
}

fn group_key(c: &ExperimentConfig) -> (String, u32, u64) {
    (c.query_label(), c.graph.parallelism, c.workload.hot_ratio.to_bits())
}

/// A cell config, its index, and its group's rate and NONE MST.
type Job = (ExperimentConfig, usize, Result<(f64, Option<f64>), String>);

/// Runs every cell (in parallel when enabled), writes one JSON report per
/// cell plus `summary.csv` into the sweep's output dir, and returns the
/// reports in matrix order. A failing cell is reported, not fatal.
pub fn run_sweep(cfg: &ExperimentConfig, write: bool) -> Result<Vec<CellReport>, HarnessError> {
    let sweep = cfg.sweep.clone().unwrap_or_default();
    let cells = expand_cells(cfg);

    // rate per group: either the configured one or a fraction of the
    // uniform checkpoint-free MST
    let mut groups: Vec<(String, u32, u64)> = cells.iter().map(|(c, _)| group_key(c)).collect();
    groups.sort();
    groups.dedup();
    let reps: Vec<ExperimentConfig> =
        groups.iter().map(|k| cells.iter().find(|(c, _)| &group_key(c) == k).expect("group member").0.clone()).collect();
    let group_data: Vec<Result<Group, HarnessError>> = batch::map(reps, |c| {
        let needs_mst = sweep.mst_fraction.is_some() || sweep.measure_mst;
        let none_mst = if needs_mst {
            let mut none = c.clone();
            none.protocol.name = Protocol::None;
            none.workload.hot_ratio = 0.0;
            let q = none.build_query()?;
            Some(measure_mst(&none, &q)?.mst)
        } else {
            None
        };
        let rate = match (sweep.mst_fraction, none_mst) {
            (Some(f), Some(m)) => f * m,
            _ => c.workload.rate,
        };
        Ok(Group { rate, none_mst })
    });
    let group_data: Vec<Result<Group, String>> = group_data.into_iter().map(|g| g.map_err(|e| e.to_string())).collect();

    let jobs: Vec<Job> = cells
        .into_iter()
        .map(|(mut c, s)| {
            let gi = groups.binary_search(&group_key(&c)).expect("group exists");
            let g = group_data[gi].as_ref().map(|g| (g.rate, g.none_mst)).map_err(Clone::clone);
            if let Ok((rate, _)) = g {
                c.workload.rate = rate;
            }
            (c, s, g)
        })
        .collect();
    let measure = sweep.measure_mst;
    let reports: Vec<CellReport> = batch::map(jobs, |(c, s, g)| {
        let key = cell_key(&c, s);
        let result = g.map_err(|e| format!("group setup failed: {e}")).and_then(|(_, none_mst)| {
            let (mut m, _) = run_experiment(&c).map_err(|e| e.to_string())?;
            if measure {
                let q = c.build_query().map_err(|e| e.to_string())?;
                let mst = measure_mst(&c, &q).map_err(|e| e.to_string())?.mst;
                m.mst = Some(mst);
                m.mst_normalized = none_mst.map(|n| mst / n);
            }
            Ok(m)
        });
        match result {
            Ok(m) => CellReport::ok(key, m),
            Err(e) => CellReport::failed(key, e),
        }
    });

    if write {
        let dir = &sweep.output_dir;
        for r in &reports {
            write_atomic(&dir.join(format!("{}.json", r.cell.id())), r.to_json().as_bytes())?;
        }
        write_atomic(&dir.join("summary.csv"), summary_csv(&reports).as_bytes())?;
    }
    Ok(reports)
}

/// Writes a single-run report.
pub fn write_report(path: &Path, cfg: &ExperimentConfig, m: MetricsReport) -> Result<(), HarnessError> {
    write_atomic(path, CellReport::ok(cell_key(cfg, 0), m).to_json().as_bytes())
}

pub fn single_report(cfg: &ExperimentConfig, m: MetricsReport) -> CellReport {
    CellReport::ok(cell_key(cfg, 0), m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SweepSection;
    use streamckpt_core::sim::FailureSpec;
    use streamckpt_core::workloads::QueryId;

    fn small(protocol: Protocol) -> ExperimentConfig {
        let mut c = ExperimentConfig::for_query(QueryId::Q1, 4, protocol);
        c.workload.rate = 400.0;
        c.run.horizon = 10.0;
        c
    }

    #[test]
    fn failure_gives_restart_and_recovery_times() {
        let mut c = small(Protocol::Unc);
        c.failures = vec![FailureSpec { time: 3.0, worker: 1 }];
        let (m, _) = run_experiment(&c).unwrap();
        assert_eq!(m.recoveries.len(), 1);
        assert!(m.restart_time.unwrap() > 0.0);
        assert!(m.recovery_time.is_some());
        assert!(m.invalid_checkpoints <= m.total_checkpoints);
    }

    #[test]
    fn byte_totals_match_the_trace() {
        let mut c = small(Protocol::Cic);
        c.run.record_trace = true;
        c.failures = vec![FailureSpec { time: 4.0, worker: 0 }];
        let (m, out) = run_experiment(&c).unwrap();
        let lines = out.trace.unwrap();
        let field = |l: &str, k: &str| -> u64 {
            l.split(['\t', ' '])
                .find_map(|kv| kv.strip_prefix(k).and_then(|r| r.strip_prefix('=')))
                .map_or(0, |v| v.parse().unwrap())
        };
        let kind = |l: &str| l.split('\t').nth(2).unwrap_or("").to_string();
        let (mut data, mut pb, mut other) = (0, 0, 0);
        for l in &lines {
            match kind(l).as_str() {
                "send" => {
                    data += field(l, "bytes");
                    pb += field(l, "pb");
                }
                "marker" | "ctrl" => other += field(l, "bytes"),
                _ => {}
            }
        }
        assert_eq!(data, m.bytes.data);
        assert_eq!(pb, m.bytes.piggyback);
        assert_eq!(other, m.bytes.marker + m.bytes.control);
        assert!(m.message_overhead_ratio.unwrap() >= 1.0);
    }

    #[test]
    fn sweep_writes_reports_and_summary() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small(Protocol::Unc);
        c.run.horizon = 6.0;
        c.sweep = Some(SweepSection { output_dir: dir.path().to_path_buf(), ..Default::default() });
        let reports = run_sweep(&c, true).unwrap();
        assert_eq!(reports.len(), 3);
        let ratios: Vec<f64> = reports.iter().map(|r| r.metrics.as_ref().unwrap().message_overhead_ratio.unwrap()).collect();
        // coor, unc, cic
        assert!(ratios[0] <= ratios[1] + 0.05 && ratios[1] < ratios[2], "{ratios:?}");
        let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert!(summary.starts_with("# streamckpt-report v1\n"));
        assert_eq!(summary.lines().count(), 5);
        let first = std::fs::read_to_string(dir.path().join(format!("{}.json", reports[0].cell.id()))).unwrap();
        assert_eq!(CellReport::from_json(&first).unwrap(), reports[0]);
        // reruns are byte-identical
        let again = run_sweep(&c, false).unwrap();
        assert_eq!(again.iter().map(CellReport::to_json).collect::<Vec<_>>(), reports.iter().map(CellReport::to_json).collect::<Vec<_>>());
    }

    #[test]
    fn failing_cell_does_not_stop_the_matrix() {
        let mut c = ExperimentConfig::for_query(QueryId::Reach, 2, Protocol::Unc);
        c.workload.rate = 20.0;
        c.run.horizon = 4.0;
        c.sweep = Some(SweepSection::default());
        let reports = run_sweep(&c, false).unwrap();
        assert_eq!(reports.iter().map(|r| r.status.as_str()).collect::<Vec<_>>(), ["failed", "ok", "ok"]);
        assert!(reports[0].error.as_ref().unwrap().contains("cyclic"));
    }

    #[test]
    fn embedded_config_round_trips() {
        let mut c = small(Protocol::Coor);
        c.run.record_trace = true;
        c.run.horizon = 2.0;
        let (_, out) = run_experiment(&c).unwrap();
        let text = trace_file(&c, &out).unwrap();
        let parsed = streamckpt_core::sim::parse_trace(&text).unwrap();
        assert_eq!(config_from_comments(&parsed.comments).unwrap(), c);
        assert_eq!(parsed.hash, out.trace_hash);
    }
}
