//! Experiment config files: a `streamckpt-config v1` header line followed
//! by TOML.
//!
//! ```text
//! streamckpt-config v1
//! seed = 7
//!
//! [graph]
//! query = "q3"        # or file = "my.graph" with a streamckpt-graph v1 spec
//! parallelism = 4
//!
//! [workload]
//! rate = 2000.0
//! hot_ratio = 0.1
//!
//! [protocol]
//! name = "unc"
//! interval = 1.0
//!
//! [cost]
//! store_latency = 0.001
//!
//! [[failures]]
//! time = 18.0
//! worker = 0
//!
//! [run]
//! horizon = 60.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use streamckpt_core::dataflow::parse_graph_spec;
use streamckpt_core::sim::{CostModel, FailureSpec, Protocol, ReplayPolicy, RunConfig};
use streamckpt_core::workloads::{build_query, with_graph, CyclicProbs, GeneratorConfig, Query, QueryId, QuerySpec};

use crate::HarnessError;

pub const CONFIG_HEADER: &str = "streamckpt-config v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub graph: GraphSection,
    #[serde(default)]
    pub workload: WorkloadSection,
    #[serde(default)]
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub cost: CostModel,
    #[serde(default)]
    pub failures: Vec<FailureSpec>,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub mst: MstSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

fn default_seed() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSection {
    pub query: Option<QueryId>,
    /// Graph spec file, relative to the config file.
    pub file: Option<PathBuf>,
    pub parallelism: u32,
    pub window: f64,
    pub multiplier: f64,
    pub max_path_len: usize,
}

impl Default for GraphSection {
    fn default() -> Self {
        let q = QuerySpec::new(QueryId::Q1, 4);
        GraphSection {
            query: None,
            file: None,
            parallelism: q.parallelism,
            window: q.window,
            multiplier: q.multiplier,
            max_path_len: q.max_path_len,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadSection {
    pub rate: f64,
    pub hot_ratio: f64,
    pub hot_set_size: u64,
    pub key_universe: u64,
    pub jitter: f64,
    pub extra_bytes: u32,
    pub node_universe: u64,
    pub max_records: Option<usize>,
    pub cyclic_probs: CyclicProbs,
    /// Read input from a `streamckpt-src v1` file instead of generating it.
    pub source_log: Option<PathBuf>,
}

impl Default for WorkloadSection {
    fn default() -> Self {
        let g = GeneratorConfig::default();
        WorkloadSection {
            rate: g.rate,
            hot_ratio: g.hot_ratio,
            hot_set_size: g.hot_set_size,
            key_universe: g.key_universe,
            jitter: g.jitter,
            extra_bytes: g.extra_bytes,
            node_universe: g.node_universe,
            max_records: g.max_records,
            cyclic_probs: g.cyclic_probs,
            source_log: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    pub name: Protocol,
    pub interval: f64,
    pub replay: ReplayPolicy,
    pub dedup: bool,
    pub gc_interval: Option<f64>,
    pub queue_capacity: usize,
    pub marker_bytes: usize,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        let r = RunConfig::default();
        ProtocolSection {
            name: r.protocol,
            interval: r.interval,
            replay: r.replay,
            dedup: r.dedup,
            gc_interval: r.gc_interval,
            queue_capacity: r.queue_capacity,
            marker_bytes: r.marker_bytes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub horizon: f64,
    pub drain: bool,
    pub detection_latency: f64,
    /// Leading fraction of the horizon excluded from steady-state metrics.
    pub warmup_fraction: f64,
    /// A failure is recovered once per-second p50 latency stays within
    /// this factor of the pre-failure p50.
    pub recovery_factor: f64,
    pub record_trace: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            horizon: 60.0,
            drain: true,
            detection_latency: 0.0,
            warmup_fraction: 0.5,
            recovery_factor: 1.5,
            record_trace: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MstSection {
    pub min_rate: f64,
    pub max_rate: f64,
    /// Relative search resolution.
    pub resolution: f64,
    pub horizon: f64,
    pub throughput_ratio: f64,
    pub latency_trend: f64,
}

impl Default for MstSection {
    fn default() -> Self {
        MstSection {
            min_rate: 10.0,
            max_rate: 100_000.0,
            resolution: 0.01,
            horizon: 20.0,
            throughput_ratio: 0.99,
            latency_trend: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub protocols: Vec<Protocol>,
    pub queries: Vec<QueryId>,
    pub parallelisms: Vec<u32>,
    pub hot_ratios: Vec<f64>,
    pub failure_schedules: Vec<Vec<FailureSpec>>,
    /// Run each cell at this fraction of the uniform checkpoint-free MST
    /// instead of the configured rate.
    pub mst_fraction: Option<f64>,
    /// Also measure each cell's MST and normalize it by the checkpoint-free one.
    pub measure_mst: bool,
    pub output_dir: PathBuf,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            protocols: vec![Protocol::Coor, Protocol::Unc, Protocol::Cic],
            queries: Vec::new(),
            parallelisms: Vec::new(),
            hot_ratios: Vec::new(),
            failure_schedules: Vec::new(),
            mst_fraction: None,
            measure_mst: false,
            output_dir: PathBuf::from("reports"),
        }
    }
}

impl ExperimentConfig {
    /// Builds a config for a named query with defaults everywhere else.
    pub fn for_query(query: QueryId, parallelism: u32, protocol: Protocol) -> Self {
        ExperimentConfig {
            seed: default_seed(),
            graph: GraphSection { query: Some(query), parallelism, ..Default::default() },
            workload: WorkloadSection::default(),
            protocol: ProtocolSection { name: protocol, ..Default::default() },
            cost: CostModel::default(),
            failures: Vec::new(),
            run: RunSection::default(),
            mst: MstSection::default(),
            sweep: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let body = match text.split_once('\n') {
            Some((first, rest)) if first.trim() == CONFIG_HEADER => rest,
            None if text.trim() == CONFIG_HEADER => "",
            _ => return Err(HarnessError::Config(format!("missing `{CONFIG_HEADER}` header"))),
        };
        let cfg: ExperimentConfig = toml::from_str(body).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(f) = cfg.graph.file.as_mut() {
            rebase(f);
        }
        if let Some(f) = cfg.workload.source_log.as_mut() {
            rebase(f);
        }
        if let Some(s) = cfg.sweep.as_mut() {
            rebase(&mut s.output_dir);
        }
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let body = toml::to_string(self).expect("config serializes");
        format!("{CONFIG_HEADER}\n{body}")
    }

    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        match (&self.graph.query, &self.graph.file) {
            (None, None) => return bad("graph needs `query` or `file`"),
            (Some(_), Some(_)) => return bad("graph takes either `query` or `file`, not both"),
            _ => {}
        }
        if self.graph.parallelism == 0 {
            return bad("parallelism must be at least 1");
        }
        if !(self.workload.rate > 0.0) {
            return bad("workload rate must be positive");
        }
        if !(0.0..1.0).contains(&self.run.warmup_fraction) {
            return bad("warmup_fraction must be in [0, 1)");
        }
        if !(self.run.recovery_factor >= 1.0) {
            return bad("recovery_factor must be at least 1");
        }
        let m = &self.mst;
        if !(m.min_rate > 0.0 && m.max_rate > m.min_rate && m.resolution > 0.0 && m.horizon > 0.0) {
            return bad("mst needs 0 < min_rate < max_rate, resolution > 0 and horizon > 0");
        }
        if let Some(s) = &self.sweep {
            if s.mst_fraction.is_some_and(|f| !(f > 0.0)) {
                return bad("sweep mst_fraction must be positive");
            }
        }
        self.generator().validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn query_spec(&self) -> QuerySpec {
        let g = &self.graph;
        QuerySpec {
            id: g.query.unwrap_or(QueryId::Q1),
            parallelism: g.parallelism,
            window: g.window,
            multiplier: g.multiplier,
            max_path_len: g.max_path_len,
        }
    }

    /// Label for reports: the query name or the graph file stem.
    pub fn query_label(&self) -> String {
        match (&self.graph.query, &self.graph.file) {
            (Some(q), _) => q.to_string(),
            (None, Some(f)) => f.file_stem().map_or("custom".into(), |s| s.to_string_lossy().into_owned()),
            (None, None) => "custom".into(),
        }
    }

    pub fn build_query(&self) -> Result<Query, HarnessError> {
        let spec = self.query_spec();
        match &self.graph.file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
                let gs = parse_graph_spec(&text).map_err(|e| HarnessError::Config(e.to_string()))?;
                with_graph(&spec, gs).map_err(|e| HarnessError::Config(e.to_string()))
            }
            None => build_query(&spec).map_err(|e| HarnessError::Config(e.to_string())),
        }
    }

    pub fn generator(&self) -> GeneratorConfig {
        let w = &self.workload;
        GeneratorConfig {
            rate: w.rate,
            hot_ratio: w.hot_ratio,
            hot_set_size: w.hot_set_size,
            key_universe: w.key_universe,
            seed: self.seed,
            jitter: w.jitter,
            extra_bytes: w.extra_bytes,
            cyclic_probs: w.cyclic_probs,
            node_universe: w.node_universe,
            max_records: w.max_records,
        }
    }

    pub fn run_config(&self) -> RunConfig {
        let p = &self.protocol;
        RunConfig {
            protocol: p.name,
            interval: p.interval,
            horizon: self.run.horizon,
            seed: self.seed,
            failures: self.failures.clone(),
            cost: self.cost.clone(),
            detection_latency: self.run.detection_latency,
            queue_capacity: p.queue_capacity,
            dedup: p.dedup,
            replay: p.replay,
            drain: self.run.drain,
            gc_interval: p.gc_interval,
            marker_bytes: p.marker_bytes,
            record_trace: self.run.record_trace,
            record_history: false,
        }
    }
}
