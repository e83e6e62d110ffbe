//! Text format for graph specs.
//!
//! ```text
//! streamckpt-graph v1
//! # comment
//! defaults latency=0.0005 bandwidth=100000000
//! operator src parallelism=2 logic=source:bids stateful=false
//! operator out parallelism=2 logic=sink stateful=true
//! channel src out kind=forward latency=0.001
//! ```
//!
//! `defaults` is optional. `latency` (time units) and `bandwidth` (bytes per
//! time unit) on a channel line override the defaults for that edge.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::graph::{ChannelKind, EdgeSpec, GraphError, GraphSpec, OperatorSpec};

pub const GRAPH_HEADER: &str = "streamckpt-graph v1";

fn kv_pairs<'a>(tokens: impl Iterator<Item = &'a str>) -> Result<BTreeMap<&'a str, &'a str>, GraphError> {
    tokens
        .map(|t| t.split_once('=').ok_or_else(|| GraphError::Parse(format!("expected key=value, got `{t}`"))))
        .collect()
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, GraphError> {
    v.parse().map_err(|_| GraphError::Parse(format!("bad value for {key}: `{v}`")))
}

pub fn parse_graph_spec(text: &str) -> Result<GraphSpec, GraphError> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some(GRAPH_HEADER) => {}
        other => return Err(GraphError::Parse(format!("missing `{GRAPH_HEADER}` header, found {other:?}"))),
    }
    let mut spec = GraphSpec::new();
    for line in lines {
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("defaults") => {
                let kv = kv_pairs(tokens)?;
                if let Some(v) = kv.get("latency") {
                    spec.default_latency = num("latency", v)?;
                }
                if let Some(v) = kv.get("bandwidth") {
                    spec.default_bandwidth = num("bandwidth", v)?;
                }
            }
            Some("operator") => {
                let name = tokens.next().ok_or_else(|| GraphError::Parse("operator without name".into()))?;
                let kv = kv_pairs(tokens)?;
                let field = |k: &str| kv.get(k).copied().ok_or_else(|| GraphError::Parse(format!("operator {name}: missing {k}")));
                spec.operators.push(OperatorSpec {
                    name: name.to_string(),
                    parallelism: num("parallelism", field("parallelism")?)?,
                    logic: field("logic")?.parse()?,
                    stateful: num("stateful", kv.get("stateful").copied().unwrap_or("false"))?,
                });
            }
            Some("channel") => {
                let from = tokens.next().ok_or_else(|| GraphError::Parse("channel without source".into()))?;
                let to = tokens.next().ok_or_else(|| GraphError::Parse("channel without target".into()))?;
                let kv = kv_pairs(tokens)?;
                let kind: ChannelKind = kv
                    .get("kind")
                    .ok_or_else(|| GraphError::Parse(format!("channel {from}->{to}: missing kind")))?
                    .parse()?;
                spec.edges.push(EdgeSpec {
                    from: from.to_string(),
                    to: to.to_string(),
                    kind,
                    base_latency: kv.get("latency").map(|v| num("latency", v)).transpose()?,
                    bandwidth: kv.get("bandwidth").map(|v| num("bandwidth", v)).transpose()?,
                });
            }
            Some(other) => return Err(GraphError::Parse(format!("unknown entry `{other}`"))),
            None => {}
        }
    }
    Ok(spec)
}

pub fn write_graph_spec(spec: &GraphSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{GRAPH_HEADER}");
    let _ = writeln!(out, "defaults latency={} bandwidth={}", spec.default_latency, spec.default_bandwidth);
    for op in &spec.operators {
        let _ = writeln!(
            out,
            "operator {} parallelism={} logic={} stateful={}",
            op.name, op.parallelism, op.logic, op.stateful
        );
    }
    for e in &spec.edges {
        let _ = write!(out, "channel {} {} kind={}", e.from, e.to, e.kind.as_str());
        if let Some(l) = e.base_latency {
            let _ = write!(out, " latency={l}");
        }
        if let Some(b) = e.bandwidth {
            let _ = write!(out, " bandwidth={b}");
        }
        out.push('\n');
    }
    out
}
