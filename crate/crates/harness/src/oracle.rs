//! Offline checks over trace files.
//!
//! `check_trace` rebuilds the execution history from the trace (first-time
//! sends, processed receives, checkpoints, aborted uploads, rollbacks) and
//! at every restored line verifies it against brute force: the line must
//! leave no orphan, must be the maximum consistent line under UNC/CIC and
//! must not be beaten by any consistent line under COOR. CIC traces must
//! also be free of Z-cycles.

use serde::Serialize;
use streamckpt_core::recovery::{brute_force_recovery_line, ExecutionHistory, RecoveryLine};
use streamckpt_core::sim::{parse_trace, ParsedTrace, Protocol, TraceLine};

use crate::experiment::{config_from_comments, Prepared};
use crate::HarnessError;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct OracleSummary {
    pub protocol: String,
    pub events: usize,
    pub checkpoints: usize,
    pub lines_checked: usize,
    pub z_cycle_checkpoints: usize,
}

fn bad(msg: String) -> HarnessError {
    HarnessError::Invariant(msg)
}

fn num(l: &TraceLine, key: &str) -> Result<u64, HarnessError> {
    l.num(key).ok_or_else(|| bad(format!("`{}` line at {} lacks `{key}`", l.kind, l.time)))
}

fn parse_line_indices(l: &TraceLine) -> Result<RecoveryLine, HarnessError> {
    let idx = l.field("idx").ok_or_else(|| bad(format!("line event at {} lacks idx", l.time)))?;
    let v: Result<Vec<u64>, _> = idx.split(',').map(str::parse).collect();
    Ok(RecoveryLine::new(v.map_err(|_| bad(format!("bad line indices `{idx}`")))?))
}

pub fn check_trace(trace: &ParsedTrace) -> Result<OracleSummary, HarnessError> {
    let mut sum = OracleSummary { events: trace.lines.len(), ..Default::default() };
    let mut protocol = None;
    let mut instances = 0usize;
    let mut channels: Vec<(usize, usize)> = Vec::new();
    let mut hist: Option<ExecutionHistory> = None;
    let mut last_time = 0;
    for l in &trace.lines {
        if l.time < last_time {
            return Err(bad(format!("time goes backwards at {}", l.time)));
        }
        last_time = l.time;
        match l.kind.as_str() {
            "topo" => {
                let p: Protocol = l
                    .field("protocol")
                    .and_then(|p| p.parse().ok())
                    .ok_or_else(|| bad("topo line lacks a protocol".into()))?;
                protocol = Some(p);
                instances = num(l, "instances")? as usize;
            }
            "chan" => {
                let id = num(l, "id")? as usize;
                if id != channels.len() {
                    return Err(bad(format!("channel {id} out of order")));
                }
                channels.push((num(l, "from")? as usize, num(l, "to")? as usize));
            }
            kind => {
                let h = hist.get_or_insert_with(|| ExecutionHistory::new(instances, channels.clone()));
                match kind {
                    "send" if l.num("replay") == Some(0) => h.send(num(l, "ch")? as usize, num(l, "seq")?),
                    "recv" => h.receive(num(l, "ch")? as usize, num(l, "seq")?),
                    "ckpt" => {
                        h.checkpoint(num(l, "inst")? as usize, num(l, "idx")?);
                        sum.checkpoints += 1;
                    }
                    "abort" => h.forget_checkpoint(num(l, "inst")? as usize, num(l, "idx")?),
                    "line" => {
                        let line = parse_line_indices(l)?;
                        check_line(h, &line, protocol, l.time)?;
                        sum.lines_checked += 1;
                        // the rollback itself is applied at restart-done
                        h.truncate_to(&line);
                    }
                    _ => {}
                }
            }
        }
    }
    let protocol = protocol.ok_or_else(|| bad("trace has no topo line".into()))?;
    sum.protocol = protocol.to_string();
    if protocol == Protocol::Cic {
        if let Some(h) = &hist {
            let z = h.z_cycle_checkpoints();
            sum.z_cycle_checkpoints = z.len();
            if !z.is_empty() {
                return Err(bad(format!("checkpoints on a Z-cycle: {z:?}")));
            }
        }
    }
    Ok(sum)
}

fn check_line(h: &ExecutionHistory, line: &RecoveryLine, protocol: Option<Protocol>, at: u64) -> Result<(), HarnessError> {
    if line.indices.len() != h.instances {
        return Err(bad(format!("line at {at} has {} entries for {} instances", line.indices.len(), h.instances)));
    }
    let latest = h.latest();
    if line.indices.iter().zip(&latest).any(|(l, m)| l > m) {
        return Err(bad(format!("line at {at} names a checkpoint that was never taken")));
    }
    let orphans = h.orphans(line);
    if !orphans.is_empty() {
        return Err(bad(format!("line {:?} at {at} leaves orphans {orphans:?}", line.indices)));
    }
    let best = brute_force_recovery_line(h);
    match protocol {
        Some(Protocol::Unc | Protocol::Cic) if best != *line => Err(bad(format!(
            "line {:?} at {at} differs from the brute-force maximum {:?}",
            line.indices, best.indices
        ))),
        Some(Protocol::Coor) if !best.dominates(line) => {
            Err(bad(format!("brute-force line {:?} does not dominate {:?} at {at}", best.indices, line.indices)))
        }
        _ => Ok(()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplaySummary {
    pub recorded_hash: String,
    pub replayed_hash: String,
    pub events: u64,
    /// First differing line (1-based, body lines only) on divergence.
    pub first_divergence: Option<usize>,
}

/// Re-executes a trace file from its embedded config and compares hashes.
pub fn replay_trace(text: &str) -> Result<ReplaySummary, HarnessError> {
    let parsed = parse_trace(text)?;
    let mut cfg = config_from_comments(&parsed.comments)?;
    cfg.run.record_trace = true;
    let prep = Prepared::new(&cfg)?;
    let out = prep.run(&cfg.run_config())?;
    let first_divergence = if out.trace_hash == parsed.hash {
        None
    } else {
        let body: Vec<&str> = text.lines().skip(1).filter(|l| !l.starts_with('#') && !l.is_empty()).collect();
        let fresh = out.trace.unwrap_or_default();
        Some(
            body.iter()
                .zip(&fresh)
                .position(|(a, b)| *a != b.as_str())
                .unwrap_or(body.len().min(fresh.len()))
                + 1,
        )
    };
    Ok(ReplaySummary {
        recorded_hash: format!("{:016x}", parsed.hash),
        replayed_hash: format!("{:016x}", out.trace_hash),
        events: out.trace_events,
        first_divergence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::experiment::{run_experiment, trace_file};
    use streamckpt_core::sim::FailureSpec;
    use streamckpt_core::workloads::QueryId;

    fn traced(query: QueryId, p: u32, protocol: Protocol, rate: f64) -> String {
        let mut c = ExperimentConfig::for_query(query, p, protocol);
        c.workload.rate = rate;
        c.run.horizon = 8.0;
        c.run.record_trace = true;
        c.failures = vec![FailureSpec { time: 3.3, worker: 0 }, FailureSpec { time: 6.1, worker: 1 }];
        let (_, out) = run_experiment(&c).unwrap();
        trace_file(&c, &out).unwrap()
    }

    #[test]
    fn simulated_lines_match_brute_force() {
        for protocol in [Protocol::Coor, Protocol::Unc, Protocol::Cic] {
            let t = parse_trace(&traced(QueryId::Q3, 2, protocol, 300.0)).unwrap();
            let s = check_trace(&t).unwrap();
            assert_eq!(s.lines_checked, 2, "{protocol}");
            assert!(s.checkpoints > 0);
        }
        let t = parse_trace(&traced(QueryId::Reach, 2, Protocol::Cic, 20.0)).unwrap();
        assert_eq!(check_trace(&t).unwrap().z_cycle_checkpoints, 0);
    }

    #[test]
    fn tampered_line_is_caught() {
        let text = traced(QueryId::Q1, 2, Protocol::Unc, 300.0);
        let mut t = parse_trace(&text).unwrap();
        let l = t.lines.iter_mut().find(|l| l.kind == "line").unwrap();
        let line = parse_line_indices(l).unwrap();
        let lowered: Vec<String> = line.indices.iter().map(|&i| i.saturating_sub(1).to_string()).collect();
        l.details = l.details.replacen(&l.field("idx").unwrap().to_string(), &lowered.join(","), 1);
        assert!(matches!(check_trace(&t), Err(HarnessError::Invariant(_))));
    }

    #[test]
    fn replay_reproduces_the_hash() {
        let text = traced(QueryId::Q8, 2, Protocol::Cic, 200.0);
        let r = replay_trace(&text).unwrap();
        assert_eq!(r.recorded_hash, r.replayed_hash);
        assert_eq!(r.first_divergence, None);
        // an edited event diverges
        let mut lines: Vec<&str> = text.lines().collect();
        let i = lines.iter().position(|l| l.contains("\trecv\t")).unwrap();
        lines.remove(i);
        let r = replay_trace(&lines.join("\n")).unwrap();
        assert_ne!(r.recorded_hash, r.replayed_hash);
        assert!(r.first_divergence.is_some());
    }
}
