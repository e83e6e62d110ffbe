//! Turns raw run samples into the report metrics.

use serde::{Deserialize, Serialize};
use streamckpt_core::sim::{ByteCounts, MetricsRaw, Protocol, RunOutput};
use streamckpt_core::time::{units, Ticks, TICKS_PER_UNIT};

/// Nearest-rank percentile of an ascending slice: the smallest sample with
/// at least `p` percent of the samples at or below it.
pub fn nearest_rank(sorted: &[Ticks], p: f64) -> Option<Ticks> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyBucket {
    /// Start of the one-unit bucket.
    pub second: u64,
    pub count: usize,
    /// `None` marks an empty bucket (a gap in the series).
    pub p50: Option<f64>,
    pub p99: Option<f64>,
}

/// Per-unit p50/p99 of end-to-end latency, bucketed by sink completion time.
pub fn latency_series(samples: &[(Ticks, Ticks)], end: Ticks) -> Vec<LatencyBucket> {
    let buckets = (end / TICKS_PER_UNIT + 1) as usize;
    let mut per: Vec<Vec<Ticks>> = vec![Vec::new(); buckets];
    for &(at, lat) in samples {
        let b = (at / TICKS_PER_UNIT) as usize;
        if b >= per.len() {
            per.resize(b + 1, Vec::new());
        }
        per[b].push(lat);
    }
    per.into_iter()
        .enumerate()
        .map(|(s, mut v)| {
            v.sort_unstable();
            LatencyBucket {
                second: s as u64,
                count: v.len(),
                p50: nearest_rank(&v, 50.0).map(units),
                p99: nearest_rank(&v, 99.0).map(units),
            }
        })
        .collect()
}

/// Percentile over samples completing in `[from, to)`.
pub fn window_percentile(samples: &[(Ticks, Ticks)], from: Ticks, to: Ticks, p: f64) -> Option<Ticks> {
    let mut v: Vec<Ticks> = samples.iter().filter(|(at, _)| (from..to).contains(at)).map(|s| s.1).collect();
    v.sort_unstable();
    nearest_rank(&v, p)
}

/// Mean time to take a checkpoint: snapshot start to durable for UNC/CIC,
/// full round duration for COOR.
pub fn avg_checkpoint_time(protocol: Protocol, raw: &MetricsRaw) -> Option<f64> {
    let durations: Vec<Ticks> = match protocol {
        Protocol::Coor => raw.rounds.iter().map(|r| r.duration()).collect(),
        _ => raw.checkpoints.iter().map(|c| c.durable - c.start).collect(),
    };
    if durations.is_empty() {
        return None;
    }
    Some(units(durations.iter().sum::<Ticks>()) / durations.len() as f64)
}

/// Time from detection until per-unit p50 latency is back within
/// `factor` of its pre-failure level and stays there.
///
/// The baseline is the median of the per-unit p50s between the warmup
/// end and the failure. Returns `None` without a baseline or if latency
/// never settles before the run ends.
pub fn recovery_time(
    series: &[LatencyBucket],
    warmup_end: Ticks,
    failure: Ticks,
    detect: Ticks,
    factor: f64,
) -> Option<f64> {
    let unit = |t: Ticks| t / TICKS_PER_UNIT;
    let mut before: Vec<f64> = series
        .iter()
        .filter(|b| b.second >= unit(warmup_end) && b.second < unit(failure))
        .filter_map(|b| b.p50)
        .collect();
    if before.is_empty() {
        before = series.iter().filter(|b| b.second < unit(failure)).filter_map(|b| b.p50).collect();
    }
    if before.is_empty() {
        return None;
    }
    before.sort_by(f64::total_cmp);
    let baseline = before[before.len() / 2];
    let after: Vec<&LatencyBucket> = series.iter().filter(|b| b.second > unit(detect)).collect();
    // first bucket from which every non-empty bucket is within bounds
    let mut settled = None;
    for (i, b) in after.iter().enumerate().rev() {
        match b.p50 {
            Some(p) if p > baseline * factor => break,
            Some(_) => settled = Some(i),
            None => {}
        }
    }
    let i = settled?;
    let at = after[i].second * TICKS_PER_UNIT;
    Some(units(at.saturating_sub(detect)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub failure_time: f64,
    pub restart_time: f64,
    pub recovery_time: Option<f64>,
    pub line: Vec<u64>,
    pub invalid: u64,
    pub discarded: u64,
    pub replayed: u64,
    pub to_initial: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub protocol: Protocol,
    pub trace_hash: String,
    pub latency: Vec<LatencyBucket>,
    /// Over sink outputs completing after the warmup.
    pub p50_latency: Option<f64>,
    pub p99_latency: Option<f64>,
    pub avg_checkpoint_time: Option<f64>,
    /// Mean over failures.
    pub restart_time: Option<f64>,
    pub recovery_time: Option<f64>,
    pub recoveries: Vec<RecoveryReport>,
    pub total_checkpoints: u64,
    pub invalid_checkpoints: u64,
    pub invalid_percent: f64,
    pub forced_checkpoints: u64,
    pub rounds_completed: u64,
    pub skipped_rounds: u64,
    pub abandoned_rounds: u64,
    pub bytes: ByteCounts,
    pub total_bytes: u64,
    /// Total bytes over the checkpoint-free total on the same workload.
    pub message_overhead_ratio: Option<f64>,
    pub data_messages: u64,
    pub replayed_messages: u64,
    pub duplicates_discarded: u64,
    pub blocked_time: f64,
    /// Source records taken up by their first downstream operator, per
    /// time unit after the warmup.
    pub throughput: f64,
    pub ingested: u64,
    pub mst: Option<f64>,
    pub mst_normalized: Option<f64>,
    pub end_time: f64,
}

pub struct ReportInputs {
    pub protocol: Protocol,
    pub horizon: f64,
    pub warmup_fraction: f64,
    pub recovery_factor: f64,
    /// Checkpoint-free total bytes on the same input.
    pub baseline_bytes: Option<u64>,
}

/// Mean per-unit count of a bucket series over `[from, to)` whole units.
pub fn bucket_rate(buckets: &[u64], from: Ticks, to: Ticks) -> f64 {
    let (a, b) = ((from / TICKS_PER_UNIT) as usize, (to / TICKS_PER_UNIT) as usize);
    if b <= a {
        return 0.0;
    }
    let n: u64 = (a..b).map(|i| buckets.get(i).copied().unwrap_or(0)).sum();
    n as f64 / (b - a) as f64
}

pub fn compute_report(out: &RunOutput, inp: &ReportInputs) -> MetricsReport {
    let raw = &out.raw;
    let horizon = streamckpt_core::ticks(inp.horizon);
    let warmup_end = streamckpt_core::ticks(inp.horizon * inp.warmup_fraction);
    let series = latency_series(&raw.latencies, raw.end_time);
    let recoveries: Vec<RecoveryReport> = raw
        .recoveries
        .iter()
        .map(|r| RecoveryReport {
            failure_time: units(r.failure_time),
            restart_time: units(r.restart_time()),
            recovery_time: recovery_time(&series, warmup_end, r.failure_time, r.detect_time, inp.recovery_factor),
            line: r.line.clone(),
            invalid: r.invalid,
            discarded: r.discarded,
            replayed: r.replayed,
            to_initial: r.to_initial,
        })
        .collect();
    let mean = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let restart_time = mean(recoveries.iter().map(|r| r.restart_time).collect());
    let recovery = mean(recoveries.iter().filter_map(|r| r.recovery_time).collect());
    let total = raw.total_checkpoints();
    let invalid = raw.invalid_checkpoints();
    let total_bytes = raw.bytes.total();
    MetricsReport {
        protocol: inp.protocol,
        trace_hash: format!("{:016x}", out.trace_hash),
        p50_latency: window_percentile(&raw.latencies, warmup_end, Ticks::MAX, 50.0).map(units),
        p99_latency: window_percentile(&raw.latencies, warmup_end, Ticks::MAX, 99.0).map(units),
        latency: series,
        avg_checkpoint_time: avg_checkpoint_time(inp.protocol, raw),
        restart_time,
        recovery_time: recovery,
        recoveries,
        total_checkpoints: total,
        invalid_checkpoints: invalid,
        invalid_percent: if total == 0 { 0.0 } else { 100.0 * invalid as f64 / total as f64 },
        forced_checkpoints: raw.forced_checkpoints,
        rounds_completed: raw.rounds.len() as u64,
        skipped_rounds: raw.skipped_rounds,
        abandoned_rounds: raw.abandoned_rounds,
        bytes: raw.bytes,
        total_bytes,
        message_overhead_ratio: inp.baseline_bytes.filter(|&b| b > 0).map(|b| total_bytes as f64 / b as f64),
        data_messages: raw.data_messages,
        replayed_messages: raw.replayed_messages,
        duplicates_discarded: raw.duplicates_discarded,
        blocked_time: units(raw.blocked_time.iter().sum()),
        throughput: bucket_rate(&raw.processed, warmup_end, horizon),
        ingested: raw.ingested.iter().sum(),
        mst: None,
        mst_normalized: None,
        end_time: units(raw.end_time),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_latencies() {
        let v = vec![5; 40];
        assert_eq!(nearest_rank(&v, 50.0), Some(5));
        assert_eq!(nearest_rank(&v, 99.0), Some(5));
    }

    #[test]
    fn one_to_hundred() {
        let v: Vec<Ticks> = (1..=100).collect();
        assert_eq!(nearest_rank(&v, 50.0), Some(50));
        assert_eq!(nearest_rank(&v, 99.0), Some(99));
        assert_eq!(nearest_rank(&v, 100.0), Some(100));
        assert_eq!(nearest_rank(&[], 50.0), None);
    }

    #[test]
    fn series_buckets_by_completion_and_marks_gaps() {
        let u = TICKS_PER_UNIT;
        let samples = vec![(10, 3 * u), (u / 2, u), (2 * u + 1, 2 * u)];
        let s = latency_series(&samples, 2 * u + 5);
        assert_eq!(s.len(), 3);
        assert_eq!((s[0].count, s[0].p50, s[0].p99), (2, Some(1.0), Some(3.0)));
        assert_eq!((s[1].count, s[1].p50), (0, None));
        assert_eq!(s[2].p50, Some(2.0));
    }

    fn bucket(second: u64, p50: Option<f64>) -> LatencyBucket {
        LatencyBucket { second, count: p50.map_or(0, |_| 1), p50, p99: p50 }
    }

    #[test]
    fn recovery_waits_for_latency_to_settle() {
        let u = TICKS_PER_UNIT;
        let lat = [1.0, 1.0, 1.0, 1.0, 9.0, 6.0, 1.2, 3.0, 1.1, 1.0, 1.0];
        let mut series: Vec<LatencyBucket> = lat.iter().enumerate().map(|(i, &p)| bucket(i as u64, Some(p))).collect();
        series[9] = bucket(9, None);
        // failure and detection at 4.0: the spike at 7 delays recovery to 8
        assert_eq!(recovery_time(&series, 0, 4 * u, 4 * u, 1.5), Some(4.0));
        // never settles if the last bucket is still high
        series.push(bucket(11, Some(5.0)));
        assert_eq!(recovery_time(&series, 0, 4 * u, 4 * u, 1.5), None);
    }
}
