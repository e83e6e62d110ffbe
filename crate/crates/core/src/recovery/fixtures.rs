//! Hand-built executions used by tests and the `oracle` command.

use super::ExecutionHistory;

enum Step {
    Send(usize, u64),
    Recv(usize, u64),
    Ckpt(usize, u64),
}

fn from_timeline(instances: usize, channels: Vec<(usize, usize)>, mut timeline: Vec<(u32, Step)>) -> ExecutionHistory {
    timeline.sort_by_key(|(t, _)| *t);
    let mut h = ExecutionHistory::new(instances, channels);
    for (_, step) in timeline {
        match step {
            Step::Send(c, s) => h.send(c, s),
            Step::Recv(c, s) => h.receive(c, s),
            Step::Ckpt(o, i) => h.checkpoint(o, i),
        }
    }
    h
}

/// Three operators on a cycle (op1 -> op2 -> op3 -> op1, one instance
/// each; instance k-1 is op k). Checkpoints and messages are placed so
/// that every newer combination contains an orphan and the only usable
/// line is the first checkpoint of every operator.
///
/// Checkpoints: op1 at 10, 30, 50; op2 at 12, 32, 48; op3 at 14, 40.
/// Messages (send -> receive): m2 op1 15 -> op2 20, m1 op1 16 -> op2 22,
/// m3 op3 18 -> op1 25, m5 op2 34 -> op3 38, m4 op1 35 -> op2 45,
/// m6 op3 42 -> op1 47.
pub fn domino_fixture() -> ExecutionHistory {
    use Step::*;
    // channel 0: op1 -> op2, 1: op2 -> op3, 2: op3 -> op1
    let timeline = vec![
        (10, Ckpt(0, 1)),
        (12, Ckpt(1, 1)),
        (14, Ckpt(2, 1)),
        (15, Send(0, 1)),
        (16, Send(0, 2)),
        (18, Send(2, 1)),
        (20, Recv(0, 1)),
        (22, Recv(0, 2)),
        (25, Recv(2, 1)),
        (30, Ckpt(0, 2)),
        (32, Ckpt(1, 2)),
        (34, Send(1, 1)),
        (35, Send(0, 3)),
        (38, Recv(1, 1)),
        (40, Ckpt(2, 2)),
        (42, Send(2, 2)),
        (45, Recv(0, 3)),
        (47, Recv(2, 2)),
        (48, Ckpt(1, 3)),
        (50, Ckpt(0, 3)),
    ];
    from_timeline(3, vec![(0, 1), (1, 2), (2, 0)], timeline)
}

/// A four-round walk of rollback propagation over three instances A, B, C
/// (channels A -> B, B -> C, C -> A):
///
/// * A checkpoints at 1, 8, 11; B at 4, 12; C at 7 only.
/// * a1: A 2 -> B 3, b1: B 5 -> C 6, c1: C 9 -> A 10, a2: A 9.5 -> B 11.5.
///
/// From (A3, B2, C1): c1 makes A3 reachable from C1, so A drops to A2;
/// a2 then makes B2 reachable from A2, so B drops to B1; b1 makes C1
/// reachable from B1, so C drops to its initial checkpoint. The final line
/// is (2, 1, 0).
pub fn walkthrough_fixture() -> ExecutionHistory {
    use Step::*;
    // times are scaled by 10 to keep them integral
    let timeline = vec![
        (10, Ckpt(0, 1)),
        (20, Send(0, 1)),
        (30, Recv(0, 1)),
        (40, Ckpt(1, 1)),
        (50, Send(1, 1)),
        (60, Recv(1, 1)),
        (70, Ckpt(2, 1)),
        (80, Ckpt(0, 2)),
        (90, Send(2, 1)),
        (95, Send(0, 2)),
        (100, Recv(2, 1)),
        (110, Ckpt(0, 3)),
        (115, Recv(0, 2)),
        (120, Ckpt(1, 2)),
    ];
    from_timeline(3, vec![(0, 1), (1, 2), (2, 0)], timeline)
}
