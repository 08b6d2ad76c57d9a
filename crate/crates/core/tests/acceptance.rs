//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shmlmon_core::harness::{gen_workload, WorkloadSpec};
use shmlmon_core::runtime::state::{
    step_pure, CombinatorState, Effect, HubPhase, HubState, MergePhase, MergingChildState,
};
use shmlmon_core::runtime::{Envelope, MessageKind, ProcessId, ProtocolMessage};
use shmlmon_core::{
    deploy, oracle_verdict, parse_trace, run_trace, synthesize, Event, Mode, Outcome, PlanStats, SchedulerConfig,
    Value, Verdict,
};

use common::{predecessor, random_formula, random_trace};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, why: impl FnOnce() -> String) -> Result<(), String> {
    if ok { Ok(()) } else { Err(why()) }
}

const EXCHANGE_TRACE: &str = "srv ? {5,c1}\nc1 ! 4\nsrv ? {3,c2}\n";

fn replication_counts() -> Check {
    let start = Instant::now();
    let trace = parse_trace(EXCHANGE_TRACE).unwrap();
    let mut seen = Vec::new();
    for (mode, want) in [(Mode::Baseline, 4), (Mode::Multi, 3), (Mode::Reconf, 3)] {
        let report = run_trace(&synthesize(&predecessor(), mode).unwrap(), &trace, &SchedulerConfig::sim(0))
            .map_err(|e| e.to_string())?;
        let got = report.metrics.per_event_forwards[1];
        ensure(got == want, || format!("{mode}: event 2 forwarded {got} times, expected {want}"))?;
        seen.push(format!("{mode}={got}"));
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("{} in {elapsed:?}", seen.join(" ")))
}

fn topology_counts() -> Check {
    let trace = parse_trace(EXCHANGE_TRACE).unwrap();
    let mut seen = Vec::new();
    for (mode, hubs) in [(Mode::Baseline, 2), (Mode::Multi, 1), (Mode::Reconf, 1)] {
        let mut h = deploy(&synthesize(&predecessor(), mode).unwrap(), &SchedulerConfig::sim(0)).map_err(|e| e.to_string())?;
        h.offer_event(&trace[0]).map_err(|e| e.to_string())?;
        let s = h.topology().map_err(|e| e.to_string())?.stats();
        ensure((s.hubs, s.leaves) == (hubs, 3), || format!("{mode}: {} hubs and {} leaves after event 1", s.hubs, s.leaves))?;
        seen.push(format!("{mode}={}h+{}l", s.hubs, s.leaves));
    }
    let report = run_trace(&synthesize(&predecessor(), Mode::Reconf).unwrap(), &trace, &SchedulerConfig::sim(0))
        .map_err(|e| e.to_string())?;
    let t = &report.topology;
    ensure(t.is_spider() && t.stats() == PlanStats { hubs: 1, leaves: 3, depth: 2 }, || {
        format!("final reconf network is not the expected spider:\n{t}")
    })?;
    Ok(format!("{}, reconf ends as a spider", seen.join(" ")))
}

fn expected_outcome(f: &shmlmon_core::WellFormedFormula, trace: &[Event]) -> Outcome {
    match oracle_verdict(f, trace) {
        Ok(v) => Outcome::Verdict(v),
        Err(e) => Outcome::EvalFault { index: e.index, error: e.source },
    }
}

fn oracle_equivalence() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut runs, mut violations, mut faults) = (0u64, 0u64, 0u64);
    for _ in 0..1000 {
        let f = random_formula(&mut rng, 5);
        for _ in 0..2 {
            let trace = random_trace(&mut rng, 20);
            let want = expected_outcome(&f, &trace);
            match want {
                Outcome::Verdict(Verdict::Violation(_)) => violations += 1,
                Outcome::EvalFault { .. } => faults += 1,
                _ => {}
            }
            for mode in Mode::ALL {
                let plan = match synthesize(&f, mode) {
                    Ok(p) => p,
                    Err(e) => {
                        ensure(matches!(&want, Outcome::EvalFault { index: 0, error } if *error == e), || {
                            format!("{mode}: synthesis of {} failed with {e} but oracle says {want:?}", f.formula())
                        })?;
                        continue;
                    }
                };
                for seed in 0..10 {
                    // Odd seeds interleave injection with processing.
                    let config = if seed % 2 == 0 { SchedulerConfig::sim(seed) } else { SchedulerConfig::sim(seed).eager(4) };
                    let got = run_trace(&plan, &trace, &config).map_err(|e| e.to_string())?.outcome;
                    runs += 1;
                    ensure(got == want, || {
                        format!("{mode} seed {seed}: {got:?} vs oracle {want:?}\nformula {}\ntrace {trace:?}", f.formula())
                    })?;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
    Ok(format!("{runs} runs agree ({violations} violating and {faults} faulting traces of 2000) in {elapsed:?}"))
}

fn no_loss_under_merges() -> Check {
    let plan = synthesize(&predecessor(), Mode::Reconf).unwrap();
    let (mut logs, mut merges) = (0usize, 0u64);
    for seed in 0..10 {
        let trace = gen_workload(&WorkloadSpec::rounds(100, 10, seed));
        let last = trace.len() as u64;
        let config = SchedulerConfig::sim(seed).eager(8).recording();
        let report = run_trace(&plan, &trace, &config).map_err(|e| e.to_string())?;
        ensure(report.outcome == Outcome::Verdict(Verdict::NoViolation), || format!("seed {seed}: {:?}", report.outcome))?;
        // The first request turns the root itself into a hub; every later one merges.
        ensure(report.metrics.merges_completed == 99, || format!("seed {seed}: {} merges", report.metrics.merges_completed))?;
        for log in &report.deliveries {
            ensure(log.is_contiguous(last), || format!("seed {seed}: {log:?}"))?;
        }
        logs += report.deliveries.len();
        merges += report.metrics.merges_completed;
    }
    Ok(format!("{logs} delivery logs contiguous across {merges} merges"))
}

fn scaling() -> Check {
    let start = Instant::now();
    let mut seen = Vec::new();
    for rounds in [50usize, 500, 5000] {
        let trace = gen_workload(&WorkloadSpec::rounds(rounds, 10, 1));
        let r = rounds as u64;
        let mut metrics = Vec::new();
        for mode in Mode::ALL {
            let report =
                run_trace(&synthesize(&predecessor(), mode).unwrap(), &trace, &SchedulerConfig::sim(1)).map_err(|e| e.to_string())?;
            metrics.push(report.metrics);
        }
        let [base, multi, reconf] = &metrics[..] else { unreachable!() };
        ensure(base.spawned == 1 + 4 * r && base.hubs_created >= 2 * r, || {
            format!("{rounds} rounds: baseline spawned {} hubs {}", base.spawned, base.hubs_created)
        })?;
        ensure(reconf.peak_live <= 1 + reconf.peak_leaves, || {
            format!("{rounds} rounds: reconf peak_live {} peak_leaves {}", reconf.peak_live, reconf.peak_leaves)
        })?;
        ensure(reconf.forwards <= multi.forwards && multi.forwards <= base.forwards, || {
            format!("{rounds} rounds: forwards {} / {} / {}", base.forwards, multi.forwards, reconf.forwards)
        })?;
        seen.push(format!("{}ev fwd {}/{}/{}", trace.len(), base.forwards, multi.forwards, reconf.forwards));
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("{} in {elapsed:?}", seen.join(", ")))
}

fn threads_smoke() -> Check {
    let trace = gen_workload(&WorkloadSpec::rounds(5000, 10, 1));
    let config = SchedulerConfig::threads(4).with_timeout(Duration::from_secs(60));
    let mut latency = Vec::new();
    let mut walls = Vec::new();
    for mode in [Mode::Multi, Mode::Reconf] {
        let start = Instant::now();
        let report = run_trace(&synthesize(&predecessor(), mode).unwrap(), &trace, &config).map_err(|e| e.to_string())?;
        walls.push(start.elapsed());
        ensure(report.outcome == Outcome::Verdict(Verdict::NoViolation), || format!("{mode}: {:?}", report.outcome))?;
        latency.push(report.metrics.mean_latency().ok_or("no latency samples")?);
    }
    ensure(latency[1] <= latency[0] * 2, || format!("reconf mean latency {:?} vs multi {:?}", latency[1], latency[0]))?;
    Ok(format!(
        "multi {:?} wall, {:?}/event; reconf {:?} wall, {:?}/event",
        walls[0], latency[0], walls[1], latency[1]
    ))
}

// Process ids used by the conformance table.
const ME: ProcessId = ProcessId(10);
const PARENT: ProcessId = ProcessId(1);
const STRANGER: ProcessId = ProcessId(9);

fn p(n: u32) -> ProcessId {
    ProcessId(n)
}

fn ev(index: u64) -> ProtocolMessage {
    ProtocolMessage::Ev(Arc::new(Event::output(Value::atom("a"), Value::int(1), index)))
}

fn send(to: u32, msg: ProtocolMessage) -> Effect {
    Effect::Send(p(to), msg)
}

type Row<'a> = dyn FnMut(&'static str, &CombinatorState, Option<ProcessId>, ProtocolMessage, Expect) + 'a;

#[allow(clippy::large_enum_variant)]
enum Expect {
    Fault,
    Becomes(CombinatorState, Vec<Effect>),
}

struct Case {
    phase: &'static str,
    state: CombinatorState,
    from: Option<ProcessId>,
    msg: ProtocolMessage,
    expect: Expect,
}

fn hub(children: &[u32], phase: HubPhase, buffer: Vec<ProtocolMessage>, deferred: Vec<Envelope>) -> HubState {
    HubState {
        children: children.iter().copied().map(p).collect(),
        phase,
        event_buffer: buffer.into(),
        deferred: deferred.into(),
        parent: None,
        depth: 0,
    }
}

fn merging(former: &[u32], phase: MergePhase, pending: Vec<ProtocolMessage>) -> MergingChildState {
    MergingChildState { former_children: former.iter().copied().map(p).collect(), parent: PARENT, phase, pending, depth: 1 }
}

// The protocol table, one row per phase and message kind. Rows for
// messages that are only valid from one sender also list a stranger.
fn conformance_table() -> Vec<Case> {
    use CombinatorState as S;
    use ProtocolMessage as M;
    let mut cases = Vec::new();
    let mut row = |phase: &'static str, state: &S, from: Option<ProcessId>, msg: M, expect: Expect| {
        cases.push(Case { phase, state: state.clone(), from, msg, expect })
    };
    let adopted = || M::Adopted { parent: PARENT, depth: 1 };
    let faults = |row: &mut Row<'_>, phase: &'static str, state: &S, msgs: Vec<M>| {
        for m in msgs {
            row(phase, state, Some(STRANGER), m, Expect::Fault);
        }
    };

    // Hub, normal operation.
    let n = "hub/normal";
    let base = hub(&[2, 3], HubPhase::Normal, vec![], vec![]);
    let s = S::Hub(base.clone());
    row(n, &s, None, ev(5), Expect::Becomes(s.clone(), vec![send(2, ev(5)), send(3, ev(5))]));
    row(n, &s, None, M::EndOfTrace, Expect::Becomes(S::Halted, vec![send(2, M::EndOfTrace), send(3, M::EndOfTrace)]));
    let awaiting = S::Hub(HubState { phase: HubPhase::AwaitingMergeMsg(p(2)), ..base.clone() });
    row(n, &s, Some(p(2)), M::MergeRequest(p(2)), Expect::Becomes(awaiting, vec![send(2, M::MergeAck)]));
    row(n, &s, Some(STRANGER), M::MergeRequest(STRANGER), Expect::Fault);
    row(n, &s, Some(p(2)), M::Terminated(p(2)), Expect::Becomes(S::Hub(HubState { children: vec![p(3)], ..base.clone() }), vec![]));
    let last = S::Hub(hub(&[3], HubPhase::Normal, vec![], vec![]));
    row(n, &last, Some(p(3)), M::Terminated(p(3)), Expect::Becomes(S::Halted, vec![]));
    row(n, &s, Some(STRANGER), M::Terminated(STRANGER), Expect::Fault);
    let moved = S::Hub(HubState { parent: Some(PARENT), depth: 1, ..base.clone() });
    let relabel = M::Adopted { parent: ME, depth: 2 };
    row(n, &s, Some(PARENT), adopted(), Expect::Becomes(moved, vec![send(2, relabel.clone()), send(3, relabel.clone())]));
    faults(&mut row, n, &s, vec![M::MergeAck, M::MergeMsg(vec![p(20)]), M::MergeFinal, M::MergeComplete, M::ViolationReport(5)]);

    // Hub, waiting for the merging child's children.
    let n = "hub/awaiting-merge-msg";
    let base = hub(&[2, 3], HubPhase::AwaitingMergeMsg(p(2)), vec![], vec![]);
    let s = S::Hub(base.clone());
    row(n, &s, None, ev(5), Expect::Becomes(S::Hub(HubState { event_buffer: vec![ev(5)].into(), ..base.clone() }), vec![]));
    row(n, &s, None, M::EndOfTrace, Expect::Fault);
    for m in [M::MergeRequest(p(3)), M::Terminated(p(3))] {
        let held = S::Hub(HubState { deferred: vec![Envelope { from: Some(p(3)), msg: m.clone() }].into(), ..base.clone() });
        row(n, &s, Some(p(3)), m, Expect::Becomes(held, vec![]));
    }
    let spliced = S::Hub(HubState { children: vec![p(20), p(21), p(3)], phase: HubPhase::AwaitingComplete(p(2)), ..base.clone() });
    let welcome = M::Adopted { parent: ME, depth: 1 };
    row(
        n,
        &s,
        Some(p(2)),
        M::MergeMsg(vec![p(20), p(21)]),
        Expect::Becomes(spliced, vec![send(2, M::MergeFinal), send(20, welcome.clone()), send(21, welcome.clone())]),
    );
    row(n, &s, Some(p(3)), M::MergeMsg(vec![p(20)]), Expect::Fault);
    let moved = S::Hub(HubState { parent: Some(PARENT), depth: 1, ..base.clone() });
    row(n, &s, Some(PARENT), adopted(), Expect::Becomes(moved, vec![send(2, relabel.clone()), send(3, relabel.clone())]));
    faults(&mut row, n, &s, vec![M::MergeAck, M::MergeFinal, M::MergeComplete, M::ViolationReport(5)]);

    // Hub, children adopted, waiting for the merge to finish.
    let n = "hub/awaiting-complete";
    let held = Envelope { from: Some(p(3)), msg: M::Terminated(p(3)) };
    let base = hub(&[20, 21, 3], HubPhase::AwaitingComplete(p(2)), vec![ev(4)], vec![held.clone()]);
    let s = S::Hub(base.clone());
    row(n, &s, None, ev(5), Expect::Becomes(S::Hub(HubState { event_buffer: vec![ev(4), ev(5)].into(), ..base.clone() }), vec![]));
    row(n, &s, None, M::EndOfTrace, Expect::Fault);
    for m in [M::MergeRequest(p(20)), M::Terminated(p(20))] {
        let more = vec![held.clone(), Envelope { from: Some(p(20)), msg: m.clone() }];
        row(n, &s, Some(p(20)), m, Expect::Becomes(S::Hub(HubState { deferred: more.into(), ..base.clone() }), vec![]));
    }
    let done = S::Hub(hub(&[20, 21], HubPhase::Normal, vec![], vec![]));
    row(n, &s, Some(p(2)), M::MergeComplete, Expect::Becomes(done, vec![send(20, ev(4)), send(21, ev(4)), send(3, ev(4))]));
    row(n, &s, Some(p(3)), M::MergeComplete, Expect::Fault);
    row(n, &s, Some(p(2)), M::MergeMsg(vec![p(22)]), Expect::Fault);
    let moved = S::Hub(HubState { parent: Some(PARENT), depth: 1, ..base.clone() });
    let fan = [20, 21, 3].map(|c| send(c, relabel.clone())).to_vec();
    row(n, &s, Some(PARENT), adopted(), Expect::Becomes(moved, fan));
    faults(&mut row, n, &s, vec![M::MergeAck, M::MergeFinal, M::ViolationReport(5)]);

    // Merging child, merge requested.
    let n = "merging/await-ack";
    let base = merging(&[4, 5], MergePhase::AwaitAck, vec![]);
    let s = S::MergingChild(base.clone());
    row(n, &s, Some(PARENT), ev(5), Expect::Becomes(s.clone(), vec![send(4, ev(5)), send(5, ev(5))]));
    row(n, &s, Some(PARENT), M::EndOfTrace, Expect::Fault);
    let queued = S::MergingChild(MergingChildState { pending: vec![M::MergeRequest(p(4))], ..base.clone() });
    row(n, &s, Some(p(4)), M::MergeRequest(p(4)), Expect::Becomes(queued, vec![]));
    let fewer = S::MergingChild(MergingChildState { former_children: vec![p(5)], ..base.clone() });
    row(n, &s, Some(p(4)), M::Terminated(p(4)), Expect::Becomes(fewer, vec![]));
    row(n, &s, Some(STRANGER), M::Terminated(STRANGER), Expect::Fault);
    let handed = S::MergingChild(MergingChildState { former_children: vec![], phase: MergePhase::AwaitFinal, ..base.clone() });
    row(n, &s, Some(PARENT), M::MergeAck, Expect::Becomes(handed, vec![send(1, M::MergeMsg(vec![p(4), p(5)]))]));
    row(n, &s, Some(STRANGER), M::MergeAck, Expect::Fault);
    let same_depth = S::MergingChild(MergingChildState { parent: p(7), ..base.clone() });
    row(n, &s, Some(p(7)), M::Adopted { parent: p(7), depth: 1 }, Expect::Becomes(same_depth, vec![]));
    let deeper = S::MergingChild(MergingChildState { parent: p(7), depth: 2, ..base.clone() });
    let relabel3 = M::Adopted { parent: ME, depth: 3 };
    row(
        n,
        &s,
        Some(p(7)),
        M::Adopted { parent: p(7), depth: 2 },
        Expect::Becomes(deeper, vec![send(4, relabel3.clone()), send(5, relabel3)]),
    );
    faults(&mut row, n, &s, vec![M::MergeMsg(vec![p(20)]), M::MergeFinal, M::MergeComplete, M::ViolationReport(5)]);

    // Merging child, children handed over.
    let n = "merging/await-final";
    let base = merging(&[], MergePhase::AwaitFinal, vec![M::MergeRequest(p(4))]);
    let s = S::MergingChild(base.clone());
    row(n, &s, Some(PARENT), ev(5), Expect::Fault);
    row(n, &s, Some(PARENT), M::EndOfTrace, Expect::Fault);
    for m in [M::MergeRequest(p(5)), M::Terminated(p(5))] {
        let queued = S::MergingChild(MergingChildState { pending: vec![M::MergeRequest(p(4)), m.clone()], ..base.clone() });
        row(n, &s, Some(p(5)), m, Expect::Becomes(queued, vec![]));
    }
    row(
        n,
        &s,
        Some(PARENT),
        M::MergeFinal,
        Expect::Becomes(S::Merged { into: PARENT }, vec![send(1, M::MergeRequest(p(4))), send(1, M::MergeComplete)]),
    );
    row(n, &s, Some(STRANGER), M::MergeFinal, Expect::Fault);
    faults(&mut row, n, &s, vec![M::MergeAck, M::MergeMsg(vec![p(20)]), M::MergeComplete, M::ViolationReport(5), adopted()]);

    // Former merging child, relaying stragglers.
    let n = "merged";
    let s = S::Merged { into: PARENT };
    for m in [M::MergeRequest(p(4)), M::Terminated(p(4))] {
        row(n, &s, Some(p(4)), m.clone(), Expect::Becomes(s.clone(), vec![Effect::Send(PARENT, m)]));
    }
    faults(
        &mut row,
        n,
        &s,
        vec![ev(5), M::EndOfTrace, M::MergeAck, M::MergeMsg(vec![]), M::MergeFinal, M::MergeComplete, M::ViolationReport(5), adopted()],
    );
    cases
}

fn protocol_conformance() -> Check {
    let start = Instant::now();
    let cases = conformance_table();
    let mut phases: Vec<&str> = cases.iter().map(|c| c.phase).collect();
    phases.dedup();
    for phase in &phases {
        for kind in MessageKind::ALL {
            ensure(cases.iter().any(|c| c.phase == *phase && c.msg.kind() == kind), || format!("no row for {kind:?} in {phase}"))?;
        }
    }
    for c in &cases {
        ensure(c.state.phase_name() == c.phase, || format!("row labelled {} holds {}", c.phase, c.state.phase_name()))?;
        let (next, effects) = step_pure(&c.state, ME, Mode::Reconf, c.from, c.msg.clone(), 100);
        let what = || format!("{} <- {:?} from {:?}", c.phase, c.msg, c.from);
        match &c.expect {
            Expect::Fault => {
                let faulted = matches!(&effects[..], [Effect::ProtocolFault(f)] if f.process == ME);
                ensure(faulted && next == c.state, || format!("{}: expected a fault, got {effects:?}", what()))?;
            }
            Expect::Becomes(state, sends) => {
                ensure(next == *state && effects == *sends, || format!("{}: got {next:?} with {effects:?}", what()))?;
                ensure(next != c.state || !effects.is_empty(), || format!("{}: silently dropped", what()))?;
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("{} transitions over {} phases x {} kinds", cases.len(), phases.len(), MessageKind::ALL.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("replication counts", replication_counts),
        ("topology counts", topology_counts),
        ("oracle equivalence", oracle_equivalence),
        ("no loss or reordering under merges", no_loss_under_merges),
        ("chain versus spider scaling", scaling),
        ("threads backend smoke benchmark", threads_smoke),
        ("protocol conformance", protocol_conformance),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {why}", i + 1);
            }
        }
    }
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
