//! Synthetic traces of a predecessor server and its clients.

use std::fmt;
use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::event::Event;
use crate::value::Value;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub clients: usize,
    pub requests_per_client: usize,
    /// Probability that a response is wrong.
    pub error_rate: f64,
    /// Append `end ! done` after the last response.
    pub end_event: bool,
    pub seed: u64,
    /// Request values are drawn uniformly from this range.
    pub values: RangeInclusive<u32>,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec { clients: 1, requests_per_client: 1, error_rate: 0.0, end_event: false, seed: 0, values: 0..=9 }
    }
}

impl WorkloadSpec {
    /// A workload with `rounds` request/response pairs spread over `clients`.
    pub fn rounds(rounds: usize, clients: usize, seed: u64) -> Self {
        let clients = clients.max(1);
        assert!(rounds.is_multiple_of(clients), "rounds must divide evenly among clients");
        WorkloadSpec { clients, requests_per_client: rounds / clients, seed, ..Self::default() }
    }

    pub fn total_events(&self) -> usize {
        2 * self.clients * self.requests_per_client + usize::from(self.end_event && self.clients * self.requests_per_client > 0)
    }
}

impl fmt::Display for WorkloadSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "clients={} requests={} error_rate={} end={} seed={} values={}..={}",
            self.clients,
            self.requests_per_client,
            self.error_rate,
            self.end_event,
            self.seed,
            self.values.start(),
            self.values.end()
        )
    }
}

fn client(k: usize) -> Value {
    Value::atom(&format!("c{k}"))
}

/// Generates the trace, numbering events from 1. Requests and responses of
/// one exchange are adjacent; which client goes next is chosen at random.
pub fn gen_workload(w: &WorkloadSpec) -> Vec<Event> {
    let mut rng = ChaCha8Rng::seed_from_u64(w.seed);
    let mut remaining: Vec<(usize, usize)> = (1..=w.clients).map(|k| (k, w.requests_per_client)).filter(|(_, r)| *r > 0).collect();
    let mut out = Vec::with_capacity(w.total_events());
    let srv = Value::atom("srv");
    let err = Value::atom("err");
    while !remaining.is_empty() {
        let slot = rng.gen_range(0..remaining.len());
        let k = remaining[slot].0;
        remaining[slot].1 -= 1;
        if remaining[slot].1 == 0 {
            remaining.swap_remove(slot);
        }
        let n = i64::from(rng.gen_range(w.values.clone()));
        let me = client(k);
        out.push(Event::input(srv.clone(), Value::tuple([Value::int(n), me.clone()]), out.len() as u64 + 1));
        let wrong = rng.gen_bool(w.error_rate.clamp(0.0, 1.0));
        let index = out.len() as u64 + 1;
        let response = match (n, wrong) {
            (0, false) => Event::output(err.clone(), me, index),
            (0, true) => {
                let other = if w.clients > 1 { (k % w.clients) + 1 } else { k + 1 };
                Event::output(err.clone(), client(other), index)
            }
            (n, false) => Event::output(me, Value::int(n - 1), index),
            (n, true) if rng.gen_bool(0.5) => Event::output(me, Value::int(n), index),
            (_, true) => Event::output(err.clone(), me, index),
        };
        out.push(response);
    }
    if w.end_event && !out.is_empty() {
        out.push(Event::output(Value::atom("end"), Value::atom("done"), out.len() as u64 + 1));
    }
    out
}
