//! The greedy flip algorithm: start from a minimum-cost matching and scan
//! the edges once by non-decreasing weight, flipping every edge that is
//! alpha-unstable at the moment it is considered.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashSet};

use rayon::slice::ParallelSliceMut;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instances::{canonical, check_alpha, Edge, MetricInstance, Vertex};
use crate::matchings::{is_unstable, PerfectMatching};

pub const EDGE_ORDER: &str = "(weight,min,max) ascending";

/// Sort key of an edge: weight first, then endpoints. Total, so the scan
/// order is fully determined by the instance.
#[derive(Clone, Copy, Debug)]
pub struct EdgeKey {
    pub weight: f64,
    pub u: u32,
    pub v: u32,
}

impl EdgeKey {
    pub fn of(instance: &MetricInstance, (u, v): Edge) -> Self {
        Self { weight: instance.weight(u, v), u: u as u32, v: v as u32 }
    }

    pub fn edge(&self) -> Edge {
        (self.u as usize, self.v as usize)
    }
}

impl PartialEq for EdgeKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for EdgeKey {}

impl PartialOrd for EdgeKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for EdgeKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.weight.total_cmp(&other.weight).then(self.u.cmp(&other.u)).then(self.v.cmp(&other.v))
    }
}

/// All edges of the instance in scan order.
pub fn sorted_edges(instance: &MetricInstance) -> Vec<EdgeKey> {
    // weights are positive, so their bit patterns sort like the values and
    // the whole key packs into one integer
    let mut packed: Vec<u128> = instance
        .edges()
        .map(|(u, v)| (u128::from(instance.weight(u, v).to_bits()) << 64) | ((u as u128) << 32) | v as u128)
        .collect();
    packed.par_sort_unstable();
    packed
        .into_iter()
        .map(|p| EdgeKey { weight: f64::from_bits((p >> 64) as u64), u: (p >> 32) as u32, v: p as u32 })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlipEvent {
    /// Position of the flipped edge in the sorted edge list.
    pub iteration: usize,
    pub flipped: Edge,
    /// `(u, M(u))` and `(v, M(v))` for `flipped = (u, v)`.
    pub removed: [Edge; 2],
    /// `(M(u), M(v))`.
    pub created: Edge,
    pub w_flipped: f64,
    pub w_removed: [f64; 2],
    pub w_created: f64,
}

#[derive(Clone, Debug)]
pub struct FlipTrace {
    pub instance: MetricInstance,
    pub alpha: f64,
    pub initial: PerfectMatching,
    pub events: Vec<FlipEvent>,
    pub final_matching: PerfectMatching,
}

impl FlipTrace {
    pub fn flips(&self) -> usize {
        self.events.len()
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct EventRepr {
            i: usize,
            flip: [Vertex; 2],
            removed: [[Vertex; 2]; 2],
            created: [Vertex; 2],
        }
        #[derive(Serialize)]
        struct TraceRepr<'a> {
            alpha: f64,
            edge_order: &'static str,
            events: Vec<EventRepr>,
            #[serde(rename = "final")]
            final_matching: &'a PerfectMatching,
        }
        let pair = |(a, b): Edge| [a, b];
        let repr = TraceRepr {
            alpha: self.alpha,
            edge_order: EDGE_ORDER,
            events: self
                .events
                .iter()
                .map(|e| EventRepr {
                    i: e.iteration,
                    flip: pair(e.flipped),
                    removed: [pair(e.removed[0]), pair(e.removed[1])],
                    created: pair(e.created),
                })
                .collect(),
            final_matching: &self.final_matching,
        };
        serde_json::to_string(&repr).expect("trace serialization is infallible")
    }
}

/// Runs greedy from `optimal` and returns the alpha-stable result together
/// with the full flip trace. The output is checked for stability before
/// returning.
pub fn run_greedy(
    instance: &MetricInstance,
    optimal: &PerfectMatching,
    alpha: f64,
) -> Result<(PerfectMatching, FlipTrace)> {
    check_alpha(alpha)?;
    optimal.validate_for(instance)?;
    let mut m = optimal.clone();
    let mut events = Vec::new();
    for (iteration, key) in sorted_edges(instance).iter().enumerate() {
        let (u, v) = key.edge();
        if !is_unstable(instance, &m, alpha, u, v) {
            continue;
        }
        let (mu, mv) = (m.partner(u), m.partner(v));
        events.push(FlipEvent {
            iteration,
            flipped: (u, v),
            removed: [canonical(u, mu), canonical(v, mv)],
            created: canonical(mu, mv),
            w_flipped: key.weight,
            w_removed: [instance.weight(u, mu), instance.weight(v, mv)],
            w_created: instance.weight(mu, mv),
        });
        m.flip(u, v);
    }
    if let Some((u, v)) = instance.edges().find(|&(u, v)| is_unstable(instance, &m, alpha, u, v)) {
        return Err(Error::InternalInstability { u, v });
    }
    let trace = FlipTrace { instance: instance.clone(), alpha, initial: optimal.clone(), events, final_matching: m.clone() };
    Ok((m, trace))
}

/// Applies one event to `m`, checking that it matches the current state.
pub(crate) fn apply_event(m: &mut PerfectMatching, event: &FlipEvent, index: usize) -> Result<()> {
    let fail = |reason: String| Error::InconsistentTrace { event: index, reason };
    let (u, v) = event.flipped;
    if u >= m.num_vertices() || v >= m.num_vertices() {
        return Err(fail(format!("edge ({u}, {v}) is outside the vertex set")));
    }
    if m.contains(event.flipped) {
        return Err(fail(format!("flipped edge ({u}, {v}) is already matched")));
    }
    let (mu, mv) = (m.partner(u), m.partner(v));
    let removed = [canonical(u, mu), canonical(v, mv)];
    let same_removed = removed == event.removed || [removed[1], removed[0]] == event.removed;
    if !same_removed {
        return Err(fail(format!("removed edges {:?} are not in the current matching", event.removed)));
    }
    if canonical(mu, mv) != event.created {
        return Err(fail(format!("created edge {:?} does not match ({mu}, {mv})", event.created)));
    }
    m.flip(u, v);
    Ok(())
}

/// Re-applies the events to the initial matching.
pub fn replay(trace: &FlipTrace) -> Result<PerfectMatching> {
    let mut m = trace.initial.clone();
    for (index, event) in trace.events.iter().enumerate() {
        apply_event(&mut m, event, index)?;
    }
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub passed: bool,
    pub counterexample: Option<String>,
}

impl Check {
    fn pass() -> Self {
        Self { passed: true, counterexample: None }
    }

    fn fail_with(&mut self, what: impl FnOnce() -> String) {
        if self.passed {
            self.passed = false;
            self.counterexample = Some(what());
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemmaReport {
    /// Every edge that turns unstable after flipping `e` is heavier than `e`.
    pub unstable_edge_creation: Check,
    /// After iteration `i`, every unstable edge comes after `e_i` in scan order.
    pub unstable_edges_heavier: Check,
    /// A flipped edge stays matched for the rest of the run.
    pub flip_permanence: Check,
}

impl LemmaReport {
    pub fn all_pass(&self) -> bool {
        self.unstable_edge_creation.passed && self.unstable_edges_heavier.passed && self.flip_permanence.passed
    }
}

fn incident_edges(instance: &MetricInstance, vertices: &[Vertex]) -> Vec<Edge> {
    let mut out: Vec<Edge> = Vec::new();
    let n = instance.num_vertices();
    for (i, &x) in vertices.iter().enumerate() {
        if vertices[..i].contains(&x) {
            continue;
        }
        for y in 0..n {
            // an edge between two touched vertices is listed once
            if instance.has_edge(x, y) && !vertices[..i].contains(&y) {
                out.push(canonical(x, y));
            }
        }
    }
    out
}

/// Replays the trace alongside the sorted scan and checks the three flip
/// properties. The set of unstable edges is maintained incrementally: a
/// flip only changes the partners of its four endpoints.
pub fn check_trace_lemmas(trace: &FlipTrace) -> Result<LemmaReport> {
    let instance = &trace.instance;
    let alpha = trace.alpha;
    let order = sorted_edges(instance);
    let mut m = trace.initial.clone();
    let mut unstable: BTreeSet<EdgeKey> = order
        .iter()
        .filter(|k| {
            let (u, v) = k.edge();
            is_unstable(instance, &m, alpha, u, v)
        })
        .copied()
        .collect();
    let mut flipped: HashSet<Edge> = HashSet::new();
    let mut report = LemmaReport {
        unstable_edge_creation: Check::pass(),
        unstable_edges_heavier: Check::pass(),
        flip_permanence: Check::pass(),
    };
    let mut next_event = 0;
    for (i, key) in order.iter().enumerate() {
        let event = trace.events.get(next_event).filter(|e| e.iteration == i);
        match event {
            Some(event) => {
                if event.flipped != key.edge() {
                    return Err(Error::InconsistentTrace {
                        event: next_event,
                        reason: format!("iteration {i} scans {:?}, not {:?}", key.edge(), event.flipped),
                    });
                }
                if !unstable.contains(key) {
                    return Err(Error::InconsistentTrace {
                        event: next_event,
                        reason: format!("{:?} was not unstable when flipped", event.flipped),
                    });
                }
                for removed in event.removed {
                    if flipped.contains(&removed) {
                        report.flip_permanence.fail_with(|| {
                            format!("event {next_event} removes the previously flipped edge {removed:?}")
                        });
                    }
                }
                let (u, v) = event.flipped;
                let touched = [u, v, m.partner(u), m.partner(v)];
                let incident = incident_edges(instance, &touched);
                // the set mirrors the current matching, so membership before
                // the flip is recomputed rather than looked up
                let before: Vec<bool> = incident.iter().map(|&(a, b)| is_unstable(instance, &m, alpha, a, b)).collect();
                apply_event(&mut m, event, next_event)?;
                for (&b, before) in incident.iter().zip(before) {
                    let now = is_unstable(instance, &m, alpha, b.0, b.1);
                    if now == before {
                        continue;
                    }
                    let bk = EdgeKey::of(instance, b);
                    if now && !before {
                        if !(bk.weight > key.weight) {
                            report.unstable_edge_creation.fail_with(|| {
                                format!("flip of {:?} (w={}) created unstable {:?} (w={})", key.edge(), key.weight, b, bk.weight)
                            });
                        }
                        unstable.insert(bk);
                    } else if !now && before {
                        unstable.remove(&bk);
                    }
                }
                flipped.insert(event.flipped);
                next_event += 1;
            }
            None => {
                // while no unstable edge has been left behind, every member
                // is >= key, so membership is a check of the first element
                let is_member = if report.unstable_edges_heavier.passed {
                    unstable.first() == Some(key)
                } else {
                    unstable.contains(key)
                };
                if is_member {
                    return Err(Error::InconsistentTrace {
                        event: next_event,
                        reason: format!("{:?} is unstable at iteration {i} but was not flipped", key.edge()),
                    });
                }
            }
        }
        if let Some(first) = unstable.first() {
            if first <= key {
                report.unstable_edges_heavier.fail_with(|| {
                    format!("after iteration {i} ({:?}) the edge {:?} is still unstable", key.edge(), first.edge())
                });
            }
        }
    }
    if next_event != trace.events.len() {
        return Err(Error::InconsistentTrace {
            event: next_event,
            reason: "event does not follow the scan order".into(),
        });
    }
    if m != trace.final_matching {
        return Err(Error::InconsistentTrace {
            event: trace.events.len(),
            reason: "replayed matching differs from the recorded final matching".into(),
        });
    }
    if let Some(e) = flipped.iter().find(|&&e| !m.contains(e)) {
        report.flip_permanence.fail_with(|| format!("flipped edge {e:?} is missing from the final matching"));
    }
    Ok(report)
}
