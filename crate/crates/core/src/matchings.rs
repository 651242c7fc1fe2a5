//! Perfect matchings, stability, and the exhaustive price-of-anarchy /
//! price-of-stability oracles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{canonical, check_alpha, Edge, InstanceKind, MetricInstance, Vertex};

/// Default cap on the vertex count for exhaustive enumeration.
pub const DEFAULT_MAX_ENUM: usize = 16;
/// Hard cap regardless of overrides.
pub const HARD_MAX_ENUM: usize = 20;

const UNMATCHED: usize = usize::MAX;

/// A perfect matching in canonical form: each pair `(min, max)`, pairs
/// sorted by first element.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PerfectMatching {
    pairs: Vec<Edge>,
    partner: Vec<Vertex>,
}

impl PerfectMatching {
    pub fn from_pairs(num_vertices: usize, pairs: impl IntoIterator<Item = (Vertex, Vertex)>) -> Result<Self> {
        let mut partner = vec![UNMATCHED; num_vertices];
        let mut canon = Vec::with_capacity(num_vertices / 2);
        for (u, v) in pairs {
            if u == v || u >= num_vertices || v >= num_vertices {
                return Err(Error::VertexMismatch(format!("invalid pair ({u}, {v})")));
            }
            if partner[u] != UNMATCHED || partner[v] != UNMATCHED {
                return Err(Error::VertexMismatch(format!("pair ({u}, {v}) reuses a vertex")));
            }
            partner[u] = v;
            partner[v] = u;
            canon.push(canonical(u, v));
        }
        if let Some(v) = partner.iter().position(|&p| p == UNMATCHED) {
            return Err(Error::VertexMismatch(format!("vertex {v} is unmatched")));
        }
        canon.sort_unstable();
        Ok(Self { pairs: canon, partner })
    }

    fn from_partner(partner: Vec<Vertex>) -> Self {
        Self { pairs: pairs_of(&partner), partner }
    }

    pub fn pairs(&self) -> &[Edge] {
        &self.pairs
    }

    pub fn num_vertices(&self) -> usize {
        self.partner.len()
    }

    #[inline]
    pub fn partner(&self, v: Vertex) -> Vertex {
        self.partner[v]
    }

    pub fn contains(&self, (u, v): Edge) -> bool {
        self.partner.get(u) == Some(&v)
    }

    /// Replaces `(u, M(u))` and `(v, M(v))` by `(u, v)` and `(M(u), M(v))`.
    pub(crate) fn flip(&mut self, u: Vertex, v: Vertex) {
        let (mu, mv) = (self.partner[u], self.partner[v]);
        self.partner[u] = v;
        self.partner[v] = u;
        self.partner[mu] = mv;
        self.partner[mv] = mu;
        self.pairs = pairs_of(&self.partner);
    }

    /// Ensures the matching lives on the instance's vertex set and uses
    /// only edges of the instance.
    pub fn validate_for(&self, instance: &MetricInstance) -> Result<()> {
        if self.num_vertices() != instance.num_vertices() {
            return Err(Error::VertexMismatch(format!(
                "matching covers {} vertices, instance has {}",
                self.num_vertices(),
                instance.num_vertices()
            )));
        }
        if let Some(&(u, v)) = self.pairs.iter().find(|&&(u, v)| !instance.has_edge(u, v)) {
            return Err(Error::VertexMismatch(format!("({u}, {v}) is not an edge of the instance")));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&MatchingRepr { pairs: self.pairs.iter().map(|&(u, v)| [u, v]).collect() })
            .expect("matching serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: MatchingRepr = serde_json::from_str(text)?;
        let n = repr.pairs.len() * 2;
        Self::from_pairs(n, repr.pairs.into_iter().map(|[u, v]| (u, v)))
    }
}

fn pairs_of(partner: &[Vertex]) -> Vec<Edge> {
    partner.iter().enumerate().filter(|&(u, &v)| u < v).map(|(u, &v)| (u, v)).collect()
}

#[derive(Serialize, Deserialize)]
pub(crate) struct MatchingRepr {
    pub pairs: Vec<[Vertex; 2]>,
}

impl Serialize for PerfectMatching {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatchingRepr { pairs: self.pairs.iter().map(|&(u, v)| [u, v]).collect() }.serialize(s)
    }
}

pub fn cost(matching: &PerfectMatching, instance: &MetricInstance) -> Result<f64> {
    matching.validate_for(instance)?;
    Ok(cost_unchecked(matching, instance))
}

pub(crate) fn cost_unchecked(matching: &PerfectMatching, instance: &MetricInstance) -> f64 {
    matching.pairs.iter().map(|&(u, v)| instance.weight(u, v)).sum()
}

/// Number of perfect matchings: `(2n-1)!!` for complete, `n!` for bipartite.
pub fn matching_count(instance: &MetricInstance) -> u128 {
    let p = instance.num_pairs() as u128;
    match instance.kind() {
        InstanceKind::Complete => (1..=p).map(|i| 2 * i - 1).product(),
        InstanceKind::CompleteBipartite => (1..=p).product(),
    }
}

fn check_enum_limit(instance: &MetricInstance, max_enum: usize) -> Result<()> {
    let limit = max_enum.min(HARD_MAX_ENUM);
    if instance.num_vertices() > limit {
        return Err(Error::InstanceTooLarge { vertices: instance.num_vertices(), limit });
    }
    Ok(())
}

/// Every perfect matching of the instance exactly once, in lexicographic
/// order of canonical form.
pub fn enumerate_perfect_matchings(instance: &MetricInstance, max_enum: usize) -> Result<PerfectMatchings<'_>> {
    check_enum_limit(instance, max_enum)?;
    Ok(PerfectMatchings::new(instance))
}

pub struct PerfectMatchings<'a> {
    instance: &'a MetricInstance,
    partner: Vec<Vertex>,
    // (a, b) choices in order; `a` is always the smallest vertex unmatched
    // at the time of the choice.
    stack: Vec<(Vertex, Vertex)>,
    started: bool,
    done: bool,
}

impl<'a> PerfectMatchings<'a> {
    fn new(instance: &'a MetricInstance) -> Self {
        Self {
            instance,
            partner: vec![UNMATCHED; instance.num_vertices()],
            stack: Vec::with_capacity(instance.num_pairs()),
            started: false,
            done: false,
        }
    }

    fn next_partner(&self, a: Vertex, after: Option<Vertex>) -> Option<Vertex> {
        let start = after.map_or(a + 1, |b| b + 1);
        (start..self.partner.len()).find(|&b| self.partner[b] == UNMATCHED && self.instance.has_edge(a, b))
    }

    fn assign(&mut self, a: Vertex, b: Vertex) {
        self.partner[a] = b;
        self.partner[b] = a;
        self.stack.push((a, b));
    }

    /// Completes the current partial matching with the smallest choices.
    fn fill(&mut self) -> bool {
        while let Some(a) = self.partner.iter().position(|&p| p == UNMATCHED) {
            match self.next_partner(a, None) {
                Some(b) => self.assign(a, b),
                None => return false,
            }
        }
        true
    }

    fn advance(&mut self) -> bool {
        while let Some((a, b)) = self.stack.pop() {
            self.partner[a] = UNMATCHED;
            self.partner[b] = UNMATCHED;
            if let Some(next) = self.next_partner(a, Some(b)) {
                self.assign(a, next);
                if self.fill() {
                    return true;
                }
            }
        }
        false
    }
}

impl Iterator for PerfectMatchings<'_> {
    type Item = PerfectMatching;

    fn next(&mut self) -> Option<PerfectMatching> {
        if self.done {
            return None;
        }
        let found = if self.started {
            self.advance()
        } else {
            self.started = true;
            self.fill()
        };
        if !found {
            self.done = true;
            return None;
        }
        Some(PerfectMatching::from_partner(self.partner.clone()))
    }
}

/// Minimum-cost perfect matching by exhaustive depth-first search in
/// lexicographic order with cost pruning. Ties resolve to the
/// lexicographically smallest canonical form.
pub fn min_cost_matching(instance: &MetricInstance, max_enum: usize) -> Result<(PerfectMatching, f64)> {
    check_enum_limit(instance, max_enum)?;
    let n = instance.num_vertices();
    let mut search = MinCostSearch {
        instance,
        partner: vec![UNMATCHED; n],
        best: Vec::new(),
        best_cost: f64::INFINITY,
    };
    search.descend(0, 0.0);
    let cost = search.best_cost;
    Ok((PerfectMatching::from_partner(search.best), cost))
}

struct MinCostSearch<'a> {
    instance: &'a MetricInstance,
    partner: Vec<Vertex>,
    best: Vec<Vertex>,
    best_cost: f64,
}

impl MinCostSearch<'_> {
    fn descend(&mut self, from: Vertex, partial: f64) {
        let n = self.partner.len();
        let Some(a) = (from..n).find(|&v| self.partner[v] == UNMATCHED) else {
            if partial < self.best_cost {
                self.best_cost = partial;
                self.best = self.partner.clone();
            }
            return;
        };
        for b in (a + 1)..n {
            if self.partner[b] != UNMATCHED || !self.instance.has_edge(a, b) {
                continue;
            }
            let next = partial + self.instance.weight(a, b);
            // weights are positive, so no completion of this branch can
            // strictly beat the incumbent
            if next >= self.best_cost {
                continue;
            }
            self.partner[a] = b;
            self.partner[b] = a;
            self.descend(a + 1, next);
            self.partner[a] = UNMATCHED;
            self.partner[b] = UNMATCHED;
        }
    }
}

/// `{(x_1, x_2), (x_3, x_4), ...}` on a line instance.
pub fn consecutive_matching(instance: &MetricInstance) -> Result<PerfectMatching> {
    instance.embedding().ok_or(Error::NoEmbedding)?;
    let n = instance.num_vertices();
    PerfectMatching::from_pairs(n, (0..n).step_by(2).map(|i| (i, i + 1)))
}

/// `{(x_2, x_3), ..., (x_2n-2, x_2n-1)} ∪ {(x_1, x_2n)}` on a line instance
/// (0-based: `(1,2), (3,4), ..., (0, 2n-1)`).
pub fn line_pos_matching(instance: &MetricInstance) -> Result<PerfectMatching> {
    instance.embedding().ok_or(Error::NoEmbedding)?;
    let n = instance.num_vertices();
    if n < 4 {
        return Err(Error::TooSmall("the off-by-one pairing needs at least 2 pairs".into()));
    }
    let inner = (1..n - 1).step_by(2).map(|i| (i, i + 1));
    PerfectMatching::from_pairs(n, inner.chain(std::iter::once((0, n - 1))))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnstableEdge {
    pub u: Vertex,
    pub v: Vertex,
    pub w_uv: f64,
    pub w_u: f64,
    pub w_v: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub alpha: f64,
    pub unstable_edges: Vec<UnstableEdge>,
}

impl StabilityReport {
    pub fn is_stable(&self) -> bool {
        self.unstable_edges.is_empty()
    }

    pub fn to_json(&self) -> String {
        let unstable: Vec<[serde_json::Value; 5]> = self
            .unstable_edges
            .iter()
            .map(|e| [e.u.into(), e.v.into(), e.w_uv.into(), e.w_u.into(), e.w_v.into()])
            .collect();
        serde_json::json!({"alpha": self.alpha, "unstable": unstable}).to_string()
    }
}

/// `alpha * w(u, v) < min(w(u, M(u)), w(v, M(v)))`, strict and without
/// tolerance.
#[inline]
pub(crate) fn is_unstable(instance: &MetricInstance, m: &PerfectMatching, alpha: f64, u: Vertex, v: Vertex) -> bool {
    let (mu, mv) = (m.partner(u), m.partner(v));
    mu != v && alpha * instance.weight(u, v) < instance.weight(u, mu).min(instance.weight(v, mv))
}

pub fn stability_report(instance: &MetricInstance, matching: &PerfectMatching, alpha: f64) -> Result<StabilityReport> {
    check_alpha(alpha)?;
    matching.validate_for(instance)?;
    let unstable_edges = instance
        .edges()
        .filter(|&(u, v)| is_unstable(instance, matching, alpha, u, v))
        .map(|(u, v)| UnstableEdge {
            u,
            v,
            w_uv: instance.weight(u, v),
            w_u: instance.weight(u, matching.partner(u)),
            w_v: instance.weight(v, matching.partner(v)),
        })
        .collect();
    Ok(StabilityReport { alpha, unstable_edges })
}

pub fn is_alpha_stable(instance: &MetricInstance, matching: &PerfectMatching, alpha: f64) -> bool {
    !instance.edges().any(|(u, v)| is_unstable(instance, matching, alpha, u, v))
}

/// Cycles of `M* ⊕ M`. Each starts at its minimum vertex, steps to that
/// vertex's partner in `optimal` and then alternates; cycles are sorted by
/// minimum vertex.
pub fn alternating_cycles(optimal: &PerfectMatching, candidate: &PerfectMatching) -> Result<Vec<Vec<Vertex>>> {
    if optimal.num_vertices() != candidate.num_vertices() {
        return Err(Error::VertexMismatch("matchings cover different vertex sets".into()));
    }
    let n = optimal.num_vertices();
    let mut seen = vec![false; n];
    let mut cycles = Vec::new();
    for start in 0..n {
        if seen[start] || optimal.partner(start) == candidate.partner(start) {
            continue;
        }
        let mut cycle = Vec::new();
        let mut v = start;
        loop {
            seen[v] = true;
            cycle.push(v);
            let w = optimal.partner(v);
            seen[w] = true;
            cycle.push(w);
            v = candidate.partner(w);
            if v == start {
                break;
            }
        }
        cycles.push(cycle);
    }
    Ok(cycles)
}

/// An optimal matching paired with a candidate, and their cost ratio.
#[derive(Clone, Debug)]
pub struct MatchingConfiguration {
    pub instance: MetricInstance,
    pub optimal: PerfectMatching,
    pub candidate: PerfectMatching,
    pub ratio: f64,
}

impl MatchingConfiguration {
    pub fn new(instance: MetricInstance, optimal: PerfectMatching, candidate: PerfectMatching) -> Result<Self> {
        let c_opt = cost(&optimal, &instance)?;
        let c = cost(&candidate, &instance)?;
        if c < c_opt {
            return Err(Error::InvalidParameter("candidate is cheaper than the claimed optimum".into()));
        }
        Ok(Self { instance, optimal, candidate, ratio: c / c_opt })
    }

    /// The weighted-line configuration `(G, M*(G), M(G))` of a line instance.
    pub fn weighted_line(instance: MetricInstance) -> Result<Self> {
        let optimal = consecutive_matching(&instance)?;
        let candidate = line_pos_matching(&instance)?;
        Self::new(instance, optimal, candidate)
    }
}

/// Outcome of an exhaustive PoA/PoS computation.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtremeStable {
    pub ratio: f64,
    pub witness: PerfectMatching,
    pub optimal_cost: f64,
}

struct StableScan {
    optimal_cost: f64,
    worst: Option<(f64, PerfectMatching)>,
    best: Option<(f64, PerfectMatching)>,
    stable_count: u64,
}

fn scan_stable(instance: &MetricInstance, alpha: f64, max_enum: usize) -> Result<StableScan> {
    check_alpha(alpha)?;
    let (_, optimal_cost) = min_cost_matching(instance, max_enum)?;
    let mut scan = StableScan { optimal_cost, worst: None, best: None, stable_count: 0 };
    for m in enumerate_perfect_matchings(instance, max_enum)? {
        if !is_alpha_stable(instance, &m, alpha) {
            continue;
        }
        scan.stable_count += 1;
        let c = cost_unchecked(&m, instance);
        if scan.worst.as_ref().is_none_or(|(w, _)| c > *w) {
            scan.worst = Some((c, m.clone()));
        }
        if scan.best.as_ref().is_none_or(|(b, _)| c < *b) {
            scan.best = Some((c, m));
        }
    }
    Ok(scan)
}

/// Largest `c(M) / c(M*)` over alpha-stable matchings.
pub fn exact_poa(instance: &MetricInstance, alpha: f64, max_enum: usize) -> Result<ExtremeStable> {
    let scan = scan_stable(instance, alpha, max_enum)?;
    let (c, witness) = scan.worst.ok_or(Error::NoStableMatching)?;
    Ok(ExtremeStable { ratio: c / scan.optimal_cost, witness, optimal_cost: scan.optimal_cost })
}

/// Smallest `c(M) / c(M*)` over alpha-stable matchings.
pub fn exact_pos(instance: &MetricInstance, alpha: f64, max_enum: usize) -> Result<ExtremeStable> {
    let scan = scan_stable(instance, alpha, max_enum)?;
    let (c, witness) = scan.best.ok_or(Error::NoStableMatching)?;
    Ok(ExtremeStable { ratio: c / scan.optimal_cost, witness, optimal_cost: scan.optimal_cost })
}

pub fn count_alpha_stable(instance: &MetricInstance, alpha: f64, max_enum: usize) -> Result<u64> {
    check_alpha(alpha)?;
    let mut count = 0;
    for m in enumerate_perfect_matchings(instance, max_enum)? {
        if is_alpha_stable(instance, &m, alpha) {
            count += 1;
        }
    }
    Ok(count)
}

/// PoA, PoS and the number of stable matchings from a single enumeration.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactSummary {
    pub optimal_cost: f64,
    pub poa: ExtremeStable,
    pub pos: ExtremeStable,
    pub stable_count: u64,
}

pub fn exact_summary(instance: &MetricInstance, alpha: f64, max_enum: usize) -> Result<ExactSummary> {
    let scan = scan_stable(instance, alpha, max_enum)?;
    let opt = scan.optimal_cost;
    let (cw, worst) = scan.worst.ok_or(Error::NoStableMatching)?;
    let (cb, best) = scan.best.ok_or(Error::NoStableMatching)?;
    Ok(ExactSummary {
        optimal_cost: opt,
        poa: ExtremeStable { ratio: cw / opt, witness: worst, optimal_cost: opt },
        pos: ExtremeStable { ratio: cb / opt, witness: best, optimal_cost: opt },
        stable_count: scan.stable_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::GapDistribution;

    fn pm(n: usize, pairs: &[(usize, usize)]) -> PerfectMatching {
        PerfectMatching::from_pairs(n, pairs.iter().copied()).unwrap()
    }

    fn rt(k: u32) -> MetricInstance {
        MetricInstance::gen_rt(k).unwrap()
    }

    #[test]
    fn canonical_form_and_errors() {
        let m = pm(4, &[(3, 2), (1, 0)]);
        assert_eq!(m.pairs(), &[(0, 1), (2, 3)]);
        assert_eq!(m.partner(3), 2);
        assert!(PerfectMatching::from_pairs(4, [(0, 1), (1, 2)]).is_err());
        assert!(PerfectMatching::from_pairs(4, [(0, 1)]).is_err());
        assert!(PerfectMatching::from_pairs(4, [(0, 0), (2, 3)]).is_err());
        assert_eq!(m.to_json(), r#"{"pairs":[[0,1],[2,3]]}"#);
        assert_eq!(PerfectMatching::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn costs_on_rt2() {
        let g = rt(2);
        assert_eq!(cost(&pm(4, &[(0, 1), (2, 3)]), &g).unwrap(), 2.0);
        assert_eq!(cost(&pm(4, &[(1, 2), (0, 3)]), &g).unwrap(), 4.0);
        assert_eq!(cost(&pm(2, &[(0, 1)]), &rt(1)).unwrap(), 1.0);
        assert!(matches!(cost(&pm(2, &[(0, 1)]), &g), Err(Error::VertexMismatch(_))));
    }

    #[test]
    fn bipartite_matching_must_cross() {
        let bip = MetricInstance::gen_random_euclidean(2, 1, 2, true).unwrap();
        assert!(cost(&pm(4, &[(0, 1), (2, 3)]), &bip).is_err());
        assert!(cost(&pm(4, &[(0, 2), (1, 3)]), &bip).is_ok());
    }

    #[test]
    fn enumeration_counts_and_order() {
        let four = rt(2);
        let all: Vec<_> = enumerate_perfect_matchings(&four, 16).unwrap().collect();
        assert_eq!(all.len(), 3);
        assert_eq!(all[0].pairs(), &[(0, 1), (2, 3)]);
        assert_eq!(all[1].pairs(), &[(0, 2), (1, 3)]);
        assert_eq!(all[2].pairs(), &[(0, 3), (1, 2)]);
        let six = MetricInstance::gen_random_line(3, 1, GapDistribution::UniformUnit).unwrap();
        let six_all: Vec<_> = enumerate_perfect_matchings(&six, 16).unwrap().collect();
        assert_eq!(six_all.len(), 15);
        assert!(six_all.windows(2).all(|w| w[0].pairs() < w[1].pairs()));
        let bip = MetricInstance::gen_random_euclidean(4, 2, 2, true).unwrap();
        let b: Vec<_> = enumerate_perfect_matchings(&bip, 16).unwrap().collect();
        assert_eq!(b.len(), 24);
        assert_eq!(matching_count(&bip), 24);
        let mut dedup = b.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), 24);
        assert_eq!(enumerate_perfect_matchings(&rt(3), 16).unwrap().count(), 105);
    }

    #[test]
    fn enumeration_limit() {
        let big = rt(5);
        assert!(matches!(
            enumerate_perfect_matchings(&big, 16),
            Err(Error::InstanceTooLarge { vertices: 32, limit: 16 })
        ));
        assert!(matches!(min_cost_matching(&big, 64), Err(Error::InstanceTooLarge { limit: 20, .. })));
    }

    #[test]
    fn min_cost_examples() {
        let (m, c) = min_cost_matching(&rt(3), 16).unwrap();
        assert_eq!(m.pairs(), &[(0, 1), (2, 3), (4, 5), (6, 7)]);
        assert_eq!(c, 4.0);
        let (m1, c1) = min_cost_matching(&rt(1), 16).unwrap();
        assert_eq!(m1.pairs(), &[(0, 1)]);
        assert_eq!(c1, 1.0);
    }

    #[test]
    fn min_cost_ties_are_lexicographic() {
        // Square with unit sides and sqrt(2) diagonals: (0,1),(2,3) and
        // (0,3),(1,2) tie.
        let s = 2f64.sqrt();
        let rows = vec![
            vec![0.0, 1.0, s, 1.0],
            vec![1.0, 0.0, 1.0, s],
            vec![s, 1.0, 0.0, 1.0],
            vec![1.0, s, 1.0, 0.0],
        ];
        let sq = MetricInstance::build_complete(&rows).unwrap();
        let (m, _) = min_cost_matching(&sq, 16).unwrap();
        assert_eq!(m.pairs(), &[(0, 1), (2, 3)]);
    }

    #[test]
    fn min_cost_agrees_with_plain_enumeration() {
        for seed in 0..40 {
            let inst = MetricInstance::gen_random_euclidean(1 + (seed as usize % 5), seed, 2, seed % 2 == 0).unwrap();
            let (m, c) = min_cost_matching(&inst, 16).unwrap();
            let mut best: Option<(f64, PerfectMatching)> = None;
            for cand in enumerate_perfect_matchings(&inst, 16).unwrap() {
                let cc = cost_unchecked(&cand, &inst);
                if best.as_ref().is_none_or(|(b, _)| cc < *b) {
                    best = Some((cc, cand));
                }
            }
            let (bc, bm) = best.unwrap();
            assert_eq!(c, bc);
            assert_eq!(m, bm);
        }
    }

    #[test]
    fn line_matchings() {
        assert_eq!(consecutive_matching(&rt(2)).unwrap().pairs(), &[(0, 1), (2, 3)]);
        assert_eq!(cost(&consecutive_matching(&rt(5)).unwrap(), &rt(5)).unwrap(), 16.0);
        let lp2 = line_pos_matching(&rt(2)).unwrap();
        assert_eq!(lp2.pairs(), &[(0, 3), (1, 2)]);
        assert_eq!(cost(&lp2, &rt(2)).unwrap(), 4.0);
        assert_eq!(cost(&line_pos_matching(&rt(4)).unwrap(), &rt(4)).unwrap(), 46.0);
        let cfg = MatchingConfiguration::weighted_line(rt(3)).unwrap();
        assert_eq!(cost(&cfg.candidate, &cfg.instance).unwrap(), 14.0);
        assert_eq!(cfg.ratio, 3.5);
        assert!(matches!(line_pos_matching(&rt(1)), Err(Error::TooSmall(_))));
        let planar = MetricInstance::gen_random_euclidean(2, 0, 2, false).unwrap();
        assert!(matches!(consecutive_matching(&planar), Err(Error::NoEmbedding)));
        assert!(matches!(line_pos_matching(&planar), Err(Error::NoEmbedding)));
    }

    #[test]
    fn stability_examples() {
        let g = rt(2);
        let opt = pm(4, &[(0, 1), (2, 3)]);
        assert!(stability_report(&g, &opt, 1.0).unwrap().is_stable());

        let ga = MetricInstance::gen_rt_alpha(2, 1.0, 0.01).unwrap();
        let rep = stability_report(&ga, &opt, 1.0).unwrap();
        assert_eq!(rep.unstable_edges.len(), 1);
        let e = &rep.unstable_edges[0];
        assert_eq!((e.u, e.v), (1, 2));
        assert!((e.w_uv - 0.99).abs() < 1e-12);
        // 2.99 - 1.99 is not exactly 1 in binary
        assert!((e.w_u - 1.0).abs() < 1e-12 && (e.w_v - 1.0).abs() < 1e-12);

        for m in enumerate_perfect_matchings(&ga, 16).unwrap() {
            assert!(stability_report(&ga, &m, 1e12).unwrap().is_stable());
        }
        assert!(matches!(stability_report(&g, &opt, 0.99), Err(Error::AlphaOutOfRange(_))));
        assert!(matches!(stability_report(&rt(3), &opt, 1.0), Err(Error::VertexMismatch(_))));
        assert!(rep.to_json().starts_with(r#"{"alpha":1.0,"unstable":[[1,2,0.9"#));
    }

    #[test]
    fn tie_at_equality_is_stable() {
        // (1,2) has weight 1 and both endpoints hold weight-1 edges: 1 < 1 fails.
        let g = rt(2);
        let opt = pm(4, &[(0, 1), (2, 3)]);
        assert!(!is_unstable(&g, &opt, 1.0, 1, 2));
    }

    #[test]
    fn cycles() {
        let opt = pm(4, &[(0, 1), (2, 3)]);
        assert!(alternating_cycles(&opt, &opt).unwrap().is_empty());
        let m = pm(4, &[(1, 2), (0, 3)]);
        assert_eq!(alternating_cycles(&opt, &m).unwrap(), vec![vec![0, 1, 2, 3]]);
        // two independent 4-point blocks
        let opt8 = pm(8, &[(0, 1), (2, 3), (4, 5), (6, 7)]);
        let m8 = pm(8, &[(1, 2), (0, 3), (5, 6), (4, 7)]);
        assert_eq!(alternating_cycles(&opt8, &m8).unwrap(), vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7]]);
        assert!(alternating_cycles(&opt, &opt8).is_err());
    }

    #[test]
    fn exact_on_rt2() {
        let g = rt(2);
        let poa = exact_poa(&g, 1.0, 16).unwrap();
        assert_eq!(poa.ratio, 2.0);
        assert_eq!(poa.witness, pm(4, &[(1, 2), (0, 3)]));
        assert_eq!(exact_pos(&g, 1.0, 16).unwrap().ratio, 1.0);
        assert_eq!(count_alpha_stable(&g, 1.0, 16).unwrap(), 2);
        // {(0,2),(1,3)} is blocked by (0,1)
        let rep = stability_report(&g, &pm(4, &[(0, 2), (1, 3)]), 1.0).unwrap();
        assert!(rep.unstable_edges.iter().any(|e| (e.u, e.v) == (0, 1)));
    }

    #[test]
    fn exact_on_small_cases() {
        let two = rt(1);
        assert_eq!(exact_poa(&two, 1.0, 16).unwrap().ratio, 1.0);
        assert_eq!(exact_pos(&two, 1.0, 16).unwrap().ratio, 1.0);
        assert_eq!(exact_poa(&rt(3), 1.0, 16).unwrap().ratio, 3.5);
    }

    #[test]
    fn exact_on_perturbed_rt() {
        let g2 = MetricInstance::gen_rt_alpha(2, 1.0, 0.01).unwrap();
        assert_eq!(count_alpha_stable(&g2, 1.0, 16).unwrap(), 1);

        // Unique stable matching on k = 3: both inner 0.99 gaps, the middle
        // gap 0.99 * 2.99 and the outer edge 2.99^2, over c(M*) = 4.
        let g3 = MetricInstance::gen_rt_alpha(3, 1.0, 0.01).unwrap();
        let pos = exact_pos(&g3, 1.0, 16).unwrap();
        let expected = (2.0 * 0.99 + 0.99 * 2.99 + 2.99 * 2.99) / 4.0;
        assert!((pos.ratio - expected).abs() < 1e-9, "{}", pos.ratio);
        assert!((pos.ratio - 3.470_05).abs() < 1e-6);
        assert_eq!(count_alpha_stable(&g3, 1.0, 16).unwrap(), 1);
    }

    #[test]
    fn all_matchings_stable_for_huge_alpha() {
        let inst = MetricInstance::gen_random_euclidean(3, 4, 2, false).unwrap();
        let max_w = inst.diameter();
        let min_w = inst.edges().map(|(u, v)| inst.weight(u, v)).fold(f64::INFINITY, f64::min);
        let alpha = 2.0 * max_w / min_w;
        assert_eq!(count_alpha_stable(&inst, alpha, 16).unwrap() as u128, matching_count(&inst));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn pos_le_poa_and_monotone(seed in any::<u64>(), pairs in 1usize..5, bip in any::<bool>()) {
                let inst = MetricInstance::gen_random_euclidean(pairs, seed, 2, bip).unwrap();
                let mut prev_count = 0;
                let mut prev_poa = 0.0;
                for alpha in [1.0, 1.5, 2.0, 4.0, 8.0] {
                    let s = exact_summary(&inst, alpha, 16).unwrap();
                    prop_assert!(s.pos.ratio <= s.poa.ratio);
                    prop_assert!(s.stable_count >= 1);
                    prop_assert!(s.stable_count >= prev_count);
                    prop_assert!(s.poa.ratio >= prev_poa);
                    prev_count = s.stable_count;
                    prev_poa = s.poa.ratio;
                }
            }

            #[test]
            fn stability_is_upward_closed(seed in any::<u64>(), pairs in 2usize..5) {
                let inst = MetricInstance::gen_random_euclidean(pairs, seed, 2, false).unwrap();
                for m in enumerate_perfect_matchings(&inst, 16).unwrap() {
                    for (a, b) in [(1.0, 1.3), (1.3, 2.0), (2.0, 5.0)] {
                        if stability_report(&inst, &m, a).unwrap().is_stable() {
                            prop_assert!(stability_report(&inst, &m, b).unwrap().is_stable());
                        }
                    }
                }
            }

            #[test]
            fn cycles_cover_symmetric_difference(seed in any::<u64>(), pairs in 1usize..5, pick in any::<prop::sample::Index>()) {
                let inst = MetricInstance::gen_random_line(pairs, seed, GapDistribution::UniformUnit).unwrap();
                let opt = consecutive_matching(&inst).unwrap();
                let all: Vec<_> = enumerate_perfect_matchings(&inst, 16).unwrap().collect();
                let m = &all[pick.index(all.len())];
                let cycles = alternating_cycles(&opt, m).unwrap();
                let mut covered = std::collections::BTreeSet::new();
                for c in &cycles {
                    prop_assert!(c.len() >= 4 && c.len() % 2 == 0);
                    for (i, &x) in c.iter().enumerate() {
                        let y = c[(i + 1) % c.len()];
                        let e = canonical(x, y);
                        if i % 2 == 0 {
                            prop_assert!(opt.contains(e) && !m.contains(e));
                        } else {
                            prop_assert!(m.contains(e) && !opt.contains(e));
                        }
                        covered.insert(e);
                    }
                }
                let sym: std::collections::BTreeSet<_> = opt.pairs().iter().chain(m.pairs())
                    .filter(|&&e| opt.contains(e) != m.contains(e)).copied().collect();
                prop_assert_eq!(covered, sym);
            }
        }
    }
}
