//! Metric matching instances: complete or complete-bipartite graphs on `2n`
//! vertices with positive weights obeying the triangle inequality (or its
//! bipartite counterpart), plus the generators used by the experiments.
//!
//! Vertices are `0..2n`. In a bipartite instance vertices `0..n` form the
//! first side and `n..2n` the second.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::error::{Error, Result};

pub type Vertex = usize;

/// An undirected edge stored as `(min, max)`.
pub type Edge = (Vertex, Vertex);

/// Relative slack allowed by the metric checks.
pub const METRIC_TOLERANCE: f64 = 1e-9;

/// Largest `k` accepted by the Reingold-Tarjan generators.
pub const MAX_RT_K: u32 = 30;

#[inline]
pub fn canonical(u: Vertex, v: Vertex) -> Edge {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InstanceKind {
    Complete,
    CompleteBipartite,
}

/// Positions `x_1 < ... < x_2n` of a weighted line graph.
#[derive(Clone, Debug, PartialEq)]
pub struct LineEmbedding {
    positions: Vec<f64>,
}

impl LineEmbedding {
    pub fn new(positions: Vec<f64>) -> Result<Self> {
        for (index, pair) in positions.windows(2).enumerate() {
            if !(pair[0] < pair[1]) {
                return Err(Error::NotIncreasing { index: index + 1 });
            }
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite position".into()));
        }
        Ok(Self { positions })
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn diameter(&self) -> f64 {
        match (self.positions.first(), self.positions.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Weights {
    Line(LineEmbedding),
    Matrix(Vec<f64>),
}

/// A validated metric instance. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricInstance {
    num_vertices: usize,
    kind: InstanceKind,
    weights: Weights,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GapDistribution {
    /// Gaps uniform on `(0, 1]`.
    UniformUnit,
    /// Gaps drawn from `Exp(1)`.
    Exponential,
}

/// First violation found by [`MetricInstance::metric_check`], if any.
#[derive(Clone, Debug, PartialEq)]
pub enum MetricViolation {
    Triangle { i: Vertex, j: Vertex, via: Vertex, wij: f64, detour: f64 },
    Quadrilateral { u: Vertex, v: Vertex, u2: Vertex, v2: Vertex, wuv: f64, detour: f64 },
}

impl From<MetricViolation> for Error {
    fn from(v: MetricViolation) -> Self {
        match v {
            MetricViolation::Triangle { i, j, via, wij, detour } => {
                Error::NotMetric { i, j, via, wij, detour }
            }
            MetricViolation::Quadrilateral { u, v, u2, v2, wuv, detour } => {
                Error::NotBipartiteMetric { u, v, u2, v2, wuv, detour }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub violation: Option<MetricViolation>,
}

impl MetricReport {
    pub fn passes(&self) -> bool {
        self.violation.is_none()
    }
}

fn exceeds(w: f64, detour: f64) -> bool {
    w > detour * (1.0 + METRIC_TOLERANCE)
}

fn check_vertex_count(n: usize) -> Result<()> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::OddVertexCount(n));
    }
    Ok(())
}

fn flatten_square(rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = rows.len();
    let mut flat = Vec::with_capacity(n * n);
    for (row, r) in rows.iter().enumerate() {
        if r.len() != n {
            return Err(Error::NotSquare { row, len: r.len(), expected: n });
        }
        flat.extend_from_slice(r);
    }
    Ok(flat)
}

impl MetricInstance {
    /// Builds a complete instance from a symmetric weight matrix. The
    /// diagonal is ignored.
    pub fn build_complete(rows: &[Vec<f64>]) -> Result<Self> {
        Self::build_matrix(rows, InstanceKind::Complete)
    }

    /// Builds a complete bipartite instance from a full symmetric square
    /// matrix. Only entries between the two halves are edge weights; the
    /// within-side entries are carried along but never read as edges.
    pub fn build_bipartite(rows: &[Vec<f64>]) -> Result<Self> {
        Self::build_matrix(rows, InstanceKind::CompleteBipartite)
    }

    fn build_matrix(rows: &[Vec<f64>], kind: InstanceKind) -> Result<Self> {
        let flat = flatten_square(rows)?;
        let n = rows.len();
        check_vertex_count(n)?;
        for i in 0..n {
            for j in (i + 1)..n {
                let (wij, wji) = (flat[i * n + j], flat[j * n + i]);
                if wij != wji {
                    return Err(Error::NotSymmetric { i, j, wij, wji });
                }
            }
        }
        let instance = Self { num_vertices: n, kind, weights: Weights::Matrix(flat) };
        for (i, j) in instance.edges() {
            let w = instance.weight(i, j);
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::NonPositiveWeight { i, j, w });
            }
        }
        if let Some(v) = instance.metric_check().violation {
            return Err(v.into());
        }
        Ok(instance)
    }

    /// A weighted line graph: `w(i, j) = |x_j - x_i|`.
    pub fn from_line(positions: Vec<f64>) -> Result<Self> {
        let embedding = LineEmbedding::new(positions)?;
        let n = embedding.positions.len();
        check_vertex_count(n)?;
        Ok(Self { num_vertices: n, kind: InstanceKind::Complete, weights: Weights::Line(embedding) })
    }

    /// The Reingold-Tarjan graph on `2^k` vertices: two copies of the
    /// previous level separated by a gap equal to their diameter, so the
    /// diameter is `3^(k-1)`. Built in integer arithmetic.
    pub fn gen_rt(k: u32) -> Result<Self> {
        if !(1..=MAX_RT_K).contains(&k) {
            return Err(Error::KOutOfRange(k));
        }
        let mut positions: Vec<i64> = vec![0, 1];
        for _ in 1..k {
            let diameter = positions[positions.len() - 1] - positions[0];
            let shift = 2 * diameter;
            let copy: Vec<i64> = positions.iter().map(|x| x + shift).collect();
            positions.extend(copy);
        }
        Self::from_line(positions.into_iter().map(|x| x as f64).collect())
    }

    /// The perturbed family whose unique alpha-stable matching is
    /// expensive: the gap between the two copies is `(1/alpha - epsilon)`
    /// times their diameter.
    pub fn gen_rt_alpha(k: u32, alpha: f64, epsilon: f64) -> Result<Self> {
        if !(1..=MAX_RT_K).contains(&k) {
            return Err(Error::KOutOfRange(k));
        }
        check_alpha(alpha)?;
        if !(epsilon > 0.0 && epsilon < 1.0 / alpha) {
            return Err(Error::EpsilonOutOfRange { epsilon, alpha });
        }
        let spacing_factor = 1.0 / alpha - epsilon;
        let mut positions = vec![0.0, 1.0];
        for _ in 1..k {
            let diameter = positions[positions.len() - 1] - positions[0];
            let shift = diameter + spacing_factor * diameter;
            let copy: Vec<f64> = positions.iter().map(|x| x + shift).collect();
            positions.extend(copy);
        }
        Self::from_line(positions)
    }

    pub fn gen_random_line(n_pairs: usize, seed: u64, gaps: GapDistribution) -> Result<Self> {
        if n_pairs == 0 {
            return Err(Error::InvalidParameter("n_pairs must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut positions = Vec::with_capacity(2 * n_pairs);
        let mut x = 0.0;
        positions.push(x);
        while positions.len() < 2 * n_pairs {
            let gap = sample_gap(&mut rng, gaps);
            if x + gap > x {
                x += gap;
                positions.push(x);
            }
        }
        Self::from_line(positions)
    }

    /// Uniform points in the unit cube with Euclidean distances. In one
    /// dimension (non-bipartite) the result is the sorted line instance.
    pub fn gen_random_euclidean(
        n_pairs: usize,
        seed: u64,
        dimension: usize,
        bipartite: bool,
    ) -> Result<Self> {
        if n_pairs == 0 {
            return Err(Error::InvalidParameter("n_pairs must be at least 1".into()));
        }
        if !(1..=2).contains(&dimension) {
            return Err(Error::InvalidParameter(format!("dimension {dimension} not in {{1, 2}}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let total = 2 * n_pairs;
        let mut points: Vec<[f64; 2]> = Vec::with_capacity(total);
        while points.len() < total {
            let mut p = [0.0; 2];
            for c in p.iter_mut().take(dimension) {
                *c = rng.random::<f64>();
            }
            if points.iter().all(|q| euclidean(&p, q) > 0.0) {
                points.push(p);
            }
        }
        if dimension == 1 && !bipartite {
            let mut xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
            xs.sort_by(f64::total_cmp);
            return Self::from_line(xs);
        }
        let rows: Vec<Vec<f64>> = (0..total)
            .map(|i| (0..total).map(|j| if i == j { 0.0 } else { euclidean(&points[i], &points[j]) }).collect())
            .collect();
        if bipartite {
            Self::build_bipartite(&rows)
        } else {
            Self::build_complete(&rows)
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn num_pairs(&self) -> usize {
        self.num_vertices / 2
    }

    pub fn kind(&self) -> InstanceKind {
        self.kind
    }

    pub fn embedding(&self) -> Option<&LineEmbedding> {
        match &self.weights {
            Weights::Line(e) => Some(e),
            Weights::Matrix(_) => None,
        }
    }

    #[inline]
    pub fn weight(&self, i: Vertex, j: Vertex) -> f64 {
        match &self.weights {
            Weights::Line(e) => (e.positions[j] - e.positions[i]).abs(),
            Weights::Matrix(m) => m[i * self.num_vertices + j],
        }
    }

    #[inline]
    pub fn side(&self, v: Vertex) -> usize {
        usize::from(v >= self.num_pairs())
    }

    /// Whether `(i, j)` belongs to the kind's edge set.
    #[inline]
    pub fn has_edge(&self, i: Vertex, j: Vertex) -> bool {
        i != j
            && match self.kind {
                InstanceKind::Complete => true,
                InstanceKind::CompleteBipartite => self.side(i) != self.side(j),
            }
    }

    /// All edges in canonical form, ordered by `(min, max)`.
    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        let n = self.num_vertices;
        (0..n).flat_map(move |i| ((i + 1)..n).filter(move |&j| self.has_edge(i, j)).map(move |j| (i, j)))
    }

    pub fn num_edges(&self) -> usize {
        let p = self.num_pairs();
        match self.kind {
            InstanceKind::Complete => self.num_vertices * (self.num_vertices - 1) / 2,
            InstanceKind::CompleteBipartite => p * p,
        }
    }

    /// Largest edge weight.
    pub fn diameter(&self) -> f64 {
        match &self.weights {
            Weights::Line(e) => e.diameter(),
            Weights::Matrix(_) => self.edges().map(|(i, j)| self.weight(i, j)).fold(0.0, f64::max),
        }
    }

    /// Triangle inequality for complete instances, quadrilateral inequality
    /// for bipartite ones. A line embedding certifies the metric by itself.
    pub fn metric_check(&self) -> MetricReport {
        if self.embedding().is_some() {
            return MetricReport { violation: None };
        }
        let violation = match self.kind {
            InstanceKind::Complete => self.find_triangle_violation(),
            InstanceKind::CompleteBipartite => self.find_quadrilateral_violation(),
        };
        MetricReport { violation }
    }

    fn find_triangle_violation(&self) -> Option<MetricViolation> {
        let n = self.num_vertices;
        for i in 0..n {
            for j in (i + 1)..n {
                let wij = self.weight(i, j);
                for via in (0..n).filter(|&k| k != i && k != j) {
                    let detour = self.weight(i, via) + self.weight(via, j);
                    if exceeds(wij, detour) {
                        return Some(MetricViolation::Triangle { i, j, via, wij, detour });
                    }
                }
            }
        }
        None
    }

    fn find_quadrilateral_violation(&self) -> Option<MetricViolation> {
        let p = self.num_pairs();
        for u in 0..p {
            for v in p..2 * p {
                let wuv = self.weight(u, v);
                for u2 in (0..p).filter(|&x| x != u) {
                    for v2 in (p..2 * p).filter(|&x| x != v) {
                        let detour = self.weight(u, v2) + self.weight(u2, v2) + self.weight(u2, v);
                        if exceeds(wuv, detour) {
                            return Some(MetricViolation::Quadrilateral { u, v, u2, v2, wuv, detour });
                        }
                    }
                }
            }
        }
        None
    }

    /// Full weight matrix, diagonal 0.
    pub fn weight_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.num_vertices;
        (0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { self.weight(i, j) }).collect()).collect()
    }

    pub fn to_json(&self) -> String {
        self.to_json_with_meta(None)
    }

    pub fn to_json_with_meta(&self, meta: Option<Value>) -> String {
        let repr = match (&self.weights, self.kind) {
            (Weights::Line(e), _) => {
                Repr::Line { positions: e.positions.iter().copied().map(Num).collect(), meta }
            }
            (Weights::Matrix(_), kind) => {
                let weights = self.weight_matrix().into_iter().map(|r| r.into_iter().map(Num).collect()).collect();
                match kind {
                    InstanceKind::Complete => Repr::Complete { weights, meta },
                    InstanceKind::CompleteBipartite => Repr::Bipartite { weights, meta },
                }
            }
        };
        serde_json::to_string(&repr).expect("instance serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_json_with_meta(text).map(|(instance, _)| instance)
    }

    pub fn from_json_with_meta(text: &str) -> Result<(Self, Option<Value>)> {
        let repr: Repr = serde_json::from_str(text)?;
        let unwrap = |rows: Vec<Vec<Num>>| -> Vec<Vec<f64>> {
            rows.into_iter().map(|r| r.into_iter().map(|x| x.0).collect()).collect()
        };
        let (built, meta) = match repr {
            Repr::Line { positions, meta } => {
                (Self::from_line(positions.into_iter().map(|x| x.0).collect()), meta)
            }
            Repr::Complete { weights, meta } => (Self::build_complete(&unwrap(weights)), meta),
            Repr::Bipartite { weights, meta } => (Self::build_bipartite(&unwrap(weights)), meta),
        };
        built.map(|i| (i, meta)).map_err(|e| Error::Validation(Box::new(e)))
    }
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_nan() || alpha < 1.0 {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    Ok(())
}

/// Default perturbation for the alpha family: `1 / (16 alpha k)`.
pub fn default_epsilon(k: u32, alpha: f64) -> f64 {
    1.0 / (16.0 * alpha * f64::from(k))
}

fn sample_gap(rng: &mut ChaCha8Rng, gaps: GapDistribution) -> f64 {
    loop {
        let g = match gaps {
            GapDistribution::UniformUnit => 1.0 - rng.random::<f64>(),
            GapDistribution::Exponential => Exp1.sample(rng),
        };
        if g > 0.0 {
            return g;
        }
    }
}

fn euclidean(p: &[f64; 2], q: &[f64; 2]) -> f64 {
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

/// A number that serializes integral values without a fractional part and
/// everything else in shortest round-trip form.
#[derive(Clone, Copy, Debug)]
struct Num(f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.fract() == 0.0 && self.0.abs() < 9.007_199_254_740_992e15 {
            s.serialize_i64(self.0 as i64)
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        f64::deserialize(d).map(Num)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Repr {
    Line {
        positions: Vec<Num>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        meta: Option<Value>,
    },
    Complete {
        weights: Vec<Vec<Num>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        meta: Option<Value>,
    },
    Bipartite {
        weights: Vec<Vec<Num>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        meta: Option<Value>,
    },
}
