//! Experiment pipeline: generate an instance, find the optimum, run greedy,
//! build the flip forest, run every check, and summarize the result as one
//! record. Also hosts the randomized extremality searches.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::flipforest::{
    balanced_weights, closed_form_effect, forest_cost_bound, full_binary_shapes, AbstractTree, CostBoundReport,
    DecompositionReport, FlipForest, WeightBoundReport,
};
use crate::greedy::{check_trace_lemmas, run_greedy, FlipTrace, LemmaReport};
use crate::instances::{default_epsilon, GapDistribution, MetricInstance};
use crate::matchings::{
    consecutive_matching, cost, exact_summary, is_alpha_stable, line_pos_matching, min_cost_matching, PerfectMatching,
};

pub const CSV_HEADER: &str = "family,k,alpha,epsilon,n_pairs,c_opt,c_greedy,ratio,bound,flips,checks,seed,wall_time_ms";

/// Largest leaf count accepted by the exhaustive tree search.
pub const MAX_SEARCH_LEAVES: usize = 16;
/// Largest `k` (so `2^k` vertices) accepted by the line search.
pub const MAX_SEARCH_LINE_K: u32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Rt,
    RtAlpha,
    RandomLine,
    RandomEuclidean,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Rt => "rt",
            Family::RtAlpha => "rt-alpha",
            Family::RandomLine => "random-line",
            Family::RandomEuclidean => "random-euclidean",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rt" => Ok(Family::Rt),
            "rt-alpha" => Ok(Family::RtAlpha),
            "random-line" => Ok(Family::RandomLine),
            "random-euclidean" => Ok(Family::RandomEuclidean),
            other => Err(Error::InvalidParameter(format!("unknown family {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EpsilonPolicy {
    /// `1 / (16 alpha k)`.
    Default,
    Fixed(f64),
}

impl EpsilonPolicy {
    pub fn resolve(self, k: u32, alpha: f64) -> f64 {
        match self {
            EpsilonPolicy::Default => default_epsilon(k, alpha),
            EpsilonPolicy::Fixed(e) => e,
        }
    }
}

impl FromStr for EpsilonPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "default" {
            return Ok(EpsilonPolicy::Default);
        }
        s.parse::<f64>()
            .map(EpsilonPolicy::Fixed)
            .map_err(|_| Error::InvalidParameter(format!("epsilon must be a number or \"default\", got {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AlphaSpec {
    Fixed(f64),
    /// `max(1, ceil(log2 n))` for `n` pairs.
    Log2N,
}

impl AlphaSpec {
    pub fn resolve(self, n_pairs: usize) -> f64 {
        match self {
            AlphaSpec::Fixed(a) => a,
            AlphaSpec::Log2N => {
                let bits = usize::BITS - (n_pairs.max(1) - 1).leading_zeros();
                f64::from(bits.max(1))
            }
        }
    }
}

impl FromStr for AlphaSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "log2n" || s == "log" {
            return Ok(AlphaSpec::Log2N);
        }
        s.parse::<f64>()
            .map(AlphaSpec::Fixed)
            .map_err(|_| Error::InvalidParameter(format!("alpha must be a number or \"log2n\", got {s:?}")))
    }
}

/// Everything needed to build one instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorSpec {
    pub family: Family,
    pub k: u32,
    pub alpha: f64,
    pub epsilon: EpsilonPolicy,
    pub seed: u64,
}

impl GeneratorSpec {
    /// Number of pairs: `2^(k-1)` for every family.
    pub fn n_pairs(&self) -> usize {
        1usize << (self.k.max(1) - 1)
    }

    /// The epsilon actually used, for the families that have one.
    pub fn epsilon_value(&self) -> Option<f64> {
        (self.family == Family::RtAlpha).then(|| self.epsilon.resolve(self.k, self.alpha))
    }

    pub fn seed_value(&self) -> Option<u64> {
        matches!(self.family, Family::RandomLine | Family::RandomEuclidean).then_some(self.seed)
    }

    pub fn generate(&self) -> Result<MetricInstance> {
        if self.k == 0 {
            return Err(Error::KOutOfRange(0));
        }
        match self.family {
            Family::Rt => MetricInstance::gen_rt(self.k),
            Family::RtAlpha => MetricInstance::gen_rt_alpha(self.k, self.alpha, self.epsilon.resolve(self.k, self.alpha)),
            Family::RandomLine => MetricInstance::gen_random_line(self.n_pairs(), self.seed, GapDistribution::UniformUnit),
            Family::RandomEuclidean => MetricInstance::gen_random_euclidean(self.n_pairs(), self.seed, 2, false),
        }
    }

    pub fn meta(&self) -> Value {
        serde_json::json!({
            "generator": self.family.as_str(),
            "k": self.k,
            "alpha": self.alpha,
            "epsilon": self.epsilon_value(),
            "seed": self.seed_value(),
        })
    }
}

/// Minimum-cost matching: the consecutive pairing on line instances,
/// exhaustive search otherwise.
pub fn optimal_matching(instance: &MetricInstance, max_enum: usize) -> Result<(PerfectMatching, f64)> {
    if instance.embedding().is_some() {
        let m = consecutive_matching(instance)?;
        let c = cost(&m, instance)?;
        Ok((m, c))
    } else {
        min_cost_matching(instance, max_enum)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckFlags {
    pub lemmas: bool,
    pub weight_bound: bool,
    pub decomposition: bool,
    pub cost_bound: bool,
}

impl CheckFlags {
    pub fn all_pass(&self) -> bool {
        self.lemmas && self.weight_bound && self.decomposition && self.cost_bound
    }

    pub fn summary(&self) -> String {
        if self.all_pass() {
            return "pass".into();
        }
        let failed: Vec<&str> = [
            (self.lemmas, "lemmas"),
            (self.weight_bound, "weight_bound"),
            (self.decomposition, "decomposition"),
            (self.cost_bound, "cost_bound"),
        ]
        .into_iter()
        .filter(|(ok, _)| !ok)
        .map(|(_, name)| name)
        .collect();
        format!("fail:{}", failed.join(";"))
    }
}

/// One sweep row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub family: String,
    pub k: u32,
    pub alpha: f64,
    pub epsilon: Option<f64>,
    pub n_pairs: usize,
    pub c_opt: f64,
    pub c_greedy: f64,
    pub ratio: f64,
    /// `n^log2(1 + 1/(2 alpha))` without constants.
    pub bound: f64,
    pub flips: usize,
    pub lemma_checks: Option<CheckFlags>,
    pub seed: Option<u64>,
    pub wall_time_ms: u64,
    /// Cost ratio of the off-by-one pairing on line instances.
    pub line_pos_ratio: Option<f64>,
    /// `2 * sum wb(root) / c_opt - 1`.
    pub forest_ratio_bound: Option<f64>,
    pub error: Option<String>,
}

impl ExperimentRecord {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.lemma_checks.as_ref().is_some_and(CheckFlags::all_pass)
    }

    pub fn checks_column(&self) -> String {
        match (&self.error, &self.lemma_checks) {
            (Some(e), _) => format!("error:{}", e.replace([',', '\n', '"'], " ")),
            (None, Some(c)) => c.summary(),
            (None, None) => "none".into(),
        }
    }

    pub fn csv_row(&self) -> String {
        let opt = |x: Option<f64>| x.map(fmt_g17).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.family,
            self.k,
            fmt_g17(self.alpha),
            opt(self.epsilon),
            self.n_pairs,
            fmt_g17(self.c_opt),
            fmt_g17(self.c_greedy),
            fmt_g17(self.ratio),
            fmt_g17(self.bound),
            self.flips,
            self.checks_column(),
            self.seed.map(|s| s.to_string()).unwrap_or_default(),
            self.wall_time_ms,
        )
    }
}

pub fn records_to_csv(records: &[ExperimentRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// `n^log2(1 + 1/(2 alpha))`.
pub fn pos_bound(n_pairs: usize, alpha: f64) -> f64 {
    (n_pairs as f64).powf((1.0 + 1.0 / (2.0 * alpha)).log2())
}

/// `(2 * 3^(k-1) - 2^(k-1)) / 2^(k-1)`, computed exactly in integers
/// before the final division.
pub fn rt_ratio(k: u32) -> f64 {
    let three = 3u64.pow(k - 1);
    let two = 1u64 << (k - 1);
    (2 * three - two) as f64 / two as f64
}

#[derive(Clone, Debug)]
pub struct GreedyOutcome {
    pub optimal: PerfectMatching,
    pub c_opt: f64,
    pub greedy: PerfectMatching,
    pub c_greedy: f64,
    pub trace: FlipTrace,
    pub forest: FlipForest,
    pub lemmas: LemmaReport,
    pub weight_bound: WeightBoundReport,
    pub decomposition: DecompositionReport,
    pub cost_bound: CostBoundReport,
}

impl GreedyOutcome {
    pub fn flags(&self) -> CheckFlags {
        CheckFlags {
            lemmas: self.lemmas.all_pass(),
            weight_bound: self.weight_bound.passed,
            decomposition: self.decomposition.passed,
            cost_bound: self.cost_bound.passed(),
        }
    }

    pub fn ratio(&self) -> f64 {
        self.c_greedy / self.c_opt
    }
}

/// Greedy plus every trace and forest check.
pub fn greedy_pipeline(instance: &MetricInstance, alpha: f64, max_enum: usize) -> Result<GreedyOutcome> {
    let (optimal, c_opt) = optimal_matching(instance, max_enum)?;
    let (greedy, trace) = run_greedy(instance, &optimal, alpha)?;
    let c_greedy = cost(&greedy, instance)?;
    let lemmas = check_trace_lemmas(&trace)?;
    let forest = FlipForest::build(&trace)?;
    let weight_bound = forest.check_weight_bound();
    let decomposition = forest.check_decomposition_identities();
    let cost_bound = forest_cost_bound(&trace, &forest)?;
    Ok(GreedyOutcome { optimal, c_opt, greedy, c_greedy, trace, forest, lemmas, weight_bound, decomposition, cost_bound })
}

/// Runs one `(family, k, alpha)` cell. Failures are recorded, not raised.
pub fn run_experiment(spec: &GeneratorSpec, max_enum: usize, timing: bool) -> ExperimentRecord {
    let start = Instant::now();
    let mut record = ExperimentRecord {
        family: spec.family.as_str().into(),
        k: spec.k,
        alpha: spec.alpha,
        epsilon: spec.epsilon_value(),
        n_pairs: spec.n_pairs(),
        c_opt: f64::NAN,
        c_greedy: f64::NAN,
        ratio: f64::NAN,
        bound: pos_bound(spec.n_pairs(), spec.alpha),
        flips: 0,
        lemma_checks: None,
        seed: spec.seed_value(),
        wall_time_ms: 0,
        line_pos_ratio: None,
        forest_ratio_bound: None,
        error: None,
    };
    let outcome = spec.generate().and_then(|inst| {
        let out = greedy_pipeline(&inst, spec.alpha, max_enum)?;
        let line_pos = match line_pos_matching(&inst) {
            Ok(m) => Some(cost(&m, &inst)? / out.c_opt),
            Err(_) => None,
        };
        Ok((out, line_pos))
    });
    match outcome {
        Ok((out, line_pos)) => {
            record.c_opt = out.c_opt;
            record.c_greedy = out.c_greedy;
            record.ratio = out.ratio();
            record.flips = out.trace.flips();
            record.lemma_checks = Some(out.flags());
            record.line_pos_ratio = line_pos;
            record.forest_ratio_bound = Some(2.0 * out.cost_bound.root_weight_sum / out.c_opt - 1.0);
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    if timing {
        record.wall_time_ms = start.elapsed().as_millis() as u64;
    }
    record
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub family: Family,
    pub k_min: u32,
    pub k_max: u32,
    pub alphas: Vec<AlphaSpec>,
    pub epsilon: EpsilonPolicy,
    pub seed: u64,
    pub max_enum: usize,
    pub timing: bool,
}

impl SweepConfig {
    /// Cells in output order: by k, then by position in the alpha list.
    pub fn cells(&self) -> Vec<GeneratorSpec> {
        let mut out = Vec::new();
        for k in self.k_min..=self.k_max {
            for a in &self.alphas {
                let n_pairs = 1usize << (k.max(1) - 1);
                out.push(GeneratorSpec {
                    family: self.family,
                    k,
                    alpha: a.resolve(n_pairs),
                    epsilon: self.epsilon,
                    seed: self.seed.wrapping_add(u64::from(k)),
                });
            }
        }
        out
    }
}

/// Runs the sweep on `threads` workers (`None` = rayon's default pool).
/// Records come back in [`SweepConfig::cells`] order regardless.
pub fn run_sweep(config: &SweepConfig, threads: Option<usize>) -> Result<Vec<ExperimentRecord>> {
    let cells = config.cells();
    let work = || cells.par_iter().map(|spec| run_experiment(spec, config.max_enum, config.timing)).collect();
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            Ok(pool.install(work))
        }
        None => Ok(work()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchKind {
    LineMcPoa,
    TreeEffect,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchRecord {
    pub kind: SearchKind,
    pub trials: u64,
    pub best_found: f64,
    pub theoretical_max: f64,
    pub within_bound: bool,
    pub witness: Option<Value>,
}

/// Samples weighted line graphs on `2^k` vertices with i.i.d. `Exp(1)`
/// gaps, keeps those whose off-by-one pairing is stable, and records the
/// largest cost ratio seen.
pub fn search_line_mc(k: u32, trials: u64, seed: u64) -> Result<SearchRecord> {
    if !(1..=MAX_SEARCH_LINE_K).contains(&k) {
        return Err(Error::InvalidParameter(format!("k = {k} outside 1..={MAX_SEARCH_LINE_K}")));
    }
    let n = 1usize << k;
    let theoretical_max = rt_ratio(k);
    let mut best = 1.0;
    let mut witness = None;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let mut xs = Vec::with_capacity(n);
        xs.push(0.0);
        while xs.len() < n {
            let g: f64 = Exp1.sample(&mut rng);
            let last = xs[xs.len() - 1];
            if last + g > last {
                xs.push(last + g);
            }
        }
        if n < 4 {
            continue;
        }
        let inst = MetricInstance::from_line(xs)?;
        let m = line_pos_matching(&inst)?;
        if !is_alpha_stable(&inst, &m, 1.0) {
            continue;
        }
        let ratio = cost(&m, &inst)? / cost(&consecutive_matching(&inst)?, &inst)?;
        if ratio > best {
            best = ratio;
            witness = Some(serde_json::from_str(&inst.to_json())?);
        }
    }
    Ok(SearchRecord {
        kind: SearchKind::LineMcPoa,
        trials,
        best_found: best,
        theoretical_max,
        within_bound: best <= theoretical_max + 1e-9,
        witness,
    })
}

/// Structured leaf weights tried on every shape: w-balanced, one-hot, and
/// geometric.
pub fn structured_weights(shape: &crate::flipforest::Shape, alpha: f64) -> Vec<Vec<f64>> {
    let n = shape.leaves();
    let mut one_hot = vec![0.0; n];
    one_hot[0] = 1.0;
    let geometric = (0..n).map(|i| 0.5f64.powi(i as i32)).collect();
    vec![balanced_weights(shape, alpha), one_hot, geometric]
}

/// Maximum effect over every full binary tree shape with `n` leaves,
/// crossed with structured weights and `trials` random uniform weight
/// vectors per shape.
pub fn search_tree_effect(n_leaves: usize, alpha: f64, trials: u64, seed: u64) -> Result<SearchRecord> {
    if n_leaves > MAX_SEARCH_LEAVES {
        return Err(Error::NTooLarge(n_leaves));
    }
    if n_leaves == 0 {
        return Err(Error::InvalidParameter("a tree needs at least one leaf".into()));
    }
    crate::instances::check_alpha(alpha)?;
    let shapes = full_binary_shapes(n_leaves);
    let per_shape: Vec<(f64, usize, Vec<f64>, u64)> = shapes
        .par_iter()
        .enumerate()
        .map(|(index, shape)| -> Result<(f64, usize, Vec<f64>, u64)> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(index as u64);
            let mut candidates = structured_weights(shape, alpha);
            for _ in 0..trials {
                candidates.push((0..n_leaves).map(|_| rng.random::<f64>()).collect());
            }
            let count = candidates.len() as u64;
            let mut best = (f64::NEG_INFINITY, Vec::new());
            for w in candidates {
                let e = AbstractTree::from_shape(shape, &w, alpha)?.effect();
                if e > best.0 {
                    best = (e, w);
                }
            }
            Ok((best.0, index, best.1, count))
        })
        .collect::<Result<_>>()?;
    let total: u64 = per_shape.iter().map(|p| p.3).sum();
    let (best, index, weights, _) = per_shape
        .into_iter()
        .reduce(|a, b| if b.0 > a.0 { b } else { a })
        .expect("at least one shape");
    let theoretical_max = closed_form_effect(n_leaves, alpha);
    let tree = AbstractTree::from_shape(&shapes[index], &weights, alpha)?;
    Ok(SearchRecord {
        kind: SearchKind::TreeEffect,
        trials: total,
        best_found: best,
        theoretical_max,
        within_bound: best <= theoretical_max + 1e-9,
        witness: Some(serde_json::from_str(&tree.to_json())?),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Stages {
    pub exact: bool,
    pub greedy: bool,
    pub forest: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExactReport {
    pub c_opt: f64,
    pub poa: f64,
    pub poa_witness: PerfectMatching,
    pub pos: f64,
    pub pos_witness: PerfectMatching,
    pub stable_count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GreedyReport {
    pub c_opt: f64,
    pub c_greedy: f64,
    pub ratio: f64,
    pub flips: usize,
    pub matching: PerfectMatching,
    pub lemmas: LemmaReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ForestReport {
    pub trees: usize,
    pub weight_bound: WeightBoundReport,
    pub decomposition: DecompositionReport,
    pub cost_bound: CostBoundReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub alpha: f64,
    pub n_pairs: usize,
    pub metric_ok: bool,
    pub exact: Option<ExactReport>,
    pub greedy: Option<GreedyReport>,
    pub forest: Option<ForestReport>,
}

impl AnalysisReport {
    pub fn passed(&self) -> bool {
        self.metric_ok
            && self.greedy.as_ref().is_none_or(|g| g.lemmas.all_pass())
            && self
                .forest
                .as_ref()
                .is_none_or(|f| f.weight_bound.passed && f.decomposition.passed && f.cost_bound.passed())
    }
}

/// Runs the requested stages. The forest stage implies the greedy stage.
pub fn analyze(
    instance: &MetricInstance,
    alpha: f64,
    stages: Stages,
    max_enum: usize,
) -> Result<(AnalysisReport, Option<FlipTrace>)> {
    crate::instances::check_alpha(alpha)?;
    let mut report = AnalysisReport {
        alpha,
        n_pairs: instance.num_pairs(),
        metric_ok: instance.metric_check().passes(),
        exact: None,
        greedy: None,
        forest: None,
    };
    if stages.exact {
        let s = exact_summary(instance, alpha, max_enum)?;
        report.exact = Some(ExactReport {
            c_opt: s.optimal_cost,
            poa: s.poa.ratio,
            poa_witness: s.poa.witness,
            pos: s.pos.ratio,
            pos_witness: s.pos.witness,
            stable_count: s.stable_count,
        });
    }
    let mut trace = None;
    if stages.greedy || stages.forest {
        let out = greedy_pipeline(instance, alpha, max_enum)?;
        report.greedy = Some(GreedyReport {
            c_opt: out.c_opt,
            c_greedy: out.c_greedy,
            ratio: out.ratio(),
            flips: out.trace.flips(),
            matching: out.greedy.clone(),
            lemmas: out.lemmas.clone(),
        });
        if stages.forest {
            report.forest = Some(ForestReport {
                trees: out.forest.roots().len(),
                weight_bound: out.weight_bound.clone(),
                decomposition: out.decomposition.clone(),
                cost_bound: out.cost_bound.clone(),
            });
        }
        trace = Some(out.trace);
    }
    Ok((report, trace))
}

/// `%.17g`: 17 significant digits, trailing zeros trimmed.
pub fn fmt_g17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..17).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        trim_zeros(&format!("{x:.*}", (16 - exp) as usize)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
