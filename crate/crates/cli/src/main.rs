//! Command-line driver: generate instances, analyse them, run sweeps and
//! the randomized extremality searches.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use selfish_matching::harness::{
    analyze, records_to_csv, run_sweep, search_line_mc, search_tree_effect, AlphaSpec, EpsilonPolicy, Family,
    GeneratorSpec, SearchRecord, Stages, SweepConfig,
};
use selfish_matching::instances::{GapDistribution, MetricInstance, MetricViolation};
use selfish_matching::matchings::DEFAULT_MAX_ENUM;

#[derive(Parser)]
#[command(name = "selfish-matching", version)]
#[command(about = "Price of anarchy and stability experiments for stable min-cost perfect matchings")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Seed for every randomized step
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Largest vertex count accepted by exhaustive enumeration
    #[arg(long, global = true, default_value_t = DEFAULT_MAX_ENUM)]
    max_enum: usize,
    /// Worker threads (default: one per core)
    #[arg(long, global = true, env = "SELFISH_MATCHING_THREADS")]
    threads: Option<usize>,
    /// Output format (default: csv for sweep, json otherwise)
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Write the main output here instead of stdout
    #[arg(short = 'o', long = "output", global = true)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Rt,
    RtAlpha,
    RandomLine,
    RandomEuclidean,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Rt => Family::Rt,
            FamilyArg::RtAlpha => Family::RtAlpha,
            FamilyArg::RandomLine => Family::RandomLine,
            FamilyArg::RandomEuclidean => Family::RandomEuclidean,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GapsArg {
    Uniform,
    Exp,
}

#[derive(Subcommand)]
enum Command {
    /// Build an instance and write it as JSON
    Generate {
        #[arg(value_enum)]
        family: FamilyArg,
        /// Recursion level for rt / rt-alpha
        #[arg(long)]
        k: Option<u32>,
        /// Number of pairs for the random families
        #[arg(long)]
        pairs: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Number, or "default" for 1/(16 alpha k)
        #[arg(long, default_value = "default")]
        epsilon: String,
        #[arg(long, value_enum, default_value = "uniform")]
        gaps: GapsArg,
        #[arg(long, default_value_t = 2)]
        dimension: usize,
        #[arg(long)]
        bipartite: bool,
    },
    /// Run exact / greedy / forest stages on an instance file
    Analyze {
        instance: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Exhaustive PoA, PoS and stable count
        #[arg(long)]
        exact: bool,
        #[arg(long)]
        greedy: bool,
        /// Flip-forest checks (implies --greedy)
        #[arg(long)]
        forest: bool,
        /// Where to write the greedy flip trace
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// One record per (k, alpha) cell
    Sweep {
        #[arg(value_enum)]
        family: FamilyArg,
        #[arg(long, default_value_t = 1)]
        k_min: u32,
        #[arg(long)]
        k_max: u32,
        /// Comma-separated; "log2n" means max(1, ceil(log2 n))
        #[arg(long, default_value = "1", value_delimiter = ',')]
        alpha: Vec<String>,
        #[arg(long, default_value = "default")]
        epsilon: String,
        /// Write 0 in wall_time_ms so reruns are byte-identical
        #[arg(long)]
        no_timing: bool,
    },
    /// Monte Carlo search for bad stable matchings on weighted lines
    SearchLineMc {
        /// 2^k vertices
        #[arg(long)]
        k: u32,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
    },
    /// Maximise tree effect over all shapes with n leaves
    SearchTreeEffect {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Random weight vectors per shape
        #[arg(long, default_value_t = 100)]
        trials: u64,
    },
    /// Validate the metric conditions of an instance file
    Check { instance: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Returns whether every check passed.
fn run(cli: Cli) -> Result<bool> {
    let g = &cli.global;
    match cli.command {
        Command::Generate { family, k, pairs, alpha, epsilon, gaps, dimension, bipartite } => {
            let family = Family::from(family);
            let (instance, meta) = generate(family, k, pairs, alpha, &epsilon, gaps, dimension, bipartite, g.seed)?;
            let text = instance.to_json_with_meta(Some(meta));
            emit(g.output.as_deref(), &text)?;
            let report = instance.metric_check();
            let summary = format!(
                "n={} pairs={} diameter={} metric={}",
                instance.num_vertices(),
                instance.num_pairs(),
                instance.diameter(),
                if report.passes() { "ok" } else { "violated" }
            );
            // keep stdout clean when it carries the instance
            if g.output.is_some() {
                println!("{summary}");
            } else {
                eprintln!("{summary}");
            }
            Ok(true)
        }
        Command::Analyze { instance, alpha, exact, greedy, forest, trace } => {
            let inst = read_instance(&instance)?;
            let mut stages = Stages { exact, greedy, forest };
            if !(exact || greedy || forest) {
                stages.greedy = true;
                stages.forest = true;
            }
            let (report, tr) = analyze(&inst, alpha, stages, g.max_enum)?;
            let mut value = serde_json::to_value(&report)?;
            if let (Some(path), Some(tr)) = (&trace, &tr) {
                fs::write(path, tr.to_json()).with_context(|| format!("writing {}", path.display()))?;
                value["trace_path"] = json!(path.display().to_string());
            }
            let text = match g.format.unwrap_or(Format::Json) {
                Format::Json => serde_json::to_string_pretty(&value)? + "\n",
                Format::Csv => flatten_csv(&value),
            };
            emit(g.output.as_deref(), &text)?;
            Ok(report.passed())
        }
        Command::Sweep { family, k_min, k_max, alpha, epsilon, no_timing } => {
            let alphas = alpha.iter().map(|a| a.trim().parse::<AlphaSpec>()).collect::<Result<Vec<_>, _>>()?;
            let config = SweepConfig {
                family: family.into(),
                k_min,
                k_max,
                alphas,
                epsilon: epsilon.parse()?,
                seed: g.seed,
                max_enum: g.max_enum,
                timing: !no_timing,
            };
            let records = run_sweep(&config, g.threads)?;
            let ok = records.iter().all(|r| r.passed());
            let text = match g.format.unwrap_or(Format::Csv) {
                Format::Csv => records_to_csv(&records),
                Format::Json => serde_json::to_string_pretty(&records)? + "\n",
            };
            emit(g.output.as_deref(), &text)?;
            Ok(ok)
        }
        Command::SearchLineMc { k, trials } => {
            let record = search_line_mc(k, trials, g.seed)?;
            emit_search(g, &record)
        }
        Command::SearchTreeEffect { n, alpha, trials } => {
            let record = match g.threads {
                Some(t) => rayon::ThreadPoolBuilder::new()
                    .num_threads(t.max(1))
                    .build()?
                    .install(|| search_tree_effect(n, alpha, trials, g.seed))?,
                None => search_tree_effect(n, alpha, trials, g.seed)?,
            };
            emit_search(g, &record)
        }
        Command::Check { instance } => {
            let text = fs::read_to_string(&instance).with_context(|| format!("reading {}", instance.display()))?;
            // loading already rejects non-metric input, so a metric failure
            // arrives as a validation error
            let (n, violation) = match MetricInstance::from_json(&text) {
                Ok(inst) => (Some(inst.num_vertices()), inst.metric_check().violation.as_ref().map(describe_violation)),
                Err(selfish_matching::Error::Validation(e)) => match *e {
                    selfish_matching::Error::NotMetric { i, j, via, wij, detour } => (
                        None,
                        Some(describe_violation(&MetricViolation::Triangle { i, j, via, wij, detour })),
                    ),
                    selfish_matching::Error::NotBipartiteMetric { u, v, u2, v2, wuv, detour } => (
                        None,
                        Some(describe_violation(&MetricViolation::Quadrilateral { u, v, u2, v2, wuv, detour })),
                    ),
                    other => bail!("{}: {other}", instance.display()),
                },
                Err(e) => bail!("{}: {e}", instance.display()),
            };
            let passes = violation.is_none();
            let value = json!({ "n": n, "metric": passes, "violation": violation });
            let text = match g.format.unwrap_or(Format::Json) {
                Format::Json => serde_json::to_string_pretty(&value)? + "\n",
                Format::Csv => flatten_csv(&value),
            };
            emit(g.output.as_deref(), &text)?;
            Ok(passes)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn generate(
    family: Family,
    k: Option<u32>,
    pairs: Option<usize>,
    alpha: f64,
    epsilon: &str,
    gaps: GapsArg,
    dimension: usize,
    bipartite: bool,
    seed: u64,
) -> Result<(MetricInstance, Value)> {
    let epsilon: EpsilonPolicy = epsilon.parse()?;
    match family {
        Family::Rt | Family::RtAlpha => {
            let Some(k) = k else { bail!("{family} needs --k") };
            let spec = GeneratorSpec { family, k, alpha, epsilon, seed };
            Ok((spec.generate()?, spec.meta()))
        }
        Family::RandomLine | Family::RandomEuclidean => {
            let n_pairs = match (pairs, k) {
                (Some(p), _) => p,
                (None, Some(k)) if k >= 1 => 1usize << (k - 1),
                _ => bail!("{family} needs --pairs or --k"),
            };
            let inst = if family == Family::RandomLine {
                let dist = match gaps {
                    GapsArg::Uniform => GapDistribution::UniformUnit,
                    GapsArg::Exp => GapDistribution::Exponential,
                };
                MetricInstance::gen_random_line(n_pairs, seed, dist)?
            } else {
                MetricInstance::gen_random_euclidean(n_pairs, seed, dimension, bipartite)?
            };
            let meta = json!({ "generator": family.as_str(), "pairs": n_pairs, "seed": seed });
            Ok((inst, meta))
        }
    }
}

fn describe_violation(v: &MetricViolation) -> Value {
    match v {
        MetricViolation::Triangle { i, j, via, wij, detour } => {
            json!({ "kind": "triangle", "i": i, "j": j, "via": via, "w": wij, "detour": detour })
        }
        MetricViolation::Quadrilateral { u, v, u2, v2, wuv, detour } => {
            json!({ "kind": "quadrilateral", "u": u, "v": v, "u2": u2, "v2": v2, "w": wuv, "detour": detour })
        }
    }
}

fn emit_search(g: &Global, record: &SearchRecord) -> Result<bool> {
    let text = match g.format.unwrap_or(Format::Json) {
        Format::Json => serde_json::to_string_pretty(record)? + "\n",
        Format::Csv => {
            let mut v = serde_json::to_value(record)?;
            v.as_object_mut().expect("object").remove("witness");
            flatten_csv(&v)
        }
    };
    emit(g.output.as_deref(), &text)?;
    Ok(record.within_bound)
}

fn read_instance(path: &Path) -> Result<MetricInstance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    MetricInstance::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(out.flush()?)
        }
    }
}

/// Two-column `key,value` CSV of the scalar leaves of a JSON object, with
/// nested keys joined by dots.
fn flatten_csv(value: &Value) -> String {
    fn walk(prefix: &str, v: &Value, out: &mut String) {
        match v {
            Value::Object(map) => {
                for (k, child) in map {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, child, out);
                }
            }
            Value::Array(_) => {
                out.push_str(&format!("{prefix},\"{}\"\n", v.to_string().replace('"', "\"\"")));
            }
            Value::Null => out.push_str(&format!("{prefix},\n")),
            Value::String(s) => out.push_str(&format!("{prefix},{}\n", s.replace(',', ";"))),
            other => out.push_str(&format!("{prefix},{other}\n")),
        }
    }
    let mut out = String::from("key,value\n");
    walk("", value, &mut out);
    out
}
