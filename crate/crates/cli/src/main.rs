//! `rcoal`: command-line front end for ranked tree shapes under the
//! Kingman coalescent.

mod output;

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ranked_coalescent::bcp::{bcp_states, e_pmf, partition_numbers};
use ranked_coalescent::betasplit::BetaSplitter;
use ranked_coalescent::feedforward::nonfixed_moments;
use ranked_coalescent::fmatrix::{nonfixed_positions, FMatrix};
use ranked_coalescent::frechet::{frechet_objective, mean_matrix_exact, mean_matrix_sample, vitreebi_with_cap, DEFAULT_PATH_CAP};
use ranked_coalescent::io::{parse_json_line, read_corpus, to_json_line};
use ranked_coalescent::kingman::{kernel, sample_path, simulate_codes};
use ranked_coalescent::linalg::dot;
use ranked_coalescent::neutrality::{power_curve, NullModel, PowerConfig, SampleSummary, TestKind, DEFAULT_BOXES};
use ranked_coalescent::statespace::{enumerate_states, fib, DEFAULT_MAX_N};
use ranked_coalescent::{Error, Rational, Result, Scalar};
use serde_json::{json, Value};

use crate::output::{csv_writer, with_output};

/// Largest `n` for which rational arithmetic is used by default, and the
/// largest accepted for full-covariance jobs in rational mode.
const RATIONAL_MAX_N: usize = 12;

#[derive(Parser)]
#[command(name = "rcoal", version, about = "Ranked tree shapes, the ranked coalescent and tests of neutrality")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true, env = "RCOAL_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Numeric {
    /// Rational for n <= 12, float above.
    Auto,
    Rational,
    Float,
}

impl Numeric {
    fn exact_for(self, n: usize) -> bool {
        match self {
            Numeric::Auto => n <= RATIONAL_MAX_N,
            Numeric::Rational => true,
            Numeric::Float => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Model {
    Kingman,
    Beta,
}

#[derive(Args)]
struct OutArg {
    /// Output file, written atomically (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate the state space X_n.
    ///
    /// Default output is CSV `index,tier,x` with `x` the state vector,
    /// space-separated, states in tier-major order.
    Statespace {
        #[arg(long)]
        n: usize,
        /// Print only |X_n| including the absorbing state.
        #[arg(long, conflicts_with = "tiers")]
        sizes: bool,
        /// Print CSV `tier,size`.
        #[arg(long)]
        tiers: bool,
        /// Allow n above the default limit of 30.
        #[arg(long)]
        force: bool,
        #[command(flatten)]
        out: OutArg,
    },
    /// Transition probabilities of the ranked coalescent as CSV
    /// `from,to,probability` (1-based global state indices).
    Kernel {
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value = "auto")]
        numeric: Numeric,
        #[command(flatten)]
        out: OutArg,
    },
    /// Draw chain paths from the Kingman kernel. JSONL lines
    /// `{"n", "tri", "path"}`; readable as a tree corpus.
    Sample {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Simulate a tree corpus as JSONL lines `{"n", "tri"}`.
    Simulate {
        #[arg(long, value_enum, default_value = "kingman")]
        model: Model,
        /// Splitting parameter of the beta model (> -2).
        #[arg(long, allow_hyphen_values = true, required_if_eq("model", "beta"))]
        beta: Option<f64>,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Balance indices per tree as CSV `index,E,S,sackin,colless`.
    Balance {
        /// JSONL corpus.
        #[arg(long = "in", conflicts_with = "matrix")]
        input: Option<PathBuf>,
        /// A single matrix as a JSON line `{"n":..,"tri":..}`.
        #[arg(long)]
        matrix: Option<String>,
        #[command(flatten)]
        out: OutArg,
    },
    /// All Fréchet mean trees, as JSON `{min_cost, variance, objective,
    /// means: [{path, tri}]}`. `variance` and `objective` are only
    /// reported for the Kingman model.
    Frechet {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, value_enum, default_value = "kingman")]
        model: Model,
        /// Use the empirical mean of a JSONL corpus instead of a model.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "auto")]
        numeric: Numeric,
        /// Maximum number of mean trees to enumerate.
        #[arg(long, default_value_t = DEFAULT_PATH_CAP)]
        cap: usize,
        #[command(flatten)]
        out: OutArg,
    },
    /// Means, variances and covariances of balance statistics and F-matrix
    /// entries under the Kingman coalescent, as JSON.
    Moments {
        #[arg(long)]
        n: usize,
        /// Comma-separated: S, E, F (all non-fixed entries) or Fi_j.
        #[arg(long, default_value = "S,E")]
        targets: String,
        #[arg(long, value_enum, default_value = "auto")]
        numeric: Numeric,
        #[command(flatten)]
        out: OutArg,
    },
    /// Ranked block-counting process: law of E as CSV `m,probability`, or
    /// state-space sizes as CSV `n,bcp_states,ranked_states`.
    Bcp {
        #[arg(long, required_unless_present = "sizes")]
        n: Option<usize>,
        /// Write the law of E here (default: standard output).
        #[arg(long)]
        emit: Option<PathBuf>,
        #[arg(long)]
        sizes: bool,
        #[arg(long, default_value_t = 40)]
        n_max: usize,
        #[arg(long, value_enum, default_value = "auto")]
        numeric: Numeric,
    },
    /// Test a corpus against the Kingman null. JSON array of reports.
    Test {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "kingman")]
        null: Model,
        /// Comma-separated subset of GE, WF, WSE, HT.
        #[arg(long, default_value = "GE,WF,WSE,HT")]
        tests: String,
        /// Initial number of G_E boxes.
        #[arg(long, default_value_t = DEFAULT_BOXES)]
        boxes: usize,
        #[command(flatten)]
        out: OutArg,
    },
    /// Monte-Carlo rejection rates over a grid of beta values, as CSV
    /// `test,beta,replicates,rejections,rate,std_error`.
    Power {
        #[arg(long)]
        n: usize,
        /// Trees per sample.
        #[arg(long)]
        m: usize,
        #[arg(long)]
        reps: usize,
        /// `start:stop:step` (inclusive) or a comma-separated list.
        #[arg(long, allow_hyphen_values = true, default_value = "-0.9:1.0:0.1")]
        beta_grid: String,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value = "GE,WF,WSE,HT")]
        tests: String,
        #[arg(long, default_value_t = DEFAULT_BOXES)]
        boxes: usize,
        #[command(flatten)]
        out: OutArg,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Capacity { .. } | Error::PathOverflow { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot configure {t} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Statespace { n, sizes, tiers, force, out } => statespace(n, sizes, tiers, force, out.out.as_deref()),
        Command::Kernel { n, numeric, out } => {
            if numeric.exact_for(n) {
                kernel_csv::<Rational>(n, out.out.as_deref())
            } else {
                kernel_csv::<f64>(n, out.out.as_deref())
            }
        }
        Command::Sample { n, count, seed, out } => sample(n, count, seed, out.out.as_deref()),
        Command::Simulate { model, beta, n, count, seed, out } => simulate(model, beta, n, count, seed, out.out.as_deref()),
        Command::Balance { input, matrix, out } => balance(input.as_deref(), matrix.as_deref(), out.out.as_deref()),
        Command::Frechet { n, model, input, numeric, cap, out } => frechet(n, model, input.as_deref(), numeric, cap, out.out.as_deref()),
        Command::Moments { n, targets, numeric, out } => {
            let targets = parse_targets(&targets, n)?;
            if numeric.exact_for(n) {
                if n > RATIONAL_MAX_N {
                    return Err(Error::Capacity {
                        what: "rational full-covariance job",
                        n,
                        max: RATIONAL_MAX_N,
                        detail: "use --numeric float".into(),
                    });
                }
                moments::<Rational>(n, &targets, out.out.as_deref())
            } else {
                moments::<f64>(n, &targets, out.out.as_deref())
            }
        }
        Command::Bcp { n, emit, sizes, n_max, numeric } => {
            if sizes {
                bcp_sizes(n_max, emit.as_deref())
            } else {
                let n = n.expect("clap enforces --n");
                if numeric.exact_for(n) {
                    bcp_law::<Rational>(n, emit.as_deref())
                } else {
                    bcp_law::<f64>(n, emit.as_deref())
                }
            }
        }
        Command::Test { input, null, tests, boxes, out } => test(&input, null, &tests, boxes, out.out.as_deref()),
        Command::Power { n, m, reps, beta_grid, seed, alpha, tests, boxes, out } => {
            let mut cfg = PowerConfig::new(parse_grid(&beta_grid)?, m, reps, seed);
            cfg.alpha = alpha;
            cfg.tests = parse_tests(&tests)?;
            cfg.boxes = boxes;
            power(n, &cfg, out.out.as_deref())
        }
    }
}

fn space_for(n: usize, force: bool) -> Result<ranked_coalescent::statespace::StateSpace> {
    if force {
        ranked_coalescent::statespace::enumerate_states_with_limit(n, n)
    } else {
        enumerate_states(n)
    }
}

fn statespace(n: usize, sizes: bool, tiers: bool, force: bool, out: Option<&Path>) -> Result<()> {
    if sizes && !force && n > DEFAULT_MAX_N {
        // Counting needs no enumeration.
        return with_output(out, |w| Ok(writeln!(w, "{}", fib(n + 1))?));
    }
    let space = space_for(n, force)?;
    with_output(out, |w| {
        if sizes {
            writeln!(w, "{}", space.total_with_absorbing())?;
        } else if tiers {
            let mut c = csv_writer(w);
            c.write_record(["tier", "size"]).map_err(csv_err)?;
            for (t, s) in space.tier_sizes().iter().enumerate() {
                c.write_record([t.to_string(), s.to_string()]).map_err(csv_err)?;
            }
            c.flush()?;
        } else {
            let mut c = csv_writer(w);
            c.write_record(["index", "tier", "x"]).map_err(csv_err)?;
            for s in space.states() {
                let x: Vec<String> = s.x.iter().map(u8::to_string).collect();
                c.write_record([s.index.to_string(), s.tier.to_string(), x.join(" ")]).map_err(csv_err)?;
            }
            c.flush()?;
        }
        Ok(())
    })
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn kernel_csv<S: Scalar>(n: usize, out: Option<&Path>) -> Result<()> {
    let space = enumerate_states(n)?;
    let k = kernel::<S>(&space);
    with_output(out, |w| {
        let mut c = csv_writer(w);
        c.write_record(["from", "to", "probability"]).map_err(csv_err)?;
        for (t, block) in k.blocks().iter().enumerate() {
            let (from0, to0) = (k.tier_offset(t), k.tier_offset(t + 1));
            for i in 0..block.probs.rows() {
                for (j, p) in block.probs.row(i) {
                    c.write_record([(from0 + i + 1).to_string(), (to0 + j + 1).to_string(), p.render()]).map_err(csv_err)?;
                }
            }
        }
        c.flush()?;
        Ok(())
    })
}

fn sample(n: usize, count: usize, seed: u64, out: Option<&Path>) -> Result<()> {
    let space = enumerate_states(n)?;
    let k = kernel::<f64>(&space);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    with_output(out, |w| {
        for _ in 0..count {
            let path = sample_path(&k, &mut rng);
            let f = FMatrix::from_path(&space, &path)?;
            let line = json!({ "n": n, "tri": f.lower_rows(), "path": path.indices });
            writeln!(w, "{line}")?;
        }
        Ok(())
    })
}

fn simulate(model: Model, beta: Option<f64>, n: usize, count: usize, seed: u64, out: Option<&Path>) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match model {
        Model::Kingman => {
            if !(3..=DEFAULT_MAX_N).contains(&n) {
                return Err(Error::Invalid(format!("n must lie in 3..={DEFAULT_MAX_N} for the Kingman simulator")));
            }
            with_output(out, |w| {
                for _ in 0..count {
                    writeln!(w, "{}", to_json_line(&FMatrix::from_codes(n, &simulate_codes(n, &mut rng))))?;
                }
                Ok(())
            })
        }
        Model::Beta => {
            let splitter = BetaSplitter::new(beta.expect("clap enforces --beta"), n)?;
            with_output(out, |w| {
                for _ in 0..count {
                    writeln!(w, "{}", to_json_line(&splitter.sample(&mut rng)))?;
                }
                Ok(())
            })
        }
    }
}

fn open_corpus(path: &Path) -> Result<impl Iterator<Item = Result<FMatrix>>> {
    Ok(read_corpus(BufReader::new(File::open(path)?)))
}

fn balance(input: Option<&Path>, matrix: Option<&str>, out: Option<&Path>) -> Result<()> {
    let corpus: Box<dyn Iterator<Item = Result<FMatrix>>> = match (input, matrix) {
        (Some(p), _) => Box::new(open_corpus(p)?),
        (None, Some(m)) => Box::new(std::iter::once(parse_json_line(m, 1))),
        (None, None) => return Err(Error::Invalid("give --in or --matrix".into())),
    };
    with_output(out, |w| {
        let mut c = csv_writer(w);
        c.write_record(["index", "E", "S", "sackin", "colless"]).map_err(csv_err)?;
        for (idx, f) in corpus.enumerate() {
            let f = f?;
            let tree = f.to_tree();
            c.write_record([
                (idx + 1).to_string(),
                f.balance_e().to_string(),
                f.balance_s().to_string(),
                tree.sackin().to_string(),
                tree.colless().to_string(),
            ])
            .map_err(csv_err)?;
        }
        c.flush()?;
        Ok(())
    })
}

/// Rationals as `"p/q"` strings, floats as JSON numbers.
fn num<S: Scalar>(x: &S) -> Value {
    if S::EXACT {
        Value::String(x.render())
    } else {
        json!(x.to_f64())
    }
}

fn frechet(n: Option<usize>, model: Model, input: Option<&Path>, numeric: Numeric, cap: usize, out: Option<&Path>) -> Result<()> {
    if let Some(path) = input {
        let corpus: Vec<FMatrix> = open_corpus(path)?.collect::<Result<_>>()?;
        let m = mean_matrix_sample(&corpus)?;
        if let Some(n) = n.filter(|&n| n != m.n()) {
            return Err(Error::Invalid(format!("--n {n} does not match the corpus (n = {})", m.n())));
        }
        let space = enumerate_states(m.n())?;
        let k = kernel::<f64>(&space);
        let res = vitreebi_with_cap(&space, &k, &m, cap)?;
        return frechet_json(&space, &res, None, json!({ "source": path.display().to_string(), "trees": corpus.len() }), out);
    }
    let n = n.ok_or_else(|| Error::Invalid("give --n or --in".into()))?;
    if model != Model::Kingman {
        return Err(Error::Invalid("exact Fréchet means are available for the Kingman model only".into()));
    }
    if numeric.exact_for(n) {
        frechet_model::<Rational>(n, cap, out)
    } else {
        frechet_model::<f64>(n, cap, out)
    }
}

fn frechet_model<S: Scalar>(n: usize, cap: usize, out: Option<&Path>) -> Result<()> {
    let space = enumerate_states(n)?;
    let k = kernel::<S>(&space);
    let m = mean_matrix_exact(&space, &k)?;
    let res = vitreebi_with_cap(&space, &k, &m, cap)?;
    let objective = frechet_objective(&space, &k, &res)?;
    let variance = objective.clone() - res.min_cost.clone();
    let extra = json!({ "model": "kingman", "variance": num(&variance), "objective": num(&objective) });
    frechet_json(&space, &res, Some(S::EXACT), extra, out)
}

fn frechet_json<S: Scalar>(
    space: &ranked_coalescent::statespace::StateSpace,
    res: &ranked_coalescent::frechet::FrechetMeans<S>,
    exact: Option<bool>,
    extra: Value,
    out: Option<&Path>,
) -> Result<()> {
    let means = res
        .paths
        .iter()
        .map(|p| Ok(json!({ "path": p.indices, "tri": FMatrix::from_path(space, p)?.lower_rows() })))
        .collect::<Result<Vec<Value>>>()?;
    let mut doc = json!({
        "n": space.n(),
        "numeric": if exact.unwrap_or(S::EXACT) { "rational" } else { "float" },
        "min_cost": num(&res.min_cost),
        "count": means.len(),
        "means": means,
    });
    if let (Value::Object(d), Value::Object(e)) = (&mut doc, extra) {
        d.extend(e);
    }
    with_output(out, |w| Ok(writeln!(w, "{}", serde_json::to_string_pretty(&doc).expect("valid JSON"))?))
}

/// A linear statistic `offset + weights · F_nonfixed`.
struct Target {
    name: String,
    weights: Vec<u64>,
    offset: u64,
}

fn parse_targets(spec: &str, n: usize) -> Result<Vec<Target>> {
    if n < 4 {
        return Err(Error::Invalid(format!("moments need n >= 4, got {n}")));
    }
    let positions = nonfixed_positions(n);
    let unit = |k: usize| (0..positions.len()).map(|x| u64::from(x == k)).collect::<Vec<_>>();
    let mut out = Vec::new();
    for raw in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match raw {
            "S" => out.push(Target { name: "S".into(), weights: vec![1; positions.len()], offset: 0 }),
            "E" => out.push(Target {
                name: "E".into(),
                weights: positions.iter().map(|&(i, _)| u64::from(i == n - 1)).collect(),
                offset: 2 * n as u64 - 2,
            }),
            "F" => {
                for (k, &(i, j)) in positions.iter().enumerate() {
                    out.push(Target { name: format!("F{i}_{j}"), weights: unit(k), offset: 0 });
                }
            }
            other => {
                let bad = || Error::Invalid(format!("unknown target '{other}' (expected S, E, F or Fi_j)"));
                let (i, j) = other.strip_prefix('F').and_then(|r| r.split_once('_')).ok_or_else(bad)?;
                let (i, j): (usize, usize) = (i.parse().map_err(|_| bad())?, j.parse().map_err(|_| bad())?);
                let k = positions
                    .iter()
                    .position(|&p| p == (i, j))
                    .ok_or_else(|| Error::Invalid(format!("F{i}_{j} is not a non-fixed entry for n = {n}")))?;
                out.push(Target { name: other.into(), weights: unit(k), offset: 0 });
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Invalid("no targets given".into()));
    }
    Ok(out)
}

fn moments<S: Scalar>(n: usize, targets: &[Target], out: Option<&Path>) -> Result<()> {
    let space = enumerate_states(n)?;
    let summary = nonfixed_moments(&space, &kernel::<S>(&space))?;
    let lift = |t: &Target| t.weights.iter().map(|&w| S::from_u64(w)).collect::<Vec<S>>();
    let weights: Vec<Vec<S>> = targets.iter().map(lift).collect();
    let cov_times: Vec<Vec<S>> = weights.iter().map(|w| summary.cov.right_mul(w)).collect();
    let means: Vec<S> = targets.iter().zip(&weights).map(|(t, w)| S::from_u64(t.offset) + dot(w, &summary.mean)).collect();
    let cov: Vec<Vec<S>> = weights.iter().map(|a| cov_times.iter().map(|cb| dot(a, cb)).collect()).collect();
    let doc = json!({
        "n": n,
        "numeric": if S::EXACT { "rational" } else { "float" },
        "targets": targets.iter().map(|t| t.name.clone()).collect::<Vec<_>>(),
        "mean": means.iter().map(num).collect::<Vec<_>>(),
        "variance": (0..targets.len()).map(|a| num(&cov[a][a])).collect::<Vec<_>>(),
        "covariance": cov.iter().map(|r| r.iter().map(num).collect::<Vec<_>>()).collect::<Vec<_>>(),
    });
    with_output(out, |w| Ok(writeln!(w, "{}", serde_json::to_string_pretty(&doc).expect("valid JSON"))?))
}

fn bcp_law<S: Scalar>(n: usize, out: Option<&Path>) -> Result<()> {
    let law = e_pmf::<S>(n)?;
    with_output(out, |w| {
        let mut c = csv_writer(w);
        c.write_record(["m", "probability"]).map_err(csv_err)?;
        for (m, p) in law {
            c.write_record([m.to_string(), p.render()]).map_err(csv_err)?;
        }
        c.flush()?;
        Ok(())
    })
}

fn bcp_sizes(n_max: usize, out: Option<&Path>) -> Result<()> {
    if !(3..=120).contains(&n_max) {
        return Err(Error::Invalid(format!("--n-max must lie in 3..=120, got {n_max}")));
    }
    let p = partition_numbers(n_max);
    with_output(out, |w| {
        let mut c = csv_writer(w);
        c.write_record(["n", "bcp_states", "ranked_states"]).map_err(csv_err)?;
        for n in 3..=n_max {
            if n <= 40 {
                debug_assert_eq!(bcp_states(n)?.total_with_absorbing() as u128, p[n]);
            }
            c.write_record([n.to_string(), p[n].to_string(), fib(n + 1).to_string()]).map_err(csv_err)?;
        }
        c.flush()?;
        Ok(())
    })
}

fn parse_tests(spec: &str) -> Result<Vec<TestKind>> {
    let tests: Vec<TestKind> = spec.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect::<Result<_>>()?;
    if tests.is_empty() {
        return Err(Error::Invalid("no tests selected".into()));
    }
    Ok(tests)
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::Invalid(format!("bad beta grid '{spec}' (use start:stop:step or a comma-separated list)"));
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = spec.split(':').collect();
    let grid = match parts.as_slice() {
        [a, b, step] => {
            let (a, b, step) = (parse(a)?, parse(b)?, parse(step)?);
            if !(step > 0.0) || b < a {
                return Err(bad());
            }
            let count = ((b - a) / step + 1e-9).floor() as usize;
            // Round to the step's decimals so that 0.1-steps hit 0 exactly.
            (0..=count).map(|k| ((a + k as f64 * step) * 1e9).round() / 1e9).collect()
        }
        [list] => list.split(',').map(parse).collect::<Result<Vec<_>>>()?,
        _ => return Err(bad()),
    };
    if grid.is_empty() {
        return Err(bad());
    }
    Ok(grid)
}

fn test(input: &Path, null: Model, tests: &str, boxes: usize, out: Option<&Path>) -> Result<()> {
    if null != Model::Kingman {
        return Err(Error::Invalid("only the Kingman null is supported".into()));
    }
    let tests = parse_tests(tests)?;
    let mut summary: Option<SampleSummary> = None;
    for f in open_corpus(input)? {
        let f = f?;
        summary.get_or_insert_with(|| SampleSummary::empty(f.n())).push(&f)?;
    }
    let summary = summary.ok_or_else(|| Error::Invalid(format!("{} contains no trees", input.display())))?;
    let model = NullModel::kingman(summary.n)?;
    let reports = model.run(&summary, &tests, boxes)?;
    with_output(out, |w| Ok(writeln!(w, "{}", serde_json::to_string_pretty(&reports).expect("valid JSON"))?))
}

fn power(n: usize, cfg: &PowerConfig, out: Option<&Path>) -> Result<()> {
    let null = NullModel::kingman(n)?;
    let rows = power_curve(&null, cfg)?;
    with_output(out, |w| {
        let mut c = csv_writer(w);
        c.write_record(["test", "beta", "replicates", "rejections", "rate", "std_error"]).map_err(csv_err)?;
        for r in rows {
            c.write_record([
                r.test.name().to_string(),
                r.beta.to_string(),
                r.replicates.to_string(),
                r.rejections.to_string(),
                r.rate.render(),
                r.std_error.render(),
            ])
            .map_err(csv_err)?;
        }
        c.flush()?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        let g = parse_grid("-0.9:1.0:0.1").unwrap();
        assert_eq!(g.len(), 20);
        assert_eq!(g[9], 0.0);
        assert_eq!(*g.last().unwrap(), 1.0);
        assert_eq!(parse_grid("-0.5,0,1").unwrap(), vec![-0.5, 0.0, 1.0]);
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("a").is_err());
    }

    #[test]
    fn targets() {
        let t = parse_targets("S,E,F4_2", 6).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t[1].offset, 10);
        assert_eq!(parse_targets("F", 6).unwrap().len(), 6);
        assert!(parse_targets("F2_1", 6).is_err());
        assert!(parse_targets("Q", 6).is_err());
    }
}
