use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use permci::balanced::fast_interval_exact;
use permci::baseline::rh_interval_exact;
use permci::missing::{missing_interval, pad_odd, MaskedObservations};
use permci::montecarlo::{mc_interval_balanced, required_k_balanced, required_k_unbalanced, McConfig};
use permci::unbalanced::{unbalanced_interval_exact, unbalanced_interval_mc};
use permci::validation::{
    count_bound_sweep, coverage_exhaustive, length_bound_sweep, meets_confidence, random_tables, table1_expected,
    table1_repro, Method,
};
use permci::{model::neyman, Arithmetic, Design, Interval, ObservedCounts, Prob, SearchOutcome};

#[derive(Parser)]
#[command(name = "permci", version, about = "Randomization-based confidence intervals for binary outcomes")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "PERMCI_THREADS")]
    threads: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Exact interval: fast search for balanced designs, line search otherwise.
    Exact(ExactArgs),
    /// Monte Carlo interval.
    Mc(McArgs),
    /// Exact interval by testing every imputed table.
    Rh(CountsArgs),
    /// Interval from subject-level data with missing outcomes.
    Missing(MissingArgs),
    /// Run a validation suite and report pass/fail.
    Validate(ValidateArgs),
    /// Benchmark reproductions.
    Bench(BenchArgs),
}

#[derive(Args)]
struct CountsArgs {
    /// Observed counts n11,n10,n01,n00 (treated ones, treated zeros, control ones, control zeros).
    #[arg(long, value_parser = parse_counts)]
    counts: ObservedCounts,

    /// Significance level, as a decimal or a fraction.
    #[arg(long, default_value = "0.05", value_parser = parse_prob)]
    alpha: Prob,
}

#[derive(Args)]
struct ExactArgs {
    #[command(flatten)]
    counts: CountsArgs,

    #[arg(long, default_value = "rational", value_parser = parse_mode)]
    mode: Arithmetic,
}

#[derive(Args)]
struct McArgs {
    #[command(flatten)]
    counts: CountsArgs,

    /// Monte Carlo tolerance; tests accept when S + eps >= alpha.
    #[arg(long, value_parser = parse_prob)]
    eps: Prob,

    /// Samples per test, or `auto` for the recommended size.
    #[arg(long, default_value = "auto", value_parser = parse_k)]
    k: KChoice,

    /// Seed, decimal or 0x-prefixed hex.
    #[arg(long, default_value = "0", value_parser = parse_seed)]
    seed: u64,
}

#[derive(Args)]
struct MissingArgs {
    /// Subject file: header line, then `z,y` records with y in {0,1,NA}.
    #[arg(long)]
    file: PathBuf,

    #[arg(long, default_value = "0.05", value_parser = parse_prob)]
    alpha: Prob,

    /// Add a subject with a missing outcome to the smaller group when the
    /// subject count is odd.
    #[arg(long)]
    pad: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Table1,
    Length,
    Counts,
    Coverage,
    All,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    suite: Suite,

    #[arg(long, default_value = "1", value_parser = parse_seed)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    /// Reproduce the three worked data sets with all three algorithms.
    #[arg(long)]
    table1: bool,

    #[arg(long, default_value = "1", value_parser = parse_seed)]
    seed: u64,
}

#[derive(Clone, Copy)]
enum KChoice {
    Auto,
    Fixed(u64),
}

fn parse_counts(s: &str) -> Result<ObservedCounts, String> {
    let obs: ObservedCounts = s.parse().map_err(|e: permci::Error| e.to_string())?;
    obs.design().map_err(|e| e.to_string())?;
    Ok(obs)
}

fn parse_prob(s: &str) -> Result<Prob, String> {
    s.parse().map_err(|e: permci::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<Arithmetic, String> {
    s.parse().map_err(|e: permci::Error| e.to_string())
}

fn parse_seed(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    };
    parsed.map_err(|_| format!("{s:?} is not a 64-bit decimal or 0x-prefixed hex seed"))
}

fn parse_k(s: &str) -> Result<KChoice, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(KChoice::Auto);
    }
    match s.parse::<u64>() {
        Ok(0) | Err(_) => Err(format!("{s:?} is not a positive integer or `auto`")),
        Ok(k) => Ok(KChoice::Fixed(k)),
    }
}

/// Flat report printed by the single-analysis commands.
#[derive(Serialize)]
struct Report {
    interval_scaled: Option<[i64; 2]>,
    interval: Option<[f64; 2]>,
    estimate: f64,
    alpha: f64,
    method: &'static str,
    tests: u64,
    k: Option<u64>,
    seed: Option<u64>,
    wall_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    effective_alpha: Option<f64>,
    #[serde(skip)]
    n: u64,
    #[serde(skip)]
    estimate_exact: String,
    #[serde(skip)]
    notes: Vec<String>,
}

impl Report {
    fn new(method: &'static str, obs: &ObservedCounts, alpha: Prob, interval: Interval, tests: u64) -> Self {
        let n = obs.total();
        let d = obs.design().expect("counts were validated");
        let t = neyman(obs, &d).expect("counts match their design");
        Self {
            interval_scaled: interval.bounds().map(|(l, u)| [l.0, u.0]),
            interval: interval.to_tau(n).map(|(l, u)| [l, u]),
            estimate: t.to_f64(),
            alpha: alpha.value(),
            method,
            tests,
            k: None,
            seed: None,
            wall_ms: 0.0,
            eps: None,
            effective_alpha: None,
            n,
            estimate_exact: t.to_ratio().to_string(),
            notes: Vec::new(),
        }
    }

    fn print(&self, format: Format) {
        match format {
            Format::Json => println!("{}", serde_json::to_string(self).expect("report serializes")),
            Format::Text => {
                println!("method: {}", self.method);
                println!("n: {}", self.n);
                println!("alpha: {}", self.alpha);
                if let (Some(e), Some(a)) = (self.eps, self.effective_alpha) {
                    println!("eps: {e}");
                    println!("effective level: {a}");
                }
                if let Some(k) = self.k {
                    println!("samples per test: {k}");
                }
                if let Some(s) = self.seed {
                    println!("seed: {s}");
                }
                println!("estimate: {} ({})", self.estimate, self.estimate_exact);
                match (self.interval_scaled, self.interval) {
                    (Some([l, u]), Some([a, b])) => {
                        println!("interval (n*tau): [{l}, {u}]");
                        println!("interval (tau): [{a}, {b}]");
                    }
                    _ => println!("interval: (empty)"),
                }
                println!("tests: {}", self.tests);
                for note in &self.notes {
                    println!("note: {note}");
                }
                eprintln!("wall time: {:.1} ms", self.wall_ms);
            }
        }
    }
}

fn run_exact(args: &ExactArgs) -> permci::Result<Report> {
    let obs = &args.counts.counts;
    let alpha = args.counts.alpha;
    let d = obs.design()?;
    let (method, out) = if d.is_balanced() {
        ("fast-exact", fast_interval_exact(alpha, obs, args.mode)?)
    } else {
        ("unbalanced-exact", unbalanced_interval_exact(alpha, obs, args.mode)?)
    };
    Ok(Report::new(method, obs, alpha, out.interval, out.tests))
}

fn run_rh(args: &CountsArgs) -> permci::Result<Report> {
    let out = rh_interval_exact(args.alpha, &args.counts, Arithmetic::Rational)?;
    Ok(Report::new("rh-exact", &args.counts, args.alpha, out.interval, out.tests))
}

fn run_mc(args: &McArgs) -> permci::Result<Report> {
    let obs = &args.counts.counts;
    let alpha = args.counts.alpha;
    let d = obs.design()?;
    let n = d.n();
    let recommended = if d.is_balanced() { required_k_balanced(args.eps, n) } else { required_k_unbalanced(args.eps, n) };
    let k = match args.k {
        KChoice::Auto => recommended.k,
        KChoice::Fixed(k) => k,
    };
    let cfg = McConfig::new(alpha, args.eps, k, args.seed)?;
    let (method, out): (_, SearchOutcome) = if d.is_balanced() {
        ("fast-mc", mc_interval_balanced(&cfg, obs)?)
    } else {
        ("unbalanced-mc", unbalanced_interval_mc(&cfg, obs)?)
    };
    let mut r = Report::new(method, obs, alpha, out.interval, out.tests);
    r.k = Some(k);
    r.seed = Some(args.seed);
    r.eps = Some(args.eps.value());
    r.effective_alpha = Some(cfg.effective_level().value());
    if k < recommended.k {
        r.notes.push(format!("K = {k} is below the recommended {}", recommended.k));
    }
    if !recommended.precondition_met {
        r.notes.push(format!("the recommended K assumes n >= 15 (n = {n})"));
    }
    Ok(r)
}

fn run_missing(args: &MissingArgs) -> permci::Result<Report> {
    let text = std::fs::read_to_string(&args.file)
        .map_err(|e| permci::Error::InvalidData(format!("cannot read {}: {e}", args.file.display())))?;
    let mut data: MaskedObservations = text.parse()?;
    let mut notes = Vec::new();
    if args.pad && data.len() % 2 == 1 {
        data = pad_odd(&data)?;
        notes.push("added one subject with a missing outcome to the smaller group".to_string());
    }
    let out = missing_interval(args.alpha, &data, Arithmetic::Rational)?;
    let mut r = Report::new("missing-exact", &out.plus, args.alpha, out.interval, out.tests);
    let d = out.plus.design()?;
    let (tp, tm) = (neyman(&out.plus, &d)?, neyman(&out.minus, &d)?);
    r.estimate_exact = format!("between {} and {}", tm.to_f64(), tp.to_f64());
    r.estimate = (tp.to_f64() + tm.to_f64()) / 2.0;
    notes.push(format!("missing outcomes: {}", data.missing()));
    notes.push(format!("optimistic filling {}: {}", out.plus, out.plus_interval));
    notes.push(format!("pessimistic filling {}: {}", out.minus, out.minus_interval));
    r.notes = notes;
    Ok(r)
}

#[derive(Serialize)]
struct Check {
    name: String,
    pass: bool,
    detail: String,
}

fn run_validate(args: &ValidateArgs) -> permci::Result<Vec<Check>> {
    let mut checks = Vec::new();
    let alpha: Prob = "0.05".parse()?;
    let want = |s: Suite| args.suite == s || args.suite == Suite::All;
    if want(Suite::Table1) {
        for (obs, expected) in permci::validation::TABLE1_OBS.iter().zip(table1_expected()) {
            let fast = fast_interval_exact(alpha, obs, Arithmetic::Rational)?;
            let rh = rh_interval_exact(alpha, obs, Arithmetic::Rational)?;
            checks.push(Check {
                name: format!("table1 {obs}"),
                pass: fast.interval == expected && rh.interval == expected,
                detail: format!("fast {} rh {} expected {expected}", fast.interval, rh.interval),
            });
        }
    }
    if want(Suite::Length) {
        for row in length_bound_sweep(alpha, &[20, 50, 100], 10, args.seed, Arithmetic::Rational)? {
            checks.push(Check {
                name: format!("length n={}", row.n),
                pass: row.violations == 0,
                detail: format!("max length {:.4} bound {:.4} over {} samples", row.max_length, row.bound, row.samples),
            });
        }
    }
    if want(Suite::Counts) {
        let ns: Vec<u64> = (16..=64).step_by(8).collect();
        for row in count_bound_sweep(alpha, &ns, 5, args.seed)? {
            checks.push(Check {
                name: format!("test count n={}", row.n),
                pass: row.violations == 0,
                detail: format!("max tests {} bound {:.1}", row.max_tests, row.bound),
            });
        }
    }
    if want(Suite::Coverage) {
        let d = Design::new(10, 5)?;
        for y in random_tables(10, 5, args.seed) {
            let c = coverage_exhaustive(&y, alpha, &d, Method::Fast)?;
            checks.push(Check {
                name: format!("coverage y={y}"),
                pass: meets_confidence(&c, alpha),
                detail: format!("coverage {c}"),
            });
        }
    }
    Ok(checks)
}

#[derive(Serialize)]
struct BenchRow {
    obs: String,
    algorithm: &'static str,
    interval_scaled: Option<[i64; 2]>,
    tests: u64,
    k: Option<u64>,
}

fn run_bench(args: &BenchArgs) -> permci::Result<Vec<BenchRow>> {
    let mut out = Vec::new();
    for row in table1_repro(args.seed)? {
        let obs = row.obs.to_string();
        let scaled = |i: Interval| i.bounds().map(|(l, u)| [l.0, u.0]);
        out.push(BenchRow { obs: obs.clone(), algorithm: "rh-exact", interval_scaled: scaled(row.rh.interval), tests: row.rh.tests, k: None });
        out.push(BenchRow { obs: obs.clone(), algorithm: "fast-exact", interval_scaled: scaled(row.fast.interval), tests: row.fast.tests, k: None });
        out.push(BenchRow { obs, algorithm: "fast-mc", interval_scaled: scaled(row.mc.interval), tests: row.mc.tests, k: Some(row.mc_k) });
    }
    Ok(out)
}

fn fmt_interval(i: &Option<[i64; 2]>) -> String {
    match i {
        Some([l, u]) => format!("[{l}, {u}]"),
        None => "(empty)".into(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let start = Instant::now();
    let result: permci::Result<()> = (|| {
        match &cli.command {
            Command::Exact(a) => finish(run_exact(a)?, start, cli.format),
            Command::Rh(a) => finish(run_rh(a)?, start, cli.format),
            Command::Mc(a) => {
                if a.eps >= a.counts.alpha {
                    eprintln!("error: --eps must be smaller than --alpha");
                    std::process::exit(2);
                }
                finish(run_mc(a)?, start, cli.format)
            }
            Command::Missing(a) => finish(run_missing(a)?, start, cli.format),
            Command::Validate(a) => {
                let checks = run_validate(a)?;
                let ok = checks.iter().all(|c| c.pass);
                match cli.format {
                    Format::Json => println!("{}", serde_json::to_string(&checks).expect("checks serialize")),
                    Format::Text => {
                        for c in &checks {
                            println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
                        }
                    }
                }
                if !ok {
                    return Err(permci::Error::InvalidData("validation failed".into()));
                }
            }
            Command::Bench(a) => {
                if !a.table1 {
                    eprintln!("error: choose a benchmark, e.g. --table1");
                    std::process::exit(2);
                }
                let rows = run_bench(a)?;
                match cli.format {
                    Format::Json => println!("{}", serde_json::to_string(&rows).expect("rows serialize")),
                    Format::Text => {
                        println!("{:<12} {:<10} {:<12} {:>6} {:>8}", "counts", "algorithm", "n*tau", "tests", "K");
                        for r in &rows {
                            let k = r.k.map_or("-".to_string(), |k| k.to_string());
                            println!(
                                "{:<12} {:<10} {:<12} {:>6} {:>8}",
                                r.obs,
                                r.algorithm,
                                fmt_interval(&r.interval_scaled),
                                r.tests,
                                k
                            );
                        }
                    }
                }
            }
        }
        Ok(())
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn finish(mut r: Report, start: Instant, format: Format) {
    r.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    r.print(format);
}
