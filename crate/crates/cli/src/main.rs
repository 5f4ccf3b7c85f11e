use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use lastarrival::cardgame::{fictitious_play, structure_check, CardGameConfig};
use lastarrival::certify::{bracket, construct_strategy, BracketOptions, Evidence, Outcome};
use lastarrival::ppoly::{build_symbolic, eval_prefix};
use lastarrival::sim::{estimate, sweep, AdversaryChoice};
use lastarrival::thresholds::{lower_strategy, theta_restricted, upper_bounds};
use lastarrival::{Error, Precision, Real, Window};

mod input;

/// Version of the JSON envelope and of the CSV header block.
const REPORT_VERSION: u32 = 1;

const EXIT_DOMAIN: u8 = 2;
const EXIT_INCONCLUSIVE: u8 = 3;
const EXIT_INVARIANT: u8 = 4;
const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug, Serialize)]
#[command(name = "lastarrival", version, about = "Bounds, certificates and simulation for the last-arrival game")]
struct Cli {
    /// Working precision in bits [default: 120]
    #[arg(long, global = true, env = "LASTARRIVAL_PRECISION_BITS")]
    precision_bits: Option<u32>,

    /// Write the report here instead of standard output
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Report format [default: csv for tables, json otherwise]
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
enum Command {
    /// P-polynomials: symbolic form, or P_1..P_n on one input
    Ppoly(PpolyArgs),
    /// Upper bounds b_n on the thresholds of any strategy winning theta
    Bounds(BoundsArgs),
    /// Thresholds from the lower recursion, optionally with a harmonic tail
    Strategy(StrategyArgs),
    /// Lower and upper certificates around the game value
    Certify(CertifyArgs),
    /// Monte Carlo play against a chosen adversary
    Simulate(SimulateArgs),
    /// Fictitious play in the finite card game
    Cardgame(CardgameArgs),
    /// Value of the game restricted to n <= N
    ThetaN(ThetaNArgs),
}

#[derive(Args, Debug, Serialize)]
#[command(group(ArgGroup::new("input").required(true).args(["n", "x"])))]
struct PpolyArgs {
    /// Emit the symbolic P_n
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated x_1..x_n to evaluate P_1..P_n at
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x: Option<Vec<String>>,
}

#[derive(Args, Debug, Serialize)]
struct BoundsArgs {
    #[arg(long)]
    theta: String,
    #[arg(long, default_value_t = 1000)]
    horizon: usize,
    /// `exact` or a window size
    #[arg(long, default_value = "24", value_parser = input::window)]
    window: Window,
}

#[derive(Args, Debug, Serialize)]
struct StrategyArgs {
    #[arg(long)]
    theta: String,
    #[arg(long, default_value_t = 1000)]
    horizon: usize,
    #[arg(long, default_value = "24", value_parser = input::window)]
    window: Window,
    /// Stop at the first crossing above 1 - 1/n and continue harmonically
    #[arg(long)]
    harmonic_tail: bool,
}

#[derive(Args, Debug, Serialize)]
struct CertifyArgs {
    #[arg(long)]
    theta_lo: String,
    #[arg(long)]
    theta_hi: String,
    #[arg(long, default_value_t = 24)]
    window: usize,
    #[arg(long, default_value_t = 1000)]
    horizon: usize,
    #[arg(long, default_value_t = 750)]
    verify_to: usize,
    /// Bisection steps between the endpoints
    #[arg(long, default_value_t = 0)]
    refine: usize,
}

#[derive(Args, Debug, Serialize)]
#[command(group(ArgGroup::new("against").required(true).args(["adversary", "n_values"])))]
struct SimulateArgs {
    /// `odds`, `half-observe`, or a threshold-strategy JSON file
    #[arg(long)]
    strategy: String,
    /// `fixed:N`, `cat:FILE` or `poisson:LAMBDA`
    #[arg(long)]
    adversary: Option<String>,
    /// Comma-separated fixed n values to sweep instead
    #[arg(long, value_delimiter = ',')]
    n_values: Option<Vec<usize>>,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = lastarrival::sim::DEFAULT_PARTITIONS)]
    partitions: usize,
}

#[derive(Args, Debug, Serialize)]
struct CardgameArgs {
    /// Deck size
    #[arg(long)]
    d: usize,
    /// Largest number of labeled cards
    #[arg(long = "N")]
    n_max: usize,
    #[arg(long, default_value_t = 100_000)]
    iters: usize,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
}

#[derive(Args, Debug, Serialize)]
struct ThetaNArgs {
    #[arg(long = "N")]
    n_max: usize,
    #[arg(long, default_value = "1e-20")]
    tol: String,
    /// Emit theta_1..theta_N
    #[arg(long)]
    all: bool,
}

/// Everything a run depends on, embedded in its report.
#[derive(Debug, Serialize)]
struct RunConfig<'a> {
    tool_version: &'static str,
    precision_bits: u32,
    format: Format,
    out: Option<&'a PathBuf>,
    command: &'a Command,
}

#[derive(Debug)]
enum Failure {
    Core(Error),
    Inconclusive(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Core(Error::Invariant(_)) => EXIT_INVARIANT,
            Failure::Core(Error::Inconclusive(_) | Error::MonotonicityViolation { .. })
            | Failure::Inconclusive(_) => EXIT_INCONCLUSIVE,
            Failure::Core(_) | Failure::Io(_) => EXIT_DOMAIN,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Inconclusive(m) => write!(f, "inconclusive: {m}"),
            Failure::Io(m) => write!(f, "{m}"),
        }
    }
}

/// A rendered report plus an optional verdict that sets the exit code after
/// the report is written.
struct Emitted {
    body: String,
    verdict: Option<Failure>,
}

/// Tabular output: column names and rows of pre-rendered cells.
struct Table {
    columns: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

struct Ctx<'a> {
    prec: Precision,
    format: Format,
    config: RunConfig<'a>,
}

impl Ctx<'_> {
    fn json<T: Serialize>(&self, result: &T) -> Result<String, Failure> {
        #[derive(Serialize)]
        struct Envelope<'a, T> {
            report_version: u32,
            config: &'a RunConfig<'a>,
            result: &'a T,
        }
        let env = Envelope { report_version: REPORT_VERSION, config: &self.config, result };
        let mut s = serde_json::to_string_pretty(&env).map_err(|e| Failure::Io(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    fn csv(&self, table: &Table) -> Result<String, Failure> {
        let io = |e: csv::Error| Failure::Io(e.to_string());
        let config = serde_json::to_string(&self.config).map_err(|e| Failure::Io(e.to_string()))?;
        let mut out = format!("# lastarrival csv v{REPORT_VERSION}\n# config: {config}\n").into_bytes();
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(&table.columns).map_err(io)?;
        for row in &table.rows {
            w.write_record(row).map_err(io)?;
        }
        w.flush().map_err(|e| Failure::Io(e.to_string()))?;
        drop(w);
        String::from_utf8(out).map_err(|e| Failure::Io(e.to_string()))
    }

    fn render<T: Serialize>(&self, result: &T, table: impl FnOnce() -> Table) -> Result<String, Failure> {
        match self.format {
            Format::Json => self.json(result),
            Format::Csv => self.csv(&table()),
        }
    }

    fn real(&self, s: &str) -> Result<Real, Failure> {
        Ok(Real::parse(self.prec, s)?)
    }
}

fn default_format(command: &Command) -> Format {
    match command {
        Command::Bounds(_) | Command::Strategy(_) => Format::Csv,
        Command::Ppoly(a) if a.x.is_some() => Format::Csv,
        _ => Format::Json,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("lastarrival: {f}");
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let prec = Precision::new(cli.precision_bits.unwrap_or(lastarrival::numerics::DEFAULT_PRECISION_BITS))?;
    let format = cli.format.unwrap_or_else(|| default_format(&cli.command));
    let ctx = Ctx {
        prec,
        format,
        config: RunConfig {
            tool_version: env!("CARGO_PKG_VERSION"),
            precision_bits: prec.bits(),
            format,
            out: cli.out.as_ref(),
            command: &cli.command,
        },
    };
    let emitted = match &cli.command {
        Command::Ppoly(a) => ppoly(&ctx, a)?,
        Command::Bounds(a) => bounds(&ctx, a)?,
        Command::Strategy(a) => strategy(&ctx, a)?,
        Command::Certify(a) => certify(&ctx, a)?,
        Command::Simulate(a) => simulate(&ctx, a)?,
        Command::Cardgame(a) => cardgame(&ctx, a)?,
        Command::ThetaN(a) => theta_n(&ctx, a)?,
    };
    match &cli.out {
        Some(path) => std::fs::write(path, &emitted.body)
            .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))?,
        None => std::io::stdout()
            .write_all(emitted.body.as_bytes())
            .map_err(|e| Failure::Io(e.to_string()))?,
    }
    emitted.verdict.map_or(Ok(()), Err)
}

fn ok(body: String) -> Result<Emitted, Failure> {
    Ok(Emitted { body, verdict: None })
}

fn ppoly(ctx: &Ctx, a: &PpolyArgs) -> Result<Emitted, Failure> {
    if let Some(x) = &a.x {
        let x = x.iter().map(|s| ctx.real(s.trim())).collect::<Result<Vec<_>, _>>()?;
        let eval = eval_prefix(&x)?;
        #[derive(Serialize)]
        struct Row {
            k: usize,
            p_k: Real,
        }
        let rows: Vec<Row> =
            (0..=eval.n()).map(|k| Row { k, p_k: eval.get(k).clone() }).collect();
        return ok(ctx.render(&rows, || Table {
            columns: vec!["k", "P_k"],
            rows: rows.iter().map(|r| vec![r.k.to_string(), r.p_k.to_decimal()]).collect(),
        })?);
    }
    let n = a.n.expect("clap enforces the input group");
    let poly = build_symbolic(n)?;
    ok(ctx.render(&poly, || Table {
        columns: vec!["coefficient", "exponents"],
        rows: poly
            .terms
            .iter()
            .map(|t| {
                let e: Vec<String> = t.exponents.iter().map(u32::to_string).collect();
                vec![t.coefficient.to_string(), e.join(" ")]
            })
            .collect(),
    })?)
}

fn bounds(ctx: &Ctx, a: &BoundsArgs) -> Result<Emitted, Failure> {
    let theta = ctx.real(&a.theta)?;
    let seq = upper_bounds(&theta, a.horizon, a.window)?;
    ok(ctx.render(&seq, || Table {
        columns: vec!["n", "b_n", "beta_n", "lowered"],
        rows: (0..seq.b.len())
            .map(|i| {
                vec![
                    (i + 1).to_string(),
                    seq.b[i].to_decimal(),
                    seq.beta[i].to_decimal(),
                    seq.lowered[i].to_string(),
                ]
            })
            .collect(),
    })?)
}

fn strategy(ctx: &Ctx, a: &StrategyArgs) -> Result<Emitted, Failure> {
    let theta = ctx.real(&a.theta)?;
    let s = if a.harmonic_tail {
        let Window::Truncated(w) = a.window else {
            return Err(Error::Domain("--harmonic-tail needs a window size".into()).into());
        };
        construct_strategy(&theta, w, a.horizon)?
    } else {
        lower_strategy(&theta, a.horizon, a.window)?
    };
    let rows = || -> Result<Table, Error> {
        let mut rows = Vec::new();
        for n in 1..=a.horizon {
            let an = s.threshold(n)?;
            let diag = an.one_minus().mul_u(n as u64);
            rows.push(vec![n.to_string(), an.to_decimal(), diag.to_decimal()]);
        }
        Ok(Table { columns: vec!["n", "a_n", "n_times_one_minus_a_n"], rows })
    };
    let table = rows()?;
    ok(ctx.render(&s, || table)?)
}

fn certify(ctx: &Ctx, a: &CertifyArgs) -> Result<Emitted, Failure> {
    let lo = ctx.real(&a.theta_lo)?;
    let hi = ctx.real(&a.theta_hi)?;
    let opts = BracketOptions {
        window: a.window,
        horizon: a.horizon,
        verify_to: a.verify_to,
        refine: a.refine,
    };
    let rep = bracket(&lo, &hi, &opts)?;
    eprintln!("{}", certify_summary(&rep.lower, "lower"));
    eprintln!("{}", certify_summary(&rep.upper, "upper"));
    let verdict = match rep.best() {
        Some((l, h)) => {
            eprintln!("certified: {} < theta_opt < {}", l.to_decimal(), h.to_decimal());
            None
        }
        None => Some(Failure::Inconclusive("at least one side has no certificate".into())),
    };
    let body = ctx.render(&rep, || {
        let mut rows = Vec::new();
        if let Some(Evidence::Lower { finite, .. }) = rep.lower.certificate().map(|c| &c.evidence) {
            for v in &finite.values {
                let method = serde_json::to_value(v.method).unwrap_or_default();
                rows.push(vec![v.n.to_string(), method.as_str().unwrap_or("").to_string(), v.value.to_decimal()]);
            }
        }
        Table { columns: vec!["n", "method", "win_probability_lower_bound"], rows }
    })?;
    Ok(Emitted { body, verdict })
}

fn certify_summary(o: &Outcome, side: &str) -> String {
    match o {
        Outcome::Inconclusive { theta, reason } => {
            format!("{side} side at {}: inconclusive ({reason})", theta.to_decimal())
        }
        Outcome::Certified { certificate } => match &certificate.evidence {
            Evidence::Upper { failure_index, b_at_failure, .. } => format!(
                "{side} side at {}: b_{failure_index} = {} < 0",
                certificate.theta.to_decimal(),
                b_at_failure.to_decimal_digits(12)
            ),
            Evidence::Lower { tail_start, finite, tail, .. } => format!(
                "{side} side at {}: harmonic from m = {tail_start}, min win probability {} at n = {} for n <= {}, tail bound {} from n = {}",
                certificate.theta.to_decimal(),
                finite.min_value.to_decimal(),
                finite.min_at,
                finite.up_to,
                tail.bound.to_decimal_digits(12),
                tail.n
            ),
        },
    }
}

fn simulate(ctx: &Ctx, a: &SimulateArgs) -> Result<Emitted, Failure> {
    let strategy = input::selector(ctx.prec, &a.strategy)?;
    if let Some(ns) = &a.n_values {
        let rows = sweep(&strategy, ns, a.trials, a.seed, a.partitions)?;
        return ok(ctx.render(&rows, || Table {
            columns: vec!["n", "trials", "wins", "estimate", "std_error", "exact"],
            rows: rows
                .iter()
                .map(|r| {
                    vec![
                        r.n.to_string(),
                        r.result.trials.to_string(),
                        r.result.wins.to_string(),
                        format!("{:e}", r.result.estimate),
                        format!("{:e}", r.result.std_error),
                        r.exact.as_ref().map(Real::to_decimal).unwrap_or_default(),
                    ]
                })
                .collect(),
        })?);
    }
    let adversary: AdversaryChoice = input::adversary(a.adversary.as_deref().expect("clap group"))?;
    let res = estimate(&strategy, &adversary, a.trials, a.seed, a.partitions)?;
    ok(ctx.render(&res, || Table {
        columns: vec!["trials", "wins", "estimate", "std_error", "seed", "partitions"],
        rows: vec![vec![
            res.trials.to_string(),
            res.wins.to_string(),
            format!("{:e}", res.estimate),
            format!("{:e}", res.std_error),
            res.seed.to_string(),
            res.partitions.to_string(),
        ]],
    })?)
}

fn cardgame(ctx: &Ctx, a: &CardgameArgs) -> Result<Emitted, Failure> {
    let config = CardGameConfig::new(a.d, a.n_max)?;
    let fp = fictitious_play(&config, a.iters, a.tol)?;
    let structure = structure_check(&config, &fp.mix, &fp.strategy)?;
    #[derive(Serialize)]
    struct CardReport<'a> {
        equilibrium: &'a lastarrival::cardgame::FictitiousPlayReport,
        structure: &'a lastarrival::cardgame::StructureReport,
    }
    let result = CardReport { equilibrium: &fp, structure: &structure };
    eprintln!(
        "value {:.9} (lower {:.9}, upper {:.9}, gap {:.3e}) after {} iterations{}",
        fp.value,
        fp.lower,
        fp.upper,
        fp.gap,
        fp.iterations,
        if fp.converged { "" } else { ", not converged" }
    );
    ok(ctx.render(&result, || Table {
        columns: vec!["n", "devil_weight", "win_probability"],
        rows: (1..=a.n_max)
            .map(|n| {
                vec![n.to_string(), format!("{:e}", fp.mix.weights[n - 1]), format!("{:e}", fp.profile[n - 1])]
            })
            .collect(),
    })?)
}

fn theta_n(ctx: &Ctx, a: &ThetaNArgs) -> Result<Emitted, Failure> {
    let tol = ctx.real(&a.tol)?;
    let range = if a.all { 1..=a.n_max } else { a.n_max..=a.n_max };
    #[derive(Serialize)]
    struct Row {
        n: usize,
        theta_n: Real,
    }
    let rows = range
        .map(|n| theta_restricted(n, &tol).map(|theta_n| Row { n, theta_n }))
        .collect::<Result<Vec<_>, _>>()?;
    ok(ctx.render(&rows, || Table {
        columns: vec!["n", "theta_n"],
        rows: rows.iter().map(|r| vec![r.n.to_string(), r.theta_n.to_decimal()]).collect(),
    })?)
}
