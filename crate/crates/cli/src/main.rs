//! `opgame`: price of anarchy, dynamics, suitability checks and instance
//! generation for opinion-formation games.
//!
//! Exit codes: 0 success, 1 analytic negative (divergence or a suitability
//! violation), 2 numeric failure, 3 usage or schema error.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use opinion_games::clique::CliqueGame;
use opinion_games::cost_fn::{min_ratio_search, verify_suitability, zeta, zeta_limit, SampleSpec};
use opinion_games::dynamics::{simulate, simulate_update_map, SimulateOptions, Simulation, SimulationStatus};
use opinion_games::equilibrium::{
    price_of_anarchy, price_of_anarchy_quadratic, NashOptions, PoaOptions, PoaReport, PoaValue, Solver,
};
use opinion_games::game::random::{seeded_profile, seeded_quadratic};
use opinion_games::game::OpinionGame;
use opinion_games::lowerbound::{build_three_person, exp_tight_spec, no_nash_variant, nonconvex_example};
use opinion_games::schema::Game;
use opinion_games::{CostFunction, Error, OpinionProfile};
use serde_json::json;

const EXIT_NEGATIVE: u8 = 1;
const EXIT_NUMERIC: u8 = 2;
const EXIT_USAGE: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "opgame",
    version,
    about = "Opinion-formation games: equilibria, price of anarchy and suitability"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for Nash equilibrium and social optimum and report SC(x)/SC(y).
    Poa(PoaArgs),
    /// Worst-case price of anarchy of |x|^alpha as CSV rows `alpha,zeta`.
    Zeta(ZetaArgs),
    /// Write a game file.
    Generate(GenerateArgs),
    /// Run best-response dynamics on a quadratic game.
    Simulate(SimulateArgs),
    /// Check (lambda, kappa, p)-suitability on sampled pairs, or search the
    /// smallest ratio.
    Suitability(SuitabilityArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SolverArg {
    /// Closed form for quadratic games, iterative otherwise.
    Auto,
    Closed,
    Iterative,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct PoaArgs {
    game: PathBuf,
    #[arg(long, value_enum, default_value_t = SolverArg::Auto)]
    solver: SolverArg,
    /// Stopping tolerance of the iterative solvers.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["alpha", "range"]))]
struct ZetaArgs {
    /// Single alpha > 1; repeatable.
    #[arg(long)]
    alpha: Vec<f64>,
    /// Grid `start:end:step`, end inclusive.
    #[arg(long)]
    range: Option<String>,
    /// Append the limit row `inf,2/(e ln 2)`.
    #[arg(long)]
    limit: bool,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GenerateKind {
    /// Three-person game attaining 2/(e ln 2) with cost e^x.
    ExpTight,
    /// Two-person non-convex game with unbounded price of anarchy.
    Nonconvex,
    /// Two-person game with weight -1 and no Nash equilibrium.
    NoNash,
    /// Undirected quadratic game with PD internal and PSD edge weights.
    RandomQuadratic,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(value_enum)]
    kind: GenerateKind,
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 0.5)]
    density: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Internal weight of the non-convex game.
    #[arg(long, default_value_t = 0.125)]
    epsilon: f64,
    /// Internal weight `r` of the no-Nash game.
    #[arg(long, default_value_t = 0.0)]
    r: f64,
    /// Write the game here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Init {
    Zeros,
    /// Internal opinions.
    S,
    /// Uniform on [-1, 1], drawn from --seed.
    Random,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    game: PathBuf,
    #[arg(long, value_enum, default_value_t = Init::Zeros)]
    init: Init,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    /// CSV trace with columns `iteration,person,component,value`.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Record every n-th iterate in the trace.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Iterate the update map even when it is not a best response.
    #[arg(long)]
    update_map: bool,
}

#[derive(Debug, Args)]
struct SuitabilityArgs {
    /// `power:ALPHA`, `exp`, `cosh` or `square`.
    #[arg(long = "fn")]
    function: String,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Exponent p; both 1 and 2 are checked when omitted.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Allowed normalized violation.
    #[arg(long, default_value_t = 1e-4)]
    rel_tol: f64,
    #[arg(long, default_value_t = -10.0)]
    lo: f64,
    #[arg(long, default_value_t = 10.0)]
    hi: f64,
    /// Search the smallest sampled-feasible lambda/kappa instead.
    #[arg(long)]
    search: bool,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Failure {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        let code = match e {
            Error::Schema(_) | Error::InvalidArgument(_) => EXIT_USAGE,
            _ => EXIT_NUMERIC,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Failure {
        Failure::usage(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Failure {
        Failure::usage(e.to_string())
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Poa(a) => cmd_poa(&a),
        Command::Zeta(a) => cmd_zeta(&a),
        Command::Generate(a) => cmd_generate(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Suitability(a) => cmd_suitability(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_game(path: &Path) -> Result<Game, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    Ok(Game::from_json(&text)?)
}

/// Writes to `out` when given, otherwise to stdout.
fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::usage(format!("{}: {e}", p.display()))),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn poa_flag(v: PoaValue) -> &'static str {
    match v {
        PoaValue::Ratio(_) => "ratio",
        PoaValue::Unbounded => "unbounded",
        PoaValue::DegenerateOne => "degenerate_one",
    }
}

fn cmd_poa(a: &PoaArgs) -> Outcome {
    if !(a.tol > 0.0) {
        return Err(Failure::usage("--tol must be positive"));
    }
    let game = load_game(&a.game)?;
    let opts = PoaOptions {
        nash: NashOptions {
            inner_tol: a.tol * 1e-2,
            outer_tol: a.tol,
            ..NashOptions::default()
        },
        optimum_tol: a.tol,
        ..PoaOptions::default()
    };
    let (solver, report) = match (&game, a.solver) {
        (Game::Quadratic(q), SolverArg::Auto | SolverArg::Closed) => {
            (Solver::Closed, price_of_anarchy_quadratic(q, Solver::Closed, &opts)?)
        }
        (Game::Quadratic(q), SolverArg::Iterative) => (
            Solver::Iterative,
            price_of_anarchy_quadratic(q, Solver::Iterative, &opts)?,
        ),
        (_, SolverArg::Closed) => return Err(Failure::usage("the closed-form solver needs a quadratic game")),
        (Game::Heterogeneous(h), _) => (Solver::Iterative, price_of_anarchy(h, &opts)?),
        (Game::Clique(c), _) => (Solver::Iterative, clique_poa(c, &opts)?),
    };
    let text = match a.format {
        Format::Text => poa_text(&game, solver, &report),
        Format::Json => poa_json(&game, solver, &report),
        Format::Csv => poa_csv(&report)?,
    };
    emit(None, &text)?;
    Ok(0)
}

fn clique_poa(c: &CliqueGame, opts: &PoaOptions) -> opinion_games::Result<PoaReport> {
    c.price_of_anarchy(&opts.nash, opts.optimum_tol, opts.optimum_max_iter)
}

fn solver_name(s: Solver) -> &'static str {
    match s {
        Solver::Closed => "closed",
        Solver::Iterative => "iterative",
    }
}

fn kind_name(g: &Game) -> &'static str {
    match g {
        Game::Quadratic(_) => "quadratic",
        Game::Heterogeneous(_) => "heterogeneous",
        Game::Clique(_) => "clique",
    }
}

fn poa_text(game: &Game, solver: Solver, r: &PoaReport) -> String {
    let value = match r.value {
        PoaValue::Ratio(x) => format!("{x}"),
        PoaValue::Unbounded => "unbounded".to_string(),
        PoaValue::DegenerateOne => "1 (both social costs vanish)".to_string(),
    };
    format!(
        "game: {}\nsolver: {}\nSC(x): {}\nSC(y): {}\nPoA: {}\nnash residual: {:e}\noptimum residual: {:e}\nnash iterations: {}\noptimum iterations: {}\n",
        kind_name(game),
        solver_name(solver),
        r.sc_nash,
        r.sc_optimum,
        value,
        r.nash_residual,
        r.optimum_residual,
        r.nash_iterations,
        r.optimum_iterations,
    )
}

fn blocks(z: &OpinionProfile) -> Vec<Vec<f64>> {
    z.clone().into()
}

fn poa_json(game: &Game, solver: Solver, r: &PoaReport) -> String {
    let poa = match r.value {
        PoaValue::Ratio(x) => json!(x),
        _ => serde_json::Value::Null,
    };
    let v = json!({
        "game": kind_name(game),
        "solver": solver_name(solver),
        "nash": blocks(&r.nash),
        "optimum": blocks(&r.optimum),
        "sc_nash": r.sc_nash,
        "sc_optimum": r.sc_optimum,
        "poa": poa,
        "poa_flag": poa_flag(r.value),
        "nash_residual": r.nash_residual,
        "optimum_residual": r.optimum_residual,
        "nash_iterations": r.nash_iterations,
        "optimum_iterations": r.optimum_iterations,
    });
    format!(
        "{}\n",
        serde_json::to_string_pretty(&v).expect("report values are finite or null")
    )
}

fn csv_string(rows: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<(), csv::Error>) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    rows(&mut w)?;
    let bytes = w.into_inner().map_err(|e| Failure::usage(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Columns `sc_nash,sc_optimum,poa,poa_flag,nash_residual,optimum_residual,nash_iterations,optimum_iterations`.
fn poa_csv(r: &PoaReport) -> Result<String, Failure> {
    csv_string(|w| {
        w.write_record([
            "sc_nash",
            "sc_optimum",
            "poa",
            "poa_flag",
            "nash_residual",
            "optimum_residual",
            "nash_iterations",
            "optimum_iterations",
        ])?;
        w.write_record([
            r.sc_nash.to_string(),
            r.sc_optimum.to_string(),
            r.value.as_f64().to_string(),
            poa_flag(r.value).to_string(),
            r.nash_residual.to_string(),
            r.optimum_residual.to_string(),
            r.nash_iterations.to_string(),
            r.optimum_iterations.to_string(),
        ])
    })
}

fn parse_range(spec: &str) -> Result<Vec<f64>, Failure> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Failure::usage(format!("--range {spec}: expected start:end:step"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    let (start, end, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0) || !(end >= start) || !start.is_finite() || !end.is_finite() {
        return Err(bad());
    }
    // Relative slack so that an end point on the grid is kept despite rounding.
    let count = ((end - start) / step * (1.0 + 1e-12)).floor() as usize;
    Ok((0..=count).map(|k| start + step * k as f64).collect())
}

/// Columns `alpha,zeta`.
fn cmd_zeta(a: &ZetaArgs) -> Outcome {
    let mut alphas = a.alpha.clone();
    if let Some(r) = &a.range {
        alphas.extend(parse_range(r)?);
    }
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in &alphas {
        rows.push((alpha, zeta(alpha)?));
    }
    let text = csv_string(|w| {
        w.write_record(["alpha", "zeta"])?;
        for (alpha, z) in &rows {
            w.write_record([alpha.to_string(), z.to_string()])?;
        }
        if a.limit {
            w.write_record(["inf".to_string(), zeta_limit().to_string()])?;
        }
        Ok(())
    })?;
    emit(a.out.as_deref(), &text)?;
    Ok(0)
}

fn cmd_generate(a: &GenerateArgs) -> Outcome {
    let game = match a.kind {
        GenerateKind::ExpTight => Game::Heterogeneous(build_three_person(&exp_tight_spec())?.game),
        GenerateKind::Nonconvex => Game::Heterogeneous(nonconvex_example(a.epsilon)?),
        GenerateKind::NoNash => Game::Quadratic(no_nash_variant(a.r)),
        GenerateKind::RandomQuadratic => Game::Quadratic(seeded_quadratic(a.n, a.m, a.density, a.seed)?),
    };
    emit(a.out.as_deref(), &game.to_json()?)?;
    Ok(0)
}

fn write_trace(path: &Path, sim: &Simulation) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "person", "component", "value"])?;
    for (t, z) in &sim.trace {
        for (i, block) in z.blocks().iter().enumerate() {
            for (k, v) in block.iter().enumerate() {
                w.write_record([t.to_string(), i.to_string(), k.to_string(), v.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs) -> Outcome {
    if a.stride == 0 {
        return Err(Failure::usage("--stride must be positive"));
    }
    let Game::Quadratic(q) = load_game(&a.game)? else {
        return Err(Failure::usage("simulate needs a quadratic game"));
    };
    let z0 = match a.init {
        Init::Zeros => OpinionProfile::zeros(&q.dims()),
        Init::S => q.internal_opinions(),
        Init::Random => seeded_profile(&q.dims(), 1.0, a.seed),
    };
    let opts = SimulateOptions {
        tol: a.tol,
        max_iter: a.max_iter,
        trace_stride: a.trace.as_ref().map(|_| a.stride),
    };
    let sim = if a.update_map {
        simulate_update_map(&q, &z0, &opts)?
    } else {
        simulate(&q, &z0, &opts)?
    };
    if let Some(path) = &a.trace {
        write_trace(path, &sim)?;
    }
    let (status, code) = match sim.status {
        SimulationStatus::Converged => ("converged".to_string(), 0),
        SimulationStatus::Diverged(reason) => (format!("diverged ({reason:?})"), EXIT_NEGATIVE),
        SimulationStatus::MaxIterReached => ("max iterations reached".to_string(), EXIT_NUMERIC),
    };
    let mut out = format!(
        "status: {status}\niterations: {}\nlast step: {:e}\n",
        sim.iterations, sim.last_step
    );
    for (i, block) in sim.z.blocks().iter().enumerate() {
        let vals: Vec<String> = block.iter().map(f64::to_string).collect();
        out.push_str(&format!("z[{i}]: {}\n", vals.join(" ")));
    }
    emit(None, &out)?;
    Ok(code)
}

fn parse_function(spec: &str) -> Result<CostFunction, Failure> {
    let f = match spec.split_once(':') {
        Some(("power", alpha)) => {
            let alpha: f64 = alpha
                .parse()
                .map_err(|_| Failure::usage(format!("--fn {spec}: alpha is not a number")))?;
            CostFunction::abs_power(alpha)?
        }
        None if spec == "exp" => CostFunction::exp(CostFunction::identity()),
        None if spec == "cosh" => CostFunction::cosh(CostFunction::identity()),
        None if spec == "square" => CostFunction::square(),
        _ => {
            return Err(Failure::usage(format!(
                "--fn {spec}: expected power:ALPHA, exp, cosh or square"
            )))
        }
    };
    Ok(f)
}

fn cmd_suitability(a: &SuitabilityArgs) -> Outcome {
    let f = parse_function(&a.function)?;
    let spec = SampleSpec {
        lo: a.lo,
        hi: a.hi,
        pairs: a.samples,
        rel_tol: a.rel_tol,
    };
    if a.search {
        let r = min_ratio_search(&f, &spec, 1e-6, a.seed)?;
        emit(
            None,
            &format!(
                "lambda: {}\nkappa: {}\nratio: {}\nconstraints: {}\n",
                r.lambda, r.kappa, r.ratio, r.constraints
            ),
        )?;
        return Ok(0);
    }
    let (Some(lambda), Some(kappa)) = (a.lambda, a.kappa) else {
        return Err(Failure::usage(
            "--lambda and --kappa are required unless --search is given",
        ));
    };
    let ps = match a.p {
        Some(p) => vec![p],
        None => vec![1.0, 2.0],
    };
    let mut out = String::new();
    let mut passed = true;
    for p in ps {
        let r = verify_suitability(&f, lambda, kappa, p, &spec, a.seed)?;
        out.push_str(&format!(
            "p = {p}: {} ({} pairs, min slack {:e})\n",
            if r.passed { "pass" } else { "fail" },
            r.pairs_checked,
            r.min_slack
        ));
        if let Some(c) = &r.counterexample {
            out.push_str(&format!(
                "  counterexample: a = {:?}, b = {:?}, lhs = {}, rhs = {}, violation = {:e}\n",
                c.a, c.b, c.lhs, c.rhs, c.violation
            ));
        }
        passed &= r.passed;
    }
    emit(None, &out)?;
    Ok(if passed { 0 } else { EXIT_NEGATIVE })
}
