use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use mitl_relax::energy::{compute_energy, energy_csv, largest_self_reachable, EdgeCost};
use mitl_relax::mitl::{parse, propositions_in, Alphabet, Formula};
use mitl_relax::planner::{run_loop, trace_csv, trace_jsonl, PlanError, PlannerConfig, TraceHeader};
use mitl_relax::product::{build_product, ProductError};
use mitl_relax::sim::{case_study_scenario, Environment, Scenario, CASE_STUDY_FORMULA};
use mitl_relax::tba::{Level, RelaxedTba, TbaError, SCHEMA_VERSION};

#[derive(Parser)]
#[command(name = "mitl-relax", version, about = "Online planning for soft MITL tasks on grid workspaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the relaxed automaton of a formula.
    Build(BuildArgs),
    /// Run a planning episode and write its trace.
    Simulate(SimArgs),
    /// Time planning steps over workspace sizes and horizons.
    Bench(BenchArgs),
    /// Print energy statistics of the initial product.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct BuildArgs {
    /// Formula text, or @path to read it from a file.
    #[arg(long)]
    formula: String,
    /// Comma-separated propositions; defaults to those in the formula.
    #[arg(long, value_delimiter = ',')]
    alphabet: Option<Vec<String>>,
    /// Keep states unreachable from the initial state.
    #[arg(long)]
    no_prune: bool,
    /// Directory for tba.json and tba.dot.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct ProblemArgs {
    /// Scenario JSON; the built-in case study when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Formula text or @path; the case-study formula when omitted.
    #[arg(long)]
    formula: Option<String>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    sense_range: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Use the undamped cost ω·ω_v for energy.
    #[arg(long)]
    literal_cost: bool,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, default_value_t = 50)]
    steps: usize,
    /// Directory for trace.jsonl and series.csv.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = vec![10usize, 30, 50])]
    sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![4usize, 6, 8])]
    horizons: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    repetitions: usize,
    /// Planning steps per run.
    #[arg(long, default_value_t = 3)]
    steps: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// CSV output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Write the energy table as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure with a process exit code.
#[derive(Debug)]
struct Exit(u8, anyhow::Error);

fn input<E: Into<anyhow::Error>>(e: E) -> Exit {
    Exit(2, e.into())
}

impl From<anyhow::Error> for Exit {
    fn from(e: anyhow::Error) -> Self {
        Exit(2, e)
    }
}

fn plan_error(e: PlanError) -> Exit {
    let code = match e {
        PlanError::NoAcceptingRun => 3,
        PlanError::BadConfig(_) => 2,
        PlanError::Infeasible { .. } | PlanError::NoMoves { .. } => 4,
    };
    Exit(code, e.into())
}

fn read_formula(arg: &str) -> Result<String> {
    match arg.strip_prefix('@') {
        Some(path) => fs::read_to_string(path).with_context(|| format!("reading formula file {path}")),
        None => Ok(arg.to_string()),
    }
}

fn render_levels(v: &[Level]) -> String {
    let parts: Vec<String> = v.iter().map(|l| l.to_string()).collect();
    format!("[{}]", parts.join(","))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn cmd_build(args: BuildArgs) -> Result<(), Exit> {
    let text = read_formula(&args.formula)?;
    let alphabet = match args.alphabet {
        Some(names) => Alphabet::new(names),
        None => Alphabet::new(propositions_in(&text)),
    }
    .map_err(input)?;
    let formula = parse(&text, &alphabet).map_err(input)?;
    let raw = RelaxedTba::build(&formula).map_err(input)?;
    let raw_count = raw.len();
    let tba = if args.no_prune {
        raw
    } else {
        mitl_relax::tba::prune_unreachable(raw).map_err(input)?
    };
    println!("formula: {}", formula);
    println!("states: {}", tba.len());
    println!("raw states: {}", raw_count);
    println!("edges: {}", tba.edges.len());
    println!("clocks: {}", tba.clock_count());
    println!("initial: {}", tba.initial);
    println!("accepting: {}", tba.accepting);
    println!("sink: {}", tba.sink);
    println!("v_c={}", render_levels(&tba.v_c()));
    println!("v_d={}", render_levels(&tba.v_d()));
    if let Some(dir) = args.out {
        write(&dir, "tba.json", &tba.to_json())?;
        write(&dir, "tba.dot", &tba.to_dot())?;
    }
    Ok(())
}

struct Problem {
    scenario: Scenario,
    formula: Formula,
    alphabet: Alphabet,
    config: PlannerConfig,
}

fn load_problem(p: &ProblemArgs) -> Result<Problem, Exit> {
    let mut scenario = match &p.scenario {
        Some(path) => {
            let s = fs::read_to_string(path).with_context(|| format!("reading scenario {}", path.display()))?;
            serde_json::from_str::<Scenario>(&s).with_context(|| format!("parsing scenario {}", path.display()))?
        }
        None => case_study_scenario(),
    };
    if let Some(seed) = p.seed {
        scenario.seed = seed;
    }
    if let Some(r) = p.sense_range {
        scenario.sensor.range = r;
    }
    let text = match &p.formula {
        Some(f) => read_formula(f)?,
        None => CASE_STUDY_FORMULA.to_string(),
    };
    let mut names: Vec<String> = propositions_in(&text).into_iter().collect();
    for n in scenario.propositions() {
        if !names.contains(&n) {
            names.push(n);
        }
    }
    let alphabet = Alphabet::new(names).map_err(input)?;
    let formula = parse(&text, &alphabet).map_err(input)?;
    let mut config = PlannerConfig::default();
    if let Some(h) = p.horizon {
        config.horizon = h;
    }
    if let Some(a) = p.alpha {
        config.alpha = a;
    }
    if let Some(b) = p.beta {
        config.beta = b;
    }
    if p.literal_cost {
        config.edge_cost = EdgeCost::Literal;
    }
    config.validate(&scenario.sensor).map_err(plan_error)?;
    Ok(Problem {
        scenario,
        formula,
        alphabet,
        config,
    })
}

fn construction(e: impl std::fmt::Display + Send + Sync + 'static, what: &str) -> Exit {
    Exit(2, anyhow::anyhow!("{what}: {e}"))
}

fn product_of(p: &Problem) -> Result<mitl_relax::product::Rpa, Exit> {
    let tba = RelaxedTba::build_pruned(&p.formula).map_err(|e: TbaError| construction(e, "automaton"))?;
    let wts = p.scenario.knowledge_wts(&p.alphabet).map_err(input)?;
    build_product(wts, tba).map_err(|e: ProductError| construction(e, "product"))
}

fn cmd_simulate(args: SimArgs) -> Result<(), Exit> {
    let p = load_problem(&args.problem)?;
    let mut rpa = product_of(&p)?;
    let mut env = Environment::new(&p.scenario, &p.alphabet).map_err(input)?;
    let fstar = largest_self_reachable(&rpa);
    let table = compute_energy(&rpa, &fstar, &p.config.energy());
    let header = TraceHeader {
        schema_version: SCHEMA_VERSION,
        formula: p.formula.render(),
        width: p.scenario.width,
        height: p.scenario.height,
        tba_states: rpa.tba().len(),
        product_states: rpa.len(),
        config: p.config,
        sense_range: p.scenario.sensor.range,
        seed: p.scenario.seed,
        steps: args.steps,
    };
    let trace = run_loop(&mut rpa, table, &mut env, &p.scenario.sensor, &p.config, args.steps).map_err(plan_error)?;
    write(&args.out, "trace.jsonl", &trace_jsonl(&header, &trace.records))?;
    write(&args.out, "series.csv", &trace_csv(&trace.records))?;
    let zeros = trace.records.iter().filter(|r| r.energy == 0.0).count();
    let fallbacks = trace.records.iter().filter(|r| r.fallback).count();
    let reward = trace.records.last().map_or(0.0, |r| r.cumulative_reward);
    println!("steps: {}", trace.records.len());
    println!("energy zeros: {}", zeros);
    println!("fallbacks: {}", fallbacks);
    println!("cumulative reward: {:.4}", reward);
    println!("trace: {}", args.out.join("trace.jsonl").display());
    Ok(())
}

/// Case-study labels on an `n x n` grid with obstacle count scaled by area.
fn bench_scenario(n: usize, seed: u64) -> Scenario {
    let mut s = case_study_scenario();
    s.width = n;
    s.height = n;
    s.seed = seed;
    s.obstacles.count = 4 * (n * n) / 100;
    s.sensor.range = s.sensor.range.max(8);
    s
}

fn cmd_bench(args: BenchArgs) -> Result<(), Exit> {
    let mut csv = String::from("schema_version,workspace,N,Q,P,tba_states,mean_step_ms\n");
    for &n in &args.sizes {
        if n < 10 {
            return Err(Exit(2, anyhow::anyhow!("bench sizes must be at least 10, got {n}")));
        }
        for &h in &args.horizons {
            let mut scenario = bench_scenario(n, args.seed);
            scenario.sensor.range = scenario.sensor.range.max(h);
            let config = PlannerConfig {
                horizon: h,
                ..Default::default()
            };
            let mut names: Vec<String> = propositions_in(CASE_STUDY_FORMULA).into_iter().collect();
            for p in scenario.propositions() {
                if !names.contains(&p) {
                    names.push(p);
                }
            }
            let alphabet = Alphabet::new(names).map_err(input)?;
            let formula = parse(CASE_STUDY_FORMULA, &alphabet).map_err(input)?;
            let problem = Problem {
                scenario,
                formula,
                alphabet,
                config,
            };
            let mut total = 0.0;
            let mut steps = 0usize;
            let (mut q, mut p) = (0, 0);
            let mut s_count = 0;
            for rep in 0..args.repetitions.max(1) {
                let mut rpa = product_of(&problem)?;
                q = rpa.wts().len();
                p = rpa.len();
                s_count = rpa.tba().len();
                let mut sc = problem.scenario.clone();
                sc.seed = args.seed + rep as u64;
                let mut env = Environment::new(&sc, &problem.alphabet).map_err(input)?;
                let fstar = largest_self_reachable(&rpa);
                let table = compute_energy(&rpa, &fstar, &config.energy());
                let t0 = Instant::now();
                let trace = run_loop(&mut rpa, table, &mut env, &sc.sensor, &config, args.steps).map_err(plan_error)?;
                total += t0.elapsed().as_secs_f64();
                steps += trace.records.len();
            }
            let mean_ms = 1000.0 * total / steps.max(1) as f64;
            csv.push_str(&format!("{SCHEMA_VERSION},{n}x{n},{h},{q},{p},{s_count},{mean_ms:.3}\n"));
            eprintln!("{n}x{n} N={h}: |Q|={q} |P|={p} mean step {mean_ms:.3} ms");
        }
    }
    match args.out {
        Some(path) => fs::write(&path, csv)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Exit::from)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> Result<(), Exit> {
    let p = load_problem(&args.problem)?;
    let rpa = product_of(&p)?;
    let fstar = largest_self_reachable(&rpa);
    let table = compute_energy(&rpa, &fstar, &p.config.energy());
    let stats = rpa.stats();
    let finite = table.j.iter().filter(|j| j.is_finite()).count();
    let p0 = rpa.initial_states()[0];
    let report = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "product": stats,
        "fstar_size": table.fstar_states().len(),
        "finite_energy_states": finite,
        "initial_state": p0,
        "initial_energy": if table.j[p0].is_finite() { serde_json::json!(table.j[p0]) } else { serde_json::json!("inf") },
    });
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    if let Some(path) = args.out {
        fs::write(&path, energy_csv(&rpa, &table))
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Exit::from)?;
    }
    if table.j[p0].is_infinite() {
        return Err(plan_error(PlanError::NoAcceptingRun));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Build(a) => cmd_build(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Inspect(a) => cmd_inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Exit(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
