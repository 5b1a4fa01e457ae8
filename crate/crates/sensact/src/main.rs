use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sensact::bench::{rows_to_csv, run_suite, SuiteConfig};
use sensact::candidates;
use sensact::constraint::ConstraintFile;
use sensact::io::{format_f64, read_to_string, to_json, to_json_line, write_new};
use sensact::methods::{run_select, SelectConfig};
use sensact::result::{Method, RunResult};
use sensact::sensact_core::combsearch::build_candidate_set;
use sensact::sensact_core::misdp::{assemble_bigm, BigMParams};
use sensact::sensact_core::netmodel::{
    reduced_matrices, LogisticConstraint, RandomNetworkParams, Selection, DEFAULT_COUPLING_DECAY,
    DEFAULT_INSTABILITY_SHIFT, DEFAULT_PASSIVE_MARGIN,
};
use sensact::sensact_core::sdp::{write_sdpa, Status};
use sensact::sensact_core::sof::{build_sof_problem, epsilon_sweep, SofOptions};
use sensact::system::{generate_mass_spring, generate_random, SystemFile};
use sensact::verify::verify;
use sensact::{AppError, Result, EXIT_INFEASIBLE, EXIT_OK};

/// Simultaneous sensor and actuator selection for static output feedback.
#[derive(Parser)]
#[command(name = "sensact", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a system file.
    Generate {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Run a selection method on a system.
    Select(SelectArgs),
    /// Recompute the closed loop and certificate residuals of a result.
    Verify { system: PathBuf, result: PathBuf },
    /// Run a benchmark suite.
    Bench {
        config: PathBuf,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
        /// Worker threads (default: one per core).
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        force: bool,
    },
    /// Solve the LMI at one selection for a list of margins; CSV to stdout.
    Sweep {
        system: PathBuf,
        /// Comma-separated margins.
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
        /// Actuator bits; default all active.
        #[arg(long, requires = "gamma")]
        pi: Option<String>,
        /// Sensor bits; default all active.
        #[arg(long, requires = "pi")]
        gamma: Option<String>,
    },
    /// Candidate-set files for BSA.
    Candidates {
        #[command(subcommand)]
        cmd: CandCmd,
    },
}

#[derive(Subcommand)]
enum GenKind {
    Random {
        #[arg(long)]
        nodes: usize,
        #[arg(long, default_value_t = 2)]
        states_per_node: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_COUPLING_DECAY)]
        coupling_decay: f64,
        #[arg(long, default_value_t = DEFAULT_INSTABILITY_SHIFT)]
        instability_shift: f64,
        #[arg(long, default_value_t = DEFAULT_PASSIVE_MARGIN)]
        passive_margin: f64,
        #[arg(short, long, default_value = "system.json")]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    MassSpring {
        #[arg(long)]
        masses: usize,
        #[arg(long)]
        perturbation: Option<f64>,
        #[arg(short, long, default_value = "system.json")]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

#[derive(Subcommand)]
enum CandCmd {
    /// Enumerate the candidate set of a constraint.
    Export {
        #[arg(long)]
        nodes: Option<usize>,
        /// Take N from a system file instead.
        #[arg(long, conflicts_with = "nodes")]
        system: Option<PathBuf>,
        #[arg(long)]
        constraint: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

#[derive(clap::Args)]
struct SelectArgs {
    method: Method,
    system: PathBuf,
    /// Constraint file; default at least one sensor and one actuator.
    #[arg(long)]
    constraint: Option<PathBuf>,
    #[arg(long)]
    eps: Option<f64>,
    /// Precomputed candidate set (BSA).
    #[arg(long)]
    db: Option<PathBuf>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    max_infeasibility: Option<usize>,
    #[arg(long)]
    max_random: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "L1")]
    l1: Option<f64>,
    #[arg(long = "L2")]
    l2: Option<f64>,
    #[arg(long = "L3")]
    l3: Option<f64>,
    #[arg(long)]
    max_nodes: Option<usize>,
    #[arg(short, long, default_value = "result.json")]
    out: PathBuf,
    #[arg(long)]
    force: bool,
    /// Per-step log, one JSON object per line.
    #[arg(long)]
    solve_log: Option<PathBuf>,
    /// Write the root problem in SDPA sparse format and continue.
    #[arg(long)]
    dump_sdpa: Option<PathBuf>,
}

fn load_constraint(path: Option<&Path>, n: usize) -> Result<LogisticConstraint> {
    match path {
        Some(p) => ConstraintFile::read(p)?.compile(n),
        None => ConstraintFile::at_least_one_each().compile(n),
    }
}

fn cmd_generate(kind: GenKind) -> Result<i32> {
    let (sys, out, force) = match kind {
        GenKind::Random { nodes, states_per_node, seed, coupling_decay, instability_shift, passive_margin, out, force } => {
            let p = RandomNetworkParams { nodes, states_per_node, coupling_decay, instability_shift, passive_margin, seed };
            (generate_random(&p)?, out, force)
        }
        GenKind::MassSpring { masses, perturbation, out, force } => (generate_mass_spring(masses, perturbation)?, out, force),
    };
    sys.write(&out, force)?;
    let net = &sys.network;
    eprintln!("wrote {} (N = {}, nx = {}, nu = {}, ny = {})", out.display(), net.n_nodes(), net.nx(), net.nu(), net.ny());
    Ok(EXIT_OK)
}

fn cmd_select(a: SelectArgs) -> Result<i32> {
    let sys = SystemFile::read(&a.system)?;
    let net = &sys.network;
    let constraint = load_constraint(a.constraint.as_deref(), net.n_nodes())?;
    let mut cfg = SelectConfig::default();
    if let Some(e) = a.eps {
        cfg.sof.eps = e;
    }
    let h = &mut cfg.heu;
    h.max_iter = a.max_iter.unwrap_or(h.max_iter);
    h.max_infeasibility = a.max_infeasibility.unwrap_or(h.max_infeasibility);
    h.max_random = a.max_random.unwrap_or(h.max_random);
    h.seed = a.seed.unwrap_or(h.seed);
    let m = &mut cfg.misdp;
    m.l1 = a.l1.unwrap_or(m.l1);
    m.l2 = a.l2.unwrap_or(m.l2);
    m.l3 = a.l3.unwrap_or(m.l3);
    m.max_nodes = a.max_nodes.unwrap_or(m.max_nodes);
    if let Some(db) = &a.db {
        if a.method != Method::Bsa {
            return Err(AppError::Input("--db applies to bsa only".into()));
        }
        cfg.candidates = Some(candidates::read(db, &constraint)?);
    }
    if let Some(path) = &a.dump_sdpa {
        let problem = match a.method {
            Method::Misdp => {
                let params = BigMParams { l1: cfg.misdp.l1, l2: cfg.misdp.l2, l3: cfg.misdp.l3, sof: cfg.sof.clone() };
                assemble_bigm(net, &constraint, &params)?.problem
            }
            _ => {
                let (bq, cq) = reduced_matrices(net, &Selection::all_active(net.n_nodes()))?;
                build_sof_problem(net.a(), &bq, &cq, &cfg.sof)?.0
            }
        };
        write_new(path, write_sdpa(&problem).as_bytes(), a.force)?;
    }

    let sel = run_select(net, &constraint, a.method, &cfg)?;
    let r = &sel.result;
    r.write(&a.out, a.force)?;
    if let Some(path) = &a.solve_log {
        let mut text = String::new();
        for entry in &sel.log {
            text.push_str(&to_json_line(entry)?);
            text.push('\n');
        }
        write_new(path, text.as_bytes(), a.force)?;
    }
    match (r.h, r.max_re_eig) {
        (Some(h), Some(re)) => eprintln!(
            "{}: {:?}, H = {h}, pi = {}, gamma = {}, max Re eig = {}, {:.3} s",
            a.method,
            r.status,
            r.pi.as_deref().unwrap_or(""),
            r.gamma.as_deref().unwrap_or(""),
            format_f64(re),
            r.wall_s
        ),
        _ => eprintln!("{}: {:?}, {}", a.method, r.status, r.note.as_deref().unwrap_or("no selection")),
    }
    Ok(r.status.exit_code())
}

fn cmd_verify(system: &Path, result: &Path) -> Result<i32> {
    let sys = SystemFile::read(system)?;
    let res = RunResult::read(result)?;
    let rep = verify(&sys.network, &res)?;
    println!("{}", to_json(&rep)?);
    if rep.pass {
        eprintln!("PASS");
        Ok(EXIT_OK)
    } else {
        for p in &rep.problems {
            eprintln!("FAIL: {p}");
        }
        Ok(EXIT_INFEASIBLE)
    }
}

fn cmd_bench(config: &Path, csv: &Path, json: Option<&Path>, workers: Option<usize>, force: bool) -> Result<i32> {
    let cfg = SuiteConfig::from_json(&read_to_string(config)?)?;
    let rep = run_suite(&cfg, workers)?;
    write_new(csv, rows_to_csv(&rep.rows)?.as_bytes(), force)?;
    if let Some(j) = json {
        write_new(j, to_json(&rep)?.as_bytes(), force)?;
    }
    let failed = rep.rows.iter().filter(|r| r.error.is_some()).count();
    eprintln!("{} cells, {failed} with errors", rep.rows.len());
    Ok(EXIT_OK)
}

fn cmd_sweep(system: &Path, eps: &[f64], pi: Option<String>, gamma: Option<String>) -> Result<i32> {
    let sys = SystemFile::read(system)?;
    let net = &sys.network;
    let s = match (pi, gamma) {
        (Some(p), Some(g)) => Selection::from_strings(&p, &g)?,
        _ => Selection::all_active(net.n_nodes()),
    };
    if s.n() != net.n_nodes() {
        return Err(AppError::Input(format!("selection has N = {}, system has N = {}", s.n(), net.n_nodes())));
    }
    let points = epsilon_sweep(net, &s, eps, &SofOptions::default())?;
    let mut w = csv::Writer::from_writer(std::io::stdout());
    w.write_record(["eps", "status", "maxReEig"])?;
    for p in &points {
        let status = match p.status {
            Status::Feasible => "feasible",
            Status::Infeasible => "infeasible",
            Status::Inconclusive => "inconclusive",
        };
        w.write_record([format_f64(p.eps), status.to_string(), p.max_re.map(format_f64).unwrap_or_default()])?;
    }
    w.flush().map_err(|e| AppError::Io(e.to_string()))?;
    Ok(EXIT_OK)
}

fn cmd_candidates(cmd: CandCmd) -> Result<i32> {
    match cmd {
        CandCmd::Export { nodes, system, constraint, out, force } => {
            let n = match (nodes, system) {
                (Some(n), None) => n,
                (None, Some(p)) => SystemFile::read(&p)?.network.n_nodes(),
                _ => return Err(AppError::Input("give --nodes or --system".into())),
            };
            let c = load_constraint(constraint.as_deref(), n)?;
            let set = build_candidate_set(&c)?;
            candidates::write(&out, &set, &c, force)?;
            eprintln!("wrote {} candidates to {}", set.len(), out.display());
            Ok(EXIT_OK)
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.cmd {
        Cmd::Generate { kind } => cmd_generate(kind),
        Cmd::Select(a) => cmd_select(a),
        Cmd::Verify { system, result } => cmd_verify(&system, &result),
        Cmd::Bench { config, csv, json, workers, force } => cmd_bench(&config, &csv, json.as_deref(), workers, force),
        Cmd::Sweep { system, eps, pi, gamma } => cmd_sweep(&system, &eps, pi, gamma),
        Cmd::Candidates { cmd } => cmd_candidates(cmd),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SENSACT_SOLVER_LOG", "warn")).init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
