//! Benchmark suites: every method on every system, heuristic runs repeated
//! with per-run seeds. Cells run on a worker pool; output order is canonical
//! (system, method, heuristic seed) regardless of completion order.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use sensact_core::netmodel::{RandomNetworkParams, DEFAULT_COUPLING_DECAY, DEFAULT_INSTABILITY_SHIFT, DEFAULT_PASSIVE_MARGIN};

use crate::constraint::ConstraintFile;
use crate::io::format_f64;
use crate::methods::{run_select, SelectConfig};
use crate::result::{Method, Outcome};
use crate::system::{generate_mass_spring, generate_random, SystemFile};
use crate::{AppError, Result};

/// CSV header, in this fixed order.
pub const CSV_COLUMNS: [&str; 8] = ["method", "seed", "H", "maxReEig", "eps", "wall_s", "iters", "optimal_flag"];

fn default_states() -> usize {
    2
}
fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn default_runs() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemSpec {
    Random {
        nodes: usize,
        #[serde(default = "default_states")]
        states_per_node: usize,
        seeds: Vec<u64>,
        #[serde(default)]
        coupling_decay: Option<f64>,
        #[serde(default)]
        instability_shift: Option<f64>,
        #[serde(default)]
        passive_margin: Option<f64>,
    },
    MassSpring {
        masses: usize,
        #[serde(default)]
        perturbation: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub systems: Vec<SystemSpec>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Heuristic randomizations per system; run `r` uses seed `r`.
    #[serde(default = "default_runs")]
    pub heu_runs: usize,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub max_nodes: Option<usize>,
    #[serde(default)]
    pub constraint: Option<ConstraintFile>,
}

impl SuiteConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

struct Instance {
    label: String,
    seed: u64,
    build: Box<dyn Fn() -> Result<SystemFile> + Send + Sync>,
}

fn instances(cfg: &SuiteConfig) -> Vec<Instance> {
    let mut out = Vec::new();
    for spec in &cfg.systems {
        match spec {
            SystemSpec::Random { nodes, states_per_node, seeds, coupling_decay, instability_shift, passive_margin } => {
                for &seed in seeds {
                    let p = RandomNetworkParams {
                        nodes: *nodes,
                        states_per_node: *states_per_node,
                        coupling_decay: coupling_decay.unwrap_or(DEFAULT_COUPLING_DECAY),
                        instability_shift: instability_shift.unwrap_or(DEFAULT_INSTABILITY_SHIFT),
                        passive_margin: passive_margin.unwrap_or(DEFAULT_PASSIVE_MARGIN),
                        seed,
                    };
                    out.push(Instance {
                        label: format!("random-N{nodes}-s{seed}"),
                        seed,
                        build: Box::new(move || generate_random(&p)),
                    });
                }
            }
            SystemSpec::MassSpring { masses, perturbation } => {
                let (m, d) = (*masses, *perturbation);
                out.push(Instance {
                    label: format!("mass-spring-N{m}"),
                    seed: 0,
                    build: Box::new(move || generate_mass_spring(m, d)),
                });
            }
        }
    }
    out
}

/// One cell of the suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub system: String,
    pub method: Method,
    /// System seed.
    pub seed: u64,
    /// Heuristic seed, for heuristic rows.
    pub heu_seed: Option<u64>,
    pub status: String,
    #[serde(rename = "H")]
    pub h: Option<usize>,
    #[serde(rename = "maxReEig")]
    pub max_re_eig: Option<f64>,
    pub eps: f64,
    pub wall_s: f64,
    pub iters: usize,
    pub optimal: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub system: String,
    pub method: Method,
    pub runs: usize,
    pub failures: usize,
    #[serde(rename = "mean_H")]
    pub mean_h: Option<f64>,
    pub mean_wall_s: f64,
    /// `H` value to number of runs.
    #[serde(rename = "H_histogram")]
    pub h_histogram: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub rows: Vec<BenchRow>,
    pub groups: Vec<GroupSummary>,
}

/// Runs the suite on `workers` threads (`None`: rayon's default).
pub fn run_suite(cfg: &SuiteConfig, workers: Option<usize>) -> Result<SuiteReport> {
    if cfg.heu_runs == 0 {
        return Err(AppError::Input("heu_runs must be at least 1".into()));
    }
    let insts = instances(cfg);
    let mut cells: Vec<(usize, Method, Option<u64>)> = Vec::new();
    for i in 0..insts.len() {
        for &m in &cfg.methods {
            if m == Method::Heu {
                cells.extend((0..cfg.heu_runs as u64).map(|r| (i, m, Some(r))));
            } else {
                cells.push((i, m, None));
            }
        }
    }
    let run_cell = |&(i, method, heu_seed): &(usize, Method, Option<u64>)| -> BenchRow {
        let inst = &insts[i];
        let mut sel = SelectConfig::default();
        if let Some(e) = cfg.eps {
            sel.sof.eps = e;
        }
        if let Some(n) = cfg.max_nodes {
            sel.misdp.max_nodes = n;
        }
        sel.heu.seed = heu_seed.unwrap_or(0);
        let mut row = BenchRow {
            system: inst.label.clone(),
            method,
            seed: inst.seed,
            heu_seed,
            status: "error".into(),
            h: None,
            max_re_eig: None,
            eps: sel.sof.effective_eps(),
            wall_s: 0.0,
            iters: 0,
            optimal: false,
            error: None,
        };
        let outcome = (inst.build)().and_then(|sys| {
            let n = sys.network.n_nodes();
            let constraint = cfg.constraint.clone().unwrap_or_else(ConstraintFile::at_least_one_each).compile(n)?;
            run_select(&sys.network, &constraint, method, &sel)
        });
        match outcome {
            Ok(s) => {
                let r = s.result;
                row.status = match r.status {
                    Outcome::Feasible => "feasible",
                    Outcome::Infeasible => "infeasible",
                    Outcome::Inconclusive => "inconclusive",
                }
                .into();
                row.h = r.h;
                row.max_re_eig = r.max_re_eig;
                row.wall_s = r.wall_s;
                row.iters = r.iterations;
                row.optimal = r.optimal;
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        row
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| AppError::Input(format!("worker pool: {e}")))?;
    let rows: Vec<BenchRow> = pool.install(|| cells.par_iter().map(run_cell).collect());
    Ok(SuiteReport { groups: summarize(&rows), rows })
}

fn summarize(rows: &[BenchRow]) -> Vec<GroupSummary> {
    let mut groups: Vec<GroupSummary> = Vec::new();
    for r in rows {
        let g = match groups.iter_mut().find(|g| g.system == r.system && g.method == r.method) {
            Some(g) => g,
            None => {
                groups.push(GroupSummary {
                    system: r.system.clone(),
                    method: r.method,
                    runs: 0,
                    failures: 0,
                    mean_h: None,
                    mean_wall_s: 0.0,
                    h_histogram: BTreeMap::new(),
                });
                groups.last_mut().expect("just pushed")
            }
        };
        g.runs += 1;
        g.mean_wall_s += r.wall_s;
        match (r.status.as_str(), r.h) {
            ("feasible", Some(h)) => *g.h_histogram.entry(h).or_default() += 1,
            _ => g.failures += 1,
        }
    }
    for g in &mut groups {
        g.mean_wall_s /= g.runs as f64;
        let ok: usize = g.h_histogram.values().sum();
        if ok > 0 {
            let total: usize = g.h_histogram.iter().map(|(h, c)| h * c).sum();
            g.mean_h = Some(total as f64 / ok as f64);
        }
    }
    groups
}

/// CSV with the columns of [`CSV_COLUMNS`]; missing values are empty.
pub fn rows_to_csv(rows: &[BenchRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.method.tag().to_string(),
            r.seed.to_string(),
            r.h.map(|h| h.to_string()).unwrap_or_default(),
            r.max_re_eig.map(format_f64).unwrap_or_default(),
            format_f64(r.eps),
            format_f64(r.wall_s),
            r.iters.to_string(),
            r.optimal.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| AppError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of UTF-8 fields"))
}
