//! Runs one selection method end to end and packages a [`RunResult`].

use std::time::Instant;

use serde_json::{json, Value};

use sensact_core::combsearch::{bsa, build_candidate_set, CandidateSet};
use sensact_core::heuristic::{heu, HeuristicOptions, Termination};
use sensact_core::misdp::{solve_bnb_escalating, BigMParams, BnbOptions, NodeOutcome, DEFAULT_L1, DEFAULT_L2, DEFAULT_L3};
use sensact_core::netmodel::{build_selection_matrices, closed_loop_abscissa, DynNetwork, LogisticConstraint, Selection};
use sensact_core::sof::{LmiOracle, SofCertificate, SofOptions, SofVerdict};

use crate::result::{CertificateFile, Method, Outcome, RunResult};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct MisdpConfig {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub max_nodes: usize,
}

impl Default for MisdpConfig {
    fn default() -> Self {
        Self { l1: DEFAULT_L1, l2: DEFAULT_L2, l3: DEFAULT_L3, max_nodes: BnbOptions::default().max_nodes }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SelectConfig {
    pub sof: SofOptions,
    pub heu: HeuristicOptions,
    pub misdp: MisdpConfig,
    /// Precomputed candidate set for BSA; built on the fly when absent.
    pub candidates: Option<CandidateSet>,
}

impl SelectConfig {
    fn echo(&self, method: Method) -> Value {
        let mut v = json!({ "eps": self.sof.eps, "delta": self.sof.delta });
        match method {
            Method::Bsa => {
                v["candidate_db"] = self.candidates.is_some().into();
            }
            Method::Heu => {
                let h = &self.heu;
                v["max_iter"] = h.max_iter.into();
                v["max_infeasibility"] = h.max_infeasibility.into();
                v["max_random"] = h.max_random.into();
                v["seed"] = h.seed.into();
                v["wmin"] = json!(h.wmin);
                v["wmax"] = json!(h.wmax);
            }
            Method::Misdp => {
                let m = &self.misdp;
                v["L1"] = m.l1.into();
                v["L2"] = m.l2.into();
                v["L3"] = m.l3.into();
                v["max_nodes"] = m.max_nodes.into();
            }
        }
        v
    }
}

/// A finished run plus its per-step solver log (one JSON object per line).
#[derive(Debug, Clone)]
pub struct Selected {
    pub result: RunResult,
    pub log: Vec<Value>,
}

struct Raw {
    best: Option<Selection>,
    certificate: Option<SofCertificate>,
    iterations: usize,
    optimal: bool,
    inconclusive: usize,
    stats: Value,
    log: Vec<Value>,
}

pub fn run_select(net: &DynNetwork, constraint: &LogisticConstraint, method: Method, cfg: &SelectConfig) -> Result<Selected> {
    let start = Instant::now();
    let mut oracle = LmiOracle::new(net, cfg.sof.clone());
    let raw = match method {
        Method::Bsa => run_bsa(&mut oracle, constraint, cfg)?,
        Method::Heu => run_heu(&mut oracle, constraint, cfg)?,
        Method::Misdp => run_misdp(&mut oracle, net, constraint, cfg)?,
    };
    let mut note = None;
    let mut inconclusive = raw.inconclusive;
    let mut certificate = raw.certificate;
    // methods that never improved on the all-ones start hold no certificate
    if let (Some(s), None) = (raw.best, &certificate) {
        if constraint.membership(&s) {
            match sensact_core::sof::SelectionOracle::check(&mut oracle, &s)? {
                SofVerdict::Feasible(c) => certificate = Some(c),
                SofVerdict::Inconclusive(why) => {
                    inconclusive += 1;
                    note = Some(format!("final check of {s} inconclusive: {why}"));
                }
                SofVerdict::Infeasible => note = Some(format!("no feasible selection found; {s} is infeasible")),
            }
        } else {
            note = Some("no feasible selection found".into());
        }
    }
    let wall_s = start.elapsed().as_secs_f64();

    let mut result = RunResult {
        method,
        status: Outcome::Infeasible,
        pi: None,
        gamma: None,
        h: None,
        max_re_eig: None,
        eps: cfg.sof.effective_eps(),
        wall_s,
        iterations: raw.iterations,
        lmi_solves: oracle.solves,
        optimal: false,
        seeds: if method == Method::Heu { vec![cfg.heu.seed] } else { Vec::new() },
        config: cfg.echo(method),
        stats: raw.stats,
        certificate: None,
        note,
    };
    match (raw.best, certificate) {
        (Some(s), Some(cert)) => {
            let max_re = closed_loop_max_re(net, &s, &cert)?;
            result.pi = Some(s.pi_string());
            result.gamma = Some(s.gamma_string());
            result.h = Some(s.count_active());
            result.max_re_eig = Some(max_re);
            result.certificate = Some(CertificateFile::new(net, &s, &cert, cfg.sof.delta));
            if max_re < 0.0 {
                result.status = Outcome::Feasible;
                result.optimal = raw.optimal && inconclusive == 0;
            } else {
                result.status = Outcome::Inconclusive;
                result.note = Some(format!("certificate gain leaves closed-loop eigenvalue at {max_re:.3e}"));
            }
        }
        _ => {
            if inconclusive > 0 {
                result.status = Outcome::Inconclusive;
            }
        }
    }
    Ok(Selected { result, log: raw.log })
}

/// `max Re eig(A + B Pi F Gamma C)` with `F` embedded from the certificate.
pub fn closed_loop_max_re(net: &DynNetwork, s: &Selection, cert: &SofCertificate) -> Result<f64> {
    let (pi, gamma) = build_selection_matrices(s, net)?;
    let f = net.embed_gain(s, &cert.f)?;
    Ok(closed_loop_abscissa(net, &pi, &gamma, &f)?)
}

fn run_bsa(oracle: &mut LmiOracle, constraint: &LogisticConstraint, cfg: &SelectConfig) -> Result<Raw> {
    let built;
    let set = match &cfg.candidates {
        Some(s) => s,
        None => {
            built = build_candidate_set(constraint)?;
            &built
        }
    };
    if set.is_empty() {
        return Ok(Raw {
            best: None,
            certificate: None,
            iterations: 0,
            optimal: false,
            inconclusive: 0,
            stats: json!({ "candidates": 0 }),
            log: Vec::new(),
        });
    }
    let r = bsa(oracle, set, false)?;
    let log = r
        .steps
        .iter()
        .map(|st| {
            json!({
                "sigma": st.sigma,
                "q": st.q,
                "pi": st.candidate.pi_string(),
                "gamma": st.candidate.gamma_string(),
                "status": format!("{:?}", st.status),
            })
        })
        .collect();
    Ok(Raw {
        best: Some(r.best),
        certificate: r.certificate,
        iterations: r.iterations,
        optimal: r.improved,
        inconclusive: r.inconclusive,
        stats: json!({ "candidates": set.len(), "iterations": r.iterations, "inconclusive": r.inconclusive }),
        log,
    })
}

fn run_heu(oracle: &mut LmiOracle, constraint: &LogisticConstraint, cfg: &SelectConfig) -> Result<Raw> {
    let r = heu(oracle, constraint, &cfg.heu)?;
    let st = &r.stats;
    let log = st.improvements.iter().map(|&(it, h)| json!({ "iteration": it, "H": h })).collect();
    Ok(Raw {
        best: Some(r.best),
        certificate: r.certificate,
        iterations: st.solves,
        optimal: false,
        inconclusive: st.inconclusive,
        stats: json!({
            "solves": st.solves,
            "infeasible": st.infeasible,
            "inconclusive": st.inconclusive,
            "rejected_draws": st.rejected_draws,
            "exhausted": st.exhausted,
            "wmin": st.wmin,
            "wmax": st.wmax,
            "q": st.q,
            "termination": match st.termination {
                Termination::MaxIter => "max_iter",
                Termination::WindowExhausted => "window_exhausted",
            },
            "H": r.best.count_active(),
        }),
        log,
    })
}

fn run_misdp(oracle: &mut LmiOracle, net: &DynNetwork, constraint: &LogisticConstraint, cfg: &SelectConfig) -> Result<Raw> {
    let m = &cfg.misdp;
    let params = BigMParams { l1: m.l1, l2: m.l2, l3: m.l3, sof: cfg.sof.clone() };
    let opts = BnbOptions { max_nodes: m.max_nodes, ..Default::default() };
    let (r, escalations) = solve_bnb_escalating(net, constraint, &params, &opts, oracle, None)?;
    let log = r
        .log
        .iter()
        .map(|n| {
            json!({
                "node": n.id,
                "depth": n.depth,
                "bound": n.bound,
                "status": match n.outcome {
                    NodeOutcome::Pruned => "pruned",
                    NodeOutcome::Infeasible => "infeasible",
                    NodeOutcome::Inconclusive => "inconclusive",
                    NodeOutcome::Integral => "integral",
                    NodeOutcome::Spurious => "spurious",
                    NodeOutcome::Branched => "branched",
                },
                "incumbent": n.incumbent,
                "branch_var": n.branch_var,
            })
        })
        .collect();
    Ok(Raw {
        best: r.best,
        certificate: r.certificate.clone(),
        iterations: r.nodes,
        optimal: r.optimal,
        inconclusive: r.inconclusive,
        stats: json!({
            "nodes": r.nodes,
            "root_bound": r.root_bound,
            "spurious": r.spurious,
            "inconclusive": r.inconclusive,
            "lmi_checks": r.lmi_checks,
            "escalations": escalations,
            "L": [r.l.0, r.l.1, r.l.2],
            "tree_exhausted": r.optimal,
        }),
        log,
    })
}
