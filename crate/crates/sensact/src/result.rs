//! Result file written by `select`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use sensact_core::netmodel::{DynNetwork, Selection};
use sensact_core::sof::SofCertificate;

use crate::io::{read_to_string, to_json, write_new};
use crate::system::{matrix_to_rows, rows_to_matrix};
use crate::{AppError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bsa,
    Heu,
    Misdp,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Bsa, Method::Heu, Method::Misdp];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Bsa => "bsa",
            Method::Heu => "heu",
            Method::Misdp => "misdp",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    /// A verified stabilizing selection was produced.
    Feasible,
    Infeasible,
    Inconclusive,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Feasible => crate::EXIT_OK,
            Outcome::Infeasible => crate::EXIT_INFEASIBLE,
            Outcome::Inconclusive => crate::EXIT_INCONCLUSIVE,
        }
    }
}

/// LMI certificate with the index lists of the active inputs and outputs, so
/// that the gain can be embedded without re-deriving the selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateFile {
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    #[serde(rename = "M")]
    pub m: Vec<Vec<f64>>,
    #[serde(rename = "N")]
    pub nvar: Vec<Vec<f64>>,
    /// Gain on the active channels (`|inputs| x |outputs|`).
    #[serde(rename = "F")]
    pub f: Vec<Vec<f64>>,
    pub eps: f64,
    pub delta: f64,
    pub inputs: Vec<usize>,
    pub outputs: Vec<usize>,
}

impl CertificateFile {
    pub fn new(net: &DynNetwork, s: &Selection, cert: &SofCertificate, delta: f64) -> Self {
        Self {
            p: matrix_to_rows(&cert.p),
            m: matrix_to_rows(&cert.m),
            nvar: matrix_to_rows(&cert.nvar),
            f: matrix_to_rows(&cert.f),
            eps: cert.eps,
            delta,
            inputs: net.active_inputs(s),
            outputs: net.active_outputs(s),
        }
    }

    /// Rebuilds the in-memory certificate; shapes follow the index lists.
    pub fn to_certificate(&self, nx: usize) -> Result<SofCertificate> {
        let (m, r) = (self.inputs.len(), self.outputs.len());
        Ok(SofCertificate {
            p: rows_to_matrix("P", &self.p, nx, nx)?,
            m: rows_to_matrix("M", &self.m, m, m)?,
            nvar: rows_to_matrix("N", &self.nvar, m, r)?,
            f: rows_to_matrix("F", &self.f, m, r)?,
            eps: self.eps,
            m_dim: m,
            r_dim: r,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunResult {
    pub method: Method,
    pub status: Outcome,
    /// Actuator bits `pi_1..pi_N` as a 0/1 string.
    pub pi: Option<String>,
    /// Sensor bits `gamma_1..gamma_N` as a 0/1 string.
    pub gamma: Option<String>,
    #[serde(rename = "H")]
    pub h: Option<usize>,
    /// Largest real part of the closed-loop spectrum.
    #[serde(rename = "maxReEig")]
    pub max_re_eig: Option<f64>,
    pub eps: f64,
    pub wall_s: f64,
    /// BSA and heuristic: iterations; MI-SDP: branch-and-bound nodes.
    pub iterations: usize,
    pub lmi_solves: usize,
    pub optimal: bool,
    pub seeds: Vec<u64>,
    pub config: Value,
    pub stats: Value,
    pub certificate: Option<CertificateFile>,
    pub note: Option<String>,
}

impl RunResult {
    pub fn selection(&self) -> Result<Option<Selection>> {
        match (&self.pi, &self.gamma) {
            (Some(p), Some(g)) => Ok(Some(Selection::from_strings(p, g)?)),
            (None, None) => Ok(None),
            _ => Err(AppError::Input("result has only one of pi and gamma".into())),
        }
    }

    /// Selection strings parse and `H` equals their popcount.
    pub fn validate(&self) -> Result<()> {
        let s = self.selection()?;
        match (s, self.h) {
            (Some(s), Some(h)) if s.count_active() != h => {
                Err(AppError::Input(format!("H = {h} but the selection has {} active bits", s.count_active())))
            }
            (Some(_), None) | (None, Some(_)) => Err(AppError::Input("H and the selection must appear together".into())),
            _ => Ok(()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        to_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        r.validate()?;
        Ok(r)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&read_to_string(path)?).map_err(|e| AppError::Input(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path, force: bool) -> Result<()> {
        write_new(path, self.to_json()?.as_bytes(), force)
    }
}
