//! System file: `{"N", "node_dims", "A", "B", "C", "meta"}` with row-major
//! dense matrices.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use sensact_core::netmodel::{
    gen_mass_spring, gen_random_network, mass_spring_default_perturbation, DynNetwork, NodeDims, RandomNetworkParams,
};

use crate::io::{read_to_string, to_json, write_new};
use crate::{AppError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DimsRaw {
    nx: usize,
    nu: usize,
    ny: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemRaw {
    #[serde(rename = "N")]
    n: usize,
    node_dims: Vec<DimsRaw>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    #[serde(default)]
    meta: Map<String, Value>,
}

/// A validated network plus free-form metadata (generator and parameters).
#[derive(Debug, Clone, PartialEq)]
pub struct SystemFile {
    pub network: DynNetwork,
    pub meta: Map<String, Value>,
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Dense matrix from rows; `cols` fixes the width when there are no rows.
pub fn rows_to_matrix(name: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    if rows.len() != nrows {
        return Err(AppError::Input(format!("{name} has {} rows, expected {nrows}", rows.len())));
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(AppError::Input(format!("{name} row {i} has {} entries, expected {ncols}", r.len())));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl SystemFile {
    pub fn new(network: DynNetwork) -> Self {
        Self { network, meta: Map::new() }
    }

    pub fn to_json(&self) -> Result<String> {
        let net = &self.network;
        let raw = SystemRaw {
            n: net.n_nodes(),
            node_dims: net.node_dims().iter().map(|d| DimsRaw { nx: d.nx, nu: d.nu, ny: d.ny }).collect(),
            a: matrix_to_rows(net.a()),
            b: matrix_to_rows(net.b()),
            c: matrix_to_rows(net.c()),
            meta: self.meta.clone(),
        };
        to_json(&raw)
    }

    /// Parses and validates every network invariant.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: SystemRaw = serde_json::from_str(text)?;
        if raw.node_dims.len() != raw.n {
            return Err(AppError::Input(format!("N = {} but node_dims lists {} nodes", raw.n, raw.node_dims.len())));
        }
        let nx: usize = raw.node_dims.iter().map(|d| d.nx).sum();
        let nu: usize = raw.node_dims.iter().map(|d| d.nu).sum();
        let ny: usize = raw.node_dims.iter().map(|d| d.ny).sum();
        let a = rows_to_matrix("A", &raw.a, nx, nx)?;
        let b = rows_to_matrix("B", &raw.b, nx, nu)?;
        let c = rows_to_matrix("C", &raw.c, ny, nx)?;
        let dims = raw.node_dims.iter().map(|d| NodeDims::new(d.nx, d.nu, d.ny)).collect();
        Ok(Self { network: DynNetwork::new(dims, a, b, c)?, meta: raw.meta })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&read_to_string(path)?).map_err(|e| match e {
            AppError::Json(j) => AppError::Input(format!("{}: {j}", path.display())),
            AppError::Input(s) => AppError::Input(format!("{}: {s}", path.display())),
            other => other,
        })
    }

    pub fn write(&self, path: &Path, force: bool) -> Result<()> {
        write_new(path, self.to_json()?.as_bytes(), force)
    }
}

/// Seeded random network with its parameters recorded in `meta`.
pub fn generate_random(p: &RandomNetworkParams) -> Result<SystemFile> {
    let mut meta = Map::new();
    meta.insert("generator".into(), "random".into());
    meta.insert("nodes".into(), p.nodes.into());
    meta.insert("states_per_node".into(), p.states_per_node.into());
    meta.insert("coupling_decay".into(), p.coupling_decay.into());
    meta.insert("instability_shift".into(), p.instability_shift.into());
    meta.insert("passive_margin".into(), p.passive_margin.into());
    meta.insert("seed".into(), p.seed.into());
    Ok(SystemFile { network: gen_random_network(p)?, meta })
}

/// Mass-spring chain; the perturbation defaults to the value that puts the
/// largest real eigenvalue near `0.1`.
pub fn generate_mass_spring(masses: usize, perturbation: Option<f64>) -> Result<SystemFile> {
    if masses < 2 {
        return Err(AppError::Input("mass-spring chain needs at least 2 masses".into()));
    }
    let delta = perturbation.unwrap_or_else(|| mass_spring_default_perturbation(masses));
    let mut meta = Map::new();
    meta.insert("generator".into(), "mass-spring".into());
    meta.insert("masses".into(), masses.into());
    meta.insert("stiffness_perturbation".into(), delta.into());
    Ok(SystemFile { network: gen_mass_spring(masses, delta)?, meta })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let sys = generate_random(&RandomNetworkParams { nodes: 3, seed: 5, ..Default::default() }).unwrap();
        let text = sys.to_json().unwrap();
        let back = SystemFile::from_json(&text).unwrap();
        assert_eq!(back, sys);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn rejects_ragged_and_mismatched_input() {
        let sys = generate_mass_spring(2, None).unwrap();
        let mut v: Value = serde_json::from_str(&sys.to_json().unwrap()).unwrap();
        v["A"][1] = serde_json::json!([1.0]);
        assert!(matches!(SystemFile::from_json(&v.to_string()), Err(AppError::Input(_))));

        let mut v: Value = serde_json::from_str(&sys.to_json().unwrap()).unwrap();
        v["N"] = 3.into();
        assert!(matches!(SystemFile::from_json(&v.to_string()), Err(AppError::Input(_))));

        let mut v: Value = serde_json::from_str(&sys.to_json().unwrap()).unwrap();
        v["B"][0][1] = 1.0.into();
        assert!(matches!(SystemFile::from_json(&v.to_string()), Err(AppError::Core(_))));

        let mut v: Value = serde_json::from_str(&sys.to_json().unwrap()).unwrap();
        v["extra"] = 1.into();
        assert!(SystemFile::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn generator_dims() {
        let sys = generate_random(&RandomNetworkParams { nodes: 10, states_per_node: 2, seed: 7, ..Default::default() })
            .unwrap();
        let n = &sys.network;
        assert_eq!((n.nx(), n.nu(), n.ny()), (20, 10, 20));
        let ms = generate_mass_spring(10, None).unwrap();
        assert_eq!(ms.network.nx(), 20);
    }
}
