//! Constraint file: structured count bounds and forced nodes (0-based), plus
//! optional raw rows `Phi [pi; gamma] <= phi`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sensact_core::netmodel::{LogisticConstraint, StructuredConstraint};

use crate::io::{read_to_string, to_json, write_new};
use crate::{AppError, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeLists {
    #[serde(default)]
    pub actuators: Vec<usize>,
    #[serde(default)]
    pub sensors: Vec<usize>,
}

impl NodeLists {
    fn is_empty(&self) -> bool {
        self.actuators.is_empty() && self.sensors.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRows {
    #[serde(rename = "Phi")]
    pub phi_mat: Vec<Vec<f64>>,
    pub phi: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintFile {
    /// Checked against the system when present.
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_sensors: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_sensors: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_actuators: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_actuators: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_total: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_total: Option<usize>,
    #[serde(default, skip_serializing_if = "NodeLists::is_empty")]
    pub forced_on: NodeLists,
    #[serde(default, skip_serializing_if = "NodeLists::is_empty")]
    pub forced_off: NodeLists,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<RawRows>,
}

impl ConstraintFile {
    /// At least one actuator and one sensor, the default when no file is given.
    pub fn at_least_one_each() -> Self {
        Self { min_sensors: Some(1), min_actuators: Some(1), ..Default::default() }
    }

    pub fn compile(&self, n: usize) -> Result<LogisticConstraint> {
        if let Some(fn_) = self.n {
            if fn_ != n {
                return Err(AppError::Input(format!("constraint is for N = {fn_}, system has N = {n}")));
            }
        }
        let sc = StructuredConstraint {
            min_sensors: self.min_sensors,
            max_sensors: self.max_sensors,
            min_actuators: self.min_actuators,
            max_actuators: self.max_actuators,
            min_total: self.min_total,
            max_total: self.max_total,
            forced_on_actuators: self.forced_on.actuators.clone(),
            forced_on_sensors: self.forced_on.sensors.clone(),
            forced_off_actuators: self.forced_off.actuators.clone(),
            forced_off_sensors: self.forced_off.sensors.clone(),
        };
        let raw: Vec<(Vec<f64>, f64)> = match &self.raw {
            None => Vec::new(),
            Some(r) => {
                if r.phi_mat.len() != r.phi.len() {
                    return Err(AppError::Input(format!(
                        "raw Phi has {} rows but phi has {}",
                        r.phi_mat.len(),
                        r.phi.len()
                    )));
                }
                r.phi_mat.iter().cloned().zip(r.phi.iter().copied()).collect()
            }
        };
        Ok(sc.compile_with_raw(n, &raw)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        to_json(self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&read_to_string(path)?).map_err(|e| AppError::Input(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path, force: bool) -> Result<()> {
        write_new(path, self.to_json()?.as_bytes(), force)
    }
}

/// SHA-256 over `N`, the count bounds and the rows of `(Phi, phi)` in
/// little-endian IEEE form, hex encoded.
pub fn constraint_hash(c: &LogisticConstraint) -> String {
    let mut h = Sha256::new();
    h.update((c.n() as u64).to_le_bytes());
    h.update((c.wmin() as u64).to_le_bytes());
    h.update((c.wmax() as u64).to_le_bytes());
    h.update((c.n_rows() as u64).to_le_bytes());
    let m = c.phi_matrix();
    for i in 0..c.n_rows() {
        for j in 0..m.ncols() {
            h.update(m[(i, j)].to_le_bytes());
        }
        h.update(c.phi()[i].to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use sensact_core::netmodel::Selection;

    #[test]
    fn default_file_matches_core_default() {
        let c = ConstraintFile::at_least_one_each().compile(4).unwrap();
        let d = LogisticConstraint::at_least_one_each(4);
        for m in 0u128..256 {
            let s = Selection::from_mask(4, m).unwrap();
            assert_eq!(c.membership(&s), d.membership(&s));
        }
        assert_eq!(constraint_hash(&c), constraint_hash(&d));
    }

    #[test]
    fn forced_and_raw_rows() {
        let text = r#"{"N": 2, "forced_on": {"actuators": [1]}, "forced_off": {"sensors": [0]},
            "raw": {"Phi": [[1, 1, 1, 1]], "phi": [2]}}"#;
        let f = ConstraintFile::from_json(text).unwrap();
        let c = f.compile(2).unwrap();
        // bits: pi_1 pi_2 gamma_1 gamma_2
        assert!(c.membership(&Selection::from_tuple(&[0, 1, 0, 1]).unwrap()));
        assert!(!c.membership(&Selection::from_tuple(&[1, 0, 0, 1]).unwrap()));
        assert!(!c.membership(&Selection::from_tuple(&[0, 1, 1, 0]).unwrap()));
        assert!(!c.membership(&Selection::from_tuple(&[1, 1, 0, 1]).unwrap()));
        let back = ConstraintFile::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(back, f);
        assert!(f.compile(3).is_err());
    }

    #[test]
    fn hash_tracks_the_rows() {
        let a = ConstraintFile::at_least_one_each().compile(3).unwrap();
        let b = ConstraintFile { max_total: Some(4), ..ConstraintFile::at_least_one_each() }.compile(3).unwrap();
        assert_ne!(constraint_hash(&a), constraint_hash(&b));
        assert_eq!(constraint_hash(&a).len(), 64);
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(ConstraintFile::from_json(r#"{"min_sensor": 1}"#).is_err());
    }
}
