use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::Selection;
use crate::error::{Error, Result};

const MEMBERSHIP_TOL: f64 = 1e-9;

/// Linear logistic constraint `Phi [pi; gamma] <= phi` with activation-count
/// bounds `wmin <= H(S) <= wmax`.
///
/// The count bounds are always present as rows of `Phi`, so membership is
/// decided by the rows alone.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticConstraint {
    n: usize,
    phi_mat: DMatrix<f64>,
    phi: DVector<f64>,
    wmin: usize,
    wmax: usize,
}

impl LogisticConstraint {
    /// Raw constructor. Count-bound rows for `wmin`/`wmax` are appended when
    /// they are not vacuous.
    pub fn new(n: usize, phi_mat: DMatrix<f64>, phi: DVector<f64>, wmin: usize, wmax: usize) -> Result<Self> {
        if phi_mat.ncols() != 2 * n {
            return Err(Error::Dimension(format!("Phi has {} columns, expected 2N = {}", phi_mat.ncols(), 2 * n)));
        }
        if phi_mat.nrows() != phi.len() {
            return Err(Error::Dimension(format!("Phi has {} rows but phi has {}", phi_mat.nrows(), phi.len())));
        }
        if !phi_mat.iter().chain(phi.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("logistic constraint"));
        }
        if wmin > wmax || wmax > 2 * n {
            return Err(Error::InvalidInput(format!("need 0 <= wmin <= wmax <= 2N, got [{wmin}, {wmax}] with N = {n}")));
        }
        let mut rows: Vec<(Vec<f64>, f64)> =
            (0..phi_mat.nrows()).map(|i| (phi_mat.row(i).iter().copied().collect(), phi[i])).collect();
        if wmin > 0 {
            rows.push((alloc::vec![-1.0; 2 * n], -(wmin as f64)));
        }
        if wmax < 2 * n {
            rows.push((alloc::vec![1.0; 2 * n], wmax as f64));
        }
        Ok(Self::from_rows(n, &rows, wmin, wmax))
    }

    fn from_rows(n: usize, rows: &[(Vec<f64>, f64)], wmin: usize, wmax: usize) -> Self {
        let mut phi_mat = DMatrix::zeros(rows.len(), 2 * n);
        let mut phi = DVector::zeros(rows.len());
        for (i, (r, b)) in rows.iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                phi_mat[(i, j)] = *v;
            }
            phi[i] = *b;
        }
        Self { n, phi_mat, phi, wmin, wmax }
    }

    /// No logistic restriction: every one of the `2^{2N}` strings is a member.
    pub fn unconstrained(n: usize) -> Self {
        Self { n, phi_mat: DMatrix::zeros(0, 2 * n), phi: DVector::zeros(0), wmin: 0, wmax: 2 * n }
    }

    /// At least one actuator and at least one sensor.
    pub fn at_least_one_each(n: usize) -> Self {
        StructuredConstraint { min_actuators: Some(1), min_sensors: Some(1), ..Default::default() }
            .compile(n)
            .expect("one actuator and one sensor is always admissible for N >= 1")
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn phi_matrix(&self) -> &DMatrix<f64> {
        &self.phi_mat
    }
    pub fn phi(&self) -> &DVector<f64> {
        &self.phi
    }
    pub fn n_rows(&self) -> usize {
        self.phi.len()
    }
    pub fn wmin(&self) -> usize {
        self.wmin
    }
    pub fn wmax(&self) -> usize {
        self.wmax
    }

    /// `Phi [pi; gamma] <= phi` elementwise.
    pub fn membership(&self, s: &Selection) -> bool {
        if s.n() != self.n {
            return false;
        }
        (0..self.phi.len()).all(|i| {
            let lhs: f64 = (0..2 * self.n).filter(|&p| s.bit(p)).map(|p| self.phi_mat[(i, p)]).sum();
            lhs <= self.phi[i] + MEMBERSHIP_TOL
        })
    }
}

/// Count bounds and forced bits, compiled to rows of `Phi`.
///
/// Node indices in the forced lists are 0-based.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StructuredConstraint {
    pub min_sensors: Option<usize>,
    pub max_sensors: Option<usize>,
    pub min_actuators: Option<usize>,
    pub max_actuators: Option<usize>,
    pub min_total: Option<usize>,
    pub max_total: Option<usize>,
    pub forced_on_actuators: Vec<usize>,
    pub forced_on_sensors: Vec<usize>,
    pub forced_off_actuators: Vec<usize>,
    pub forced_off_sensors: Vec<usize>,
}

impl StructuredConstraint {
    /// Compiles to `(Phi, phi)` and derives `wmin`, `wmax`.
    pub fn compile(&self, n: usize) -> Result<LogisticConstraint> {
        self.compile_with_raw(n, &[])
    }

    /// Like [`Self::compile`], appending extra raw rows `(coefficients, rhs)`.
    /// The derived count bounds ignore the raw rows, so they stay valid but
    /// may be loose.
    pub fn compile_with_raw(&self, n: usize, raw: &[(Vec<f64>, f64)]) -> Result<LogisticConstraint> {
        for (list, what) in [
            (&self.forced_on_actuators, "forced-on actuator"),
            (&self.forced_on_sensors, "forced-on sensor"),
            (&self.forced_off_actuators, "forced-off actuator"),
            (&self.forced_off_sensors, "forced-off sensor"),
        ] {
            if let Some(&k) = list.iter().find(|&&k| k >= n) {
                return Err(Error::InvalidInput(format!("{what} node {k} out of range for N = {n}")));
            }
        }
        if let Some(k) = self.forced_on_actuators.iter().find(|k| self.forced_off_actuators.contains(k)) {
            return Err(Error::InvalidInput(format!("actuator {k} is forced both on and off")));
        }
        if let Some(k) = self.forced_on_sensors.iter().find(|k| self.forced_off_sensors.contains(k)) {
            return Err(Error::InvalidInput(format!("sensor {k} is forced both on and off")));
        }
        for (r, b) in raw {
            if r.len() != 2 * n {
                return Err(Error::Dimension(format!("raw row has {} coefficients, expected {}", r.len(), 2 * n)));
            }
            if !r.iter().all(|v| v.is_finite()) || !b.is_finite() {
                return Err(Error::NonFinite("raw logistic row"));
            }
        }

        let distinct = |v: &[usize]| {
            let mut v = v.to_vec();
            v.sort_unstable();
            v.dedup();
            v.len()
        };
        let a_lo = self.min_actuators.unwrap_or(0).max(distinct(&self.forced_on_actuators));
        let a_hi = self.max_actuators.unwrap_or(n).min(n - distinct(&self.forced_off_actuators));
        let s_lo = self.min_sensors.unwrap_or(0).max(distinct(&self.forced_on_sensors));
        let s_hi = self.max_sensors.unwrap_or(n).min(n - distinct(&self.forced_off_sensors));
        let wmin = self.min_total.unwrap_or(0).max(a_lo + s_lo);
        let wmax = self.max_total.unwrap_or(2 * n).min(a_hi + s_hi);
        if a_lo > a_hi || s_lo > s_hi || wmin > wmax {
            return Err(Error::InvalidInput("logistic constraint admits no selection".into()));
        }

        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        let range_row = |lo: usize, hi: usize, sign: f64, b: f64| {
            let mut r = alloc::vec![0.0; 2 * n];
            for v in &mut r[lo..hi] {
                *v = sign;
            }
            (r, b)
        };
        if let Some(v) = self.min_actuators {
            rows.push(range_row(0, n, -1.0, -(v as f64)));
        }
        if let Some(v) = self.max_actuators {
            rows.push(range_row(0, n, 1.0, v as f64));
        }
        if let Some(v) = self.min_sensors {
            rows.push(range_row(n, 2 * n, -1.0, -(v as f64)));
        }
        if let Some(v) = self.max_sensors {
            rows.push(range_row(n, 2 * n, 1.0, v as f64));
        }
        if let Some(v) = self.min_total {
            rows.push(range_row(0, 2 * n, -1.0, -(v as f64)));
        }
        if let Some(v) = self.max_total {
            rows.push(range_row(0, 2 * n, 1.0, v as f64));
        }
        let unit = |pos: usize, sign: f64, b: f64| {
            let mut r = alloc::vec![0.0; 2 * n];
            r[pos] = sign;
            (r, b)
        };
        rows.extend(self.forced_on_actuators.iter().map(|&k| unit(k, -1.0, -1.0)));
        rows.extend(self.forced_on_sensors.iter().map(|&k| unit(n + k, -1.0, -1.0)));
        rows.extend(self.forced_off_actuators.iter().map(|&k| unit(k, 1.0, 0.0)));
        rows.extend(self.forced_off_sensors.iter().map(|&k| unit(n + k, 1.0, 0.0)));
        rows.extend(raw.iter().cloned());
        // derived bounds tighter than the declared ones still need their rows
        if wmin > self.min_total.unwrap_or(0) {
            rows.push(range_row(0, 2 * n, -1.0, -(wmin as f64)));
        }
        if wmax < self.max_total.unwrap_or(2 * n) {
            rows.push(range_row(0, 2 * n, 1.0, wmax as f64));
        }
        Ok(LogisticConstraint::from_rows(n, &rows, wmin, wmax))
    }
}
