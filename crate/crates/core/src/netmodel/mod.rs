//! Dynamic-network data types, activation selections, logistic constraints
//! and the seeded system generators.
//!
//! A network is an LTI triple `(A, B, C)` whose states, inputs and outputs
//! are partitioned by node. `B` and `C` are block diagonal with respect to
//! that partition, so switching a node's actuator (or sensor) off removes a
//! contiguous block of columns of `B` (rows of `C`).

mod generate;
mod logistic;
mod selection;

pub use generate::{
    gen_mass_spring, gen_random_network, mass_spring_default_perturbation, mass_spring_transform, RandomNetworkParams,
    DEFAULT_COUPLING_DECAY, DEFAULT_INSTABILITY_SHIFT, DEFAULT_PASSIVE_MARGIN,
};
pub use logistic::{LogisticConstraint, StructuredConstraint};
pub use selection::{build_selection_matrices, count_active, reduced_matrices, Selection, MAX_NODES};

use alloc::format;
use alloc::vec::Vec;
use core::ops::Range;

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};
use crate::linalg;

/// Per-node state, input and output dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeDims {
    pub nx: usize,
    pub nu: usize,
    pub ny: usize,
}

impl NodeDims {
    pub const fn new(nx: usize, nu: usize, ny: usize) -> Self {
        Self { nx, nu, ny }
    }
}

/// Block-structured LTI network `x' = A x + B u`, `y = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynNetwork {
    dims: Vec<NodeDims>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    x_off: Vec<usize>,
    u_off: Vec<usize>,
    y_off: Vec<usize>,
}

fn offsets(sizes: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut acc = 0;
    let mut out = Vec::new();
    out.push(0);
    for s in sizes {
        acc += s;
        out.push(acc);
    }
    out
}

impl DynNetwork {
    /// Builds a network and validates every structural invariant: positive
    /// node dimensions, conforming matrix sizes, finite entries, block
    /// diagonal `B`/`C`, and full rank `B` (columns) and `C` (rows).
    pub fn new(dims: Vec<NodeDims>, a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidInput("network needs at least one node".into()));
        }
        if dims.len() > MAX_NODES {
            return Err(Error::InvalidInput(format!("at most {MAX_NODES} nodes supported, got {}", dims.len())));
        }
        if let Some((i, d)) = dims.iter().enumerate().find(|(_, d)| d.nx == 0 || d.nu == 0 || d.ny == 0) {
            return Err(Error::InvalidInput(format!("node {i} has a zero dimension: {d:?}")));
        }
        let x_off = offsets(dims.iter().map(|d| d.nx));
        let u_off = offsets(dims.iter().map(|d| d.nu));
        let y_off = offsets(dims.iter().map(|d| d.ny));
        let (nx, nu, ny) = (x_off[dims.len()], u_off[dims.len()], y_off[dims.len()]);
        if a.shape() != (nx, nx) {
            return Err(Error::Dimension(format!("A is {:?}, expected {nx}x{nx}", a.shape())));
        }
        if b.shape() != (nx, nu) {
            return Err(Error::Dimension(format!("B is {:?}, expected {nx}x{nu}", b.shape())));
        }
        if c.shape() != (ny, nx) {
            return Err(Error::Dimension(format!("C is {:?}, expected {ny}x{nx}", c.shape())));
        }
        if !linalg::all_finite(&a) {
            return Err(Error::NonFinite("A"));
        }
        if !linalg::all_finite(&b) {
            return Err(Error::NonFinite("B"));
        }
        if !linalg::all_finite(&c) {
            return Err(Error::NonFinite("C"));
        }
        let net = Self { dims, a, b, c, x_off, u_off, y_off };
        net.check_block_diagonal()?;
        if linalg::rank(&net.b) < nu {
            return Err(Error::RankDeficient("B must have full column rank".into()));
        }
        if linalg::rank(&net.c) < ny {
            return Err(Error::RankDeficient("C must have full row rank".into()));
        }
        Ok(net)
    }

    fn check_block_diagonal(&self) -> Result<()> {
        for i in 0..self.n_nodes() {
            let xs = self.state_range(i);
            for j in 0..self.n_nodes() {
                if i == j {
                    continue;
                }
                for r in xs.clone() {
                    for col in self.input_range(j) {
                        if self.b[(r, col)] != 0.0 {
                            return Err(Error::InvalidInput(format!(
                                "B is not block diagonal: entry ({r}, {col}) couples node {i} state to node {j} input"
                            )));
                        }
                    }
                    for row in self.output_range(j) {
                        if self.c[(row, r)] != 0.0 {
                            return Err(Error::InvalidInput(format!(
                                "C is not block diagonal: entry ({row}, {r}) couples node {j} output to node {i} state"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        self.dims.len()
    }
    pub fn node_dims(&self) -> &[NodeDims] {
        &self.dims
    }
    pub fn nx(&self) -> usize {
        self.a.nrows()
    }
    pub fn nu(&self) -> usize {
        self.b.ncols()
    }
    pub fn ny(&self) -> usize {
        self.c.nrows()
    }
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn state_range(&self, node: usize) -> Range<usize> {
        self.x_off[node]..self.x_off[node + 1]
    }
    pub fn input_range(&self, node: usize) -> Range<usize> {
        self.u_off[node]..self.u_off[node + 1]
    }
    pub fn output_range(&self, node: usize) -> Range<usize> {
        self.y_off[node]..self.y_off[node + 1]
    }
    /// Node owning global input index `i`.
    pub fn input_node(&self, i: usize) -> usize {
        self.u_off.partition_point(|&o| o <= i) - 1
    }
    /// Node owning global output index `j`.
    pub fn output_node(&self, j: usize) -> usize {
        self.y_off.partition_point(|&o| o <= j) - 1
    }

    /// Global input indices of active actuators, in order.
    pub fn active_inputs(&self, s: &Selection) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&k| s.actuator(k)).flat_map(|k| self.input_range(k)).collect()
    }
    /// Global output indices of active sensors, in order.
    pub fn active_outputs(&self, s: &Selection) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&k| s.sensor(k)).flat_map(|k| self.output_range(k)).collect()
    }

    /// Zero-pads a gain for the reduced triple `(A, B_q, C_q)` to the full
    /// `n_u x n_y` shape, i.e. the matrix `Pi F Gamma` acting on the full network.
    pub fn embed_gain(&self, s: &Selection, f_reduced: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let rows = self.active_inputs(s);
        let cols = self.active_outputs(s);
        if f_reduced.shape() != (rows.len(), cols.len()) {
            return Err(Error::Dimension(format!(
                "reduced gain is {:?}, selection needs {}x{}",
                f_reduced.shape(),
                rows.len(),
                cols.len()
            )));
        }
        let mut f = DMatrix::zeros(self.nu(), self.ny());
        for (ri, &r) in rows.iter().enumerate() {
            for (ci, &c) in cols.iter().enumerate() {
                f[(r, c)] = f_reduced[(ri, ci)];
            }
        }
        Ok(f)
    }
}

/// Findings of the standing-assumption checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assumption1Report {
    pub stabilizable: bool,
    pub detectable: bool,
    pub fullrank_b: bool,
    pub fullrank_c: bool,
}

impl Assumption1Report {
    pub fn holds(&self) -> bool {
        self.stabilizable && self.detectable && self.fullrank_b && self.fullrank_c
    }
}

/// PBH rank tests at every eigenvalue of `A` with nonnegative real part, plus
/// rank checks on `B` and `C`.
pub fn check_assumption1(net: &DynNetwork) -> Result<Assumption1Report> {
    let n = net.nx();
    let eigs = linalg::eigenvalues(net.a())?;
    let a_c = linalg::to_complex(net.a());
    let b_c = linalg::to_complex(net.b());
    let c_c = linalg::to_complex(net.c());
    let mut stabilizable = true;
    let mut detectable = true;
    for lam in eigs.iter().filter(|z| z.re >= 0.0) {
        let shifted = DMatrix::<Complex<f64>>::identity(n, n) * *lam - &a_c;
        if stabilizable {
            let mut ctrb = DMatrix::zeros(n, n + net.nu());
            ctrb.columns_mut(0, n).copy_from(&shifted);
            ctrb.columns_mut(n, net.nu()).copy_from(&b_c);
            stabilizable = linalg::complex_rank(&ctrb) == n;
        }
        if detectable {
            let mut obsv = DMatrix::zeros(n + net.ny(), n);
            obsv.rows_mut(0, n).copy_from(&shifted);
            obsv.rows_mut(n, net.ny()).copy_from(&c_c);
            detectable = linalg::complex_rank(&obsv) == n;
        }
    }
    Ok(Assumption1Report {
        stabilizable,
        detectable,
        fullrank_b: linalg::rank(net.b()) == net.nu(),
        fullrank_c: linalg::rank(net.c()) == net.ny(),
    })
}

/// `A + B Pi F Gamma C` for full-size `Pi` (n_u x n_u), `Gamma` (n_y x n_y)
/// and `F` (n_u x n_y).
pub fn closed_loop_matrix(
    net: &DynNetwork,
    pi: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    f: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let (nu, ny) = (net.nu(), net.ny());
    if pi.shape() != (nu, nu) || gamma.shape() != (ny, ny) || f.shape() != (nu, ny) {
        return Err(Error::Dimension(format!(
            "closed loop needs Pi {nu}x{nu}, Gamma {ny}x{ny}, F {nu}x{ny}; got {:?}, {:?}, {:?}",
            pi.shape(),
            gamma.shape(),
            f.shape()
        )));
    }
    for (m, name) in [(pi, "Pi"), (gamma, "Gamma"), (f, "F")] {
        if !linalg::all_finite(m) {
            return Err(Error::NonFinite(name));
        }
    }
    Ok(net.a() + net.b() * pi * f * gamma * net.c())
}

/// Eigenvalues of `A + B Pi F Gamma C`.
pub fn closed_loop_spectrum(
    net: &DynNetwork,
    pi: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    f: &DMatrix<f64>,
) -> Result<Vec<Complex<f64>>> {
    linalg::eigenvalues(&closed_loop_matrix(net, pi, gamma, f)?)
}

/// Largest real part of the closed-loop spectrum.
pub fn closed_loop_abscissa(
    net: &DynNetwork,
    pi: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    f: &DMatrix<f64>,
) -> Result<f64> {
    Ok(closed_loop_spectrum(net, pi, gamma, f)?.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(v))
    }

    pub(crate) fn two_node_scalar(a: DMatrix<f64>) -> DynNetwork {
        DynNetwork::new(
            vec![NodeDims::new(1, 1, 1), NodeDims::new(1, 1, 1)],
            a,
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
        )
        .unwrap()
    }

    #[test]
    fn rejects_non_block_diagonal_b() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let err = DynNetwork::new(
            vec![NodeDims::new(1, 1, 1), NodeDims::new(1, 1, 1)],
            DMatrix::zeros(2, 2),
            b,
            DMatrix::identity(2, 2),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn rejects_rank_deficient_c() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let err = DynNetwork::new(
            vec![NodeDims::new(1, 1, 1), NodeDims::new(1, 1, 1)],
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2),
            c,
        )
        .unwrap_err();
        assert!(matches!(err, Error::RankDeficient(_)));
    }

    #[test]
    fn rejects_wrong_shapes_and_nan() {
        let dims = vec![NodeDims::new(2, 1, 1)];
        assert!(matches!(
            DynNetwork::new(dims.clone(), DMatrix::zeros(3, 3), DMatrix::zeros(2, 1), DMatrix::zeros(1, 2)),
            Err(Error::Dimension(_))
        ));
        let mut a = DMatrix::zeros(2, 2);
        a[(0, 1)] = f64::INFINITY;
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert_eq!(DynNetwork::new(dims, a, b, c), Err(Error::NonFinite("A")));
    }

    #[test]
    fn totals_and_node_lookup() {
        let dims = vec![NodeDims::new(2, 1, 2), NodeDims::new(3, 2, 1)];
        let b = DMatrix::from_row_slice(5, 3, &[1., 0., 0., 0., 0., 0., 0., 1., 0., 0., 0., 1., 0., 0., 0.]);
        let mut c = DMatrix::zeros(3, 5);
        c[(0, 0)] = 1.0;
        c[(1, 1)] = 1.0;
        c[(2, 4)] = 1.0;
        let net = DynNetwork::new(dims, DMatrix::zeros(5, 5), b, c).unwrap();
        assert_eq!((net.nx(), net.nu(), net.ny()), (5, 3, 3));
        assert_eq!(net.input_node(0), 0);
        assert_eq!(net.input_node(1), 1);
        assert_eq!(net.input_node(2), 1);
        assert_eq!(net.output_node(1), 0);
        assert_eq!(net.output_node(2), 1);
    }

    #[test]
    fn assumption1_stable_a_all_true() {
        let net = two_node_scalar(-DMatrix::identity(2, 2));
        let r = check_assumption1(&net).unwrap();
        assert!(r.holds());
    }

    #[test]
    fn assumption1_uncontrollable_unstable_mode() {
        let net = DynNetwork::new(
            vec![NodeDims::new(2, 1, 2)],
            diag(&[1.0, -1.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let r = check_assumption1(&net).unwrap();
        assert!(!r.stabilizable);
        assert!(r.detectable);
        assert!(r.fullrank_b && r.fullrank_c);
    }

    #[test]
    fn assumption1_undetectable_mode() {
        let net = DynNetwork::new(
            vec![NodeDims::new(2, 2, 1)],
            diag(&[1.0, -1.0]),
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
        )
        .unwrap();
        let r = check_assumption1(&net).unwrap();
        assert!(r.stabilizable);
        assert!(!r.detectable);
    }

    #[test]
    fn closed_loop_zero_gain_is_open_loop() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, -0.3, -2.0]);
        let net = two_node_scalar(a.clone());
        let id = DMatrix::identity(2, 2);
        let mut got: Vec<f64> =
            closed_loop_spectrum(&net, &id, &id, &DMatrix::zeros(2, 2)).unwrap().iter().map(|z| z.re).collect();
        let mut want: Vec<f64> = linalg::eigenvalues(&a).unwrap().iter().map(|z| z.re).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_loop_diagonal_arithmetic() {
        let net = two_node_scalar(diag(&[-1.0, -2.0]));
        let id = DMatrix::identity(2, 2);
        let f = diag(&[-1.0, 0.0]);
        let spec = closed_loop_spectrum(&net, &id, &id, &f).unwrap();
        for z in spec {
            assert!((z.re + 2.0).abs() < 1e-12 && z.im.abs() < 1e-12);
        }
    }

    #[test]
    fn closed_loop_rejects_bad_shapes_and_nan() {
        let net = two_node_scalar(DMatrix::zeros(2, 2));
        let id = DMatrix::identity(2, 2);
        assert!(matches!(
            closed_loop_spectrum(&net, &id, &id, &DMatrix::zeros(1, 2)),
            Err(Error::Dimension(_))
        ));
        let mut f = DMatrix::zeros(2, 2);
        f[(1, 1)] = f64::NAN;
        assert_eq!(closed_loop_spectrum(&net, &id, &id, &f), Err(Error::NonFinite("F")));
    }

    #[test]
    fn embed_gain_places_blocks() {
        let net = two_node_scalar(DMatrix::zeros(2, 2));
        let s = Selection::new(&[false, true], &[true, false]).unwrap();
        let f = net.embed_gain(&s, &DMatrix::from_element(1, 1, 3.0)).unwrap();
        assert_eq!(f, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 3.0, 0.0]));
    }
}
