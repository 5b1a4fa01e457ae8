//! Independent check of a result against its system. Only the matrices and
//! the stored certificate are used; no solver runs.

use nalgebra::DMatrix;
use serde::Serialize;

use sensact_core::netmodel::{build_selection_matrices, closed_loop_abscissa, reduced_matrices, DynNetwork};
use sensact_core::sof::check_certificate;

use crate::result::RunResult;
use crate::{AppError, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub pass: bool,
    #[serde(rename = "maxReEig")]
    pub max_re_eig: f64,
    pub min_eig_p: Option<f64>,
    pub lmi_excess: Option<f64>,
    pub eq_residual: Option<f64>,
    /// Human-readable reasons for a failure; empty on PASS.
    pub problems: Vec<String>,
}

/// Rebuilds `Pi`, `Gamma` and the full gain, recomputes the closed-loop
/// spectrum and the certificate residuals.
///
/// Errors (rather than FAIL) when the files cannot belong together: `N`
/// mismatch, no selection, no certificate, or matrix shapes that contradict
/// the certificate's own index lists.
pub fn verify(net: &DynNetwork, result: &RunResult) -> Result<VerifyReport> {
    result.validate()?;
    let s = result.selection()?.ok_or_else(|| AppError::Input("result carries no selection".into()))?;
    if s.n() != net.n_nodes() {
        return Err(AppError::Input(format!("result has N = {}, system has N = {}", s.n(), net.n_nodes())));
    }
    let cf = result.certificate.as_ref().ok_or_else(|| AppError::Input("result carries no certificate".into()))?;
    if cf.inputs.iter().any(|&i| i >= net.nu()) || cf.outputs.iter().any(|&j| j >= net.ny()) {
        return Err(AppError::Input("certificate index lists exceed the system dimensions".into()));
    }
    let cert = cf.to_certificate(net.nx())?;
    let mut problems = Vec::new();

    let mut f = DMatrix::zeros(net.nu(), net.ny());
    for (ri, &r) in cf.inputs.iter().enumerate() {
        for (ci, &c) in cf.outputs.iter().enumerate() {
            f[(r, c)] = cert.f[(ri, ci)];
        }
    }
    let (pi, gamma) = build_selection_matrices(&s, net)?;
    let max_re = closed_loop_abscissa(net, &pi, &gamma, &f)?;
    if !(max_re < 0.0) {
        problems.push(format!("closed loop not stable: max Re eig = {max_re:.6e}"));
    }

    let (mut min_eig_p, mut lmi_excess, mut eq_residual) = (None, None, None);
    if cf.inputs != net.active_inputs(&s) || cf.outputs != net.active_outputs(&s) {
        problems.push(format!(
            "certificate is for inputs {:?} / outputs {:?}, selection activates {:?} / {:?}",
            cf.inputs,
            cf.outputs,
            net.active_inputs(&s),
            net.active_outputs(&s)
        ));
    } else {
        let (bq, cq) = reduced_matrices(net, &s)?;
        let chk = check_certificate(net.a(), &bq, &cq, &cert)?;
        min_eig_p = Some(chk.min_eig_p);
        lmi_excess = Some(chk.lmi_excess);
        eq_residual = Some(chk.eq_residual);
        if chk.min_eig_p < cf.delta - 1e-8 {
            problems.push(format!("min eig(P) = {:.6e} below delta = {:.1e}", chk.min_eig_p, cf.delta));
        }
        if chk.lmi_excess > 1e-6 {
            problems.push(format!("LMI violated by {:.6e}", chk.lmi_excess));
        }
        if chk.eq_residual > 1e-6 {
            problems.push(format!("|BM - PB| = {:.6e}", chk.eq_residual));
        }
    }
    Ok(VerifyReport { pass: problems.is_empty(), max_re_eig: max_re, min_eig_p, lmi_excess, eq_residual, problems })
}
