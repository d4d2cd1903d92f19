//! Conjugate-gradient data consistency, the CG-SENSE baseline and the
//! unrolled network that alternates the regularizer with data consistency.
//!
//! The data-consistency unit solves
//! `argmin_x ||y - E x||^2 + mu ||x - z||^2`, i.e. the normal equations
//! `(E^H E + mu I) x = E^H y + mu z`. Inside the training graph the CG
//! iterations are recorded op by op, so gradients flow through them exactly.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kspace::{zero_filled_recon, CoilSensitivities, ComplexImage, EncodingOperator, KSpaceSample, C64};
use crate::nn::resnet::{resnet_nodes, resnet_regularizer, NetworkParams, ParamNodes};
use crate::nn::{ComputeGraph, NodeId, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnrollConfig {
    pub t_unroll: usize,
    pub cg_iters: usize,
    pub cg_tol: f64,
    pub mu_init: f64,
    pub mu_trainable: bool,
}

impl Default for UnrollConfig {
    fn default() -> Self {
        Self { t_unroll: 5, cg_iters: 10, cg_tol: 1e-6, mu_init: 0.05, mu_trainable: true }
    }
}

impl UnrollConfig {
    /// Unroll depth of the full-scale (non-desk) setting.
    pub const FULL_SCALE_T: usize = 10;

    pub fn validate(&self) -> Result<()> {
        if self.t_unroll == 0 {
            return Err(Error::config("t_unroll must be at least 1"));
        }
        if self.cg_iters == 0 {
            return Err(Error::config("cg_iters must be at least 1"));
        }
        if !(self.cg_tol > 0.0) {
            return Err(Error::config("cg_tol must be positive"));
        }
        if !(self.mu_init > 0.0) {
            return Err(Error::config("mu_init must be positive"));
        }
        Ok(())
    }
}

/// Iterates of one unrolled forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct UnrollTrace {
    /// `x^(0)` through `x^(T)`.
    pub x: Vec<ComplexImage>,
    /// `z^(0)` through `z^(T-1)`.
    pub z: Vec<ComplexImage>,
}

impl UnrollTrace {
    pub fn output(&self) -> &ComplexImage {
        self.x.last().expect("trace always holds x^(0)")
    }
}

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub x: ComplexImage,
    pub iterations: usize,
    /// `||r|| / ||b||` from the CG recurrence.
    pub residual: f64,
}

fn check_finite(v: f64, iteration: usize, what: &str) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::Numerical { iteration, detail: format!("{what} is not finite") });
    }
    Ok(())
}

/// Conjugate gradients for a Hermitian positive-definite operator, starting
/// from zero. Stops after `iters` steps or once `||r|| <= tol ||rhs||`.
pub fn cg_normal_solve(
    mut apply_a: impl FnMut(&ComplexImage) -> Result<ComplexImage>,
    rhs: &ComplexImage,
    iters: usize,
    tol: f64,
) -> Result<CgOutcome> {
    let (ny, nz) = rhs.shape();
    let bnorm = rhs.norm();
    check_finite(bnorm, 0, "right-hand side norm")?;
    let mut x = ComplexImage::zeros(ny, nz);
    if bnorm == 0.0 {
        return Ok(CgOutcome { x, iterations: 0, residual: 0.0 });
    }
    let mut r = rhs.clone();
    let mut p = rhs.clone();
    let mut rr = r.norm().powi(2);
    for it in 1..=iters {
        let ap = apply_a(&p)?;
        let pap = p.dot(&ap).re;
        check_finite(pap, it, "curvature p^H A p")?;
        if pap <= 0.0 {
            return Err(Error::Numerical {
                iteration: it,
                detail: format!("operator is not positive definite (p^H A p = {pap:e})"),
            });
        }
        let alpha = rr / pap;
        x = x.axpy(C64::new(alpha, 0.0), &p);
        r = r.axpy(C64::new(-alpha, 0.0), &ap);
        let rr_new = r.norm().powi(2);
        check_finite(rr_new, it, "residual")?;
        if rr_new.sqrt() <= tol * bnorm {
            return Ok(CgOutcome { x, iterations: it, residual: rr_new.sqrt() / bnorm });
        }
        let beta = rr_new / rr;
        p = r.axpy(C64::new(beta, 0.0), &p);
        rr = rr_new;
    }
    Ok(CgOutcome { x, iterations: iters, residual: rr.sqrt() / bnorm })
}

fn encoding_for(y: &KSpaceSample, coils: &CoilSensitivities) -> Result<EncodingOperator> {
    if y.ncoils() != coils.ncoils() || y.shape() != coils.shape() {
        return Err(Error::dim("k-space and coil maps disagree in shape"));
    }
    EncodingOperator::new(Arc::new(coils.clone()), y.pattern().clone())
}

/// `argmin_x ||y - E x||^2 + mu ||x - z||^2` by CG on the normal equations.
pub fn dc_unit(
    z: &ComplexImage,
    y: &KSpaceSample,
    coils: &CoilSensitivities,
    mu: f64,
    cfg: &UnrollConfig,
) -> Result<ComplexImage> {
    Ok(dc_unit_detailed(z, y, coils, mu, cfg)?.x)
}

pub fn dc_unit_detailed(
    z: &ComplexImage,
    y: &KSpaceSample,
    coils: &CoilSensitivities,
    mu: f64,
    cfg: &UnrollConfig,
) -> Result<CgOutcome> {
    if !(mu >= 0.0) {
        return Err(Error::config(format!("mu must be non-negative, got {mu}")));
    }
    let op = encoding_for(y, coils)?;
    if z.shape() != y.shape() {
        return Err(Error::dim("z and k-space grid differ"));
    }
    let rhs = op.adjoint(y.data())?.axpy(C64::new(mu, 0.0), z);
    cg_normal_solve(|p| Ok(op.normal(p)?.axpy(C64::new(mu, 0.0), p)), &rhs, cfg.cg_iters, cfg.cg_tol)
}

/// Tikhonov-regularized SENSE: `(E^H E + l2_weight I) x = E^H y`.
pub fn cg_sense(y: &KSpaceSample, coils: &CoilSensitivities, l2_weight: f64, cfg: &UnrollConfig) -> Result<ComplexImage> {
    if !(l2_weight >= 0.0) {
        return Err(Error::config(format!("l2 weight must be non-negative, got {l2_weight}")));
    }
    let (ny, nz) = y.shape();
    dc_unit(&ComplexImage::zeros(ny, nz), y, coils, l2_weight, cfg)
}

/// `x^(0) = E^H y`, then `z^(i-1) = R(x^(i-1))`, `x^(i) = DC(z^(i-1))` for
/// `i = 1..=T`, with the same regularizer weights at every step.
pub fn unrolled_forward(
    y: &KSpaceSample,
    coils: &CoilSensitivities,
    params: &NetworkParams,
    cfg: &UnrollConfig,
) -> Result<UnrollTrace> {
    let mu = params.mu();
    let mut x = vec![zero_filled_recon(y, coils)?];
    let mut z = Vec::with_capacity(cfg.t_unroll);
    for i in 0..cfg.t_unroll {
        let zi = resnet_regularizer(&x[i], params)?;
        let xi = dc_unit(&zi, y, coils, mu, cfg)?;
        z.push(zi);
        x.push(xi);
    }
    Ok(UnrollTrace { x, z })
}

/// Graph nodes of one unrolled pass.
#[derive(Clone, Debug)]
pub struct UnrolledNodes {
    pub x: Vec<NodeId>,
    pub z: Vec<NodeId>,
}

impl UnrolledNodes {
    pub fn output(&self) -> NodeId {
        *self.x.last().expect("x^(0) always present")
    }
}

/// CG on `(E^H E + mu I) x = rhs`, recorded into `graph`.
pub fn cg_nodes(
    graph: &mut ComputeGraph,
    rhs: NodeId,
    mu: NodeId,
    op: &Arc<EncodingOperator>,
    iters: usize,
    tol: f64,
) -> Result<NodeId> {
    let bnorm = graph.value(rhs).dot(graph.value(rhs)).sqrt();
    check_finite(bnorm, 0, "right-hand side norm")?;
    if bnorm == 0.0 {
        return Ok(graph.constant(Tensor::zeros(graph.value(rhs).shape())));
    }
    let mut x: Option<NodeId> = None;
    let mut r = rhs;
    let mut p = rhs;
    let mut rr = graph.dot(r, r)?;
    for it in 1..=iters {
        let ehe = graph.normal(p, op.clone())?;
        let shift = graph.scale(p, mu)?;
        let ap = graph.add(ehe, shift)?;
        let pap = graph.dot(p, ap)?;
        let curvature = graph.value(pap).item();
        check_finite(curvature, it, "curvature p^H A p")?;
        if curvature <= 0.0 {
            return Err(Error::Numerical {
                iteration: it,
                detail: format!("operator is not positive definite (p^H A p = {curvature:e})"),
            });
        }
        let alpha = graph.div(rr, pap)?;
        let step = graph.scale(p, alpha)?;
        x = Some(match x {
            Some(prev) => graph.add(prev, step)?,
            None => step,
        });
        let dr = graph.scale(ap, alpha)?;
        r = graph.sub(r, dr)?;
        let rr_new = graph.dot(r, r)?;
        let rr_val = graph.value(rr_new).item();
        check_finite(rr_val, it, "residual")?;
        if it == iters || rr_val.sqrt() <= tol * bnorm {
            break;
        }
        let beta = graph.div(rr_new, rr)?;
        let carried = graph.scale(p, beta)?;
        p = graph.add(r, carried)?;
        rr = rr_new;
    }
    Ok(x.expect("at least one CG iteration"))
}

/// Data-consistency unit on graph nodes; `ehy` holds `E^H y`.
pub fn dc_nodes(
    graph: &mut ComputeGraph,
    z: NodeId,
    ehy: NodeId,
    mu: NodeId,
    op: &Arc<EncodingOperator>,
    cfg: &UnrollConfig,
) -> Result<NodeId> {
    let pull = graph.scale(z, mu)?;
    let rhs = graph.add(ehy, pull)?;
    cg_nodes(graph, rhs, mu, op, cfg.cg_iters, cfg.cg_tol)
}

/// Unrolled network recorded into `graph`; DC units see exactly the values
/// and pattern of `y`.
pub fn unrolled_nodes(
    graph: &mut ComputeGraph,
    y: &KSpaceSample,
    coils: &Arc<CoilSensitivities>,
    params: &ParamNodes,
    cfg: &UnrollConfig,
) -> Result<UnrolledNodes> {
    if y.ncoils() != coils.ncoils() || y.shape() != coils.shape() {
        return Err(Error::dim("k-space and coil maps disagree in shape"));
    }
    let op = Arc::new(EncodingOperator::new(coils.clone(), y.pattern().clone())?);
    let x0 = op.adjoint(y.data())?;
    let ehy = graph.constant(Tensor::from_image(&x0));
    let mut x = vec![ehy];
    let mut z = Vec::with_capacity(cfg.t_unroll);
    for i in 0..cfg.t_unroll {
        let zi = resnet_nodes(graph, x[i], params)?;
        let xi = dc_nodes(graph, zi, ehy, params.mu(), &op, cfg)?;
        z.push(zi);
        x.push(xi);
    }
    Ok(UnrolledNodes { x, z })
}
