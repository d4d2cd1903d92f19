//! Normalized l1-l2 k-space loss.
//!
//! `L(u, v) = ||u - v||_2 / ||u||_2 + ||u - v||_1 / ||u||_1`, where `u` is the
//! acquired reference and the l1 norm sums complex moduli. Norms run jointly
//! over all coils and all loss indices.

use crate::error::{Error, Result};
use crate::kspace::C64;

/// Loss over complex values supplied as equal-length slices.
pub fn loss_l1l2(reference: &[C64], prediction: &[C64]) -> Result<f64> {
    if reference.len() != prediction.len() {
        return Err(Error::dim(format!(
            "loss inputs differ in length: {} vs {}",
            reference.len(),
            prediction.len()
        )));
    }
    let u: Vec<f64> = reference.iter().flat_map(|c| [c.re, c.im]).collect();
    let v: Vec<f64> = prediction.iter().flat_map(|c| [c.re, c.im]).collect();
    l1l2_value(&u, &v)
}

struct Norms {
    diff_l2: f64,
    diff_l1: f64,
    ref_l2: f64,
    ref_l1: f64,
}

fn norms(u: &[f64], v: &[f64]) -> Norms {
    let mut n = Norms { diff_l2: 0.0, diff_l1: 0.0, ref_l2: 0.0, ref_l1: 0.0 };
    for (uc, vc) in u.chunks_exact(2).zip(v.chunks_exact(2)) {
        let (dr, di) = (uc[0] - vc[0], uc[1] - vc[1]);
        let d2 = dr * dr + di * di;
        let u2 = uc[0] * uc[0] + uc[1] * uc[1];
        n.diff_l2 += d2;
        n.diff_l1 += d2.sqrt();
        n.ref_l2 += u2;
        n.ref_l1 += u2.sqrt();
    }
    n.diff_l2 = n.diff_l2.sqrt();
    n.ref_l2 = n.ref_l2.sqrt();
    n
}

/// Loss on interleaved `(re, im)` buffers.
pub(crate) fn l1l2_value(u: &[f64], v: &[f64]) -> Result<f64> {
    let n = norms(u, v);
    if n.ref_l2 == 0.0 {
        return Err(Error::UndefinedReference("loss reference has zero norm".into()));
    }
    Ok(n.diff_l2 / n.ref_l2 + n.diff_l1 / n.ref_l1)
}

/// Gradient of [`l1l2_value`] with respect to `v`. Entries where the
/// difference vanishes take the zero subgradient.
pub(crate) fn l1l2_grad(u: &[f64], v: &[f64]) -> Vec<f64> {
    let n = norms(u, v);
    let mut g = vec![0.0; v.len()];
    for ((gc, uc), vc) in g.chunks_exact_mut(2).zip(u.chunks_exact(2)).zip(v.chunks_exact(2)) {
        let (dr, di) = (uc[0] - vc[0], uc[1] - vc[1]);
        let mag = (dr * dr + di * di).sqrt();
        if mag == 0.0 {
            continue;
        }
        let w = 1.0 / (n.diff_l2 * n.ref_l2) + 1.0 / (mag * n.ref_l1);
        gc[0] = -dr * w;
        gc[1] = -di * w;
    }
    g
}
