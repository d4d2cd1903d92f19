//! Acquisition patterns and the `(Theta, Lambda)` splits used for
//! self-supervised training.
//!
//! ACS points are never eligible for a loss set: they stay in every `Theta_j`,
//! and `rho` is measured against the remaining ("selectable") sampled points.

use rand::seq::index;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::kspace::{AcsBlock, SamplingPattern};
use crate::rng::{child_rng, derive_seed, rng_from_seed};

/// Sheared uniform `k_y`-`k_z` lattice plus a fully sampled ACS block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UndersamplingSpec {
    pub r_total: usize,
    pub r_y: usize,
    pub r_z: usize,
    pub shear_step: i64,
    pub acs_h: usize,
    pub acs_w: usize,
}

impl UndersamplingSpec {
    pub fn new(r_y: usize, r_z: usize, shear_step: i64, acs_h: usize, acs_w: usize) -> Self {
        Self { r_total: r_y * r_z, r_y, r_z, shear_step, acs_h, acs_w }
    }

    /// Factor `r` into `r_y * r_z` with `r_y >= r_z` as close as possible.
    pub fn for_rate(r: usize, shear_step: i64, acs: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::config("acceleration must be positive"));
        }
        let mut r_z = (r as f64).sqrt().floor() as usize;
        while r % r_z != 0 {
            r_z -= 1;
        }
        Ok(Self::new(r / r_z, r_z, shear_step, acs, acs))
    }

    fn validate(&self, ny: usize, nz: usize) -> Result<()> {
        if self.r_y == 0 || self.r_z == 0 || self.r_y * self.r_z != self.r_total {
            return Err(Error::config(format!(
                "r_y * r_z = {} * {} does not equal R = {}",
                self.r_y, self.r_z, self.r_total
            )));
        }
        if self.r_y > ny || self.r_z > nz {
            return Err(Error::config("acceleration factors exceed the grid"));
        }
        if self.acs_h > ny || self.acs_w > nz {
            return Err(Error::config(format!(
                "ACS {}x{} larger than grid {ny}x{nz}",
                self.acs_h, self.acs_w
            )));
        }
        Ok(())
    }
}

pub fn gen_sheared_pattern(ny: usize, nz: usize, spec: &UndersamplingSpec) -> Result<SamplingPattern> {
    spec.validate(ny, nz)?;
    let acs = AcsBlock { h: spec.acs_h, w: spec.acs_w };
    let mut mask = vec![false; ny * nz];
    for y in (0..ny).step_by(spec.r_y) {
        let offset = (spec.shear_step * (y / spec.r_y) as i64).rem_euclid(spec.r_z as i64) as usize;
        for z in (offset..nz).step_by(spec.r_z) {
            mask[y * nz + z] = true;
        }
    }
    for y in acs.rows(ny) {
        for z in acs.cols(nz) {
            mask[y * nz + z] = true;
        }
    }
    SamplingPattern::new(ny, nz, mask, acs)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MaskDistribution {
    UniformRandom,
    /// Selection weight `exp(-r^2 / (2 sigma^2))` about the k-space center,
    /// with `sigma = sigma_frac * min(ny, nz)`.
    GaussianVariableDensity { sigma_frac: f64 },
}

impl MaskDistribution {
    pub const DEFAULT_SIGMA_FRAC: f64 = 0.25;

    pub fn gaussian() -> Self {
        Self::GaussianVariableDensity { sigma_frac: Self::DEFAULT_SIGMA_FRAC }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::UniformRandom => Ok(()),
            Self::GaussianVariableDensity { sigma_frac } if sigma_frac > 0.0 && sigma_frac.is_finite() => Ok(()),
            Self::GaussianVariableDensity { sigma_frac } => {
                Err(Error::config(format!("sigma_frac must be positive, got {sigma_frac}")))
            }
        }
    }

    /// Selection weight of grid index `idx`.
    pub fn weight(&self, ny: usize, nz: usize, idx: usize) -> f64 {
        match *self {
            Self::UniformRandom => 1.0,
            Self::GaussianVariableDensity { sigma_frac } => {
                let sigma = sigma_frac * ny.min(nz) as f64;
                let dy = (idx / nz) as f64 - (ny / 2) as f64;
                let dz = (idx % nz) as f64 - (nz / 2) as f64;
                (-(dy * dy + dz * dz) / (2.0 * sigma * sigma)).exp()
            }
        }
    }
}

/// `K` splits of one acquisition, `Theta_j` for data consistency and
/// `Lambda_j = Omega \ Theta_j` for the loss.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionSet {
    pub theta: Vec<SamplingPattern>,
    pub lambda: Vec<SamplingPattern>,
    pub rho: f64,
    pub k: usize,
    pub seed: u64,
}

impl PartitionSet {
    /// Exact set checks against the acquired pattern.
    pub fn validate(&self, omega: &SamplingPattern) -> Result<()> {
        if self.theta.len() != self.k || self.lambda.len() != self.k {
            return Err(Error::Partition(format!(
                "expected {} splits, found {} / {}",
                self.k,
                self.theta.len(),
                self.lambda.len()
            )));
        }
        for (j, (theta, lambda)) in self.theta.iter().zip(&self.lambda).enumerate() {
            if theta.shape() != omega.shape() || lambda.shape() != omega.shape() {
                return Err(Error::Partition(format!("split {j} has the wrong grid")));
            }
            let m = omega.mask();
            for (i, (&t, &l)) in theta.mask().iter().zip(lambda.mask()).enumerate() {
                if t && l {
                    return Err(Error::Partition(format!("split {j}: index {i} in both Theta and Lambda")));
                }
                if (t || l) != m[i] {
                    return Err(Error::Partition(format!("split {j}: Theta u Lambda != Omega at index {i}")));
                }
            }
        }
        Ok(())
    }
}

fn lambda_size(rho: f64, selectable: usize) -> Result<usize> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::config(format!("rho must lie in (0, 1), got {rho}")));
    }
    let size = (rho * selectable as f64).round() as usize;
    if size < 1 {
        return Err(Error::config(format!(
            "rho = {rho} over {selectable} selectable points leaves Lambda empty"
        )));
    }
    Ok(size)
}

fn split_from_lambda(pattern: &SamplingPattern, lambda_idx: &[usize]) -> Result<(SamplingPattern, SamplingPattern)> {
    let (ny, nz) = pattern.shape();
    let mut lambda = vec![false; ny * nz];
    for &i in lambda_idx {
        lambda[i] = true;
    }
    let theta: Vec<bool> = pattern.mask().iter().zip(&lambda).map(|(&m, &l)| m && !l).collect();
    if !theta.iter().any(|&t| t) {
        return Err(Error::config("split leaves Theta empty"));
    }
    let theta = SamplingPattern::new(ny, nz, theta, pattern.acs())?;
    let lambda = SamplingPattern::new(ny, nz, lambda, AcsBlock::default())?;
    Ok((theta, lambda))
}

/// Single `(Theta, Lambda)` split with `|Lambda| = round(rho * |selectable|)`.
pub fn split_ssdu(
    pattern: &SamplingPattern,
    rho: f64,
    dist: MaskDistribution,
    seed: u64,
) -> Result<(SamplingPattern, SamplingPattern)> {
    dist.validate()?;
    let selectable = pattern.selectable();
    let size = lambda_size(rho, selectable.len())?;
    let mut rng = rng_from_seed(seed);
    let picks: Vec<usize> = match dist {
        MaskDistribution::UniformRandom => index::sample(&mut rng, selectable.len(), size).into_vec(),
        MaskDistribution::GaussianVariableDensity { .. } => {
            let (ny, nz) = pattern.shape();
            index::sample_weighted(&mut rng, selectable.len(), |i| dist.weight(ny, nz, selectable[i]), size)
                .map_err(|e| Error::config(format!("weighted selection failed: {e}")))?
                .into_vec()
        }
    };
    let lambda_idx: Vec<usize> = picks.into_iter().map(|i| selectable[i]).collect();
    split_from_lambda(pattern, &lambda_idx)
}

/// `K` mutually independent splits; split `j` uses seed `derive_seed(seed, j)`.
pub fn gen_multi_mask(
    pattern: &SamplingPattern,
    k: usize,
    rho: f64,
    dist: MaskDistribution,
    seed: u64,
) -> Result<PartitionSet> {
    if k == 0 {
        return Err(Error::config("K must be at least 1"));
    }
    let mut theta = Vec::with_capacity(k);
    let mut lambda = Vec::with_capacity(k);
    for j in 0..k {
        let (t, l) = split_ssdu(pattern, rho, dist, derive_seed(seed, j as u64))?;
        theta.push(t);
        lambda.push(l);
    }
    Ok(PartitionSet { theta, lambda, rho, k, seed })
}

const CYCLIC_STREAM: u64 = 0xC7C1_1C00;

/// Shuffle the selectable points once and deal them into `K` loss sets that
/// partition the selectable set. The first `|selectable| mod K` sets receive
/// one extra point.
pub fn gen_cyclic_multi_mask(pattern: &SamplingPattern, k: usize, seed: u64) -> Result<PartitionSet> {
    if k < 2 {
        return Err(Error::config(format!("cyclic partitioning needs K >= 2, got {k}")));
    }
    let mut selectable = pattern.selectable();
    if k > selectable.len() {
        return Err(Error::config(format!(
            "K = {k} exceeds the {} selectable points",
            selectable.len()
        )));
    }
    let mut rng = child_rng(seed, CYCLIC_STREAM);
    selectable.shuffle(&mut rng);
    let base = selectable.len() / k;
    let extra = selectable.len() % k;
    let mut theta = Vec::with_capacity(k);
    let mut lambda = Vec::with_capacity(k);
    let mut start = 0;
    for j in 0..k {
        let len = base + usize::from(j < extra);
        let (t, l) = split_from_lambda(pattern, &selectable[start..start + len])?;
        theta.push(t);
        lambda.push(l);
        start += len;
    }
    Ok(PartitionSet { theta, lambda, rho: 1.0 / k as f64, k, seed })
}
