//! Complex images, centered 2-D FFTs and the multi-coil encoding operator.
//!
//! The Fourier transform is orthonormal and centered: the DC coefficient sits
//! at index `(ny/2, nz/2)`, and both directions carry a `1/sqrt(ny*nz)`
//! factor. Under full sampling with a single unit coil the encoding operator
//! is therefore unitary.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// A complex `ny x nz` image stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexImage {
    ny: usize,
    nz: usize,
    data: Vec<C64>,
}

impl ComplexImage {
    pub fn new(ny: usize, nz: usize, data: Vec<C64>) -> Result<Self> {
        if ny < 2 || nz < 2 {
            return Err(Error::dim(format!("image must be at least 2x2, got {ny}x{nz}")));
        }
        if data.len() != ny * nz {
            return Err(Error::dim(format!(
                "image data has {} entries, expected {}",
                data.len(),
                ny * nz
            )));
        }
        if data.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Numerical {
                iteration: 0,
                detail: "image contains non-finite entries".into(),
            });
        }
        Ok(Self { ny, nz, data })
    }

    pub fn zeros(ny: usize, nz: usize) -> Self {
        Self { ny, nz, data: vec![C64::new(0.0, 0.0); ny * nz] }
    }

    pub(crate) fn from_raw(ny: usize, nz: usize, data: Vec<C64>) -> Self {
        debug_assert_eq!(data.len(), ny * nz);
        Self { ny, nz, data }
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.ny, self.nz)
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn get(&self, y: usize, z: usize) -> C64 {
        self.data[y * self.nz + z]
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.norm()).collect()
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Inner product `<self, other> = sum conj(self) * other`.
    pub fn dot(&self, other: &Self) -> C64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::from_raw(self.ny, self.nz, self.data.iter().map(|v| v * s).collect())
    }

    /// `self + s * other`
    pub fn axpy(&self, s: C64, other: &Self) -> Self {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + s * b).collect();
        Self::from_raw(self.ny, self.nz, data)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpy(C64::new(-1.0, 0.0), other)
    }
}

/// Center-anchored ACS rectangle of `h x w` k-space points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct AcsBlock {
    pub h: usize,
    pub w: usize,
}

impl AcsBlock {
    pub fn rows(&self, ny: usize) -> std::ops::Range<usize> {
        let start = (ny / 2).saturating_sub(self.h / 2);
        start..(start + self.h).min(ny)
    }

    pub fn cols(&self, nz: usize) -> std::ops::Range<usize> {
        let start = (nz / 2).saturating_sub(self.w / 2);
        start..(start + self.w).min(nz)
    }

    pub fn contains(&self, ny: usize, nz: usize, y: usize, z: usize) -> bool {
        self.rows(ny).contains(&y) && self.cols(nz).contains(&z)
    }

    pub fn is_empty(&self) -> bool {
        self.h == 0 || self.w == 0
    }
}

/// Sampled index set together with its ACS block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SamplingPattern {
    ny: usize,
    nz: usize,
    mask: Vec<bool>,
    acs: AcsBlock,
}

impl SamplingPattern {
    pub fn new(ny: usize, nz: usize, mask: Vec<bool>, acs: AcsBlock) -> Result<Self> {
        if mask.len() != ny * nz {
            return Err(Error::dim(format!("mask has {} entries, expected {}", mask.len(), ny * nz)));
        }
        if acs.h > ny || acs.w > nz {
            return Err(Error::config(format!(
                "ACS block {}x{} exceeds grid {ny}x{nz}",
                acs.h, acs.w
            )));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::config("sampling pattern has no sampled points"));
        }
        let pattern = Self { ny, nz, mask, acs };
        for y in acs.rows(ny) {
            for z in acs.cols(nz) {
                if !pattern.mask[y * nz + z] {
                    return Err(Error::config(format!("ACS point ({y},{z}) not sampled")));
                }
            }
        }
        Ok(pattern)
    }

    pub fn full(ny: usize, nz: usize) -> Self {
        Self { ny, nz, mask: vec![true; ny * nz], acs: AcsBlock::default() }
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.ny, self.nz)
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn acs(&self) -> AcsBlock {
        self.acs
    }

    /// `|Omega|`
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn acceleration(&self) -> f64 {
        (self.ny * self.nz) as f64 / self.count() as f64
    }

    pub fn is_acs(&self, idx: usize) -> bool {
        self.acs.contains(self.ny, self.nz, idx / self.nz, idx % self.nz)
    }

    /// Sampled indices outside the ACS block, in row-major order.
    pub fn selectable(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&i| self.mask[i] && !self.is_acs(i)).collect()
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&i| self.mask[i]).collect()
    }

    /// Pattern over the same grid keeping only `mask`, which must be a subset
    /// of this pattern. The ACS block is kept only if `mask` still covers it.
    pub fn submask(&self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.mask.len() {
            return Err(Error::dim("submask length differs from pattern"));
        }
        if mask.iter().zip(&self.mask).any(|(&s, &m)| s && !m) {
            return Err(Error::Partition("submask is not contained in the pattern".into()));
        }
        let keeps_acs = self
            .acs
            .rows(self.ny)
            .all(|y| self.acs.cols(self.nz).all(|z| mask[y * self.nz + z]));
        let acs = if keeps_acs { self.acs } else { AcsBlock::default() };
        Self::new(self.ny, self.nz, mask, acs)
    }

    fn check_shape(&self, ny: usize, nz: usize) -> Result<()> {
        if (self.ny, self.nz) != (ny, nz) {
            return Err(Error::dim(format!(
                "pattern is {}x{}, expected {ny}x{nz}",
                self.ny, self.nz
            )));
        }
        Ok(())
    }
}

/// Per-coil complex sensitivity maps, `ncoils x ny x nz`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoilSensitivities {
    ncoils: usize,
    ny: usize,
    nz: usize,
    maps: Vec<C64>,
}

impl CoilSensitivities {
    pub fn new(ncoils: usize, ny: usize, nz: usize, maps: Vec<C64>) -> Result<Self> {
        if ncoils == 0 {
            return Err(Error::dim("at least one coil is required"));
        }
        if maps.len() != ncoils * ny * nz {
            return Err(Error::dim(format!(
                "coil maps have {} entries, expected {}",
                maps.len(),
                ncoils * ny * nz
            )));
        }
        if maps.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::dim("coil maps contain non-finite entries"));
        }
        Ok(Self { ncoils, ny, nz, maps })
    }

    /// A single coil of unit sensitivity.
    pub fn unit(ny: usize, nz: usize) -> Self {
        Self { ncoils: 1, ny, nz, maps: vec![C64::new(1.0, 0.0); ny * nz] }
    }

    pub fn ncoils(&self) -> usize {
        self.ncoils
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.ny, self.nz)
    }

    pub fn maps(&self) -> &[C64] {
        &self.maps
    }

    pub fn coil(&self, c: usize) -> &[C64] {
        let n = self.ny * self.nz;
        &self.maps[c * n..(c + 1) * n]
    }

    pub fn sum_of_squares(&self) -> Vec<f64> {
        let n = self.ny * self.nz;
        let mut sos = vec![0.0; n];
        for c in 0..self.ncoils {
            for (s, v) in sos.iter_mut().zip(self.coil(c)) {
                *s += v.norm_sqr();
            }
        }
        sos
    }
}

/// Multi-coil k-space restricted to a sampling pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct KSpaceSample {
    ncoils: usize,
    data: Vec<C64>,
    pattern: SamplingPattern,
    scale: f64,
}

impl KSpaceSample {
    pub fn new(ncoils: usize, data: Vec<C64>, pattern: SamplingPattern, scale: f64) -> Result<Self> {
        let n = pattern.ny * pattern.nz;
        if ncoils == 0 || data.len() != ncoils * n {
            return Err(Error::dim(format!(
                "k-space has {} entries, expected {} coils x {n}",
                data.len(),
                ncoils
            )));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::config(format!("scale must be positive, got {scale}")));
        }
        for (i, v) in data.iter().enumerate() {
            if !pattern.mask[i % n] && (v.re != 0.0 || v.im != 0.0) {
                return Err(Error::Contract(format!(
                    "k-space value at unsampled index {} is non-zero",
                    i % n
                )));
            }
        }
        Ok(Self { ncoils, data, pattern, scale })
    }

    pub fn zeros(ncoils: usize, pattern: SamplingPattern) -> Self {
        let n = pattern.ny * pattern.nz;
        Self { ncoils, data: vec![C64::new(0.0, 0.0); ncoils * n], pattern, scale: 1.0 }
    }

    pub fn ncoils(&self) -> usize {
        self.ncoils
    }

    pub fn shape(&self) -> (usize, usize) {
        self.pattern.shape()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn pattern(&self) -> &SamplingPattern {
        &self.pattern
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn coil(&self, c: usize) -> &[C64] {
        let n = self.pattern.ny * self.pattern.nz;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Values divided by `factor`; the recorded scale is multiplied by it.
    pub fn normalized_by(&self, factor: f64) -> Self {
        Self {
            ncoils: self.ncoils,
            data: self.data.iter().map(|v| v / factor).collect(),
            pattern: self.pattern.clone(),
            scale: self.scale * factor,
        }
    }

    /// Inverse of [`normalized_by`](Self::normalized_by) with the stored scale.
    pub fn denormalized(&self) -> Self {
        Self {
            ncoils: self.ncoils,
            data: self.data.iter().map(|v| v * self.scale).collect(),
            pattern: self.pattern.clone(),
            scale: 1.0,
        }
    }

    /// Keep only values on `sub`, which must be contained in this pattern.
    pub fn restrict(&self, sub: &SamplingPattern) -> Result<Self> {
        self.pattern.check_shape(sub.ny, sub.nz)?;
        if sub.mask.iter().zip(&self.pattern.mask).any(|(&s, &m)| s && !m) {
            return Err(Error::Partition("restriction pattern leaves the acquired set".into()));
        }
        Ok(self.restrict_unchecked(sub))
    }

    /// Mask by `sub` without requiring containment.
    pub fn restrict_unchecked(&self, sub: &SamplingPattern) -> Self {
        let n = sub.ny * sub.nz;
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, v)| if sub.mask[i % n] { *v } else { C64::new(0.0, 0.0) })
            .collect();
        Self { ncoils: self.ncoils, data, pattern: sub.clone(), scale: self.scale }
    }
}

fn is_pow2(n: usize) -> bool {
    n >= 2 && n.is_power_of_two()
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place orthonormal centered 2-D DFT of a row-major `ny x nz` buffer.
fn fft2c_in_place(data: &mut [C64], ny: usize, nz: usize, inverse: bool) {
    let (row_fft, col_fft) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            (p.plan_fft_inverse(nz), p.plan_fft_inverse(ny))
        } else {
            (p.plan_fft_forward(nz), p.plan_fft_forward(ny))
        }
    });
    for row in data.chunks_exact_mut(nz) {
        row.rotate_left(nz / 2);
        row_fft.process(row);
        row.rotate_left(nz / 2);
    }
    let mut col = vec![C64::new(0.0, 0.0); ny];
    for z in 0..nz {
        for y in 0..ny {
            col[(y + ny / 2) % ny] = data[y * nz + z];
        }
        col_fft.process(&mut col);
        for y in 0..ny {
            data[y * nz + z] = col[(y + ny / 2) % ny];
        }
    }
    let norm = 1.0 / ((ny * nz) as f64).sqrt();
    for v in data.iter_mut() {
        *v *= norm;
    }
}

fn check_fft_dims(ny: usize, nz: usize) -> Result<()> {
    if !is_pow2(ny) || !is_pow2(nz) {
        return Err(Error::dim(format!("FFT grid must be powers of two, got {ny}x{nz}")));
    }
    Ok(())
}

pub fn fft2_centered(img: &ComplexImage) -> Result<ComplexImage> {
    check_fft_dims(img.ny, img.nz)?;
    let mut data = img.data.clone();
    fft2c_in_place(&mut data, img.ny, img.nz, false);
    Ok(ComplexImage::from_raw(img.ny, img.nz, data))
}

pub fn ifft2_centered(img: &ComplexImage) -> Result<ComplexImage> {
    check_fft_dims(img.ny, img.nz)?;
    let mut data = img.data.clone();
    fft2c_in_place(&mut data, img.ny, img.nz, true);
    Ok(ComplexImage::from_raw(img.ny, img.nz, data))
}

/// `E_Omega`: coil weighting, centered FFT and masking, bundled for repeated use.
#[derive(Clone, Debug)]
pub struct EncodingOperator {
    coils: Arc<CoilSensitivities>,
    pattern: SamplingPattern,
}

impl EncodingOperator {
    pub fn new(coils: Arc<CoilSensitivities>, pattern: SamplingPattern) -> Result<Self> {
        pattern.check_shape(coils.ny, coils.nz)?;
        check_fft_dims(coils.ny, coils.nz)?;
        Ok(Self { coils, pattern })
    }

    pub fn coils(&self) -> &CoilSensitivities {
        &self.coils
    }

    pub fn pattern(&self) -> &SamplingPattern {
        &self.pattern
    }

    pub fn ncoils(&self) -> usize {
        self.coils.ncoils
    }

    pub fn shape(&self) -> (usize, usize) {
        self.pattern.shape()
    }

    fn check_image(&self, x: &ComplexImage) -> Result<()> {
        if x.shape() != self.shape() {
            return Err(Error::dim(format!(
                "image is {}x{}, operator expects {}x{}",
                x.ny,
                x.nz,
                self.pattern.ny,
                self.pattern.nz
            )));
        }
        Ok(())
    }

    /// Masked multi-coil k-space, `ncoils * ny * nz` values.
    pub fn forward(&self, x: &ComplexImage) -> Result<Vec<C64>> {
        self.check_image(x)?;
        let (ny, nz) = self.shape();
        let n = ny * nz;
        let mut out = vec![C64::new(0.0, 0.0); self.ncoils() * n];
        for (c, buf) in out.chunks_exact_mut(n).enumerate() {
            for ((o, s), v) in buf.iter_mut().zip(self.coils.coil(c)).zip(&x.data) {
                *o = s * v;
            }
            fft2c_in_place(buf, ny, nz, false);
            for (o, &m) in buf.iter_mut().zip(&self.pattern.mask) {
                if !m {
                    *o = C64::new(0.0, 0.0);
                }
            }
        }
        Ok(out)
    }

    /// `E_Omega^H` applied to `ncoils * ny * nz` k-space values.
    pub fn adjoint(&self, y: &[C64]) -> Result<ComplexImage> {
        let (ny, nz) = self.shape();
        let n = ny * nz;
        if y.len() != self.ncoils() * n {
            return Err(Error::dim(format!(
                "k-space has {} entries, operator expects {}",
                y.len(),
                self.ncoils() * n
            )));
        }
        let mut acc = vec![C64::new(0.0, 0.0); n];
        let mut buf = vec![C64::new(0.0, 0.0); n];
        for c in 0..self.ncoils() {
            for ((b, v), &m) in buf.iter_mut().zip(&y[c * n..(c + 1) * n]).zip(&self.pattern.mask) {
                *b = if m { *v } else { C64::new(0.0, 0.0) };
            }
            fft2c_in_place(&mut buf, ny, nz, true);
            for ((a, s), b) in acc.iter_mut().zip(self.coils.coil(c)).zip(&buf) {
                *a += s.conj() * b;
            }
        }
        Ok(ComplexImage::from_raw(ny, nz, acc))
    }

    /// `E^H E x`
    pub fn normal(&self, x: &ComplexImage) -> Result<ComplexImage> {
        self.check_image(x)?;
        let (ny, nz) = self.shape();
        let n = ny * nz;
        let mut acc = vec![C64::new(0.0, 0.0); n];
        let mut buf = vec![C64::new(0.0, 0.0); n];
        for c in 0..self.ncoils() {
            let coil = self.coils.coil(c);
            for ((b, s), v) in buf.iter_mut().zip(coil).zip(&x.data) {
                *b = s * v;
            }
            fft2c_in_place(&mut buf, ny, nz, false);
            for (b, &m) in buf.iter_mut().zip(&self.pattern.mask) {
                if !m {
                    *b = C64::new(0.0, 0.0);
                }
            }
            fft2c_in_place(&mut buf, ny, nz, true);
            for ((a, s), b) in acc.iter_mut().zip(coil).zip(&buf) {
                *a += s.conj() * b;
            }
        }
        Ok(ComplexImage::from_raw(ny, nz, acc))
    }
}

pub fn apply_encoding(
    x: &ComplexImage,
    coils: &CoilSensitivities,
    pattern: &SamplingPattern,
) -> Result<KSpaceSample> {
    if coils.shape() != x.shape() {
        return Err(Error::dim("coil maps and image differ in shape"));
    }
    let op = EncodingOperator::new(Arc::new(coils.clone()), pattern.clone())?;
    let data = op.forward(x)?;
    Ok(KSpaceSample { ncoils: coils.ncoils, data, pattern: pattern.clone(), scale: 1.0 })
}

pub fn apply_adjoint(y: &KSpaceSample, coils: &CoilSensitivities) -> Result<ComplexImage> {
    if y.ncoils != coils.ncoils || y.shape() != coils.shape() {
        return Err(Error::dim(format!(
            "k-space is {} coils {:?}, maps are {} coils {:?}",
            y.ncoils,
            y.shape(),
            coils.ncoils,
            coils.shape()
        )));
    }
    let op = EncodingOperator::new(Arc::new(coils.clone()), y.pattern.clone())?;
    op.adjoint(&y.data)
}

/// Zero-filled reconstruction `E_Omega^H y`, the network input `x^(0)`.
pub fn zero_filled_recon(y: &KSpaceSample, coils: &CoilSensitivities) -> Result<ComplexImage> {
    apply_adjoint(y, coils)
}
