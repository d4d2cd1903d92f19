//! NMSE, SSIM and median / interquartile summaries.

use crate::error::{Error, Result};
use crate::kspace::ComplexImage;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// `||ref - rec||^2 / ||ref||^2` on complex values.
pub fn nmse(reference: &ComplexImage, rec: &ComplexImage) -> Result<f64> {
    if reference.shape() != rec.shape() {
        return Err(Error::dim(format!("nmse shapes differ: {:?} vs {:?}", reference.shape(), rec.shape())));
    }
    let den: f64 = reference.data().iter().map(|v| v.norm_sqr()).sum();
    if den == 0.0 {
        return Err(Error::Metric("nmse reference has zero norm".into()));
    }
    let num: f64 = reference.data().iter().zip(rec.data()).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok(num / den)
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - half).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    let g: Vec<f64> = g.iter().map(|v| v / s).collect();
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for a in &g {
        for b in &g {
            w.push(a * b);
        }
    }
    w
}

/// Mean local SSIM of two `ny x nz` magnitude images over every position
/// where the 11x11 window lies fully inside the image. The dynamic range
/// is `max(ref)`.
pub fn ssim(reference: &[f64], rec: &[f64], ny: usize, nz: usize) -> Result<f64> {
    if reference.len() != ny * nz || rec.len() != ny * nz {
        return Err(Error::dim("ssim inputs do not match the stated shape"));
    }
    if ny < SSIM_WINDOW || nz < SSIM_WINDOW {
        return Err(Error::dim(format!("ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels")));
    }
    if reference.iter().chain(rec).any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Metric("ssim inputs must be finite non-negative magnitudes".into()));
    }
    let range = reference.iter().cloned().fold(0.0, f64::max);
    if range == 0.0 {
        return Err(Error::Metric("ssim reference is identically zero".into()));
    }
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let w = gaussian_window();
    let mut total = 0.0;
    let mut count = 0usize;
    for y0 in 0..=ny - SSIM_WINDOW {
        for z0 in 0..=nz - SSIM_WINDOW {
            let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for dy in 0..SSIM_WINDOW {
                let row = (y0 + dy) * nz + z0;
                for dz in 0..SSIM_WINDOW {
                    let wt = w[dy * SSIM_WINDOW + dz];
                    let (a, b) = (reference[row + dz], rec[row + dz]);
                    mx += wt * a;
                    my += wt * b;
                    xx += wt * a * a;
                    yy += wt * b * b;
                    xy += wt * a * b;
                }
            }
            let vx = xx - mx * mx;
            let vy = yy - my * my;
            let cov = xy - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// SSIM of the magnitudes of two complex images.
pub fn ssim_images(reference: &ComplexImage, rec: &ComplexImage) -> Result<f64> {
    if reference.shape() != rec.shape() {
        return Err(Error::dim("ssim shapes differ"));
    }
    let (ny, nz) = reference.shape();
    ssim(&reference.magnitude(), &rec.magnitude(), ny, nz)
}

/// Linearly interpolated quantile of unsorted data, `q` in `[0, 1]`.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Metric("quantile of an empty list".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Metric("quantile input contains NaN".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub mean: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        Ok(Self {
            median: quantile(values, 0.5)?,
            q25: quantile(values, 0.25)?,
            q75: quantile(values, 0.75)?,
            mean: values.iter().sum::<f64>() / values.len() as f64,
        })
    }
}

/// Per-slice metrics of one method on a test set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub nmse: Vec<f64>,
    pub ssim: Vec<f64>,
}

impl MetricReport {
    pub fn push(&mut self, reference: &ComplexImage, rec: &ComplexImage) -> Result<()> {
        let n = nmse(reference, rec)?;
        let s = ssim_images(reference, rec)?;
        self.nmse.push(n);
        self.ssim.push(s);
        Ok(())
    }

    pub fn nmse_summary(&self) -> Result<Summary> {
        Summary::of(&self.nmse)
    }

    pub fn ssim_summary(&self) -> Result<Summary> {
        Summary::of(&self.ssim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kspace::C64;
    use rand::Rng as _;

    fn random_image(n: usize, seed: u64) -> ComplexImage {
        let mut rng = crate::rng::rng_from_seed(seed);
        let data = (0..n * n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        ComplexImage::new(n, n, data).unwrap()
    }

    fn random_mag(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = crate::rng::rng_from_seed(seed);
        (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()
    }

    #[test]
    fn nmse_basic_values() {
        let x = random_image(8, 1);
        assert_eq!(nmse(&x, &x).unwrap(), 0.0);
        assert_eq!(nmse(&x, &ComplexImage::zeros(8, 8)).unwrap(), 1.0);
        assert!(matches!(nmse(&ComplexImage::zeros(8, 8), &x), Err(Error::Metric(_))));
    }

    #[test]
    fn nmse_matches_scalar_loop() {
        let (a, b) = (random_image(8, 2), random_image(8, 3));
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..64 {
            let d = a.data()[i] - b.data()[i];
            num += d.re * d.re + d.im * d.im;
            den += a.data()[i].re.powi(2) + a.data()[i].im.powi(2);
        }
        assert!((nmse(&a, &b).unwrap() - num / den).abs() < 1e-12);
    }

    #[test]
    fn nmse_scale_invariant() {
        let (a, b) = (random_image(8, 4), random_image(8, 5));
        for alpha in [-3.0, 1e-3, 7.5] {
            let s = nmse(&a.scaled(alpha), &b.scaled(alpha)).unwrap();
            assert!((s - nmse(&a, &b).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn ssim_identity_is_one() {
        let a = random_mag(24 * 20, 6);
        assert_eq!(ssim(&a, &a, 24, 20).unwrap(), 1.0);
    }

    /// Per-window reference written independently: explicit 2-D Gaussian,
    /// sample statistics gathered into vectors first.
    fn ssim_oracle(a: &[f64], b: &[f64], ny: usize, nz: usize) -> f64 {
        let mut kern = [[0.0f64; 11]; 11];
        let mut s = 0.0;
        for (i, row) in kern.iter_mut().enumerate() {
            for (j, k) in row.iter_mut().enumerate() {
                let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
                *k = (-(di * di + dj * dj) / 4.5).exp();
                s += *k;
            }
        }
        let l = a.iter().cloned().fold(f64::MIN, f64::max);
        let (c1, c2) = ((0.01 * l).powi(2), (0.03 * l).powi(2));
        let mut vals = Vec::new();
        for y in 0..=ny - 11 {
            for z in 0..=nz - 11 {
                let mut px = Vec::new();
                for i in 0..11 {
                    for j in 0..11 {
                        let idx = (y + i) * nz + z + j;
                        px.push((kern[i][j] / s, a[idx], b[idx]));
                    }
                }
                let mu_a: f64 = px.iter().map(|p| p.0 * p.1).sum();
                let mu_b: f64 = px.iter().map(|p| p.0 * p.2).sum();
                let var_a: f64 = px.iter().map(|p| p.0 * (p.1 - mu_a).powi(2)).sum();
                let var_b: f64 = px.iter().map(|p| p.0 * (p.2 - mu_b).powi(2)).sum();
                let cov: f64 = px.iter().map(|p| p.0 * (p.1 - mu_a) * (p.2 - mu_b)).sum();
                let lum = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1);
                let cs = (2.0 * cov + c2) / (var_a + var_b + c2);
                vals.push(lum * cs);
            }
        }
        vals.iter().sum::<f64>() / vals.len() as f64
    }

    #[test]
    fn ssim_contrast_change_matches_oracle() {
        let (ny, nz) = (16, 18);
        let a = random_mag(ny * nz, 7);
        let b: Vec<f64> = a.iter().map(|v| 0.5 * v).collect();
        let s = ssim(&a, &b, ny, nz).unwrap();
        assert!(s < 1.0);
        assert!((s - ssim_oracle(&a, &b, ny, nz)).abs() < 1e-12);
        let c = random_mag(ny * nz, 8);
        assert!((ssim(&a, &c, ny, nz).unwrap() - ssim_oracle(&a, &c, ny, nz)).abs() < 1e-12);
    }

    #[test]
    fn ssim_bounded_on_random_pairs() {
        for seed in 0..100 {
            let a = random_mag(16 * 16, 100 + seed);
            let b = random_mag(16 * 16, 300 + seed);
            let s = ssim(&a, &b, 16, 16).unwrap();
            assert!((-1.0..=1.0).contains(&s), "{s}");
        }
    }

    #[test]
    fn ssim_scale_invariant() {
        let a = random_mag(16 * 16, 9);
        let b = random_mag(16 * 16, 10);
        let base = ssim(&a, &b, 16, 16).unwrap();
        for alpha in [0.01, 3.0, 250.0] {
            let sa: Vec<f64> = a.iter().map(|v| v * alpha).collect();
            let sb: Vec<f64> = b.iter().map(|v| v * alpha).collect();
            assert!((ssim(&sa, &sb, 16, 16).unwrap() - base).abs() < 1e-12);
        }
    }

    #[test]
    fn ssim_degenerate_inputs() {
        let z = vec![0.0; 256];
        assert!(matches!(ssim(&z, &random_mag(256, 11), 16, 16), Err(Error::Metric(_))));
        assert!(ssim(&random_mag(100, 12), &random_mag(100, 13), 10, 10).is_err());
    }

    fn sorted_oracle(v: &[f64], q: f64) -> f64 {
        let mut s = v.to_vec();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let h = (s.len() - 1) as f64 * q;
        let i = h as usize;
        if i + 1 < s.len() {
            s[i] * (1.0 - (h - i as f64)) + s[i + 1] * (h - i as f64)
        } else {
            s[i]
        }
    }

    #[test]
    fn quantiles_on_odd_and_even_counts() {
        let odd = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(quantile(&odd, 0.5).unwrap(), 3.0);
        assert_eq!(quantile(&odd, 0.25).unwrap(), 2.0);
        assert_eq!(quantile(&odd, 0.75).unwrap(), 4.0);
        let even = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&even, 0.5).unwrap(), 2.5);
        assert_eq!(quantile(&even, 0.25).unwrap(), 1.75);
        assert_eq!(quantile(&even, 0.75).unwrap(), 3.25);
        for n in 1..12 {
            let v = random_mag(n, 20 + n as u64);
            for q in [0.25, 0.5, 0.75] {
                assert!((quantile(&v, q).unwrap() - sorted_oracle(&v, q)).abs() < 1e-15);
            }
            let s = Summary::of(&v).unwrap();
            assert!(s.q25 <= s.median && s.median <= s.q75);
        }
    }

    #[test]
    fn report_collects_both_metrics() {
        let a = random_image(16, 14);
        let mut r = MetricReport::default();
        r.push(&a, &a).unwrap();
        r.push(&a, &a.scaled(0.5)).unwrap();
        assert_eq!(r.nmse, vec![0.0, 0.25]);
        assert_eq!(r.ssim[0], 1.0);
        assert!(r.ssim[1] < 1.0);
    }
}
