//! Synthetic ellipse phantoms, analytic coil maps and noisy acquisitions.

use std::f64::consts::{PI, TAU};

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kspace::{apply_encoding, CoilSensitivities, ComplexImage, KSpaceSample, SamplingPattern, C64};
use crate::rng::child_rng;

/// Intensity, semi-axes, center and rotation (degrees) of the modified
/// Shepp-Logan ellipses, in `[-1, 1]` coordinates.
const SHEPP_LOGAN: [[f64; 6]; 10] = [
    [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
    [-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0],
    [-0.2, 0.11, 0.31, 0.22, 0.0, -18.0],
    [-0.2, 0.16, 0.41, -0.22, 0.0, 18.0],
    [0.1, 0.21, 0.25, 0.0, 0.35, 0.0],
    [0.1, 0.046, 0.046, 0.0, 0.1, 0.0],
    [0.1, 0.046, 0.046, 0.0, -0.1, 0.0],
    [0.1, 0.046, 0.023, -0.08, -0.605, 0.0],
    [0.1, 0.023, 0.023, 0.0, -0.606, 0.0],
    [0.1, 0.023, 0.046, 0.06, -0.605, 0.0],
];

const EXTRA_ELLIPSES: usize = 3;

#[derive(Clone, Copy, Debug)]
struct Ellipse {
    amp: f64,
    a: f64,
    b: f64,
    x0: f64,
    y0: f64,
    cos: f64,
    sin: f64,
}

impl Ellipse {
    fn new(amp: f64, a: f64, b: f64, x0: f64, y0: f64, deg: f64) -> Self {
        let t = deg.to_radians();
        Self { amp, a, b, x0, y0, cos: t.cos(), sin: t.sin() }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.x0, y - self.y0);
        let u = (dx * self.cos + dy * self.sin) / self.a;
        let v = (-dx * self.sin + dy * self.cos) / self.b;
        u * u + v * v <= 1.0
    }
}

/// Pixel center in `[-1, 1]`; `x` runs along columns, `y` upward along rows.
fn coords(n: usize, row: usize, col: usize) -> (f64, f64) {
    let h = n as f64 / 2.0;
    ((col as f64 + 0.5 - h) / h, (h - row as f64 - 0.5) / h)
}

fn check_phantom_size(n: usize) -> Result<()> {
    if n < 16 || !n.is_power_of_two() {
        return Err(Error::config(format!("phantom size must be a power of two >= 16, got {n}")));
    }
    Ok(())
}

fn ellipses(seed: u64) -> Vec<Ellipse> {
    let mut rng = child_rng(seed, 0x5048_414E);
    let mut out = Vec::with_capacity(SHEPP_LOGAN.len() + EXTRA_ELLIPSES);
    let outer_scale = rng.gen_range(0.92..1.0);
    for (i, e) in SHEPP_LOGAN.iter().enumerate() {
        let [amp, a, b, x0, y0, deg] = *e;
        if i < 2 {
            // Skull and brain keep their shape so the support stays nested.
            out.push(Ellipse::new(amp, a * outer_scale, b * outer_scale, x0, y0 * outer_scale, deg));
            continue;
        }
        let s = outer_scale * rng.gen_range(0.85..1.15);
        out.push(Ellipse::new(
            amp * rng.gen_range(0.7..1.3),
            a * s,
            b * s,
            (x0 + rng.gen_range(-0.03..0.03)) * outer_scale,
            (y0 + rng.gen_range(-0.03..0.03)) * outer_scale,
            deg + rng.gen_range(-10.0..10.0),
        ));
    }
    for _ in 0..EXTRA_ELLIPSES {
        let r = rng.gen_range(0.0..0.45) * outer_scale;
        let t = rng.gen_range(0.0..TAU);
        out.push(Ellipse::new(
            rng.gen_range(-0.15..0.25),
            rng.gen_range(0.03..0.12) * outer_scale,
            rng.gen_range(0.03..0.12) * outer_scale,
            r * t.cos() * 0.6,
            r * t.sin(),
            rng.gen_range(0.0..180.0),
        ));
    }
    out
}

/// Pixels inside the outer ellipse of the phantom with this seed.
pub fn phantom_support(n: usize, seed: u64) -> Result<Vec<bool>> {
    check_phantom_size(n)?;
    let outer = ellipses(seed)[0];
    Ok((0..n * n)
        .map(|i| {
            let (x, y) = coords(n, i / n, i % n);
            outer.contains(x, y)
        })
        .collect())
}

/// Seed-jittered modified Shepp-Logan phantom with a few extra small
/// ellipses and a smooth quadratic phase. Magnitudes lie in `[0, 1]` and are
/// exactly zero outside the outer ellipse.
pub fn make_phantom(n: usize, seed: u64) -> Result<ComplexImage> {
    check_phantom_size(n)?;
    let shapes = ellipses(seed);
    let mut rng = child_rng(seed, 0x5048_4153);
    let c: [f64; 6] = std::array::from_fn(|i| if i == 0 { rng.gen_range(-PI..PI) } else { rng.gen_range(-0.6..0.6) });
    let outer = shapes[0];
    let data = (0..n * n)
        .map(|i| {
            let (x, y) = coords(n, i / n, i % n);
            if !outer.contains(x, y) {
                return C64::new(0.0, 0.0);
            }
            let mag: f64 = shapes.iter().filter(|e| e.contains(x, y)).map(|e| e.amp).sum();
            let mag = mag.clamp(0.0, 1.0);
            let phase = c[0] + c[1] * x + c[2] * y + c[3] * x * y + c[4] * x * x + c[5] * y * y;
            C64::from_polar(mag, phase)
        })
        .collect();
    ComplexImage::new(n, n, data)
}

/// Gaussian-lobe coil maps centered just outside the field of view at
/// equiangular positions, each with a linear phase ramp. Maps are scaled so
/// that the largest sum of squares on the grid is 1. One coil gives the unit
/// map.
pub fn simulate_coils(n: usize, ncoils: usize) -> Result<CoilSensitivities> {
    if ncoils == 0 {
        return Err(Error::dim("at least one coil is required"));
    }
    if n < 2 {
        return Err(Error::dim("grid too small"));
    }
    if ncoils == 1 {
        return Ok(CoilSensitivities::unit(n, n));
    }
    const RADIUS: f64 = 1.2;
    const WIDTH: f64 = 0.9;
    const RAMP: f64 = 0.5 * PI;
    let mut maps = Vec::with_capacity(ncoils * n * n);
    for c in 0..ncoils {
        let t = TAU * c as f64 / ncoils as f64;
        let (cx, cy) = (RADIUS * t.cos(), RADIUS * t.sin());
        for i in 0..n * n {
            let (x, y) = coords(n, i / n, i % n);
            let d2 = (x - cx).powi(2) + (y - cy).powi(2);
            let mag = (-d2 / (2.0 * WIDTH * WIDTH)).exp();
            let phase = RAMP * (x * t.cos() + y * t.sin()) + t;
            maps.push(C64::from_polar(mag, phase));
        }
    }
    let coils = CoilSensitivities::new(ncoils, n, n, maps)?;
    let peak = coils.sum_of_squares().into_iter().fold(0.0, f64::max);
    let s = 1.0 / peak.sqrt();
    let maps = coils.maps().iter().map(|v| v * s).collect();
    CoilSensitivities::new(ncoils, n, n, maps)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self { sigma: 0.0, seed: 0 }
    }
}

/// `y = E_Omega x + mask * sigma (g1 + i g2) / sqrt(2)` with seeded
/// standard normals.
pub fn simulate_acquisition(
    img: &ComplexImage,
    coils: &CoilSensitivities,
    pattern: &SamplingPattern,
    noise: NoiseSpec,
) -> Result<KSpaceSample> {
    if !(noise.sigma >= 0.0 && noise.sigma.is_finite()) {
        return Err(Error::config(format!("noise sigma must be non-negative, got {}", noise.sigma)));
    }
    let clean = apply_encoding(img, coils, pattern)?;
    if noise.sigma == 0.0 {
        return Ok(clean);
    }
    let mut rng = child_rng(noise.seed, 0x4E4F_4953);
    let n = pattern.ny() * pattern.nz();
    let s = noise.sigma / 2f64.sqrt();
    let data = clean
        .data()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            // Draw for every grid point so the noise field does not depend on
            // the pattern.
            let g1: f64 = rng.sample(StandardNormal);
            let g2: f64 = rng.sample(StandardNormal);
            if pattern.mask()[i % n] {
                v + C64::new(s * g1, s * g2)
            } else {
                *v
            }
        })
        .collect();
    KSpaceSample::new(clean.ncoils(), data, pattern.clone(), 1.0)
}
