//! 3x3 "same" convolution with zero padding on `[c, h, w]` tensors.
//!
//! Weights are laid out `[cout, cin, 3, 3]`. The kernel is applied as a
//! cross-correlation, matching the usual deep-learning convention.

pub const KERNEL: usize = 3;

/// Valid output range for a shift of `d` in `{-1, 0, 1}` along an axis of length `n`.
#[inline]
fn span(n: usize, d: isize) -> (usize, usize) {
    let lo = if d < 0 { (-d) as usize } else { 0 };
    let hi = if d > 0 { n - d as usize } else { n };
    (lo, hi)
}

pub fn forward(x: &[f64], cin: usize, h: usize, w: usize, weight: &[f64], bias: &[f64], cout: usize) -> Vec<f64> {
    let plane = h * w;
    let mut out = vec![0.0; cout * plane];
    for co in 0..cout {
        let o = &mut out[co * plane..(co + 1) * plane];
        o.fill(bias[co]);
        for ci in 0..cin {
            let xin = &x[ci * plane..(ci + 1) * plane];
            for ky in 0..KERNEL {
                let dy = ky as isize - 1;
                let (ylo, yhi) = span(h, dy);
                for kx in 0..KERNEL {
                    let wv = weight[((co * cin + ci) * KERNEL + ky) * KERNEL + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let dx = kx as isize - 1;
                    let (xlo, xhi) = span(w, dx);
                    for y in ylo..yhi {
                        let sy = (y as isize + dy) as usize;
                        let orow = &mut o[y * w + xlo..y * w + xhi];
                        let sx = (xlo as isize + dx) as usize;
                        let irow = &xin[sy * w + sx..sy * w + sx + (xhi - xlo)];
                        for (a, b) in orow.iter_mut().zip(irow) {
                            *a += wv * b;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradient with respect to the input.
pub fn backward_input(gout: &[f64], cout: usize, h: usize, w: usize, weight: &[f64], cin: usize) -> Vec<f64> {
    let plane = h * w;
    let mut gx = vec![0.0; cin * plane];
    for co in 0..cout {
        let g = &gout[co * plane..(co + 1) * plane];
        for ci in 0..cin {
            let gi = &mut gx[ci * plane..(ci + 1) * plane];
            for ky in 0..KERNEL {
                let dy = ky as isize - 1;
                let (ylo, yhi) = span(h, dy);
                for kx in 0..KERNEL {
                    let wv = weight[((co * cin + ci) * KERNEL + ky) * KERNEL + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let dx = kx as isize - 1;
                    let (xlo, xhi) = span(w, dx);
                    for y in ylo..yhi {
                        let sy = (y as isize + dy) as usize;
                        let sx = (xlo as isize + dx) as usize;
                        let grow = &g[y * w + xlo..y * w + xhi];
                        let irow = &mut gi[sy * w + sx..sy * w + sx + (xhi - xlo)];
                        for (a, b) in irow.iter_mut().zip(grow) {
                            *a += wv * b;
                        }
                    }
                }
            }
        }
    }
    gx
}

/// Gradients with respect to weight and bias.
pub fn backward_params(
    gout: &[f64],
    x: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
) -> (Vec<f64>, Vec<f64>) {
    let plane = h * w;
    let mut gw = vec![0.0; cout * cin * KERNEL * KERNEL];
    let mut gb = vec![0.0; cout];
    for co in 0..cout {
        let g = &gout[co * plane..(co + 1) * plane];
        gb[co] = g.iter().sum();
        for ci in 0..cin {
            let xin = &x[ci * plane..(ci + 1) * plane];
            for ky in 0..KERNEL {
                let dy = ky as isize - 1;
                let (ylo, yhi) = span(h, dy);
                for kx in 0..KERNEL {
                    let dx = kx as isize - 1;
                    let (xlo, xhi) = span(w, dx);
                    let mut acc = 0.0;
                    for y in ylo..yhi {
                        let sy = (y as isize + dy) as usize;
                        let sx = (xlo as isize + dx) as usize;
                        let grow = &g[y * w + xlo..y * w + xhi];
                        let irow = &xin[sy * w + sx..sy * w + sx + (xhi - xlo)];
                        acc += grow.iter().zip(irow).map(|(a, b)| a * b).sum::<f64>();
                    }
                    gw[((co * cin + ci) * KERNEL + ky) * KERNEL + kx] = acc;
                }
            }
        }
    }
    (gw, gb)
}
