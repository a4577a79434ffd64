//! Structural similarity between greyscale images with values in `[0, 1]`.
//!
//! Local statistics use an 11×11 Gaussian window (σ = 1.5), evaluated at every
//! position where the window fits entirely inside the image, and the index is
//! the mean of the per-window scores. Filtering is done with separable passes.

use crate::error::{Error, Result};

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
/// Stabilizers for a unit data range.
pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;

/// Normalized 1-D Gaussian taps. The window shrinks to the smaller image side
/// for images narrower than [`WINDOW`].
pub fn gaussian_taps(size: usize) -> Vec<f64> {
    let center = (size as f64 - 1.0) / 2.0;
    let mut taps: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - center;
            (-d * d / (2.0 * SIGMA * SIGMA)).exp()
        })
        .collect();
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

pub fn window_size(height: usize, width: usize) -> usize {
    WINDOW.min(height).min(width)
}

fn check(x: &[f64], y: &[f64], shape: (usize, usize)) -> Result<()> {
    let n = shape.0 * shape.1;
    if n == 0 {
        return Err(Error::Empty("image"));
    }
    if x.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: x.len(),
        });
    }
    if y.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: y.len(),
        });
    }
    Ok(())
}

/// Valid-mode separable correlation of an `h×w` image with `taps ⊗ taps`.
fn filter_valid(img: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut horiz = vec![0.0; h * ow];
    for r in 0..h {
        let row = &img[r * w..(r + 1) * w];
        for c in 0..ow {
            horiz[r * ow + c] = taps.iter().zip(&row[c..c + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            let mut acc = 0.0;
            for (i, t) in taps.iter().enumerate() {
                acc += t * horiz[(r + i) * ow + c];
            }
            out[r * ow + c] = acc;
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: scatters an `oh×ow` map back onto `h×w`.
fn filter_adjoint(map: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut vert = vec![0.0; h * ow];
    for r in 0..oh {
        for c in 0..ow {
            let v = map[r * ow + c];
            for (i, t) in taps.iter().enumerate() {
                vert[(r + i) * ow + c] += t * v;
            }
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..ow {
            let v = vert[r * ow + c];
            for (j, t) in taps.iter().enumerate() {
                out[r * w + c + j] += t * v;
            }
        }
    }
    out
}

struct Moments {
    mx: Vec<f64>,
    my: Vec<f64>,
    mxx: Vec<f64>,
    myy: Vec<f64>,
    mxy: Vec<f64>,
}

fn moments(x: &[f64], y: &[f64], h: usize, w: usize, taps: &[f64]) -> Moments {
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    Moments {
        mx: filter_valid(x, h, w, taps),
        my: filter_valid(y, h, w, taps),
        mxx: filter_valid(&xx, h, w, taps),
        myy: filter_valid(&yy, h, w, taps),
        mxy: filter_valid(&xy, h, w, taps),
    }
}

/// Per-window score from raw filtered moments.
#[inline]
pub fn window_score(mx: f64, my: f64, mxx: f64, myy: f64, mxy: f64) -> f64 {
    let a1 = 2.0 * mx * my + C1;
    let a2 = 2.0 * (mxy - mx * my) + C2;
    let b1 = mx * mx + my * my + C1;
    let b2 = (mxx - mx * mx) + (myy - my * my) + C2;
    (a1 * a2) / (b1 * b2)
}

/// Mean SSIM of `x` against `y`, both `shape = (height, width)` row-major.
pub fn ssim(x: &[f64], y: &[f64], shape: (usize, usize)) -> Result<f64> {
    check(x, y, shape)?;
    let (h, w) = shape;
    let taps = gaussian_taps(window_size(h, w));
    let m = moments(x, y, h, w, &taps);
    let n = m.mx.len() as f64;
    let total: f64 = (0..m.mx.len())
        .map(|i| window_score(m.mx[i], m.my[i], m.mxx[i], m.myy[i], m.mxy[i]))
        .sum();
    Ok(total / n)
}

/// Mean SSIM and its gradient with respect to `x`.
pub fn ssim_with_grad(x: &[f64], y: &[f64], shape: (usize, usize)) -> Result<(f64, Vec<f64>)> {
    check(x, y, shape)?;
    let (h, w) = shape;
    let taps = gaussian_taps(window_size(h, w));
    let m = moments(x, y, h, w, &taps);
    let nwin = m.mx.len();
    let inv = 1.0 / nwin as f64;

    // dS/d(mx), dS/d(mxx), dS/d(mxy) per window, pre-divided by the window count.
    let mut d_mx = vec![0.0; nwin];
    let mut d_mxx = vec![0.0; nwin];
    let mut d_mxy = vec![0.0; nwin];
    let mut total = 0.0;
    for i in 0..nwin {
        let (mx, my) = (m.mx[i], m.my[i]);
        let a1 = 2.0 * mx * my + C1;
        let a2 = 2.0 * (m.mxy[i] - mx * my) + C2;
        let b1 = mx * mx + my * my + C1;
        let b2 = (m.mxx[i] - mx * mx) + (m.myy[i] - my * my) + C2;
        let den = b1 * b2;
        let s = a1 * a2 / den;
        total += s;
        d_mx[i] = inv * (2.0 * my * (a2 - a1) / den - 2.0 * mx * s * (1.0 / b1 - 1.0 / b2));
        d_mxx[i] = inv * (-s / b2);
        d_mxy[i] = inv * (2.0 * a1 / den);
    }
    let g_mx = filter_adjoint(&d_mx, h, w, &taps);
    let g_mxx = filter_adjoint(&d_mxx, h, w, &taps);
    let g_mxy = filter_adjoint(&d_mxy, h, w, &taps);
    let grad = (0..h * w)
        .map(|p| g_mx[p] + 2.0 * x[p] * g_mxx[p] + y[p] * g_mxy[p])
        .collect();
    Ok((total * inv, grad))
}
