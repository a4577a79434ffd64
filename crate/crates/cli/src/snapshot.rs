//! Snapshot artifacts: an SVG assignment plot for 2-D data and a PGM grid
//! of samples beside their closest reals for images.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rand_chacha::ChaCha8Rng;

use otassign::assign::{batch_assign, RealSet};
use otassign::trainer::generate;
use otassign::{Dataset, Tensor, TrainState};

const SVG_SIZE: f64 = 800.0;
const GRID: usize = 8;
const GAP: usize = 2;

pub fn supported(ds: &Dataset) -> bool {
    ds.image_shape.is_some() || ds.dim() == 2
}

pub fn extension(ds: &Dataset) -> &'static str {
    if ds.image_shape.is_some() {
        "pgm"
    } else {
        "svg"
    }
}

pub fn write(state: &TrainState, ds: &Dataset, path: &Path, n: usize, rng: &mut ChaCha8Rng) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let bytes = match ds.image_shape {
        Some(shape) => image_grid(state, ds, shape, rng)?,
        None if ds.dim() == 2 => assignment_svg(state, ds, n, rng)?.into_bytes(),
        None => bail!("cannot draw {}-dimensional data", ds.dim()),
    };
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn draw(state: &TrainState, n: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let z = state.sampler.sample_with(n, rng);
    Ok(generate(&state.generator, &z, state.config.train.chunk)?)
}

/// Reals (grey), generated points (red) and one segment from every
/// generated point to the real the assigner sends it to.
pub fn assignment_svg(state: &TrainState, ds: &Dataset, n: usize, rng: &mut ChaCha8Rng) -> Result<String> {
    let xs = draw(state, n, rng)?;
    let mut reals = RealSet::new(ds.points.clone())?;
    reals.refresh_psi_cache(&state.assigner)?;
    let batch = batch_assign(&xs, &reals, &state.costs.assigner)?;

    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in ds.points.row_iter().chain(xs.row_iter()) {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12) * 1.1;
    let centre = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let px = |p: &[f64]| {
        (
            (p[0] - centre[0]) / span * SVG_SIZE + SVG_SIZE / 2.0,
            SVG_SIZE / 2.0 - (p[1] - centre[1]) / span * SVG_SIZE,
        )
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_SIZE}" height="{SVG_SIZE}" viewBox="0 0 {SVG_SIZE} {SVG_SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<g stroke="steelblue" stroke-width="0.5" stroke-opacity="0.6">"#);
    for (x, &j) in xs.row_iter().zip(&batch.indices) {
        let (a, b) = (px(x), px(ds.points.row(j)));
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>"#, a.0, a.1, b.0, b.1);
    }
    let _ = writeln!(s, "</g>\n<g fill=\"grey\">");
    for y in ds.points.row_iter() {
        let (cx, cy) = px(y);
        let _ = writeln!(s, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="1.5"/>"#);
    }
    let _ = writeln!(s, "</g>\n<g fill=\"crimson\">");
    for x in xs.row_iter() {
        let (cx, cy) = px(x);
        let _ = writeln!(s, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="2"/>"#);
    }
    let _ = writeln!(s, "</g>\n</svg>");
    Ok(s)
}

/// An 8×8 grid of (sample, closest real) tile pairs as a binary PGM. The
/// closest real is chosen by the configured assignment cost.
pub fn image_grid(
    state: &TrainState,
    ds: &Dataset,
    (h, w): (usize, usize),
    rng: &mut ChaCha8Rng,
) -> Result<Vec<u8>> {
    let xs = draw(state, GRID * GRID, rng)?;
    let nearest = batch_assign(&xs, &RealSet::new(ds.points.clone())?, &state.costs.assigner)?;
    let cols = 2 * GRID;
    let width = cols * w + (cols + 1) * GAP;
    let height = GRID * h + (GRID + 1) * GAP;
    let mut pixels = vec![255u8; width * height];
    let mut blit = |tile: &[f64], r: usize, c: usize| {
        let (top, left) = (GAP + r * (h + GAP), GAP + c * (w + GAP));
        for i in 0..h {
            for j in 0..w {
                pixels[(top + i) * width + left + j] = (tile[i * w + j].clamp(0.0, 1.0) * 255.0).round() as u8;
            }
        }
    };
    for (t, (x, &j)) in xs.row_iter().zip(&nearest.indices).enumerate() {
        let (r, c) = (t / GRID, 2 * (t % GRID));
        blit(x, r, c);
        blit(ds.points.row(j), r, c + 1);
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(&pixels);
    Ok(out)
}
