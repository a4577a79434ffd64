mod common;

use common::*;
use otassign::costs::{psnr_cost, ssim_cost, unit_diameter_scale};
use otassign::ssim::{ssim, ssim_with_grad, C1, C2, SIGMA, WINDOW};
use otassign::{CostKind, CostSpec, Error};
use proptest::prelude::*;
use rand::Rng;

/// SSIM straight from the definition: a full 2-D Gaussian window evaluated
/// at every valid offset, with sample statistics computed per window.
fn naive_ssim(x: &[f64], y: &[f64], h: usize, w: usize) -> f64 {
    let k = WINDOW.min(h).min(w);
    let c = (k as f64 - 1.0) / 2.0;
    let mut g = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let (di, dj) = (i as f64 - c, j as f64 - c);
            g[i * k + j] = (-(di * di + dj * dj) / (2.0 * SIGMA * SIGMA)).exp();
        }
    }
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    let mut total = 0.0;
    let mut count = 0;
    for r in 0..=h - k {
        for q in 0..=w - k {
            let (mut mx, mut my) = (0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let p = (r + i) * w + q + j;
                    mx += g[i * k + j] * x[p];
                    my += g[i * k + j] * y[p];
                }
            }
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let p = (r + i) * w + q + j;
                    vx += g[i * k + j] * (x[p] - mx).powi(2);
                    vy += g[i * k + j] * (y[p] - my).powi(2);
                    cxy += g[i * k + j] * (x[p] - mx) * (y[p] - my);
                }
            }
            total += (2.0 * mx * my + C1) * (2.0 * cxy + C2)
                / ((mx * mx + my * my + C1) * (vx + vy + C2));
            count += 1;
        }
    }
    total / count as f64
}

fn image(r: &mut rand_chacha::ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(0.0..1.0)).collect()
}

#[test]
fn ssim_matches_direct_definition() {
    for (seed, (h, w)) in [(12, 12), (16, 13), (11, 11), (20, 15), (6, 9)].into_iter().enumerate() {
        let mut r = rng(seed as u64);
        let x = image(&mut r, h * w);
        let y: Vec<f64> = x.iter().map(|v| (v + r.random_range(-0.3..0.3)).clamp(0.0, 1.0)).collect();
        let fast = ssim(&x, &y, (h, w)).unwrap();
        let slow = naive_ssim(&x, &y, h, w);
        assert!((fast - slow).abs() < 1e-12, "{h}x{w}: {fast} vs {slow}");
    }
}

#[test]
fn ssim_of_identical_images_is_one() {
    let mut r = rng(1);
    for _ in 0..20 {
        let x = image(&mut r, 32 * 32);
        assert!((ssim(&x, &x, (32, 32)).unwrap() - 1.0).abs() < 1e-12);
        let spec = CostSpec::new(CostKind::SsimCost, 1.0, Some((32, 32))).unwrap();
        assert!(spec.cost(&x, &x).unwrap().abs() < 1e-12);
    }
}

#[test]
fn ssim_gradient_matches_finite_differences() {
    for seed in 0..10 {
        let mut r = rng(100 + seed);
        let (h, w) = (14, 12);
        let x = image(&mut r, h * w);
        let y = image(&mut r, h * w);
        let (_, g) = ssim_with_grad(&x, &y, (h, w)).unwrap();
        let fd = central_diff(&x, 1e-5, |p| ssim(p, &y, (h, w)).unwrap());
        let e = rel_err(&g, &fd, 1e-10);
        assert!(e < 1e-4, "seed {seed}: {e}");
    }
}

#[test]
fn every_cost_gradient_matches_finite_differences() {
    let shape = (12, 12);
    for kind in CostKind::ALL {
        for seed in 0..10 {
            let mut r = rng(200 + seed);
            let spec = CostSpec::new(kind, r.random_range(0.1..3.0), Some(shape)).unwrap();
            let x = image(&mut r, 144);
            let y = image(&mut r, 144);
            let g = spec.grad_x(&x, &y).unwrap();
            let fd = central_diff(&x, 1e-5, |p| spec.cost(p, &y).unwrap());
            let e = rel_err(&g, &fd, 1e-10);
            assert!(e < 1e-4, "{kind} seed {seed}: {e}");
        }
    }
}

#[test]
fn costs_are_symmetric_and_vanish_on_the_diagonal() {
    let mut r = rng(5);
    for kind in CostKind::ALL {
        let spec = CostSpec::new(kind, 1.0, Some((8, 8))).unwrap();
        assert!(spec.kind.is_symmetric());
        for _ in 0..20 {
            let x = image(&mut r, 64);
            let y = image(&mut r, 64);
            let (a, b) = (spec.cost(&x, &y).unwrap(), spec.cost(&y, &x).unwrap());
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{kind}");
            assert!(spec.cost(&x, &x).unwrap().abs() < 1e-12, "{kind}");
        }
    }
}

#[test]
fn psnr_and_mse_pick_the_same_nearest_image() {
    let mut r = rng(9);
    let spec = CostSpec::new(CostKind::PsnrCost, 1.0, None).unwrap();
    let mse = CostSpec::squared_euclidean();
    for _ in 0..100 {
        let query = image(&mut r, 64);
        let a = image(&mut r, 64);
        let b: Vec<f64> = query.iter().map(|v| (v + r.random_range(-0.5..0.5)).clamp(0.0, 1.0)).collect();
        let by_psnr = psnr_cost(&query, &a).unwrap() < psnr_cost(&query, &b).unwrap();
        let by_mse = mse.cost(&query, &a).unwrap() < mse.cost(&query, &b).unwrap();
        let by_spec = spec.cost(&query, &a).unwrap() < spec.cost(&query, &b).unwrap();
        assert_eq!(by_psnr, by_mse);
        assert_eq!(by_spec, by_mse);
    }
}

#[test]
fn psnr_reference_values() {
    let x = vec![0.0; 4];
    let y = vec![0.1; 4];
    assert!((psnr_cost(&x, &y).unwrap() + 20.0).abs() < 1e-12);
    assert!(matches!(psnr_cost(&x, &x), Err(Error::InfinitePsnr)));
}

#[test]
fn ssim_cost_of_black_and_white() {
    let black = vec![0.0; 121];
    let white = vec![1.0; 121];
    let c = ssim_cost(&black, &white, (11, 11)).unwrap();
    // only the luminance term differs: (C1)/(1 + C1)
    assert!((c - (1.0 - C1 / (1.0 + C1))).abs() < 1e-12);
}

#[test]
fn mnist_square_scale_is_one_over_1024() {
    let s = unit_diameter_scale(&CostSpec::squared_euclidean(), &vec![(0.0, 1.0); 1024]).unwrap();
    assert_eq!(s, 1.0 / 1024.0);
    let e = unit_diameter_scale(&CostSpec::euclidean(), &vec![(0.0, 1.0); 1024]).unwrap();
    assert_eq!(e, 1.0 / 32.0);
}

proptest! {
    #[test]
    fn scaled_costs_stay_within_unit_diameter(seed in any::<u64>()) {
        let mut r = rng(seed);
        let box_ = vec![(0.0, 1.0); 16];
        for kind in CostKind::ALL {
            let base = CostSpec::new(kind, 1.0, Some((4, 4))).unwrap();
            let spec = base.with_scale(unit_diameter_scale(&base, &box_).unwrap()).unwrap();
            let x = image(&mut r, 16);
            let y = image(&mut r, 16);
            let c = spec.cost(&x, &y).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&c), "{} {}", kind, c);
        }
    }
}
