//! Exact discrete optimal transport and the evaluation metrics built on it.
//!
//! [`emd`] solves the transportation problem between two weighted point sets
//! with a network simplex and returns the plan together with a dual
//! certificate. Uniform measures are solved with integer supplies scaled by
//! `lcm(n, m)`, so flows are exact.

mod simplex;

use rayon::prelude::*;

use crate::assign::{batch_assign, RealSet};
use crate::costs::CostSpec;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use simplex::TransportSimplex;

/// Largest `n·m` the solver accepts by default. Covers 5000×5000 uniform
/// problems (and 20000×2000) with room to spare; each arc costs 9 bytes.
pub const DEFAULT_MAX_ARCS: usize = 50_000_000;

const WEIGHT_TOL: f64 = 1e-12;

/// Nonnegative weights summing to one on a finite point set.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    points: Tensor,
    weights: Vec<f64>,
    uniform: bool,
}

impl DiscreteMeasure {
    pub fn new(points: Tensor, weights: Vec<f64>) -> Result<Self> {
        if points.rows() != weights.len() {
            return Err(Error::Dimension {
                expected: points.rows(),
                got: weights.len(),
            });
        }
        if weights.is_empty() {
            return Err(Error::Empty("measure support"));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InfeasibleWeights("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InfeasibleWeights(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self {
            points,
            weights,
            uniform: false,
        })
    }

    /// Mass `1/n` on each of the `n` rows.
    pub fn uniform(points: Tensor) -> Result<Self> {
        let n = points.rows();
        if n == 0 {
            return Err(Error::Empty("measure support"));
        }
        Ok(Self {
            points,
            weights: vec![1.0 / n as f64; n],
            uniform: true,
        })
    }

    pub fn points(&self) -> &Tensor {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Optimal dual pair and the checks it was subjected to.
#[derive(Clone, Debug, PartialEq)]
pub struct DualCertificate {
    /// `f_i` on the source atoms.
    pub source_potential: Vec<f64>,
    /// `g_j` on the target atoms; `f_i + g_j ≤ c_ij` everywhere.
    pub target_potential: Vec<f64>,
    /// `Σ a_i f_i + Σ b_j g_j`.
    pub dual_value: f64,
    /// `max(0, max_ij (f_i + g_j − c_ij))`.
    pub max_dual_violation: f64,
    /// Largest `|c_ij − f_i − g_j|` over arcs carrying mass.
    pub max_slackness: f64,
}

/// A coupling stored as its nonzero entries (at most `n + m − 1` of them).
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    pub rows: usize,
    pub cols: usize,
    /// `(source, target, mass)`, sorted by `(source, target)`.
    pub entries: Vec<(usize, usize, f64)>,
    pub cost_value: f64,
    pub certificate: DualCertificate,
    /// Simplex pivots taken by the solver.
    pub pivots: usize,
}

impl TransportPlan {
    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.rows * self.cols];
        for &(i, j, v) in &self.entries {
            d[i * self.cols + j] += v;
        }
        d
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.rows];
        for &(i, _, v) in &self.entries {
            s[i] += v;
        }
        s
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for &(_, j, v) in &self.entries {
            s[j] += v;
        }
        s
    }

    /// Checks marginals, dual feasibility, complementary slackness and the
    /// duality gap against `tol`.
    pub fn verify(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure, tol: f64) -> Result<()> {
        let fail = |what: String| Err(Error::Invalid(format!("plan certificate: {what}")));
        for (i, (s, w)) in self.row_sums().iter().zip(mu.weights()).enumerate() {
            if (s - w).abs() > tol {
                return fail(format!("row {i} sums to {s}, expected {w}"));
            }
        }
        for (j, (s, w)) in self.col_sums().iter().zip(nu.weights()).enumerate() {
            if (s - w).abs() > tol {
                return fail(format!("column {j} sums to {s}, expected {w}"));
            }
        }
        if self.entries.iter().any(|&(_, _, v)| v < 0.0) {
            return fail("negative mass".into());
        }
        let c = &self.certificate;
        if c.max_dual_violation > tol {
            return fail(format!("dual infeasible by {}", c.max_dual_violation));
        }
        if c.max_slackness > tol {
            return fail(format!("complementary slackness off by {}", c.max_slackness));
        }
        let gap = (self.cost_value - c.dual_value).abs();
        if gap > tol * self.cost_value.abs().max(1.0) {
            return fail(format!("duality gap {gap}"));
        }
        Ok(())
    }
}

/// Options for [`emd_with`].
#[derive(Clone, Copy, Debug)]
pub struct EmdOptions {
    pub max_arcs: usize,
}

impl Default for EmdOptions {
    fn default() -> Self {
        Self {
            max_arcs: DEFAULT_MAX_ARCS,
        }
    }
}

/// Row-major `n × m` matrix of `c(x_i, y_j)`.
pub fn cost_matrix(xs: &Tensor, ys: &Tensor, spec: &CostSpec) -> Result<Vec<f64>> {
    if xs.cols() != ys.cols() {
        return Err(Error::Dimension {
            expected: xs.cols(),
            got: ys.cols(),
        });
    }
    spec.check_dim(xs.cols())?;
    let m = ys.rows();
    let mut out = vec![0.0; xs.rows() * m];
    if m == 0 {
        return Ok(out);
    }
    out.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        let x = xs.row(i);
        for (j, c) in row.iter_mut().enumerate() {
            *c = spec.eval(x, ys.row(j));
        }
    });
    Ok(out)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Exact optimal transport between `mu` and `nu` under `spec`.
pub fn emd(mu: &DiscreteMeasure, nu: &DiscreteMeasure, spec: &CostSpec) -> Result<TransportPlan> {
    emd_with(mu, nu, spec, EmdOptions::default())
}

pub fn emd_with(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    spec: &CostSpec,
    opts: EmdOptions,
) -> Result<TransportPlan> {
    let (n, m) = (mu.len(), nu.len());
    let arcs = n.checked_mul(m).unwrap_or(usize::MAX);
    if arcs > opts.max_arcs {
        return Err(Error::BudgetExceeded {
            arcs,
            limit: opts.max_arcs,
        });
    }
    let cost = cost_matrix(mu.points(), nu.points(), spec)?;
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("cost matrix".into()));
    }
    solve_cost_matrix(mu, nu, &cost)
}

/// Solves with a precomputed `n × m` cost matrix.
pub fn solve_cost_matrix(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &[f64],
) -> Result<TransportPlan> {
    let (n, m) = (mu.len(), nu.len());
    if cost.len() != n * m {
        return Err(Error::Dimension {
            expected: n * m,
            got: cost.len(),
        });
    }

    // Supplies: integers when both sides are uniform, raw weights otherwise.
    let (supply, unit) = if mu.uniform && nu.uniform {
        let l = (n as u64 / gcd(n as u64, m as u64)) * m as u64;
        if l > (1u64 << 52) {
            return Err(Error::BudgetExceeded {
                arcs: n * m,
                limit: 1 << 52,
            });
        }
        let a = (l / n as u64) as f64;
        let b = (l / m as u64) as f64;
        let mut s = vec![a; n];
        s.extend(std::iter::repeat_n(-b, m));
        (s, l as f64)
    } else {
        let mut s = mu.weights().to_vec();
        s.extend(nu.weights().iter().map(|w| -w));
        (s, 1.0)
    };

    let sol = TransportSimplex::new(n, m, cost, &supply).solve()?;
    let feas_tol = 1e-9 * unit;
    if sol.artificial_flow > feas_tol {
        return Err(Error::InfeasibleWeights(format!(
            "{} units left on artificial arcs",
            sol.artificial_flow / unit
        )));
    }

    let entries: Vec<(usize, usize, f64)> = sol
        .flows
        .iter()
        .map(|&(i, j, f)| (i, j, f / unit))
        .collect();
    let cost_value: f64 = entries.iter().map(|&(i, j, v)| v * cost[i * m + j]).sum();

    // f_i = −π_i, g_j = π_{n+j}, shifted so that min_j (c_0j − g_j) = f_0 is tight.
    let pi = &sol.potentials;
    let f: Vec<f64> = (0..n).map(|i| -pi[i]).collect();
    let g: Vec<f64> = (0..m).map(|j| pi[n + j]).collect();
    let dual_value: f64 = mu.weights().iter().zip(&f).map(|(a, v)| a * v).sum::<f64>()
        + nu.weights().iter().zip(&g).map(|(b, v)| b * v).sum::<f64>();
    let max_dual_violation = cost
        .par_chunks(m)
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .zip(&g)
                .map(|(c, gj)| f[i] + gj - c)
                .fold(0.0f64, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    let max_slackness = entries
        .iter()
        .map(|&(i, j, _)| (cost[i * m + j] - f[i] - g[j]).abs())
        .fold(0.0, f64::max);

    Ok(TransportPlan {
        rows: n,
        cols: m,
        entries,
        cost_value,
        certificate: DualCertificate {
            source_potential: f,
            target_potential: g,
            dual_value,
            max_dual_violation,
            max_slackness,
        },
        pivots: sol.pivots,
    })
}

/// Exact Wasserstein-1 between `k·M` generated samples and the `M` dataset
/// rows, both uniformly weighted.
pub fn w1_eval<F>(mut generate: F, dataset: &Tensor, oversample_k: usize) -> Result<f64>
where
    F: FnMut(usize) -> Result<Tensor>,
{
    w1_eval_with(&mut generate, dataset, oversample_k, EmdOptions::default())
}

pub fn w1_eval_with<F>(
    mut generate: F,
    dataset: &Tensor,
    oversample_k: usize,
    opts: EmdOptions,
) -> Result<f64>
where
    F: FnMut(usize) -> Result<Tensor>,
{
    if oversample_k == 0 {
        return Err(Error::Invalid("oversampling factor must be at least 1".into()));
    }
    let m = dataset.rows();
    if m == 0 {
        return Err(Error::Empty("dataset"));
    }
    let generated = generate(oversample_k * m)?;
    if generated.rows() != oversample_k * m {
        return Err(Error::Dimension {
            expected: oversample_k * m,
            got: generated.rows(),
        });
    }
    let mu = DiscreteMeasure::uniform(generated)?;
    let nu = DiscreteMeasure::uniform(dataset.clone())?;
    Ok(emd_with(&mu, &nu, &CostSpec::euclidean(), opts)?.cost_value)
}

/// Mean absolute deviation of the per-real counts from `k`:
/// `(1/M)·Σ_j √((counts_j − k)²)`.
pub fn assignment_variance(counts: &[usize], k: usize) -> Result<f64> {
    if counts.is_empty() {
        return Err(Error::Empty("counts"));
    }
    let total: usize = counts.iter().sum();
    if total != k * counts.len() {
        return Err(Error::Invalid(format!(
            "counts sum to {total}, expected k·M = {}",
            k * counts.len()
        )));
    }
    let dev: f64 = counts
        .iter()
        .map(|&c| ((c as f64 - k as f64).powi(2)).sqrt())
        .sum();
    Ok(dev / counts.len() as f64)
}

/// Counts of nearest reals (plain cost, no potential) for `generated`.
pub fn nearest_counts(generated: &Tensor, reals: &Tensor, spec: &CostSpec) -> Result<Vec<usize>> {
    let set = RealSet::new(reals.clone())?;
    Ok(batch_assign(generated, &set, spec)?.counts)
}

/// Draws `k·M` samples, assigns each to its nearest real under `spec` and
/// returns [`assignment_variance`].
pub fn assignment_variance_eval<F>(
    mut generate: F,
    reals: &Tensor,
    spec: &CostSpec,
    k: usize,
) -> Result<f64>
where
    F: FnMut(usize) -> Result<Tensor>,
{
    let generated = generate(k * reals.rows())?;
    let counts = nearest_counts(&generated, reals, spec)?;
    assignment_variance(&counts, k)
}
