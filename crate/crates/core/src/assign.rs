//! c-transform assignment of generated points to real points.
//!
//! The potential `ψ` lives on the real points only. For a generated point
//! `x` the assigned real is `argmin_j { c(x, y_j) + ψ(y_j) }` and the attained
//! minimum is the c-transform `ψᶜ(x)`. Training the potential uses the
//! *assignment cost*
//!
//! ```text
//! Σ_j (counts_j / N − 1/M) · ψ(y_j)
//! ```
//!
//! whose gradient equals the gradient of the empirical dual
//! `mean_i ψᶜ(x_i) − mean_j ψ(y_j)` as long as the assignments stay put under
//! small weight changes, which holds almost surely.
//!
//! Ties are broken towards the lowest real index.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::costs::CostSpec;
use crate::error::{Error, Result};
use crate::net::{DenseNet, ForwardTrace, Gradients};
use crate::tensor::Tensor;

/// The support of the target measure plus a cache of `ψ` at each point.
#[derive(Clone, Debug)]
pub struct RealSet {
    points: Tensor,
    psi: Vec<f64>,
    /// Stamp of the assigner the cache was computed from; `None` for
    /// tabulated potentials.
    psi_stamp: Option<u64>,
    cache_version: u64,
}

impl RealSet {
    /// Real points with `ψ ≡ 0`.
    pub fn new(points: Tensor) -> Result<Self> {
        let m = points.rows();
        Self::with_potential(points, vec![0.0; m])
    }

    /// Real points with explicitly tabulated potential values.
    pub fn with_potential(points: Tensor, psi: Vec<f64>) -> Result<Self> {
        if points.rows() == 0 {
            return Err(Error::Empty("real set"));
        }
        if points.shape().len() < 2 {
            return Err(Error::Shape(format!(
                "real points must be a batch of rows, got shape {:?}",
                points.shape()
            )));
        }
        let mut set = Self {
            points,
            psi: Vec::new(),
            psi_stamp: None,
            cache_version: 0,
        };
        set.set_potential(psi)?;
        Ok(set)
    }

    pub fn points(&self) -> &Tensor {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    pub fn cache_version(&self) -> u64 {
        self.cache_version
    }

    pub fn is_fresh_for(&self, assigner: &DenseNet) -> bool {
        self.psi_stamp == Some(assigner.stamp())
    }

    pub fn set_potential(&mut self, psi: Vec<f64>) -> Result<()> {
        if psi.len() != self.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                got: psi.len(),
            });
        }
        if psi.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("potential values".into()));
        }
        self.psi = psi;
        self.psi_stamp = None;
        self.cache_version += 1;
        Ok(())
    }

    /// Recomputes `ψ_w(y_j)` for every real point.
    pub fn refresh_psi_cache(&mut self, assigner: &DenseNet) -> Result<()> {
        let psi = evaluate_potential(assigner, &self.points)?;
        self.store_psi(assigner, psi)
    }

    /// As [`Self::refresh_psi_cache`], keeping the forward trace for
    /// [`assigner_gradient_traced`].
    pub fn refresh_psi_cache_traced(&mut self, assigner: &DenseNet) -> Result<ForwardTrace> {
        check_scalar(assigner)?;
        let trace = assigner.forward_trace(&self.points)?;
        self.store_psi(assigner, trace.output().to_vec())?;
        Ok(trace)
    }

    fn store_psi(&mut self, assigner: &DenseNet, psi: Vec<f64>) -> Result<()> {
        if psi.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("assigner output".into()));
        }
        self.psi = psi;
        self.psi_stamp = Some(assigner.stamp());
        self.cache_version += 1;
        Ok(())
    }

    fn check_points(&self, xs: &Tensor, spec: &CostSpec) -> Result<()> {
        if xs.rows() > 0 && xs.cols() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: xs.cols(),
            });
        }
        spec.check_dim(self.dim())
    }

    /// Best and second-best `c(x, y_j) + ψ_j`. Lowest index wins ties.
    fn scan(&self, x: &[f64], spec: &CostSpec) -> Scan {
        let mut best = Scan {
            index: 0,
            value: f64::INFINITY,
            runner_up: f64::INFINITY,
        };
        for (j, (y, &p)) in self.points.row_iter().zip(&self.psi).enumerate() {
            let v = spec.eval(x, y) + p;
            if v < best.value {
                best.runner_up = best.value;
                best.value = v;
                best.index = j;
            } else if v < best.runner_up {
                best.runner_up = v;
            }
        }
        best
    }
}

/// Evaluates a scalar-output network on each row.
pub fn evaluate_potential(assigner: &DenseNet, points: &Tensor) -> Result<Vec<f64>> {
    check_scalar(assigner)?;
    Ok(assigner.forward(points)?.into_data())
}

fn check_scalar(assigner: &DenseNet) -> Result<()> {
    if assigner.output_dim() != 1 {
        return Err(Error::Dimension {
            expected: 1,
            got: assigner.output_dim(),
        });
    }
    Ok(())
}

/// Free-function form of [`RealSet::refresh_psi_cache`].
pub fn refresh_psi_cache(assigner: &DenseNet, mut reals: RealSet) -> Result<RealSet> {
    reals.refresh_psi_cache(assigner)?;
    Ok(reals)
}

#[derive(Clone, Copy, Debug)]
struct Scan {
    index: usize,
    value: f64,
    runner_up: f64,
}

/// `(argmin_j {c(x, y_j) + ψ_j}, min_j {c(x, y_j) + ψ_j})`.
pub fn c_transform_assign(x: &[f64], reals: &RealSet, spec: &CostSpec) -> Result<(usize, f64)> {
    if x.len() != reals.dim() {
        return Err(Error::Dimension {
            expected: reals.dim(),
            got: x.len(),
        });
    }
    spec.check_dim(x.len())?;
    let s = reals.scan(x, spec);
    Ok((s.index, s.value))
}

/// Assignments for a batch of generated points.
#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentBatch {
    pub indices: Vec<usize>,
    /// `ψᶜ(x_i)`, the attained minimum.
    pub values: Vec<f64>,
    /// Number of generated points assigned to each real.
    pub counts: Vec<usize>,
}

impl AssignmentBatch {
    pub fn from_parts(indices: Vec<usize>, values: Vec<f64>, reals: usize) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::Dimension {
                expected: indices.len(),
                got: values.len(),
            });
        }
        let mut counts = vec![0usize; reals];
        for &i in &indices {
            if i >= reals {
                return Err(Error::Invalid(format!(
                    "assigned index {i} out of range for {reals} reals"
                )));
            }
            counts[i] += 1;
        }
        Ok(Self {
            indices,
            values,
            counts,
        })
    }

    /// Number of generated points.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Number of real points.
    pub fn reals(&self) -> usize {
        self.counts.len()
    }

    /// Whether every real received exactly `N / M` points.
    pub fn is_balanced(&self) -> bool {
        let (n, m) = (self.len(), self.reals());
        self.counts.iter().all(|&c| c * m == n)
    }

    /// `(1/M − counts_j/N)` per real, computed exactly from integers so that
    /// balanced counts give exact zeros.
    pub fn loss_coefficients(&self) -> Result<Vec<f64>> {
        let n = self.len();
        if n == 0 {
            return Err(Error::Empty("assignment batch"));
        }
        let m = self.reals();
        let denom = (n as f64) * (m as f64);
        Ok(self
            .counts
            .iter()
            .map(|&c| (n as i128 - (c as i128) * (m as i128)) as f64 / denom)
            .collect())
    }
}

/// Assigns every row of `xs`. Work is spread over threads; the result does
/// not depend on the schedule.
pub fn batch_assign(xs: &Tensor, reals: &RealSet, spec: &CostSpec) -> Result<AssignmentBatch> {
    reals.check_points(xs, spec)?;
    let n = xs.rows();
    let d = reals.dim().max(1);
    let scans: Vec<Scan> = if n == 0 {
        Vec::new()
    } else {
        xs.data()
            .par_chunks(d)
            .take(n)
            .map(|x| reals.scan(x, spec))
            .collect()
    };
    let (indices, values) = scans.iter().map(|s| (s.index, s.value)).unzip();
    AssignmentBatch::from_parts(indices, values, reals.len())
}

/// Negated assignment cost, `−Σ_j (counts_j/N − 1/M)·ψ_j`.
///
/// Minimizing this raises `ψ` on over-assigned reals and lowers it on
/// under-assigned ones, which ascends the dual objective.
pub fn assigner_loss(batch: &AssignmentBatch, psi_at_reals: &[f64]) -> Result<f64> {
    if psi_at_reals.len() != batch.reals() {
        return Err(Error::Dimension {
            expected: batch.reals(),
            got: psi_at_reals.len(),
        });
    }
    let coef = batch.loss_coefficients()?;
    Ok(coef.iter().zip(psi_at_reals).map(|(c, p)| c * p).sum())
}

/// Gradient of [`assigner_loss`] in the assigner weights with the
/// assignments held fixed: `Σ_j (1/M − counts_j/N)·∇_w ψ_w(y_j)`.
pub fn assigner_gradient(
    batch: &AssignmentBatch,
    assigner: &DenseNet,
    reals: &RealSet,
) -> Result<Gradients> {
    match gradient_upstream(batch, assigner, reals)? {
        None => Ok(Gradients::zeros_like(assigner)),
        Some(up) => assigner.backward_params(reals.points(), &up),
    }
}

/// [`assigner_gradient`] reusing the trace returned by
/// [`RealSet::refresh_psi_cache_traced`] for the current assigner.
pub fn assigner_gradient_traced(
    batch: &AssignmentBatch,
    assigner: &DenseNet,
    reals: &RealSet,
    trace: &ForwardTrace,
) -> Result<Gradients> {
    if trace.rows != reals.len() {
        return Err(Error::Dimension {
            expected: reals.len(),
            got: trace.rows,
        });
    }
    match gradient_upstream(batch, assigner, reals)? {
        None => Ok(Gradients::zeros_like(assigner)),
        Some(up) => assigner.backward_params_traced(trace, &up),
    }
}

/// Upstream gradient `(1/M − counts_j/N)_j`, or `None` when it is all zero.
fn gradient_upstream(batch: &AssignmentBatch, assigner: &DenseNet, reals: &RealSet) -> Result<Option<Tensor>> {
    if !reals.is_fresh_for(assigner) {
        return Err(Error::StaleCache {
            cached: reals.psi_stamp,
            current: assigner.stamp(),
        });
    }
    if batch.reals() != reals.len() {
        return Err(Error::Dimension {
            expected: reals.len(),
            got: batch.reals(),
        });
    }
    let coef = batch.loss_coefficients()?;
    if coef.iter().all(|&c| c == 0.0) {
        return Ok(None);
    }
    Ok(Some(Tensor::from_parts_unchecked(vec![coef.len(), 1], coef)))
}

/// Monte-Carlo estimate of `∫ψᶜ dμ − ∫ψ dν`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualEstimate {
    pub value: f64,
    pub n_samples: usize,
}

impl DualEstimate {
    pub fn from_batch(batch: &AssignmentBatch, psi_at_reals: &[f64]) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::Empty("generated points"));
        }
        if psi_at_reals.is_empty() {
            return Err(Error::Empty("real set"));
        }
        let mean_c = batch.values.iter().sum::<f64>() / batch.len() as f64;
        let mean_psi = psi_at_reals.iter().sum::<f64>() / psi_at_reals.len() as f64;
        let value = mean_c - mean_psi;
        if !value.is_finite() {
            return Err(Error::NonFinite("dual estimate".into()));
        }
        Ok(Self {
            value,
            n_samples: batch.len(),
        })
    }
}

/// Dual estimate using the potential currently cached in `reals`.
pub fn dual_estimate(xs: &Tensor, reals: &RealSet, spec: &CostSpec) -> Result<DualEstimate> {
    if xs.rows() == 0 {
        return Err(Error::Empty("generated points"));
    }
    let batch = batch_assign(xs, reals, spec)?;
    DualEstimate::from_batch(&batch, reals.psi())
}

/// Dual estimate for `ψ = assigner`, refreshing the cache when stale.
pub fn dual_estimate_for(
    xs: &Tensor,
    reals: &mut RealSet,
    spec: &CostSpec,
    assigner: &DenseNet,
) -> Result<DualEstimate> {
    if !reals.is_fresh_for(assigner) {
        reals.refresh_psi_cache(assigner)?;
    }
    dual_estimate(xs, reals, spec)
}

/// Thresholds for [`optimality_check`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimalityTolerance {
    /// Required gap between the best and second-best candidate.
    pub margin: f64,
    /// Allowed deviation of any real's count from `N/M`.
    pub count: f64,
}

impl OptimalityTolerance {
    /// Margin `1e-9`, count deviation `0.05·N/M`.
    pub fn default_for(n: usize, m: usize) -> Self {
        Self {
            margin: 1e-9,
            count: 0.05 * n as f64 / m as f64,
        }
    }

    pub fn exact() -> Self {
        Self {
            margin: 1e-9,
            count: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimalityReport {
    pub optimal: bool,
    pub unique_minimizers: bool,
    pub balanced: bool,
    /// Smallest best/second-best gap over the sample.
    pub min_margin: f64,
    pub max_count_deviation: f64,
    /// The induced map `x_i ↦ y_{T(i)}` when both checks pass.
    pub witness: Option<Vec<usize>>,
    /// `(1/N)·Σ_i c(x_i, y_{T(i)})`.
    pub map_cost: f64,
}

/// Tests whether `ψ` (as cached in `reals`) induces an optimal map: every
/// sample must have a unique minimizer and the push-forward of the empirical
/// measure must be uniform on the reals.
pub fn optimality_check(
    xs: &Tensor,
    reals: &RealSet,
    spec: &CostSpec,
    tol: OptimalityTolerance,
) -> Result<OptimalityReport> {
    reals.check_points(xs, spec)?;
    let n = xs.rows();
    if n == 0 {
        return Err(Error::Empty("generated points"));
    }
    let scans: Vec<Scan> = xs.row_iter().map(|x| reals.scan(x, spec)).collect();
    let min_margin = scans
        .iter()
        .map(|s| s.runner_up - s.value)
        .fold(f64::INFINITY, f64::min);
    let indices: Vec<usize> = scans.iter().map(|s| s.index).collect();
    let values = scans.iter().map(|s| s.value).collect();
    let batch = AssignmentBatch::from_parts(indices, values, reals.len())?;
    let target = n as f64 / reals.len() as f64;
    let max_count_deviation = batch
        .counts
        .iter()
        .map(|&c| (c as f64 - target).abs())
        .fold(0.0, f64::max);
    let map_cost = xs
        .row_iter()
        .zip(&batch.indices)
        .map(|(x, &j)| spec.eval(x, reals.points().row(j)))
        .sum::<f64>()
        / n as f64;
    let unique_minimizers = min_margin > tol.margin;
    let balanced = max_count_deviation <= tol.count;
    let optimal = unique_minimizers && balanced;
    Ok(OptimalityReport {
        optimal,
        unique_minimizers,
        balanced,
        min_margin,
        max_count_deviation,
        witness: optimal.then_some(batch.indices),
        map_cost,
    })
}

/// [`optimality_check`] for `ψ = assigner`.
pub fn optimality_check_for(
    xs: &Tensor,
    reals: &mut RealSet,
    spec: &CostSpec,
    assigner: &DenseNet,
    tol: OptimalityTolerance,
) -> Result<OptimalityReport> {
    if !reals.is_fresh_for(assigner) {
        reals.refresh_psi_cache(assigner)?;
    }
    optimality_check(xs, reals, spec, tol)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub stable: bool,
    /// First generated point whose assignment moved.
    pub witness: Option<usize>,
}

/// Perturbs every assigner parameter by independent uniform noise in
/// `[−δ, δ]` and reports whether any assignment changes.
pub fn stability_check(
    xs: &Tensor,
    reals: &RealSet,
    spec: &CostSpec,
    assigner: &DenseNet,
    delta: f64,
    seed: u64,
) -> Result<StabilityReport> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Invalid(format!(
            "perturbation radius must be nonnegative, got {delta}"
        )));
    }
    reals.check_points(xs, spec)?;
    let base_psi = evaluate_potential(assigner, reals.points())?;
    let base = RealSet::with_potential(reals.points().clone(), base_psi)?;
    let before = batch_assign(xs, &base, spec)?;
    if delta == 0.0 {
        return Ok(StabilityReport {
            stable: true,
            witness: None,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perturbed = assigner.clone();
    for s in perturbed.param_slices_mut() {
        for p in s.iter_mut() {
            *p += rng.random_range(-delta..=delta);
        }
    }
    let psi = evaluate_potential(&perturbed, reals.points())?;
    let moved = RealSet::with_potential(reals.points().clone(), psi)?;
    let after = batch_assign(xs, &moved, spec)?;
    let witness = before
        .indices
        .iter()
        .zip(&after.indices)
        .position(|(a, b)| a != b);
    Ok(StabilityReport {
        stable: witness.is_none(),
        witness,
    })
}

/// Smallest best/second-best gap of `c(x_i, ·) + ψ` over the sample.
pub fn assignment_margin(xs: &Tensor, reals: &RealSet, spec: &CostSpec) -> Result<f64> {
    reals.check_points(xs, spec)?;
    Ok(xs
        .row_iter()
        .map(|x| {
            let s = reals.scan(x, spec);
            s.runner_up - s.value
        })
        .fold(f64::INFINITY, f64::min))
}

/// First-order radius below which no assignment can change: half the
/// smallest margin divided by `max_j ‖∇_w ψ(y_j)‖₁`.
pub fn stability_radius(
    xs: &Tensor,
    reals: &RealSet,
    spec: &CostSpec,
    assigner: &DenseNet,
) -> Result<f64> {
    let psi = evaluate_potential(assigner, reals.points())?;
    let fresh = RealSet::with_potential(reals.points().clone(), psi)?;
    let margin = assignment_margin(xs, &fresh, spec)?;
    let m = reals.len();
    let mut sensitivity: f64 = 0.0;
    for j in 0..m {
        let y = reals.points().select_rows(&[j]);
        let up = Tensor::from_parts_unchecked(vec![1, 1], vec![1.0]);
        let g = assigner.backward_params(&y, &up)?;
        let l1: f64 = g.slices().iter().flat_map(|s| s.iter()).map(|v| v.abs()).sum();
        sensitivity = sensitivity.max(l1);
    }
    if sensitivity == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(margin / (2.0 * sensitivity))
}

/// Writes one CSV row per generated point: id, assigned real, transport
/// cost to it, and `ψ` at that real.
pub fn write_assignments_csv<W: Write>(
    mut out: W,
    xs: &Tensor,
    reals: &RealSet,
    spec: &CostSpec,
    batch: &AssignmentBatch,
) -> Result<()> {
    if batch.len() != xs.rows() {
        return Err(Error::Dimension {
            expected: xs.rows(),
            got: batch.len(),
        });
    }
    writeln!(out, "generated_id,real_index,cost,psi")?;
    for (i, (x, &j)) in xs.row_iter().zip(&batch.indices).enumerate() {
        let c = spec.cost(x, reals.points().row(j))?;
        writeln!(out, "{i},{j},{c},{}", reals.psi()[j])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Activation, Layer};

    fn line(points: &[f64]) -> Tensor {
        Tensor::matrix(points.len(), 1, points.to_vec()).unwrap()
    }

    #[test]
    fn potential_shifts_the_assignment() {
        // min(16 + 0, 36 − 50) = −14 at the real 10
        let reals = RealSet::with_potential(line(&[0.0, 10.0]), vec![0.0, -50.0]).unwrap();
        let (j, v) = c_transform_assign(&[4.0], &reals, &CostSpec::squared_euclidean()).unwrap();
        assert_eq!((j, v), (1, -14.0));
    }

    #[test]
    fn zero_potential_is_nearest_neighbour() {
        let reals = RealSet::new(line(&[0.0, 1.0, 5.0])).unwrap();
        let (j, v) = c_transform_assign(&[3.5], &reals, &CostSpec::euclidean()).unwrap();
        assert_eq!((j, v), (2, 1.5));
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let reals = RealSet::new(line(&[-1.0, 1.0])).unwrap();
        let (j, _) = c_transform_assign(&[0.0], &reals, &CostSpec::euclidean()).unwrap();
        assert_eq!(j, 0);
    }

    #[test]
    fn empty_batch() {
        let reals = RealSet::new(line(&[0.0, 1.0])).unwrap();
        let b = batch_assign(&Tensor::zeros(vec![0, 1]), &reals, &CostSpec::euclidean()).unwrap();
        assert!(b.is_empty());
        assert_eq!(b.counts, vec![0, 0]);
    }

    #[test]
    fn empty_real_set_rejected() {
        assert!(matches!(
            RealSet::new(Tensor::zeros(vec![0, 2])),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn points_on_reals_balance_exactly() {
        let pts = line(&[0.0, 2.0, 7.0]);
        let reals = RealSet::new(pts.clone()).unwrap();
        let b = batch_assign(&pts, &reals, &CostSpec::squared_euclidean()).unwrap();
        assert_eq!(b.counts, vec![1, 1, 1]);
        assert_eq!(b.values, vec![0.0, 0.0, 0.0]);
        assert!(b.is_balanced());
    }

    #[test]
    fn loss_direct_evaluation() {
        let b = AssignmentBatch::from_parts(vec![0, 0], vec![0.0, 0.0], 2).unwrap();
        assert_eq!(assigner_loss(&b, &[1.0, 0.0]).unwrap(), -0.5);
    }

    #[test]
    fn loss_vanishes_when_balanced_and_ignores_shifts() {
        let b = AssignmentBatch::from_parts(vec![0, 1, 2, 2, 1, 0], vec![0.0; 6], 3).unwrap();
        assert_eq!(assigner_loss(&b, &[3.0, -1.0, 8.5]).unwrap(), 0.0);
        let skew = AssignmentBatch::from_parts(vec![0, 0, 0, 1], vec![0.0; 4], 3).unwrap();
        let a = assigner_loss(&skew, &[0.3, -0.2, 0.9]).unwrap();
        let b = assigner_loss(&skew, &[5.3, 4.8, 5.9]).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn loss_requires_points() {
        let b = AssignmentBatch::from_parts(vec![], vec![], 2).unwrap();
        assert!(assigner_loss(&b, &[0.0, 0.0]).is_err());
    }

    fn const_net(bias: f64) -> DenseNet {
        let l = Layer::new(Tensor::zeros(vec![1, 1]), vec![bias], Activation::Identity).unwrap();
        DenseNet::from_layers(vec![l]).unwrap()
    }

    #[test]
    fn refresh_with_zero_weights_gives_bias() {
        let net = const_net(0.75);
        let mut reals = RealSet::new(line(&[1.0, -3.0, 9.0])).unwrap();
        let v0 = reals.cache_version();
        reals.refresh_psi_cache(&net).unwrap();
        assert_eq!(reals.psi(), &[0.75, 0.75, 0.75]);
        assert!(reals.cache_version() > v0);
        assert!(reals.is_fresh_for(&net));
    }

    #[test]
    fn single_real_cache() {
        let net = const_net(-2.0);
        let reals = refresh_psi_cache(&net, RealSet::new(line(&[4.0])).unwrap()).unwrap();
        assert_eq!(reals.psi(), &[-2.0]);
    }

    #[test]
    fn stale_cache_rejected() {
        let mut net = const_net(0.0);
        let mut reals = RealSet::new(line(&[0.0, 1.0])).unwrap();
        reals.refresh_psi_cache(&net).unwrap();
        let b = batch_assign(&line(&[0.2]), &reals, &CostSpec::euclidean()).unwrap();
        net.set_flat_params(&[0.5, 0.1]).unwrap();
        assert!(matches!(
            assigner_gradient(&b, &net, &reals),
            Err(Error::StaleCache { .. })
        ));
    }

    #[test]
    fn balanced_gradient_is_zero() {
        let mut net = const_net(0.0);
        net.set_flat_params(&[1.3, -0.2]).unwrap();
        let mut reals = RealSet::new(line(&[0.0, 1.0])).unwrap();
        reals.refresh_psi_cache(&net).unwrap();
        let b = AssignmentBatch::from_parts(vec![1, 0], vec![0.0; 2], 2).unwrap();
        let g = assigner_gradient(&b, &net, &reals).unwrap();
        assert!(g.slices().iter().all(|s| s.iter().all(|v| v.to_bits() == 0)));
    }

    #[test]
    fn dual_of_single_atom_is_zero() {
        let pts = Tensor::from_rows(&[[0.3, 0.4]]).unwrap();
        let reals = RealSet::with_potential(pts.clone(), vec![1.5]).unwrap();
        let est = dual_estimate(&pts, &reals, &CostSpec::squared_euclidean()).unwrap();
        assert_eq!(est.value, 0.0);
        assert_eq!(est.n_samples, 1);
    }

    #[test]
    fn zero_potential_dual_is_mean_nearest_cost() {
        let reals = RealSet::new(line(&[0.0, 10.0])).unwrap();
        let xs = line(&[1.0, 9.0, 4.0]);
        let est = dual_estimate(&xs, &reals, &CostSpec::squared_euclidean()).unwrap();
        assert!((est.value - (1.0 + 1.0 + 16.0) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn optimality_identity_and_collapse() {
        let pts = line(&[0.0, 3.0]);
        let reals = RealSet::new(pts.clone()).unwrap();
        let spec = CostSpec::squared_euclidean();
        let r = optimality_check(&pts, &reals, &spec, OptimalityTolerance::exact()).unwrap();
        assert!(r.optimal);
        assert_eq!(r.witness, Some(vec![0, 1]));

        let xs = line(&[0.1, -0.2]);
        let r = optimality_check(&xs, &reals, &spec, OptimalityTolerance::default_for(2, 2))
            .unwrap();
        assert!(!r.optimal);
        assert!(!r.balanced);
        assert!(r.witness.is_none());
    }

    #[test]
    fn zero_radius_is_always_stable() {
        let net = const_net(0.1);
        let reals = RealSet::new(line(&[0.0, 1.0])).unwrap();
        let r = stability_check(&line(&[0.5]), &reals, &CostSpec::euclidean(), &net, 0.0, 1)
            .unwrap();
        assert!(r.stable);
    }

    #[test]
    fn csv_export_rows() {
        let reals = RealSet::with_potential(line(&[0.0, 10.0]), vec![0.0, -50.0]).unwrap();
        let xs = line(&[4.0, -1.0]);
        let spec = CostSpec::squared_euclidean();
        let b = batch_assign(&xs, &reals, &spec).unwrap();
        let mut buf = Vec::new();
        write_assignments_csv(&mut buf, &xs, &reals, &spec, &b).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "generated_id,real_index,cost,psi\n0,1,36,-50\n1,0,1,0\n");
    }
}
