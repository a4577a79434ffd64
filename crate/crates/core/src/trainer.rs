//! The alternating training loop.
//!
//! One outer iteration runs `n_critic` assigner steps followed by a single
//! generator step. Every assigner step draws a fresh latent batch, assigns the
//! generated points through the c-transform and takes one RMSProp step on the
//! assignment cost. The generator step reuses the batch and assignments of the
//! last assigner step and pulls each generated point towards its assigned
//! real under the generator cost `c̃`.
//!
//! Random streams (network init, latent means, latent draws, evaluation draws)
//! are independent ChaCha8 streams under the run seed, so the training
//! trajectory does not depend on how often evaluation runs.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::assign::{assigner_gradient_traced, assigner_loss, batch_assign, AssignmentBatch, DualEstimate, RealSet};
use crate::checkpoint::{Checkpoint, RngState};
use crate::config::{Scale, TrainConfig};
use crate::costs::{bounding_box, unit_diameter_scale, CostKind, CostSpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::net::{Activation, DenseNet, ForwardTrace, Gradients};
use crate::optim::RmsProp;
use crate::ot::{assignment_variance, nearest_counts, w1_eval};
use crate::tensor::Tensor;

const STREAM_ASSIGNER_INIT: u64 = 1;
const STREAM_GENERATOR_INIT: u64 = 2;
const STREAM_LATENT_MEANS: u64 = 3;
const STREAM_LATENT_DRAWS: u64 = 4;
const STREAM_EVAL: u64 = 5;

/// A ChaCha8 stream under `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A mixture of `K` isotropic Gaussians with a shared `σ`.
#[derive(Clone, Debug)]
pub struct LatentSampler {
    means: Tensor,
    sigma: f64,
    rng: ChaCha8Rng,
}

impl LatentSampler {
    pub fn from_parts(means: Tensor, sigma: f64, rng: ChaCha8Rng) -> Result<Self> {
        if means.rows() == 0 || means.cols() == 0 {
            return Err(Error::Empty("latent mixture"));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::Invalid(format!("latent sigma must be nonnegative, got {sigma}")));
        }
        Ok(Self { means, sigma, rng })
    }

    /// Means drawn uniformly from `[−1, 1]^dim`.
    pub fn new(k: usize, dim: usize, sigma: f64, seed: u64) -> Result<Self> {
        let mut rng = rng_stream(seed, STREAM_LATENT_MEANS);
        let data = (0..k * dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        Self::from_parts(
            Tensor::matrix(k, dim, data)?,
            sigma,
            rng_stream(seed, STREAM_LATENT_DRAWS),
        )
    }

    pub fn means(&self) -> &Tensor {
        &self.means
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    pub fn components(&self) -> usize {
        self.means.rows()
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    /// `n` draws from the sampler's own stream.
    pub fn sample(&mut self, n: usize) -> Tensor {
        let mut rng = self.rng.clone();
        let out = self.sample_with(n, &mut rng);
        self.rng = rng;
        out
    }

    /// `n` draws from an external stream; the sampler state is untouched.
    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Tensor {
        let (k, d) = (self.components(), self.dim());
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            let c = rng.random_range(0..k);
            for &mu in self.means.row(c) {
                let e: f64 = StandardNormal.sample(rng);
                data.push(mu + self.sigma * e);
            }
        }
        Tensor::from_parts_unchecked(vec![n, d], data)
    }
}

/// Runs `net` over `latents` in row chunks of at most `chunk`. Rows are
/// independent, so the result does not depend on `chunk`.
pub fn generate(net: &DenseNet, latents: &Tensor, chunk: usize) -> Result<Tensor> {
    let n = latents.rows();
    if n <= chunk.max(1) {
        return net.forward(latents);
    }
    let parts = (0..n)
        .step_by(chunk)
        .map(|s| {
            let idx: Vec<usize> = (s..(s + chunk).min(n)).collect();
            net.forward(&latents.select_rows(&idx))
        })
        .collect::<Result<Vec<_>>>()?;
    Tensor::vstack(&parts)
}

/// Generator objective `(1/m)·Σ_i c̃(G(z_i), target_i)` and its gradient in
/// the generator weights. Terms where `c̃` has no gradient (Euclidean cost at
/// coincident points) contribute zero; their number is returned.
pub fn generator_objective(
    generator: &DenseNet,
    latents: &Tensor,
    targets: &Tensor,
    cost: &CostSpec,
) -> Result<(f64, Gradients, usize)> {
    let generated = generator.forward(latents)?;
    generator_objective_at(generator, latents, &generated, targets, cost)
}

fn generator_objective_at(
    generator: &DenseNet,
    latents: &Tensor,
    generated: &Tensor,
    targets: &Tensor,
    cost: &CostSpec,
) -> Result<(f64, Gradients, usize)> {
    if generated.rows() != targets.rows() {
        return Err(Error::Dimension {
            expected: generated.rows(),
            got: targets.rows(),
        });
    }
    let m = generated.rows();
    if m == 0 {
        return Err(Error::Empty("generated points"));
    }
    let d = generated.cols();
    let per_row: Vec<(f64, Option<Vec<f64>>)> = (0..m)
        .into_par_iter()
        .map(|i| {
            let (x, y) = (generated.row(i), targets.row(i));
            let c = cost.cost(x, y)?;
            match cost.grad_x(x, y) {
                Ok(g) => Ok((c, Some(g))),
                Err(Error::Singular(_)) => Ok((c, None)),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let inv = 1.0 / m as f64;
    let mut upstream = vec![0.0; m * d];
    let mut loss = 0.0;
    let mut singular = 0;
    for (i, (c, g)) in per_row.into_iter().enumerate() {
        loss += c;
        match g {
            Some(g) => upstream[i * d..(i + 1) * d]
                .iter_mut()
                .zip(g)
                .for_each(|(u, v)| *u = v * inv),
            None => singular += 1,
        }
    }
    loss *= inv;
    if !loss.is_finite() {
        return Err(Error::NonFinite("generator loss".into()));
    }
    let upstream = Tensor::matrix(m, d, upstream)?;
    let grads = generator.backward_params(latents, &upstream)?;
    Ok((loss, grads, singular))
}

/// The two costs of a run with their scales resolved against the data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResolvedCosts {
    pub assigner: CostSpec,
    pub generator: CostSpec,
}

fn resolve_cost(kind: CostKind, scale: Scale, dataset: &Dataset) -> Result<CostSpec> {
    let base = CostSpec::new(kind, 1.0, dataset.image_shape)?;
    match scale {
        Scale::Fixed(s) => base.with_scale(s),
        Scale::Auto => {
            let domain = match dataset.image_shape {
                Some(_) => vec![(0.0, 1.0); dataset.dim()],
                None => bounding_box(&dataset.points)?,
            };
            base.with_scale(unit_diameter_scale(&base, &domain)?)
        }
    }
}

pub fn resolve_costs(config: &TrainConfig, dataset: &Dataset) -> Result<ResolvedCosts> {
    Ok(ResolvedCosts {
        assigner: resolve_cost(config.cost.kind, config.cost.scale, dataset)?,
        generator: resolve_cost(config.cost.generator_kind, config.cost.generator_scale, dataset)?,
    })
}

/// Latent dimension for a run: configured, else 100 for images and 2 otherwise.
pub fn latent_dim(config: &TrainConfig, dataset: &Dataset) -> usize {
    config
        .latent
        .dim
        .unwrap_or(if dataset.image_shape.is_some() { 100 } else { 2 })
}

/// Fresh networks for a run.
pub fn init_networks(config: &TrainConfig, dataset: &Dataset) -> Result<(DenseNet, DenseNet)> {
    let d = dataset.dim();
    let mut sizes = vec![d];
    sizes.extend(&config.net.assigner_hidden);
    sizes.push(1);
    let assigner = DenseNet::glorot(
        &sizes,
        config.net.activation,
        Activation::Identity,
        &mut rng_stream(config.seed, STREAM_ASSIGNER_INIT),
    )?;
    let mut sizes = vec![latent_dim(config, dataset)];
    sizes.extend(&config.net.generator_hidden);
    sizes.push(d);
    let head = config.net.generator_head.unwrap_or(if dataset.image_shape.is_some() {
        Activation::Sigmoid
    } else {
        Activation::Identity
    });
    let generator = DenseNet::glorot(
        &sizes,
        config.net.activation,
        head,
        &mut rng_stream(config.seed, STREAM_GENERATOR_INIT),
    )?;
    Ok((assigner, generator))
}

/// Outcome of one assigner step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssignerReport {
    /// Assignment cost before the update.
    pub loss: f64,
    /// Batch estimate of the dual before the update.
    pub dual_estimate: f64,
    pub balanced: bool,
}

/// Outcome of one generator step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorReport {
    /// Mean `c̃` to the assigned reals before the update.
    pub loss: f64,
    /// Terms whose gradient was undefined and set to zero.
    pub singular_terms: usize,
}

/// Evaluation metrics on a fresh `k·M` sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub dual_estimate: f64,
    pub assignment_variance: f64,
    pub w1: Option<f64>,
}

/// One line of `metrics.csv`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricRecord {
    pub step: usize,
    pub dual_estimate: f64,
    pub assigner_loss: f64,
    pub generator_loss: f64,
    pub assignment_variance: f64,
    pub w1: Option<f64>,
    pub wall_ms: u64,
}

impl MetricRecord {
    pub const HEADER: &'static str =
        "step,dual_estimate,assigner_loss,generator_loss,assignment_variance,wall_ms";

    pub fn header(with_w1: bool) -> String {
        if with_w1 {
            format!("{},w1", Self::HEADER)
        } else {
            Self::HEADER.to_string()
        }
    }

    pub fn csv_row(&self, with_w1: bool) -> String {
        let mut s = format!(
            "{},{},{},{},{},{}",
            self.step,
            self.dual_estimate,
            self.assigner_loss,
            self.generator_loss,
            self.assignment_variance,
            self.wall_ms
        );
        if with_w1 {
            match self.w1 {
                Some(w) => s.push_str(&format!(",{w}")),
                None => s.push(','),
            }
        }
        s
    }
}

pub fn write_metrics_csv<W: Write>(out: &mut W, log: &[MetricRecord], with_w1: bool) -> Result<()> {
    writeln!(out, "{}", MetricRecord::header(with_w1))?;
    for r in log {
        writeln!(out, "{}", r.csv_row(with_w1))?;
    }
    Ok(())
}

/// Call accounting for the assigner: it is only ever run on the real set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AssignerCalls {
    pub forward_passes: u64,
    pub backward_passes: u64,
    /// Total rows pushed through the assigner, forward and backward.
    pub rows: u64,
}

struct LastBatch {
    latents: Tensor,
    generated: Tensor,
    batch: AssignmentBatch,
}

/// Everything that evolves during training.
pub struct TrainState {
    pub config: TrainConfig,
    pub costs: ResolvedCosts,
    pub generator: DenseNet,
    pub generator_opt: RmsProp,
    pub assigner: DenseNet,
    pub assigner_opt: RmsProp,
    pub sampler: LatentSampler,
    pub eval_rng: ChaCha8Rng,
    /// Generator steps taken.
    pub step: usize,
    pub assigner_steps: usize,
    pub singular_terms: usize,
    reals: RealSet,
    /// Forward pass over the reals behind the current `ψ` cache.
    trace: Option<ForwardTrace>,
    calls: AssignerCalls,
    last: Option<LastBatch>,
    last_assigner: Option<AssignerReport>,
    last_generator: Option<GeneratorReport>,
}

impl TrainState {
    pub fn new(config: &TrainConfig, dataset: &Dataset) -> Result<Self> {
        config.validate()?;
        let (assigner, generator) = init_networks(config, dataset)?;
        let sampler = LatentSampler::new(
            config.latent.k,
            latent_dim(config, dataset),
            config.latent.sigma,
            config.seed,
        )?;
        Self::assemble(
            config.clone(),
            dataset,
            generator,
            assigner,
            sampler,
            rng_stream(config.seed, STREAM_EVAL),
        )
    }

    fn assemble(
        config: TrainConfig,
        dataset: &Dataset,
        generator: DenseNet,
        assigner: DenseNet,
        sampler: LatentSampler,
        eval_rng: ChaCha8Rng,
    ) -> Result<Self> {
        let costs = resolve_costs(&config, dataset)?;
        if assigner.input_dim() != dataset.dim() || assigner.output_dim() != 1 {
            return Err(Error::Shape(format!(
                "assigner maps {} → {}, data has dimension {}",
                assigner.input_dim(),
                assigner.output_dim(),
                dataset.dim()
            )));
        }
        if generator.output_dim() != dataset.dim() || generator.input_dim() != sampler.dim() {
            return Err(Error::Shape(format!(
                "generator maps {} → {}, expected {} → {}",
                generator.input_dim(),
                generator.output_dim(),
                sampler.dim(),
                dataset.dim()
            )));
        }
        let t = &config.train;
        let generator_opt = RmsProp::new(&generator, t.generator_lr, t.decay, t.epsilon)?;
        let assigner_opt = RmsProp::new(&assigner, t.assigner_lr, t.decay, t.epsilon)?;
        Ok(Self {
            costs,
            generator,
            generator_opt,
            assigner,
            assigner_opt,
            sampler,
            eval_rng,
            step: 0,
            assigner_steps: 0,
            singular_terms: 0,
            reals: RealSet::new(dataset.points.clone())?,
            trace: None,
            calls: AssignerCalls::default(),
            last: None,
            last_assigner: None,
            last_generator: None,
            config,
        })
    }

    /// Rebuilds a state from a checkpoint; the dataset must be the one the
    /// run was trained on.
    pub fn from_checkpoint(ckpt: &Checkpoint, dataset: &Dataset) -> Result<Self> {
        let sampler = LatentSampler::from_parts(
            ckpt.latent_means.clone(),
            ckpt.latent_sigma,
            ckpt.latent_rng.restore(),
        )?;
        let mut state = Self::assemble(
            ckpt.config.clone(),
            dataset,
            ckpt.generator.clone(),
            ckpt.assigner.clone(),
            sampler,
            ckpt.eval_rng.restore(),
        )?;
        state.generator_opt = ckpt.generator_opt.clone();
        state.assigner_opt = ckpt.assigner_opt.clone();
        state.step = ckpt.step;
        state.assigner_steps = ckpt.assigner_steps;
        Ok(state)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: crate::checkpoint::FORMAT_VERSION,
            step: self.step,
            assigner_steps: self.assigner_steps,
            generator: self.generator.clone(),
            generator_opt: self.generator_opt.clone(),
            assigner: self.assigner.clone(),
            assigner_opt: self.assigner_opt.clone(),
            latent_means: self.sampler.means().clone(),
            latent_sigma: self.sampler.sigma(),
            latent_rng: RngState::capture(self.sampler.rng()),
            eval_rng: RngState::capture(&self.eval_rng),
            config: self.config.clone(),
        }
    }

    pub fn reals(&self) -> &RealSet {
        &self.reals
    }

    pub fn assigner_calls(&self) -> AssignerCalls {
        self.calls
    }

    pub fn last_assigner_report(&self) -> Option<AssignerReport> {
        self.last_assigner
    }

    pub fn last_generator_report(&self) -> Option<GeneratorReport> {
        self.last_generator
    }

    /// The batch kept for the next generator step: `(latents, generated, assignments)`.
    pub fn pending_batch(&self) -> Option<(&Tensor, &Tensor, &AssignmentBatch)> {
        self.last
            .as_ref()
            .map(|l| (&l.latents, &l.generated, &l.batch))
    }

    /// Brings the `ψ` cache in line with the current assigner.
    pub fn refresh_potential(&mut self) -> Result<()> {
        if !self.reals.is_fresh_for(&self.assigner) {
            self.trace = Some(self.reals.refresh_psi_cache_traced(&self.assigner)?);
            self.calls.forward_passes += 1;
            self.calls.rows += self.reals.len() as u64;
        }
        Ok(())
    }

    fn draw_batch(&mut self) -> Result<(Tensor, Tensor)> {
        let latents = self.sampler.sample(self.config.train.m);
        let generated = generate(&self.generator, &latents, self.config.train.chunk)?;
        if !generated.all_finite() {
            return Err(Error::NonFinite("generated batch".into()));
        }
        Ok((latents, generated))
    }

    /// One assigner update on a freshly drawn batch.
    pub fn assigner_step(&mut self) -> Result<AssignerReport> {
        let (latents, generated) = self.draw_batch()?;
        self.refresh_potential()?;
        let batch = batch_assign(&generated, &self.reals, &self.costs.assigner)?;
        let loss = assigner_loss(&batch, self.reals.psi())?;
        let dual = DualEstimate::from_batch(&batch, self.reals.psi())?.value;
        if !loss.is_finite() {
            return Err(Error::NonFinite("assigner loss".into()));
        }
        let trace = self.trace.as_ref().expect("trace kept with the cache");
        let grads = assigner_gradient_traced(&batch, &self.assigner, &self.reals, trace)?;
        self.calls.backward_passes += 1;
        self.calls.rows += self.reals.len() as u64;
        let balanced = batch.is_balanced();
        self.assigner_opt.step(&mut self.assigner, &grads)?;
        self.assigner_steps += 1;
        self.last = Some(LastBatch {
            latents,
            generated,
            batch,
        });
        let report = AssignerReport {
            loss,
            dual_estimate: dual,
            balanced,
        };
        self.last_assigner = Some(report);
        Ok(report)
    }

    /// One generator update towards the reals assigned in the last assigner
    /// step (re-assigned with the current assigner if `train.reassign`).
    pub fn generator_step(&mut self) -> Result<GeneratorReport> {
        let last = self.last.take().ok_or_else(|| {
            Error::Invalid("generator step needs an assignment batch from an assigner step".into())
        })?;
        let batch = if self.config.train.reassign {
            self.refresh_potential()?;
            batch_assign(&last.generated, &self.reals, &self.costs.assigner)?
        } else {
            last.batch
        };
        let targets = self.reals.points().select_rows(&batch.indices);
        let (loss, grads, singular) = generator_objective_at(
            &self.generator,
            &last.latents,
            &last.generated,
            &targets,
            &self.costs.generator,
        )?;
        self.generator_opt.step(&mut self.generator, &grads)?;
        self.step += 1;
        self.singular_terms += singular;
        let report = GeneratorReport {
            loss,
            singular_terms: singular,
        };
        self.last_generator = Some(report);
        Ok(report)
    }

    /// `n_critic` assigner steps, then one generator step.
    pub fn outer_iteration(&mut self) -> Result<(AssignerReport, GeneratorReport)> {
        let mut a = None;
        for _ in 0..self.config.train.n_critic {
            a = Some(self.assigner_step()?);
        }
        let g = self.generator_step()?;
        Ok((a.expect("n_critic ≥ 1"), g))
    }

    /// Draws `n` generated points from the evaluation stream.
    pub fn sample_eval(&mut self, n: usize) -> Result<Tensor> {
        let latents = self.sampler.sample_with(n, &mut self.eval_rng);
        generate(&self.generator, &latents, self.config.train.chunk)
    }

    /// Dual estimate and assignment variance on `k·M` fresh samples, plus
    /// exact W1 against the first `eval.w1_reals` reals when enabled.
    pub fn evaluate(&mut self) -> Result<Evaluation> {
        let k = self.config.eval.k;
        let xs = self.sample_eval(k * self.reals.len())?;
        if !xs.all_finite() {
            return Err(Error::NonFinite("evaluation samples".into()));
        }
        self.refresh_potential()?;
        let batch = batch_assign(&xs, &self.reals, &self.costs.assigner)?;
        let dual_estimate = DualEstimate::from_batch(&batch, self.reals.psi())?.value;
        let counts = nearest_counts(&xs, self.reals.points(), &self.costs.assigner)?;
        let variance = assignment_variance(&counts, k)?;
        let w1 = if self.config.eval.w1 {
            let r = self.config.eval.w1_reals.min(self.reals.len());
            let idx: Vec<usize> = (0..r).collect();
            let subset = self.reals.points().select_rows(&idx);
            Some(w1_eval(|n| self.sample_eval(n), &subset, k)?)
        } else {
            None
        };
        Ok(Evaluation {
            dual_estimate,
            assignment_variance: variance,
            w1,
        })
    }
}

/// Why [`train`] returned.
#[derive(Clone, Debug, PartialEq)]
pub enum StopReason {
    MaxSteps,
    /// The dual estimate stopped decreasing.
    Plateau,
    /// A non-finite value appeared; the state was rolled back to the last
    /// evaluation.
    NonFinite(String),
}

pub struct TrainOutcome {
    pub state: TrainState,
    pub log: Vec<MetricRecord>,
    pub stop: StopReason,
}

/// Trains from scratch. `observer` sees the state after every evaluation.
pub fn train<F>(config: &TrainConfig, dataset: &Dataset, observer: F) -> Result<TrainOutcome>
where
    F: FnMut(&TrainState, &MetricRecord) -> Result<()>,
{
    run(TrainState::new(config, dataset)?, dataset, observer)
}

/// Continues `state` until `config.max_steps` generator steps.
pub fn run<F>(mut state: TrainState, dataset: &Dataset, mut observer: F) -> Result<TrainOutcome>
where
    F: FnMut(&TrainState, &MetricRecord) -> Result<()>,
{
    let max_steps = state.config.max_steps;
    let every = state.config.eval_every;
    let patience = state.config.train.patience;
    let min_improvement = state.config.train.min_improvement;
    let start = Instant::now();
    let mut log: Vec<MetricRecord> = Vec::new();
    let mut last_good = state.checkpoint();
    let mut stop = StopReason::MaxSteps;

    while state.step < max_steps {
        let step = state.outer_iteration().and_then(|(a, g)| {
            if state.step % every != 0 && state.step != max_steps {
                return Ok(None);
            }
            let ev = state.evaluate()?;
            let record = MetricRecord {
                step: state.step,
                dual_estimate: ev.dual_estimate,
                assigner_loss: a.loss,
                generator_loss: g.loss,
                assignment_variance: ev.assignment_variance,
                w1: ev.w1,
                wall_ms: if state.config.wall_time {
                    start.elapsed().as_millis() as u64
                } else {
                    0
                },
            };
            if ![record.dual_estimate, record.assigner_loss, record.generator_loss]
                .iter()
                .all(|v| v.is_finite())
            {
                return Err(Error::NonFinite(format!("metrics at step {}", state.step)));
            }
            Ok(Some(record))
        });
        match step {
            Ok(None) => {}
            Ok(Some(record)) => {
                observer(&state, &record)?;
                log.push(record);
                last_good = state.checkpoint();
                if plateaued(&log, patience, min_improvement) {
                    stop = StopReason::Plateau;
                    break;
                }
            }
            Err(Error::NonFinite(what)) => {
                state = TrainState::from_checkpoint(&last_good, dataset)?;
                stop = StopReason::NonFinite(what);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(TrainOutcome { state, log, stop })
}

/// True when the best dual estimate of the last `patience` evaluations is
/// less than `min_improvement` below the best one before them.
fn plateaued(log: &[MetricRecord], patience: usize, min_improvement: f64) -> bool {
    if patience == 0 || log.len() <= patience {
        return false;
    }
    let (before, recent) = log.split_at(log.len() - patience);
    let best = |r: &[MetricRecord]| r.iter().map(|m| m.dual_estimate).fold(f64::INFINITY, f64::min);
    best(before) - best(recent) < min_improvement
}
