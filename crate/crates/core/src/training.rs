//! Dataset normalization, the supervised / SSDU / multi-mask training loops
//! and test-time reconstruction.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::kspace::{CoilSensitivities, ComplexImage, EncodingOperator, KSpaceSample, SamplingPattern};
use crate::nn::{adam_step, AdamConfig, AdamState, ComputeGraph, NetworkParams, ResNetArch, Tensor};
use crate::rng::{child_rng, derive_seed};
use crate::sampling::{gen_cyclic_multi_mask, gen_multi_mask, MaskDistribution, PartitionSet};
use crate::solver::{unrolled_forward, unrolled_nodes, UnrollConfig};

/// Lower bound applied to `mu` after every optimizer step; the DC system is
/// only positive definite for `mu > 0`.
pub const MU_FLOOR: f64 = 1e-4;

const INIT_STREAM: u64 = 0x494E_4954;
const ORDER_STREAM: u64 = 0x4F52_4445;
const SPLIT_STREAM: u64 = 0x5350_4C54;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample {
    pub y_omega: KSpaceSample,
    pub coils: Arc<CoilSensitivities>,
    /// Fully sampled reference k-space on the same scale as `y_omega`.
    pub y_ref: Option<KSpaceSample>,
    pub partition: Option<PartitionSet>,
}

impl TrainingSample {
    pub fn new(y_omega: KSpaceSample, coils: Arc<CoilSensitivities>, y_ref: Option<KSpaceSample>) -> Result<Self> {
        if y_omega.ncoils() != coils.ncoils() || y_omega.shape() != coils.shape() {
            return Err(Error::dim("k-space and coil maps disagree in shape"));
        }
        if let Some(r) = &y_ref {
            let (ny, nz) = r.shape();
            if r.pattern() != &SamplingPattern::full(ny, nz) || r.ncoils() != y_omega.ncoils() {
                return Err(Error::dim("reference k-space must be fully sampled with the same coils"));
            }
            if r.restrict_unchecked(y_omega.pattern()).data() != y_omega.data() {
                return Err(Error::Contract("y_omega is not the reference masked by Omega".into()));
            }
        }
        Ok(Self { y_omega, coils, y_ref, partition: None })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainMode {
    Supervised,
    Ssdu,
    MultiMask,
    CyclicMultiMask,
}

impl TrainMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrainMode::Supervised => "supervised",
            TrainMode::Ssdu => "ssdu",
            TrainMode::MultiMask => "multimask",
            TrainMode::CyclicMultiMask => "cyclic",
        }
    }
}

impl std::str::FromStr for TrainMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "supervised" => Ok(TrainMode::Supervised),
            "ssdu" => Ok(TrainMode::Ssdu),
            "multimask" => Ok(TrainMode::MultiMask),
            "cyclic" => Ok(TrainMode::CyclicMultiMask),
            other => Err(Error::config(format!("unknown training mode '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub mode: TrainMode,
    pub k: usize,
    pub rho: f64,
    pub dist: MaskDistribution,
    pub unroll: UnrollConfig,
    pub arch: ResNetArch,
    pub seed: u64,
    /// Draw fresh partitions every epoch instead of fixing them per sample.
    pub regenerate_masks: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: AdamConfig::default().lr,
            mode: TrainMode::MultiMask,
            k: 5,
            rho: 0.4,
            dist: MaskDistribution::UniformRandom,
            unroll: UnrollConfig::default(),
            arch: ResNetArch::default(),
            seed: 0,
            regenerate_masks: false,
        }
    }
}

impl TrainConfig {
    /// Number of splits actually used by this mode.
    pub fn splits(&self) -> usize {
        match self.mode {
            TrainMode::Supervised | TrainMode::Ssdu => 1,
            TrainMode::MultiMask | TrainMode::CyclicMultiMask => self.k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("learning rate must be non-negative, got {}", self.lr)));
        }
        self.unroll.validate()?;
        self.dist.validate()?;
        match self.mode {
            TrainMode::Supervised => {}
            TrainMode::Ssdu | TrainMode::MultiMask => {
                if !(self.rho > 0.0 && self.rho < 1.0) {
                    return Err(Error::config(format!("rho must lie in (0, 1), got {}", self.rho)));
                }
                if self.mode == TrainMode::MultiMask && self.k == 0 {
                    return Err(Error::config("K must be at least 1"));
                }
            }
            TrainMode::CyclicMultiMask => {
                if self.k < 2 {
                    return Err(Error::config("cyclic mode needs K >= 2"));
                }
            }
        }
        Ok(())
    }

    /// Partitions of `sample` number `index` as drawn for `epoch` (always 0
    /// unless masks are regenerated).
    pub fn partition_for(&self, y_omega: &KSpaceSample, index: usize, epoch: usize) -> Result<PartitionSet> {
        let base = derive_seed(derive_seed(self.seed, SPLIT_STREAM), index as u64);
        let seed = if epoch == 0 { base } else { derive_seed(base, epoch as u64) };
        match self.mode {
            TrainMode::Supervised => Err(Error::Mode("supervised training uses no partitions".into())),
            TrainMode::Ssdu => gen_multi_mask(y_omega.pattern(), 1, self.rho, self.dist, seed),
            TrainMode::MultiMask => gen_multi_mask(y_omega.pattern(), self.k, self.rho, self.dist, seed),
            TrainMode::CyclicMultiMask => gen_cyclic_multi_mask(y_omega.pattern(), self.k, seed),
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, ..AdamConfig::default() }
    }

    fn initial_params(&self) -> NetworkParams {
        let mut p = NetworkParams::init(self.arch, self.unroll.mu_init, derive_seed(self.seed, INIT_STREAM));
        p.mu_trainable = self.unroll.mu_trainable;
        p
    }
}

/// Divide each sample's k-space (and reference) by its own max `|y_Omega|`,
/// recording the factor in the sample scale.
pub fn normalize_dataset(samples: &[TrainingSample]) -> Result<Vec<TrainingSample>> {
    if samples.is_empty() {
        return Err(Error::Normalization("empty dataset".into()));
    }
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let f = s.y_omega.max_abs();
            if f == 0.0 || !f.is_finite() {
                return Err(Error::Normalization(format!("sample {i} has max |k| = {f}")));
            }
            Ok(TrainingSample {
                y_omega: s.y_omega.normalized_by(f),
                coils: s.coils.clone(),
                y_ref: s.y_ref.as_ref().map(|r| r.normalized_by(f)),
                partition: s.partition.clone(),
            })
        })
        .collect()
}

/// Generate and attach the fixed partitions that `cfg` trains with.
pub fn attach_partitions(samples: &[TrainingSample], cfg: &TrainConfig) -> Result<Vec<TrainingSample>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut s = s.clone();
            s.partition = match cfg.mode {
                TrainMode::Supervised => None,
                _ => Some(cfg.partition_for(&s.y_omega, i, 0)?),
            };
            Ok(s)
        })
        .collect()
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub step: u64,
    pub mode: TrainMode,
    pub k: usize,
    pub rho: f64,
    pub loss: f64,
    pub wall_time: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    /// Mean loss per epoch, evaluated during the epoch's updates.
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
    pub log: Vec<LogRow>,
}

/// Write the log as CSV. The wall-time column is left empty when
/// `wall_time` is false so the file is reproducible.
pub fn write_training_log(out: impl Write, rows: &[LogRow], wall_time: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Output(format!("writing training log: {e}"));
    w.write_record(["epoch", "step", "mode", "K", "rho", "loss", "wall_time"]).map_err(io)?;
    for r in rows {
        w.write_record([
            r.epoch.to_string(),
            r.step.to_string(),
            r.mode.as_str().to_string(),
            r.k.to_string(),
            format!("{:.16e}", r.rho),
            format!("{:.16e}", r.loss),
            if wall_time { format!("{:.6}", r.wall_time) } else { String::new() },
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Output(format!("writing training log: {e}")))?;
    Ok(())
}

/// Loss of one `(Theta, Lambda)` pair, returning the graph, loss node and
/// the k-space the DC units were given.
pub fn self_supervised_loss(
    sample: &TrainingSample,
    theta: &SamplingPattern,
    lambda: &SamplingPattern,
    params: &NetworkParams,
    unroll: &UnrollConfig,
) -> Result<(ComputeGraph, crate::nn::NodeId, KSpaceSample)> {
    if theta.mask().iter().zip(lambda.mask()).any(|(&t, &l)| t && l) {
        return Err(Error::Partition("Theta and Lambda overlap".into()));
    }
    let y_theta = sample.y_omega.restrict(theta)?;
    let y_lambda = sample.y_omega.restrict(lambda)?;
    let n = theta.ny() * theta.nz();
    if y_theta.data().iter().enumerate().any(|(i, v)| lambda.mask()[i % n] && v.norm_sqr() != 0.0) {
        return Err(Error::Partition("DC input holds a value at a loss index".into()));
    }
    let mut g = ComputeGraph::new();
    let nodes = params.insert_into(&mut g);
    let un = unrolled_nodes(&mut g, &y_theta, &sample.coils, &nodes, unroll)?;
    let op = Arc::new(EncodingOperator::new(sample.coils.clone(), lambda.clone())?);
    let pred = g.encode(un.output(), op)?;
    let (ny, nz) = theta.shape();
    let target = Arc::new(Tensor::from_complex(&[sample.y_omega.ncoils(), ny, nz], y_lambda.data()));
    let loss = g.l1l2(pred, target)?;
    Ok((g, loss, y_theta))
}

/// Supervised loss: full-Omega DC input, loss on the whole reference grid.
pub fn supervised_loss(
    sample: &TrainingSample,
    params: &NetworkParams,
    unroll: &UnrollConfig,
) -> Result<(ComputeGraph, crate::nn::NodeId)> {
    let y_ref = sample.y_ref.as_ref().ok_or_else(|| Error::Mode("supervised training needs y_ref".into()))?;
    let mut g = ComputeGraph::new();
    let nodes = params.insert_into(&mut g);
    let un = unrolled_nodes(&mut g, &sample.y_omega, &sample.coils, &nodes, unroll)?;
    let op = Arc::new(EncodingOperator::new(sample.coils.clone(), y_ref.pattern().clone())?);
    let pred = g.encode(un.output(), op)?;
    let (ny, nz) = y_ref.shape();
    let target = Arc::new(Tensor::from_complex(&[y_ref.ncoils(), ny, nz], y_ref.data()));
    let loss = g.l1l2(pred, target)?;
    Ok((g, loss))
}

fn optimizer_step(
    params: &mut NetworkParams,
    graph: &ComputeGraph,
    loss: crate::nn::NodeId,
    state: &mut AdamState,
    adam: &AdamConfig,
) -> Result<f64> {
    let value = graph.value(loss).item();
    if !value.is_finite() {
        return Err(Error::Numerical { iteration: state.t as usize, detail: format!("loss is {value}") });
    }
    let grads = graph.backward(loss)?.param_grads(graph, params.tensors().len());
    adam_step(params, &grads, state, adam)?;
    if params.mu() < MU_FLOOR {
        params.set_mu(MU_FLOOR);
    }
    Ok(value)
}

fn run_loop(
    dataset: &[TrainingSample],
    cfg: &TrainConfig,
    k: usize,
    mut step_loss: impl FnMut(&TrainingSample, usize, usize, usize, &NetworkParams) -> Result<(ComputeGraph, crate::nn::NodeId)>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::config("training set is empty"));
    }
    let mut params = cfg.initial_params();
    let mut state = AdamState::new(&params);
    let adam = cfg.adam();
    let mut pairs: Vec<(usize, usize)> = (0..dataset.len()).flat_map(|i| (0..k).map(move |j| (i, j))).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut steps = 0u64;
    let start = Instant::now();
    for epoch in 0..cfg.epochs {
        let mut rng = child_rng(derive_seed(cfg.seed, ORDER_STREAM), epoch as u64);
        pairs.sort_unstable();
        pairs.shuffle(&mut rng);
        let mut total = 0.0;
        for &(i, j) in &pairs {
            let (g, loss) = step_loss(&dataset[i], i, j, epoch, &params)?;
            total += optimizer_step(&mut params, &g, loss, &mut state, &adam)?;
            steps += 1;
        }
        let mean = total / pairs.len() as f64;
        epoch_losses.push(mean);
        log.push(LogRow {
            epoch,
            step: steps,
            mode: cfg.mode,
            k: cfg.splits(),
            rho: cfg.rho,
            loss: mean,
            wall_time: start.elapsed().as_secs_f64(),
        });
    }
    Ok(TrainOutcome { params, epoch_losses, steps, log })
}

/// Minimize the mean reference-k-space loss over the dataset.
pub fn train_supervised(dataset: &[TrainingSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    if cfg.mode != TrainMode::Supervised {
        return Err(Error::Mode(format!("train_supervised called with mode {}", cfg.mode.as_str())));
    }
    if let Some(i) = dataset.iter().position(|s| s.y_ref.is_none()) {
        return Err(Error::Mode(format!("sample {i} has no reference k-space")));
    }
    let unroll = cfg.unroll;
    run_loop(dataset, cfg, 1, |s, _, _, _, p| supervised_loss(s, p, &unroll))
}

/// Single-mask SSDU. Runs the multi-mask loop with `K = 1`.
pub fn train_ssdu(dataset: &[TrainingSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    if cfg.mode != TrainMode::Ssdu {
        return Err(Error::Mode(format!("train_ssdu called with mode {}", cfg.mode.as_str())));
    }
    self_supervised(dataset, cfg)
}

/// Multi-mask SSDU over all `N * K` `(sample, split)` pairs per epoch.
pub fn train_multimask(dataset: &[TrainingSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    if !matches!(cfg.mode, TrainMode::MultiMask | TrainMode::CyclicMultiMask) {
        return Err(Error::Mode(format!("train_multimask called with mode {}", cfg.mode.as_str())));
    }
    self_supervised(dataset, cfg)
}

fn self_supervised(dataset: &[TrainingSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let k = cfg.splits();
    for (i, s) in dataset.iter().enumerate() {
        let p = s.partition.as_ref().ok_or_else(|| Error::config(format!("sample {i} has no partitions")))?;
        if p.k != k {
            return Err(Error::config(format!("sample {i} has K = {} partitions, config asks for {k}", p.k)));
        }
        p.validate(s.y_omega.pattern())?;
    }
    let unroll = cfg.unroll;
    let mut fresh: Option<(usize, Vec<PartitionSet>)> = None;
    run_loop(dataset, cfg, k, |s, i, j, epoch, p| {
        let part = if cfg.regenerate_masks && epoch > 0 {
            if fresh.as_ref().map(|f| f.0) != Some(epoch) {
                let sets = dataset
                    .iter()
                    .enumerate()
                    .map(|(n, d)| cfg.partition_for(&d.y_omega, n, epoch))
                    .collect::<Result<Vec<_>>>()?;
                fresh = Some((epoch, sets));
            }
            &fresh.as_ref().unwrap().1[i]
        } else {
            s.partition.as_ref().unwrap()
        };
        let (g, loss, _) = self_supervised_loss(s, &part.theta[j], &part.lambda[j], p, &unroll)?;
        Ok((g, loss))
    })
}

/// Dispatch on `cfg.mode`; partitions are generated from the config.
pub fn train(dataset: &[TrainingSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let data = attach_partitions(dataset, cfg)?;
    match cfg.mode {
        TrainMode::Supervised => train_supervised(&data, cfg),
        TrainMode::Ssdu => train_ssdu(&data, cfg),
        TrainMode::MultiMask | TrainMode::CyclicMultiMask => train_multimask(&data, cfg),
    }
}

/// Unrolled reconstruction from all of `y`, multiplied back by `y.scale()`.
pub fn reconstruct_test(
    y: &KSpaceSample,
    coils: &CoilSensitivities,
    params: &NetworkParams,
    cfg: &UnrollConfig,
) -> Result<ComplexImage> {
    let trace = unrolled_forward(y, coils, params, cfg)?;
    Ok(trace.output().scaled(y.scale()))
}
