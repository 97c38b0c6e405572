//! Mini-batch training: corrupt the ground truth at a uniformly drawn
//! timestep, denoise it in one shot, and regress the clean pose (plus the
//! joint-wise auxiliary coordinates) under a smooth-L1 loss.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::autograd::Graph;
use crate::config::Config;
use crate::diffusion::gaussian_pose;
use crate::error::{Error, Result};
use crate::geometry::{augment, AugmentationParams};
use crate::model::{streams, Model, ModelInput};
use crate::optim::{AdamW, ParamGrads};
use crate::rng::{self, Rng as StdRng};
use crate::sample::FrameSample;
use crate::synth::Dataset;

/// Loss terms of one training sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub denoiser: f64,
    /// Zero when the model has no auxiliary head.
    pub auxiliary: f64,
    pub timestep: usize,
}

/// Averages over one optimizer step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub samples: Vec<LossReport>,
    pub total: f64,
    pub denoiser: f64,
    pub auxiliary: f64,
    pub grad_norm: f64,
}

/// Averages over one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub lr: f64,
    pub total: f64,
    pub denoiser: f64,
    pub auxiliary: f64,
}

impl EpochReport {
    pub const CSV_HEADER: &'static str = "epoch,lr,loss,denoiser_loss,aux_loss";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.9},{:.9},{:.9}",
            self.epoch, self.lr, self.total, self.denoiser, self.auxiliary
        )
    }
}

impl fmt::Display for EpochReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch {:>3}  lr {:.1e}  loss {:.5}  (denoiser {:.5}, aux {:.5})",
            self.epoch, self.lr, self.total, self.denoiser, self.auxiliary
        )
    }
}

/// Turn stored frames into model samples. Each frame draws its point subset
/// from its own stream of the root seed.
pub fn prepare_samples(dataset: &Dataset, config: &Config) -> Result<Vec<FrameSample>> {
    if dataset.frames.is_empty() {
        return Err(Error::Precondition("dataset has no frames".into()));
    }
    if dataset.joints != config.joints {
        return Err(Error::Precondition(format!(
            "dataset has {} joints but the configuration expects {}",
            dataset.joints, config.joints
        )));
    }
    let base = rng::derive(config.seed, streams::PREPARE);
    dataset
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let mut r = rng::stream(base, i as u64);
            Ok(FrameSample::new(i, f.depth.clone(), f.joints_mm.clone(), config.points, &mut r)?)
        })
        .collect()
}

/// Owns the model, optimizer state and the training random stream.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Model,
    pub optimizer: AdamW,
    rng: StdRng,
    epoch: usize,
}

impl Trainer {
    pub fn new(model: Model) -> Self {
        let c = &model.config;
        let optimizer = AdamW {
            lr: c.lr,
            beta1: c.beta1,
            beta2: c.beta2,
            eps: c.eps,
            weight_decay: c.weight_decay,
        };
        let rng = rng::stream(rng::derive(c.seed, streams::TRAIN), 0);
        Self {
            model,
            optimizer,
            rng,
            epoch: 0,
        }
    }

    /// Epochs completed so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    /// Loss and gradients of one sample, scaled by `weight`, accumulated
    /// into `grads`.
    fn sample_loss(&mut self, sample: &FrameSample, weight: f64, grads: &mut ParamGrads) -> Result<LossReport> {
        let config = &self.model.config;
        let sample = if config.augment {
            augment(sample, &AugmentationParams::sample(&mut self.rng))?
        } else {
            sample.clone()
        };
        let input = ModelInput::from_sample(&sample, config)?;
        let t = self.rng.random_range(1..=self.model.schedule.total_steps());
        let noise = gaussian_pose(config.joints, &mut self.rng);
        let mut g = Graph::new();
        let vars = match self.model.loss(&mut g, &input, &sample.joints_norm, t, &noise) {
            Ok(v) => v,
            Err(Error::Tensor(e)) => {
                return Err(Error::Precondition(format!(
                    "forward pass failed on frame {} at t = {t}: {e}; non-finite parameters: {:?}",
                    sample.id,
                    self.model.store.non_finite()
                )))
            }
            Err(e) => return Err(e),
        };
        let report = LossReport {
            total: g.value(vars.total).data()[0],
            denoiser: g.value(vars.denoiser).data()[0],
            auxiliary: vars.auxiliary.map_or(0.0, |a| g.value(a).data()[0]),
            timestep: t,
        };
        if !report.total.is_finite() {
            return Err(Error::Precondition(format!(
                "non-finite loss on frame {} at t = {t}: {report:?}; non-finite parameters: {:?}",
                sample.id,
                self.model.store.non_finite()
            )));
        }
        g.backward(vars.total)?.accumulate_into(grads, &self.model.store, weight);
        Ok(report)
    }

    /// One optimizer step on the mean loss of `batch`.
    pub fn train_step(&mut self, batch: &[&FrameSample], lr: f64) -> Result<StepReport> {
        if batch.is_empty() {
            return Err(Error::Precondition("empty training batch".into()));
        }
        let mut grads = ParamGrads::empty(&self.model.store);
        let weight = 1.0 / batch.len() as f64;
        let samples = batch
            .iter()
            .map(|s| self.sample_loss(s, weight, &mut grads))
            .collect::<Result<Vec<_>>>()?;
        let grad_norm = grads.global_norm();
        if !grad_norm.is_finite() {
            return Err(Error::Precondition(format!(
                "non-finite gradient; batch frames {:?}, losses {samples:?}",
                batch.iter().map(|s| s.id).collect::<Vec<_>>()
            )));
        }
        let optimizer = AdamW { lr, ..self.optimizer };
        optimizer.step(&mut self.model.store, &grads)?;
        let mean = |f: fn(&LossReport) -> f64| samples.iter().map(f).sum::<f64>() * weight;
        Ok(StepReport {
            total: mean(|r| r.total),
            denoiser: mean(|r| r.denoiser),
            auxiliary: mean(|r| r.auxiliary),
            grad_norm,
            samples,
        })
    }

    /// One pass over `samples` in a fresh random order.
    pub fn train_epoch(&mut self, samples: &[FrameSample]) -> Result<EpochReport> {
        if samples.is_empty() {
            return Err(Error::Precondition("no training samples".into()));
        }
        let lr = self.model.config.lr_at_epoch(self.epoch);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut self.rng);
        let batch = self.model.config.batch;
        let (mut total, mut denoiser, mut auxiliary) = (0.0, 0.0, 0.0);
        for chunk in order.chunks(batch) {
            let refs: Vec<&FrameSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let step = self.train_step(&refs, lr)?;
            let w = chunk.len() as f64 / samples.len() as f64;
            total += step.total * w;
            denoiser += step.denoiser * w;
            auxiliary += step.auxiliary * w;
        }
        self.epoch += 1;
        Ok(EpochReport {
            epoch: self.epoch,
            lr,
            total,
            denoiser,
            auxiliary,
        })
    }

    /// Train for the configured number of epochs, reporting after each.
    pub fn fit(
        &mut self,
        samples: &[FrameSample],
        mut on_epoch: impl FnMut(&EpochReport),
    ) -> Result<Vec<EpochReport>> {
        let mut reports = Vec::with_capacity(self.model.config.epochs);
        while self.epoch < self.model.config.epochs {
            let r = self.train_epoch(samples)?;
            on_epoch(&r);
            reports.push(r);
        }
        Ok(reports)
    }
}

/// Render epoch reports as the training log CSV.
pub fn train_log_csv(reports: &[EpochReport]) -> String {
    let mut s = String::from(EpochReport::CSV_HEADER);
    s.push('\n');
    for r in reports {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}
