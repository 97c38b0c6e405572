//! The full estimator: encoders, joint-wise conditions and the denoiser,
//! with the training loss and the reverse-diffusion predictor.

use std::path::Path;

use rand::Rng;

use crate::autograd::{Graph, Var};
use crate::checkpoint;
use crate::conditioning::{
    crop_frame, encode_2d, encode_3d, extract_joint_conditions, global_vectors, Encoder2dParams,
    Encoder3dParams, JointConditionParams, LocalConditions2D, LocalConditions3D,
};
use crate::config::Config;
use crate::denoiser::{denoise, unstack, DenoiserInputs, DenoiserParams};
use crate::diffusion::{
    forward_noise, gaussian_pose, reverse_process, subsample_timesteps, DiffusionSchedule,
    HypothesisSet,
};
use crate::error::{Error, Result};
use crate::geometry::{DepthFrame, NormalizationTransform, Point3};
use crate::init::Init;
use crate::optim::ParamStore;
use crate::pose::Pose;
use crate::rng;
use crate::sample::FrameSample;
use crate::synth::{HandModel, JointLayout};
use crate::tensor::Tensor;

/// What the network sees of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    /// Depth crop around the cloud centroid at the configured image size.
    pub crop: DepthFrame,
    /// Normalized cloud points.
    pub points: Vec<Point3>,
    pub transform: NormalizationTransform,
}

impl ModelInput {
    pub fn from_sample(sample: &FrameSample, config: &Config) -> Result<Self> {
        let crop = crop_frame(
            &sample.raw_points,
            sample.cloud.transform.centroid,
            config.crop_mm,
            config.image_size,
        )?;
        Ok(Self {
            crop,
            points: sample.cloud.points.clone(),
            transform: sample.cloud.transform,
        })
    }
}

/// Encoder outputs as graph variables.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub local2d: LocalConditions2D,
    pub local3d: LocalConditions3D,
    pub conditions: Var,
    pub aux: Option<Var>,
}

/// Encoder outputs detached from any graph, reused across reverse steps.
#[derive(Debug, Clone)]
pub struct EncodedValues {
    pub features2d: Tensor,
    pub carriers2d: Vec<Option<Point3>>,
    pub side: usize,
    pub features3d: Tensor,
    pub carriers3d: Vec<Point3>,
    pub conditions: Tensor,
    pub aux: Option<Tensor>,
}

/// Loss terms of one sample as graph variables.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub denoiser: Var,
    pub auxiliary: Option<Var>,
    pub estimate: Var,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: Config,
    pub store: ParamStore,
    pub enc2d: Encoder2dParams,
    pub enc3d: Encoder3dParams,
    pub joint_conditions: JointConditionParams,
    pub denoiser: DenoiserParams,
    pub schedule: DiffusionSchedule,
    pub hand: HandModel,
}

/// Stream tags mixed into the root seed.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const EVAL: u64 = 3;
    pub const PREPARE: u64 = 4;
}

impl Model {
    /// Fresh parameters drawn from the configured seed.
    pub fn new(config: &Config) -> Result<Self> {
        config.validate()?;
        let layout = JointLayout::from_count(config.joints)
            .ok_or_else(|| Error::Config(format!("no layout with {} joints", config.joints)))?;
        let hand = HandModel::new(layout);
        let mut store = ParamStore::new();
        let mut rng = rng::stream(rng::derive(config.seed, streams::INIT), 0);
        let mut init = Init::new(&mut store, &mut rng);
        let enc2d = Encoder2dParams::new(&mut init, config.image_size, config.d2d)?;
        let enc3d = Encoder3dParams::new(&mut init, config.sa_k, config.sa_hidden, config.d3d)?;
        let joint_conditions = JointConditionParams::new(
            &mut init,
            config.d2d + config.d3d,
            config.dc,
            config.joints,
            config.components.jc,
        )?;
        let denoiser = DenoiserParams::new(
            &mut init,
            config.joints,
            &hand.skeleton_edges(),
            (config.d2d, config.d3d, config.dc, config.dpe),
            config.k3,
            config.k2,
            config.blocks,
            config.components,
            config.requery,
            config.adjacency_noise,
        )?;
        let schedule = DiffusionSchedule::new(config.kind, config.total_steps)?;
        Ok(Self {
            config: config.clone(),
            store,
            enc2d,
            enc3d,
            joint_conditions,
            denoiser,
            schedule,
            hand,
        })
    }

    /// Model with parameters restored from checkpoint bytes.
    pub fn from_checkpoint(config: &Config, bytes: &[u8]) -> Result<Self> {
        let mut model = Self::new(config)?;
        checkpoint::restore(&mut model.store, bytes)?;
        Ok(model)
    }

    pub fn load(config: &Config, path: &Path) -> Result<Self> {
        let mut model = Self::new(config)?;
        checkpoint::load_into(&mut model.store, path)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(checkpoint::save(&self.store, path)?)
    }

    pub fn joints(&self) -> usize {
        self.config.joints
    }

    pub fn encode(&self, g: &mut Graph, input: &ModelInput) -> Result<Encoded> {
        let (local2d, v2d) = encode_2d(g, &self.store, &self.enc2d, &input.crop, &input.transform)?;
        let (local3d, v3d) = encode_3d(g, &self.store, &self.enc3d, &input.points)?;
        let globals = global_vectors(g, v2d, v3d)?;
        let jc = extract_joint_conditions(g, &self.store, &self.joint_conditions, &globals)?;
        Ok(Encoded {
            local2d,
            local3d,
            conditions: jc.c,
            aux: jc.aux,
        })
    }

    /// Run the encoders once without recording gradients.
    pub fn encode_values(&self, input: &ModelInput) -> Result<EncodedValues> {
        let mut g = Graph::inference();
        let e = self.encode(&mut g, input)?;
        Ok(EncodedValues {
            features2d: g.value(e.local2d.features).clone(),
            carriers2d: e.local2d.carriers,
            side: e.local2d.side,
            features3d: g.value(e.local3d.features).clone(),
            carriers3d: e.local3d.carriers,
            conditions: g.value(e.conditions).clone(),
            aux: e.aux.map(|a| g.value(a).clone()),
        })
    }

    /// Re-enter detached encoder outputs into a graph as constants.
    pub fn encoded_constants(&self, g: &mut Graph, v: &EncodedValues) -> Result<Encoded> {
        Ok(Encoded {
            local2d: LocalConditions2D {
                features: g.constant(v.features2d.clone())?,
                carriers: v.carriers2d.clone(),
                side: v.side,
            },
            local3d: LocalConditions3D {
                features: g.constant(v.features3d.clone())?,
                carriers: v.carriers3d.clone(),
            },
            conditions: g.constant(v.conditions.clone())?,
            aux: match &v.aux {
                Some(a) => Some(g.constant(a.clone())?),
                None => None,
            },
        })
    }

    /// Clean estimates `[H * J, 3]` for noisy hypotheses at timestep `t`.
    pub fn denoise(&self, g: &mut Graph, encoded: &Encoded, noisy: &[Pose], t: usize) -> Result<Var> {
        let inputs = DenoiserInputs {
            conditions: encoded.conditions,
            local2d: &encoded.local2d,
            local3d: &encoded.local3d,
        };
        denoise(g, &self.store, &self.denoiser, &inputs, noisy, t)
    }

    /// Smooth-L1 training loss for one sample corrupted to timestep `t` with
    /// noise `noise`: summed over joints and coordinates, plus the weighted
    /// auxiliary term on the joint-wise coordinates.
    pub fn loss(
        &self,
        g: &mut Graph,
        input: &ModelInput,
        target: &Pose,
        t: usize,
        noise: &Pose,
    ) -> Result<LossVars> {
        let encoded = self.encode(g, input)?;
        let noisy = forward_noise(target, t, noise, &self.schedule)?;
        let estimate = self.denoise(g, &encoded, std::slice::from_ref(&noisy), t)?;
        let target_var = g.constant(target.to_tensor())?;
        let diff = g.sub(estimate, target_var)?;
        let per = g.smooth_l1(diff)?;
        let denoiser = g.sum(per)?;
        let (total, auxiliary) = match encoded.aux {
            Some(aux) if self.config.aux_weight > 0.0 => {
                let d = g.sub(aux, target_var)?;
                let per = g.smooth_l1(d)?;
                let a = g.sum(per)?;
                let weighted = g.scale(a, self.config.aux_weight)?;
                (g.add(denoiser, weighted)?, Some(a))
            }
            _ => (denoiser, None),
        };
        Ok(LossVars {
            total,
            denoiser,
            auxiliary,
            estimate,
        })
    }

    /// Reverse diffusion over `steps` with `hypotheses` independent starts,
    /// averaged at the end. Returns the pose in the normalized frame.
    pub fn predict_with<R: Rng + ?Sized>(
        &self,
        input: &ModelInput,
        steps: &[usize],
        hypotheses: usize,
        rng: &mut R,
    ) -> Result<Pose> {
        let values = self.encode_values(input)?;
        let first = *steps
            .first()
            .ok_or_else(|| Error::Precondition("empty timestep list".into()))?;
        let start = HypothesisSet::new(
            (0..hypotheses.max(1)).map(|_| gaussian_pose(self.joints(), rng)).collect(),
            first,
        )?;
        reverse_process(
            start,
            steps,
            &self.schedule,
            rng,
            |set| {
                let mut g = Graph::inference();
                let enc = self.encoded_constants(&mut g, &values)?;
                let out = self.denoise(&mut g, &enc, set.poses(), set.timestep())?;
                let poses = unstack(g.value(out), self.joints())?;
                Ok(HypothesisSet::new(poses, set.timestep())?)
            },
            |_| {},
        )
    }

    /// [`Model::predict_with`] using `timesteps` evenly spaced steps.
    pub fn predict<R: Rng + ?Sized>(
        &self,
        input: &ModelInput,
        timesteps: usize,
        hypotheses: usize,
        rng: &mut R,
    ) -> Result<Pose> {
        let steps = subsample_timesteps(self.schedule.total_steps(), timesteps)?;
        self.predict_with(input, &steps, hypotheses, rng)
    }
}
