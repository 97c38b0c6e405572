//! Flat `key = value` configuration covering every tunable.
//!
//! Two profiles set the defaults: `fast` (desk-scale, trains in minutes on a
//! single core) and `paper` (the full-size hyperparameters). A `profile` line
//! resets every other key to that profile's defaults, so it should come first.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::diffusion::ScheduleKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    Invalid {
        key: String,
        value: String,
        reason: String,
    },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("inconsistent configuration: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Fast,
    Paper,
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Fast => "fast",
            Profile::Paper => "paper",
        })
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fast" => Ok(Profile::Fast),
            "paper" => Ok(Profile::Paper),
            _ => Err("expected fast or paper".into()),
        }
    }
}

/// Component switches for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Components {
    /// Joint-wise conditions (per-joint biases and the auxiliary `J^c` loss).
    pub jc: bool,
    /// Local conditions (neighbor features around each noisy joint).
    pub lc: bool,
    /// Joint indicator embedding.
    pub ji: bool,
    /// Kinematic correspondence (channel-wise joint graph).
    pub kc: bool,
    /// Multiple hypotheses at inference.
    pub mh: bool,
}

impl Components {
    pub const FULL: Components = Components {
        jc: true,
        lc: true,
        ji: true,
        kc: true,
        mh: true,
    };

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.kc && !self.lc {
            return Err(ConfigError::Inconsistent(
                "kinematic correspondence (kc) requires local conditions (lc)".into(),
            ));
        }
        Ok(())
    }

    /// Short label such as `JC+LC+JI`.
    pub fn label(&self) -> String {
        let names: Vec<&str> = [
            (self.jc, "JC"),
            (self.lc, "LC"),
            (self.ji, "JI"),
            (self.kc, "KC"),
            (self.mh, "MH"),
        ]
        .into_iter()
        .filter_map(|(on, n)| on.then_some(n))
        .collect();
        if names.is_empty() {
            "none".into()
        } else {
            names.join("+")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub profile: Profile,
    pub seed: u64,

    // data
    pub joints: usize,
    pub count: usize,
    pub occluder: bool,
    pub image_size: usize,
    pub crop_mm: f64,
    pub points: usize,
    pub augment: bool,

    // network
    pub k3: usize,
    pub k2: usize,
    pub sa_k: usize,
    pub sa_hidden: usize,
    pub d2d: usize,
    pub d3d: usize,
    pub dc: usize,
    pub dpe: usize,
    pub blocks: usize,
    pub requery: bool,
    pub adjacency_noise: f64,
    pub components: Components,

    // diffusion
    pub kind: ScheduleKind,
    pub total_steps: usize,
    pub timesteps: usize,
    pub hypotheses: usize,

    // optimization
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch: usize,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub aux_weight: f64,
}

/// Every key in dump order.
pub const KEYS: &[&str] = &[
    "profile",
    "seed",
    "joints",
    "count",
    "occluder",
    "image_size",
    "crop_mm",
    "points",
    "augment",
    "k3",
    "k2",
    "sa_k",
    "sa_hidden",
    "d2d",
    "d3d",
    "dc",
    "dpe",
    "blocks",
    "requery",
    "adjacency_noise",
    "jc",
    "lc",
    "ji",
    "kc",
    "mh",
    "kind",
    "T",
    "timesteps",
    "hypotheses",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "weight_decay",
    "epochs",
    "batch",
    "lr_decay",
    "lr_decay_every",
    "aux_weight",
];

impl Default for Config {
    fn default() -> Self {
        Self::profile(Profile::Fast)
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Invalid {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

impl Config {
    pub fn profile(profile: Profile) -> Self {
        let fast = Config {
            profile,
            seed: 0,
            joints: 21,
            count: 2000,
            occluder: false,
            image_size: 32,
            crop_mm: 250.0,
            points: 128,
            augment: true,
            k3: 8,
            k2: 8,
            sa_k: 16,
            sa_hidden: 16,
            d2d: 32,
            d3d: 32,
            dc: 64,
            dpe: 32,
            blocks: 4,
            requery: false,
            adjacency_noise: 0.01,
            components: Components::FULL,
            kind: ScheduleKind::Cosine,
            total_steps: 100,
            timesteps: 10,
            hypotheses: 10,
            lr: 1e-3,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            epochs: 30,
            batch: 16,
            lr_decay: 0.1,
            lr_decay_every: 10,
            aux_weight: 1.0,
        };
        match profile {
            Profile::Fast => fast,
            Profile::Paper => Config {
                image_size: 128,
                points: 1024,
                k3: 32,
                k2: 32,
                sa_k: 32,
                sa_hidden: 64,
                d2d: 128,
                d3d: 128,
                dc: 512,
                total_steps: 500,
                batch: 64,
                ..fast
            },
        }
    }

    /// Set one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key {
            "profile" => {
                let profile = parse::<Profile>(key, v)?;
                let seed = self.seed;
                *self = Config::profile(profile);
                self.seed = seed;
            }
            "seed" => self.seed = parse(key, v)?,
            "joints" => self.joints = parse(key, v)?,
            "count" => self.count = parse(key, v)?,
            "occluder" => self.occluder = parse(key, v)?,
            "image_size" => self.image_size = parse(key, v)?,
            "crop_mm" => self.crop_mm = parse(key, v)?,
            "points" => self.points = parse(key, v)?,
            "augment" => self.augment = parse(key, v)?,
            "k3" => self.k3 = parse(key, v)?,
            "k2" => self.k2 = parse(key, v)?,
            "sa_k" => self.sa_k = parse(key, v)?,
            "sa_hidden" => self.sa_hidden = parse(key, v)?,
            "d2d" => self.d2d = parse(key, v)?,
            "d3d" => self.d3d = parse(key, v)?,
            "dc" => self.dc = parse(key, v)?,
            "dpe" => self.dpe = parse(key, v)?,
            "blocks" => self.blocks = parse(key, v)?,
            "requery" => self.requery = parse(key, v)?,
            "adjacency_noise" => self.adjacency_noise = parse(key, v)?,
            "jc" => self.components.jc = parse(key, v)?,
            "lc" => self.components.lc = parse(key, v)?,
            "ji" => self.components.ji = parse(key, v)?,
            "kc" => self.components.kc = parse(key, v)?,
            "mh" => self.components.mh = parse(key, v)?,
            "kind" => self.kind = parse(key, v)?,
            "T" => self.total_steps = parse(key, v)?,
            "timesteps" => self.timesteps = parse(key, v)?,
            "hypotheses" => self.hypotheses = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "beta1" => self.beta1 = parse(key, v)?,
            "beta2" => self.beta2 = parse(key, v)?,
            "eps" => self.eps = parse(key, v)?,
            "weight_decay" => self.weight_decay = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "batch" => self.batch = parse(key, v)?,
            "lr_decay" => self.lr_decay = parse(key, v)?,
            "lr_decay_every" => self.lr_decay_every = parse(key, v)?,
            "aux_weight" => self.aux_weight = parse(key, v)?,
            other => return Err(ConfigError::UnknownKey(other.into())),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "profile" => self.profile.to_string(),
            "seed" => self.seed.to_string(),
            "joints" => self.joints.to_string(),
            "count" => self.count.to_string(),
            "occluder" => self.occluder.to_string(),
            "image_size" => self.image_size.to_string(),
            "crop_mm" => self.crop_mm.to_string(),
            "points" => self.points.to_string(),
            "augment" => self.augment.to_string(),
            "k3" => self.k3.to_string(),
            "k2" => self.k2.to_string(),
            "sa_k" => self.sa_k.to_string(),
            "sa_hidden" => self.sa_hidden.to_string(),
            "d2d" => self.d2d.to_string(),
            "d3d" => self.d3d.to_string(),
            "dc" => self.dc.to_string(),
            "dpe" => self.dpe.to_string(),
            "blocks" => self.blocks.to_string(),
            "requery" => self.requery.to_string(),
            "adjacency_noise" => self.adjacency_noise.to_string(),
            "jc" => self.components.jc.to_string(),
            "lc" => self.components.lc.to_string(),
            "ji" => self.components.ji.to_string(),
            "kc" => self.components.kc.to_string(),
            "mh" => self.components.mh.to_string(),
            "kind" => self.kind.to_string(),
            "T" => self.total_steps.to_string(),
            "timesteps" => self.timesteps.to_string(),
            "hypotheses" => self.hypotheses.to_string(),
            "lr" => self.lr.to_string(),
            "beta1" => self.beta1.to_string(),
            "beta2" => self.beta2.to_string(),
            "eps" => self.eps.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            "epochs" => self.epochs.to_string(),
            "batch" => self.batch.to_string(),
            "lr_decay" => self.lr_decay.to_string(),
            "lr_decay_every" => self.lr_decay_every.to_string(),
            "aux_weight" => self.aux_weight.to_string(),
            _ => return None,
        })
    }

    /// Parse `key = value` lines on top of the defaults. `#` starts a comment.
    pub fn parse_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Config::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_owned(),
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Every key, one per line, in a form [`Config::parse_text`] reads back.
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("listed key")))
            .collect()
    }

    /// Check every module precondition that can be checked up front.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, reason: &str| {
            Err(ConfigError::Invalid {
                key: key.into(),
                value: self.get(key).unwrap_or_default(),
                reason: reason.into(),
            })
        };
        if self.joints != 21 && self.joints != 16 {
            return bad("joints", "supported layouts have 21 or 16 joints");
        }
        if self.image_size < 8 || !self.image_size.is_multiple_of(4) {
            return bad("image_size", "must be a multiple of 4 and at least 8");
        }
        if !(self.crop_mm > 0.0) {
            return bad("crop_mm", "must be positive");
        }
        if self.points < 8 {
            return bad("points", "need at least 8 points");
        }
        if self.k3 == 0 || self.k3 > self.points / 2 {
            return bad("k3", "must be in 1..=points/2");
        }
        if self.k2 == 0 {
            return bad("k2", "must be at least 1");
        }
        if self.sa_k == 0 || self.sa_k > self.points {
            return bad("sa_k", "must be in 1..=points");
        }
        for key in ["sa_hidden", "d2d", "d3d", "dc", "blocks", "epochs", "batch", "lr_decay_every"] {
            if self.get(key).as_deref() == Some("0") {
                return bad(key, "must be positive");
            }
        }
        if self.dpe == 0 || !self.dpe.is_multiple_of(2) {
            return bad("dpe", "must be a positive even number");
        }
        if self.total_steps < 2 {
            return bad("T", "must be at least 2");
        }
        if self.timesteps == 0 || self.timesteps > self.total_steps {
            return bad("timesteps", "must be in 1..=T");
        }
        if self.hypotheses == 0 {
            return bad("hypotheses", "must be at least 1");
        }
        if !(self.lr > 0.0) {
            return bad("lr", "must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return bad("beta1", "must be in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return bad("beta2", "must be in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return bad("eps", "must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay", "must be non-negative");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay", "must be in (0, 1]");
        }
        if !(self.aux_weight >= 0.0) {
            return bad("aux_weight", "must be non-negative");
        }
        if !(self.adjacency_noise >= 0.0) {
            return bad("adjacency_noise", "must be non-negative");
        }
        self.components.validate()
    }

    /// Hypotheses actually drawn at inference (1 when `mh` is off).
    pub fn effective_hypotheses(&self) -> usize {
        if self.components.mh {
            self.hypotheses
        } else {
            1
        }
    }

    /// Learning rate for a 0-based epoch under step decay.
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi((epoch / self.lr_decay_every) as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trips() {
        let mut cfg = Config::profile(Profile::Paper);
        cfg.seed = 42;
        cfg.components.kc = false;
        cfg.lr = 3.5e-4;
        assert_eq!(Config::parse_text(&cfg.to_text()).unwrap(), cfg);
        assert_eq!(Config::parse_text(&Config::default().to_text()).unwrap(), Config::default());
    }

    #[test]
    fn every_key_is_gettable() {
        let cfg = Config::default();
        for k in KEYS {
            assert!(cfg.get(k).is_some(), "{k}");
        }
    }

    #[test]
    fn unknown_key_is_named() {
        let err = Config::parse_text("lr = 0.1\nbogus = 3\n").unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey("bogus".into()));
    }

    #[test]
    fn comments_and_blank_lines() {
        let cfg = Config::parse_text("# header\n\nseed = 9 # trailing\n").unwrap();
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn paper_hyperparameters() {
        let p = Config::profile(Profile::Paper);
        assert_eq!((p.image_size, p.points, p.d2d, p.d3d, p.dc), (128, 1024, 128, 128, 512));
        assert_eq!((p.total_steps, p.kind, p.batch, p.epochs), (500, ScheduleKind::Cosine, 64, 30));
        assert_eq!((p.lr, p.beta1, p.beta2), (1e-3, 0.5, 0.999));
        assert_eq!((p.timesteps, p.hypotheses), (10, 10));
    }

    #[test]
    fn kc_without_lc_rejected() {
        let mut cfg = Config::default();
        cfg.components.lc = false;
        assert!(matches!(cfg.validate(), Err(ConfigError::Inconsistent(_))));
        cfg.components.kc = false;
        cfg.validate().unwrap();
    }

    #[test]
    fn step_decay() {
        let cfg = Config::default();
        assert_eq!(cfg.lr_at_epoch(0), 1e-3);
        assert!((cfg.lr_at_epoch(10) - 1e-4).abs() < 1e-18);
        assert!((cfg.lr_at_epoch(29) - 1e-5).abs() < 1e-18);
    }

    #[test]
    fn validation_catches_ranges() {
        let mut cfg = Config::default();
        cfg.timesteps = cfg.total_steps + 1;
        assert!(cfg.validate().is_err());
        let cfg = Config { joints: 17, ..Config::default() };
        assert!(cfg.validate().is_err());
        Config::profile(Profile::Paper).validate().unwrap();
    }
}
