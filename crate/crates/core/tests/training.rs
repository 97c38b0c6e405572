//! Training-loop behaviour: loss decomposition, overfitting a fixed batch,
//! determinism and failure diagnostics.

mod common;

use common::rng;
use posediff_core::checkpoint;
use posediff_core::diffusion::gaussian_pose;
use posediff_core::synth::{self, SynthOptions};
use posediff_core::train::{prepare_samples, train_log_csv, Trainer};
use posediff_core::{Config, FrameSample, Graph, Model, ModelInput, Profile, Tensor};

fn config() -> Config {
    let mut c = Config::profile(Profile::Fast);
    c.seed = 17;
    c.augment = false;
    c
}

fn samples(config: &Config, count: usize) -> Vec<FrameSample> {
    let ds = synth::generate(&SynthOptions { joints: 21, count, seed: 99, occluder: false }).unwrap();
    prepare_samples(&ds, config).unwrap()
}

#[test]
fn loss_decomposes_and_is_non_negative() {
    let mut c = config();
    c.aux_weight = 0.7;
    let model = Model::new(&c).unwrap();
    let s = &samples(&c, 1)[0];
    let input = ModelInput::from_sample(s, &c).unwrap();
    let mut r = rng(3);
    for t in [1, 30, 100] {
        let noise = gaussian_pose(21, &mut r);
        let mut g = Graph::new();
        let l = model.loss(&mut g, &input, &s.joints_norm, t, &noise).unwrap();
        let total = g.value(l.total).data()[0];
        let den = g.value(l.denoiser).data()[0];
        let aux = g.value(l.auxiliary.unwrap()).data()[0];
        assert!(den >= 0.0 && aux >= 0.0);
        assert!((total - (den + 0.7 * aux)).abs() <= 1e-12 * total.max(1.0));
    }
}

#[test]
fn loss_vanishes_only_at_the_target() {
    let c = config();
    let mut model = Model::new(&c).unwrap();
    let s = &samples(&c, 1)[0];
    let input = ModelInput::from_sample(s, &c).unwrap();
    // Zero noise at t = 1 leaves the pose almost clean; the zero-initialized
    // refiner passes it through, so only the scale √ᾱ₁ separates it from J*.
    let zero = posediff_core::Pose::zeros(21);
    let mut g = Graph::new();
    let l = model.loss(&mut g, &input, &s.joints_norm, 1, &zero).unwrap();
    let den = g.value(l.denoiser).data()[0];
    assert!(den > 0.0 && den < 1e-3, "{den}");
    // Without the auxiliary head the total is the denoiser term alone.
    model.config.components.jc = false;
    let m2 = Model::new(&model.config).unwrap();
    let mut g = Graph::new();
    let l = m2.loss(&mut g, &input, &s.joints_norm, 1, &zero).unwrap();
    assert!(l.auxiliary.is_none());
    assert_eq!(g.value(l.total).data()[0], g.value(l.denoiser).data()[0]);
}

#[test]
fn overfits_a_repeated_batch() {
    let c = config();
    let s = samples(&c, 1).remove(0);
    let batch = vec![&s; 4];
    let mut trainer = Trainer::new(Model::new(&c).unwrap());
    let losses: Vec<f64> = (0..200)
        .map(|_| trainer.train_step(&batch, c.lr).unwrap().total)
        .collect();
    let head = losses[..20].iter().sum::<f64>() / 20.0;
    let tail = losses[180..].iter().sum::<f64>() / 20.0;
    assert!(tail <= 0.5 * head, "loss {head} → {tail}");
}

#[test]
fn training_is_deterministic() {
    let mut c = config();
    c.augment = true;
    c.epochs = 1;
    c.batch = 4;
    let data = samples(&c, 8);
    let run = || {
        let mut t = Trainer::new(Model::new(&c).unwrap());
        let log = train_log_csv(&t.fit(&data, |_| {}).unwrap());
        (log, checkpoint::encode(&t.model.store))
    };
    assert_eq!(run(), run());
}

#[test]
fn non_finite_parameters_abort_with_a_diagnostic() {
    let c = config();
    let data = samples(&c, 2);
    let mut model = Model::new(&c).unwrap();
    let id = model.store.id("bil1.w").unwrap();
    let shape = model.store.get(id).shape().to_vec();
    model.store.set(id, Tensor::full(&shape, f64::NAN)).unwrap();
    let mut t = Trainer::new(model);
    let err = t.train_step(&[&data[0]], 1e-3).unwrap_err().to_string();
    assert!(err.contains("non-finite"), "{err}");
    assert!(err.contains("bil1.w"), "{err}");
}

#[test]
fn learning_rate_steps_down() {
    let c = config();
    assert_eq!(c.lr_at_epoch(0), 1e-3);
    assert_eq!(c.lr_at_epoch(9), 1e-3);
    assert!((c.lr_at_epoch(10) - 1e-4).abs() < 1e-18);
    assert!((c.lr_at_epoch(29) - 1e-5).abs() < 1e-18);
}
