//! Permutation structure of the denoiser under component ablations.

mod common;

use common::{jitter_params, rng};
use posediff_core::diffusion::gaussian_pose;
use posediff_core::synth::{self, SynthOptions};
use posediff_core::train::prepare_samples;
use posediff_core::{Components, Config, Graph, Model, ModelInput, Pose, Profile};
use rand::seq::SliceRandom;

fn config(components: Components) -> Config {
    let mut c = Config::profile(Profile::Fast);
    c.seed = 3;
    c.components = components;
    c
}

const LC_ONLY: Components = Components { jc: false, lc: true, ji: false, kc: false, mh: false };

fn input(config: &Config) -> ModelInput {
    let ds = synth::generate(&SynthOptions { joints: 21, count: 1, seed: 5, occluder: false }).unwrap();
    let samples = prepare_samples(&ds, config).unwrap();
    ModelInput::from_sample(&samples[0], config).unwrap()
}

/// Largest deviation between `denoise(P·x)` and `P·denoise(x)` over
/// `trials` random permutations.
fn max_deviation(components: Components, trials: usize) -> f64 {
    let config = config(components);
    let mut model = Model::new(&config).unwrap();
    let mut r = rng(11);
    // The refiner starts at zero, which makes any denoiser the identity;
    // perturb everything so the check is not vacuous.
    jitter_params(&mut model.store, 0.05, &mut r);
    let input = input(&config);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let noisy = gaussian_pose(21, &mut r).map(|p| [p[0] * 0.5, p[1] * 0.5, p[2] * 0.5]);
        let mut perm: Vec<usize> = (0..21).collect();
        perm.shuffle(&mut r);
        let t = 1 + perm[0] * 4;
        let run = |pose: &Pose| {
            let mut g = Graph::inference();
            let enc = model.encode(&mut g, &input).unwrap();
            let out = model.denoise(&mut g, &enc, std::slice::from_ref(pose), t).unwrap();
            Pose::from_tensor(g.value(out)).unwrap()
        };
        let direct = run(&noisy).permuted(&perm);
        let permuted = run(&noisy.permuted(&perm));
        worst = worst.max(direct.max_abs_diff(&permuted));
    }
    worst
}

#[test]
fn local_conditions_alone_are_permutation_equivariant() {
    assert_eq!(max_deviation(LC_ONLY, 100), 0.0);
}

#[test]
fn joint_indicator_breaks_equivariance() {
    assert!(max_deviation(Components { ji: true, ..LC_ONLY }, 5) > 0.0);
}

#[test]
fn joint_conditions_break_equivariance() {
    assert!(max_deviation(Components { jc: true, ..LC_ONLY }, 5) > 0.0);
}

#[test]
fn hypotheses_flag_leaves_training_untouched() {
    let on = Model::new(&config(Components::FULL)).unwrap();
    let off = Model::new(&config(Components { mh: false, ..Components::FULL })).unwrap();
    assert_eq!(on.store.len(), off.store.len());
    for id in on.store.ids() {
        assert_eq!(on.store.name(id), off.store.name(id));
        assert_eq!(on.store.get(id), off.store.get(id));
    }
    let c_on = config(Components::FULL);
    let input = input(&c_on);
    let target = gaussian_pose(21, &mut rng(1));
    let noise = gaussian_pose(21, &mut rng(2));
    let loss = |m: &Model| {
        let mut g = Graph::new();
        let l = m.loss(&mut g, &input, &target, 40, &noise).unwrap();
        g.value(l.total).data()[0]
    };
    assert_eq!(loss(&on), loss(&off));
}
