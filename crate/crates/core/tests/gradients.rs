//! Analytic gradients of every network component against central finite
//! differences.

mod common;

use common::{gradient_check, jitter_params, random_points, random_tensor, rng, tiny_frame, weighted_sum};
use posediff_core::conditioning::{
    encode_2d, encode_3d, extract_joint_conditions, global_vectors, Encoder2dParams,
    Encoder3dParams, JointConditionParams,
};
use posediff_core::denoiser::{block_forward, denoise, gcn_evolve, pool_update, refine, DenoiserInputs, DenoiserParams};
use posediff_core::diffusion::gaussian_pose;
use posediff_core::init::Init;
use posediff_core::optim::ParamStore;
use posediff_core::{Components, Pose, Tensor};

const COMPONENT_TOL: f64 = 1e-4;
const END_TO_END_TOL: f64 = 1e-3;

fn assert_within(results: &[(String, f64)], tol: f64) {
    assert!(!results.is_empty());
    for (name, err) in results {
        assert!(*err < tol, "{name}: relative error {err:e} ≥ {tol:e}");
    }
}

#[test]
fn encoder_2d_gradients() {
    let mut r = rng(1);
    let mut store = ParamStore::new();
    let p = Encoder2dParams::new(&mut Init::new(&mut store, &mut r), 8, 4).unwrap();
    jitter_params(&mut store, 0.1, &mut r);
    let (frame, transform) = tiny_frame(8, &mut r);
    let res = gradient_check(&mut store, 40, |g, s| {
        let (local, global) = encode_2d(g, s, &p, &frame, &transform).unwrap();
        let a = weighted_sum(g, local.features, 11);
        let b = weighted_sum(g, global, 12);
        g.add(a, b).unwrap()
    });
    assert_within(&res, COMPONENT_TOL);
}

#[test]
fn encoder_3d_gradients() {
    let mut r = rng(2);
    let mut store = ParamStore::new();
    let p = Encoder3dParams::new(&mut Init::new(&mut store, &mut r), 4, 5, 4).unwrap();
    jitter_params(&mut store, 0.1, &mut r);
    let points = random_points(32, 1.0, &mut r);
    let res = gradient_check(&mut store, 40, |g, s| {
        let (local, global) = encode_3d(g, s, &p, &points).unwrap();
        let a = weighted_sum(g, local.features, 21);
        let b = weighted_sum(g, global, 22);
        g.add(a, b).unwrap()
    });
    assert_within(&res, COMPONENT_TOL);
}

#[test]
fn joint_condition_gradients() {
    for per_joint in [true, false] {
        let mut r = rng(3);
        let mut store = ParamStore::new();
        let p = JointConditionParams::new(&mut Init::new(&mut store, &mut r), 6, 5, 4, per_joint).unwrap();
        let v2d = store.add("input.v2d", random_tensor(&[1, 3], 1.0, &mut r)).unwrap();
        let v3d = store.add("input.v3d", random_tensor(&[1, 3], 1.0, &mut r)).unwrap();
        jitter_params(&mut store, 0.1, &mut r);
        let res = gradient_check(&mut store, 40, |g, s| {
            let a = g.param(s, v2d).unwrap();
            let b = g.param(s, v3d).unwrap();
            let globals = global_vectors(g, a, b).unwrap();
            let jc = extract_joint_conditions(g, s, &p, &globals).unwrap();
            let mut loss = weighted_sum(g, jc.c, 31);
            if let Some(aux) = jc.aux {
                let x = weighted_sum(g, aux, 32);
                loss = g.add(loss, x).unwrap();
            }
            loss
        });
        assert_within(&res, COMPONENT_TOL);
    }
}

#[test]
fn condition_evolution_gradients() {
    let (j, c) = (4, 5);
    for groups in [1, 3] {
        for with_adjacency in [true, false] {
            let mut r = rng(4 + groups as u64);
            let mut store = ParamStore::new();
            let cond = store.add("cond", random_tensor(&[groups * j, c], 1.0, &mut r)).unwrap();
            let adj = store.add("adj", random_tensor(&[j, j, c], 1.0, &mut r)).unwrap();
            let w = store.add("w", random_tensor(&[c, c], 1.0, &mut r)).unwrap();
            let res = gradient_check(&mut store, 100, |g, s| {
                let x = g.param(s, cond).unwrap();
                let a = with_adjacency.then(|| g.param(s, adj).unwrap());
                let w = g.param(s, w).unwrap();
                let y = gcn_evolve(g, x, a, w).unwrap();
                weighted_sum(g, y, 41)
            });
            let res: Vec<_> = res
                .into_iter()
                .filter(|(name, _)| with_adjacency || name != "adj")
                .collect();
            assert_within(&res, COMPONENT_TOL);
        }
    }
}

#[test]
fn neighbor_mlp_gradients() {
    let (j, k, n_in, j_in, c) = (3, 4, 6, 5, 4);
    let mut r = rng(5);
    let mut store = ParamStore::new();
    let nb = store.add("neighbors", random_tensor(&[j * k, n_in], 1.0, &mut r)).unwrap();
    let ji = store.add("joint_inputs", random_tensor(&[j, j_in], 1.0, &mut r)).unwrap();
    let wn = store.add("w_neighbor", random_tensor(&[n_in, c], 1.0, &mut r)).unwrap();
    let wj = store.add("w_joint", random_tensor(&[j_in, c], 1.0, &mut r)).unwrap();
    let b = store.add("bias", random_tensor(&[c], 1.0, &mut r)).unwrap();
    let res = gradient_check(&mut store, 100, |g, s| {
        let vars: Vec<_> = [nb, ji, wn, wj, b].iter().map(|&id| g.param(s, id).unwrap()).collect();
        let y = block_forward(g, vars[0], vars[1], vars[2], vars[3], vars[4], k).unwrap();
        weighted_sum(g, y, 51)
    });
    assert_within(&res, COMPONENT_TOL);
}

#[test]
fn pooling_gradients() {
    let mut r = rng(6);
    let mut store = ParamStore::new();
    let x = store.add("evolved", random_tensor(&[12, 5], 1.0, &mut r)).unwrap();
    let res = gradient_check(&mut store, 100, |g, s| {
        let v = g.param(s, x).unwrap();
        let y = pool_update(g, v, 4).unwrap();
        weighted_sum(g, y, 61)
    });
    assert_within(&res, COMPONENT_TOL);
}

#[test]
fn refiner_gradients() {
    let mut r = rng(7);
    let mut store = ParamStore::new();
    let e = store.add("embeddings", random_tensor(&[4, 6], 1.0, &mut r)).unwrap();
    let w = store.add("w", random_tensor(&[6, 3], 1.0, &mut r)).unwrap();
    let n = store.add("noisy", random_tensor(&[4, 3], 1.0, &mut r)).unwrap();
    let res = gradient_check(&mut store, 100, |g, s| {
        let (e, w, n) = (g.param(s, e).unwrap(), g.param(s, w).unwrap(), g.param(s, n).unwrap());
        let y = refine(g, e, w, n).unwrap();
        let d = g.smooth_l1(y).unwrap();
        g.sum(d).unwrap()
    });
    assert_within(&res, COMPONENT_TOL);
}

/// The whole estimator on a tiny configuration (J = 4, K = 4 per branch, d_c = 8),
/// including the auxiliary head and the smooth-L1 loss. Returns the
/// per-tensor relative errors.
fn end_to_end(requery: bool) -> Vec<(String, f64)> {
    let joints = 4;
    let mut r = rng(8);
    let mut store = ParamStore::new();
    let (enc2d, enc3d, jc, den) = {
        let mut init = Init::new(&mut store, &mut r);
        let enc2d = Encoder2dParams::new(&mut init, 8, 4).unwrap();
        let enc3d = Encoder3dParams::new(&mut init, 4, 4, 4).unwrap();
        let jc = JointConditionParams::new(&mut init, 8, 8, joints, true).unwrap();
        let den = DenoiserParams::new(
            &mut init,
            joints,
            &[(0, 1), (1, 2), (2, 3)],
            (4, 4, 8, 4),
            4,
            4,
            2,
            Components::FULL,
            requery,
            0.01,
        )
        .unwrap();
        (enc2d, enc3d, jc, den)
    };
    jitter_params(&mut store, 0.05, &mut r);
    let (frame, transform) = tiny_frame(8, &mut r);
    let points = random_points(32, 0.8, &mut r);
    let target = Pose::new(random_points(joints, 0.5, &mut r)).unwrap();
    let noisy = vec![gaussian_pose(joints, &mut r), gaussian_pose(joints, &mut r)];
    let target_rows = Tensor::new(
        &[2 * joints, 3],
        [target.to_tensor().into_data(), target.to_tensor().into_data()].concat(),
    )
    .unwrap();

    let res = gradient_check(&mut store, 12, |g, s| {
        let (l2, v2) = encode_2d(g, s, &enc2d, &frame, &transform).unwrap();
        let (l3, v3) = encode_3d(g, s, &enc3d, &points).unwrap();
        let globals = global_vectors(g, v2, v3).unwrap();
        let c = extract_joint_conditions(g, s, &jc, &globals).unwrap();
        let inputs = DenoiserInputs { conditions: c.c, local2d: &l2, local3d: &l3 };
        let est = denoise(g, s, &den, &inputs, &noisy, 7).unwrap();
        let t = g.constant(target_rows.clone()).unwrap();
        let d = g.sub(est, t).unwrap();
        let d = g.smooth_l1(d).unwrap();
        let main = g.sum(d).unwrap();
        let t1 = g.constant(target.to_tensor()).unwrap();
        let a = g.sub(c.aux.unwrap(), t1).unwrap();
        let a = g.smooth_l1(a).unwrap();
        let aux = g.sum(a).unwrap();
        g.add(main, aux).unwrap()
    });
    assert_eq!(res.len(), store.len());
    res
}

#[test]
fn end_to_end_gradients() {
    assert_within(&end_to_end(false), END_TO_END_TOL);
}

/// Re-centred neighborhoods treat the intermediate estimate as a constant,
/// so finite differences (which see the centres move) disagree exactly on
/// the parameters upstream of the re-query, and nowhere else.
#[test]
fn requery_is_a_stop_gradient() {
    let res = end_to_end(true);
    let last_block: Vec<_> = res.iter().filter(|(n, _)| n.starts_with("block1.")).cloned().collect();
    assert_within(&last_block, END_TO_END_TOL);
    assert!(res.iter().any(|(n, e)| n.starts_with("block0.") && *e > END_TO_END_TOL));
}
