//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use posediff_core::geometry::NormalizationTransform;
use posediff_core::optim::{ParamId, ParamStore};
use posediff_core::rng::{self, Rng as StdRng};
use posediff_core::{CameraIntrinsics, DepthFrame, Graph, Point3, Tensor, Var};
use rand::Rng;

pub fn rng(seed: u64) -> StdRng {
    rng::stream(seed, 0)
}

pub fn random_points<R: Rng>(n: usize, spread: f64, rng: &mut R) -> Vec<Point3> {
    (0..n)
        .map(|_| {
            [
                rng.random_range(-spread..spread),
                rng.random_range(-spread..spread),
                rng.random_range(-spread..spread),
            ]
        })
        .collect()
}

pub fn random_tensor<R: Rng>(shape: &[usize], bound: f64, rng: &mut R) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-bound..bound)).collect()).unwrap()
}

/// Jitter every parameter so that no pre-activation sits on a ReLU kink and
/// zero-initialized tensors contribute.
pub fn jitter_params<R: Rng>(store: &mut ParamStore, bound: f64, rng: &mut R) {
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        for v in store.get_mut(id).data_mut() {
            *v += rng.random_range(-bound..bound);
        }
    }
}

/// A `size × size` crop of a noisy surface around 500 mm with a few holes,
/// and the transform that maps it near the unit ball.
pub fn tiny_frame<R: Rng>(size: usize, rng: &mut R) -> (DepthFrame, NormalizationTransform) {
    let center = [0.0, 0.0, 500.0];
    let k = CameraIntrinsics::crop(center, 250.0, size).unwrap();
    let depth = (0..size * size)
        .map(|i| {
            if i % 7 == 3 {
                0.0
            } else {
                rng.random_range(450.0..550.0)
            }
        })
        .collect();
    let frame = DepthFrame::new(size, size, depth, k).unwrap();
    (frame, NormalizationTransform { centroid: center, scale: 125.0 })
}

/// Norm-wise relative error `‖a − n‖ / max(‖a‖, ‖n‖)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    let denom = na.max(nn);
    if denom < 1e-12 {
        diff
    } else {
        diff / denom
    }
}

/// Compare the analytic gradient of `loss` with central differences for
/// every parameter in `store` (at most `max_entries` entries per tensor,
/// evenly spread). Returns `(parameter name, relative error)` per tensor.
pub fn gradient_check(
    store: &mut ParamStore,
    max_entries: usize,
    loss: impl Fn(&mut Graph, &ParamStore) -> Var,
) -> Vec<(String, f64)> {
    const H: f64 = 1e-6;
    let mut g = Graph::new();
    let l = loss(&mut g, store);
    let grads = g.backward(l).unwrap().param_grads(store);
    let eval = |store: &ParamStore| {
        let mut g = Graph::inference();
        let l = loss(&mut g, store);
        g.value(l).data()[0]
    };
    let ids: Vec<ParamId> = store.ids().collect();
    let mut out = Vec::new();
    for id in ids {
        let n = store.get(id).numel();
        let stride = n.div_ceil(max_entries).max(1);
        let zeros = vec![0.0; n];
        let analytic_all = grads.get(id).map_or(&zeros[..], |t| t.data());
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for i in (0..n).step_by(stride) {
            let orig = store.get(id).data()[i];
            store.get_mut(id).data_mut()[i] = orig + H;
            let up = eval(store);
            store.get_mut(id).data_mut()[i] = orig - H;
            let down = eval(store);
            store.get_mut(id).data_mut()[i] = orig;
            numeric.push((up - down) / (2.0 * H));
            analytic.push(analytic_all[i]);
        }
        out.push((store.name(id).to_string(), relative_error(&analytic, &numeric)));
    }
    out
}

/// `Σ out ⊙ R` for a fixed random `R`, so every output entry matters.
pub fn weighted_sum(g: &mut Graph, out: Var, seed: u64) -> Var {
    let mut r = rng(seed);
    let shape = g.shape(out).to_vec();
    let weights = g.constant(random_tensor(&shape, 1.0, &mut r)).unwrap();
    let prod = g.mul(out, weights).unwrap();
    g.sum(prod).unwrap()
}
