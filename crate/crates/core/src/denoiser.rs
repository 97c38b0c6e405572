//! Joint-wise denoiser: local feature sampling around each noisy joint,
//! timestep and joint-indicator embeddings, kinematic-correspondence
//! aggregation blocks with max-pooling, and the residual refiner.
//!
//! Several hypotheses are processed together by stacking their `J` rows.

use rand::Rng;

use crate::autograd::{Graph, Var};
use crate::conditioning::{LocalConditions2D, LocalConditions3D};
use crate::config::Components;
use crate::error::{Error, Result};
use crate::geometry::{knn, sub, Point3};
use crate::init::Init;
use crate::optim::{ParamId, ParamStore};
use crate::pose::Pose;
use crate::tensor::Tensor;

/// Base period of the sinusoidal embeddings.
pub const PE_BASE: f64 = 10_000.0;

/// Sinusoidal embedding of a scalar: `[sin(x ω_0), cos(x ω_0), sin(x ω_1), …]`
/// with `ω_i = PE_BASE^(-2i / dim)`.
pub fn sinusoidal(x: f64, dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(dim);
    for i in 0..dim / 2 {
        let w = PE_BASE.powf(-2.0 * i as f64 / dim as f64);
        out.push((x * w).sin());
        out.push((x * w).cos());
    }
    out
}

/// Initial channel-wise correspondence: row-normalized skeleton adjacency
/// with self-loops, broadcast over channels, plus uniform noise.
pub fn adjacency_init<R: Rng + ?Sized>(
    joints: usize,
    edges: &[(usize, usize)],
    channels: usize,
    noise: f64,
    rng: &mut R,
) -> Tensor {
    let mut adj = vec![0.0; joints * joints];
    for j in 0..joints {
        adj[j * joints + j] = 1.0;
    }
    for &(a, b) in edges {
        adj[a * joints + b] = 1.0;
        adj[b * joints + a] = 1.0;
    }
    for row in adj.chunks_mut(joints) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    let mut data = Vec::with_capacity(joints * joints * channels);
    for &a in &adj {
        for _ in 0..channels {
            let jitter = if noise > 0.0 { rng.random_range(-noise..=noise) } else { 0.0 };
            data.push(a + jitter);
        }
    }
    Tensor::new(&[joints, joints, channels], data).expect("length matches shape")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Cloud,
    Image,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalSample {
    pub source: Source,
    /// Row in the source's feature table.
    pub index: usize,
    /// `carrier - joint`.
    pub offset: Point3,
}

/// `k3` cloud neighbors followed by `k2` image neighbors for every joint row.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSampleSet {
    pub per_joint: usize,
    pub samples: Vec<LocalSample>,
}

impl LocalSampleSet {
    pub fn joint(&self, row: usize) -> &[LocalSample] {
        &self.samples[row * self.per_joint..(row + 1) * self.per_joint]
    }
}

/// Nearest carriers of both branches around each joint, in joint-relative
/// coordinates. Invalid image cells never qualify.
pub fn sample_local(
    joints: &[Point3],
    image_carriers: &[Option<Point3>],
    cloud_carriers: &[Point3],
    k3: usize,
    k2: usize,
) -> Result<LocalSampleSet> {
    let valid: Vec<(usize, Point3)> = image_carriers
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.map(|p| (i, p)))
        .collect();
    if k2 > valid.len() {
        return Err(Error::Precondition(format!(
            "need {k2} valid image carriers, found {}",
            valid.len()
        )));
    }
    if k3 > cloud_carriers.len() {
        return Err(Error::Precondition(format!(
            "need {k3} cloud carriers, found {}",
            cloud_carriers.len()
        )));
    }
    let positions: Vec<Point3> = valid.iter().map(|v| v.1).collect();
    let mut samples = Vec::with_capacity(joints.len() * (k3 + k2));
    for &j in joints {
        for n in knn(j, cloud_carriers, k3)? {
            samples.push(LocalSample {
                source: Source::Cloud,
                index: n.index,
                offset: n.offset,
            });
        }
        for n in knn(j, &positions, k2)? {
            samples.push(LocalSample {
                source: Source::Image,
                index: valid[n.index].0,
                offset: sub(valid[n.index].1, j),
            });
        }
    }
    Ok(LocalSampleSet {
        per_joint: k3 + k2,
        samples,
    })
}

/// Condition evolution: `ReLU((A ⊙_channel C) · W)` with the channel-wise
/// aggregation, or `ReLU(C · W)` without a correspondence tensor.
pub fn gcn_evolve(g: &mut Graph, cond: Var, adjacency: Option<Var>, w: Var) -> Result<Var> {
    let mixed = match adjacency {
        Some(a) => g.channel_mix(a, cond)?,
        None => cond,
    };
    let y = g.matmul(mixed, w)?;
    Ok(g.relu(y)?)
}

/// One-layer MLP over `[offset, flags, feature | C'_j, PE(t), PE(j)]` per
/// neighbor, split into a per-neighbor part and a per-joint part that is
/// broadcast to the joint's `k` neighbors.
#[allow(clippy::too_many_arguments)]
pub fn block_forward(
    g: &mut Graph,
    neighbors: Var,
    joint_inputs: Var,
    w_neighbor: Var,
    w_joint: Var,
    bias: Var,
    k: usize,
) -> Result<Var> {
    let rows = g.shape(joint_inputs)[0];
    if g.shape(neighbors)[0] != rows * k {
        return Err(Error::Precondition(format!(
            "{} neighbor rows for {rows} joints with k={k}",
            g.shape(neighbors)[0]
        )));
    }
    let per_joint = g.linear(joint_inputs, w_joint, Some(bias))?;
    let spread: Vec<usize> = (0..rows * k).map(|r| r / k).collect();
    let per_joint = g.select_rows(per_joint, &spread)?;
    let per_neighbor = g.matmul(neighbors, w_neighbor)?;
    let pre = g.add(per_neighbor, per_joint)?;
    Ok(g.relu(pre)?)
}

/// Channel-wise max over each joint's `k` neighbors.
pub fn pool_update(g: &mut Graph, evolved: Var, k: usize) -> Result<Var> {
    if k == 0 {
        return Err(Error::Precondition("empty neighbor set".into()));
    }
    Ok(g.segment_max(evolved, k)?)
}

/// `Ĉ · W + J_t`.
pub fn refine(g: &mut Graph, embeddings: Var, w: Var, noisy: Var) -> Result<Var> {
    let delta = g.matmul(embeddings, w)?;
    Ok(g.add(delta, noisy)?)
}

#[derive(Debug, Clone)]
pub struct BlockParams {
    pub adjacency: Option<ParamId>,
    pub gcn: ParamId,
    pub neighbor: ParamId,
    pub joint: ParamId,
    pub bias: ParamId,
}

#[derive(Debug, Clone)]
pub struct DenoiserParams {
    pub joints: usize,
    pub dc: usize,
    pub dpe: usize,
    pub k3: usize,
    pub k2: usize,
    /// Common width of the padded neighbor features.
    pub feature_width: usize,
    pub components: Components,
    pub requery: bool,
    pub blocks: Vec<BlockParams>,
    pub refiner: ParamId,
}

/// Width of the constant part of a neighbor row: offset plus a two-way
/// source flag.
pub const NEIGHBOR_GEOMETRY: usize = 5;

impl DenoiserParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        init: &mut Init<'_>,
        joints: usize,
        edges: &[(usize, usize)],
        dims: (usize, usize, usize, usize),
        k3: usize,
        k2: usize,
        blocks: usize,
        components: Components,
        requery: bool,
        adjacency_noise: f64,
    ) -> Result<Self> {
        let (d2d, d3d, dc, dpe) = dims;
        let feature_width = d2d.max(d3d);
        let neighbor_in = NEIGHBOR_GEOMETRY + if components.lc { feature_width } else { 0 };
        let joint_in = dc + dpe + if components.ji { dpe } else { 0 };
        let mut out = Vec::with_capacity(blocks);
        for b in 0..blocks {
            let adjacency = if components.kc {
                let a = adjacency_init(joints, edges, dc, adjacency_noise, init.rng);
                Some(init.tensor(&format!("block{b}.adjacency"), a)?)
            } else {
                None
            };
            out.push(BlockParams {
                adjacency,
                gcn: init.weight(&format!("block{b}.gcn.w"), dc, dc)?,
                neighbor: init.weight(&format!("block{b}.mlp.neighbor.w"), neighbor_in, dc)?,
                joint: init.weight(&format!("block{b}.mlp.joint.w"), joint_in, dc)?,
                bias: init.zeros(&format!("block{b}.mlp.b"), &[dc])?,
            });
        }
        Ok(Self {
            joints,
            dc,
            dpe,
            k3,
            k2,
            feature_width,
            components,
            requery,
            blocks: out,
            refiner: init.zeros("refiner.w", &[dc, 3])?,
        })
    }

    /// Neighbors per joint row.
    pub fn per_joint(&self) -> usize {
        if self.components.lc {
            self.k3 + self.k2
        } else {
            1
        }
    }
}

/// Everything the denoiser reads from the encoders.
#[derive(Debug, Clone)]
pub struct DenoiserInputs<'a> {
    /// `[J, dc]` joint-wise conditions.
    pub conditions: Var,
    pub local2d: &'a LocalConditions2D,
    pub local3d: &'a LocalConditions3D,
}

fn pad_cols(g: &mut Graph, x: Var, width: usize) -> Result<Var> {
    let (rows, cols) = (g.shape(x)[0], g.shape(x)[1]);
    if cols == width {
        return Ok(x);
    }
    let zeros = g.constant(Tensor::zeros(&[rows, width - cols]))?;
    Ok(g.concat_cols(&[x, zeros])?)
}

/// Neighbor rows `[offset, flag_cloud, flag_image, feature]` for every
/// sample, or one pseudo-neighbor per joint (its absolute coordinate)
/// without local conditions.
fn neighbor_rows(
    g: &mut Graph,
    p: &DenoiserParams,
    inputs: &DenoiserInputs<'_>,
    features: Option<Var>,
    joints: &[Point3],
) -> Result<Var> {
    if !p.components.lc {
        let mut data = Vec::with_capacity(joints.len() * NEIGHBOR_GEOMETRY);
        for j in joints {
            data.extend_from_slice(&[j[0], j[1], j[2], 0.0, 0.0]);
        }
        return Ok(g.constant(Tensor::new(&[joints.len(), NEIGHBOR_GEOMETRY], data)?)?);
    }
    let set = sample_local(
        joints,
        &inputs.local2d.carriers,
        &inputs.local3d.carriers,
        p.k3,
        p.k2,
    )?;
    let cloud_rows = inputs.local3d.carriers.len();
    let mut geometry = Vec::with_capacity(set.samples.len() * NEIGHBOR_GEOMETRY);
    let mut index = Vec::with_capacity(set.samples.len());
    for s in &set.samples {
        let (fc, fi, row) = match s.source {
            Source::Cloud => (1.0, 0.0, s.index),
            Source::Image => (0.0, 1.0, cloud_rows + s.index),
        };
        geometry.extend_from_slice(&[s.offset[0], s.offset[1], s.offset[2], fc, fi]);
        index.push(row);
    }
    let geometry = g.constant(Tensor::new(&[set.samples.len(), NEIGHBOR_GEOMETRY], geometry)?)?;
    let table = features.expect("feature table exists with local conditions");
    let feats = g.select_rows(table, &index)?;
    Ok(g.concat_cols(&[geometry, feats])?)
}

/// Stacked `[H * J, 3]` rows of the hypotheses.
fn stack(poses: &[Pose]) -> Vec<Point3> {
    poses.iter().flat_map(|p| p.joints().iter().copied()).collect()
}

/// Clean estimates `[H * J, 3]` for noisy hypotheses at timestep `t`.
pub fn denoise(
    g: &mut Graph,
    store: &ParamStore,
    p: &DenoiserParams,
    inputs: &DenoiserInputs<'_>,
    noisy: &[Pose],
    t: usize,
) -> Result<Var> {
    let h = noisy.len();
    if h == 0 {
        return Err(Error::Precondition("no hypotheses to denoise".into()));
    }
    if let Some(bad) = noisy.iter().find(|q| q.len() != p.joints) {
        return Err(Error::Precondition(format!(
            "denoiser built for {} joints, got a pose with {}",
            p.joints,
            bad.len()
        )));
    }
    let rows = h * p.joints;
    let joints = stack(noisy);
    let noisy_var = g.constant(Tensor::from_rows(&joints))?;

    let features = if p.components.lc {
        let f3 = pad_cols(g, inputs.local3d.features, p.feature_width)?;
        let f2 = pad_cols(g, inputs.local2d.features, p.feature_width)?;
        Some(g.concat_rows(&[f3, f2])?)
    } else {
        None
    };
    let mut neighbors = neighbor_rows(g, p, inputs, features, &joints)?;
    let k = p.per_joint();

    let pe_t = sinusoidal(t as f64, p.dpe);
    let mut embed = Vec::with_capacity(rows * 2 * p.dpe);
    let pe_j: Vec<Vec<f64>> = (0..p.joints).map(|j| sinusoidal(j as f64, p.dpe)).collect();
    for r in 0..rows {
        embed.extend_from_slice(&pe_t);
        if p.components.ji {
            embed.extend_from_slice(&pe_j[r % p.joints]);
        }
    }
    let embed_width = if p.components.ji { 2 * p.dpe } else { p.dpe };
    let embed = g.constant(Tensor::new(&[rows, embed_width], embed)?)?;

    let replicate: Vec<usize> = (0..rows).map(|r| r % p.joints).collect();
    let mut cond = g.select_rows(inputs.conditions, &replicate)?;
    let w_ref = g.param(store, p.refiner)?;
    for (b, block) in p.blocks.iter().enumerate() {
        let adjacency = match block.adjacency {
            Some(a) => Some(g.param(store, a)?),
            None => None,
        };
        let w_gcn = g.param(store, block.gcn)?;
        let evolved = gcn_evolve(g, cond, adjacency, w_gcn)?;
        let joint_inputs = g.concat_cols(&[evolved, embed])?;
        let w_nb = g.param(store, block.neighbor)?;
        let w_j = g.param(store, block.joint)?;
        let bias = g.param(store, block.bias)?;
        let f = block_forward(g, neighbors, joint_inputs, w_nb, w_j, bias, k)?;
        cond = pool_update(g, f, k)?;

        if p.requery && p.components.lc && b + 1 < p.blocks.len() {
            // Re-centre the neighborhoods on the intermediate estimate; the
            // query positions are treated as constants.
            let estimate = refine(g, cond, w_ref, noisy_var)?;
            let centres: Vec<Point3> = g
                .value(estimate)
                .data()
                .chunks_exact(3)
                .map(|c| [c[0], c[1], c[2]])
                .collect();
            neighbors = neighbor_rows(g, p, inputs, features, &centres)?;
        }
    }
    refine(g, cond, w_ref, noisy_var)
}

/// Split `[H * J, 3]` estimates back into poses.
pub fn unstack(values: &Tensor, joints: usize) -> Result<Vec<Pose>> {
    values
        .data()
        .chunks(joints * 3)
        .map(|chunk| Pose::new(chunk.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()).map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_shape_and_values() {
        let e = sinusoidal(0.0, 6);
        assert_eq!(e, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        let e = sinusoidal(3.0, 4);
        assert!((e[0] - 3f64.sin()).abs() < 1e-15);
        assert!((e[3] - (3.0 * 0.01f64).cos()).abs() < 1e-15);
    }

    #[test]
    fn adjacency_rows_sum_to_one_without_noise() {
        let mut rng = crate::rng::stream(0, 0);
        let a = adjacency_init(3, &[(0, 1), (1, 2)], 2, 0.0, &mut rng);
        for j in 0..3 {
            let s: f64 = (0..3).map(|k| a.at(&[j, k, 0])).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!((a.at(&[0, 1, 1]) - 0.5).abs() < 1e-15);
        assert_eq!(a.at(&[0, 2, 0]), 0.0);
    }

    #[test]
    fn joint_on_carrier_is_first_neighbor() {
        let cloud = [[0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [0.2, 0.0, 0.0]];
        let image = [None, Some([1.0, 1.0, 1.0]), Some([0.5, 0.0, 0.0])];
        let set = sample_local(&[[1.0, 1.0, 1.0]], &image, &cloud, 2, 1).unwrap();
        let s = set.joint(0);
        assert_eq!((s[0].source, s[0].index, s[0].offset), (Source::Cloud, 1, [0.0; 3]));
        assert_eq!((s[2].source, s[2].index, s[2].offset), (Source::Image, 1, [0.0; 3]));
    }

    #[test]
    fn too_few_image_carriers() {
        let err = sample_local(&[[0.0; 3]], &[None, Some([0.0; 3])], &[[0.0; 3]], 1, 2).unwrap_err();
        assert!(err.to_string().contains("need 2 valid image carriers, found 1"), "{err}");
    }
}
