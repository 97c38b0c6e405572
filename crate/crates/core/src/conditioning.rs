//! Local and global conditions: a small convolutional encoder–decoder over
//! the depth crop, a two-level set-abstraction encoder over the point cloud,
//! and the joint-wise condition extractor built from bias-induced layers.

use std::cmp::Ordering;

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::geometry::{
    downsample_half, farthest_point_sample, knn, sub, DepthFrame,
    NormalizationTransform, Point3,
};
use crate::init::Init;
use crate::optim::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Channels of the 2D encoder input: normalized x, y, z and a valid flag.
pub const IMAGE_CHANNELS: usize = 4;

/// Half-resolution 2D features with the camera-space position of each cell.
#[derive(Debug, Clone)]
pub struct LocalConditions2D {
    /// `[side * side, d2d]`, row-major cells.
    pub features: Var,
    /// Normalized position of each cell; `None` where the depth is invalid.
    pub carriers: Vec<Option<Point3>>,
    pub side: usize,
}

impl LocalConditions2D {
    pub fn valid_carriers(&self) -> usize {
        self.carriers.iter().filter(|c| c.is_some()).count()
    }
}

/// Per-carrier 3D features at the first set-abstraction level.
#[derive(Debug, Clone)]
pub struct LocalConditions3D {
    /// `[N / 2, d3d]`.
    pub features: Var,
    /// Normalized carrier positions, `N / 2` of them.
    pub carriers: Vec<Point3>,
}

#[derive(Debug, Clone, Copy)]
pub struct GlobalVectors {
    /// `[1, d2d]`
    pub v2d: Var,
    /// `[1, d3d]`
    pub v3d: Var,
    /// `[1, d2d + d3d]`
    pub joint: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct JointConditions {
    /// `[J, dc]`
    pub c: Var,
    /// Auxiliary joint coordinates `[J, 3]`; absent without joint-wise conditions.
    pub aux: Option<Var>,
}

#[derive(Debug, Clone)]
pub struct Encoder2dParams {
    pub size: usize,
    pub d2d: usize,
    pub c1: usize,
    pub c2: usize,
    conv1: (ParamId, ParamId),
    conv2: (ParamId, ParamId),
    global: (ParamId, ParamId),
    fuse: (ParamId, ParamId),
}

impl Encoder2dParams {
    pub fn new(init: &mut Init<'_>, size: usize, d2d: usize) -> Result<Self> {
        let c1 = (d2d / 2).max(4);
        let c2 = d2d;
        Ok(Self {
            size,
            d2d,
            c1,
            c2,
            conv1: init.dense("enc2d.conv1", 9 * IMAGE_CHANNELS, c1)?,
            conv2: init.dense("enc2d.conv2", 9 * c1, c2)?,
            global: init.dense("enc2d.global", c2, d2d)?,
            fuse: init.dense("enc2d.fuse", c1 + c2, d2d)?,
        })
    }
}

/// The `[size * size, 4]` encoder input and the half-resolution carriers.
pub fn image_input(frame: &DepthFrame, transform: &NormalizationTransform) -> (Tensor, Vec<Option<Point3>>) {
    let k = frame.intrinsics;
    let mut data = vec![0.0; frame.width * frame.height * IMAGE_CHANNELS];
    for v in 0..frame.height {
        for u in 0..frame.width {
            let d = frame.at(u, v);
            if d > 0.0 {
                let p = transform.apply(k.backproject(u as f64, v as f64, d));
                let o = (v * frame.width + u) * IMAGE_CHANNELS;
                data[o..o + IMAGE_CHANNELS].copy_from_slice(&[p[0], p[1], p[2], 1.0]);
            }
        }
    }
    let half = downsample_half(frame);
    let hk = half.intrinsics;
    let mut carriers = Vec::with_capacity(half.width * half.height);
    for v in 0..half.height {
        for u in 0..half.width {
            let d = half.at(u, v);
            carriers.push((d > 0.0).then(|| transform.apply(hk.backproject(u as f64, v as f64, d))));
        }
    }
    let image = Tensor::new(&[frame.width * frame.height, IMAGE_CHANNELS], data)
        .expect("length matches shape");
    (image, carriers)
}

/// 2D branch: two stride-2 convolutions, a pooled global vector, and a
/// skip-connected decoder back to half resolution.
pub fn encode_2d(
    g: &mut Graph,
    store: &ParamStore,
    p: &Encoder2dParams,
    frame: &DepthFrame,
    transform: &NormalizationTransform,
) -> Result<(LocalConditions2D, Var)> {
    if frame.width != p.size || frame.height != p.size {
        return Err(Error::Precondition(format!(
            "2D encoder expects a {0}x{0} input, got {1}x{2}",
            p.size, frame.width, frame.height
        )));
    }
    let (image, carriers) = image_input(frame, transform);
    let x = g.constant(image)?;
    let (w1, b1) = (g.param(store, p.conv1.0)?, g.param(store, p.conv1.1)?);
    let (h1, s1, _) = g.conv2d(x, p.size, p.size, w1, Some(b1), 3, 2, 1)?;
    let h1 = g.relu(h1)?;
    let (w2, b2) = (g.param(store, p.conv2.0)?, g.param(store, p.conv2.1)?);
    let (h2, s2, _) = g.conv2d(h1, s1, s1, w2, Some(b2), 3, 2, 1)?;
    let h2 = g.relu(h2)?;

    let pooled = g.segment_max(h2, s2 * s2)?;
    let (gw, gb) = (g.param(store, p.global.0)?, g.param(store, p.global.1)?);
    let global = g.linear(pooled, gw, Some(gb))?;

    let up: Vec<usize> = (0..s1 * s1)
        .map(|i| {
            let (y, x) = (i / s1, i % s1);
            (y / 2).min(s2 - 1) * s2 + (x / 2).min(s2 - 1)
        })
        .collect();
    let up = g.select_rows(h2, &up)?;
    let skip = g.concat_cols(&[h1, up])?;
    let (fw, fb) = (g.param(store, p.fuse.0)?, g.param(store, p.fuse.1)?);
    let fused = g.linear(skip, fw, Some(fb))?;
    let features = g.relu(fused)?;
    debug_assert_eq!(carriers.len(), s1 * s1);
    Ok((
        LocalConditions2D {
            features,
            carriers,
            side: s1,
        },
        global,
    ))
}

#[derive(Debug, Clone)]
pub struct Encoder3dParams {
    pub k: usize,
    pub hidden: usize,
    pub d3d: usize,
    sa1_a: (ParamId, ParamId),
    sa1_b: (ParamId, ParamId),
    sa2: (ParamId, ParamId),
}

impl Encoder3dParams {
    pub fn new(init: &mut Init<'_>, k: usize, hidden: usize, d3d: usize) -> Result<Self> {
        Ok(Self {
            k,
            hidden,
            d3d,
            sa1_a: init.dense("enc3d.sa1.mlp1", 6, hidden)?,
            sa1_b: init.dense("enc3d.sa1.mlp2", hidden, d3d)?,
            sa2: init.dense("enc3d.sa2.mlp", 3 + d3d, d3d)?,
        })
    }
}

fn lexicographic(a: &Point3, b: &Point3) -> Ordering {
    a[0].total_cmp(&b[0])
        .then(a[1].total_cmp(&b[1]))
        .then(a[2].total_cmp(&b[2]))
}

/// Distinct points in lexicographic order. Everything downstream is a
/// function of this list, which makes the encoder invariant to input order
/// and to repeated points.
pub fn canonical_points(points: &[Point3]) -> Vec<Point3> {
    let mut sorted = points.to_vec();
    sorted.sort_by(lexicographic);
    sorted.dedup_by(|a, b| lexicographic(a, b) == Ordering::Equal);
    sorted
}

/// FPS from the first point, cycling through the picks when fewer than `m`
/// distinct points exist.
fn fps_padded(points: &[Point3], m: usize) -> Result<Vec<usize>> {
    let picks = farthest_point_sample(points, m.min(points.len()), 0)?;
    Ok((0..m).map(|i| picks[i % picks.len()]).collect())
}

/// `k` nearest neighbors, cycling when fewer than `k` points exist.
fn knn_padded(query: Point3, points: &[Point3], k: usize) -> Result<Vec<usize>> {
    let hits = knn(query, points, k.min(points.len()))?;
    Ok((0..k).map(|i| hits[i % hits.len()].index).collect())
}

/// 3D branch: two set-abstraction levels (`N/2` then `N/8` centres), each a
/// shared MLP over grouped neighbors followed by a max-pool.
pub fn encode_3d(
    g: &mut Graph,
    store: &ParamStore,
    p: &Encoder3dParams,
    points: &[Point3],
) -> Result<(LocalConditions3D, Var)> {
    let n = points.len();
    if n < 2 {
        return Err(Error::Precondition(format!("3D encoder needs at least 2 points, got {n}")));
    }
    let canon = canonical_points(points);
    let m1 = n / 2;
    let m2 = (n / 8).max(1);

    // Level 1: rows [p - c, p] for each centre's neighbors.
    let centers1: Vec<Point3> = fps_padded(&canon, m1)?.into_iter().map(|i| canon[i]).collect();
    let mut rows = Vec::with_capacity(m1 * p.k * 6);
    for &c in &centers1 {
        for i in knn_padded(c, &canon, p.k)? {
            let q = canon[i];
            let d = sub(q, c);
            rows.extend_from_slice(&[d[0], d[1], d[2], q[0], q[1], q[2]]);
        }
    }
    let x = g.constant(Tensor::new(&[m1 * p.k, 6], rows)?)?;
    let (w, b) = (g.param(store, p.sa1_a.0)?, g.param(store, p.sa1_a.1)?);
    let h = g.linear(x, w, Some(b))?;
    let h = g.relu(h)?;
    let (w, b) = (g.param(store, p.sa1_b.0)?, g.param(store, p.sa1_b.1)?);
    let h = g.linear(h, w, Some(b))?;
    let h = g.relu(h)?;
    let f1 = g.segment_max(h, p.k)?;

    // Level 2 over the level-1 centres (which may repeat after padding).
    let distinct1 = canonical_points(&centers1);
    let first_row: Vec<usize> = distinct1
        .iter()
        .map(|d| {
            centers1
                .iter()
                .position(|c| lexicographic(c, d) == Ordering::Equal)
                .expect("distinct centre comes from the list")
        })
        .collect();
    let centers2: Vec<Point3> = fps_padded(&distinct1, m2)?.into_iter().map(|i| distinct1[i]).collect();
    let mut offsets = Vec::with_capacity(m2 * p.k * 3);
    let mut gather = Vec::with_capacity(m2 * p.k);
    for &c in &centers2 {
        for i in knn_padded(c, &distinct1, p.k)? {
            let d = sub(distinct1[i], c);
            offsets.extend_from_slice(&d);
            gather.push(first_row[i]);
        }
    }
    let off = g.constant(Tensor::new(&[m2 * p.k, 3], offsets)?)?;
    let feats = g.select_rows(f1, &gather)?;
    let x2 = g.concat_cols(&[off, feats])?;
    let (w, b) = (g.param(store, p.sa2.0)?, g.param(store, p.sa2.1)?);
    let h2 = g.linear(x2, w, Some(b))?;
    let h2 = g.relu(h2)?;
    let f2 = g.segment_max(h2, p.k)?;
    let global = g.segment_max(f2, m2)?;

    Ok((
        LocalConditions3D {
            features: f1,
            carriers: centers1,
        },
        global,
    ))
}

/// Concatenated global vector.
pub fn global_vectors(g: &mut Graph, v2d: Var, v3d: Var) -> Result<GlobalVectors> {
    let joint = g.concat_cols(&[v2d, v3d])?;
    Ok(GlobalVectors { v2d, v3d, joint })
}

/// Three bias-induced layers plus the auxiliary coordinate head.
#[derive(Debug, Clone)]
pub struct JointConditionParams {
    pub joints: usize,
    pub dc: usize,
    /// Per-joint biases (`[J, dc]`) when true, one shared bias (`[dc]`) otherwise.
    pub per_joint: bool,
    layers: Vec<(ParamId, ParamId)>,
    aux: Option<(ParamId, ParamId)>,
}

/// Scale of the uniform initialization of per-joint biases.
pub const JOINT_BIAS_INIT: f64 = 0.25;

impl JointConditionParams {
    pub fn new(init: &mut Init<'_>, d_global: usize, dc: usize, joints: usize, per_joint: bool) -> Result<Self> {
        if joints == 0 {
            return Err(Error::Precondition("joint count must be positive".into()));
        }
        let mut layers = Vec::with_capacity(3);
        for l in 0..3 {
            let fan_in = if l == 0 { d_global } else { dc };
            let w = init.weight(&format!("bil{}.w", l + 1), fan_in, dc)?;
            let b = if per_joint {
                init.uniform(&format!("bil{}.b", l + 1), &[joints, dc], JOINT_BIAS_INIT)?
            } else {
                init.zeros(&format!("bil{}.b", l + 1), &[dc])?
            };
            layers.push((w, b));
        }
        let aux = if per_joint {
            Some(init.dense("joint_coords", dc, 3)?)
        } else {
            None
        };
        Ok(Self {
            joints,
            dc,
            per_joint,
            layers,
            aux,
        })
    }

    /// `(weight, bias)` of layer `l` (0-based).
    pub fn layer(&self, l: usize) -> (ParamId, ParamId) {
        self.layers[l]
    }
}

/// Replicate the global vector `J` times and run it through the
/// bias-induced layers; the per-joint biases make the rows distinct.
pub fn extract_joint_conditions(
    g: &mut Graph,
    store: &ParamStore,
    p: &JointConditionParams,
    globals: &GlobalVectors,
) -> Result<JointConditions> {
    let replicate = vec![0; p.joints];
    let mut x = globals.joint;
    for (l, &(w, b)) in p.layers.iter().enumerate() {
        let w = g.param(store, w)?;
        let b = g.param(store, b)?;
        // The first layer's input rows are identical, so project once and
        // replicate afterwards.
        let mut y = g.matmul(x, w)?;
        if l == 0 {
            y = g.select_rows(y, &replicate)?;
        }
        y = if p.per_joint { g.add(y, b)? } else { g.add_bias(y, b)? };
        x = if l < 2 { g.relu(y)? } else { y };
    }
    let aux = match p.aux {
        Some((w, b)) => {
            let w = g.param(store, w)?;
            let b = g.param(store, b)?;
            Some(g.linear(x, w, Some(b))?)
        }
        None => None,
    };
    Ok(JointConditions { c: x, aux })
}

/// Crop camera render of the raw points feeding the 2D branch.
pub fn crop_frame(
    raw_points: &[Point3],
    center: Point3,
    crop_mm: f64,
    size: usize,
) -> Result<DepthFrame> {
    let k = crate::geometry::CameraIntrinsics::crop(center, crop_mm, size)?;
    Ok(crate::geometry::splat(raw_points, k, size, size))
}
