//! Procedural hand generator and the on-disk dataset format.
//!
//! Frames come from a capsule-skinned kinematic hand posed at random and
//! rendered through a pinhole camera. Each frame draws from its own random
//! stream derived from the root seed, so a dataset is a pure function of
//! `(seed, count, model)`.

mod dataset;
mod hand;
mod render;

pub use dataset::{
    decode_pgm, depth_file_name, encode_pgm, poses_csv, read_dataset, write_dataset, Dataset,
    DatasetError, RawFrame,
};
pub use hand::{
    rot_x, rot_y, rot_z, sample_placement, AngleLimit, Finger, HandAngles, HandModel,
    HandModelError, JointLayout, Placement,
};
pub use render::{ray_capsule, render_depth, Capsule};

use rand::Rng;

use crate::geometry::{CameraIntrinsics, GeometryError};
use crate::pose::Pose;
use crate::rng;

pub const DEFAULT_SIZE: usize = 128;
pub const DEFAULT_FOCAL: f64 = 240.0;
/// Minimum number of hand pixels for a frame to be accepted.
pub const MIN_VALID_PIXELS: usize = 150;
const MAX_ATTEMPTS: usize = 100;

pub fn default_camera() -> CameraIntrinsics {
    CameraIntrinsics::new(DEFAULT_FOCAL, DEFAULT_FOCAL, 64.0, 64.0).expect("valid constants")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthOptions {
    pub joints: usize,
    pub count: usize,
    pub seed: u64,
    /// Insert a random capsule between the camera and the hand.
    pub occluder: bool,
}

/// A frame with its pose parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedFrame {
    pub frame: RawFrame,
    pub angles: HandAngles,
    pub placement: Placement,
}

fn occluder_capsule<R: Rng + ?Sized>(pose: &Pose, rng: &mut R) -> Capsule {
    let anchor = pose.joint(rng.random_range(0..pose.len()));
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let half = rng.random_range(20.0..40.0);
    let center = [
        anchor[0] + rng.random_range(-15.0..15.0),
        anchor[1] + rng.random_range(-15.0..15.0),
        anchor[2] - rng.random_range(40.0..70.0),
    ];
    let d = [angle.cos() * half, angle.sin() * half, 0.0];
    Capsule {
        a: [center[0] - d[0], center[1] - d[1], center[2]],
        b: [center[0] + d[0], center[1] + d[1], center[2]],
        radius: rng.random_range(10.0..18.0),
    }
}

/// Render one random hand. Poses are redrawn until every joint projects
/// inside the image and enough pixels are valid. Depth is quantized to whole
/// millimetres, as stored on disk.
pub fn generate_frame<R: Rng + ?Sized>(
    model: &HandModel,
    camera: CameraIntrinsics,
    width: usize,
    height: usize,
    occluder: bool,
    rng: &mut R,
) -> Result<GeneratedFrame, GeometryError> {
    for _ in 0..MAX_ATTEMPTS {
        let angles = model.sample_angles(rng);
        let placement = sample_placement(model, &angles, rng);
        let pose = model.forward_kinematics(&angles, &placement);
        let inside = pose.joints().iter().all(|&p| {
            camera.project(p).is_some_and(|(u, v)| {
                u >= 2.0 && v >= 2.0 && u <= width as f64 - 3.0 && v <= height as f64 - 3.0
            })
        });
        if !inside {
            continue;
        }
        let mut capsules = model.capsules(&pose);
        if occluder {
            capsules.push(occluder_capsule(&pose, rng));
        }
        let Ok(mut depth) = render_depth(&capsules, camera, width, height) else {
            continue;
        };
        for d in &mut depth.depth {
            *d = d.round();
        }
        if depth.valid_count() < MIN_VALID_PIXELS {
            continue;
        }
        return Ok(GeneratedFrame {
            frame: RawFrame {
                depth,
                joints_mm: pose,
            },
            angles,
            placement,
        });
    }
    Err(GeometryError::EmptyFrame)
}

/// Generate a dataset at the default camera and resolution.
pub fn generate(options: &SynthOptions) -> Result<Dataset, crate::Error> {
    let layout = JointLayout::from_count(options.joints).ok_or_else(|| {
        crate::Error::Config(format!("no hand layout with {} joints", options.joints))
    })?;
    let model = HandModel::new(layout);
    let camera = default_camera();
    let frames = (0..options.count)
        .map(|i| {
            let mut rng = rng::stream(rng::derive(options.seed, 0x5eed_da7a), i as u64);
            generate_frame(&model, camera, DEFAULT_SIZE, DEFAULT_SIZE, options.occluder, &mut rng)
                .map(|g| g.frame)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset {
        joints: options.joints,
        width: DEFAULT_SIZE,
        height: DEFAULT_SIZE,
        intrinsics: camera,
        frames,
    })
}
