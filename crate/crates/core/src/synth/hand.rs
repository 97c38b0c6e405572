use rand::Rng;

use super::render::Capsule;
use crate::geometry::{add, Point3};
use crate::pose::Pose;

/// Joint numbering conventions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointLayout {
    /// Wrist plus four joints per finger.
    Full21,
    /// Wrist plus three joints per finger.
    Compact16,
}

impl JointLayout {
    pub fn from_count(joints: usize) -> Option<Self> {
        match joints {
            21 => Some(JointLayout::Full21),
            16 => Some(JointLayout::Compact16),
            _ => None,
        }
    }

    pub fn joint_count(self) -> usize {
        1 + 5 * self.bones_per_finger()
    }

    pub fn bones_per_finger(self) -> usize {
        match self {
            JointLayout::Full21 => 4,
            JointLayout::Compact16 => 3,
        }
    }
}

/// Closed interval of joint angles in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleLimit {
    pub lo: f64,
    pub hi: f64,
}

impl AngleLimit {
    pub const fn deg(lo: f64, hi: f64) -> Self {
        Self {
            lo: lo * std::f64::consts::PI / 180.0,
            hi: hi * std::f64::consts::PI / 180.0,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.hi > self.lo {
            rng.random_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Finger {
    /// Direction of the first bone in the palm plane, degrees from the
    /// middle-finger axis (positive toward the pinky side).
    pub splay_deg: f64,
    /// Out-of-plane tilt of the first bone toward the palm side, degrees.
    pub tilt_deg: f64,
    /// Bone lengths from the wrist outward (mm).
    pub bones: Vec<f64>,
    /// Flexion limits, one per bone (applied at the bone's proximal joint).
    pub flexion: Vec<AngleLimit>,
    /// Sideways rotation at the second joint of the chain.
    pub abduction: AngleLimit,
    /// Capsule radius of the phalanges (mm).
    pub radius: f64,
}

/// Articulated hand with capsule skin.
#[derive(Debug, Clone, PartialEq)]
pub struct HandModel {
    pub layout: JointLayout,
    /// Thumb, index, middle, ring, pinky.
    pub fingers: Vec<Finger>,
    /// Radius of the palm capsules (wrist-to-knuckle and across the knuckles).
    pub palm_radius: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid hand model: {0}")]
pub struct HandModelError(pub String);

/// Per-finger joint angles (radians).
#[derive(Debug, Clone, PartialEq)]
pub struct HandAngles {
    pub flexion: Vec<Vec<f64>>,
    pub abduction: Vec<f64>,
}

/// Camera placement of the hand: `p_cam = R · p_hand + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub rotation: [[f64; 3]; 3],
    pub translation: Point3,
}

impl Placement {
    pub fn identity() -> Self {
        Self {
            rotation: IDENTITY,
            translation: [0.0; 3],
        }
    }

    pub fn apply(&self, p: Point3) -> Point3 {
        add(mat_vec(&self.rotation, p), self.translation)
    }
}

const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn mat_vec(a: &[[f64; 3]; 3], v: Point3) -> Point3 {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

pub fn rot_x(a: f64) -> [[f64; 3]; 3] {
    let (s, c) = a.sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

pub fn rot_y(a: f64) -> [[f64; 3]; 3] {
    let (s, c) = a.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

pub fn rot_z(a: f64) -> [[f64; 3]; 3] {
    let (s, c) = a.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

impl HandModel {
    /// Adult-sized default hand for a joint layout.
    pub fn new(layout: JointLayout) -> Self {
        // (splay, tilt, [metacarpal, proximal, middle, distal], radius)
        let specs: [(f64, f64, [f64; 4], f64); 5] = [
            (-42.0, 25.0, [38.0, 36.0, 30.0, 24.0], 10.0),
            (-12.0, 0.0, [72.0, 42.0, 25.0, 20.0], 9.0),
            (0.0, 0.0, [70.0, 46.0, 29.0, 21.0], 9.0),
            (11.0, 0.0, [65.0, 43.0, 27.0, 20.0], 8.5),
            (22.0, 0.0, [60.0, 34.0, 20.0, 18.0], 7.5),
        ];
        let fingers = specs
            .iter()
            .enumerate()
            .map(|(f, &(splay_deg, tilt_deg, b, radius))| {
                let thumb = f == 0;
                let base = if thumb {
                    AngleLimit::deg(0.0, 40.0)
                } else {
                    AngleLimit::deg(0.0, 8.0)
                };
                let (bones, flexion) = match layout {
                    JointLayout::Full21 => (
                        b.to_vec(),
                        vec![
                            base,
                            AngleLimit::deg(-10.0, if thumb { 55.0 } else { 85.0 }),
                            AngleLimit::deg(0.0, if thumb { 70.0 } else { 100.0 }),
                            AngleLimit::deg(0.0, 70.0),
                        ],
                    ),
                    JointLayout::Compact16 => (
                        vec![b[0], b[1], b[2] + b[3]],
                        vec![
                            base,
                            AngleLimit::deg(-10.0, if thumb { 55.0 } else { 85.0 }),
                            AngleLimit::deg(0.0, if thumb { 70.0 } else { 100.0 }),
                        ],
                    ),
                };
                Finger {
                    splay_deg,
                    tilt_deg,
                    bones,
                    flexion,
                    abduction: if thumb {
                        AngleLimit::deg(-20.0, 25.0)
                    } else {
                        AngleLimit::deg(-12.0, 12.0)
                    },
                    radius,
                }
            })
            .collect();
        Self {
            layout,
            fingers,
            palm_radius: 12.0,
        }
    }

    pub fn joint_count(&self) -> usize {
        self.layout.joint_count()
    }

    pub fn validate(&self) -> Result<(), HandModelError> {
        if self.fingers.len() != 5 {
            return Err(HandModelError(format!("{} fingers", self.fingers.len())));
        }
        let b = self.layout.bones_per_finger();
        for (f, finger) in self.fingers.iter().enumerate() {
            if finger.bones.len() != b || finger.flexion.len() != b {
                return Err(HandModelError(format!("finger {f} needs {b} bones and limits")));
            }
            if let Some(l) = finger.bones.iter().find(|l| !(**l > 0.0)) {
                return Err(HandModelError(format!("finger {f} has bone length {l}")));
            }
            for lim in finger.flexion.iter().chain(std::iter::once(&finger.abduction)) {
                if !(lim.lo <= lim.hi) {
                    return Err(HandModelError(format!(
                        "finger {f} has empty angle interval [{}, {}]",
                        lim.lo, lim.hi
                    )));
                }
            }
            if !(finger.radius > 0.0) {
                return Err(HandModelError(format!("finger {f} radius {}", finger.radius)));
            }
        }
        if !(self.palm_radius > 0.0) {
            return Err(HandModelError(format!("palm radius {}", self.palm_radius)));
        }
        Ok(())
    }

    /// Joint index of bone `bone` (0-based) of finger `finger`, at its distal end.
    pub fn joint_index(&self, finger: usize, bone: usize) -> usize {
        1 + finger * self.layout.bones_per_finger() + bone
    }

    /// `(parent, child)` pairs of the kinematic tree.
    pub fn skeleton_edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::new();
        for f in 0..5 {
            for b in 0..self.layout.bones_per_finger() {
                let child = self.joint_index(f, b);
                let parent = if b == 0 { 0 } else { child - 1 };
                edges.push((parent, child));
            }
        }
        edges
    }

    pub fn zero_angles(&self) -> HandAngles {
        HandAngles {
            flexion: self.fingers.iter().map(|f| vec![0.0; f.bones.len()]).collect(),
            abduction: vec![0.0; self.fingers.len()],
        }
    }

    pub fn sample_angles<R: Rng + ?Sized>(&self, rng: &mut R) -> HandAngles {
        let mut flexion = Vec::with_capacity(5);
        let mut abduction = Vec::with_capacity(5);
        for finger in &self.fingers {
            flexion.push(finger.flexion.iter().map(|l| l.sample(rng)).collect());
            abduction.push(finger.abduction.sample(rng));
        }
        HandAngles { flexion, abduction }
    }

    /// Joint positions by rigid chain composition, wrist at the origin of the
    /// hand frame (fingers along +y, flexion toward -z), then placed.
    pub fn forward_kinematics(&self, angles: &HandAngles, placement: &Placement) -> Pose {
        let mut joints = vec![[0.0; 3]; self.joint_count()];
        for (f, finger) in self.fingers.iter().enumerate() {
            let mut rot = mat_mul(
                &rot_z(-finger.splay_deg.to_radians()),
                &rot_x(-finger.tilt_deg.to_radians()),
            );
            let mut pos = [0.0; 3];
            for (b, &len) in finger.bones.iter().enumerate() {
                if b == 1 {
                    rot = mat_mul(&rot, &rot_z(-angles.abduction[f]));
                }
                rot = mat_mul(&rot, &rot_x(-angles.flexion[f][b]));
                pos = add(pos, mat_vec(&rot, [0.0, len, 0.0]));
                joints[self.joint_index(f, b)] = pos;
            }
        }
        Pose::new(joints.into_iter().map(|p| placement.apply(p)).collect())
            .expect("finite kinematics")
    }

    /// Capsules of the skin for a posed skeleton: one per bone plus three
    /// across the knuckles.
    pub fn capsules(&self, pose: &Pose) -> Vec<Capsule> {
        let mut out = Vec::new();
        for (f, finger) in self.fingers.iter().enumerate() {
            for b in 0..finger.bones.len() {
                let child = self.joint_index(f, b);
                let parent = if b == 0 { 0 } else { child - 1 };
                out.push(Capsule {
                    a: pose.joint(parent),
                    b: pose.joint(child),
                    radius: if b == 0 { self.palm_radius } else { finger.radius },
                });
            }
        }
        for f in 1..4 {
            out.push(Capsule {
                a: pose.joint(self.joint_index(f, 0)),
                b: pose.joint(self.joint_index(f + 1, 0)),
                radius: self.palm_radius,
            });
        }
        out
    }
}

/// Random camera placement: in-plane roll over the full circle, tilts of up
/// to ±30°, hand centre at 400–600 mm depth near the optical axis.
pub fn sample_placement<R: Rng + ?Sized>(model: &HandModel, angles: &HandAngles, rng: &mut R) -> Placement {
    let roll = rng.random_range(-180.0f64..=180.0).to_radians();
    let tilt_x = rng.random_range(-30.0f64..=30.0).to_radians();
    let tilt_y = rng.random_range(-30.0f64..=30.0).to_radians();
    let rotation = mat_mul(&rot_z(roll), &mat_mul(&rot_x(tilt_x), &rot_y(tilt_y)));
    let local = model.forward_kinematics(angles, &Placement { rotation, translation: [0.0; 3] });
    let center = crate::geometry::centroid(local.joints());
    let z = rng.random_range(400.0..=600.0);
    let x = rng.random_range(-0.08..=0.08) * z;
    let y = rng.random_range(-0.08..=0.08) * z;
    Placement {
        rotation,
        translation: [x - center[0], y - center[1], z - center[2]],
    }
}
