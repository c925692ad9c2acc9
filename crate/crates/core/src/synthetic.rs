//! Procedural skeletons and periodic gaits.
//!
//! Used to generate the fixture corpus and test inputs. Every generator is
//! deterministic; stylistic variation comes from [`Style`].

use std::f64::consts::PI;

use nalgebra::Vector3;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bvh::{Channel, RawMotion};
use crate::motion::{raw_to_features, Motion};
use crate::skeleton::{EndSite, Joint, Skeleton};

const ROOT_CHANNELS: [Channel; 6] = [
    Channel::Xposition,
    Channel::Yposition,
    Channel::Zposition,
    Channel::Zrotation,
    Channel::Yrotation,
    Channel::Xrotation,
];
const ROT_CHANNELS: [Channel; 3] = [Channel::Zrotation, Channel::Yrotation, Channel::Xrotation];

#[derive(Debug, Clone, PartialEq)]
pub struct Style {
    /// Multiplies the gait frequency and forward speed.
    pub speed: f64,
    /// Multiplies every joint swing.
    pub amplitude: f64,
    /// Gait phase at frame 0, radians.
    pub phase: f64,
    /// Constant sideways lean of the upper body, degrees.
    pub lean: f64,
    /// Phase offset of secondary motion (tail, head, arms) against the
    /// gait, radians.
    pub sway: f64,
}

impl Default for Style {
    fn default() -> Self {
        Self {
            speed: 1.0,
            amplitude: 1.0,
            phase: 0.0,
            lean: 0.0,
            sway: 0.0,
        }
    }
}

impl Style {
    /// Random style around the default; `spread` of 0 gives the default.
    pub fn sample(seed: u64, spread: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut jitter = |scale: f64| 1.0 + spread * scale * rng.random_range(-1.0..1.0);
        let speed = jitter(0.15);
        let amplitude = jitter(0.25);
        let phase = spread * rng.random_range(0.0..2.0 * PI);
        let lean = spread * rng.random_range(-6.0..6.0);
        let sway = spread * rng.random_range(0.0..2.0 * PI);
        Self {
            speed,
            amplitude,
            phase,
            lean,
            sway,
        }
    }
}

struct Builder {
    joints: Vec<Joint>,
    end_sites: Vec<EndSite>,
}

impl Builder {
    fn new(root: &str, offset: [f64; 3]) -> Self {
        Self {
            joints: vec![Joint {
                name: root.into(),
                parent: None,
                offset: Vector3::from(offset),
                channels: ROOT_CHANNELS.to_vec(),
            }],
            end_sites: Vec::new(),
        }
    }

    fn add(&mut self, name: &str, parent: usize, offset: [f64; 3]) -> usize {
        self.joints.push(Joint {
            name: name.into(),
            parent: Some(parent),
            offset: Vector3::from(offset),
            channels: ROT_CHANNELS.to_vec(),
        });
        self.joints.len() - 1
    }

    fn chain(&mut self, parent: usize, names: &[&str], offsets: &[[f64; 3]]) -> usize {
        let mut p = parent;
        for (n, o) in names.iter().zip(offsets) {
            p = self.add(n, p, *o);
        }
        p
    }

    fn end(&mut self, parent: usize, offset: [f64; 3]) {
        self.end_sites.push(EndSite {
            parent,
            offset: Vector3::from(offset),
        });
    }

    fn build(self) -> Skeleton {
        Skeleton::new(self.joints, self.end_sites).expect("generated skeletons are valid")
    }
}

/// 22-joint humanoid, Y up, facing +Z, roughly centimetre scale.
pub fn biped_skeleton() -> Skeleton {
    let mut b = Builder::new("Hips", [0.0, 0.0, 0.0]);
    for (side, x) in [("Left", 1.0), ("Right", -1.0)] {
        let toe = b.chain(
            0,
            &[
                &format!("{side}UpLeg"),
                &format!("{side}Leg"),
                &format!("{side}Foot"),
                &format!("{side}Toe"),
            ],
            &[[9.0 * x, -4.0, 0.0], [0.0, -42.0, 1.0], [0.0, -40.0, -2.0], [0.0, -8.0, 12.0]],
        );
        b.end(toe, [0.0, 0.0, 5.0]);
    }
    let spine2 = b.chain(0, &["Spine", "Spine1", "Spine2"], &[[0.0, 10.0, 0.0], [0.0, 12.0, 0.0], [0.0, 12.0, 0.0]]);
    let head = b.chain(spine2, &["Neck", "Head"], &[[0.0, 14.0, 1.0], [0.0, 9.0, 0.0]]);
    b.end(head, [0.0, 12.0, 0.0]);
    for (side, x) in [("Left", 1.0), ("Right", -1.0)] {
        let hand = b.chain(
            spine2,
            &[
                &format!("{side}Shoulder"),
                &format!("{side}Arm"),
                &format!("{side}ForeArm"),
                &format!("{side}Hand"),
            ],
            &[[4.0 * x, 11.0, 0.0], [12.0 * x, 0.0, 0.0], [27.0 * x, 0.0, 0.0], [24.0 * x, 0.0, 0.0]],
        );
        b.end(hand, [8.0 * x, 0.0, 0.0]);
    }
    b.build()
}

/// 23-joint four-legged animal with a five-joint tail, facing +Z.
pub fn quadruped_skeleton() -> Skeleton {
    let mut b = Builder::new("Pelvis", [0.0, 0.0, 0.0]);
    for (side, x) in [("Left", 1.0), ("Right", -1.0)] {
        let foot = b.chain(
            0,
            &[
                &format!("Back{side}Thigh"),
                &format!("Back{side}Shin"),
                &format!("Back{side}Foot"),
            ],
            &[[6.0 * x, -3.0, -2.0], [0.0, -18.0, 3.0], [0.0, -17.0, -4.0]],
        );
        b.end(foot, [0.0, -4.0, 3.0]);
    }
    let tail = b.chain(
        0,
        &["Tail1", "Tail2", "Tail3", "Tail4", "Tail5"],
        &[[0.0, 2.0, -6.0], [0.0, -1.0, -7.0], [0.0, -1.5, -6.0], [0.0, -1.5, -5.0], [0.0, -1.0, -4.0]],
    );
    b.end(tail, [0.0, 0.0, -3.0]);
    let chest = b.chain(0, &["Spine1", "Spine2", "Chest"], &[[0.0, 1.0, 14.0], [0.0, 1.0, 14.0], [0.0, 0.0, 12.0]]);
    let head = b.chain(chest, &["Neck", "Head"], &[[0.0, 8.0, 8.0], [0.0, 6.0, 6.0]]);
    b.end(head, [0.0, -2.0, 12.0]);
    for (side, x) in [("Left", 1.0), ("Right", -1.0)] {
        let paw = b.chain(
            chest,
            &[
                &format!("Front{side}Upper"),
                &format!("Front{side}Lower"),
                &format!("Front{side}Paw"),
            ],
            &[[6.0 * x, -5.0, 2.0], [0.0, -18.0, -2.0], [0.0, -16.0, 1.0]],
        );
        b.end(paw, [0.0, -3.0, 4.0]);
    }
    b.build()
}

/// Limbless chain of `segments` joints laid along +Z.
pub fn snake_skeleton(segments: usize) -> Skeleton {
    let mut b = Builder::new("Seg0", [0.0, 0.0, 0.0]);
    let mut p = 0;
    for i in 1..segments.max(2) {
        p = b.add(&format!("Seg{i}"), p, [0.0, 0.0, 8.0]);
    }
    b.end(p, [0.0, 0.0, 6.0]);
    b.build()
}

/// Six-legged body with three joints per leg.
pub fn hexapod_skeleton() -> Skeleton {
    let mut b = Builder::new("Thorax", [0.0, 0.0, 0.0]);
    let abdomen = b.add("Abdomen", 0, [0.0, 0.0, -10.0]);
    b.end(abdomen, [0.0, 0.0, -8.0]);
    for (k, z) in [("Front", 5.0), ("Mid", 0.0), ("Hind", -5.0)] {
        for (side, x) in [("Left", 1.0), ("Right", -1.0)] {
            let tip = b.chain(
                0,
                &[&format!("{k}{side}Coxa"), &format!("{k}{side}Femur"), &format!("{k}{side}Tibia")],
                &[[3.0 * x, 0.0, z], [6.0 * x, 3.0, 0.0], [4.0 * x, -9.0, 0.0]],
            );
            b.end(tip, [1.0 * x, -3.0, 0.0]);
        }
    }
    b.build()
}

/// Fills raw channels from per-joint Euler angles (degrees, indexed by axis)
/// and a root trajectory.
fn animate(
    skeleton: &Skeleton,
    frames: usize,
    fps: f64,
    root: impl Fn(f64) -> [f64; 3],
    angles: impl Fn(&str, f64) -> [f64; 3],
) -> RawMotion {
    let mut values = Array2::<f64>::zeros((frames, skeleton.raw_channel_count()));
    for f in 0..frames {
        let t = f as f64 / fps;
        let mut col = 0;
        for joint in skeleton.joints() {
            let rot = angles(&joint.name, t);
            let pos = root(t);
            for ch in &joint.channels {
                values[[f, col]] = if ch.is_rotation() {
                    rot[ch.axis()]
                } else {
                    pos[ch.axis()] - joint.offset[ch.axis()]
                };
                col += 1;
            }
        }
    }
    RawMotion {
        frame_time: 1.0 / fps,
        values,
    }
}

fn features(skeleton: &Skeleton, raw: &RawMotion) -> Motion {
    raw_to_features(skeleton, raw).expect("generated motions are valid").0
}

/// Walk cycle at 1 Hz times `style.speed`, moving along +Z.
pub fn biped_walk_raw(skeleton: &Skeleton, frames: usize, fps: f64, style: &Style) -> RawMotion {
    let freq = style.speed;
    let a = style.amplitude;
    let ph = style.phase;
    let lean = style.lean;
    let theta = move |t: f64| 2.0 * PI * freq * t + ph;
    animate(
        skeleton,
        frames,
        fps,
        |t| {
            let th = theta(t);
            [1.5 * th.sin(), 92.0 + 2.0 * (2.0 * th).cos(), 120.0 * freq * t]
        },
        |name, t| {
            let th = theta(t);
            let s = th.sin();
            let c = th.cos();
            let (side, opp) = if name.starts_with("Left") { (1.0, 0.0) } else { (-1.0, PI) };
            let sw = th + style.sway;
            match name {
                "Hips" => [0.0, 6.0 * a * s, 2.0 * a * c],
                "Spine" => [2.0 * a * (2.0 * th).sin(), -4.0 * a * s, lean],
                "Spine1" | "Spine2" => [0.0, -2.0 * a * s, 0.5 * lean],
                "Neck" => [0.0, 3.0 * a * sw.sin(), -lean],
                "Head" => [4.0 * a * (2.0 * sw).cos(), 0.0, 0.0],
                n if n.ends_with("UpLeg") => [28.0 * a * (th + opp).sin(), 0.0, 3.0 * side],
                n if n.ends_with("Leg") => [30.0 * a * (1.0 + (th + opp + PI / 2.0).sin()), 0.0, 0.0],
                n if n.ends_with("Foot") => [-12.0 * a * (th + opp - PI / 2.0).sin(), 0.0, 0.0],
                n if n.ends_with("Toe") => [10.0 * a * (1.0 + (th + opp).cos()) * 0.5, 0.0, 0.0],
                n if n.ends_with("Shoulder") => [0.0, 0.0, 4.0 * side * (2.0 * sw).sin()],
                n if n.ends_with("ForeArm") => [0.0, -side * (20.0 + 15.0 * a * (sw + opp).sin()), 0.0],
                n if n.ends_with("Arm") => [-25.0 * a * (sw + opp).sin(), 0.0, -side * 70.0],
                n if n.ends_with("Hand") => [0.0, 0.0, 8.0 * a * sw.cos()],
                _ => [0.0; 3],
            }
        },
    )
}

pub fn biped_walk(skeleton: &Skeleton, frames: usize, fps: f64, style: &Style) -> Motion {
    features(skeleton, &biped_walk_raw(skeleton, frames, fps, style))
}

/// Trot at 1.5 Hz times `style.speed`: diagonal legs move together.
pub fn quadruped_trot_raw(skeleton: &Skeleton, frames: usize, fps: f64, style: &Style) -> RawMotion {
    let freq = 1.5 * style.speed;
    let a = style.amplitude;
    let ph = style.phase;
    let theta = move |t: f64| 2.0 * PI * freq * t + ph;
    animate(
        skeleton,
        frames,
        fps,
        |t| {
            let th = theta(t);
            [0.0, 42.0 + 1.5 * (2.0 * th).cos(), 60.0 * freq * t]
        },
        |name, t| {
            let th = theta(t);
            // Diagonal pairs: back-left with front-right.
            let offset = match name {
                n if n.starts_with("BackLeft") || n.starts_with("FrontRight") => 0.0,
                _ => PI,
            };
            let leg = th + offset;
            let sw = th + style.sway;
            match name {
                "Pelvis" => [style.lean, 3.0 * a * th.sin(), 2.0 * a * (2.0 * th).sin()],
                n if n.starts_with("Tail") => [0.0, 12.0 * a * (sw - 0.6 * n[4..].parse::<f64>().unwrap_or(1.0)).sin(), 0.0],
                "Spine1" | "Spine2" | "Chest" => [0.0, -2.0 * a * th.sin(), 0.0],
                "Neck" => [6.0 * a * (2.0 * sw).sin(), 0.0, 0.0],
                "Head" => [-4.0 * a * (2.0 * sw).sin(), 0.0, 0.0],
                n if n.ends_with("Thigh") || n.ends_with("Upper") => [25.0 * a * leg.sin(), 0.0, 0.0],
                n if n.ends_with("Shin") || n.ends_with("Lower") => [-20.0 * a * (1.0 + (leg + PI / 2.0).sin()), 0.0, 0.0],
                n if n.ends_with("Foot") || n.ends_with("Paw") => [15.0 * a * (leg - PI / 2.0).sin(), 0.0, 0.0],
                _ => [0.0; 3],
            }
        },
    )
}

pub fn quadruped_trot(skeleton: &Skeleton, frames: usize, fps: f64, style: &Style) -> Motion {
    features(skeleton, &quadruped_trot_raw(skeleton, frames, fps, style))
}

/// Travelling yaw wave at 0.8 Hz times `style.speed`.
pub fn snake_slither_raw(skeleton: &Skeleton, frames: usize, fps: f64, style: &Style) -> RawMotion {
    let freq = 0.8 * style.speed;
    let a = style.amplitude;
    let ph = style.phase;
    animate(
        skeleton,
        frames,
        fps,
        |t| [0.0, 2.0, 40.0 * freq * t],
        |name, t| {
            let i: f64 = name[3..].parse().unwrap_or(0.0);
            let th = 2.0 * PI * freq * t + ph - 0.7 * i;
            [0.0, 25.0 * a * th.sin(), 3.0 * a * (2.0 * th).sin()]
        },
    )
}

pub fn snake_slither(skeleton: &Skeleton, frames: usize, fps: f64, style: &Style) -> Motion {
    features(skeleton, &snake_slither_raw(skeleton, frames, fps, style))
}

/// Alternating tripod gait at 2 Hz times `style.speed`.
pub fn hexapod_walk_raw(skeleton: &Skeleton, frames: usize, fps: f64, style: &Style) -> RawMotion {
    let freq = 2.0 * style.speed;
    let a = style.amplitude;
    let ph = style.phase;
    animate(
        skeleton,
        frames,
        fps,
        |t| [0.0, 9.0, 25.0 * freq * t],
        |name, t| {
            let th = 2.0 * PI * freq * t + ph;
            let tripod = ["FrontLeft", "MidRight", "HindLeft"].iter().any(|p| name.starts_with(p));
            let leg = th + if tripod { 0.0 } else { PI };
            match name {
                "Thorax" => [0.0, 2.0 * a * th.sin(), 0.0],
                "Abdomen" => [3.0 * a * (2.0 * (th + style.sway)).sin(), 0.0, 0.0],
                n if n.ends_with("Coxa") => [0.0, 20.0 * a * leg.sin(), 0.0],
                n if n.ends_with("Femur") => [0.0, 0.0, 15.0 * a * (leg + PI / 2.0).sin().max(0.0)],
                n if n.ends_with("Tibia") => [0.0, 0.0, -10.0 * a * leg.cos()],
                _ => [0.0; 3],
            }
        },
    )
}

pub fn hexapod_walk(skeleton: &Skeleton, frames: usize, fps: f64, style: &Style) -> Motion {
    features(skeleton, &hexapod_walk_raw(skeleton, frames, fps, style))
}

/// Random tree of `joints` joints. Each joint hangs off one of the four
/// previously added joints with a bone of length 2 to 10.
pub fn random_skeleton(joints: usize, seed: u64) -> Skeleton {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = Builder::new("J0", [0.0, 0.0, 0.0]);
    for i in 1..joints.max(2) {
        let parent = rng.random_range(i.saturating_sub(4)..i);
        let dir = loop {
            let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if v.norm() > 0.2 && v.norm() <= 1.0 {
                break v.normalize();
            }
        };
        let o = dir * rng.random_range(2.0..10.0);
        b.add(&format!("J{i}"), parent, [o.x, o.y, o.z]);
    }
    b.build()
}

/// (amplitude, harmonic, phase) for two terms on each of three axes.
type Waves = [[(f64, f64, f64); 2]; 3];

/// Sum of two random sinusoids per rotation channel with periods that
/// divide `period` frames, plus a steady root drift.
pub fn random_motion(skeleton: &Skeleton, frames: usize, fps: f64, period: usize, seed: u64) -> Motion {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut waves: std::collections::HashMap<String, Waves> = Default::default();
    for joint in skeleton.joints() {
        let mut per_axis = [[(0.0, 0.0, 0.0); 2]; 3];
        for (axis, w) in per_axis.iter_mut().enumerate() {
            let limit = if axis == 1 { 25.0 } else { 40.0 };
            for (k, term) in w.iter_mut().enumerate() {
                let harmonic = (k + 1) as f64;
                *term = (rng.random_range(0.0..limit) / harmonic, harmonic, rng.random_range(0.0..2.0 * PI));
            }
        }
        waves.insert(joint.name.clone(), per_axis);
    }
    let speed = rng.random_range(5.0..30.0);
    let cycle = period as f64 / fps;
    let raw = animate(
        skeleton,
        frames,
        fps,
        |t| [0.0, 10.0 + (2.0 * PI * t / cycle).sin(), speed * t],
        |name, t| {
            let w = &waves[name];
            let mut out = [0.0; 3];
            for (axis, terms) in w.iter().enumerate() {
                out[axis] = terms.iter().map(|(a, h, p)| a * (2.0 * PI * h * t / cycle + p).sin()).sum();
            }
            out
        },
    );
    features(skeleton, &raw)
}
