//! Built-in action generators. Each maps a phase angle and an amplitude
//! factor to a pose; motion comes from sweeping the phase over time.

use std::f64::consts::PI;

use nalgebra::Vector3;

use super::kinematics::{rx, ry, rz, Pose};

pub const CLASS_NAMES: [&str; 8] = [
    "wave_one_arm",
    "raise_both_arms",
    "squat",
    "kick",
    "jump",
    "turn",
    "clap",
    "walk_in_place",
];

/// Cycle frequency of each class, Hz.
pub(crate) const FREQUENCIES: [f64; 8] = [1.5, 0.7, 0.6, 0.8, 1.0, 0.5, 2.0, 0.9];

// joint indices on the standard skeleton
const SPINE: usize = 1;
const NECK: usize = 3;
const L_SHOULDER: usize = 6;
const L_ELBOW: usize = 7;
const R_SHOULDER: usize = 10;
const R_ELBOW: usize = 11;
const L_HIP: usize = 13;
const L_KNEE: usize = 14;
const L_ANKLE: usize = 15;
const R_HIP: usize = 17;
const R_KNEE: usize = 18;
const R_ANKLE: usize = 19;

fn lift(t: f64) -> f64 {
    (1.0 - t.cos()) / 2.0
}

/// Pose of class `class` at phase `theta` with amplitude factor `a`.
pub(crate) fn pose(class: usize, theta: f64, a: f64) -> Pose {
    let mut p = Pose::rest();
    let s = theta.sin();
    match class {
        // wave_one_arm: right arm held up, forearm swinging sideways
        0 => {
            p.rotate(R_SHOULDER, rz(-2.4 * a));
            p.rotate(R_ELBOW, rz(-0.6 * a * s));
        }
        // raise_both_arms
        1 => {
            let u = a * lift(theta);
            p.rotate(L_SHOULDER, rz(2.6 * u));
            p.rotate(R_SHOULDER, rz(-2.6 * u));
        }
        // squat: hips and knees flex, pelvis drops, arms forward
        2 => {
            let u = a * lift(theta);
            for (hip, knee, ankle) in [(L_HIP, L_KNEE, L_ANKLE), (R_HIP, R_KNEE, R_ANKLE)] {
                p.rotate(hip, rx(-1.3 * u));
                p.rotate(knee, rx(2.2 * u));
                p.rotate(ankle, rx(-0.9 * u));
            }
            p.rotate(SPINE, rx(0.3 * u));
            p.rotate(L_SHOULDER, rx(-1.2 * u));
            p.rotate(R_SHOULDER, rx(-1.2 * u));
            p.root_shift = Vector3::new(0.0, -0.38 * u, 0.0);
        }
        // kick: right leg swings forward, arms counter-balance
        3 => {
            let k = a * s.max(0.0);
            p.rotate(R_HIP, rx(-1.4 * k));
            p.rotate(R_KNEE, rx(0.7 * a * theta.cos().max(0.0)));
            p.rotate(L_SHOULDER, rx(-0.5 * k));
            p.rotate(R_SHOULDER, rx(0.4 * k));
        }
        // jump: crouch, then flight with arms up
        4 => {
            let air = a * s.max(0.0);
            let crouch = a * (-s).max(0.0);
            for (hip, knee) in [(L_HIP, L_KNEE), (R_HIP, R_KNEE)] {
                p.rotate(hip, rx(-0.9 * crouch));
                p.rotate(knee, rx(1.6 * crouch));
            }
            p.rotate(L_SHOULDER, rx(-2.2 * air));
            p.rotate(R_SHOULDER, rx(-2.2 * air));
            p.root_shift = Vector3::new(0.0, 0.25 * air - 0.2 * crouch, 0.0);
        }
        // turn: whole-body yaw oscillation, head leading
        5 => {
            p.root_rotation = ry(1.3 * a * s);
            p.rotate(NECK, ry(0.3 * a * s));
            p.rotate(L_SHOULDER, rz(0.2 * a * s.abs()));
            p.rotate(R_SHOULDER, rz(-0.2 * a * s.abs()));
        }
        // clap: arms forward, hands opening and meeting
        6 => {
            let open = 0.7 * a * (1.0 + s) / 2.0 - 0.3;
            p.rotate(L_SHOULDER, ry(open) * rx(-1.3));
            p.rotate(R_SHOULDER, ry(-open) * rx(-1.3));
            p.rotate(L_ELBOW, rx(-0.3));
            p.rotate(R_ELBOW, rx(-0.3));
        }
        // walk_in_place: alternating leg lifts, counter arm swing
        7 => {
            let l = a * s.max(0.0);
            let r = a * (-s).max(0.0);
            p.rotate(L_HIP, rx(-0.8 * l));
            p.rotate(L_KNEE, rx(1.4 * l));
            p.rotate(R_HIP, rx(-0.8 * r));
            p.rotate(R_KNEE, rx(1.4 * r));
            p.rotate(L_SHOULDER, rx(0.5 * a * s));
            p.rotate(R_SHOULDER, rx(-0.5 * a * s));
            p.root_shift = Vector3::new(0.0, 0.02 * a * s.abs(), 0.0);
        }
        _ => unreachable!("class index checked by the caller"),
    }
    p
}

/// Phase angle at frame `t`.
pub(crate) fn phase_at(class: usize, t: usize, fps: f64, phase: f64) -> f64 {
    2.0 * PI * FREQUENCIES[class] * t as f64 / fps + phase
}
