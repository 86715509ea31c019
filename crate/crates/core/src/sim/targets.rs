use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::scenario::{NoiseFile, TargetFile};
use crate::chain::lie;

/// Piecewise-linear pose schedule (positions and rotation vectors are
/// interpolated linearly, held constant outside the waypoint range).
#[derive(Debug, Clone)]
pub struct TargetSchedule {
    base: Isometry3<f64>,
    relative: bool,
    points: Vec<(f64, Vector3<f64>, Vector3<f64>)>,
}

impl TargetSchedule {
    pub fn new(file: &TargetFile, initial: Isometry3<f64>) -> Self {
        Self {
            base: initial,
            relative: file.relative,
            points: file
                .waypoints
                .iter()
                .map(|w| (w.t, Vector3::from(w.position), Vector3::from(w.rotation)))
                .collect(),
        }
    }

    pub fn hold(pose: Isometry3<f64>) -> Self {
        Self {
            base: pose,
            relative: true,
            points: Vec::new(),
        }
    }

    pub fn sample(&self, t: f64) -> Isometry3<f64> {
        let (p, r) = match self.points.as_slice() {
            [] => return self.base,
            [first, ..] if t <= first.0 => (first.1, first.2),
            [.., last] if t >= last.0 => (last.1, last.2),
            pts => {
                let k = pts.partition_point(|w| w.0 <= t);
                let (a, b) = (&pts[k - 1], &pts[k]);
                let s = (t - a.0) / (b.0 - a.0);
                (a.1.lerp(&b.1, s), a.2.lerp(&b.2, s))
            }
        };
        let rot = lie::so3_exp(&r);
        if self.relative {
            Isometry3::from_parts(
                Translation3::from(self.base.translation.vector + p),
                rot * self.base.rotation,
            )
        } else {
            Isometry3::from_parts(Translation3::from(p), rot)
        }
    }
}

/// Ornstein-Uhlenbeck process on `(position; rotation vector)`, exactly
/// discretized at the step size and seeded per task.
#[derive(Debug, Clone)]
pub struct OuNoise {
    sigma: Vector6<f64>,
    decay: f64,
    value: Vector6<f64>,
    rng: ChaCha8Rng,
}

impl OuNoise {
    pub fn new(file: &NoiseFile, dt: f64, seed: u64, stream: u64) -> Self {
        let s = [file.position_sigma, file.rotation_sigma];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut noise = Self {
            sigma: Vector6::new(s[0], s[0], s[0], s[1], s[1], s[1]),
            decay: (-dt / file.tau).exp(),
            value: Vector6::zeros(),
            rng,
        };
        // Start from the stationary distribution.
        noise.value = noise.draw().component_mul(&noise.sigma);
        noise
    }

    fn draw(&mut self) -> Vector6<f64> {
        Vector6::from_fn(|_, _| StandardNormal.sample(&mut self.rng))
    }

    pub fn value(&self) -> Vector6<f64> {
        self.value
    }

    pub fn advance(&mut self) {
        let spread = (1.0 - self.decay * self.decay).sqrt();
        let xi = self.draw();
        self.value = self.value * self.decay + xi.component_mul(&self.sigma) * spread;
    }
}

/// `pose` perturbed by `(δp; δr)`: translated by `δp`, rotated by `exp(δr)`.
pub fn perturb(pose: &Isometry3<f64>, delta: &Vector6<f64>) -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::from(pose.translation.vector + delta.fixed_rows::<3>(0)),
        lie::so3_exp(&delta.fixed_rows::<3>(3).into_owned()) * pose.rotation,
    )
}

/// World twist carrying `from` to `to` in `dt`.
pub fn finite_twist(from: &Isometry3<f64>, to: &Isometry3<f64>, dt: f64) -> Vector6<f64> {
    let dp = (to.translation.vector - from.translation.vector) / dt;
    let dr: UnitQuaternion<f64> = to.rotation * from.rotation.inverse();
    let w = lie::so3_log(&dr) / dt;
    lie::twist(&dp, &w)
}
