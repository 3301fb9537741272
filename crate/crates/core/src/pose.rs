//! Rigid-body poses and trajectories.
//!
//! Quaternions are Hamilton, scalar-first `[w, x, y, z]`, and rotate
//! actively: a pose maps body-frame coordinates into the global frame as
//! `p_global = R(q) p_body + position`.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::cloud::FeaturedCloud;
use crate::error::{Error, Result};

const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub position: [f64; 3],
    /// `[w, x, y, z]`
    pub orientation: [f64; 4],
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            position: [0.0; 3],
            orientation: [1.0, 0.0, 0.0, 0.0],
        }
    }

    /// Checked constructor.
    pub fn new(position: [f64; 3], orientation: [f64; 4]) -> Result<Self> {
        let p = Self { position, orientation };
        p.validate()?;
        Ok(p)
    }

    pub fn from_translation(position: [f64; 3]) -> Self {
        Self {
            position,
            orientation: [1.0, 0.0, 0.0, 0.0],
        }
    }

    /// Rotation by `yaw` about +z followed by translation.
    pub fn from_yaw(position: [f64; 3], yaw: f64) -> Self {
        let h = yaw / 2.0;
        Self {
            position,
            orientation: [h.cos(), 0.0, 0.0, h.sin()],
        }
    }

    pub fn from_rotation(position: [f64; 3], rotation: &UnitQuaternion<f64>) -> Self {
        let q = rotation.quaternion();
        Self {
            position,
            orientation: [q.w, q.i, q.j, q.k],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.position.iter().chain(&self.orientation).all(|v| v.is_finite()) {
            return Err(Error::InvalidPose("non-finite component".into()));
        }
        let n = self.orientation.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidPose(format!("quaternion norm {n} is not 1")));
        }
        Ok(())
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        let [w, x, y, z] = self.orientation;
        UnitQuaternion::new_unchecked(Quaternion::new(w, x, y, z))
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }

    /// Body frame → global frame.
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let v = self.rotation() * Vector3::from(p) + self.translation();
        [v.x, v.y, v.z]
    }

    /// Global frame → body frame.
    pub fn apply_inverse(&self, p: [f64; 3]) -> [f64; 3] {
        let v = self.rotation().inverse() * (Vector3::from(p) - self.translation());
        [v.x, v.y, v.z]
    }

    pub fn inverse(&self) -> Pose {
        let r = self.rotation().inverse();
        let t = -(r * self.translation());
        Pose::from_rotation([t.x, t.y, t.z], &r)
    }

    /// `self ∘ inner`: apply `inner` first, then `self`.
    pub fn compose(&self, inner: &Pose) -> Pose {
        let r = self.rotation() * inner.rotation();
        let t = self.rotation() * inner.translation() + self.translation();
        Pose::from_rotation([t.x, t.y, t.z], &r)
    }

    /// Linear position / spherical-linear orientation blend, `w ∈ [0, 1]`.
    /// Returns the endpoints bit-exactly at `w = 0` and `w = 1`.
    pub fn interpolate(&self, other: &Pose, w: f64) -> Pose {
        if w == 0.0 {
            return *self;
        }
        if w == 1.0 {
            return *other;
        }
        let mut position = [0.0; 3];
        for k in 0..3 {
            position[k] = self.position[k] + w * (other.position[k] - self.position[k]);
        }
        Pose {
            position,
            orientation: slerp(self.orientation, other.orientation, w),
        }
    }
}

/// Spherical linear interpolation on the shorter arc.
pub fn slerp(a: [f64; 4], b: [f64; 4], w: f64) -> [f64; 4] {
    let mut dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let mut b = b;
    if dot < 0.0 {
        dot = -dot;
        b = b.map(|v| -v);
    }
    let (wa, wb) = if dot > 1.0 - 1e-12 {
        (1.0 - w, w)
    } else {
        let theta = dot.clamp(-1.0, 1.0).acos();
        let s = theta.sin();
        (((1.0 - w) * theta).sin() / s, (w * theta).sin() / s)
    };
    let mut q = [0.0; 4];
    for k in 0..4 {
        q[k] = wa * a[k] + wb * b[k];
    }
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    q.map(|v| v / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
}

impl Trajectory {
    pub fn new(samples: Vec<TrajectorySample>) -> Result<Self> {
        let t = Self { samples };
        t.validate()?;
        Ok(t)
    }

    pub fn from_poses(times: &[f64], poses: &[Pose]) -> Result<Self> {
        if times.len() != poses.len() {
            return Err(Error::InvalidInput("time and pose counts differ".into()));
        }
        Self::new(
            times
                .iter()
                .zip(poses)
                .map(|(&t, &pose)| TrajectorySample { t, pose })
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.samples {
            s.pose.validate()?;
            if !s.t.is_finite() {
                return Err(Error::InvalidInput("non-finite timestamp".into()));
            }
        }
        if self.samples.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::InvalidInput("trajectory timestamps must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Straight-line motion between two positions at constant orientation.
    pub fn linear(start: [f64; 3], end: [f64; 3], orientation: [f64; 4], n: usize, dt: f64) -> Result<Self> {
        let samples = (0..n)
            .map(|i| {
                let w = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
                let mut p = [0.0; 3];
                for k in 0..3 {
                    p[k] = start[k] + w * (end[k] - start[k]);
                }
                TrajectorySample {
                    t: i as f64 * dt,
                    pose: Pose { position: p, orientation },
                }
            })
            .collect();
        Self::new(samples)
    }
}

/// Map every point's `x, y, z` from the radar body frame into the global
/// frame. All other feature columns are copied unchanged.
pub fn transform_cloud(pose: &Pose, cloud: &FeaturedCloud) -> Result<FeaturedCloud> {
    pose.validate()?;
    let mut out = cloud.clone();
    for i in 0..out.len() {
        let row = out.row_mut(i);
        let g = pose.apply([row[0], row[1], row[2]]);
        row[..3].copy_from_slice(&g);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Provenance;
    use proptest::prelude::*;

    fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }

    #[test]
    fn identity_leaves_cloud_unchanged() {
        let mut c = FeaturedCloud::new(Provenance::Nca);
        c.push(&[1.0, -2.0, 0.5, 0.3, 12.0, 4.0]);
        assert_eq!(transform_cloud(&Pose::identity(), &c).unwrap(), c);
    }

    #[test]
    fn yaw_quarter_turn() {
        let pose = Pose::from_yaw([1.0, 2.0, 3.0], std::f64::consts::FRAC_PI_2);
        let g = pose.apply([1.0, 0.0, 0.0]);
        assert!(dist(g, [1.0, 3.0, 3.0]) < 1e-12);
        let mut c = FeaturedCloud::new(Provenance::Saa);
        c.push(&[1.0, 0.0, 0.0, 7.0]);
        let t = transform_cloud(&pose, &c).unwrap();
        assert!(dist(t.position(0), [1.0, 3.0, 3.0]) < 1e-12);
        assert_eq!(t.row(0)[3], 7.0);
    }

    #[test]
    fn non_unit_quaternion_is_rejected() {
        let pose = Pose {
            position: [0.0; 3],
            orientation: [1.0, 0.1, 0.0, 0.0],
        };
        let c = FeaturedCloud::from_positions(&[[1.0, 0.0, 0.0]]);
        assert!(matches!(transform_cloud(&pose, &c), Err(Error::InvalidPose(_))));
        assert!(Pose::new([0.0; 3], [2.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn slerp_endpoints_and_midpoint() {
        let a = Pose::from_yaw([0.0; 3], 0.0);
        let b = Pose::from_yaw([2.0, 0.0, 0.0], 1.0);
        assert_eq!(a.interpolate(&b, 0.0), a);
        assert_eq!(a.interpolate(&b, 1.0), b);
        let m = a.interpolate(&b, 0.5);
        let expect = Pose::from_yaw([1.0, 0.0, 0.0], 0.5);
        for k in 0..4 {
            assert!((m.orientation[k] - expect.orientation[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn unordered_trajectory_is_rejected() {
        let p = Pose::identity();
        assert!(Trajectory::from_poses(&[0.0, 0.0], &[p, p]).is_err());
        assert!(Trajectory::from_poses(&[0.0, 1.0], &[p, p]).is_ok());
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        (
            prop::array::uniform3(-10.0..10.0f64),
            prop::array::uniform4(-1.0..1.0f64),
        )
            .prop_filter_map("degenerate quaternion", |(p, q)| {
                let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
                (n > 0.1).then(|| Pose {
                    position: p,
                    orientation: q.map(|v| v / n),
                })
            })
    }

    proptest! {
        #[test]
        fn rigid_transform_preserves_distances(
            pose in arb_pose(),
            a in prop::array::uniform3(-5.0..5.0f64),
            b in prop::array::uniform3(-5.0..5.0f64),
        ) {
            let d0 = dist(a, b);
            let d1 = dist(pose.apply(a), pose.apply(b));
            prop_assert!((d0 - d1).abs() < 1e-9);
        }

        #[test]
        fn inverse_round_trips(pose in arb_pose(), a in prop::array::uniform3(-5.0..5.0f64)) {
            let back = pose.inverse().apply(pose.apply(a));
            prop_assert!(dist(a, back) < 1e-9);
            prop_assert!(dist(pose.apply_inverse(pose.apply(a)), a) < 1e-9);
        }

        #[test]
        fn composition_matches_sequential(
            p1 in arb_pose(),
            p2 in arb_pose(),
            a in prop::array::uniform3(-5.0..5.0f64),
        ) {
            let seq = p2.apply(p1.apply(a));
            let comp = p2.compose(&p1).apply(a);
            prop_assert!(dist(seq, comp) < 1e-9);
        }
    }
}
