//! Pinhole intrinsics and world-to-camera poses.
//!
//! World frame is z-up. Camera frame follows the usual vision convention:
//! x right, y down, z forward. Pixel `(u, v)` has its center at the
//! continuous coordinate `(u, v)`, so back-projection is `(u - cx) z / fx`.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector2, Vector3};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Square-pixel camera with the principal point at the image center.
    pub fn from_hfov(width: usize, height: usize, hfov_deg: f64) -> Result<Self> {
        if !(hfov_deg > 0.0 && hfov_deg < 180.0) {
            return Err(Error::invalid(format!("hfov {hfov_deg} outside (0, 180)")));
        }
        let f = width as f64 / (2.0 * (hfov_deg.to_radians() / 2.0).tan());
        Self::new(f, f, width as f64 / 2.0, height as f64 / 2.0, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.width > 0
            && self.height > 0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("bad intrinsics {self:?}")))
        }
    }

    #[inline]
    pub fn project(&self, p_cam: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(
            self.fx * p_cam.x / p_cam.z + self.cx,
            self.fy * p_cam.y / p_cam.z + self.cy,
        )
    }

    #[inline]
    pub fn back_project(&self, u: f64, v: f64, depth: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) * depth / self.fx, (v - self.cy) * depth / self.fy, depth)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

/// Rigid world-to-camera transform `p_cam = R p_world + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    /// Builds a pose from a camera-to-world rotation and the camera center.
    pub fn from_center_rotation(center: Vector3<f64>, r_wc: &Matrix3<f64>) -> Self {
        let r_wc = Rotation3::from_matrix(r_wc);
        let r_cw = r_wc.inverse();
        let rotation = UnitQuaternion::from_rotation_matrix(&r_cw);
        let translation = -(rotation * center);
        Self { rotation, translation }
    }

    /// Camera at `center` with heading `yaw` (radians, CCW from +x about +z)
    /// and `pitch` (radians, positive looks up). Roll is zero.
    pub fn from_yaw_pitch(center: Vector3<f64>, yaw: f64, pitch: f64) -> Self {
        Self::from_center_rotation(center, &yaw_pitch_matrix(yaw, pitch))
    }

    /// Camera at `center` looking at `target` with zero roll.
    pub fn look_at(center: Vector3<f64>, target: Vector3<f64>) -> Self {
        let d = target - center;
        let yaw = d.y.atan2(d.x);
        let pitch = d.z.atan2((d.x * d.x + d.y * d.y).sqrt());
        Self::from_yaw_pitch(center, yaw, pitch)
    }

    #[inline]
    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn camera_to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse() * (p - self.translation)
    }

    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.inverse() * self.translation)
    }

    /// Camera-to-world rotation matrix; its columns are the camera axes in world.
    pub fn r_wc(&self) -> Matrix3<f64> {
        self.rotation.inverse().to_rotation_matrix().into_inner()
    }

    pub fn forward(&self) -> Vector3<f64> {
        self.rotation.inverse() * Vector3::z()
    }

    pub fn yaw(&self) -> f64 {
        let f = self.forward();
        f.y.atan2(f.x)
    }

    pub fn pitch(&self) -> f64 {
        let f = self.forward();
        f.z.atan2((f.x * f.x + f.y * f.y).sqrt())
    }

    /// Applies a tangent update: `delta[0..3]` moves the center in world
    /// coordinates, `delta[3..6]` rotates about the camera's own axes.
    pub fn retract(&self, delta: &[f64; 6]) -> Self {
        let center = self.center() + Vector3::new(delta[0], delta[1], delta[2]);
        let omega = Vector3::new(delta[3], delta[4], delta[5]);
        let r_wc = self.r_wc() * Rotation3::new(omega).into_inner();
        let mut pose = Self::from_center_rotation(center, &r_wc);
        pose.renormalize();
        pose
    }

    pub fn renormalize(&mut self) {
        self.rotation = UnitQuaternion::new_normalize(self.rotation.into_inner());
    }

    pub fn quaternion_norm(&self) -> f64 {
        self.rotation.into_inner().norm()
    }
}

/// Camera-to-world rotation for a zero-roll camera.
pub fn yaw_pitch_matrix(yaw: f64, pitch: f64) -> Matrix3<f64> {
    let (sy, cy) = yaw.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let forward = Vector3::new(cp * cy, cp * sy, sp);
    let right = Vector3::new(sy, -cy, 0.0);
    let down = forward.cross(&right);
    Matrix3::from_columns(&[right, down, forward])
}
