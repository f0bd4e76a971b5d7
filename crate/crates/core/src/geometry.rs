//! Pinhole camera and rigid poses.
//!
//! Camera frame: x right, y down, z forward. Pixel `(col, row)` has its
//! center at integer image coordinates, so a projected point lands on the
//! pixel `(round(u), round(v))`.

use nalgebra::{Matrix3, Point3, Rotation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
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

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidInput(format!(
                "focal lengths must be positive, got ({}, {})",
                self.fx, self.fy
            )));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64)
            || !(self.cy >= 0.0 && self.cy < self.height as f64)
        {
            return Err(Error::InvalidInput(format!(
                "principal point ({}, {}) outside {}x{}",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Same field of view at another resolution.
    pub fn scaled(&self, width: usize, height: usize) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: (self.cx + 0.5) * sx - 0.5,
            cy: (self.cy + 0.5) * sy - 0.5,
            width,
            height,
        }
    }

    /// Continuous image coordinates of a camera-frame point with z > 0.
    #[inline]
    pub fn project(&self, p: &Vector3<f64>) -> (f64, f64) {
        (
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        )
    }

    /// Pixel hit by image coordinates `(u, v)`, keeping `margin` pixels
    /// clear of the border.
    #[inline]
    pub fn pixel(&self, u: f64, v: f64, margin: usize) -> Option<(usize, usize)> {
        let (col, row) = (u.round(), v.round());
        let lo = margin as f64;
        if col < lo
            || row < lo
            || col >= (self.width.saturating_sub(margin)) as f64
            || row >= (self.height.saturating_sub(margin)) as f64
        {
            return None;
        }
        Some((col as usize, row as usize))
    }

    /// Camera-frame direction through the center of pixel `(col, row)` with z = 1.
    #[inline]
    pub fn ray(&self, col: f64, row: f64) -> Vector3<f64> {
        Vector3::new((col - self.cx) / self.fx, (row - self.cy) / self.fy, 1.0)
    }
}

/// Camera-to-world rigid transform at a point in time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
    pub timestamp: f64,
}

impl Pose {
    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>, timestamp: f64) -> Self {
        Self {
            rotation,
            translation,
            timestamp,
        }
    }

    pub fn identity(timestamp: f64) -> Self {
        Self::new(UnitQuaternion::identity(), Vector3::zeros(), timestamp)
    }

    /// Camera at `eye` looking at `target`, with image-up as close to
    /// `world_up` as possible and then rolled by `roll` radians about the
    /// viewing axis.
    pub fn look_at(
        eye: Point3<f64>,
        target: Point3<f64>,
        world_up: Vector3<f64>,
        roll: f64,
        timestamp: f64,
    ) -> Self {
        let forward = (target - eye).normalize();
        let mut right = forward.cross(&world_up);
        if right.norm() < 1e-9 {
            right = forward.cross(&Vector3::x());
            if right.norm() < 1e-9 {
                right = forward.cross(&Vector3::y());
            }
        }
        let right = right.normalize();
        let down = forward.cross(&right).normalize();
        let m = Matrix3::from_columns(&[right, down, forward]);
        let base = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m));
        let rolled = base * UnitQuaternion::from_axis_angle(&Vector3::z_axis(), roll);
        Self::new(rolled, eye.coords, timestamp)
    }

    pub fn from_matrix(m: &[[f64; 4]; 4], timestamp: f64) -> Result<Self> {
        let r = Matrix3::new(
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        );
        let det = r.determinant();
        if !(det > 0.5 && det < 1.5) {
            return Err(Error::InvalidInput(format!(
                "pose rotation block is not a rotation (det {det})"
            )));
        }
        let rot = Rotation3::from_matrix_eps(&r, 1e-12, 100, Rotation3::identity());
        Ok(Self::new(
            UnitQuaternion::from_rotation_matrix(&rot),
            Vector3::new(m[0][3], m[1][3], m[2][3]),
            timestamp,
        ))
    }

    pub fn to_matrix(&self) -> [[f64; 4]; 4] {
        let r = self.rotation.to_rotation_matrix();
        let t = self.translation;
        let mut m = [[0.0; 4]; 4];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = r[(i, j)];
            }
            m[i][3] = t[i];
        }
        m[3][3] = 1.0;
        m
    }

    #[inline]
    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse_transform_vector(&(p - self.translation))
    }

    #[inline]
    pub fn camera_to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transform_vector(p) + self.translation
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn intrinsics_validation() {
        assert!(Intrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).is_ok());
        assert!(Intrinsics::new(0.0, 500.0, 320.0, 240.0, 640, 480).is_err());
        assert!(Intrinsics::new(500.0, 500.0, 640.0, 240.0, 640, 480).is_err());
    }

    #[test]
    fn projection_roundtrip() {
        let k = Intrinsics::new(500.0, 400.0, 319.5, 239.5, 640, 480).unwrap();
        let ray = k.ray(100.0, 50.0);
        let p = ray * 2.5;
        let (u, v) = k.project(&p);
        assert!((u - 100.0).abs() < 1e-9 && (v - 50.0).abs() < 1e-9);
        assert_eq!(k.pixel(u, v, 0), Some((100, 50)));
        assert_eq!(k.pixel(-0.6, 0.0, 0), None);
        assert_eq!(k.pixel(1.0, 1.0, 2), None);
    }

    #[test]
    fn look_at_points_forward() {
        let pose = Pose::look_at(
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Vector3::z(),
            0.0,
            0.0,
        );
        let target = pose.world_to_camera(&Vector3::new(1.0, 0.0, 0.0));
        assert!((target - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
        // world up lands on image-up (negative camera y)
        let up = pose.rotation.inverse_transform_vector(&Vector3::z());
        assert!((up - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn matrix_roundtrip() {
        let pose = Pose::new(
            UnitQuaternion::from_euler_angles(0.3, -0.2, FRAC_PI_2),
            Vector3::new(1.0, 2.0, 3.0),
            4.0,
        );
        let back = Pose::from_matrix(&pose.to_matrix(), 4.0).unwrap();
        assert!(back.rotation.angle_to(&pose.rotation) < 1e-9);
        assert!((back.translation - pose.translation).norm() < 1e-12);
        let p = Vector3::new(0.1, -0.4, 2.0);
        assert!((pose.camera_to_world(&pose.world_to_camera(&p)) - p).norm() < 1e-12);
    }
}
