//! The 25-parameter pinhole camera and ray generation.
//!
//! Parameters are a row-major 4x4 camera-to-world matrix followed by a
//! row-major 3x3 intrinsic matrix normalised by image width. Camera space
//! follows the OpenCV convention: `+x` right, `+y` down, `+z` forward.

use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::{io, Error, Result};

/// Normalised focal length used for head-and-shoulders framing.
pub const DEFAULT_FOCAL: f64 = 3.12;

const ORTHONORMAL_TOL: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Point3<f64>,
    /// Unit length.
    pub direction: Vector3<f64>,
}

impl Ray {
    pub fn at(&self, t: f64) -> Point3<f64> {
        self.origin + self.direction * t
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraJson", into = "CameraJson")]
pub struct Camera {
    cam_to_world: Matrix4<f64>,
    intrinsic: Matrix3<f64>,
    intrinsic_inv: Matrix3<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraJson {
    extrinsic: Vec<f64>,
    intrinsic: Vec<f64>,
}

impl TryFrom<CameraJson> for Camera {
    type Error = Error;

    fn try_from(j: CameraJson) -> Result<Self> {
        if j.extrinsic.len() != 16 || j.intrinsic.len() != 9 {
            return Err(Error::Parameter(format!(
                "camera needs 16 extrinsic and 9 intrinsic values, got {} and {}",
                j.extrinsic.len(),
                j.intrinsic.len()
            )));
        }
        let mut params = [0.0; 25];
        params[..16].copy_from_slice(&j.extrinsic);
        params[16..].copy_from_slice(&j.intrinsic);
        Camera::from_params(&params)
    }
}

impl From<Camera> for CameraJson {
    fn from(c: Camera) -> Self {
        let p = c.params();
        CameraJson {
            extrinsic: p[..16].to_vec(),
            intrinsic: p[16..].to_vec(),
        }
    }
}

/// Intrinsic matrix with equal focal lengths and the principal point at the
/// image centre (square image).
pub fn centered_intrinsic(focal: f64) -> Matrix3<f64> {
    Matrix3::new(focal, 0.0, 0.5, 0.0, focal, 0.5, 0.0, 0.0, 1.0)
}

impl Camera {
    pub fn new(cam_to_world: Matrix4<f64>, intrinsic: Matrix3<f64>) -> Result<Self> {
        if cam_to_world
            .iter()
            .chain(intrinsic.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::Parameter("camera parameters must be finite".into()));
        }
        let last_row = cam_to_world.row(3);
        if (last_row - nalgebra::RowVector4::new(0.0, 0.0, 0.0, 1.0)).amax() > ORTHONORMAL_TOL {
            return Err(Error::Parameter(format!(
                "extrinsic last row must be (0, 0, 0, 1), got {last_row}"
            )));
        }
        let rot = cam_to_world.fixed_view::<3, 3>(0, 0).into_owned();
        let err = (rot.transpose() * rot - Matrix3::identity()).amax();
        if err > ORTHONORMAL_TOL || rot.determinant() <= 0.0 {
            return Err(Error::Parameter(format!(
                "extrinsic rotation is not a proper orthonormal matrix (deviation {err:.3e})"
            )));
        }
        if intrinsic[(0, 0)] <= 0.0 || intrinsic[(1, 1)] <= 0.0 {
            return Err(Error::Parameter("focal lengths must be positive".into()));
        }
        let intrinsic_inv = intrinsic
            .try_inverse()
            .filter(|m| m.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::Parameter("intrinsic matrix is singular".into()))?;
        Ok(Camera {
            cam_to_world,
            intrinsic,
            intrinsic_inv,
        })
    }

    /// From the flat 25-vector: 16 extrinsic values then 9 intrinsic values,
    /// both row-major.
    pub fn from_params(params: &[f64; 25]) -> Result<Self> {
        let ext = Matrix4::from_row_slice(&params[..16]);
        let int = Matrix3::from_row_slice(&params[16..]);
        Self::new(ext, int)
    }

    pub fn params(&self) -> [f64; 25] {
        let mut p = [0.0; 25];
        for r in 0..4 {
            for c in 0..4 {
                p[r * 4 + c] = self.cam_to_world[(r, c)];
            }
        }
        for r in 0..3 {
            for c in 0..3 {
                p[16 + r * 3 + c] = self.intrinsic[(r, c)];
            }
        }
        p
    }

    /// Camera at `eye` looking at `target` with `up` as the world up hint.
    pub fn look_at(
        eye: Point3<f64>,
        target: Point3<f64>,
        up: Vector3<f64>,
        intrinsic: Matrix3<f64>,
    ) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Parameter("eye and target coincide".into()))?;
        let right = forward.cross(&up).try_normalize(1e-12).ok_or_else(|| {
            Error::Parameter("up vector is parallel to the view direction".into())
        })?;
        let down = forward.cross(&right);
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 1>(0, 0).copy_from(&right);
        m.fixed_view_mut::<3, 1>(0, 1).copy_from(&down);
        m.fixed_view_mut::<3, 1>(0, 2).copy_from(&forward);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&eye.coords);
        Self::new(m, intrinsic)
    }

    pub fn cam_to_world(&self) -> &Matrix4<f64> {
        &self.cam_to_world
    }

    pub fn intrinsic(&self) -> &Matrix3<f64> {
        &self.intrinsic
    }

    pub fn position(&self) -> Point3<f64> {
        Point3::from(self.cam_to_world.fixed_view::<3, 1>(0, 3).into_owned())
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.cam_to_world.fixed_view::<3, 3>(0, 0).into_owned()
    }

    /// World-space optical axis (camera `+z`).
    pub fn forward(&self) -> Vector3<f64> {
        self.rotation().column(2).into_owned()
    }

    /// Ray through the centre of pixel `(u, v)` of an image `width` pixels wide.
    pub fn ray(&self, u: usize, v: usize, width: usize) -> Ray {
        let w = width as f64;
        let pix = Vector3::new((u as f64 + 0.5) / w, (v as f64 + 0.5) / w, 1.0);
        let dir_cam = self.intrinsic_inv * pix;
        let dir = (self.rotation() * dir_cam).normalize();
        Ray {
            origin: self.position(),
            direction: dir,
        }
    }

    /// Projects a world point to continuous pixel coordinates. `None` for
    /// points behind the camera.
    pub fn project(&self, p: &Point3<f64>, width: usize) -> Option<(f64, f64)> {
        let rel = p - self.position();
        let cam = self.rotation().transpose() * rel;
        if cam.z <= 0.0 {
            return None;
        }
        let h = self.intrinsic * (cam / cam.z);
        let w = width as f64;
        Some((h.x * w, h.y * w))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// One ray per pixel, row-major.
pub fn generate_rays(cam: &Camera, width: usize, height: usize) -> Vec<Ray> {
    (0..height)
        .flat_map(|v| (0..width).map(move |u| cam.ray(u, v, width)))
        .collect()
}

pub fn write_camera(cam: &Camera, path: &Path) -> Result<()> {
    io::write_atomic(path, cam.to_json()?.as_bytes())
}

pub fn read_camera(path: &Path) -> Result<Camera> {
    let bytes = io::read_bytes(path)?;
    Ok(serde_json::from_slice(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frontal(distance: f64) -> Camera {
        Camera::look_at(
            Point3::new(0.0, 0.0, distance),
            Point3::origin(),
            Vector3::y(),
            centered_intrinsic(DEFAULT_FOCAL),
        )
        .unwrap()
    }

    #[test]
    fn identity_extrinsic_centre_ray_is_optical_axis() {
        let cam = Camera::new(Matrix4::identity(), centered_intrinsic(2.0)).unwrap();
        // odd width: pixel 2 of 5 is centred on the principal point
        let r = cam.ray(2, 2, 5);
        assert!((r.direction - Vector3::z()).norm() < 1e-12);
        assert_eq!(r.origin, Point3::origin());
    }

    #[test]
    fn look_at_axes() {
        let cam = frontal(2.7);
        assert!((cam.forward() - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
        // image right is world +x, image down is world -y
        let right = cam.ray(9, 5, 10).direction - cam.ray(0, 5, 10).direction;
        assert!(right.x > 0.0);
        let down = cam.ray(5, 9, 10).direction - cam.ray(5, 0, 10).direction;
        assert!(down.y < 0.0);
    }

    #[test]
    fn translation_moves_all_origins() {
        let a = frontal(2.0);
        let mut m = *a.cam_to_world();
        m[(0, 3)] += 0.3;
        m[(1, 3)] -= 0.1;
        let b = Camera::new(m, *a.intrinsic()).unwrap();
        for (ra, rb) in generate_rays(&a, 4, 3).iter().zip(generate_rays(&b, 4, 3)) {
            assert!((rb.origin - ra.origin - Vector3::new(0.3, -0.1, 0.0)).norm() < 1e-12);
            assert!((rb.direction - ra.direction).norm() < 1e-15);
        }
    }

    #[test]
    fn rejects_invalid_cameras() {
        let mut m = Matrix4::identity();
        m[(0, 0)] = 1.1;
        assert!(matches!(
            Camera::new(m, centered_intrinsic(1.0)),
            Err(Error::Parameter(_))
        ));
        let mut m = Matrix4::identity();
        m[(3, 0)] = 0.5;
        assert!(Camera::new(m, centered_intrinsic(1.0)).is_err());
        assert!(Camera::new(Matrix4::identity(), centered_intrinsic(-1.0)).is_err());
        let singular = Matrix3::new(1.0, 0.0, 0.5, 0.0, 1.0, 0.5, 0.0, 0.0, 0.0);
        assert!(matches!(
            Camera::new(Matrix4::identity(), singular),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn json_roundtrip() {
        let cam = frontal(2.7);
        let json = cam.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["extrinsic"].as_array().unwrap().len(), 16);
        assert_eq!(v["intrinsic"].as_array().unwrap().len(), 9);
        assert_eq!(Camera::from_json(&json).unwrap(), cam);
        assert!(Camera::from_json(r#"{"extrinsic":[1],"intrinsic":[]}"#).is_err());
        assert!(Camera::from_json(r#"{"extrinsic":[],"intrinsic":[],"x":1}"#).is_err());
    }

    #[test]
    fn project_inverts_ray() {
        let cam = frontal(2.7);
        let r = cam.ray(17, 40, 64);
        let (x, y) = cam.project(&r.at(2.3), 64).unwrap();
        assert!((x - 17.5).abs() < 1e-9 && (y - 40.5).abs() < 1e-9);
    }
}
