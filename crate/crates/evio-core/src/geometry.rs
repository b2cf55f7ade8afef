//! Calibrated pinhole projection, rigid-body transforms, twist coordinates and
//! the warp function shared by mapping and tracking.
//!
//! Conventions: a [`Pose`] `T_a_b` maps points expressed in frame `b` into
//! frame `a` (`X_a = R * X_b + t`). Inverse depth is `1/Z` along the optical
//! axis of the owning camera. A [`Twist`] stacks translation first, rotation
//! second.

use nalgebra::{Matrix3, UnitQuaternion, Vector2, Vector3, Vector6};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("cannot project point with non-positive depth z={0}")]
    NonPositiveDepth(f64),
    #[error("inverse depth must be positive, got {0}")]
    NonPositiveInverseDepth(f64),
    #[error("point behind camera after transform (z={0})")]
    BehindCamera(f64),
    #[error("invalid camera intrinsics: {0}")]
    BadIntrinsics(String),
}

/// Rectified pinhole camera model (no distortion).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl PinholeCamera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        if fx <= 0.0 || fy <= 0.0 {
            return Err(GeometryError::BadIntrinsics(format!(
                "focal lengths must be positive (fx={fx}, fy={fy})"
            )));
        }
        if cx < 0.0 || cx > (width - 1) as f64 || cy < 0.0 || cy > (height - 1) as f64 {
            return Err(GeometryError::BadIntrinsics(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Project a 3D point in the camera frame onto the image plane.
    pub fn project(&self, p: &Vector3<f64>) -> Result<Vector2<f64>, GeometryError> {
        if p.z <= 0.0 {
            return Err(GeometryError::NonPositiveDepth(p.z));
        }
        Ok(Vector2::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        ))
    }

    /// Back-project a pixel into 3D space with inverse depth `rho` (1/m).
    pub fn back_project(&self, x: &Vector2<f64>, rho: f64) -> Result<Vector3<f64>, GeometryError> {
        if rho <= 0.0 {
            return Err(GeometryError::NonPositiveInverseDepth(rho));
        }
        let z = 1.0 / rho;
        Ok(Vector3::new(
            (x.x - self.cx) / self.fx * z,
            (x.y - self.cy) / self.fy * z,
            z,
        ))
    }

    /// True when the continuous pixel lies inside the image with the given margin.
    pub fn in_bounds(&self, x: &Vector2<f64>, margin: f64) -> bool {
        x.x >= margin
            && x.y >= margin
            && x.x <= (self.width - 1) as f64 - margin
            && x.y <= (self.height - 1) as f64 - margin
    }
}

/// Rigid-body transform: rotation as a unit quaternion plus translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_parts(qw: f64, qx: f64, qy: f64, qz: f64, t: Vector3<f64>) -> Self {
        let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(qw, qx, qy, qz));
        Self::new(q, t)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    /// Change of coordinates: `R * p + t`.
    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Composition `self * other`, renormalizing the quaternion.
    pub fn compose(&self, other: &Pose) -> Pose {
        let mut q = self.rotation.into_inner() * other.rotation.into_inner();
        q.normalize_mut();
        Pose {
            rotation: UnitQuaternion::new_unchecked(q),
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rot_inv = self.rotation.inverse();
        Pose {
            rotation: rot_inv,
            translation: -(rot_inv * self.translation),
        }
    }

    /// Interpolate between two poses: linear in translation, spherical in rotation.
    /// `alpha` in [0, 1] with 0 = self, 1 = other.
    pub fn interpolate(&self, other: &Pose, alpha: f64) -> Pose {
        let rotation = self
            .rotation
            .try_slerp(&other.rotation, alpha, 1e-12)
            .unwrap_or(if alpha < 0.5 {
                self.rotation
            } else {
                other.rotation
            });
        Pose {
            rotation,
            translation: self.translation.lerp(&other.translation, alpha),
        }
    }
}

/// Six-vector twist: translation part first (meters), rotation part second (radians).
pub type Twist = Vector6<f64>;

pub fn twist(translation: Vector3<f64>, rotation: Vector3<f64>) -> Twist {
    let mut psi = Twist::zeros();
    psi.fixed_rows_mut::<3>(0).copy_from(&translation);
    psi.fixed_rows_mut::<3>(3).copy_from(&rotation);
    psi
}

pub fn twist_translation(psi: &Twist) -> Vector3<f64> {
    psi.fixed_rows::<3>(0).into_owned()
}

pub fn twist_rotation(psi: &Twist) -> Vector3<f64> {
    psi.fixed_rows::<3>(3).into_owned()
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

// Series switch point for the trigonometric coefficients below; well above
// f64 roundoff so both branches agree to ~1e-16 at the boundary.
const SMALL_ANGLE: f64 = 1e-6;

/// SE(3) exponential map: Rodrigues rotation plus the V-matrix coupling of the
/// translational part.
pub fn exp_map(psi: &Twist) -> Pose {
    let rho = twist_translation(psi);
    let theta = twist_rotation(psi);
    let angle = theta.norm();
    let rotation = UnitQuaternion::from_scaled_axis(theta);

    let translation = if angle < SMALL_ANGLE {
        // V = I + [theta]x/2 + [theta]x^2/6 + O(theta^3)
        let k = skew(&theta);
        let v = Matrix3::identity() + k * 0.5 + k * k * (1.0 / 6.0);
        v * rho
    } else {
        let k = skew(&theta);
        let a = (1.0 - angle.cos()) / (angle * angle);
        let b = (angle - angle.sin()) / (angle * angle * angle);
        let v = Matrix3::identity() + k * a + k * k * b;
        v * rho
    };
    Pose::new(rotation, translation)
}

/// SE(3) logarithm, inverse of [`exp_map`] for rotation angles below pi.
pub fn log_map(pose: &Pose) -> Twist {
    let theta = pose.rotation.scaled_axis();
    let angle = theta.norm();
    let v_inv = if angle < SMALL_ANGLE {
        let k = skew(&theta);
        Matrix3::identity() - k * 0.5 + k * k * (1.0 / 12.0)
    } else {
        let k = skew(&theta);
        let half = 0.5 * angle;
        // V^-1 = I - [theta]x/2 + (1/theta^2)(1 - theta cot(theta/2)/2) [theta]x^2
        let coeff = (1.0 - half * half.cos() / half.sin()) / (angle * angle);
        Matrix3::identity() - k * 0.5 + k * k * coeff
    };
    twist(v_inv * pose.translation, theta)
}

/// Stereo rig: two rectified pinhole cameras plus body extrinsics.
///
/// `t_right_left` maps left-camera points into the right camera frame;
/// `t_body_leftcam` maps left-camera points into the body (IMU) frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoRig {
    pub left: PinholeCamera,
    pub right: PinholeCamera,
    pub t_right_left: Pose,
    pub t_body_leftcam: Pose,
    pub baseline: f64,
}

impl StereoRig {
    pub fn new(
        left: PinholeCamera,
        right: PinholeCamera,
        t_right_left: Pose,
        t_body_leftcam: Pose,
        baseline: f64,
    ) -> Result<Self, GeometryError> {
        let norm = t_right_left.translation.norm();
        if (norm - baseline).abs() > 1e-6 * baseline.max(1.0) {
            return Err(GeometryError::BadIntrinsics(format!(
                "extrinsic translation norm {norm} does not match baseline {baseline}"
            )));
        }
        Ok(Self {
            left,
            right,
            t_right_left,
            t_body_leftcam,
            baseline,
        })
    }

    /// Rectified rig with identity rotation between the cameras and the right
    /// camera offset by `baseline` along +x of the left camera.
    pub fn rectified(
        left: PinholeCamera,
        right: PinholeCamera,
        baseline: f64,
        t_body_leftcam: Pose,
    ) -> Result<Self, GeometryError> {
        let t_right_left = Pose::new(
            UnitQuaternion::identity(),
            Vector3::new(-baseline, 0.0, 0.0),
        );
        Self::new(left, right, t_right_left, t_body_leftcam, baseline)
    }
}

/// Warp a reference pixel with inverse depth `rho` through the motion `G(psi)`
/// into the current camera: `pi_cur(T(pi_ref^-1(x, rho), G(psi)))`.
///
/// Returns the continuous pixel even when it lands outside the current image;
/// bounds handling is the caller's job. Fails when the transformed point lies
/// behind the current camera.
pub fn warp(
    x: &Vector2<f64>,
    rho: f64,
    psi: &Twist,
    cam_ref: &PinholeCamera,
    cam_cur: &PinholeCamera,
) -> Result<Vector2<f64>, GeometryError> {
    let p_ref = cam_ref.back_project(x, rho)?;
    let p_cur = exp_map(psi).transform(&p_ref);
    if p_cur.z <= 0.0 {
        return Err(GeometryError::BehindCamera(p_cur.z));
    }
    cam_cur.project(&p_cur)
}
