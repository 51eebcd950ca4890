//! Pure camera and Euclidean geometry: pinhole projection, depth
//! back-projection, total-least-squares plane fitting, ray-plane intersection.
//!
//! All poses here map world coordinates into the camera frame
//! (`x_cam = R x_world + t`); loaders normalize other conventions before
//! anything reaches this module.

use nalgebra::{Matrix3, Rotation3, Vector2, Vector3, Vector4};
use thiserror::Error;

use crate::grid::ScalarGrid;

#[derive(Debug, Error)]
pub enum GeometryError {
    /// The point projects behind the camera. Signals an invisible point,
    /// not a fault.
    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },
    /// Plane fitting needs at least 3 non-collinear points.
    #[error("degenerate input for plane fit: {0}")]
    DegenerateInput(String),
    /// Rotation failed the orthonormality check.
    #[error("rotation matrix is not orthonormal within {tol}: residual {residual}")]
    InvalidRotation { residual: f64, tol: f64 },
}

/// World-to-camera rigid transform.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

pub const ROTATION_TOL: f64 = 1e-6;

impl CameraPose {
    /// Build a pose, verifying `R^T R = I` and `det(R) = +1` within 1e-6.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let residual = rotation_residual(&rotation);
        if residual > ROTATION_TOL {
            return Err(GeometryError::InvalidRotation {
                residual,
                tol: ROTATION_TOL,
            });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Pose that maps camera coordinates to world coordinates, inverted
    /// into this module's world-to-camera convention.
    pub fn from_camera_to_world(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        let r_wc = rotation.transpose();
        let t_wc = -r_wc * translation;
        Self::new(r_wc, t_wc)
    }

    /// Camera center in world coordinates (`-R^T t`).
    pub fn camera_center(&self) -> Vector3<f64> {
        -self.rotation.transpose() * self.translation
    }

    /// Camera viewing direction (+z of the camera frame) in world coordinates.
    pub fn forward_axis(&self) -> Vector3<f64> {
        self.rotation.transpose() * Vector3::z()
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// World-frame direction to camera frame (rotation only).
    pub fn transform_direction(&self, d: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * d
    }
}

/// Max-abs residual of the orthonormality and determinant conditions.
pub fn rotation_residual(r: &Matrix3<f64>) -> f64 {
    let gram = r.transpose() * r - Matrix3::identity();
    let ortho = gram.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let det = (r.determinant() - 1.0).abs();
    ortho.max(det)
}

/// Plane `Ax + By + Cz + D = 0` with `(A, B, C)` unit length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl Plane {
    pub fn new(normal: Vector3<f64>, offset: f64) -> Self {
        let n = normal.norm();
        Self {
            normal: normal / n,
            offset: offset / n,
        }
    }

    /// Signed distance; positive on the side the normal points into.
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) + self.offset
    }

    /// Flip so that `point` lies on the positive side. Ties (point on the
    /// plane) keep the current orientation.
    pub fn oriented_toward(&self, point: &Vector3<f64>) -> Plane {
        if self.signed_distance(point) < 0.0 {
            Plane {
                normal: -self.normal,
                offset: -self.offset,
            }
        } else {
            *self
        }
    }

    /// Orthogonal projection of a point onto the plane.
    pub fn project_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        p - self.normal * self.signed_distance(p)
    }
}

/// Result of projecting a world point into a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: Vector2<f64>,
    /// Camera-frame z in meters.
    pub depth: f64,
}

/// Project a homogeneous world point through `K [R | t]` and dehomogenize.
///
/// Returns `BehindCamera` when the camera-frame depth is not positive.
pub fn project_point(
    k: &Matrix3<f64>,
    pose: &CameraPose,
    point_world: &Vector4<f64>,
) -> Result<Projection, GeometryError> {
    let (pixel, depth) = project_homogeneous(k, pose, point_world);
    if depth <= 0.0 {
        return Err(GeometryError::BehindCamera { depth });
    }
    Ok(Projection { pixel, depth })
}

/// Unchecked projection used where behind-camera handling is the caller's
/// job; depth keeps its sign.
pub fn project_homogeneous(
    k: &Matrix3<f64>,
    pose: &CameraPose,
    point_world: &Vector4<f64>,
) -> (Vector2<f64>, f64) {
    let w = point_world.w;
    let p = Vector3::new(point_world.x, point_world.y, point_world.z);
    // Scale-invariant in the homogeneous coordinate: normalize by w.
    let cam = pose.rotation * p + pose.translation * w;
    let depth = cam.z / w;
    let img = k * cam;
    (Vector2::new(img.x / img.z, img.y / img.z), depth)
}

/// Back-project every valid depth sample to a world point. Depth value 0
/// marks an invalid sample and is skipped.
pub fn backproject_depth(
    k: &Matrix3<f64>,
    pose: &CameraPose,
    depth_map: &ScalarGrid,
    stride: usize,
) -> Vec<Vector3<f64>> {
    assert!(stride >= 1, "stride must be at least 1");
    let k_inv = k.try_inverse().expect("intrinsics must be invertible");
    let r_inv = pose.rotation.transpose();
    let mut points = Vec::new();
    for y in (0..depth_map.height()).step_by(stride) {
        for x in (0..depth_map.width()).step_by(stride) {
            let z = *depth_map.get(x, y) as f64;
            if z <= 0.0 || !z.is_finite() {
                continue;
            }
            points.push(backproject_pixel(&k_inv, &r_inv, pose, x as f64, y as f64, z));
        }
    }
    points
}

/// Back-project a single pixel with known depth to world coordinates.
pub fn backproject_pixel_world(
    k: &Matrix3<f64>,
    pose: &CameraPose,
    x: f64,
    y: f64,
    depth: f64,
) -> Vector3<f64> {
    let k_inv = k.try_inverse().expect("intrinsics must be invertible");
    backproject_pixel(&k_inv, &pose.rotation.transpose(), pose, x, y, depth)
}

fn backproject_pixel(
    k_inv: &Matrix3<f64>,
    r_inv: &Matrix3<f64>,
    pose: &CameraPose,
    x: f64,
    y: f64,
    depth: f64,
) -> Vector3<f64> {
    let ray = k_inv * Vector3::new(x, y, 1.0);
    let cam = ray * (depth / ray.z);
    r_inv * (cam - pose.translation)
}

/// Total-least-squares plane through >= 3 points: the smallest eigenvector
/// of the mean-centered scatter matrix. The returned normal uses a
/// canonical sign (prefer positive z, then y, then x); callers with a side
/// preference apply [`Plane::oriented_toward`].
pub fn fit_plane(points: &[Vector3<f64>]) -> Result<Plane, GeometryError> {
    if points.len() < 3 {
        return Err(GeometryError::DegenerateInput(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mean = points.iter().sum::<Vector3<f64>>() / n;
    let mut scatter = Matrix3::<f64>::zeros();
    for p in points {
        let d = p - mean;
        scatter += d * d.transpose();
    }
    let eig = scatter.symmetric_eigen();
    let (mut min_idx, mut min_val) = (0usize, f64::INFINITY);
    let mut vals: Vec<f64> = Vec::with_capacity(3);
    for i in 0..3 {
        let v = eig.eigenvalues[i];
        vals.push(v);
        if v < min_val {
            min_val = v;
            min_idx = i;
        }
    }
    // Collinear input leaves two near-zero eigenvalues relative to the span.
    let max_val = vals.iter().cloned().fold(0.0f64, f64::max);
    let second_smallest = {
        let mut sorted = vals.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        sorted[1]
    };
    if max_val <= 0.0 || second_smallest <= max_val * 1e-12 {
        return Err(GeometryError::DegenerateInput(
            "points are collinear or coincident".to_string(),
        ));
    }
    let mut normal = eig.eigenvectors.column(min_idx).into_owned();
    normal /= normal.norm();
    // Canonical sign: prefer C > 0, break exact zeros toward B then A.
    let flip = if normal.z != 0.0 {
        normal.z < 0.0
    } else if normal.y != 0.0 {
        normal.y < 0.0
    } else {
        normal.x < 0.0
    };
    if flip {
        normal = -normal;
    }
    let offset = -normal.dot(&mean);
    Ok(Plane { normal, offset })
}

/// Intersection of the forward ray `origin + t * direction`, `t >= 0`, with
/// a plane. `None` for parallel rays or intersections behind the origin.
pub fn ray_plane_intersect(
    origin: &Vector3<f64>,
    direction: &Vector3<f64>,
    plane: &Plane,
) -> Option<Vector3<f64>> {
    let denom = plane.normal.dot(direction);
    if denom.abs() < 1e-12 {
        return None;
    }
    let t = -plane.signed_distance(origin) / denom;
    if t < 0.0 {
        return None;
    }
    Some(origin + direction * t)
}

/// Rotation from an axis-angle increment (`nalgebra` scaled-axis form).
pub fn rotation_from_scaled_axis(axis: Vector3<f64>) -> Matrix3<f64> {
    Rotation3::from_scaled_axis(axis).into_inner()
}
