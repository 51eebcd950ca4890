//! Soft-shadow casting onto the fitted ground plane.
//!
//! For every pixel whose camera ray reaches the plane unobstructed, shadow
//! intensity is the fraction of jittered sun rays from the plane point that
//! the mesh blocks. The plane acts as a shadow catcher only; it contributes
//! no radiance of its own.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rayon::prelude::*;

use crate::geometry::{ray_plane_intersect, CameraPose, Plane};
use crate::grid::ScalarGrid;

use super::bvh::Ray;
use super::{pixel_rng, PlacedMesh, RAY_EPS};

#[derive(Debug, Clone, Copy)]
pub struct ShadowOptions {
    /// Half-angle of the jitter cone around the sun direction, radians.
    /// Zero gives hard shadows.
    pub angular_radius: f64,
    /// Rays per pixel; 1 is sufficient for hard shadows.
    pub samples: usize,
    pub seed: u64,
    pub frame: u64,
}

impl Default for ShadowOptions {
    fn default() -> Self {
        Self {
            angular_radius: 0.03,
            samples: 16,
            seed: 0,
            frame: 0,
        }
    }
}

/// Uniform direction inside the spherical cap of half-angle `radius`
/// around `axis`, stratified over `n` samples.
fn cone_sample(
    axis: &Vector3<f64>,
    radius: f64,
    n: usize,
    i: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Vector3<f64> {
    if radius <= 0.0 {
        return *axis;
    }
    let u = ((i as f64) + rng.random::<f64>()) / n as f64;
    let v: f64 = rng.random();
    let cos_theta = 1.0 - u * (1.0 - radius.cos());
    let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
    let phi = std::f64::consts::TAU * v;
    let helper = if axis.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let t = axis.cross(&helper).normalize();
    let b = axis.cross(&t);
    t * (sin_theta * phi.cos()) + b * (sin_theta * phi.sin()) + axis * cos_theta
}

/// Shadow intensity map for one frame. `sun_direction` points toward the
/// light and must be unit length. A sun below the plane's horizon (the
/// plane normal is oriented toward the sky side) yields all zeros.
#[allow(clippy::too_many_arguments)]
pub fn cast_shadow(
    placed: &PlacedMesh,
    plane: &Plane,
    sun_direction: &Vector3<f64>,
    intrinsics: &Matrix3<f64>,
    camera: &CameraPose,
    width: usize,
    height: usize,
    opts: &ShadowOptions,
) -> ScalarGrid {
    let mut out = ScalarGrid::new_filled(width, height, 0.0);
    if placed.is_empty() || plane.normal.dot(sun_direction) <= 0.0 {
        return out;
    }
    let k_inv = intrinsics.try_inverse().expect("intrinsics invertible");
    let r_wc = camera.rotation.transpose();
    let origin = camera.camera_center();
    let samples = opts.samples.max(1);

    let rows: Vec<Vec<f32>> = (0..height)
        .into_par_iter()
        .map(|y| {
            let mut row = vec![0.0f32; width];
            for x in 0..width {
                let dir = (r_wc * (k_inv * Vector3::new(x as f64, y as f64, 1.0))).normalize();
                let Some(plane_point) = ray_plane_intersect(&origin, &dir, plane) else {
                    continue;
                };
                // The plane point must be visible: the mesh must not block
                // the camera ray first.
                let t_plane = (plane_point - origin).norm();
                if placed.bvh.occluded(
                    &Ray {
                        origin,
                        direction: dir,
                    },
                    RAY_EPS,
                    t_plane - RAY_EPS,
                ) {
                    continue;
                }
                let mut rng = pixel_rng(opts.seed ^ 0x5AD0_715E, opts.frame, x, y);
                let mut blocked = 0usize;
                for s in 0..samples {
                    let light_dir =
                        cone_sample(sun_direction, opts.angular_radius, samples, s, &mut rng);
                    if light_dir.dot(&plane.normal) <= 0.0 {
                        // Jittered ray dives below the ground: self-blocked.
                        blocked += 1;
                        continue;
                    }
                    let shadow_ray = Ray {
                        origin: plane_point + plane.normal * RAY_EPS,
                        direction: light_dir,
                    };
                    if placed.bvh.occluded(&shadow_ray, RAY_EPS, f64::INFINITY) {
                        blocked += 1;
                    }
                }
                row[x] = blocked as f32 / samples as f32;
            }
            row
        })
        .collect();

    for (y, row) in rows.into_iter().enumerate() {
        for x in 0..width {
            out.set(x, y, row[x]);
        }
    }
    out
}
