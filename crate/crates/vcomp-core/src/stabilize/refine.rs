//! Per-frame camera pose refinement: damped Gauss-Newton (Levenberg-
//! Marquardt) minimization of the summed squared reprojection error of the
//! anchor world points against their tracked pixels.
//!
//! The pose increment is a local SE(3) update: an axis-angle rotation
//! composed onto the current rotation plus a translation step. Accepted
//! iterations never increase the objective; the rotation is re-projected
//! onto SO(3) after every update.

use nalgebra::{Matrix3, Matrix6, Vector2, Vector3, Vector4, Vector6};

use crate::geometry::{project_homogeneous, rotation_from_scaled_axis, CameraPose};

use super::StabilizeError;

#[derive(Debug, Clone, Copy)]
pub struct RefineOptions {
    pub max_iterations: usize,
    /// Step-size threshold treated as convergence.
    pub step_tolerance: f64,
    /// Relative cost-decrease threshold treated as convergence.
    pub cost_tolerance: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            step_tolerance: 1e-12,
            cost_tolerance: 1e-14,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RefinedPose {
    pub pose: CameraPose,
    /// Per-component RMS of the residual vector (the calibration-style
    /// convention: sqrt of mean squared error over all 2M coordinates).
    pub rms_reprojection: f64,
    pub iterations: usize,
    /// Objective value after each accepted step; non-increasing.
    pub cost_history: Vec<f64>,
}

/// One anchor observation for a single frame.
#[derive(Debug, Clone, Copy)]
pub struct AnchorObservation {
    pub world: Vector4<f64>,
    pub pixel: Vector2<f64>,
}

fn total_cost(
    k: &Matrix3<f64>,
    pose: &CameraPose,
    observations: &[AnchorObservation],
) -> f64 {
    observations
        .iter()
        .map(|obs| {
            let (proj, _) = project_homogeneous(k, pose, &obs.world);
            (obs.pixel - proj).norm_squared()
        })
        .sum()
}

/// Nearest rotation matrix (polar decomposition via SVD).
fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut rot = u * v_t;
    if rot.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        rot = u * v_t;
    }
    rot
}

/// Minimize the reprojection error over the camera pose starting from
/// `init`. Needs at least 4 observations in general position.
pub fn refine_pose(
    k: &Matrix3<f64>,
    observations: &[AnchorObservation],
    init: &CameraPose,
    opts: &RefineOptions,
) -> Result<RefinedPose, StabilizeError> {
    let m = observations.len();
    if m < 4 {
        return Err(StabilizeError::InsufficientAnchors { got: m, need: 4 });
    }

    let mut rotation = init.rotation;
    let mut translation = init.translation;
    let mut cost = total_cost(k, &CameraPose { rotation, translation }, observations);
    let mut lambda = 1e-3;
    let mut iterations = 0usize;
    let mut converged = false;
    let mut cost_history = vec![cost];

    for _ in 0..opts.max_iterations {
        iterations += 1;
        let pose = CameraPose {
            rotation,
            translation,
        };
        // Accumulate the normal equations J^T J delta = J^T r.
        let mut jtj = Matrix6::<f64>::zeros();
        let mut jtr = Vector6::<f64>::zeros();
        for obs in observations {
            let pw = Vector3::new(obs.world.x, obs.world.y, obs.world.z) / obs.world.w;
            let p_cam = pose.rotation * pw + pose.translation;
            let q = k * p_cam;
            if q.z.abs() < 1e-12 {
                continue;
            }
            let proj = Vector2::new(q.x / q.z, q.y / q.z);
            let residual = obs.pixel - proj;

            // d(u,v)/d(p_cam) through the intrinsics.
            let inv_z = 1.0 / q.z;
            let row_u = (k.row(0) - k.row(2) * proj.x) * inv_z;
            let row_v = (k.row(1) - k.row(2) * proj.y) * inv_z;
            // Left-multiplicative increment: dp/domega = -[p_cam]x, dp/dt = I.
            let skew = Matrix3::new(
                0.0, -p_cam.z, p_cam.y, //
                p_cam.z, 0.0, -p_cam.x, //
                -p_cam.y, p_cam.x, 0.0,
            );
            let mut jac = nalgebra::Matrix2x6::<f64>::zeros();
            let ju_rot = row_u * (-skew);
            let jv_rot = row_v * (-skew);
            for c in 0..3 {
                jac[(0, c)] = ju_rot[c];
                jac[(1, c)] = jv_rot[c];
                jac[(0, c + 3)] = row_u[c];
                jac[(1, c + 3)] = row_v[c];
            }
            jtj += jac.transpose() * jac;
            jtr += jac.transpose() * residual;
        }

        // Damped step with adaptive lambda; retry with heavier damping on
        // cost increase so accepted iterates are monotone.
        let mut stepped = false;
        for _ in 0..16 {
            let mut damped = jtj;
            for i in 0..6 {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(delta) = damped.cholesky().map(|c| c.solve(&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let omega = Vector3::new(delta[0], delta[1], delta[2]);
            let dt = Vector3::new(delta[3], delta[4], delta[5]);
            let new_rotation = orthonormalize(&(rotation_from_scaled_axis(omega) * rotation));
            let new_translation = translation + dt;
            let new_cost = total_cost(
                k,
                &CameraPose {
                    rotation: new_rotation,
                    translation: new_translation,
                },
                observations,
            );
            if new_cost <= cost {
                let step_norm = delta.norm();
                let improvement = cost - new_cost;
                rotation = new_rotation;
                translation = new_translation;
                cost = new_cost;
                cost_history.push(cost);
                lambda = (lambda * 0.1).max(1e-12);
                stepped = true;
                if step_norm < opts.step_tolerance
                    || improvement <= opts.cost_tolerance * cost.max(1e-300)
                {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !stepped {
            // Damping exhausted: we are at a (numerical) minimum.
            converged = true;
        }
        if converged {
            break;
        }
    }

    let refined = RefinedPose {
        pose: CameraPose {
            rotation,
            translation,
        },
        rms_reprojection: (cost / (2 * m) as f64).sqrt(),
        iterations,
        cost_history,
    };
    if !converged {
        return Err(StabilizeError::NonConvergence {
            best: Box::new(refined),
        });
    }
    Ok(refined)
}
