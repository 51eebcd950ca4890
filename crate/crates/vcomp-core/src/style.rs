//! Adversarial-objective math for the refinement stage, the inpainting
//! input triple, and the external-refiner subprocess protocol.
//!
//! Mask convention: this module's penalty math follows the refiner's
//! training formulation, where the mask `m` is 0 on FOREGROUND pixels and
//! the factor `(1 - m)` selects the foreground. The rest of the pipeline
//! uses object masks with 1 = foreground; convert at the boundary with
//! [`penalty_mask_from_object_mask`]. Mixing the two conventions silently
//! inverts which pixels the penalty constrains.

use std::path::Path;
use std::time::Duration;

use thiserror::Error;

use crate::grid::{Grid, RgbGrid, ScalarGrid};
use crate::plugin::{self, PluginError};
use crate::scene::raster;

#[derive(Debug, Error)]
pub enum StyleError {
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("shape mismatch between samples")]
    ShapeMismatch,
    #[error("empty score batch")]
    EmptyBatch,
    #[error("critic gradient is not finite")]
    NonFiniteGradient,
    #[error(transparent)]
    Plugin(#[from] PluginError),
}

/// The refiner's input triple: the composite with the foreground blacked
/// out, the binary foreground mask, and the composite with the background
/// blacked out. Summing the two blacked images reconstructs the composite
/// exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct InpaintTriple {
    pub background_blacked: RgbGrid,
    /// 1 = foreground (object) pixel.
    pub fg_mask: Grid<bool>,
    pub foreground_blacked: RgbGrid,
}

impl InpaintTriple {
    /// Reassemble the original composite (exact by construction).
    pub fn reconstruct(&self) -> RgbGrid {
        let mut out = self.background_blacked.clone();
        for (x, y, p) in self.foreground_blacked.iter_pixels() {
            if *self.fg_mask.get(x, y) {
                out.set(x, y, *p);
            }
        }
        out
    }
}

/// Split a composite into the refiner input triple.
pub fn assemble_inpaint_inputs(
    composite: &RgbGrid,
    object_mask: &Grid<bool>,
) -> Result<InpaintTriple, StyleError> {
    if !composite.same_dims(object_mask) {
        return Err(StyleError::DimensionMismatch(
            composite.width(),
            composite.height(),
            object_mask.width(),
            object_mask.height(),
        ));
    }
    let zero = [0.0f32; 3];
    let background_blacked = RgbGrid::from_fn(composite.width(), composite.height(), |x, y| {
        if *object_mask.get(x, y) {
            zero
        } else {
            *composite.get(x, y)
        }
    });
    let foreground_blacked = RgbGrid::from_fn(composite.width(), composite.height(), |x, y| {
        if *object_mask.get(x, y) {
            *composite.get(x, y)
        } else {
            zero
        }
    });
    Ok(InpaintTriple {
        background_blacked,
        fg_mask: object_mask.clone(),
        foreground_blacked,
    })
}

/// Critic scores over real and generated samples plus the penalty weight.
#[derive(Debug, Clone)]
pub struct StyleBatch {
    pub critic_real: Vec<f64>,
    pub critic_fake: Vec<f64>,
    pub lambda: f64,
}

/// Adversarial losses from critic scores.
///
/// `critic_objective = mean(real) - mean(fake)` (what the critic
/// maximizes), `loss_d = -objective`, `loss_g = -mean(fake)`.
pub fn wgan_losses(batch: &StyleBatch) -> Result<(f64, f64, f64), StyleError> {
    if batch.critic_real.is_empty() || batch.critic_fake.is_empty() {
        return Err(StyleError::EmptyBatch);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let objective = mean(&batch.critic_real) - mean(&batch.critic_fake);
    Ok((objective, -objective, -mean(&batch.critic_fake)))
}

/// Point on the straight line between a real and a generated sample:
/// `u * real + (1 - u) * fake` elementwise.
pub fn interpolate_samples(
    x_real: &ScalarGrid,
    x_fake: &ScalarGrid,
    u: f64,
) -> Result<ScalarGrid, StyleError> {
    if !x_real.same_dims(x_fake) {
        return Err(StyleError::ShapeMismatch);
    }
    let u = u.clamp(0.0, 1.0) as f32;
    Ok(ScalarGrid::from_fn(x_real.width(), x_real.height(), |x, y| {
        u * x_real.get(x, y) + (1.0 - u) * x_fake.get(x, y)
    }))
}

/// A scalar function over sample grids with an optional analytic gradient.
/// When `gradient` returns `None`, [`gradient_penalty`] falls back to
/// central finite differences.
pub trait Critic {
    fn value(&self, x: &ScalarGrid) -> f64;

    fn gradient(&self, _x: &ScalarGrid) -> Option<ScalarGrid> {
        None
    }
}

/// Linear critic `<weights, x>`; its gradient is the weight grid.
pub struct LinearCritic {
    pub weights: ScalarGrid,
}

impl Critic for LinearCritic {
    fn value(&self, x: &ScalarGrid) -> f64 {
        self.weights
            .data()
            .iter()
            .zip(x.data())
            .map(|(w, v)| *w as f64 * *v as f64)
            .sum()
    }

    fn gradient(&self, _x: &ScalarGrid) -> Option<ScalarGrid> {
        Some(self.weights.clone())
    }
}

const FD_STEP: f64 = 5e-3;

fn numeric_gradient(critic: &dyn Critic, x: &ScalarGrid) -> ScalarGrid {
    let mut probe = x.clone();
    let mut grad = ScalarGrid::new_filled(x.width(), x.height(), 0.0);
    for y in 0..x.height() {
        for xx in 0..x.width() {
            let orig = *x.get(xx, y);
            // Divide by the step the f32 storage actually realized.
            let plus_v = (orig as f64 + FD_STEP) as f32;
            let minus_v = (orig as f64 - FD_STEP) as f32;
            probe.set(xx, y, plus_v);
            let plus = critic.value(&probe);
            probe.set(xx, y, minus_v);
            let minus = critic.value(&probe);
            probe.set(xx, y, orig);
            let realized = plus_v as f64 - minus_v as f64;
            grad.set(xx, y, ((plus - minus) / realized) as f32);
        }
    }
    grad
}

/// Masked gradient penalty at an interpolated sample:
/// `lambda * (|| grad D(x_hat) (*) (1 - m) ||_2 - 1)^2`, with `m = 0` on
/// foreground pixels so `(1 - m)` selects the foreground.
pub fn gradient_penalty(
    critic: &dyn Critic,
    x_hat: &ScalarGrid,
    penalty_mask: &ScalarGrid,
    lambda: f64,
) -> Result<f64, StyleError> {
    if !x_hat.same_dims(penalty_mask) {
        return Err(StyleError::ShapeMismatch);
    }
    let grad = critic
        .gradient(x_hat)
        .unwrap_or_else(|| numeric_gradient(critic, x_hat));
    if !grad.same_dims(x_hat) {
        return Err(StyleError::ShapeMismatch);
    }
    let mut norm_sq = 0.0f64;
    for (x, y, g) in grad.iter_pixels() {
        if !g.is_finite() {
            return Err(StyleError::NonFiniteGradient);
        }
        let keep = 1.0 - *penalty_mask.get(x, y) as f64;
        let masked = *g as f64 * keep;
        norm_sq += masked * masked;
    }
    let norm = norm_sq.sqrt();
    Ok(lambda * (norm - 1.0) * (norm - 1.0))
}

/// Convert a pipeline object mask (1 = foreground) into this module's
/// penalty mask (0 = foreground).
pub fn penalty_mask_from_object_mask(object_mask: &Grid<bool>) -> ScalarGrid {
    object_mask.map(|&fg| if fg { 0.0 } else { 1.0 })
}

/// How [`refine_frame_external`] behaves without a configured plugin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefineFallback {
    /// Return the reconstructed composite untouched.
    Identity,
}

/// Run an external refinement command over one frame.
///
/// Protocol: the triple is written to `workdir` as `bg.png`, `mask.png`,
/// `fg.png` plus `meta.json` (dimensions, encode gamma, frame index); the
/// command is invoked with the workdir as its final argument and must
/// write `refined.png` of identical dimensions and exit 0. With no
/// command configured the composite is returned unchanged and no process
/// spawns.
pub fn refine_frame_external(
    plugin_cmd: Option<&str>,
    triple: &InpaintTriple,
    workdir: &Path,
    timeout: Duration,
    gamma: f64,
    frame_index: usize,
) -> Result<RgbGrid, StyleError> {
    let Some(cmd) = plugin_cmd else {
        return Ok(triple.reconstruct());
    };
    std::fs::create_dir_all(workdir)
        .map_err(|e| PluginError::Workdir(workdir.display().to_string(), e.to_string()))?;

    raster::save_image_encoded(&workdir.join("bg.png"), &triple.background_blacked, gamma)
        .map_err(|e| PluginError::Workdir(workdir.display().to_string(), e.to_string()))?;
    raster::save_image_encoded(&workdir.join("fg.png"), &triple.foreground_blacked, gamma)
        .map_err(|e| PluginError::Workdir(workdir.display().to_string(), e.to_string()))?;
    let mask = triple.fg_mask.map(|&m| if m { 1.0f32 } else { 0.0 });
    raster::save_intensity_mask(&workdir.join("mask.png"), &mask)
        .map_err(|e| PluginError::Workdir(workdir.display().to_string(), e.to_string()))?;
    let meta = serde_json::json!({
        "width": triple.fg_mask.width(),
        "height": triple.fg_mask.height(),
        "gamma": gamma,
        "frame": frame_index,
    });
    std::fs::write(
        workdir.join("meta.json"),
        serde_json::to_string_pretty(&meta).expect("meta json"),
    )
    .map_err(|e| PluginError::Workdir(workdir.display().to_string(), e.to_string()))?;

    plugin::run_command(cmd, workdir, timeout)?;

    let refined_path = workdir.join("refined.png");
    if !refined_path.exists() {
        return Err(StyleError::Plugin(PluginError::BadOutput(
            "plugin did not write refined.png".to_string(),
        )));
    }
    let refined = raster::load_image_linear(&refined_path, gamma)
        .map_err(|e| PluginError::BadOutput(e.to_string()))?;
    if !refined.same_dims(&triple.fg_mask) {
        return Err(StyleError::Plugin(PluginError::BadOutput(format!(
            "refined.png is {}x{}, expected {}x{}",
            refined.width(),
            refined.height(),
            triple.fg_mask.width(),
            triple.fg_mask.height()
        ))));
    }
    Ok(refined)
}
