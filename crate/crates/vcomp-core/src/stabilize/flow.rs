//! Dense pyramidal Lucas-Kanade optical flow.
//!
//! Classic coarse-to-fine iterative LK over box-filtered pyramids with
//! central-difference gradients. Per-pixel confidence is the minimum
//! eigenvalue of the windowed structure tensor, normalized to [0,1].

use rayon::prelude::*;

use crate::grid::{RgbGrid, ScalarGrid};

/// Dense displacement field a -> b with per-pixel confidence.
#[derive(Debug, Clone)]
pub struct FlowField {
    pub dx: ScalarGrid,
    pub dy: ScalarGrid,
    /// Structure-tensor confidence in [0,1]; 0 on textureless pixels.
    pub confidence: ScalarGrid,
    /// Frame pair this field maps between (a -> b).
    pub frame_a: usize,
    pub frame_b: usize,
}

impl FlowField {
    /// Tag the field with the frame pair it connects.
    pub fn with_pair(mut self, frame_a: usize, frame_b: usize) -> Self {
        self.frame_a = frame_a;
        self.frame_b = frame_b;
        self
    }

    pub fn width(&self) -> usize {
        self.dx.width()
    }

    pub fn height(&self) -> usize {
        self.dx.height()
    }

    /// Bilinear flow vector at a continuous position.
    pub fn sample(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.dx.sample_bilinear(x, y) as f64,
            self.dy.sample_bilinear(x, y) as f64,
        )
    }

    pub fn sample_confidence(&self, x: f64, y: f64) -> f64 {
        self.confidence.sample_bilinear(x, y) as f64
    }
}

const LK_ITERATIONS: usize = 12;
const LK_EPSILON: f64 = 1e-3;
/// Soft knee of the confidence normalization, in mean-squared-gradient
/// units of linear-light images.
const CONFIDENCE_KNEE: f64 = 1e-4;

fn to_gray(image: &RgbGrid) -> ScalarGrid {
    image.luminance()
}

/// 2x2 box downsample, truncating odd edges.
fn downsample(image: &ScalarGrid) -> ScalarGrid {
    let w = (image.width() / 2).max(1);
    let h = (image.height() / 2).max(1);
    ScalarGrid::from_fn(w, h, |x, y| {
        let (x0, y0) = (2 * x, 2 * y);
        let x1 = (x0 + 1).min(image.width() - 1);
        let y1 = (y0 + 1).min(image.height() - 1);
        0.25 * (image.get(x0, y0) + image.get(x1, y0) + image.get(x0, y1) + image.get(x1, y1))
    })
}

fn build_pyramid(image: &ScalarGrid, levels: usize) -> Vec<ScalarGrid> {
    let mut pyr = vec![image.clone()];
    for _ in 1..levels.max(1) {
        let next = downsample(pyr.last().unwrap());
        if next.width() < 8 || next.height() < 8 {
            break;
        }
        pyr.push(next);
    }
    pyr
}

/// Central-difference gradients, clamped at the border.
fn gradients(image: &ScalarGrid) -> (ScalarGrid, ScalarGrid) {
    let (w, h) = (image.width(), image.height());
    let gx = ScalarGrid::from_fn(w, h, |x, y| {
        let xm = x.saturating_sub(1);
        let xp = (x + 1).min(w - 1);
        0.5 * (image.get(xp, y) - image.get(xm, y))
    });
    let gy = ScalarGrid::from_fn(w, h, |x, y| {
        let ym = y.saturating_sub(1);
        let yp = (y + 1).min(h - 1);
        0.5 * (image.get(x, yp) - image.get(x, ym))
    });
    (gx, gy)
}

/// Six-parameter (affine) LK iterations seeded by the translation result;
/// returns the refined center-pixel flow.
#[allow(clippy::too_many_arguments)]
fn affine_refine(
    a: &ScalarGrid,
    b: &ScalarGrid,
    gx: &ScalarGrid,
    gy: &ScalarGrid,
    x: usize,
    y: usize,
    radius: i64,
    init_vx: f64,
    init_vy: f64,
) -> (f64, f64) {
    use nalgebra::{Matrix6, Vector6};
    let (w, h) = (a.width(), a.height());
    // Parameters: [vx, vy, a11, a12, a21, a22] with warp
    // (dx, dy) = v + A (tap - center).
    let mut p = Vector6::new(init_vx, init_vy, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..5 {
        let mut jtj = Matrix6::<f64>::zeros();
        let mut jtr = Vector6::<f64>::zeros();
        for wy in -radius..=radius {
            let sy = y as i64 + wy;
            if sy < 0 || sy >= h as i64 {
                continue;
            }
            for wx in -radius..=radius {
                let sx = x as i64 + wx;
                if sx < 0 || sx >= w as i64 {
                    continue;
                }
                let (ux, uy) = (sx as usize, sy as usize);
                let (rx, ry) = (wx as f64, wy as f64);
                let tx = sx as f64 + p[0] + p[2] * rx + p[3] * ry;
                let ty = sy as f64 + p[1] + p[4] * rx + p[5] * ry;
                let diff = *a.get(ux, uy) as f64 - b.sample_bilinear(tx, ty) as f64;
                let ix = *gx.get(ux, uy) as f64;
                let iy = *gy.get(ux, uy) as f64;
                let jac = Vector6::new(ix, iy, ix * rx, ix * ry, iy * rx, iy * ry);
                jtj += jac * jac.transpose();
                jtr += jac * diff;
            }
        }
        for i in 0..6 {
            jtj[(i, i)] += 1e-9;
        }
        let Some(step) = jtj.cholesky().map(|c| c.solve(&jtr)) else {
            break;
        };
        p += step;
        if step.norm_squared() < LK_EPSILON * LK_EPSILON {
            break;
        }
    }
    if p[0].is_finite() && p[1].is_finite() {
        (p[0], p[1])
    } else {
        (init_vx, init_vy)
    }
}

/// Dense flow from `frame_a` to `frame_b`. `levels` is the pyramid depth,
/// `window` the full LK window width in pixels.
pub fn estimate_flow(
    frame_a: &RgbGrid,
    frame_b: &RgbGrid,
    levels: usize,
    window: usize,
) -> FlowField {
    assert!(
        frame_a.same_dims(frame_b),
        "flow inputs must share dimensions"
    );
    let gray_a = to_gray(frame_a);
    let gray_b = to_gray(frame_b);
    let pyr_a = build_pyramid(&gray_a, levels);
    let pyr_b = build_pyramid(&gray_b, levels);
    let radius = (window / 2).max(1) as i64;

    let mut dx = ScalarGrid::new_filled(pyr_a.last().unwrap().width(), pyr_a.last().unwrap().height(), 0.0);
    let mut dy = dx.clone();
    let mut confidence = dx.clone();

    for level in (0..pyr_a.len()).rev() {
        let a = &pyr_a[level];
        let b = &pyr_b[level];
        let (gx, gy) = gradients(a);
        let (gbx, gby) = gradients(b);
        let (w, h) = (a.width(), a.height());

        // Seed from the coarser level, scaled up.
        let (seed_dx, seed_dy) = if level == pyr_a.len() - 1 {
            (
                ScalarGrid::new_filled(w, h, 0.0),
                ScalarGrid::new_filled(w, h, 0.0),
            )
        } else {
            let sx = dx.width() as f64 / w as f64;
            let sy = dx.height() as f64 / h as f64;
            (
                ScalarGrid::from_fn(w, h, |x, y| {
                    2.0 * dx.sample_bilinear(x as f64 * sx, y as f64 * sy)
                }),
                ScalarGrid::from_fn(w, h, |x, y| {
                    2.0 * dy.sample_bilinear(x as f64 * sx, y as f64 * sy)
                }),
            )
        };

        let rows: Vec<(Vec<f32>, Vec<f32>, Vec<f32>)> = (0..h)
            .into_par_iter()
            .map(|y| {
                let mut row_dx = vec![0.0f32; w];
                let mut row_dy = vec![0.0f32; w];
                let mut row_conf = vec![0.0f32; w];
                for x in 0..w {
                    // Windowed structure tensor of frame a.
                    let mut g11 = 0.0f64;
                    let mut g12 = 0.0f64;
                    let mut g22 = 0.0f64;
                    let mut taps = 0usize;
                    for wy in -radius..=radius {
                        let sy = y as i64 + wy;
                        if sy < 0 || sy >= h as i64 {
                            continue;
                        }
                        for wx in -radius..=radius {
                            let sx = x as i64 + wx;
                            if sx < 0 || sx >= w as i64 {
                                continue;
                            }
                            let ix = *gx.get(sx as usize, sy as usize) as f64;
                            let iy = *gy.get(sx as usize, sy as usize) as f64;
                            g11 += ix * ix;
                            g12 += ix * iy;
                            g22 += iy * iy;
                            taps += 1;
                        }
                    }
                    let trace = g11 + g22;
                    let det_part = ((g11 - g22) * (g11 - g22) + 4.0 * g12 * g12).sqrt();
                    let lambda_min = 0.5 * (trace - det_part).max(0.0);
                    let normalized = lambda_min / taps.max(1) as f64;
                    let conf = normalized / (normalized + CONFIDENCE_KNEE);
                    row_conf[x] = conf as f32;

                    let mut vx = *seed_dx.get(x, y) as f64;
                    let mut vy = *seed_dy.get(x, y) as f64;
                    if lambda_min <= 0.0 {
                        row_dx[x] = vx as f32;
                        row_dy[x] = vy as f32;
                        continue;
                    }
                    // Symmetric-gradient iterations: averaging the template
                    // gradient with the warped target gradient cancels the
                    // first-order bias under local expansion or rotation.
                    for _ in 0..LK_ITERATIONS {
                        let mut s11 = 0.0f64;
                        let mut s12 = 0.0f64;
                        let mut s22 = 0.0f64;
                        let mut b1 = 0.0f64;
                        let mut b2 = 0.0f64;
                        for wy in -radius..=radius {
                            let sy = y as i64 + wy;
                            if sy < 0 || sy >= h as i64 {
                                continue;
                            }
                            for wx in -radius..=radius {
                                let sx = x as i64 + wx;
                                if sx < 0 || sx >= w as i64 {
                                    continue;
                                }
                                let (ux, uy) = (sx as usize, sy as usize);
                                let (tx, ty) = (sx as f64 + vx, sy as f64 + vy);
                                let av = *a.get(ux, uy) as f64;
                                let bv = b.sample_bilinear(tx, ty) as f64;
                                let diff = av - bv;
                                let ix = 0.5
                                    * (*gx.get(ux, uy) as f64
                                        + gbx.sample_bilinear(tx, ty) as f64);
                                let iy = 0.5
                                    * (*gy.get(ux, uy) as f64
                                        + gby.sample_bilinear(tx, ty) as f64);
                                s11 += ix * ix;
                                s12 += ix * iy;
                                s22 += iy * iy;
                                b1 += ix * diff;
                                b2 += iy * diff;
                            }
                        }
                        let det = s11 * s22 - s12 * s12;
                        if det.abs() < 1e-14 {
                            break;
                        }
                        let step_x = (s22 * b1 - s12 * b2) / det;
                        let step_y = (s11 * b2 - s12 * b1) / det;
                        vx += step_x;
                        vy += step_y;
                        if step_x * step_x + step_y * step_y < LK_EPSILON * LK_EPSILON {
                            break;
                        }
                    }
                    // Finest level: affine refinement. Translation-only LK
                    // reports a window average when the true flow varies
                    // across the window (forward motion over a ground
                    // plane); the affine fit's center value is unbiased for
                    // linearly varying flow.
                    if level == 0 {
                        (vx, vy) = affine_refine(a, b, &gx, &gy, x, y, radius, vx, vy);
                    }
                    row_dx[x] = if vx.is_finite() { vx as f32 } else { 0.0 };
                    row_dy[x] = if vy.is_finite() { vy as f32 } else { 0.0 };
                }
                (row_dx, row_dy, row_conf)
            })
            .collect();

        dx = ScalarGrid::new_filled(w, h, 0.0);
        dy = ScalarGrid::new_filled(w, h, 0.0);
        confidence = ScalarGrid::new_filled(w, h, 0.0);
        for (y, (rdx, rdy, rconf)) in rows.into_iter().enumerate() {
            for x in 0..w {
                dx.set(x, y, rdx[x]);
                dy.set(x, y, rdy[x]);
                confidence.set(x, y, rconf[x]);
            }
        }
    }

    FlowField {
        dx,
        dy,
        confidence,
        frame_a: 0,
        frame_b: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Smooth periodic test texture sampled from a continuous function so
    /// shifted versions are exact resamplings of the same signal.
    pub(crate) fn procedural_texture(w: usize, h: usize, shift_x: f64, shift_y: f64) -> RgbGrid {
        RgbGrid::from_fn(w, h, |x, y| {
            let u = (x as f64 - shift_x) * 0.35;
            let v = (y as f64 - shift_y) * 0.35;
            let val = 0.5
                + 0.2 * (u).sin() * (v * 0.7).cos()
                + 0.15 * (0.4 * u + 0.6 * v).sin()
                + 0.1 * (0.9 * u - 0.3 * v).cos();
            let g = val.clamp(0.0, 1.0) as f32;
            [g, g, g]
        })
    }

    fn mean_interior_flow(flow: &FlowField, margin: usize) -> (f64, f64) {
        let mut sx = 0.0;
        let mut sy = 0.0;
        let mut n = 0usize;
        for y in margin..flow.height() - margin {
            for x in margin..flow.width() - margin {
                sx += *flow.dx.get(x, y) as f64;
                sy += *flow.dy.get(x, y) as f64;
                n += 1;
            }
        }
        (sx / n as f64, sy / n as f64)
    }

    #[test]
    fn identical_frames_give_zero_flow_with_confidence() {
        let img = procedural_texture(48, 40, 0.0, 0.0);
        let flow = estimate_flow(&img, &img, 3, 15);
        let (mx, my) = mean_interior_flow(&flow, 10);
        assert!(mx.abs() < 1e-3 && my.abs() < 1e-3, "flow ({mx},{my})");
        let center_conf = *flow.confidence.get(24, 20);
        assert!(center_conf > 0.0, "textured pixel confidence is zero");
    }

    #[test]
    fn integer_translation_recovered() {
        let a = procedural_texture(64, 48, 0.0, 0.0);
        let b = procedural_texture(64, 48, 3.0, 0.0);
        let flow = estimate_flow(&a, &b, 3, 15);
        let (mx, my) = mean_interior_flow(&flow, 12);
        assert!(
            (mx - 3.0).abs() < 0.25 && my.abs() < 0.25,
            "recovered ({mx},{my}), want (3,0)"
        );
    }

    #[test]
    fn subpixel_translation_recovered() {
        let a = procedural_texture(64, 48, 0.0, 0.0);
        let b = procedural_texture(64, 48, 1.5, -0.5);
        let flow = estimate_flow(&a, &b, 3, 15);
        let (mx, my) = mean_interior_flow(&flow, 12);
        assert!(
            (mx - 1.5).abs() < 0.25 && (my + 0.5).abs() < 0.25,
            "recovered ({mx},{my}), want (1.5,-0.5)"
        );
    }

    #[test]
    fn horizontal_flip_negates_x_flow() {
        let a = procedural_texture(64, 48, 0.0, 0.0);
        let b = procedural_texture(64, 48, 2.0, 1.0);
        let flip = |img: &RgbGrid| {
            RgbGrid::from_fn(img.width(), img.height(), |x, y| {
                *img.get(img.width() - 1 - x, y)
            })
        };
        let flow = estimate_flow(&a, &b, 3, 15);
        let flow_flipped = estimate_flow(&flip(&a), &flip(&b), 3, 15);
        let margin = 12;
        for y in margin..48 - margin {
            for x in margin..64 - margin {
                let fx = *flow.dx.get(x, y);
                let gx = *flow_flipped.dx.get(64 - 1 - x, y);
                assert!(
                    (fx + gx).abs() < 0.05,
                    "flip equivariance broken at ({x},{y}): {fx} vs {gx}"
                );
            }
        }
    }
}
