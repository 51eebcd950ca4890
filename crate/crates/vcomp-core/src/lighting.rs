//! HDR environment construction: the parametric sun radiance model, a
//! deterministic luminance-peak sun detector, power-law inverse tone
//! mapping, side-view panorama stitching, and additive sun/sky blending.
//!
//! Equirectangular convention used everywhere: azimuth runs from world +x
//! toward +y along the panorama width (0..2pi), polar angle from the zenith
//! (+z) down rows (0..pi). Width is twice the height.

use nalgebra::{Matrix3, Vector2, Vector3};
use thiserror::Error;

use crate::geometry::CameraPose;
use crate::grid::{RgbGrid, ScalarGrid};

#[derive(Debug, Error)]
pub enum LightingError {
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("side-view manifest error: {0}")]
    ViewManifest(String),
    #[error("LDR input outside [0,1] at pixel ({0},{1})")]
    OutOfRangeInput(usize, usize),
    #[error("invalid sun model parameters: {0}")]
    InvalidParams(String),
    #[error("panorama must satisfy width = 2 * height, got {0}x{1}")]
    BadAspect(usize, usize),
    #[error("radiance must be finite and nonnegative")]
    InvalidRadiance,
}

/// Equirectangular grid of linear RGB radiance. Invariants: all values
/// finite and >= 0, width = 2 * height.
#[derive(Debug, Clone, PartialEq)]
pub struct HdrPanorama {
    pub radiance: RgbGrid,
}

impl HdrPanorama {
    pub fn new(radiance: RgbGrid) -> Result<Self, LightingError> {
        if radiance.width() != 2 * radiance.height() {
            return Err(LightingError::BadAspect(radiance.width(), radiance.height()));
        }
        for (_, _, p) in radiance.iter_pixels() {
            if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(LightingError::InvalidRadiance);
            }
        }
        Ok(Self { radiance })
    }

    pub fn constant(height: usize, value: [f32; 3]) -> Self {
        Self {
            radiance: RgbGrid::new_filled(2 * height, height, value),
        }
    }

    pub fn width(&self) -> usize {
        self.radiance.width()
    }

    pub fn height(&self) -> usize {
        self.radiance.height()
    }

    /// Bilinear radiance lookup for a world direction, wrapping azimuth.
    pub fn sample_direction(&self, dir: &Vector3<f64>) -> [f32; 3] {
        let (w, h) = (self.width(), self.height());
        let px = direction_to_pixel(dir, w, h);
        // Wrap the azimuth seam by sampling modulo the width.
        let x = px.x.rem_euclid(w as f64);
        let y = px.y.clamp(0.0, (h - 1) as f64);
        let x0 = x.floor();
        let fx = (x - x0) as f32;
        let x0i = (x0 as usize) % w;
        let x1i = (x0 as usize + 1) % w;
        let y0 = y.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = (y - y0 as f64) as f32;
        let mut out = [0.0f32; 3];
        for c in 0..3 {
            let v00 = self.radiance.get(x0i, y0)[c];
            let v10 = self.radiance.get(x1i, y0)[c];
            let v01 = self.radiance.get(x0i, y1)[c];
            let v11 = self.radiance.get(x1i, y1)[c];
            out[c] = (v00 * (1.0 - fx) + v10 * fx) * (1.0 - fy)
                + (v01 * (1.0 - fx) + v11 * fx) * fy;
        }
        out
    }
}

/// Continuous panorama pixel for a unit world direction. Integer
/// coordinates are texel centers.
pub fn direction_to_pixel(dir: &Vector3<f64>, width: usize, height: usize) -> Vector2<f64> {
    let azimuth = dir.y.atan2(dir.x).rem_euclid(std::f64::consts::TAU);
    let polar = dir.z.clamp(-1.0, 1.0).acos();
    Vector2::new(
        azimuth / std::f64::consts::TAU * width as f64 - 0.5,
        polar / std::f64::consts::PI * height as f64 - 0.5,
    )
}

/// Unit world direction at a texel center.
pub fn pixel_to_direction(x: usize, y: usize, width: usize, height: usize) -> Vector3<f64> {
    let azimuth = (x as f64 + 0.5) / width as f64 * std::f64::consts::TAU;
    let polar = (y as f64 + 0.5) / height as f64 * std::f64::consts::PI;
    Vector3::new(
        polar.sin() * azimuth.cos(),
        polar.sin() * azimuth.sin(),
        polar.cos(),
    )
}

/// Sky transmittance and sharpness of the parametric sun model. Both
/// strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SunModelParams {
    pub transmittance: f64,
    pub sharpness: f64,
}

impl SunModelParams {
    pub fn new(transmittance: f64, sharpness: f64) -> Result<Self, LightingError> {
        if !(transmittance > 0.0 && transmittance.is_finite()) {
            return Err(LightingError::InvalidParams(format!(
                "transmittance must be positive and finite, got {transmittance}"
            )));
        }
        if !(sharpness > 0.0 && sharpness.is_finite()) {
            return Err(LightingError::InvalidParams(format!(
                "sharpness must be positive and finite, got {sharpness}"
            )));
        }
        Ok(Self {
            transmittance,
            sharpness,
        })
    }

    /// Peak radiance, attained where the probability is exactly 1.
    pub fn peak(&self) -> f64 {
        self.transmittance / (self.sharpness * std::f64::consts::PI.sqrt())
    }

    /// Radiance for sun probability `x`:
    /// `tau / (beta * sqrt(pi)) * exp(-(1 - x)^2 / beta)`.
    pub fn radiance(&self, x: f64) -> f64 {
        self.peak() * (-((1.0 - x) * (1.0 - x)) / self.sharpness).exp()
    }
}

/// Per-pixel probability (in [0,1]) that the pixel contains the sun.
#[derive(Debug, Clone, PartialEq)]
pub struct SunProbabilityMap {
    pub grid: ScalarGrid,
}

impl SunProbabilityMap {
    pub fn new(grid: ScalarGrid) -> Result<Self, LightingError> {
        for (x, y, v) in grid.iter_pixels() {
            if !(*v >= 0.0 && *v <= 1.0) {
                return Err(LightingError::OutOfRangeInput(x, y));
            }
        }
        Ok(Self { grid })
    }

    /// Direction of the highest-probability pixel; raster order breaks ties.
    pub fn peak_direction(&self) -> Vector3<f64> {
        let mut best = (f32::NEG_INFINITY, 0usize, 0usize);
        for (x, y, v) in self.grid.iter_pixels() {
            if *v > best.0 {
                best = (*v, x, y);
            }
        }
        pixel_to_direction(best.1, best.2, self.grid.width(), self.grid.height())
    }
}

/// Evaluate the sun model over a probability map, replicated to RGB.
pub fn sun_radiance_map(
    prob: &SunProbabilityMap,
    params: &SunModelParams,
) -> Result<HdrPanorama, LightingError> {
    let radiance = prob.grid.map(|&x| {
        let v = params.radiance(x as f64) as f32;
        [v, v, v]
    });
    HdrPanorama::new(radiance)
}

/// Deterministic stand-in for a learned sun locator: max-normalized
/// luminance raised to a peaking exponent. All-zero input stays zero.
pub fn detect_sun_fallback(ldr_pano: &RgbGrid, exponent: f64) -> SunProbabilityMap {
    let lum = ldr_pano.luminance();
    let max = lum.data().iter().cloned().fold(0.0f32, f32::max);
    let grid = if max <= 0.0 {
        ScalarGrid::new_filled(lum.width(), lum.height(), 0.0)
    } else {
        lum.map(|&v| ((v / max) as f64).powf(exponent).clamp(0.0, 1.0) as f32)
    };
    SunProbabilityMap { grid }
}

/// Power-law inverse tone map: `radiance = scale * ldr^gamma` per channel.
pub fn inverse_tone_map(
    ldr: &RgbGrid,
    gamma: f64,
    scale: f64,
) -> Result<HdrPanorama, LightingError> {
    for (x, y, p) in ldr.iter_pixels() {
        if p.iter().any(|v| !(*v >= 0.0 && *v <= 1.0)) {
            return Err(LightingError::OutOfRangeInput(x, y));
        }
    }
    let radiance = ldr.map(|p| {
        [
            (scale * (p[0] as f64).powf(gamma)) as f32,
            (scale * (p[1] as f64).powf(gamma)) as f32,
            (scale * (p[2] as f64).powf(gamma)) as f32,
        ]
    });
    HdrPanorama::new(radiance)
}

/// One calibrated side view for panorama stitching.
pub struct StitchView<'a> {
    pub image: &'a RgbGrid,
    pub pose: &'a CameraPose,
    pub intrinsics: Matrix3<f64>,
}

/// Stitch calibrated views into an equirectangular panorama. Every covered
/// panorama texel is a normalized blend of the views containing its
/// direction, weighted by angular distance from each view's frustum edge.
/// Returns the panorama and a coverage mask (1 where any view contributed).
pub fn stitch_panorama(
    views: &[StitchView<'_>],
    height: usize,
) -> Result<(HdrPanorama, ScalarGrid), LightingError> {
    assert!(!views.is_empty(), "need at least one view");
    let width = 2 * height;
    let mut radiance = RgbGrid::new_filled(width, height, [0.0, 0.0, 0.0]);
    let mut coverage = ScalarGrid::new_filled(width, height, 0.0);

    for y in 0..height {
        for x in 0..width {
            let dir = pixel_to_direction(x, y, width, height);
            let mut total_weight = 0.0f64;
            let mut accum = [0.0f64; 3];
            for view in views {
                let Some((px, weight)) = project_into_view(view, &dir) else {
                    continue;
                };
                let sample = view.image.sample_bilinear(px.x, px.y);
                for c in 0..3 {
                    accum[c] += sample[c] as f64 * weight;
                }
                total_weight += weight;
            }
            if total_weight > 0.0 {
                radiance.set(
                    x,
                    y,
                    [
                        (accum[0] / total_weight) as f32,
                        (accum[1] / total_weight) as f32,
                        (accum[2] / total_weight) as f32,
                    ],
                );
                coverage.set(x, y, 1.0);
            }
        }
    }
    Ok((HdrPanorama::new(radiance)?, coverage))
}

/// Project a world direction into a view. Returns the continuous pixel and
/// the blend weight (minimum angular distance from the frustum edge planes,
/// in radians), or None when the direction is outside the frustum.
fn project_into_view(view: &StitchView<'_>, dir: &Vector3<f64>) -> Option<(Vector2<f64>, f64)> {
    let d_cam = view.pose.transform_direction(dir);
    if d_cam.z <= 1e-9 {
        return None;
    }
    let img = view.intrinsics * d_cam;
    let px = Vector2::new(img.x / img.z, img.y / img.z);
    let w = view.image.width() as f64;
    let h = view.image.height() as f64;
    if px.x < 0.0 || px.y < 0.0 || px.x > w - 1.0 || px.y > h - 1.0 {
        return None;
    }
    // Angular margin against the four frustum edge planes.
    let k_inv = view.intrinsics.try_inverse()?;
    let corner = |u: f64, v: f64| (k_inv * Vector3::new(u, v, 1.0)).normalize();
    let tl = corner(0.0, 0.0);
    let tr = corner(w - 1.0, 0.0);
    let bl = corner(0.0, h - 1.0);
    let br = corner(w - 1.0, h - 1.0);
    let central = (tl + tr + bl + br).normalize();
    // Edge planes through the camera center, normals oriented inward.
    let planes = [
        tr.cross(&tl), // top
        bl.cross(&br), // bottom
        tl.cross(&bl), // left
        br.cross(&tr), // right
    ];
    let dn = d_cam.normalize();
    let mut margin = f64::INFINITY;
    for n in planes {
        let mut n = n.normalize();
        if n.dot(&central) < 0.0 {
            n = -n;
        }
        let angle = n.dot(&dn).clamp(-1.0, 1.0).asin();
        margin = margin.min(angle);
    }
    if margin <= 0.0 {
        return None;
    }
    Some((px, margin))
}

/// JSON manifest describing calibrated side views for stitching.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ViewsManifest {
    pub pose_convention: crate::scene::manifest::PoseConvention,
    /// Output panorama height (width is twice this).
    pub height: usize,
    #[serde(default = "ViewsManifest::default_gamma")]
    pub gamma: f64,
    pub views: Vec<ViewEntry>,
}

impl ViewsManifest {
    fn default_gamma() -> f64 {
        2.2
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ViewEntry {
    pub image: String,
    /// Row-major 3x3 intrinsics.
    pub intrinsics: [f64; 9],
    /// Row-major 3x3 rotation.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

/// A side view loaded into memory, radiance-linearized.
pub struct LoadedView {
    pub image: RgbGrid,
    pub pose: CameraPose,
    pub intrinsics: Matrix3<f64>,
}

/// Load a views manifest and its images; `scale` multiplies the
/// inverse-tone-mapped radiance of every view.
pub fn load_side_views(
    path: &std::path::Path,
    scale: f64,
) -> Result<(Vec<LoadedView>, usize), LightingError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| LightingError::ViewManifest(format!("{}: {e}", path.display())))?;
    let manifest: ViewsManifest = serde_json::from_str(&text)
        .map_err(|e| LightingError::ViewManifest(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(std::path::Path::new("."));
    let mut loaded = Vec::with_capacity(manifest.views.len());
    for entry in &manifest.views {
        let image = crate::scene::raster::load_image_linear(&base.join(&entry.image), manifest.gamma)
            .map_err(|e| LightingError::ViewManifest(e.to_string()))?;
        let image = if scale == 1.0 {
            image
        } else {
            image.map(|p| [p[0] * scale as f32, p[1] * scale as f32, p[2] * scale as f32])
        };
        let rotation = Matrix3::from_row_slice(&entry.rotation);
        let translation = nalgebra::Vector3::from_column_slice(&entry.translation);
        let pose = match manifest.pose_convention {
            crate::scene::manifest::PoseConvention::WorldToCamera => {
                CameraPose::new(rotation, translation)
            }
            crate::scene::manifest::PoseConvention::CameraToWorld => {
                CameraPose::from_camera_to_world(rotation, translation)
            }
        }
        .map_err(|e| LightingError::ViewManifest(e.to_string()))?;
        loaded.push(LoadedView {
            image,
            pose,
            intrinsics: Matrix3::from_row_slice(&entry.intrinsics),
        });
    }
    Ok((loaded, manifest.height))
}

/// Stitch loaded views; see [`stitch_panorama`].
pub fn stitch_loaded_views(
    views: &[LoadedView],
    height: usize,
) -> Result<(HdrPanorama, ScalarGrid), LightingError> {
    let refs: Vec<StitchView<'_>> = views
        .iter()
        .map(|v| StitchView {
            image: &v.image,
            pose: &v.pose,
            intrinsics: v.intrinsics,
        })
        .collect();
    stitch_panorama(&refs, height)
}

/// Additive blend of sun and sky radiance in linear light.
pub fn blend_hdr(sun: &HdrPanorama, sky: &HdrPanorama) -> Result<HdrPanorama, LightingError> {
    if !sun.radiance.same_dims(&sky.radiance) {
        return Err(LightingError::DimensionMismatch(
            sun.width(),
            sun.height(),
            sky.width(),
            sky.height(),
        ));
    }
    let mut out = sky.radiance.clone();
    for (x, y, p) in sun.radiance.iter_pixels() {
        let q = out.get_mut(x, y);
        for c in 0..3 {
            q[c] = (q[c] + p[c]).max(0.0);
            if !q[c].is_finite() {
                q[c] = f32::MAX;
            }
        }
    }
    HdrPanorama::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sun_peak_identity() {
        // x = 1 collapses the exponent: exactly tau / (beta * sqrt(pi)).
        let params = SunModelParams::new(1.0, 1.0).unwrap();
        assert_relative_eq!(params.radiance(1.0), 0.5641895835477563, epsilon = 1e-12);
        let params = SunModelParams::new(3.5, 0.25).unwrap();
        assert_relative_eq!(params.radiance(1.0), params.peak(), epsilon = 1e-15);
    }

    #[test]
    fn sun_radiance_at_zero_probability() {
        let params = SunModelParams::new(1.0, 1.0).unwrap();
        assert_relative_eq!(params.radiance(0.0), 0.20755374871029736, epsilon = 1e-9);
    }

    #[test]
    fn sun_radiance_monotone_in_probability() {
        let params = SunModelParams::new(2.0, 0.7).unwrap();
        let mut last = -1.0;
        for i in 0..=100 {
            let v = params.radiance(i as f64 / 100.0);
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn nonpositive_params_rejected() {
        assert!(SunModelParams::new(0.0, 1.0).is_err());
        assert!(SunModelParams::new(1.0, -2.0).is_err());
        assert!(SunModelParams::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn detect_sun_single_bright_pixel() {
        let mut pano = RgbGrid::new_filled(16, 8, [0.001, 0.001, 0.001]);
        pano.set(5, 2, [1.0, 1.0, 1.0]);
        let prob = detect_sun_fallback(&pano, 8.0);
        assert_relative_eq!(*prob.grid.get(5, 2), 1.0, epsilon = 1e-6);
        for (x, y, v) in prob.grid.iter_pixels() {
            if (x, y) != (5, 2) {
                assert!(*v < 0.01, "stray probability at ({x},{y})");
            }
        }
    }

    #[test]
    fn detect_sun_uniform_input_is_uniform() {
        let pano = RgbGrid::new_filled(16, 8, [0.3, 0.3, 0.3]);
        let prob = detect_sun_fallback(&pano, 8.0);
        for (_, _, v) in prob.grid.iter_pixels() {
            assert_relative_eq!(*v, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn detect_sun_zero_input_stays_zero() {
        let pano = RgbGrid::new_filled(16, 8, [0.0, 0.0, 0.0]);
        let prob = detect_sun_fallback(&pano, 8.0);
        assert!(prob.grid.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn detect_sun_tie_break_is_raster_order() {
        let mut pano = RgbGrid::new_filled(16, 8, [0.0, 0.0, 0.0]);
        pano.set(3, 1, [1.0, 1.0, 1.0]);
        pano.set(9, 4, [1.0, 1.0, 1.0]);
        let prob = detect_sun_fallback(&pano, 8.0);
        assert_relative_eq!(*prob.grid.get(3, 1), 1.0);
        assert_relative_eq!(*prob.grid.get(9, 4), 1.0);
        let dir = prob.peak_direction();
        let expected = pixel_to_direction(3, 1, 16, 8);
        assert_relative_eq!(dir, expected, epsilon = 1e-12);
    }

    #[test]
    fn inverse_tone_map_fixed_points_and_midpoint() {
        let ldr = RgbGrid::from_vec(2, 1, vec![[0.0, 1.0, 0.5], [0.5, 0.5, 0.5]]);
        let hdr = inverse_tone_map(&ldr, 2.2, 1.0).unwrap();
        let p = hdr.radiance.get(0, 0);
        assert_eq!(p[0], 0.0);
        assert_relative_eq!(p[1] as f64, 1.0, epsilon = 1e-7);
        assert_relative_eq!(p[2] as f64, 0.217_637_640_824_031, epsilon = 1e-7);
    }

    #[test]
    fn inverse_tone_map_rejects_out_of_range() {
        let ldr = RgbGrid::from_vec(1, 1, vec![[1.5, 0.0, 0.0]]);
        assert!(matches!(
            inverse_tone_map(&ldr, 2.2, 1.0),
            Err(LightingError::OutOfRangeInput(0, 0))
        ));
    }

    #[test]
    fn inverse_tone_map_is_monotone() {
        let ldr = RgbGrid::from_fn(64, 32, |x, _| [(x as f32) / 63.0; 3]);
        let hdr = inverse_tone_map(&ldr, 2.2, 4.0).unwrap();
        let mut last = -1.0f32;
        for x in 0..64 {
            let v = hdr.radiance.get(x, 0)[0];
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn blend_is_additive_with_zero_identity() {
        let sky = HdrPanorama::constant(4, [0.3, 0.3, 0.3]);
        let zero = HdrPanorama::constant(4, [0.0, 0.0, 0.0]);
        let blended = blend_hdr(&zero, &sky).unwrap();
        assert_eq!(blended.radiance, sky.radiance);

        let mut sun = RgbGrid::new_filled(8, 4, [0.0, 0.0, 0.0]);
        sun.set(2, 1, [0.5641896, 0.5641896, 0.5641896]);
        let sun = HdrPanorama::new(sun).unwrap();
        let blended = blend_hdr(&sun, &sky).unwrap();
        assert_relative_eq!(
            blended.radiance.get(2, 1)[0] as f64,
            0.8641896,
            epsilon = 1e-6
        );
    }

    #[test]
    fn blend_dimension_mismatch() {
        let a = HdrPanorama::constant(4, [0.0; 3]);
        let b = HdrPanorama::constant(8, [0.0; 3]);
        assert!(matches!(
            blend_hdr(&a, &b),
            Err(LightingError::DimensionMismatch(..))
        ));
    }

    #[test]
    fn direction_pixel_round_trip() {
        let (w, h) = (32, 16);
        for y in 0..h {
            for x in 0..w {
                let d = pixel_to_direction(x, y, w, h);
                let p = direction_to_pixel(&d, w, h);
                assert_relative_eq!(p.x, x as f64, epsilon = 1e-9);
                assert_relative_eq!(p.y, y as f64, epsilon = 1e-9);
            }
        }
    }

    fn look_at_pose(yaw: f64) -> CameraPose {
        // Camera +z looks along azimuth `yaw` in the world x-y plane,
        // camera +y points toward world -z (down), +x completes the frame.
        let fwd = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
        let down = -Vector3::z();
        let right = down.cross(&fwd);
        let r_cw = Matrix3::from_columns(&[right, down, fwd]); // cam->world
        CameraPose::new(r_cw.transpose(), Vector3::zeros()).unwrap()
    }

    #[test]
    fn single_view_optical_axis_matches_principal_point_sample() {
        let k = Matrix3::new(40.0, 0.0, 15.5, 0.0, 40.0, 11.5, 0.0, 0.0, 1.0);
        let image = RgbGrid::from_fn(32, 24, |x, y| [x as f32, y as f32, 1.0]);
        let pose = look_at_pose(0.3);
        let views = [StitchView {
            image: &image,
            pose: &pose,
            intrinsics: k,
        }];
        let (pano, coverage) = stitch_panorama(&views, 64).unwrap();
        // The optical axis direction in world coordinates.
        let axis = pose.forward_axis();
        let px = direction_to_pixel(&axis, pano.width(), pano.height());
        let (xi, yi) = (px.x.round() as usize, px.y.round() as usize);
        assert_eq!(*coverage.get(xi, yi), 1.0);
        let got = pano.sample_direction(&axis);
        let want = image.sample_bilinear(15.5, 11.5);
        for c in 0..3 {
            assert_relative_eq!(got[c], want[c], epsilon = 0.35);
        }
    }

    #[test]
    fn two_views_yawed_quarter_turn_land_half_height_apart() {
        let k = Matrix3::new(30.0, 0.0, 15.5, 0.0, 30.0, 11.5, 0.0, 0.0, 1.0);
        let image = RgbGrid::new_filled(32, 24, [1.0, 1.0, 1.0]);
        let pose_a = look_at_pose(0.0);
        let pose_b = look_at_pose(std::f64::consts::FRAC_PI_2);
        let (w, h) = (128usize, 64usize);
        let col = |pose: &CameraPose| {
            let axis = pose.forward_axis();
            direction_to_pixel(&axis, w, h).x
        };
        let diff = (col(&pose_b) - col(&pose_a)).rem_euclid(w as f64);
        assert_relative_eq!(diff, w as f64 / 4.0, epsilon = 1e-9);
        let (_, coverage) = stitch_panorama(
            &[
                StitchView {
                    image: &image,
                    pose: &pose_a,
                    intrinsics: k,
                },
                StitchView {
                    image: &image,
                    pose: &pose_b,
                    intrinsics: k,
                },
            ],
            h,
        )
        .unwrap();
        assert!(coverage.data().iter().any(|&v| v > 0.0));
    }

    #[test]
    fn stitch_energy_permutation_invariant() {
        let k = Matrix3::new(30.0, 0.0, 15.5, 0.0, 30.0, 11.5, 0.0, 0.0, 1.0);
        let img_a = RgbGrid::from_fn(32, 24, |x, y| [(x + y) as f32 * 0.01, 0.2, 0.3]);
        let img_b = RgbGrid::from_fn(32, 24, |x, y| [0.4, (x * y) as f32 * 0.001, 0.1]);
        let pose_a = look_at_pose(0.0);
        let pose_b = look_at_pose(0.5);
        let order_ab = [
            StitchView {
                image: &img_a,
                pose: &pose_a,
                intrinsics: k,
            },
            StitchView {
                image: &img_b,
                pose: &pose_b,
                intrinsics: k,
            },
        ];
        let order_ba = [
            StitchView {
                image: &img_b,
                pose: &pose_b,
                intrinsics: k,
            },
            StitchView {
                image: &img_a,
                pose: &pose_a,
                intrinsics: k,
            },
        ];
        let (pano_ab, _) = stitch_panorama(&order_ab, 48).unwrap();
        let (pano_ba, _) = stitch_panorama(&order_ba, 48).unwrap();
        let energy = |p: &HdrPanorama| {
            p.radiance
                .data()
                .iter()
                .map(|px| px.iter().map(|&v| v as f64).sum::<f64>())
                .sum::<f64>()
        };
        assert_relative_eq!(energy(&pano_ab), energy(&pano_ba), epsilon = 1e-9);
    }

    #[test]
    fn overlap_weights_are_normalized() {
        // Two nearly aligned views: overlap covers the shared frustum; the
        // blend of two constant images must be that constant exactly.
        let k = Matrix3::new(30.0, 0.0, 15.5, 0.0, 30.0, 11.5, 0.0, 0.0, 1.0);
        let image = RgbGrid::new_filled(32, 24, [0.25, 0.5, 0.75]);
        let pose_a = look_at_pose(0.0);
        let pose_b = look_at_pose(0.2);
        let (pano, coverage) = stitch_panorama(
            &[
                StitchView {
                    image: &image,
                    pose: &pose_a,
                    intrinsics: k,
                },
                StitchView {
                    image: &image,
                    pose: &pose_b,
                    intrinsics: k,
                },
            ],
            48,
        )
        .unwrap();
        for (x, y, &c) in coverage.iter_pixels() {
            if c > 0.0 {
                let p = pano.radiance.get(x, y);
                assert_relative_eq!(p[0], 0.25, epsilon = 1e-6);
                assert_relative_eq!(p[1], 0.5, epsilon = 1e-6);
                assert_relative_eq!(p[2], 0.75, epsilon = 1e-6);
            }
        }
    }
}
