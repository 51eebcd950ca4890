//! Raster file IO: 8/16-bit PNG, single-channel float PFM, EXR and Radiance
//! HDR for linear-radiance grids. All in-memory images are linear light;
//! display-encoded formats pass through the configured gamma at the
//! boundary.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageReader, Rgb};

use crate::grid::{ClassGrid, RgbGrid, ScalarGrid};
use crate::scene::SceneIoError;

/// Decode an 8-bit (or 16-bit, scaled) image and linearize with `ldr^gamma`.
pub fn load_image_linear(path: &Path, gamma: f64) -> Result<RgbGrid, SceneIoError> {
    let img = open_image(path)?.into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = Vec::with_capacity(w * h);
    for p in img.pixels() {
        data.push([
            srgb_like_to_linear(p.0[0], gamma),
            srgb_like_to_linear(p.0[1], gamma),
            srgb_like_to_linear(p.0[2], gamma),
        ]);
    }
    Ok(RgbGrid::from_vec(w, h, data))
}

/// Encode a linear image to 8-bit PNG with `value^(1/gamma)` display encoding.
pub fn save_image_encoded(path: &Path, image: &RgbGrid, gamma: f64) -> Result<(), SceneIoError> {
    let mut out = ImageBuffer::<Rgb<u8>, Vec<u8>>::new(image.width() as u32, image.height() as u32);
    for (x, y, p) in image.iter_pixels() {
        out.put_pixel(
            x as u32,
            y as u32,
            Rgb([
                linear_to_srgb_like(p[0], gamma),
                linear_to_srgb_like(p[1], gamma),
                linear_to_srgb_like(p[2], gamma),
            ]),
        );
    }
    out.save(path)
        .map_err(|e| SceneIoError::Encode(path.display().to_string(), e.to_string()))
}

#[inline]
fn srgb_like_to_linear(v: u8, gamma: f64) -> f32 {
    ((v as f64 / 255.0).powf(gamma)) as f32
}

#[inline]
fn linear_to_srgb_like(v: f32, gamma: f64) -> u8 {
    let display = (v.max(0.0) as f64).powf(1.0 / gamma).clamp(0.0, 1.0);
    (display * 255.0).round() as u8
}

/// Class-id mask from an 8- or 16-bit single-channel PNG.
pub fn load_class_mask(path: &Path) -> Result<ClassGrid, SceneIoError> {
    let img = open_image(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<u16> = match img {
        DynamicImage::ImageLuma16(buf) => buf.pixels().map(|p| p.0[0]).collect(),
        other => other.into_luma8().pixels().map(|p| p.0[0] as u16).collect(),
    };
    Ok(ClassGrid::from_vec(w, h, data))
}

pub fn save_class_mask(path: &Path, mask: &ClassGrid) -> Result<(), SceneIoError> {
    let max = mask.data().iter().copied().max().unwrap_or(0);
    if max > u8::MAX as u16 {
        let buf = ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(
            mask.width() as u32,
            mask.height() as u32,
            mask.data().to_vec(),
        )
        .expect("mask buffer size");
        buf.save(path)
            .map_err(|e| SceneIoError::Encode(path.display().to_string(), e.to_string()))
    } else {
        let buf = ImageBuffer::<image::Luma<u8>, Vec<u8>>::from_raw(
            mask.width() as u32,
            mask.height() as u32,
            mask.data().iter().map(|&v| v as u8).collect(),
        )
        .expect("mask buffer size");
        buf.save(path)
            .map_err(|e| SceneIoError::Encode(path.display().to_string(), e.to_string()))
    }
}

/// Intensity mask in [0,1] saved as 8-bit PNG.
pub fn save_intensity_mask(path: &Path, mask: &ScalarGrid) -> Result<(), SceneIoError> {
    let buf = ImageBuffer::<image::Luma<u8>, Vec<u8>>::from_raw(
        mask.width() as u32,
        mask.height() as u32,
        mask.data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect(),
    )
    .expect("mask buffer size");
    buf.save(path)
        .map_err(|e| SceneIoError::Encode(path.display().to_string(), e.to_string()))
}

pub fn load_intensity_mask(path: &Path, ) -> Result<ScalarGrid, SceneIoError> {
    let img = open_image(path)?.into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(ScalarGrid::from_vec(
        w,
        h,
        img.pixels().map(|p| p.0[0] as f32 / 255.0).collect(),
    ))
}

/// Float raster dispatch by extension: `.pfm` or `.exr`.
pub fn load_depth(path: &Path) -> Result<ScalarGrid, SceneIoError> {
    match extension(path) {
        Some("pfm") => load_pfm_gray(path),
        Some("exr") => {
            let rgb = load_radiance(path)?;
            Ok(rgb.map(|p| p[0]))
        }
        _ => Err(SceneIoError::UnsupportedFormat(path.display().to_string())),
    }
}

pub fn save_depth(path: &Path, depth: &ScalarGrid) -> Result<(), SceneIoError> {
    match extension(path) {
        Some("pfm") => save_pfm_gray(path, depth),
        Some("exr") => save_radiance(path, &depth.map(|&v| [v, v, v])),
        _ => Err(SceneIoError::UnsupportedFormat(path.display().to_string())),
    }
}

/// Linear-radiance RGB raster: `.exr` or `.hdr` (RGBE) read.
pub fn load_radiance(path: &Path) -> Result<RgbGrid, SceneIoError> {
    let img = open_image(path)?.into_rgb32f();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(RgbGrid::from_vec(
        w,
        h,
        img.pixels().map(|p| p.0).collect(),
    ))
}

/// Radiance writes are EXR only: RGBE's shared exponent cannot round-trip
/// float values.
pub fn save_radiance(path: &Path, image: &RgbGrid) -> Result<(), SceneIoError> {
    if extension(path) != Some("exr") {
        return Err(SceneIoError::UnsupportedFormat(path.display().to_string()));
    }
    let buf = image::Rgb32FImage::from_raw(
        image.width() as u32,
        image.height() as u32,
        image.data().iter().flat_map(|p| p.iter().copied()).collect(),
    )
    .expect("radiance buffer size");
    DynamicImage::ImageRgb32F(buf)
        .save(path)
        .map_err(|e| SceneIoError::Encode(path.display().to_string(), e.to_string()))
}

fn open_image(path: &Path) -> Result<DynamicImage, SceneIoError> {
    if !path.exists() {
        return Err(SceneIoError::MissingAsset(path.display().to_string()));
    }
    ImageReader::open(path)
        .map_err(|e| SceneIoError::Io(path.display().to_string(), e.to_string()))?
        .decode()
        .map_err(|e| SceneIoError::Decode(path.display().to_string(), e.to_string()))
}

fn extension(path: &Path) -> Option<&str> {
    path.extension().and_then(|e| e.to_str())
}

// --- PFM ------------------------------------------------------------------
//
// Grayscale "Pf" maps, negative scale = little endian, rows stored
// bottom-up per the format convention.

pub fn load_pfm_gray(path: &Path) -> Result<ScalarGrid, SceneIoError> {
    if !path.exists() {
        return Err(SceneIoError::MissingAsset(path.display().to_string()));
    }
    let err_io = |e: std::io::Error| SceneIoError::Io(path.display().to_string(), e.to_string());
    let err_parse = |msg: &str| SceneIoError::Decode(path.display().to_string(), msg.to_string());
    let mut reader = BufReader::new(File::open(path).map_err(err_io)?);

    let magic = read_pfm_token(&mut reader).map_err(err_io)?;
    if magic != "Pf" {
        return Err(err_parse("expected grayscale PFM magic 'Pf'"));
    }
    let width: usize = read_pfm_token(&mut reader)
        .map_err(err_io)?
        .parse()
        .map_err(|_| err_parse("bad width"))?;
    let height: usize = read_pfm_token(&mut reader)
        .map_err(err_io)?
        .parse()
        .map_err(|_| err_parse("bad height"))?;
    let scale: f32 = read_pfm_token(&mut reader)
        .map_err(err_io)?
        .parse()
        .map_err(|_| err_parse("bad scale"))?;
    let little_endian = scale < 0.0;

    let mut raw = vec![0u8; width * height * 4];
    reader.read_exact(&mut raw).map_err(err_io)?;
    let mut values = vec![0.0f32; width * height];
    for (i, chunk) in raw.chunks_exact(4).enumerate() {
        let bytes = [chunk[0], chunk[1], chunk[2], chunk[3]];
        values[i] = if little_endian {
            f32::from_le_bytes(bytes)
        } else {
            f32::from_be_bytes(bytes)
        };
    }
    // Bottom row first on disk; flip into top-down grid order.
    let mut data = vec![0.0f32; width * height];
    for y in 0..height {
        let src = (height - 1 - y) * width;
        data[y * width..(y + 1) * width].copy_from_slice(&values[src..src + width]);
    }
    Ok(ScalarGrid::from_vec(width, height, data))
}

pub fn save_pfm_gray(path: &Path, grid: &ScalarGrid) -> Result<(), SceneIoError> {
    let err_io = |e: std::io::Error| SceneIoError::Io(path.display().to_string(), e.to_string());
    let mut writer = BufWriter::new(File::create(path).map_err(err_io)?);
    write!(writer, "Pf\n{} {}\n-1.0\n", grid.width(), grid.height()).map_err(err_io)?;
    for y in (0..grid.height()).rev() {
        for x in 0..grid.width() {
            writer
                .write_all(&grid.get(x, y).to_le_bytes())
                .map_err(err_io)?;
        }
    }
    Ok(())
}

fn read_pfm_token(reader: &mut impl BufRead) -> std::io::Result<String> {
    let mut token = String::new();
    loop {
        let mut byte = [0u8; 1];
        reader.read_exact(&mut byte)?;
        let c = byte[0] as char;
        if c.is_whitespace() {
            if !token.is_empty() {
                return Ok(token);
            }
        } else {
            token.push(c);
        }
    }
}

// --- Flow files -------------------------------------------------------------
//
// Per-pair flow ingested as color PFM with channels (dx, dy, confidence).

pub fn load_pfm_rgb(path: &Path) -> Result<RgbGrid, SceneIoError> {
    if !path.exists() {
        return Err(SceneIoError::MissingAsset(path.display().to_string()));
    }
    let err_io = |e: std::io::Error| SceneIoError::Io(path.display().to_string(), e.to_string());
    let err_parse = |msg: &str| SceneIoError::Decode(path.display().to_string(), msg.to_string());
    let mut reader = BufReader::new(File::open(path).map_err(err_io)?);
    let magic = read_pfm_token(&mut reader).map_err(err_io)?;
    if magic != "PF" {
        return Err(err_parse("expected color PFM magic 'PF'"));
    }
    let width: usize = read_pfm_token(&mut reader)
        .map_err(err_io)?
        .parse()
        .map_err(|_| err_parse("bad width"))?;
    let height: usize = read_pfm_token(&mut reader)
        .map_err(err_io)?
        .parse()
        .map_err(|_| err_parse("bad height"))?;
    let scale: f32 = read_pfm_token(&mut reader)
        .map_err(err_io)?
        .parse()
        .map_err(|_| err_parse("bad scale"))?;
    let little_endian = scale < 0.0;

    let mut raw = vec![0u8; width * height * 12];
    reader.read_exact(&mut raw).map_err(err_io)?;
    let mut values = Vec::with_capacity(width * height);
    for chunk in raw.chunks_exact(12) {
        let mut px = [0.0f32; 3];
        for c in 0..3 {
            let bytes = [
                chunk[c * 4],
                chunk[c * 4 + 1],
                chunk[c * 4 + 2],
                chunk[c * 4 + 3],
            ];
            px[c] = if little_endian {
                f32::from_le_bytes(bytes)
            } else {
                f32::from_be_bytes(bytes)
            };
        }
        values.push(px);
    }
    let mut data = vec![[0.0f32; 3]; width * height];
    for y in 0..height {
        let src = (height - 1 - y) * width;
        data[y * width..(y + 1) * width].copy_from_slice(&values[src..src + width]);
    }
    Ok(RgbGrid::from_vec(width, height, data))
}

pub fn save_pfm_rgb(path: &Path, grid: &RgbGrid) -> Result<(), SceneIoError> {
    let err_io = |e: std::io::Error| SceneIoError::Io(path.display().to_string(), e.to_string());
    let mut writer = BufWriter::new(File::create(path).map_err(err_io)?);
    write!(writer, "PF\n{} {}\n-1.0\n", grid.width(), grid.height()).map_err(err_io)?;
    for y in (0..grid.height()).rev() {
        for x in 0..grid.width() {
            for c in 0..3 {
                writer
                    .write_all(&grid.get(x, y)[c].to_le_bytes())
                    .map_err(err_io)?;
            }
        }
    }
    Ok(())
}
