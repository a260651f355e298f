//! On-disk PDM layout for a stem `s`:
//! `s.depth.pfm` (single-channel little-endian float PFM),
//! `s.points.pfm` (three-channel PFM, NaN on invalid pixels),
//! `s.camera.json` and, when labels exist, `s.labels.png`
//! (16-bit grayscale holding `label + 1`, 0 on invalid pixels).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma};
use nalgebra::Point3;

use super::{CmCamera, PdmImage, RenderError, Result};

pub fn depth_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.depth.pfm"))
}

pub fn points_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.points.pfm"))
}

pub fn camera_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.camera.json"))
}

pub fn labels_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.labels.png"))
}

/// Writes all files of `pdm` and returns their paths.
pub fn write_pdm(pdm: &PdmImage, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    let (w, h) = (pdm.width(), pdm.height());
    let mut written = Vec::new();

    let path = depth_path(dir, stem);
    write_pfm(&path, w, h, 1, |i, out| out.push(pdm.depth[i] as f32))?;
    written.push(path);

    let path = points_path(dir, stem);
    write_pfm(&path, w, h, 3, |i, out| {
        out.extend(pdm.points[i].iter().map(|&c| c as f32));
    })?;
    written.push(path);

    let path = camera_path(dir, stem);
    let json = serde_json::to_string_pretty(&pdm.camera).map_err(|e| format_err(&path, e))?;
    fs::write(&path, json)?;
    written.push(path);

    if let Some(labels) = &pdm.labels {
        let path = labels_path(dir, stem);
        let mut data = Vec::with_capacity(w * h);
        for (i, &l) in labels.iter().enumerate() {
            if !pdm.is_valid(i) {
                data.push(0u16);
            } else if l >= u16::MAX as u32 {
                return Err(format_err(&path, format!("label {l} does not fit a 16-bit map")));
            } else {
                data.push(l as u16 + 1);
            }
        }
        let img: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(w as u32, h as u32, data).expect("buffer matches image size");
        img.save(&path).map_err(|e| format_err(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Reads a PDM written by [`write_pdm`]. Depth and points come back at f32 precision.
pub fn read_pdm(dir: &Path, stem: &str) -> Result<PdmImage> {
    let path = camera_path(dir, stem);
    let camera: CmCamera =
        serde_json::from_str(&read_to_string(&path)?).map_err(|e| format_err(&path, e))?;
    camera.validate()?;
    let (w, h) = (camera.width, camera.height);
    let n = w * h;

    let path = depth_path(dir, stem);
    let depth = read_pfm(&path, w, h, 1)?;
    let path = points_path(dir, stem);
    let pts = read_pfm(&path, w, h, 3)?;

    let mut pdm = PdmImage::blank(camera);
    for i in 0..n {
        let d = depth[i] as f64;
        if !(d >= 0.0) {
            return Err(format_err(&depth_path(dir, stem), format!("invalid depth {d} at pixel {i}")));
        }
        if d > 0.0 {
            let p = Point3::new(pts[3 * i] as f64, pts[3 * i + 1] as f64, pts[3 * i + 2] as f64);
            if !p.iter().all(|c| c.is_finite()) {
                return Err(format_err(&path, format!("valid pixel {i} has a non-finite point")));
            }
            pdm.depth[i] = d;
            pdm.points[i] = p;
        }
    }

    let path = labels_path(dir, stem);
    if path.exists() {
        let img = image::open(&path).map_err(|e| format_err(&path, e))?.into_luma16();
        if img.width() as usize != w || img.height() as usize != h {
            return Err(format_err(&path, "label map size differs from the camera"));
        }
        let labels = img
            .as_raw()
            .iter()
            .map(|&v| (v as u32).saturating_sub(1))
            .collect();
        pdm.labels = Some(labels);
    }
    Ok(pdm)
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| format_err(path, e))
}

fn format_err(path: &Path, e: impl ToString) -> RenderError {
    RenderError::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// PFM stores rows bottom to top; `pixel(i, out)` appends the channels of
/// row-major pixel `i`.
fn write_pfm(
    path: &Path,
    w: usize,
    h: usize,
    channels: usize,
    pixel: impl Fn(usize, &mut Vec<f32>),
) -> Result<()> {
    let tag = if channels == 1 { "Pf" } else { "PF" };
    let mut buf = format!("{tag}\n{w} {h}\n-1.0\n").into_bytes();
    let mut row = Vec::with_capacity(w * channels);
    for r in (0..h).rev() {
        row.clear();
        for c in 0..w {
            pixel(r * w + c, &mut row);
        }
        for v in &row {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

fn read_pfm(path: &Path, w: usize, h: usize, channels: usize) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| format_err(path, e))?;
    // header: three whitespace-terminated tokens after the tag line
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(format_err(path, "truncated PFM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let want = if channels == 1 { "Pf" } else { "PF" };
    if fields[0] != want {
        return Err(format_err(path, format!("expected {want} tag, found {}", fields[0])));
    }
    let fw: usize = fields[1].parse().map_err(|_| format_err(path, "bad width"))?;
    let fh: usize = fields[2].parse().map_err(|_| format_err(path, "bad height"))?;
    let scale: f64 = fields[3].parse().map_err(|_| format_err(path, "bad scale"))?;
    if fw != w || fh != h {
        return Err(format_err(path, format!("size {fw}x{fh}, camera says {w}x{h}")));
    }
    let little = scale < 0.0;
    let n = w * h * channels;
    let body = bytes.get(pos..pos + 4 * n).ok_or_else(|| format_err(path, "truncated PFM data"))?;
    let mut out = vec![0f32; n];
    let row_len = w * channels;
    for (k, chunk) in body.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (file_row, offset) = (k / row_len, k % row_len);
        out[(h - 1 - file_row) * row_len + offset] = v;
    }
    Ok(out)
}
