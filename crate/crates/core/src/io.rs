//! On-disk formats.
//!
//! An acquisition stack is a directory with one 16-bit grayscale PNG per LED
//! (`led_m{m}_n{n}.png`) and a `manifest.json` holding the geometry and the
//! scale that maps PNG counts back to intensity. Float arrays are dumped as
//! `.npy`, traces as CSV.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::anneal::TraceEntry;
use crate::error::{FpmError, Result};
use crate::field::{ComplexField, IntensityImage};
use crate::forward::AcquisitionStack;
use crate::geometry::{LedGeometry, LedIndex, SegmentFrame};

pub const MANIFEST: &str = "manifest.json";

/// Stack metadata; lengths in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub geometry: LedGeometry,
    pub segment: SegmentFrame,
    pub objective_na: f64,
    pub true_shift: Option<(f64, f64)>,
    /// Intensity per PNG count.
    pub scale: f64,
    pub images: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub m: i32,
    pub n: i32,
    pub file: String,
}

pub fn image_name(led: LedIndex) -> String {
    format!("led_m{}_n{}.png", led.m, led.n)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| FpmError::io(dir, e))
}

/// Writes `stack` into `dir`, one PNG per LED quantized against the stack
/// maximum. The round-trip error is at most half a count, `2^-17` of full scale.
pub fn write_stack(dir: &Path, stack: &AcquisitionStack) -> Result<Manifest> {
    create_dir(dir)?;
    let peak = stack.max_intensity();
    let scale = if peak > 0.0 { peak / 65535.0 } else { 1.0 };
    let mut images = Vec::with_capacity(stack.len());
    for (&led, img) in &stack.images {
        let file = image_name(led);
        let counts = img.data.mapv(|v| (v / scale).round().clamp(0.0, 65535.0) as u16);
        write_png16(&dir.join(&file), &counts)?;
        images.push(ManifestEntry {
            m: led.m,
            n: led.n,
            file,
        });
    }
    let manifest = Manifest {
        geometry: stack.geometry,
        segment: stack.segment,
        objective_na: stack.objective_na,
        true_shift: stack.true_shift,
        scale,
        images,
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn read_stack(dir: &Path) -> Result<AcquisitionStack> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST))?;
    if !(manifest.scale > 0.0 && manifest.scale.is_finite()) {
        return Err(FpmError::data(
            dir.join(MANIFEST),
            format!("invalid scale {}", manifest.scale),
        ));
    }
    let mut images = BTreeMap::new();
    for entry in &manifest.images {
        let path = dir.join(&entry.file);
        let counts = read_png16(&path)?;
        let img = IntensityImage::new(counts.mapv(|c| c as f64 * manifest.scale), manifest.segment.lr_pitch)
            .map_err(|e| FpmError::data(&path, e))?;
        images.insert(LedIndex::new(entry.m, entry.n), img);
    }
    let stack = AcquisitionStack {
        images,
        geometry: manifest.geometry,
        segment: manifest.segment,
        objective_na: manifest.objective_na,
        true_shift: manifest.true_shift,
    };
    stack.validate().map_err(|e| FpmError::data(dir, e))?;
    Ok(stack)
}

fn write_png16(path: &Path, counts: &Array2<u16>) -> Result<()> {
    let (rows, cols) = counts.dim();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(cols as u32, rows as u32, counts.iter().cloned().collect())
            .expect("buffer length matches image size");
    buf.save(path).map_err(|e| FpmError::data(path, e))
}

fn read_png16(path: &Path) -> Result<Array2<u16>> {
    let img = image::open(path).map_err(|e| FpmError::data(path, e))?.into_luma16();
    let (w, h) = img.dimensions();
    Ok(Array2::from_shape_vec((h as usize, w as usize), img.into_raw()).expect("buffer length matches image size"))
}

/// Reads any grayscale or color image as luminance in `[0, 1]`.
pub fn read_grayscale(path: &Path) -> Result<Array2<f64>> {
    read_png16(path).map(|c| c.mapv(|v| v as f64 / 65535.0))
}

/// Writes `values` as a 16-bit PNG, mapping `[lo, hi]` to the full range.
pub fn write_scaled_png(path: &Path, values: &Array2<f64>, lo: f64, hi: f64) -> Result<()> {
    let span = if hi > lo { hi - lo } else { 1.0 };
    let counts = values.mapv(|v| (((v - lo) / span).clamp(0.0, 1.0) * 65535.0).round() as u16);
    write_png16(path, &counts)
}

/// Amplitude (scaled to its maximum) and phase (`[-pi, pi]`) PNGs.
pub fn write_field_pngs(amplitude_path: &Path, phase_path: &Path, field: &ComplexField) -> Result<()> {
    let amp = field.amplitude();
    let peak = amp.iter().cloned().fold(0.0, f64::max);
    write_scaled_png(amplitude_path, &amp, 0.0, peak)?;
    write_scaled_png(phase_path, &field.phase(), -std::f64::consts::PI, std::f64::consts::PI)
}

pub fn write_npy_complex(path: &Path, field: &ComplexField) -> Result<()> {
    ndarray_npy::write_npy(path, &field.data).map_err(|e| FpmError::data(path, e))
}

pub fn read_npy_complex(path: &Path, pitch: f64) -> Result<ComplexField> {
    let data = ndarray_npy::read_npy(path).map_err(|e| FpmError::data(path, e))?;
    ComplexField::new(data, pitch).map_err(|e| FpmError::data(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| FpmError::data(path, e))?;
    fs::write(path, text + "\n").map_err(|e| FpmError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| FpmError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| FpmError::data(path, e))
}

/// `iter,cost`, one row per completed sweep.
pub fn write_cost_csv(path: &Path, history: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| FpmError::data(path, e))?;
    let mut row = |r: [String; 2]| w.write_record(&r).map_err(|e| FpmError::data(path, e));
    row(["iter".into(), "cost".into()])?;
    for (i, c) in history.iter().enumerate() {
        row([(i + 1).to_string(), c.to_string()])?;
    }
    w.flush().map_err(|e| FpmError::io(path, e))
}

/// `eval,candidate_dx,candidate_dy,cost,accepted` for a two-dimensional search.
pub fn write_trace_csv(path: &Path, trace: &[TraceEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| FpmError::data(path, e))?;
    w.write_record(["eval", "candidate_dx", "candidate_dy", "cost", "accepted"])
        .map_err(|e| FpmError::data(path, e))?;
    for (i, t) in trace.iter().enumerate() {
        let coord = |k: usize| t.point.get(k).map_or(String::new(), |v| v.to_string());
        w.write_record([
            i.to_string(),
            coord(0),
            coord(1),
            t.cost.to_string(),
            t.accepted.to_string(),
        ])
        .map_err(|e| FpmError::data(path, e))?;
    }
    w.flush().map_err(|e| FpmError::io(path, e))
}

/// Path of `name` inside `dir`, creating `dir` first.
pub fn output_path(dir: &Path, name: &str) -> Result<PathBuf> {
    create_dir(dir)?;
    Ok(dir.join(name))
}
