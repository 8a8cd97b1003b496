//! Complex sample-plane fields, centered 2D Fourier transforms and spectral
//! crop/embed primitives.
//!
//! Conventions used throughout the crate:
//!
//! * the forward transform is unnormalized, the inverse carries `1/(rows*cols)`;
//! * after centering, the DC sample of an axis of length `n` sits at index
//!   `n / 2` (integer division), in both the spatial and the spectral domain;
//! * `pitch` is always the spatial sample pitch (meters/pixel) of the image a
//!   grid represents, also when the grid holds a spectrum.

use std::cell::RefCell;

use ndarray::{s, Array2, ArrayView2, ArrayViewMut2};
use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use crate::error::{FpmError, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub data: Array2<Complex64>,
    pub pitch: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntensityImage {
    pub data: Array2<f64>,
    pub pitch: f64,
}

fn check_grid(rows: usize, cols: usize, pitch: f64) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(FpmError::Size(format!("empty grid {rows}x{cols}")));
    }
    if !(pitch.is_finite() && pitch > 0.0) {
        return Err(FpmError::Config(format!("pixel pitch must be positive, got {pitch}")));
    }
    Ok(())
}

impl ComplexField {
    pub fn new(data: Array2<Complex64>, pitch: f64) -> Result<Self> {
        let (rows, cols) = data.dim();
        check_grid(rows, cols, pitch)?;
        Ok(ComplexField { data, pitch })
    }

    pub fn zeros(rows: usize, cols: usize, pitch: f64) -> Result<Self> {
        Self::new(Array2::zeros((rows, cols)), pitch)
    }

    pub fn from_amplitude_phase(amplitude: &Array2<f64>, phase: &Array2<f64>, pitch: f64) -> Result<Self> {
        if amplitude.dim() != phase.dim() {
            return Err(FpmError::Size(format!(
                "amplitude {:?} vs phase {:?}",
                amplitude.dim(),
                phase.dim()
            )));
        }
        let data = ndarray::Zip::from(amplitude)
            .and(phase)
            .map_collect(|&a, &p| Complex64::from_polar(a, p));
        Self::new(data, pitch)
    }

    pub fn dim(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn amplitude(&self) -> Array2<f64> {
        self.data.mapv(|z| z.norm())
    }

    pub fn phase(&self) -> Array2<f64> {
        self.data.mapv(|z| z.arg())
    }

    pub fn intensity(&self) -> IntensityImage {
        IntensityImage {
            data: self.data.mapv(|z| z.norm_sqr()),
            pitch: self.pitch,
        }
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.norm()))
    }
}

impl IntensityImage {
    pub fn new(data: Array2<f64>, pitch: f64) -> Result<Self> {
        let (rows, cols) = data.dim();
        check_grid(rows, cols, pitch)?;
        if let Some(v) = data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(FpmError::Input(format!(
                "intensity sample {v} is negative or non-finite"
            )));
        }
        Ok(IntensityImage { data, pitch })
    }

    pub fn dim(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().cloned().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.mean().unwrap_or(0.0)
    }
}

/// Moves sample 0 of each axis to index `n / 2`.
pub fn fftshift(a: &Array2<Complex64>) -> Array2<Complex64> {
    let (rows, cols) = a.dim();
    let (hr, hc) = (rows / 2, cols / 2);
    Array2::from_shape_fn((rows, cols), |(i, j)| {
        a[((i + rows - hr) % rows, (j + cols - hc) % cols)]
    })
}

/// Inverse of [`fftshift`].
pub fn ifftshift(a: &Array2<Complex64>) -> Array2<Complex64> {
    let (rows, cols) = a.dim();
    let (hr, hc) = (rows / 2, cols / 2);
    Array2::from_shape_fn((rows, cols), |(i, j)| a[((i + hr) % rows, (j + hc) % cols)])
}

fn fft2_in_place(buf: &mut [Complex64], rows: usize, cols: usize, direction: FftDirection) {
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        let row_fft = planner.plan_fft(cols, direction);
        let col_fft = planner.plan_fft(rows, direction);
        let mut scratch =
            vec![Complex64::default(); row_fft.get_inplace_scratch_len().max(col_fft.get_inplace_scratch_len())];

        // every contiguous chunk of `cols` samples is one row
        row_fft.process_with_scratch(buf, &mut scratch);

        let mut transposed = vec![Complex64::default(); rows * cols];
        for (i, row) in buf.chunks_exact(cols).enumerate() {
            for (j, z) in row.iter().enumerate() {
                transposed[j * rows + i] = *z;
            }
        }
        col_fft.process_with_scratch(&mut transposed, &mut scratch);
        for (j, col) in transposed.chunks_exact(rows).enumerate() {
            for (i, z) in col.iter().enumerate() {
                buf[i * cols + j] = *z;
            }
        }
    });
}

/// Centered transform of a row-major buffer in place, scaled by `scale`
/// (on top of the `1/(rows*cols)` of the inverse).
fn transform_slice(buf: &mut [Complex64], rows: usize, cols: usize, direction: FftDirection, scale: f64) {
    let norm = match direction {
        FftDirection::Forward => scale,
        FftDirection::Inverse => scale / (rows * cols) as f64,
    };
    if rows.is_multiple_of(2) && cols.is_multiple_of(2) {
        // For even axes, centering on both sides is a (-1)^(i+j) modulation
        // before and after the plain transform, up to a global (-1)^(rows/2 + cols/2).
        let global = if (rows / 2 + cols / 2).is_multiple_of(2) {
            norm
        } else {
            -norm
        };
        let checker = |buf: &mut [Complex64], scale: f64| {
            for (i, row) in buf.chunks_exact_mut(cols).enumerate() {
                for (j, z) in row.iter_mut().enumerate() {
                    *z *= if (i + j) % 2 == 0 { scale } else { -scale };
                }
            }
        };
        checker(buf, 1.0);
        fft2_in_place(buf, rows, cols, direction);
        checker(buf, global);
        return;
    }
    let a = Array2::from_shape_vec((rows, cols), buf.to_vec()).expect("buffer length matches shape");
    let mut shifted = ifftshift(&a).into_raw_vec_and_offset().0;
    fft2_in_place(&mut shifted, rows, cols, direction);
    let out = Array2::from_shape_vec((rows, cols), shifted).expect("buffer length matches shape");
    for (dst, src) in buf.iter_mut().zip(fftshift(&out).iter()) {
        *dst = src * norm;
    }
}

fn transform_array(data: &mut Array2<Complex64>, direction: FftDirection, scale: f64) {
    let (rows, cols) = data.dim();
    match data.as_slice_mut() {
        Some(buf) => transform_slice(buf, rows, cols, direction, scale),
        None => {
            let mut buf: Vec<Complex64> = data.iter().cloned().collect();
            transform_slice(&mut buf, rows, cols, direction, scale);
            *data = Array2::from_shape_vec((rows, cols), buf).expect("buffer length matches shape");
        }
    }
}

/// In-place [`fft2_centered`] with an extra scale factor.
pub fn fft2_centered_mut(data: &mut Array2<Complex64>, scale: f64) {
    transform_array(data, FftDirection::Forward, scale);
}

/// In-place [`ifft2_centered`] with an extra scale factor.
pub fn ifft2_centered_mut(data: &mut Array2<Complex64>, scale: f64) {
    transform_array(data, FftDirection::Inverse, scale);
}

fn transform(field: &ComplexField, direction: FftDirection) -> ComplexField {
    let mut data = field.data.as_standard_layout().into_owned();
    transform_array(&mut data, direction, 1.0);
    ComplexField {
        data,
        pitch: field.pitch,
    }
}

/// Unnormalized forward transform with DC at the grid center.
pub fn fft2_centered(field: &ComplexField) -> ComplexField {
    transform(field, FftDirection::Forward)
}

/// Inverse of [`fft2_centered`], normalized by `1/(rows*cols)`.
pub fn ifft2_centered(spectrum: &ComplexField) -> ComplexField {
    transform(spectrum, FftDirection::Inverse)
}

/// Top-left corner of an `out`-long window whose center sits `offset` samples
/// from the center of an `len`-long axis. `None` if the window leaves the axis.
pub(crate) fn window_start(len: usize, out: usize, offset: isize) -> Option<usize> {
    let start = (len / 2) as isize + offset - (out / 2) as isize;
    if start < 0 || start as usize + out > len {
        None
    } else {
        Some(start as usize)
    }
}

/// Borrow an `out_rows x out_cols` window of `a` centered `(row_offset,
/// col_offset)` samples away from the grid center.
pub(crate) fn window(
    a: &Array2<Complex64>,
    out_rows: usize,
    out_cols: usize,
    row_offset: isize,
    col_offset: isize,
) -> Option<ArrayView2<'_, Complex64>> {
    let (rows, cols) = a.dim();
    let r0 = window_start(rows, out_rows, row_offset)?;
    let c0 = window_start(cols, out_cols, col_offset)?;
    Some(a.slice(s![r0..r0 + out_rows, c0..c0 + out_cols]))
}

pub(crate) fn window_mut(
    a: &mut Array2<Complex64>,
    out_rows: usize,
    out_cols: usize,
    row_offset: isize,
    col_offset: isize,
) -> Option<ArrayViewMut2<'_, Complex64>> {
    let (rows, cols) = a.dim();
    let r0 = window_start(rows, out_rows, row_offset)?;
    let c0 = window_start(cols, out_cols, col_offset)?;
    Some(a.slice_mut(s![r0..r0 + out_rows, c0..c0 + out_cols]))
}

/// Centered sub-grid of a spectrum. The output pitch is scaled so that the
/// spectral sample spacing (and hence the represented band) is unchanged.
pub fn crop_centered(spec: &ComplexField, out_rows: usize, out_cols: usize) -> Result<ComplexField> {
    let (rows, cols) = spec.dim();
    if out_rows == 0 || out_cols == 0 || out_rows > rows || out_cols > cols {
        return Err(FpmError::Size(format!(
            "cannot crop {rows}x{cols} to {out_rows}x{out_cols}"
        )));
    }
    let tile = window(&spec.data, out_rows, out_cols, 0, 0).expect("centered window fits");
    Ok(ComplexField {
        data: tile.to_owned(),
        pitch: spec.pitch * cols as f64 / out_cols as f64,
    })
}

/// Places `tile` at the center of a zero spectrum of the requested size.
pub fn embed_centered(tile: &ComplexField, out_rows: usize, out_cols: usize) -> Result<ComplexField> {
    let (rows, cols) = tile.dim();
    if rows > out_rows || cols > out_cols {
        return Err(FpmError::Size(format!(
            "cannot embed {rows}x{cols} into {out_rows}x{out_cols}"
        )));
    }
    let mut data = Array2::zeros((out_rows, out_cols));
    window_mut(&mut data, rows, cols, 0, 0)
        .expect("centered window fits")
        .assign(&tile.data);
    Ok(ComplexField {
        data,
        pitch: tile.pitch * cols as f64 / out_cols as f64,
    })
}
