//! LED array position model and illumination wave vectors.
//!
//! LEDs sit on a square lattice of pitch `d` at distance `s` from the sample,
//! rigidly translated by a global shift `(dx, dy)`. LED `(m, n)` is at
//! `(m*d + dx, n*d + dy)`; `m` runs along x (image columns) and `n` along y
//! (image rows).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{FpmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LedIndex {
    pub m: i32,
    pub n: i32,
}

impl LedIndex {
    pub const CENTER: LedIndex = LedIndex { m: 0, n: 0 };

    pub fn new(m: i32, n: i32) -> Self {
        LedIndex { m, n }
    }

    /// Chebyshev ring number around the central LED.
    pub fn ring(&self) -> i32 {
        self.m.abs().max(self.n.abs())
    }
}

impl std::fmt::Display for LedIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.m, self.n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedGeometry {
    /// LED pitch `d` (m).
    pub pitch: f64,
    /// Sample to array distance `s` (m).
    pub distance: f64,
    /// Global lattice shift `(dx, dy)` (m).
    pub shift: (f64, f64),
    /// Largest `|m|`, `|n|` on the grid; the grid is `2*grid_half+1` LEDs wide.
    pub grid_half: i32,
    /// Illumination wavelength (m).
    pub wavelength: f64,
}

impl LedGeometry {
    pub fn new(pitch: f64, distance: f64, grid_half: i32, wavelength: f64) -> Result<Self> {
        let g = LedGeometry {
            pitch,
            distance,
            shift: (0.0, 0.0),
            grid_half,
            wavelength,
        };
        g.validate()?;
        Ok(g)
    }

    /// 4 mm pitch, 113.5 mm stand-off, 17x17 LEDs, 629 nm.
    pub fn reference() -> Self {
        LedGeometry {
            pitch: 4e-3,
            distance: 113.5e-3,
            shift: (0.0, 0.0),
            grid_half: 8,
            wavelength: 629e-9,
        }
    }

    pub fn with_shift(mut self, dx: f64, dy: f64) -> Result<Self> {
        self.shift = (dx, dy);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(FpmError::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("LED pitch", self.pitch)?;
        positive("LED distance", self.distance)?;
        positive("wavelength", self.wavelength)?;
        if self.grid_half < 0 {
            return Err(FpmError::Config(format!("negative grid half-width {}", self.grid_half)));
        }
        let (dx, dy) = self.shift;
        if !(dx.abs() <= self.pitch && dy.abs() <= self.pitch) {
            return Err(FpmError::Config(format!(
                "global shift ({dx}, {dy}) exceeds the LED pitch {}",
                self.pitch
            )));
        }
        Ok(())
    }

    /// Number of LEDs along one side (`R1`).
    pub fn side(&self) -> usize {
        (2 * self.grid_half + 1) as usize
    }

    pub fn contains(&self, led: LedIndex) -> bool {
        led.m.abs() <= self.grid_half && led.n.abs() <= self.grid_half
    }

    /// All LEDs of the grid in center-out order.
    pub fn leds(&self) -> Vec<LedIndex> {
        square_range(self.grid_half)
    }
}

/// LEDs with `|m|, |n| <= half`, ordered by ring around the center and
/// row-major (`n`, then `m`) within a ring.
pub fn square_range(half: i32) -> Vec<LedIndex> {
    let mut leds: Vec<LedIndex> = (-half..=half)
        .flat_map(|n| (-half..=half).map(move |m| LedIndex { m, n }))
        .collect();
    leds.sort_by_key(|l| (l.ring(), l.n, l.m));
    leds
}

/// Segment of the field of view being reconstructed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentFrame {
    /// Segment center `(x_o, y_o)` in sample-plane coordinates (m).
    pub center: (f64, f64),
    pub hr_size: usize,
    pub lr_size: usize,
    /// Sample-plane size of one captured pixel (camera pixel / magnification).
    pub lr_pitch: f64,
}

impl SegmentFrame {
    pub fn new(center: (f64, f64), lr_size: usize, hr_size: usize, lr_pitch: f64) -> Result<Self> {
        let seg = SegmentFrame {
            center,
            hr_size,
            lr_size,
            lr_pitch,
        };
        seg.validate()?;
        Ok(seg)
    }

    /// 128 px captured tile, 4x upsampling, 6.5 um pixels behind a 4x objective.
    pub fn reference() -> Self {
        SegmentFrame {
            center: (0.0, 0.0),
            hr_size: 512,
            lr_size: 128,
            lr_pitch: 6.5e-6 / 4.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lr_size == 0 || !self.lr_size.is_multiple_of(2) || !self.hr_size.is_multiple_of(2) {
            return Err(FpmError::Config(format!(
                "tile sizes must be even and non-zero (lr {}, hr {})",
                self.lr_size, self.hr_size
            )));
        }
        if self.hr_size < self.lr_size || !self.hr_size.is_multiple_of(self.lr_size) {
            return Err(FpmError::Config(format!(
                "hr size {} is not a multiple of lr size {}",
                self.hr_size, self.lr_size
            )));
        }
        if !(self.lr_pitch.is_finite() && self.lr_pitch > 0.0) {
            return Err(FpmError::Config(format!(
                "lr pitch must be positive, got {}",
                self.lr_pitch
            )));
        }
        Ok(())
    }

    pub fn upsample(&self) -> usize {
        self.hr_size / self.lr_size
    }

    pub fn hr_pitch(&self) -> f64 {
        self.lr_pitch / self.upsample() as f64
    }

    /// Angular frequency spacing of one spectral pixel (rad/m); identical on
    /// the LR and HR grids because both span the same field of view.
    pub fn spectral_step(&self) -> f64 {
        2.0 * PI / (self.lr_size as f64 * self.lr_pitch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveVector {
    pub kx: f64,
    pub ky: f64,
}

impl WaveVector {
    pub const ZERO: WaveVector = WaveVector { kx: 0.0, ky: 0.0 };

    /// Magnitude of the transverse direction sine, `|k| * lambda / 2pi`.
    pub fn direction_sine(&self, wavelength: f64) -> f64 {
        self.kx.hypot(self.ky) * wavelength / (2.0 * PI)
    }

    /// Offset in spectral pixels as `(rows, cols)`, unrounded.
    pub fn pixel_offset(&self, seg: &SegmentFrame) -> (f64, f64) {
        let step = seg.spectral_step();
        (self.ky / step, self.kx / step)
    }

    /// Offset rounded to the nearest spectral pixel as `(rows, cols)`.
    pub fn pixel_shift(&self, seg: &SegmentFrame) -> (isize, isize) {
        let (r, c) = self.pixel_offset(seg);
        (r.round() as isize, c.round() as isize)
    }

    pub fn from_pixel_offset(rows: f64, cols: f64, seg: &SegmentFrame) -> Self {
        let step = seg.spectral_step();
        WaveVector {
            kx: cols * step,
            ky: rows * step,
        }
    }
}

impl std::ops::Sub for WaveVector {
    type Output = WaveVector;
    fn sub(self, rhs: WaveVector) -> WaveVector {
        WaveVector {
            kx: self.kx - rhs.kx,
            ky: self.ky - rhs.ky,
        }
    }
}

/// Position `(x, y)` of LED `(m, n)` in meters.
pub fn led_position(led: LedIndex, geom: &LedGeometry) -> Result<(f64, f64)> {
    if !geom.contains(led) {
        return Err(FpmError::Range(format!(
            "LED {led} outside the {}x{} grid",
            geom.side(),
            geom.side()
        )));
    }
    Ok((
        led.m as f64 * geom.pitch + geom.shift.0,
        led.n as f64 * geom.pitch + geom.shift.1,
    ))
}

/// Illumination wave vector of LED `(m, n)` seen from the segment center.
pub fn wave_vector(led: LedIndex, geom: &LedGeometry, seg: &SegmentFrame) -> Result<WaveVector> {
    Ok(wave_vector_from(led_position(led, geom)?, geom, seg))
}

/// Wave vector of a source at an arbitrary position `(x, y)` in the LED plane.
pub fn wave_vector_from(position: (f64, f64), geom: &LedGeometry, seg: &SegmentFrame) -> WaveVector {
    let (x, y) = position;
    let (xo, yo) = seg.center;
    let (ex, ey) = (xo - x, yo - y);
    let r = (ex * ex + ey * ey + geom.distance * geom.distance).sqrt();
    let k0 = 2.0 * PI / geom.wavelength;
    WaveVector {
        kx: -k0 * ex / r,
        ky: -k0 * ey / r,
    }
}

/// Position in the LED plane that produces `wv`; inverse of [`wave_vector_from`].
pub fn source_position(wv: WaveVector, geom: &LedGeometry, seg: &SegmentFrame) -> Result<(f64, f64)> {
    let k0 = 2.0 * PI / geom.wavelength;
    let (ux, uy) = (wv.kx / k0, wv.ky / k0);
    let uz2 = 1.0 - ux * ux - uy * uy;
    if !(uz2 > 0.0) {
        return Err(FpmError::Range(format!(
            "wave vector ({}, {}) is not propagating",
            wv.kx, wv.ky
        )));
    }
    let r = geom.distance / uz2.sqrt();
    Ok((seg.center.0 + ux * r, seg.center.1 + uy * r))
}

/// Wave vectors for a list of LEDs, in the same order.
pub fn wave_vectors(leds: &[LedIndex], geom: &LedGeometry, seg: &SegmentFrame) -> Result<Vec<WaveVector>> {
    leds.iter().map(|&l| wave_vector(l, geom, seg)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrightField {
    /// Bright-field LEDs in center-out order.
    pub leds: Vec<LedIndex>,
    /// Side of the smallest centered LED square holding every bright-field LED (`R2`).
    pub side: usize,
}

impl BrightField {
    /// The full centered `side x side` LED square.
    pub fn square(&self) -> Vec<LedIndex> {
        square_range((self.side as i32 - 1) / 2)
    }
}

/// LEDs whose illumination direction sine does not exceed the objective NA.
pub fn bright_field_set(geom: &LedGeometry, objective_na: f64, seg: &SegmentFrame) -> Result<BrightField> {
    if !(objective_na > 0.0 && objective_na < 1.0) {
        return Err(FpmError::Config(format!(
            "objective NA must lie in (0, 1), got {objective_na}"
        )));
    }
    let mut leds = Vec::new();
    for led in geom.leds() {
        if wave_vector(led, geom, seg)?.direction_sine(geom.wavelength) <= objective_na {
            leds.push(led);
        }
    }
    if leds.is_empty() {
        return Err(FpmError::Config(format!(
            "no LED lies inside the bright field of NA {objective_na}"
        )));
    }
    let half = leds.iter().map(LedIndex::ring).max().unwrap_or(0);
    Ok(BrightField {
        leds,
        side: (2 * half + 1) as usize,
    })
}
