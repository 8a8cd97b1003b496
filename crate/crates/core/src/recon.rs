//! Iterative spectrum-stitching reconstruction with joint object and pupil
//! recovery.
//!
//! Each outer iteration sweeps the LEDs: cut the LR spectrum out of the HR
//! object spectrum, impose the measured modulus in real space, and feed the
//! correction back into both the object tile and the pupil. Object tile and
//! pupil always share the same LR grid, so the update is local to the tile.

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{FpmError, Result};
use crate::field::{self, fft2_centered, ComplexField, IntensityImage};
use crate::forward::{lr_field, make_ideal_pupil, AcquisitionStack, Pupil};
use crate::geometry::{square_range, wave_vector, LedGeometry, LedIndex, SegmentFrame, WaveVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LedOrder {
    /// Rings around the central LED, row-major inside a ring.
    #[default]
    CenterOut,
    /// Plain row-major over the grid.
    RowMajor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconConfig {
    /// Object-update regularizer.
    pub delta1: f64,
    /// Pupil-update regularizer.
    pub delta2: f64,
    /// Outer iterations over the full LED range.
    pub max_iters: usize,
    /// Outer iterations of the fast bright-field reconstruction used as a cost oracle.
    pub inner_iters: usize,
    pub led_order: LedOrder,
    /// Extra radius (px) of the pupil support beyond the ideal cutoff.
    pub pupil_support_dilation: f64,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig {
            delta1: 1.0,
            delta2: 1000.0,
            max_iters: 20,
            inner_iters: 5,
            led_order: LedOrder::CenterOut,
            pupil_support_dilation: 0.0,
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta1 > 0.0 && self.delta2 > 0.0) {
            return Err(FpmError::Config(format!(
                "regularizers must be positive (delta1 {}, delta2 {})",
                self.delta1, self.delta2
            )));
        }
        if self.max_iters == 0 || self.inner_iters == 0 {
            return Err(FpmError::Config("iteration counts must be at least 1".into()));
        }
        if !(self.pupil_support_dilation >= 0.0) {
            return Err(FpmError::Config("pupil support dilation must be non-negative".into()));
        }
        Ok(())
    }

    /// Same settings with a different iteration count.
    pub fn with_iters(mut self, iters: usize) -> Self {
        self.max_iters = iters;
        self
    }
}

/// One LED together with the wave vector the reconstruction assumes for it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Illumination {
    pub led: LedIndex,
    pub wave_vector: WaveVector,
}

/// Illuminations for `leds` under `geom`, sorted by `order`.
pub fn illuminations(
    leds: &[LedIndex],
    geom: &LedGeometry,
    seg: &SegmentFrame,
    order: LedOrder,
) -> Result<Vec<Illumination>> {
    let mut leds = leds.to_vec();
    match order {
        LedOrder::CenterOut => leds.sort_by_key(|l| (l.ring(), l.n, l.m)),
        LedOrder::RowMajor => leds.sort_by_key(|l| (l.n, l.m)),
    }
    leds.into_iter()
        .map(|led| {
            Ok(Illumination {
                led,
                wave_vector: wave_vector(led, geom, seg)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconState {
    /// HR object spectrum, centered.
    pub object_spectrum: ComplexField,
    pub pupil: Pupil,
    pub support: Array2<bool>,
    pub segment: SegmentFrame,
    /// Completed outer iterations.
    pub iter: usize,
    /// Data misfit accumulated over each completed sweep.
    pub cost_history: Vec<f64>,
    /// LR fields synthesized so far (one per LED visit or misfit evaluation).
    pub forward_syntheses: usize,
    /// `max |O|` at the start of the current outer iteration.
    pub object_max: f64,
}

impl ReconState {
    pub fn object(&self) -> ComplexField {
        field::ifft2_centered(&self.object_spectrum)
    }
}

/// Bilinear upsampling with periodic boundaries; LR sample `j` lands on HR
/// sample `factor * j`.
pub fn upsample_bilinear(image: &Array2<f64>, factor: usize) -> Array2<f64> {
    let (rows, cols) = image.dim();
    let f = factor as f64;
    Array2::from_shape_fn((rows * factor, cols * factor), |(i, j)| {
        let (y, x) = (i as f64 / f, j as f64 / f);
        let (y0, x0) = (y.floor() as usize, x.floor() as usize);
        let (ty, tx) = (y - y0 as f64, x - x0 as f64);
        let (y1, x1) = ((y0 + 1) % rows, (x0 + 1) % cols);
        (1.0 - ty) * ((1.0 - tx) * image[(y0, x0)] + tx * image[(y0, x1)])
            + ty * ((1.0 - tx) * image[(y1, x0)] + tx * image[(y1, x1)])
    })
}

/// Initial state: spectrum of the upsampled square root of the on-axis
/// capture, ideal pupil.
pub fn initialize(stack: &AcquisitionStack, cfg: &ReconConfig) -> Result<ReconState> {
    cfg.validate()?;
    let seg = stack.segment;
    seg.validate()?;
    if stack.is_empty() {
        return Err(FpmError::Input("empty acquisition stack".into()));
    }
    let central = stack
        .images
        .get(&LedIndex::CENTER)
        .ok_or_else(|| FpmError::Input("the central LED capture is missing".into()))?;
    let amplitude = upsample_bilinear(&central.data.mapv(f64::sqrt), seg.upsample());
    let object = ComplexField::new(amplitude.mapv(|a| Complex64::new(a, 0.0)), seg.hr_pitch())?;
    let pupil = make_ideal_pupil(seg.lr_size, seg.lr_pitch, stack.objective_na, stack.geometry.wavelength)?;
    let support = pupil.support(cfg.pupil_support_dilation);
    let object_spectrum = fft2_centered(&object);
    Ok(ReconState {
        object_max: object_spectrum.max_abs(),
        object_spectrum,
        pupil,
        support,
        segment: seg,
        iter: 0,
        cost_history: Vec::new(),
        forward_syntheses: 0,
    })
}

fn out_of_band(state: &ReconState, wv: WaveVector) -> FpmError {
    let (dr, dc) = wv.pixel_shift(&state.segment);
    FpmError::OutOfBand(format!(
        "tile shifted by ({dr}, {dc}) px leaves the {:?} HR spectrum",
        state.object_spectrum.dim()
    ))
}

/// The object tile a given illumination sees, without the pupil.
fn object_tile(state: &ReconState, wv: WaveVector) -> Result<ndarray::ArrayView2<'_, Complex64>> {
    let (dr, dc) = wv.pixel_shift(&state.segment);
    let n = state.segment.lr_size;
    field::window(&state.object_spectrum.data, n, n, -dr, -dc).ok_or_else(|| out_of_band(state, wv))
}

/// LR spectrum predicted for illumination `wv`: object tile times pupil.
pub fn extract_lr_spectrum(state: &ReconState, wv: WaveVector) -> Result<ComplexField> {
    let tile = object_tile(state, wv)?;
    Ok(ComplexField {
        data: &tile * &state.pupil.mask.data,
        pitch: state.segment.lr_pitch,
    })
}

/// Replace the modulus of `psi` by the measured amplitude, keeping the phase.
pub fn apply_intensity_constraint(psi: &ComplexField, captured: &IntensityImage) -> Result<ComplexField> {
    if psi.dim() != captured.dim() {
        return Err(FpmError::Size(format!(
            "field {:?} vs capture {:?}",
            psi.dim(),
            captured.dim()
        )));
    }
    let eps = 1e-12 * psi.max_abs();
    let data = Zip::from(&psi.data).and(&captured.data).map_collect(|&z, &i| {
        let r = z.norm();
        let amp = i.sqrt();
        if r < eps || r == 0.0 {
            Complex64::new(amp, 0.0)
        } else {
            z * (amp / r)
        }
    });
    Ok(ComplexField { data, pitch: psi.pitch })
}

/// Squared-difference misfit between a measurement and a predicted field.
pub fn intensity_misfit(captured: &IntensityImage, psi: &ComplexField) -> f64 {
    Zip::from(&captured.data)
        .and(&psi.data)
        .fold(0.0, |acc, &i, z| acc + (i - z.norm_sqr()).powi(2))
}

/// Joint object/pupil update from the constrained LR spectrum `phi_spectrum`.
///
/// Touches only the object tile under `wv`; the pupil is re-masked to its
/// support. The object normalization uses `state.object_max`, which is
/// refreshed once per outer iteration.
pub fn epry_update(
    state: &mut ReconState,
    wv: WaveVector,
    phi_spectrum: &ComplexField,
    cfg: &ReconConfig,
) -> Result<()> {
    let n = state.segment.lr_size;
    if phi_spectrum.dim() != (n, n) {
        return Err(FpmError::Size(format!(
            "update spectrum {:?}, expected {n}x{n}",
            phi_spectrum.dim()
        )));
    }
    let object_max = state.object_max;
    let pupil_max = state.pupil.mask.max_abs();
    let (dr, dc) = wv.pixel_shift(&state.segment);
    let mut tile = field::window_mut(&mut state.object_spectrum.data, n, n, -dr, -dc)
        .ok_or_else(|| FpmError::OutOfBand(format!("tile shifted by ({dr}, {dc}) px leaves the HR spectrum")))?;
    let pupil = &mut state.pupil.mask.data;
    Zip::from(&mut tile)
        .and(pupil)
        .and(&phi_spectrum.data)
        .and(&state.support)
        .for_each(|o, p, &phi, &inside| {
            let (o0, p0) = (*o, *p);
            let diff = phi - o0 * p0;
            if pupil_max > 0.0 {
                let pa = p0.norm();
                *o = o0 + diff * p0.conj() * (pa / (pupil_max * (pa * pa + cfg.delta1)));
            }
            if inside && object_max > 0.0 {
                let oa = o0.norm();
                *p = p0 + diff * o0.conj() * (oa / (object_max * (oa * oa + cfg.delta2)));
            } else {
                *p = Complex64::default();
            }
        });
    Ok(())
}

/// One visit of one LED: predict, constrain, update. Returns the misfit of
/// the prediction.
pub fn update_led(state: &mut ReconState, captured: &IntensityImage, wv: WaveVector, cfg: &ReconConfig) -> Result<f64> {
    let seg = state.segment;
    let u2 = (seg.upsample() * seg.upsample()) as f64;
    if captured.dim() != (seg.lr_size, seg.lr_size) {
        return Err(FpmError::Size(format!(
            "capture {:?} vs LR tile {}",
            captured.dim(),
            seg.lr_size
        )));
    }
    // same steps as lr_field -> apply_intensity_constraint -> lr_spectrum, in one buffer
    let mut buf = extract_lr_spectrum(state, wv)?.data;
    field::ifft2_centered_mut(&mut buf, 1.0 / u2);
    state.forward_syntheses += 1;
    let eps = 1e-12 * buf.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let mut misfit = 0.0;
    Zip::from(&mut buf).and(&captured.data).for_each(|z, &i| {
        let r2 = z.norm_sqr();
        misfit += (i - r2) * (i - r2);
        let r = r2.sqrt();
        let amp = i.sqrt();
        *z = if r < eps || r == 0.0 {
            Complex64::new(amp, 0.0)
        } else {
            *z * (amp / r)
        };
    });
    field::fft2_centered_mut(&mut buf, u2);
    let phi_spectrum = ComplexField {
        data: buf,
        pitch: seg.lr_pitch,
    };
    epry_update(state, wv, &phi_spectrum, cfg)?;
    Ok(misfit)
}

/// One outer iteration over `plan`; appends the sweep misfit to the history.
pub fn sweep(
    state: &mut ReconState,
    stack: &AcquisitionStack,
    plan: &[Illumination],
    cfg: &ReconConfig,
) -> Result<f64> {
    state.object_max = state.object_spectrum.max_abs();
    let mut cost = 0.0;
    for ill in plan {
        cost += update_led(state, stack.get(ill.led)?, ill.wave_vector, cfg)?;
    }
    state.iter += 1;
    state.cost_history.push(cost);
    Ok(cost)
}

/// Misfit of the current state against `plan` without updating it.
pub fn data_misfit(state: &mut ReconState, stack: &AcquisitionStack, plan: &[Illumination]) -> Result<f64> {
    let mut cost = 0.0;
    for ill in plan {
        let psi = lr_field(&extract_lr_spectrum(state, ill.wave_vector)?, &state.segment);
        state.forward_syntheses += 1;
        cost += intensity_misfit(stack.get(ill.led)?, &psi);
    }
    Ok(cost)
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub object: ComplexField,
    pub state: ReconState,
}

impl Reconstruction {
    pub fn pupil(&self) -> &Pupil {
        &self.state.pupil
    }
}

/// `iters` outer iterations over an explicit illumination plan.
pub fn reconstruct_plan(
    stack: &AcquisitionStack,
    plan: &[Illumination],
    cfg: &ReconConfig,
    iters: usize,
) -> Result<Reconstruction> {
    let mut state = initialize(stack, cfg)?;
    run_iterations(&mut state, stack, plan, cfg, iters)?;
    Ok(Reconstruction {
        object: state.object(),
        state,
    })
}

pub fn run_iterations(
    state: &mut ReconState,
    stack: &AcquisitionStack,
    plan: &[Illumination],
    cfg: &ReconConfig,
    iters: usize,
) -> Result<()> {
    if plan.is_empty() {
        return Err(FpmError::Input("no LEDs to reconstruct from".into()));
    }
    for _ in 0..iters {
        sweep(state, stack, plan, cfg)?;
    }
    Ok(())
}

/// Full reconstruction over every LED of `geom`'s grid, `cfg.max_iters` iterations.
pub fn reconstruct(
    stack: &AcquisitionStack,
    geom: &LedGeometry,
    seg: &SegmentFrame,
    cfg: &ReconConfig,
) -> Result<Reconstruction> {
    let plan = illuminations(&geom.leds(), geom, seg, cfg.led_order)?;
    reconstruct_plan(stack, &plan, cfg, cfg.max_iters)
}

/// Reconstruction restricted to the centered `side x side` LED square.
pub fn reconstruct_square(
    stack: &AcquisitionStack,
    geom: &LedGeometry,
    seg: &SegmentFrame,
    cfg: &ReconConfig,
    side: usize,
    iters: usize,
) -> Result<Reconstruction> {
    let leds = square_range((side as i32 - 1) / 2);
    let plan = illuminations(&leds, geom, seg, cfg.led_order)?;
    reconstruct_plan(stack, &plan, cfg, iters)
}
