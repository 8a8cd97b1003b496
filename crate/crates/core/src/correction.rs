//! LED misalignment correction.
//!
//! Two searches share the annealer in [`crate::anneal`]:
//!
//! * [`mc_correct`] searches a single global shift `(dx, dy)` of the whole LED
//!   board. Each candidate is scored by a short reconstruction over the
//!   bright-field LEDs only, so the corrected LEDs always stay on a rigid
//!   lattice.
//! * [`sa_correct_per_led`] is the conventional baseline: inside every
//!   reconstruction sweep each LED gets its own wave-vector search against
//!   its single-image misfit.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::anneal::{mix_seed, sa_minimize, AnnealerConfig, TraceEntry};
use crate::error::{FpmError, Result};
use crate::field::IntensityImage;
use crate::forward::{lr_field, AcquisitionStack};
use crate::geometry::{bright_field_set, square_range, wave_vector, LedGeometry, LedIndex, SegmentFrame, WaveVector};
use crate::recon::{
    extract_lr_spectrum, illuminations, initialize, intensity_misfit, reconstruct_plan, run_iterations, update_led,
    Illumination, ReconConfig, ReconState,
};

/// Outcome of a global-shift search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionResult {
    /// Estimated `(dx, dy)` in meters.
    pub shift: (f64, f64),
    /// Current (accepted) cost after each evaluation.
    pub cost_trace: Vec<f64>,
    pub n_cost_evals: usize,
    pub n_forward_syntheses: usize,
    /// Seconds.
    pub wall_time: f64,
    /// Every candidate that was scored, in order.
    #[serde(skip)]
    pub evaluations: Vec<TraceEntry>,
}

impl CorrectionResult {
    /// The nominal geometry moved by the estimated shift.
    pub fn geometry(&self, nominal: &LedGeometry) -> Result<LedGeometry> {
        nominal.with_shift(self.shift.0, self.shift.1)
    }
}

/// Side of the bright-field LED square under the nominal (unshifted) geometry.
///
/// The set is fixed before the search so every candidate is scored on the
/// same images.
pub fn bright_field_side(stack: &AcquisitionStack, seg: &SegmentFrame, na: f64) -> Result<usize> {
    let mut nominal = stack.geometry;
    nominal.shift = (0.0, 0.0);
    let bf = bright_field_set(&nominal, na, seg)?;
    if bf.side > nominal.side() {
        return Err(FpmError::Config(format!(
            "bright-field square {} exceeds the {} LED grid",
            bf.side,
            nominal.side()
        )));
    }
    Ok(bf.side)
}

struct E2 {
    cost: f64,
    forward_syntheses: usize,
}

fn e2_eval(
    stack: &AcquisitionStack,
    seg: &SegmentFrame,
    shift: (f64, f64),
    cfg: &ReconConfig,
    side: usize,
) -> Result<E2> {
    let geom = stack.geometry.with_shift(shift.0, shift.1)?;
    let leds = square_range((side as i32 - 1) / 2);
    let plan = illuminations(&leds, &geom, seg, cfg.led_order)?;
    let r = reconstruct_plan(stack, &plan, cfg, cfg.inner_iters)?;
    // misfit of the predictions made during the last sweep
    let cost = *r.state.cost_history.last().expect("at least one sweep ran");
    Ok(E2 {
        cost,
        forward_syntheses: r.state.forward_syntheses,
    })
}

/// Global-shift cost: run `cfg.inner_iters` sweeps over the bright-field
/// square with the LEDs moved by `shift` and return the summed intensity
/// misfit of the last sweep's predictions.
pub fn e2_cost(
    stack: &AcquisitionStack,
    seg: &SegmentFrame,
    shift: (f64, f64),
    cfg: &ReconConfig,
    na: f64,
) -> Result<f64> {
    let side = bright_field_side(stack, seg, na)?;
    Ok(e2_eval(stack, seg, shift, cfg, side)?.cost)
}

/// Search the global LED shift over `[-d, d]^2` starting from zero.
///
/// The annealer's bounds are replaced by the pitch box; its other settings
/// are used as given.
pub fn mc_correct(
    stack: &AcquisitionStack,
    seg: &SegmentFrame,
    recon_cfg: &ReconConfig,
    annealer_cfg: &AnnealerConfig,
) -> Result<CorrectionResult> {
    recon_cfg.validate()?;
    let started = Instant::now();
    let side = bright_field_side(stack, seg, stack.objective_na)?;
    let d = stack.geometry.pitch;
    let cfg = AnnealerConfig {
        bounds: vec![(-d, d); 2],
        ..annealer_cfg.clone()
    };
    let mut syntheses = 0;
    let annealed = sa_minimize(
        |v| {
            let e = e2_eval(stack, seg, (v[0], v[1]), recon_cfg, side)?;
            syntheses += e.forward_syntheses;
            Ok(e.cost)
        },
        &[0.0, 0.0],
        &cfg,
    )?;
    log::info!(
        "global shift search: {} evaluations, best ({:.4}, {:.4}) mm",
        annealed.evaluations(),
        annealed.argmin[0] * 1e3,
        annealed.argmin[1] * 1e3
    );
    Ok(CorrectionResult {
        shift: (annealed.argmin[0], annealed.argmin[1]),
        cost_trace: annealed
            .accepted_costs
            .iter()
            .map(|c| c * annealed.trace[0].cost)
            .collect(),
        n_cost_evals: annealed.evaluations(),
        n_forward_syntheses: syntheses,
        wall_time: started.elapsed().as_secs_f64(),
        evaluations: annealed.trace,
    })
}

/// Single-image cost of illuminating the current estimate with `wv`.
pub fn e1_cost(state: &ReconState, captured: &IntensityImage, wv: WaveVector) -> Result<f64> {
    let psi = lr_field(&extract_lr_spectrum(state, wv)?, &state.segment);
    if psi.dim() != captured.dim() {
        return Err(FpmError::Size(format!(
            "capture {:?} vs LR field {:?}",
            captured.dim(),
            psi.dim()
        )));
    }
    Ok(intensity_misfit(captured, &psi))
}

/// Outcome of per-LED wave-vector searches.
#[derive(Debug, Clone)]
pub struct PerLedResult {
    /// Final per-LED wave vectors, in visiting order.
    pub plan: Vec<Illumination>,
    pub state: ReconState,
    pub n_cost_evals: usize,
    pub n_forward_syntheses: usize,
    /// Seconds.
    pub wall_time: f64,
}

impl PerLedResult {
    pub fn wave_vectors(&self) -> BTreeMap<LedIndex, WaveVector> {
        self.plan.iter().map(|i| (i.led, i.wave_vector)).collect()
    }
}

/// Per-LED search settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerLedConfig {
    /// Annealer evaluations per LED visit.
    pub iters_per_led: usize,
    /// Half-width of the per-visit search box in spectral pixels; `None`
    /// uses the spacing between the central LED and its neighbour.
    pub search_px: Option<f64>,
}

impl Default for PerLedConfig {
    fn default() -> Self {
        PerLedConfig {
            iters_per_led: 20,
            search_px: None,
        }
    }
}

impl PerLedConfig {
    /// One pass with a sub-pixel box, for polishing an already good geometry.
    pub fn local() -> Self {
        PerLedConfig {
            iters_per_led: 20,
            search_px: Some(0.5),
        }
    }

    fn half_width(&self, geom: &LedGeometry, seg: &SegmentFrame) -> Result<f64> {
        if let Some(px) = self.search_px {
            if !(px > 0.0 && px.is_finite()) {
                return Err(FpmError::Config(format!("search half-width {px} px must be positive")));
            }
            return Ok(px);
        }
        let mut nominal = *geom;
        nominal.shift = (0.0, 0.0);
        let neighbour = if geom.grid_half > 0 {
            LedIndex::new(1, 0)
        } else {
            LedIndex::CENTER
        };
        let dk = wave_vector(neighbour, &nominal, seg)? - wave_vector(LedIndex::CENTER, &nominal, seg)?;
        let (r, c) = dk.pixel_offset(seg);
        Ok(r.hypot(c).max(1.0))
    }
}

/// Conventional baseline: `recon_cfg.max_iters` sweeps over every LED of
/// `geom`, each LED visit preceded by a search of its wave-vector offset.
pub fn sa_correct_per_led(
    stack: &AcquisitionStack,
    geom: &LedGeometry,
    seg: &SegmentFrame,
    recon_cfg: &ReconConfig,
    annealer_cfg: &AnnealerConfig,
    per_led: &PerLedConfig,
) -> Result<PerLedResult> {
    recon_cfg.validate()?;
    let plan = illuminations(&geom.leds(), geom, seg, recon_cfg.led_order)?;
    let state = initialize(stack, recon_cfg)?;
    per_led_passes(
        stack,
        geom,
        seg,
        state,
        plan,
        recon_cfg,
        annealer_cfg,
        per_led,
        recon_cfg.max_iters,
    )
}

/// One per-LED pass starting from the globally corrected geometry.
///
/// The estimate that scores each candidate is warmed up by
/// `recon_cfg.inner_iters` plain sweeps with the corrected geometry first.
/// The returned plan carries the refined wave vectors.
pub fn refine_local(
    stack: &AcquisitionStack,
    geom_corrected: &LedGeometry,
    seg: &SegmentFrame,
    recon_cfg: &ReconConfig,
    annealer_cfg: &AnnealerConfig,
    per_led: &PerLedConfig,
) -> Result<PerLedResult> {
    recon_cfg.validate()?;
    let started = Instant::now();
    let plan = illuminations(&geom_corrected.leds(), geom_corrected, seg, recon_cfg.led_order)?;
    let mut state = initialize(stack, recon_cfg)?;
    run_iterations(&mut state, stack, &plan, recon_cfg, recon_cfg.inner_iters)?;
    let mut r = per_led_passes(
        stack,
        geom_corrected,
        seg,
        state,
        plan,
        recon_cfg,
        annealer_cfg,
        per_led,
        1,
    )?;
    r.wall_time = started.elapsed().as_secs_f64();
    Ok(r)
}

#[allow(clippy::too_many_arguments)]
fn per_led_passes(
    stack: &AcquisitionStack,
    geom: &LedGeometry,
    seg: &SegmentFrame,
    mut state: ReconState,
    mut plan: Vec<Illumination>,
    recon_cfg: &ReconConfig,
    annealer_cfg: &AnnealerConfig,
    per_led: &PerLedConfig,
    passes: usize,
) -> Result<PerLedResult> {
    let started = Instant::now();
    if per_led.iters_per_led == 0 {
        return Err(FpmError::Config("per-LED search needs at least one evaluation".into()));
    }
    let half = per_led.half_width(geom, seg)?;
    // keep every candidate tile inside the HR spectrum
    let reach = ((seg.hr_size - seg.lr_size) / 2) as f64 - 0.5;
    let mut n_cost_evals = 0;

    for pass in 0..passes {
        state.object_max = state.object_spectrum.max_abs();
        let mut cost = 0.0;
        for (idx, ill) in plan.iter_mut().enumerate() {
            let captured = stack.get(ill.led)?;
            let (r0, c0) = ill.wave_vector.pixel_offset(seg);
            let bounds = vec![
                ((r0 - half).max(-reach), (r0 + half).min(reach)),
                ((c0 - half).max(-reach), (c0 + half).min(reach)),
            ];
            if bounds.iter().any(|&(lo, hi)| !(lo < hi)) {
                return Err(FpmError::OutOfBand(format!(
                    "LED {} has no in-band search box",
                    ill.led
                )));
            }
            let cfg = AnnealerConfig {
                bounds,
                max_iters: per_led.iters_per_led,
                seed: mix_seed(annealer_cfg.seed, pass as u64, idx as u64),
                ..annealer_cfg.clone()
            };
            let state_ref = &state;
            let annealed = sa_minimize(
                |v| e1_cost(state_ref, captured, WaveVector::from_pixel_offset(v[0], v[1], seg)),
                &[r0, c0],
                &cfg,
            )?;
            n_cost_evals += annealed.evaluations();
            state.forward_syntheses += annealed.evaluations();
            ill.wave_vector = WaveVector::from_pixel_offset(annealed.argmin[0], annealed.argmin[1], seg);
            cost += update_led(&mut state, captured, ill.wave_vector, recon_cfg)?;
        }
        state.iter += 1;
        state.cost_history.push(cost);
    }

    Ok(PerLedResult {
        plan,
        n_cost_evals,
        n_forward_syntheses: state.forward_syntheses,
        state,
        wall_time: started.elapsed().as_secs_f64(),
    })
}
