//! Correction + reconstruction runs shared by `reconstruct`, `correct` and `bench`.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use clap::ValueEnum;
use fpm_core::correction::{
    mc_correct, refine_local, sa_correct_per_led, CorrectionResult, PerLedConfig, PerLedResult,
};
use fpm_core::field::ComplexField;
use fpm_core::forward::AcquisitionStack;
use fpm_core::geometry::{led_position, source_position, LedGeometry, LedIndex, SegmentFrame};
use fpm_core::metrics::{compare_fields, disorder_metric, CompareOptions, EvalReport};
use fpm_core::recon::{data_misfit, illuminations, reconstruct_plan, Illumination, ReconState};
use fpm_core::Result;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    None,
    Mcfpm,
    Sa,
    #[value(name = "mcfpm+local")]
    #[serde(rename = "mcfpm+local")]
    McfpmLocal,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::None, Mode::Sa, Mode::Mcfpm, Mode::McfpmLocal];
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::None => "none",
            Mode::Mcfpm => "mcfpm",
            Mode::Sa => "sa",
            Mode::McfpmLocal => "mcfpm+local",
        })
    }
}

/// Everything one method produced.
pub struct MethodRun {
    pub mode: Mode,
    pub object: ComplexField,
    pub state: ReconState,
    pub plan: Vec<Illumination>,
    pub correction: Option<CorrectionResult>,
    /// Global shift estimate; for per-LED runs the mean LED displacement.
    pub shift: (f64, f64),
    pub positions: BTreeMap<LedIndex, (f64, f64)>,
    pub n_cost_evals: usize,
    pub n_forward_syntheses: usize,
    /// Seconds, correction and final reconstruction together.
    pub wall_time: f64,
    pub final_data_misfit: f64,
}

/// One row of the benchmark table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Mode,
    pub wall_time_s: f64,
    pub n_cost_evals: usize,
    pub n_forward_syntheses: usize,
    pub shift_estimate_mm: [f64; 2],
    pub final_data_misfit: f64,
    pub rmse_amplitude: Option<f64>,
    pub rmse_amplitude_rel: Option<f64>,
    pub rmse_phase: Option<f64>,
    pub shift_error_mm: Option<[f64; 2]>,
    pub disorder_metric_mm: f64,
}

fn lattice(geom: &LedGeometry) -> Result<BTreeMap<LedIndex, (f64, f64)>> {
    geom.leds()
        .into_iter()
        .map(|l| Ok((l, led_position(l, geom)?)))
        .collect()
}

fn per_led_positions(
    r: &PerLedResult,
    geom: &LedGeometry,
    seg: &SegmentFrame,
) -> Result<BTreeMap<LedIndex, (f64, f64)>> {
    r.plan
        .iter()
        .map(|i| Ok((i.led, source_position(i.wave_vector, geom, seg)?)))
        .collect()
}

fn mean_displacement(positions: &BTreeMap<LedIndex, (f64, f64)>, nominal: &LedGeometry) -> Result<(f64, f64)> {
    let mut sum = (0.0, 0.0);
    for (&led, &(x, y)) in positions {
        let (x0, y0) = led_position(led, nominal)?;
        sum.0 += x - x0;
        sum.1 += y - y0;
    }
    let n = positions.len().max(1) as f64;
    Ok((sum.0 / n, sum.1 / n))
}

pub fn run_method(stack: &AcquisitionStack, cfg: &RunConfig, mode: Mode) -> Result<MethodRun> {
    let seg = stack.segment;
    let nominal = stack.geometry;
    let recon_cfg = cfg.recon();
    let annealer = cfg.annealer(nominal.pitch);
    let started = Instant::now();

    let (correction, per_led, geom) = match mode {
        Mode::None => (None, None, nominal),
        Mode::Sa => (
            None,
            Some(sa_correct_per_led(
                stack,
                &nominal,
                &seg,
                &recon_cfg,
                &annealer,
                &cfg.per_led,
            )?),
            nominal,
        ),
        Mode::Mcfpm | Mode::McfpmLocal => {
            let c = mc_correct(stack, &seg, &recon_cfg, &annealer)?;
            let geom = c.geometry(&nominal)?;
            let refined = if mode == Mode::McfpmLocal {
                let local = PerLedConfig {
                    iters_per_led: cfg.per_led.iters_per_led,
                    ..PerLedConfig::local()
                };
                Some(refine_local(stack, &geom, &seg, &recon_cfg, &annealer, &local)?)
            } else {
                None
            };
            (Some(c), refined, geom)
        }
    };

    // the per-LED baseline reconstructs while it searches; the others rerun
    // the full reconstruction with the corrected wave vectors
    let (state, plan, extra_evals, extra_syntheses) = match (&per_led, mode) {
        (Some(r), Mode::Sa) => (r.state.clone(), r.plan.clone(), r.n_cost_evals, 0),
        (Some(r), _) => {
            let rec = reconstruct_plan(stack, &r.plan, &recon_cfg, recon_cfg.max_iters)?;
            (rec.state, r.plan.clone(), r.n_cost_evals, r.n_forward_syntheses)
        }
        (None, _) => {
            let plan = illuminations(&geom.leds(), &geom, &seg, recon_cfg.led_order)?;
            let rec = reconstruct_plan(stack, &plan, &recon_cfg, recon_cfg.max_iters)?;
            (rec.state, plan, 0, 0)
        }
    };
    let wall_time = started.elapsed().as_secs_f64();

    let positions = match &per_led {
        Some(r) => per_led_positions(r, &geom, &seg)?,
        None => lattice(&geom)?,
    };
    let shift = match (&correction, mode) {
        (Some(c), Mode::Mcfpm) => c.shift,
        (None, Mode::None) => (0.0, 0.0),
        _ => mean_displacement(&positions, &nominal)?,
    };
    let n_cost_evals = correction.as_ref().map_or(0, |c| c.n_cost_evals) + extra_evals;
    let n_forward_syntheses =
        correction.as_ref().map_or(0, |c| c.n_forward_syntheses) + extra_syntheses + state.forward_syntheses;
    let mut probe = state.clone();
    let final_data_misfit = data_misfit(&mut probe, stack, &plan)?;

    Ok(MethodRun {
        mode,
        object: state.object(),
        state,
        plan,
        correction,
        shift,
        positions,
        n_cost_evals,
        n_forward_syntheses,
        wall_time,
        final_data_misfit,
    })
}

impl MethodRun {
    pub fn report(&self, stack: &AcquisitionStack, truth: Option<&ComplexField>) -> Result<Option<EvalReport>> {
        let Some(truth) = truth else { return Ok(None) };
        let mut report = EvalReport::new(compare_fields(&self.object, truth, CompareOptions::default())?);
        report.final_data_misfit = Some(self.final_data_misfit);
        report.shift_error = stack
            .true_shift
            .map(|(x, y)| ((self.shift.0 - x).abs(), (self.shift.1 - y).abs()));
        report.disorder_metric = Some(disorder_metric(&self.positions, stack.geometry.pitch));
        Ok(Some(report))
    }

    pub fn summary(&self, stack: &AcquisitionStack, truth: Option<&ComplexField>) -> Result<MethodSummary> {
        let report = self.report(stack, truth)?;
        let field = report.as_ref().map(|r| r.field);
        Ok(MethodSummary {
            method: self.mode,
            wall_time_s: self.wall_time,
            n_cost_evals: self.n_cost_evals,
            n_forward_syntheses: self.n_forward_syntheses,
            shift_estimate_mm: [self.shift.0 * 1e3, self.shift.1 * 1e3],
            final_data_misfit: self.final_data_misfit,
            rmse_amplitude: field.map(|f| f.rmse_amplitude),
            rmse_amplitude_rel: field.map(|f| f.rmse_amplitude_rel),
            rmse_phase: field.map(|f| f.rmse_phase),
            shift_error_mm: report
                .as_ref()
                .and_then(|r| r.shift_error)
                .map(|(x, y)| [x * 1e3, y * 1e3]),
            disorder_metric_mm: disorder_metric(&self.positions, stack.geometry.pitch) * 1e3,
        })
    }
}
