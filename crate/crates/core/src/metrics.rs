//! Error measures against a known ground truth.
//!
//! A recovered complex field is only determined up to a global complex gain,
//! so amplitude errors are taken after the best scalar gain and phase errors
//! after removing the mean phase offset.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use ndarray::Zip;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{FpmError, Result};
use crate::field::{fft2_centered, ComplexField};
use crate::geometry::LedIndex;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldErrors {
    /// Root-mean-square amplitude error after the optimal gain.
    pub rmse_amplitude: f64,
    /// `rmse_amplitude` over the RMS truth amplitude.
    pub rmse_amplitude_rel: f64,
    /// Radians, after piston (and optionally tilt) removal.
    pub rmse_phase: f64,
    /// Decibels, peak truth amplitude over `rmse_amplitude`.
    pub psnr_amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub field: FieldErrors,
    pub final_data_misfit: Option<f64>,
    /// `(|dx_est - dx_true|, |dy_est - dy_true|)` in meters.
    pub shift_error: Option<(f64, f64)>,
    /// Meters.
    pub disorder_metric: Option<f64>,
}

impl EvalReport {
    pub fn new(field: FieldErrors) -> Self {
        EvalReport {
            field,
            final_data_misfit: None,
            shift_error: None,
            disorder_metric: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CompareOptions {
    /// Also remove the best integer-frequency phase ramp.
    pub remove_tilt: bool,
}

/// Compare a reconstruction with the truth on the same grid.
pub fn compare_fields(recon: &ComplexField, truth: &ComplexField, opts: CompareOptions) -> Result<FieldErrors> {
    if recon.dim() != truth.dim() {
        return Err(FpmError::Size(format!(
            "reconstruction {:?} vs truth {:?}",
            recon.dim(),
            truth.dim()
        )));
    }
    let n = recon.data.len() as f64;
    let a = recon.amplitude();
    let b = truth.amplitude();
    let aa = (&a * &a).sum();
    let gain = if aa > 0.0 { (&a * &b).sum() / aa } else { 0.0 };
    let sq = Zip::from(&a)
        .and(&b)
        .fold(0.0, |acc, &x, &y| acc + (gain * x - y).powi(2));
    let rmse_amplitude = (sq / n).sqrt();
    let truth_rms = ((&b * &b).sum() / n).sqrt();
    let peak = b.iter().cloned().fold(0.0, f64::max);

    let mut cross = Zip::from(&recon.data)
        .and(&truth.data)
        .map_collect(|&r, &t| r * t.conj());
    if opts.remove_tilt {
        remove_integer_tilt(&mut cross, recon.pitch);
    }
    let piston = cross.sum();
    let rot = if piston.norm() > 0.0 {
        piston.conj() / piston.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    let phase_sq = cross.iter().fold(0.0, |acc, z| acc + (z * rot).arg().powi(2));

    Ok(FieldErrors {
        rmse_amplitude,
        rmse_amplitude_rel: if truth_rms > 0.0 {
            rmse_amplitude / truth_rms
        } else {
            f64::INFINITY
        },
        rmse_phase: (phase_sq / n).sqrt(),
        psnr_amplitude: 20.0 * (peak / rmse_amplitude).log10(),
    })
}

fn remove_integer_tilt(cross: &mut ndarray::Array2<Complex64>, pitch: f64) {
    let (rows, cols) = cross.dim();
    let spectrum = fft2_centered(&ComplexField {
        data: cross.clone(),
        pitch,
    });
    let (mut best, mut at) = (-1.0, (rows / 2, cols / 2));
    for ((i, j), z) in spectrum.data.indexed_iter() {
        if z.norm_sqr() > best {
            best = z.norm_sqr();
            at = (i, j);
        }
    }
    let fr = at.0 as f64 - (rows / 2) as f64;
    let fc = at.1 as f64 - (cols / 2) as f64;
    for ((i, j), z) in cross.indexed_iter_mut() {
        let angle = -2.0 * PI * (fr * i as f64 / rows as f64 + fc * j as f64 / cols as f64);
        *z *= Complex64::from_polar(1.0, angle);
    }
}

/// Largest deviation of a nearest-neighbour LED spacing from `pitch`.
///
/// Only horizontally and vertically adjacent LEDs present in `positions`
/// are compared. Deviations below `1e-9 * pitch` are float rounding in the
/// position arithmetic and count as zero.
pub fn disorder_metric(positions: &BTreeMap<LedIndex, (f64, f64)>, pitch: f64) -> f64 {
    let floor = 1e-9 * pitch;
    let mut worst: f64 = 0.0;
    for (&led, &(x, y)) in positions {
        for next in [LedIndex::new(led.m + 1, led.n), LedIndex::new(led.m, led.n + 1)] {
            if let Some(&(x2, y2)) = positions.get(&next) {
                let dev = ((x2 - x).hypot(y2 - y) - pitch).abs();
                if dev > floor {
                    worst = worst.max(dev);
                }
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{led_position, LedGeometry};
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn textured(n: usize) -> ComplexField {
        let data = Array2::from_shape_fn((n, n), |(i, j)| {
            let amp = 1.0 + 0.3 * ((i as f64) * 0.4).sin() * ((j as f64) * 0.25).cos();
            Complex64::from_polar(amp, 0.8 * ((i + 2 * j) as f64 * 0.1).sin())
        });
        ComplexField::new(data, 1e-6).unwrap()
    }

    fn lattice(geom: &LedGeometry) -> BTreeMap<LedIndex, (f64, f64)> {
        geom.leds()
            .into_iter()
            .map(|l| (l, led_position(l, geom).unwrap()))
            .collect()
    }

    #[test]
    fn identical_fields_have_no_error() {
        let t = textured(16);
        let e = compare_fields(&t, &t, CompareOptions::default()).unwrap();
        assert!(e.rmse_amplitude < 1e-14 && e.rmse_phase < 1e-14);
        assert!(e.psnr_amplitude > 200.0);
    }

    #[test]
    fn gain_and_piston_are_ignored() {
        let t = textured(16);
        let g = Complex64::from_polar(2.7, -2.1);
        let r = ComplexField::new(t.data.mapv(|z| z * g), t.pitch).unwrap();
        let e = compare_fields(&r, &t, CompareOptions::default()).unwrap();
        assert!(e.rmse_amplitude < 1e-12, "{e:?}");
        assert!(e.rmse_phase < 1e-12, "{e:?}");
    }

    #[test]
    fn tilt_is_removed_only_on_request() {
        let t = textured(16);
        let r = ComplexField::new(
            Array2::from_shape_fn((16, 16), |(i, j)| {
                t.data[[i, j]] * Complex64::from_polar(1.0, 2.0 * PI * (2.0 * i as f64 - 3.0 * j as f64) / 16.0)
            }),
            t.pitch,
        )
        .unwrap();
        let plain = compare_fields(&r, &t, CompareOptions::default()).unwrap();
        let tilted = compare_fields(&r, &t, CompareOptions { remove_tilt: true }).unwrap();
        assert!(plain.rmse_phase > 1.0);
        assert!(tilted.rmse_phase < 1e-9, "{tilted:?}");
    }

    #[test]
    fn amplitude_noise_shows_up_as_its_sigma() {
        let sigma = 0.02;
        let t = ComplexField::from_amplitude_phase(
            &Array2::from_elem((64, 64), 1.0),
            &Array2::from_shape_fn((64, 64), |(i, j)| ((i * j) as f64 * 0.01).sin()),
            1e-6,
        )
        .unwrap();
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let normal = Normal::new(0.0, sigma).unwrap();
            let noisy = t.data.mapv(|z| z * (1.0 + normal.sample(&mut rng)));
            let e = compare_fields(
                &ComplexField::new(noisy, t.pitch).unwrap(),
                &t,
                CompareOptions::default(),
            )
            .unwrap();
            assert!(
                (e.rmse_amplitude - sigma).abs() < 0.1 * sigma,
                "seed {seed}: {}",
                e.rmse_amplitude
            );
        }
    }

    #[test]
    fn mismatched_dims() {
        assert!(compare_fields(&textured(8), &textured(16), CompareOptions::default()).is_err());
    }

    #[test]
    fn perfect_and_translated_lattices_are_ordered() {
        let g = LedGeometry::reference();
        assert_eq!(disorder_metric(&lattice(&g), g.pitch), 0.0);
        for &(dx, dy) in &[(1.5e-3, -1e-3), (-3.99e-3, 2.2e-3), (1e-7, 4e-3)] {
            let shifted = g.with_shift(dx, dy).unwrap();
            assert_eq!(disorder_metric(&lattice(&shifted), g.pitch), 0.0);
        }
    }

    #[test]
    fn one_displaced_led() {
        let g = LedGeometry::reference();
        let mut p = lattice(&g);
        p.get_mut(&LedIndex::new(2, -3)).unwrap().0 += 0.7e-3;
        assert!((disorder_metric(&p, g.pitch) - 0.7e-3).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn shifted_lattice_is_never_disordered(pitch in 1e-3f64..1e-2, fx in -1.0f64..1.0, fy in -1.0f64..1.0,
                                                    half in 1i32..9) {
                let g = LedGeometry::new(pitch, 0.1, half, 629e-9).unwrap().with_shift(fx * pitch, fy * pitch).unwrap();
                prop_assert_eq!(disorder_metric(&lattice(&g), pitch), 0.0);
            }

            #[test]
            fn errors_ignore_gain_and_piston(gain in 0.1f64..10.0, phase in -3.1f64..3.1) {
                let t = textured(12);
                let g = Complex64::from_polar(gain, phase);
                let r = ComplexField::new(t.data.mapv(|z| z * g), t.pitch).unwrap();
                let e = compare_fields(&r, &t, CompareOptions::default()).unwrap();
                prop_assert!(e.rmse_amplitude < 1e-10 && e.rmse_phase < 1e-10);
            }
        }
    }
}
