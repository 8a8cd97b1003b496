//! Run configuration. Every physical quantity carries its unit in the key.

use std::path::{Path, PathBuf};

use fpm_core::anneal::AnnealerConfig;
use fpm_core::correction::PerLedConfig;
use fpm_core::forward::NoiseSpec;
use fpm_core::geometry::{LedGeometry, SegmentFrame};
use fpm_core::recon::{LedOrder, ReconConfig};
use fpm_core::{FpmError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub lambda_nm: f64,
    pub d_mm: f64,
    pub s_mm: f64,
    /// LEDs along one side of the square array; must be odd.
    pub leds_per_side: usize,
    /// Global shift of the array used when simulating.
    pub shift_mm: [f64; 2],
    pub objective_na: f64,
    pub camera_pixel_um: f64,
    pub magnification: f64,
    pub segment: SegmentSection,
    pub recon: ReconSection,
    pub annealer: AnnealerSection,
    pub per_led: PerLedConfig,
    pub noise: NoiseSection,
    pub object: ObjectSection,
    pub paths: PathsSection,
    /// Seeds the synthetic object, the noise and the annealer.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentSection {
    pub center_um: [f64; 2],
    pub lr_size: usize,
    pub hr_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconSection {
    pub delta1: f64,
    pub delta2: f64,
    pub max_iters: usize,
    pub inner_iters: usize,
    pub led_order: LedOrder,
    pub pupil_support_dilation_px: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealerSection {
    pub initial_temperature: f64,
    pub cooling_rate: f64,
    pub step_scale: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    /// Gaussian noise relative to each image's mean.
    pub gaussian_rel: f64,
    pub poisson_photons: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectSection {
    /// Grayscale image for the amplitude; a random object is used when unset.
    pub amplitude_path: Option<PathBuf>,
    pub phase_path: Option<PathBuf>,
    pub phase_range_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub stack_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            lambda_nm: 629.0,
            d_mm: 4.0,
            s_mm: 113.5,
            leds_per_side: 17,
            shift_mm: [0.0, 0.0],
            objective_na: 0.1,
            camera_pixel_um: 6.5,
            magnification: 4.0,
            segment: SegmentSection::default(),
            recon: ReconSection::default(),
            annealer: AnnealerSection::default(),
            per_led: PerLedConfig::default(),
            noise: NoiseSection::default(),
            object: ObjectSection::default(),
            paths: PathsSection::default(),
            seed: 0,
        }
    }
}

impl Default for SegmentSection {
    fn default() -> Self {
        SegmentSection {
            center_um: [0.0, 0.0],
            lr_size: 128,
            hr_size: 512,
        }
    }
}

impl Default for ReconSection {
    fn default() -> Self {
        let r = ReconConfig::default();
        ReconSection {
            delta1: r.delta1,
            delta2: r.delta2,
            max_iters: r.max_iters,
            inner_iters: r.inner_iters,
            led_order: r.led_order,
            pupil_support_dilation_px: r.pupil_support_dilation,
        }
    }
}

impl Default for AnnealerSection {
    fn default() -> Self {
        let a = AnnealerConfig::new(vec![(-1.0, 1.0); 2], 0);
        AnnealerSection {
            initial_temperature: a.initial_temperature,
            cooling_rate: a.cooling_rate,
            step_scale: a.step_scale,
            tol: a.tol,
            max_iters: a.max_iters,
            window: a.window,
        }
    }
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection {
            gaussian_rel: 0.0,
            poisson_photons: None,
        }
    }
}

impl Default for ObjectSection {
    fn default() -> Self {
        ObjectSection {
            amplitude_path: None,
            phase_path: None,
            phase_range_rad: 2.0,
        }
    }
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection {
            stack_dir: PathBuf::from("stack"),
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Reads a config; relative paths inside it are resolved against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| FpmError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| FpmError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.paths.stack_dir);
        resolve(&mut cfg.paths.out_dir);
        if let Some(p) = cfg.object.amplitude_path.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.object.phase_path.as_mut() {
            resolve(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.leds_per_side.is_multiple_of(2) {
            return Err(FpmError::Config(format!(
                "leds_per_side must be odd, got {}",
                self.leds_per_side
            )));
        }
        self.geometry()?;
        self.segment()?;
        self.recon().validate()?;
        self.annealer(1.0).validate()?;
        Ok(())
    }

    /// Nominal geometry, without the simulated shift.
    pub fn geometry(&self) -> Result<LedGeometry> {
        LedGeometry::new(
            self.d_mm * 1e-3,
            self.s_mm * 1e-3,
            (self.leds_per_side / 2) as i32,
            self.lambda_nm * 1e-9,
        )
    }

    /// Geometry with `shift_mm` applied.
    pub fn true_geometry(&self) -> Result<LedGeometry> {
        self.geometry()?
            .with_shift(self.shift_mm[0] * 1e-3, self.shift_mm[1] * 1e-3)
    }

    pub fn segment(&self) -> Result<SegmentFrame> {
        if !(self.magnification > 0.0) {
            return Err(FpmError::Config(format!(
                "magnification must be positive, got {}",
                self.magnification
            )));
        }
        SegmentFrame::new(
            (self.segment.center_um[0] * 1e-6, self.segment.center_um[1] * 1e-6),
            self.segment.lr_size,
            self.segment.hr_size,
            self.camera_pixel_um * 1e-6 / self.magnification,
        )
    }

    pub fn recon(&self) -> ReconConfig {
        ReconConfig {
            delta1: self.recon.delta1,
            delta2: self.recon.delta2,
            max_iters: self.recon.max_iters,
            inner_iters: self.recon.inner_iters,
            led_order: self.recon.led_order,
            pupil_support_dilation: self.recon.pupil_support_dilation_px,
        }
    }

    /// Annealer over `[-half, half]^2`; the searches replace the box anyway.
    pub fn annealer(&self, half: f64) -> AnnealerConfig {
        let a = &self.annealer;
        AnnealerConfig {
            bounds: vec![(-half, half); 2],
            initial_temperature: a.initial_temperature,
            cooling_rate: a.cooling_rate,
            step_scale: a.step_scale,
            tol: a.tol,
            max_iters: a.max_iters,
            window: a.window,
            seed: self.seed,
        }
    }

    pub fn noise(&self) -> NoiseSpec {
        NoiseSpec {
            gaussian_rel: self.noise.gaussian_rel,
            poisson_photons: self.noise.poisson_photons,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_setup() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.geometry().unwrap(), LedGeometry::reference());
        assert_eq!(cfg.segment().unwrap(), SegmentFrame::reference());
        assert_eq!(cfg.recon(), ReconConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"d": 4.0}"#).unwrap_err();
        assert!(err.to_string().contains("unknown field"), "{err}");
        let err = serde_json::from_str::<RunConfig>(r#"{"recon": {"iters": 3}}"#).unwrap_err();
        assert!(err.to_string().contains("unknown field"), "{err}");
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"shift_mm": [1.5, -1.0], "recon": {"max_iters": 3}, "per_led": {"search_px": 2.0}}"#,
        )
        .unwrap();
        assert_eq!(cfg.recon.max_iters, 3);
        assert_eq!(cfg.per_led.iters_per_led, 20);
        assert_eq!(cfg.per_led.search_px, Some(2.0));
        assert_eq!(cfg.recon.inner_iters, 5);
        let g = cfg.true_geometry().unwrap();
        assert!((g.shift.0 - 1.5e-3).abs() < 1e-15 && (g.shift.1 + 1e-3).abs() < 1e-15);
    }

    #[test]
    fn load_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"paths": {"stack_dir": "s", "out_dir": "/abs/o"}}"#).unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.paths.stack_dir, dir.path().join("s"));
        assert_eq!(cfg.paths.out_dir, PathBuf::from("/abs/o"));
    }

    #[test]
    fn even_array_is_a_config_error() {
        let cfg = RunConfig {
            leds_per_side: 16,
            ..RunConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(FpmError::Config(_))));
    }
}
