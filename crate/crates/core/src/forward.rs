//! Coherent forward imaging model and synthetic dataset generation.
//!
//! An LED at wave vector `k` shifts the object spectrum by `k`; the objective
//! passes a disk of radius `2*pi*NA/lambda`; the camera records the squared
//! modulus. In the sampled model the shift is rounded to the nearest spectral
//! pixel and the pupil-filtered tile is cut straight out of the HR spectrum.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anneal::mix_seed;
use crate::error::{FpmError, Result};
use crate::field::{self, fft2_centered, ifft2_centered, ComplexField, IntensityImage};
use crate::geometry::{wave_vector, LedGeometry, LedIndex, SegmentFrame, WaveVector};

/// Coherent transfer function sampled on the LR spectral grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Pupil {
    pub mask: ComplexField,
    pub na: f64,
    pub cutoff_radius_px: f64,
}

impl Pupil {
    /// Boolean disk of radius `cutoff_radius_px + dilation` around DC.
    pub fn support(&self, dilation: f64) -> Array2<bool> {
        let (rows, cols) = self.mask.dim();
        disk(rows, cols, self.cutoff_radius_px + dilation)
    }

    pub fn size(&self) -> usize {
        self.mask.dim().0
    }

    /// Pointwise product with an LR spectrum.
    pub fn apply(&self, spectrum: &ComplexField) -> ComplexField {
        ComplexField {
            data: &spectrum.data * &self.mask.data,
            pitch: spectrum.pitch,
        }
    }
}

fn disk(rows: usize, cols: usize, radius: f64) -> Array2<bool> {
    let (cr, cc) = ((rows / 2) as f64, (cols / 2) as f64);
    let r2 = radius * radius;
    Array2::from_shape_fn((rows, cols), |(i, j)| {
        let (di, dj) = (i as f64 - cr, j as f64 - cc);
        di * di + dj * dj <= r2
    })
}

/// Ideal binary pupil of an objective with numerical aperture `na`.
pub fn make_ideal_pupil(lr_size: usize, lr_pitch: f64, na: f64, wavelength: f64) -> Result<Pupil> {
    if !(na > 0.0 && na < 1.0) {
        return Err(FpmError::Config(format!("objective NA must lie in (0, 1), got {na}")));
    }
    if lr_size == 0 || !(lr_pitch > 0.0) || !(wavelength > 0.0) {
        return Err(FpmError::Config(
            "pupil grid needs positive size, pitch and wavelength".into(),
        ));
    }
    let radius = na * lr_size as f64 * lr_pitch / wavelength;
    if radius < 1.0 {
        return Err(FpmError::Config(format!(
            "pupil cutoff radius {radius:.3} px is below one spectral pixel"
        )));
    }
    if radius >= (lr_size / 2) as f64 {
        return Err(FpmError::Config(format!(
            "pupil cutoff radius {radius:.2} px does not fit a {lr_size} px grid"
        )));
    }
    if radius > (lr_size / 4) as f64 {
        log::warn!(
            "captured images are undersampled: intensity band {:.1} px exceeds the {} px Nyquist limit",
            2.0 * radius,
            lr_size / 2
        );
    }
    let mask = disk(lr_size, lr_size, radius).mapv(|inside| {
        if inside {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::default()
        }
    });
    Ok(Pupil {
        mask: ComplexField::new(mask, lr_pitch)?,
        na,
        cutoff_radius_px: radius,
    })
}

/// LR spectrum tile of `spectrum` seen under illumination `wv`, before the pupil.
pub fn spectrum_tile(spectrum: &ComplexField, wv: WaveVector, seg: &SegmentFrame) -> Result<ComplexField> {
    let (dr, dc) = wv.pixel_shift(seg);
    let n = seg.lr_size;
    let tile = field::window(&spectrum.data, n, n, -dr, -dc).ok_or_else(|| {
        FpmError::OutOfBand(format!(
            "tile shifted by ({dr}, {dc}) px leaves the {:?} HR spectrum",
            spectrum.dim()
        ))
    })?;
    Ok(ComplexField {
        data: tile.to_owned(),
        pitch: seg.lr_pitch,
    })
}

/// LR complex field from an LR spectrum cut out of an HR spectrum.
///
/// The `1/upsample^2` factor keeps field amplitudes on the object's scale.
pub fn lr_field(lr_spectrum: &ComplexField, seg: &SegmentFrame) -> ComplexField {
    let mut psi = ifft2_centered(lr_spectrum);
    let u2 = (seg.upsample() * seg.upsample()) as f64;
    psi.data.mapv_inplace(|z| z / u2);
    psi
}

/// Inverse of [`lr_field`].
pub fn lr_spectrum(lr_field: &ComplexField, seg: &SegmentFrame) -> ComplexField {
    let mut spec = fft2_centered(lr_field);
    let u2 = (seg.upsample() * seg.upsample()) as f64;
    spec.data.mapv_inplace(|z| z * u2);
    spec
}

/// Captured intensity for one LED given the precomputed HR object spectrum.
pub fn capture_from_spectrum(
    spectrum: &ComplexField,
    wv: WaveVector,
    pupil: &Pupil,
    seg: &SegmentFrame,
) -> Result<IntensityImage> {
    if pupil.size() != seg.lr_size {
        return Err(FpmError::Size(format!(
            "pupil grid {} vs LR tile {}",
            pupil.size(),
            seg.lr_size
        )));
    }
    let tile = spectrum_tile(spectrum, wv, seg)?;
    Ok(lr_field(&pupil.apply(&tile), seg).intensity())
}

pub fn simulate_capture(
    object_hr: &ComplexField,
    wv: WaveVector,
    pupil: &Pupil,
    seg: &SegmentFrame,
) -> Result<IntensityImage> {
    check_object(object_hr, seg)?;
    capture_from_spectrum(&fft2_centered(object_hr), wv, pupil, seg)
}

fn check_object(object_hr: &ComplexField, seg: &SegmentFrame) -> Result<()> {
    seg.validate()?;
    let (rows, cols) = object_hr.dim();
    if rows != seg.hr_size || cols != seg.hr_size {
        return Err(FpmError::Size(format!(
            "object is {rows}x{cols}, segment expects {0}x{0}",
            seg.hr_size
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Additive Gaussian noise, standard deviation relative to each image's mean.
    #[serde(default)]
    pub gaussian_rel: f64,
    /// Photon count at mean intensity for shot noise; `None` disables it.
    #[serde(default)]
    pub poisson_photons: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            gaussian_rel: 0.0,
            poisson_photons: None,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn gaussian(rel: f64, seed: u64) -> Self {
        NoiseSpec {
            gaussian_rel: rel,
            poisson_photons: None,
            seed,
        }
    }

    pub fn is_noiseless(&self) -> bool {
        self.gaussian_rel == 0.0 && self.poisson_photons.is_none()
    }

    fn rng_for(&self, led: LedIndex) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(mix_seed(self.seed, led.m as i64 as u64, led.n as i64 as u64))
    }

    pub fn apply(&self, led: LedIndex, image: &mut IntensityImage) -> Result<()> {
        if self.is_noiseless() {
            return Ok(());
        }
        let mut rng = self.rng_for(led);
        let mean = image.mean();
        if let Some(photons) = self.poisson_photons {
            if !(photons > 0.0) || mean <= 0.0 {
                return Err(FpmError::Config(format!("invalid photon count {photons}")));
            }
            let scale = photons / mean;
            for v in image.data.iter_mut() {
                let lambda = *v * scale;
                if lambda > 0.0 {
                    let draw: f64 = Poisson::new(lambda)
                        .map_err(|e| FpmError::Config(e.to_string()))?
                        .sample(&mut rng);
                    *v = draw / scale;
                }
            }
        }
        if self.gaussian_rel > 0.0 {
            let normal = Normal::new(0.0, self.gaussian_rel * mean).map_err(|e| FpmError::Config(e.to_string()))?;
            for v in image.data.iter_mut() {
                *v = (*v + normal.sample(&mut rng)).max(0.0);
            }
        }
        Ok(())
    }
}

/// Ordered LR captures of one segment plus the geometry believed at capture time.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionStack {
    pub images: BTreeMap<LedIndex, IntensityImage>,
    pub geometry: LedGeometry,
    pub segment: SegmentFrame,
    pub objective_na: f64,
    /// Ground-truth global shift, known only for synthetic data.
    pub true_shift: Option<(f64, f64)>,
}

impl AcquisitionStack {
    pub fn get(&self, led: LedIndex) -> Result<&IntensityImage> {
        self.images
            .get(&led)
            .ok_or_else(|| FpmError::Input(format!("no capture for LED {led}")))
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.segment.validate()?;
        let n = self.segment.lr_size;
        for led in self.geometry.leds() {
            let img = self.get(led)?;
            if img.dim() != (n, n) {
                return Err(FpmError::Size(format!(
                    "capture {led} is {:?}, expected {n}x{n}",
                    img.dim()
                )));
            }
            if (img.pitch - self.segment.lr_pitch).abs() > 1e-9 * self.segment.lr_pitch {
                return Err(FpmError::Input(format!("capture {led} has pitch {}", img.pitch)));
            }
        }
        Ok(())
    }

    pub fn max_intensity(&self) -> f64 {
        self.images.values().map(IntensityImage::max).fold(0.0, f64::max)
    }
}

/// Simulate every LED of the grid under `geom_true`; record `geom_nominal`
/// (with its shift zeroed) as the geometry the reconstruction will believe.
pub fn generate_dataset(
    object_hr: &ComplexField,
    geom_true: &LedGeometry,
    geom_nominal: &LedGeometry,
    seg: &SegmentFrame,
    pupil: &Pupil,
    noise: &NoiseSpec,
) -> Result<AcquisitionStack> {
    geom_true.validate()?;
    let illum = geom_true
        .leds()
        .into_iter()
        .map(|led| Ok((led, wave_vector(led, geom_true, seg)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut stack = generate_dataset_from(object_hr, &illum, geom_nominal, seg, pupil, noise)?;
    stack.true_shift = Some(geom_true.shift);
    Ok(stack)
}

/// Like [`generate_dataset`] with an explicit wave vector per LED, e.g. for
/// LEDs that do not sit on a rigid lattice. `true_shift` is left unset.
pub fn generate_dataset_from(
    object_hr: &ComplexField,
    illumination: &[(LedIndex, WaveVector)],
    geom_nominal: &LedGeometry,
    seg: &SegmentFrame,
    pupil: &Pupil,
    noise: &NoiseSpec,
) -> Result<AcquisitionStack> {
    check_object(object_hr, seg)?;
    let spectrum = fft2_centered(object_hr);
    let captures: Result<Vec<(LedIndex, IntensityImage)>> = illumination
        .par_iter()
        .map(|&(led, wv)| {
            let mut img = capture_from_spectrum(&spectrum, wv, pupil, seg)?;
            noise.apply(led, &mut img)?;
            Ok((led, img))
        })
        .collect();
    let mut believed = *geom_nominal;
    believed.shift = (0.0, 0.0);
    Ok(AcquisitionStack {
        images: captures?.into_iter().collect(),
        geometry: believed,
        segment: *seg,
        objective_na: pupil.na,
        true_shift: None,
    })
}

/// Largest NA such that a disk of that radius in the object spectrum is
/// fully covered by the pupils of all LEDs of `geom`.
pub fn synthesized_na(geom: &LedGeometry, seg: &SegmentFrame, objective_na: f64) -> Result<f64> {
    let h = geom.grid_half;
    if h == 0 {
        return Ok(objective_na);
    }
    let mut reach = f64::INFINITY;
    for led in geom.leds().into_iter().filter(|l| l.ring() == h) {
        let wv = wave_vector(led, geom, seg)?;
        // Chebyshev extent of the boundary LED; the hull of the boundary
        // wave vectors contains the square of the smallest such extent
        let extent = wv.kx.abs().max(wv.ky.abs()) * geom.wavelength / (2.0 * PI);
        reach = reach.min(extent);
    }
    Ok(objective_na + reach)
}

/// Zero every spectral component of `object` beyond `na` (direction sine).
pub fn band_limit(object: &ComplexField, na: f64, wavelength: f64) -> ComplexField {
    let (rows, cols) = object.dim();
    let radius = na * cols as f64 * object.pitch / wavelength;
    let keep = disk(rows, cols, radius);
    let mut spec = fft2_centered(object);
    ndarray::Zip::from(&mut spec.data).and(&keep).for_each(|z, &k| {
        if !k {
            *z = Complex64::default();
        }
    });
    ifft2_centered(&spec)
}

/// Gaussian-filtered white noise normalized to `[0, 1]`.
fn smooth_noise(rows: usize, cols: usize, corr_px: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let white = Array2::from_shape_fn((rows, cols), |_| Complex64::new(rng.random_range(-1.0..1.0), 0.0));
    let mut spec = fft2_centered(&ComplexField {
        data: white,
        pitch: 1.0,
    });
    let (cr, cc) = ((rows / 2) as f64, (cols / 2) as f64);
    // spatial correlation length corr_px <-> spectral width rows / (2 pi corr_px)
    let sr = rows as f64 / (2.0 * PI * corr_px);
    let sc = cols as f64 / (2.0 * PI * corr_px);
    for ((i, j), z) in spec.data.indexed_iter_mut() {
        let (u, v) = ((i as f64 - cr) / sr, (j as f64 - cc) / sc);
        *z *= (-(u * u + v * v) / 2.0).exp();
    }
    let smooth = ifft2_centered(&spec).data.mapv(|z| z.re);
    let (lo, hi) = smooth.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    smooth.mapv(|v| (v - lo) / (hi - lo).max(f64::MIN_POSITIVE))
}

/// Random complex test object: amplitude in roughly `[0.4, 1.0]`, phase
/// spanning `phase_range` radians, band-limited to `band_na`.
pub fn synthetic_object(
    seg: &SegmentFrame,
    wavelength: f64,
    band_na: f64,
    phase_range: f64,
    seed: u64,
) -> Result<ComplexField> {
    seg.validate()?;
    let n = seg.hr_size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // features a few HR pixels wide so that dark-field LEDs carry signal
    let fine = smooth_noise(n, n, 1.5, &mut rng);
    let coarse = smooth_noise(n, n, 12.0, &mut rng);
    let phase_noise = smooth_noise(n, n, 3.0, &mut rng);
    let amplitude = (0.5 * &fine + 0.5 * &coarse).mapv(|v| 0.4 + 0.6 * v);
    let phase = phase_noise.mapv(|v| phase_range * (v - 0.5));
    let object = ComplexField::from_amplitude_phase(&amplitude, &phase, seg.hr_pitch())?;
    Ok(band_limit(&object, band_na, wavelength))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::square_range;

    fn small_segment() -> SegmentFrame {
        // 32 px LR tiles, 4x upsampling, 32*1.625um FOV
        SegmentFrame::new((0.0, 0.0), 32, 128, 1.625e-6).unwrap()
    }

    #[test]
    fn reference_pupil_radius() {
        let seg = SegmentFrame::reference();
        let p = make_ideal_pupil(512, seg.hr_pitch(), 0.1, 629e-9).unwrap();
        let expect = 0.1 * 512.0 * 0.40625e-6 / 629e-9;
        assert!((p.cutoff_radius_px - expect).abs() < 1e-12);
        assert!((p.cutoff_radius_px - 33.07).abs() < 0.01);
        assert_eq!(p.mask.data[(256, 256)], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn pupil_config_errors() {
        assert!(matches!(
            make_ideal_pupil(128, 1.625e-6, 0.99, 629e-9),
            Err(FpmError::Config(_))
        ));
        assert!(make_ideal_pupil(8, 1e-8, 0.1, 629e-9).is_err());
        assert!(make_ideal_pupil(128, 1.625e-6, 0.0, 629e-9).is_err());
    }

    #[test]
    fn pupil_is_idempotent() {
        let seg = small_segment();
        let p = make_ideal_pupil(32, seg.lr_pitch, 0.1, 629e-9).unwrap();
        let spec = fft2_centered(&synthetic_object(&seg, 629e-9, 0.3, 1.0, 1).unwrap());
        let tile = spectrum_tile(&spec, WaveVector::ZERO, &seg).unwrap();
        let once = p.apply(&tile);
        assert_eq!(p.apply(&once), once);
    }

    #[test]
    fn uniform_object_gives_uniform_intensity() {
        let seg = small_segment();
        let a = Complex64::from_polar(0.8, 0.3);
        let obj = ComplexField::new(Array2::from_elem((128, 128), a), seg.hr_pitch()).unwrap();
        let p = make_ideal_pupil(32, seg.lr_pitch, 0.1, 629e-9).unwrap();
        let img = simulate_capture(&obj, WaveVector::ZERO, &p, &seg).unwrap();
        assert!(img.data.iter().all(|v| (v - 0.64).abs() < 1e-12));
    }

    #[test]
    fn oblique_light_drops_tone_outside_pupil() {
        let seg = small_segment();
        let p = make_ideal_pupil(32, seg.lr_pitch, 0.1, 629e-9).unwrap();
        // radius = 0.1*32*1.625e-6/629e-9 = 8.27 px; tone at +7 columns
        let n = 128;
        let tone = 7.0;
        let obj = Array2::from_shape_fn((n, n), |(_, j)| {
            Complex64::new(1.0, 0.0) + Complex64::from_polar(0.2, 2.0 * PI * tone * j as f64 / n as f64)
        });
        let obj = ComplexField::new(obj, seg.hr_pitch()).unwrap();

        // on-axis: both DC and the tone pass -> intensity modulated
        let img = simulate_capture(&obj, WaveVector::ZERO, &p, &seg).unwrap();
        let spread = img.max() - img.data.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread > 0.5);

        // illumination shifting the spectrum by +3 px moves the tone to +10 > 8.27,
        // while DC (at +3) stays inside: uniform image
        let wv = WaveVector::from_pixel_offset(0.0, 3.0, &seg);
        let inside = |k: f64| k.abs() <= p.cutoff_radius_px;
        assert!(inside(3.0) && !inside(10.0));
        let img = simulate_capture(&obj, wv, &p, &seg).unwrap();
        assert!(img.data.iter().all(|v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn pupil_is_non_expansive() {
        let seg = small_segment();
        let p = make_ideal_pupil(32, seg.lr_pitch, 0.1, 629e-9).unwrap();
        let obj = synthetic_object(&seg, 629e-9, 0.5, 2.0, 4).unwrap();
        let spec = fft2_centered(&obj);
        for off in [0.0, 4.0, 9.0] {
            let wv = WaveVector::from_pixel_offset(-off, off, &seg);
            let tile = spectrum_tile(&spec, wv, &seg).unwrap();
            let unfiltered = lr_field(&tile, &seg).energy();
            let filtered = capture_from_spectrum(&spec, wv, &p, &seg).unwrap().data.sum();
            assert!(filtered <= unfiltered * (1.0 + 1e-12));
        }
    }

    #[test]
    fn out_of_band_tile() {
        let seg = small_segment();
        let p = make_ideal_pupil(32, seg.lr_pitch, 0.1, 629e-9).unwrap();
        let obj = ComplexField::zeros(128, 128, seg.hr_pitch()).unwrap();
        let wv = WaveVector::from_pixel_offset(0.0, 49.0, &seg);
        assert!(matches!(
            simulate_capture(&obj, wv, &p, &seg),
            Err(FpmError::OutOfBand(_))
        ));
        let wv = WaveVector::from_pixel_offset(0.0, 48.0, &seg);
        assert!(simulate_capture(&obj, wv, &p, &seg).is_ok());
    }

    #[test]
    fn mirrored_leds_match_for_real_object() {
        let seg = small_segment();
        let g = LedGeometry::new(4e-3, 113.5e-3, 2, 629e-9).unwrap();
        let p = make_ideal_pupil(32, seg.lr_pitch, 0.1, 629e-9).unwrap();
        let obj = synthetic_object(&seg, 629e-9, 0.3, 0.0, 8).unwrap();
        // conjugate-symmetric spectrum needs a real object
        let obj = ComplexField {
            data: obj.data.mapv(|z| Complex64::new(z.re, 0.0)),
            pitch: obj.pitch,
        };
        for led in square_range(2) {
            let a = simulate_capture(&obj, wave_vector(led, &g, &seg).unwrap(), &p, &seg).unwrap();
            let mirror = LedIndex::new(-led.m, -led.n);
            let b = simulate_capture(&obj, wave_vector(mirror, &g, &seg).unwrap(), &p, &seg).unwrap();
            // the mirrored capture is the complex conjugate field
            for (v, w) in a.data.iter().zip(b.data.iter()) {
                assert!((v - w).abs() < 1e-10 * (1.0 + v.abs()), "{led}");
            }
        }
    }

    #[test]
    fn intensity_band_is_twice_pupil() {
        let seg = small_segment();
        let p = make_ideal_pupil(32, seg.lr_pitch, 0.05, 629e-9).unwrap();
        let obj = synthetic_object(&seg, 629e-9, 0.4, 2.0, 3).unwrap();
        let img = simulate_capture(&obj, WaveVector::from_pixel_offset(1.0, -2.0, &seg), &p, &seg).unwrap();
        let as_field = ComplexField {
            data: img.data.mapv(|v| Complex64::new(v, 0.0)),
            pitch: img.pitch,
        };
        let spec = fft2_centered(&as_field);
        let outside = disk(32, 32, 2.0 * p.cutoff_radius_px).mapv(|b| !b);
        let total: f64 = spec.data.iter().map(|z| z.norm_sqr()).sum();
        let out: f64 = spec
            .data
            .iter()
            .zip(outside.iter())
            .filter(|(_, o)| **o)
            .map(|(z, _)| z.norm_sqr())
            .sum();
        assert!(out / total < 1e-6);
    }

    #[test]
    fn dataset_zero_shift_matches_nominal() {
        let seg = small_segment();
        let g = LedGeometry::new(4e-3, 113.5e-3, 2, 629e-9).unwrap();
        let p = make_ideal_pupil(32, seg.lr_pitch, 0.1, 629e-9).unwrap();
        let obj = synthetic_object(&seg, 629e-9, 0.3, 1.0, 2).unwrap();
        let stack = generate_dataset(&obj, &g, &g, &seg, &p, &NoiseSpec::default()).unwrap();
        assert_eq!(stack.len(), 25);
        assert_eq!(stack.true_shift, Some((0.0, 0.0)));
        for (led, img) in &stack.images {
            let direct = simulate_capture(&obj, wave_vector(*led, &g, &seg).unwrap(), &p, &seg).unwrap();
            assert_eq!(img, &direct);
        }
        stack.validate().unwrap();
    }

    #[test]
    fn noisy_dataset_is_reproducible() {
        let seg = small_segment();
        let g = LedGeometry::new(4e-3, 113.5e-3, 2, 629e-9).unwrap();
        let truth = g.with_shift(1e-3, -0.5e-3).unwrap();
        let p = make_ideal_pupil(32, seg.lr_pitch, 0.1, 629e-9).unwrap();
        let obj = synthetic_object(&seg, 629e-9, 0.3, 1.0, 2).unwrap();
        let noise = NoiseSpec {
            gaussian_rel: 0.01,
            poisson_photons: Some(1e4),
            seed: 77,
        };
        let a = generate_dataset(&obj, &truth, &g, &seg, &p, &noise).unwrap();
        let b = generate_dataset(&obj, &truth, &g, &seg, &p, &noise).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.geometry.shift, (0.0, 0.0));
        assert_eq!(a.true_shift, Some((1e-3, -0.5e-3)));
        let clean = generate_dataset(&obj, &truth, &g, &seg, &p, &NoiseSpec::default()).unwrap();
        assert_ne!(a, clean);
        assert!(a.images.values().all(|i| i.data.iter().all(|v| *v >= 0.0)));
    }

    #[test]
    fn reference_synthesized_na() {
        let g = LedGeometry::reference();
        let na = synthesized_na(&g, &SegmentFrame::reference(), 0.1).unwrap();
        let edge = 32.0 / (2.0 * 32.0f64 * 32.0 + 113.5 * 113.5).sqrt();
        assert!((na - (0.1 + edge)).abs() < 1e-12);
    }
}
