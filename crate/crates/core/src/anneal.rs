//! Bounded simulated annealing over a small real vector.
//!
//! Costs are normalized by the cost of the starting point so that the
//! temperature and the termination tolerance are scale free.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{FpmError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnealerConfig {
    /// Per-dimension `[lo, hi]`.
    pub bounds: Vec<(f64, f64)>,
    /// In units of the normalized cost.
    pub initial_temperature: f64,
    pub cooling_rate: f64,
    /// Proposal standard deviation at `T0`, as a fraction of each range.
    pub step_scale: f64,
    /// Stop once the mean relative cost difference between the last
    /// `window` proposals and the point they were proposed from drops below this.
    pub tol: f64,
    /// Cap on cost evaluations, the starting point included.
    pub max_iters: usize,
    pub window: usize,
    pub seed: u64,
}

impl AnnealerConfig {
    /// Defaults with the given box and seed.
    pub fn new(bounds: Vec<(f64, f64)>, seed: u64) -> Self {
        AnnealerConfig {
            bounds,
            initial_temperature: 0.1,
            cooling_rate: 0.95,
            step_scale: 0.25,
            tol: 1e-3,
            max_iters: 100,
            window: 10,
            seed,
        }
    }

    /// The symmetric box `[-half, half]^dims`.
    pub fn symmetric(half: f64, dims: usize, seed: u64) -> Self {
        Self::new(vec![(-half, half); dims], seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds.is_empty() {
            return Err(FpmError::Config("annealer needs at least one dimension".into()));
        }
        for (i, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(FpmError::Config(format!("bad bounds [{lo}, {hi}] for dimension {i}")));
            }
        }
        if !(self.cooling_rate > 0.0 && self.cooling_rate < 1.0) {
            return Err(FpmError::Config(format!(
                "cooling rate {} not in (0, 1)",
                self.cooling_rate
            )));
        }
        if !(self.tol > 0.0) {
            return Err(FpmError::Config("tolerance must be positive".into()));
        }
        if !(self.initial_temperature > 0.0 && self.step_scale > 0.0) {
            return Err(FpmError::Config("temperature and step scale must be positive".into()));
        }
        if self.max_iters == 0 || self.window == 0 {
            return Err(FpmError::Config("max_iters and window must be at least 1".into()));
        }
        Ok(())
    }

    fn contains(&self, v: &[f64]) -> bool {
        v.len() == self.bounds.len() && v.iter().zip(&self.bounds).all(|(&x, &(lo, hi))| lo <= x && x <= hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub point: Vec<f64>,
    /// Raw cost.
    pub cost: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annealed {
    pub argmin: Vec<f64>,
    pub min_cost: f64,
    /// One entry per cost evaluation; the first is the starting point.
    pub trace: Vec<TraceEntry>,
    /// Current (accepted) cost after each evaluation.
    pub accepted_costs: Vec<f64>,
}

impl Annealed {
    pub fn evaluations(&self) -> usize {
        self.trace.len()
    }
}

/// Minimizes `cost` over the box from `start`. `cost` must be non-negative
/// and finite; an error from it aborts the search.
pub fn sa_minimize<F>(mut cost: F, start: &[f64], cfg: &AnnealerConfig) -> Result<Annealed>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    cfg.validate()?;
    if !cfg.contains(start) {
        return Err(FpmError::Input(format!("start point {start:?} outside the search box")));
    }
    let c0 = cost(start)?;
    if !c0.is_finite() || c0 < 0.0 {
        return Err(FpmError::Input(format!("cost at the start point is {c0}")));
    }
    let scale = if c0 > 0.0 { c0 } else { 1.0 };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut current = start.to_vec();
    let mut current_cost = c0 / scale;
    let mut best = (current.clone(), c0);
    let mut trace = vec![TraceEntry {
        point: current.clone(),
        cost: c0,
        accepted: true,
    }];
    let mut accepted_costs = vec![current_cost];
    let mut changes = Vec::new();
    let mut temperature = cfg.initial_temperature;

    while trace.len() < cfg.max_iters {
        let sigma = cfg.step_scale * temperature / cfg.initial_temperature;
        let candidate: Vec<f64> = current
            .iter()
            .zip(&cfg.bounds)
            .map(|(&x, &(lo, hi))| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (x + z * sigma * (hi - lo)).clamp(lo, hi)
            })
            .collect();
        let c = cost(&candidate)?;
        if !c.is_finite() || c < 0.0 {
            return Err(FpmError::Input(format!("cost at {candidate:?} is {c}")));
        }
        let normalized = c / scale;
        let delta = normalized - current_cost;
        changes.push(relative_change(current_cost, normalized));
        let u: f64 = rand::Rng::random(&mut rng);
        let accepted = delta <= 0.0 || u < (-delta / temperature).exp();
        if c < best.1 {
            best = (candidate.clone(), c);
        }
        if accepted {
            current = candidate.clone();
            current_cost = normalized;
        }
        trace.push(TraceEntry {
            point: candidate,
            cost: c,
            accepted,
        });
        accepted_costs.push(current_cost);
        temperature *= cfg.cooling_rate;

        if changes.len() >= cfg.window {
            let mean_change = changes[changes.len() - cfg.window..].iter().sum::<f64>() / cfg.window as f64;
            if mean_change < cfg.tol {
                break;
            }
        }
    }

    Ok(Annealed {
        argmin: best.0,
        min_cost: best.1,
        trace,
        accepted_costs,
    })
}

fn relative_change(from: f64, to: f64) -> f64 {
    if from == to {
        0.0
    } else {
        (to - from).abs() / from.abs().max(to.abs())
    }
}

/// Splitmix-style mixing of a base seed with two stream labels, so that
/// neighbouring labels get unrelated streams.
pub(crate) fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
