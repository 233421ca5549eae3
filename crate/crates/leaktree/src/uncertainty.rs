//! First-order error propagation for the single-pipe position
//! estimator: deterministic offset effect, Gaussian variance,
//! confidence intervals, and the Monte Carlo harness that validates
//! both against empirical scatter.
//!
//! Everything here truncates at first order. The exact estimator is
//! nonlinear through the resistance terms, so the formulas hold in the
//! small-noise regime; the Monte Carlo harness is the check that the
//! truncation is adequate at a given operating point.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as Gaussian};

use crate::error::{Error, Result};
use crate::hydraulics::{self, PhysicalConstants, PipeGeometry};
use crate::localization::{
    localize_single_pipe, LocalizeOptions, SinglePipeSnapshot, DEFAULT_DENOMINATOR_THRESHOLD,
};

/// Per-channel standard deviations of the four single-pipe channels.
/// Channels are independent. The flow sigmas apply equally to the leaf
/// inflows and to the oriented pipe flows (a sign flip does not change
/// a standard deviation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma_head_0: f64,
    pub sigma_head_1: f64,
    pub sigma_flow_0: f64,
    pub sigma_flow_1: f64,
}

impl NoiseSpec {
    pub fn uniform(sigma_head: f64, sigma_flow: f64) -> Self {
        Self {
            sigma_head_0: sigma_head,
            sigma_head_1: sigma_head,
            sigma_flow_0: sigma_flow,
            sigma_flow_1: sigma_flow,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for s in [self.sigma_head_0, self.sigma_head_1, self.sigma_flow_0, self.sigma_flow_1] {
            if s < 0.0 || !s.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "noise standard deviations must be non-negative, got {s}"
                )));
            }
        }
        Ok(())
    }

    /// Noise levels reported at the ends of a localized pipe.
    pub fn from_channel_sigmas(sigmas: &crate::localization::ChannelSigmas) -> Self {
        Self {
            sigma_head_0: sigmas.head_0,
            sigma_head_1: sigmas.head_1,
            sigma_flow_0: sigmas.flow_0,
            sigma_flow_1: sigmas.flow_1,
        }
    }

    /// Every channel sigma multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            sigma_head_0: self.sigma_head_0 * factor,
            sigma_head_1: self.sigma_head_1 * factor,
            sigma_flow_0: self.sigma_flow_0 * factor,
            sigma_flow_1: self.sigma_flow_1 * factor,
        }
    }
}

/// Constant measurement offsets of the four channels. The flow offsets
/// are expressed in the oriented pipe-flow frame: `delta_flow_0` shifts
/// `q_{0l}` (equal to the measured inflow at end 0) and `delta_flow_1`
/// shifts `q_{l1}` (equal to *minus* the measured inflow at end 1); use
/// [`OffsetSpec::from_leaf_offsets`] when starting from leaf channels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OffsetSpec {
    pub delta_head_0: f64,
    pub delta_head_1: f64,
    pub delta_flow_0: f64,
    pub delta_flow_1: f64,
}

impl OffsetSpec {
    /// Converts offsets on the leaf channels (inflow-positive at both
    /// ends) into the oriented frame used by the estimator.
    pub fn from_leaf_offsets(dh0: f64, dh1: f64, dq0: f64, dq1: f64) -> Self {
        Self { delta_head_0: dh0, delta_head_1: dh1, delta_flow_0: dq0, delta_flow_1: -dq1 }
    }

    /// Every channel offset multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            delta_head_0: self.delta_head_0 * factor,
            delta_head_1: self.delta_head_1 * factor,
            delta_flow_0: self.delta_flow_0 * factor,
            delta_flow_1: self.delta_flow_1 * factor,
        }
    }
}

/// Estimator sensitivities at one operating point: the denominator
/// `U_{0l} - U_{l1}` and the two resistance derivatives.
fn estimator_factors(
    snap: &SinglePipeSnapshot,
    geom: &PipeGeometry,
    consts: &PhysicalConstants,
) -> Result<(f64, f64, f64)> {
    let (q_0l, q_l1) = snap.oriented_flows();
    let u_0l = hydraulics::resistance_term(q_0l, geom, consts)?;
    let u_l1 = hydraulics::resistance_term(q_l1, geom, consts)?;
    let denominator = u_0l - u_l1;
    if denominator.abs() < DEFAULT_DENOMINATOR_THRESHOLD {
        return Err(Error::DegenerateDenominator {
            denominator,
            threshold: DEFAULT_DENOMINATOR_THRESHOLD,
        });
    }
    let du_0l = hydraulics::d_resistance_dq(q_0l, geom, consts)?;
    let du_l1 = hydraulics::d_resistance_dq(q_l1, geom, consts)?;
    Ok((denominator, du_0l, du_l1))
}

/// First-order position shift caused by constant channel offsets:
///
/// `dx = (dH0 - dH1 - x U'_{0l} dq_{0l} + (x - l) U'_{l1} dq_{l1})
///       / (U_{0l} - U_{l1})`.
///
/// Exactly linear in the offsets; higher-order terms are truncated.
pub fn first_order_offset(
    x: f64,
    snap: &SinglePipeSnapshot,
    geom: &PipeGeometry,
    consts: &PhysicalConstants,
    offsets: &OffsetSpec,
) -> Result<f64> {
    let (denominator, du_0l, du_l1) = estimator_factors(snap, geom, consts)?;
    Ok((offsets.delta_head_0 - offsets.delta_head_1 - x * du_0l * offsets.delta_flow_0
        + (x - geom.length) * du_l1 * offsets.delta_flow_1)
        / denominator)
}

/// First-order variance of the position estimate under independent
/// Gaussian channel noise:
///
/// `sigma_x^2 = (sH0^2 + sH1^2 + x^2 U'_{0l}^2 sq0^2
///               + (x - l)^2 U'_{l1}^2 sq1^2) / (U_{0l} - U_{l1})^2`.
pub fn variance_x(
    x: f64,
    snap: &SinglePipeSnapshot,
    geom: &PipeGeometry,
    consts: &PhysicalConstants,
    noise: &NoiseSpec,
) -> Result<f64> {
    noise.validate()?;
    let (denominator, du_0l, du_l1) = estimator_factors(snap, geom, consts)?;
    let head_terms = noise.sigma_head_0 * noise.sigma_head_0
        + noise.sigma_head_1 * noise.sigma_head_1;
    let flow_0_term = x * x * du_0l * du_0l * noise.sigma_flow_0 * noise.sigma_flow_0;
    let dist_1 = x - geom.length;
    let flow_1_term = dist_1 * dist_1 * du_l1 * du_l1 * noise.sigma_flow_1 * noise.sigma_flow_1;
    Ok((head_terms + flow_0_term + flow_1_term) / (denominator * denominator))
}

/// A position estimate with a symmetric Gaussian confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithCI {
    pub x: f64,
    pub sigma_x: f64,
    pub samples: usize,
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
}

/// The standard Gaussian quantile for a two-sided interval at `level`.
fn gaussian_z(level: f64) -> Result<f64> {
    if level <= 0.0 || level >= 1.0 || level.is_nan() {
        return Err(Error::InvalidArgument(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let standard = Gaussian::new(0.0, 1.0).expect("standard normal");
    Ok(standard.inverse_cdf(0.5 + level / 2.0))
}

/// Symmetric interval `x +- z sigma_x / sqrt(N)` with the standard
/// Gaussian quantile for the level (1.96 at 95%).
pub fn confidence_interval(
    x: f64,
    sigma_x: f64,
    samples: usize,
    level: f64,
) -> Result<EstimateWithCI> {
    if samples < 1 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    if sigma_x < 0.0 || !sigma_x.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "sigma_x must be non-negative, got {sigma_x}"
        )));
    }
    let half = gaussian_z(level)? * sigma_x / (samples as f64).sqrt();
    Ok(EstimateWithCI { x, sigma_x, samples, level, lower: x - half, upper: x + half })
}

/// One row of the Monte Carlo table: empirical mean squared error of
/// the N-snapshot estimate, the first-order prediction `sigma_x^2 / N`,
/// and the empirical coverage of the level-`level` intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub snapshots: usize,
    pub mse: f64,
    pub predicted_mse: f64,
    pub coverage: f64,
}

/// Monte Carlo validation of the variance formula. For each `N` in
/// `n_list` and each of `trials` independent trials, draws `N` noisy
/// snapshots (per snapshot: head 0, head 1, flow 0, flow 1, in that
/// order), averages the per-snapshot closed-form estimates, and records
/// the squared error against `true_x` plus whether the level-`level`
/// interval covered it.
///
/// Each trial derives its own generator from `(seed, n index, trial)`,
/// so results are reproducible and independent of scheduling.
#[allow(clippy::too_many_arguments)]
pub fn mc_experiment(
    snap: &SinglePipeSnapshot,
    true_x: f64,
    geom: &PipeGeometry,
    consts: &PhysicalConstants,
    noise: &NoiseSpec,
    n_list: &[usize],
    trials: usize,
    seed: u64,
    level: f64,
) -> Result<Vec<McRow>> {
    noise.validate()?;
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    if n_list.contains(&0) {
        return Err(Error::InvalidArgument("snapshot counts must be positive".into()));
    }
    let z = gaussian_z(level)?;
    let predicted_var = variance_x(true_x, snap, geom, consts, noise)?;
    let opts = LocalizeOptions::noisy();

    let mut rows = Vec::with_capacity(n_list.len());
    for (n_idx, &n) in n_list.iter().enumerate() {
        let trial_results: Vec<(f64, bool)> = (0..trials)
            .into_par_iter()
            .map(|trial| -> Result<(f64, bool)> {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(((n_idx as u64) << 32) | trial as u64);
                let unit = Normal::new(0.0, 1.0).expect("unit normal");
                let mut sum_x = 0.0;
                let mut sum_sigma = 0.0;
                for _ in 0..n {
                    let noisy = SinglePipeSnapshot {
                        head_0: snap.head_0 + noise.sigma_head_0 * unit.sample(&mut rng),
                        head_1: snap.head_1 + noise.sigma_head_1 * unit.sample(&mut rng),
                        flow_0: snap.flow_0 + noise.sigma_flow_0 * unit.sample(&mut rng),
                        flow_1: snap.flow_1 + noise.sigma_flow_1 * unit.sample(&mut rng),
                    };
                    let est = localize_single_pipe(&noisy, geom, consts, &opts)?;
                    // Sensitivities at the measured (noisy) operating
                    // point: the information the estimator actually has.
                    let var = variance_x(est.x, &noisy, geom, consts, noise)?;
                    sum_x += est.x;
                    sum_sigma += var.sqrt();
                }
                let mean_x = sum_x / n as f64;
                let mean_sigma = sum_sigma / n as f64;
                let half = z * mean_sigma / (n as f64).sqrt();
                let err = mean_x - true_x;
                Ok((err * err, err.abs() <= half))
            })
            .collect::<Result<Vec<_>>>()?;
        // Sequential reduction keeps the output bit-identical across
        // thread schedules.
        let mse = trial_results.iter().map(|(sq, _)| sq).sum::<f64>() / trials as f64;
        let covered = trial_results.iter().filter(|(_, c)| *c).count();
        rows.push(McRow {
            snapshots: n,
            mse,
            predicted_mse: predicted_var / n as f64,
            coverage: covered as f64 / trials as f64,
        });
    }
    Ok(rows)
}
