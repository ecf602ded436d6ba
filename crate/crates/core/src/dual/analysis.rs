//! Constants used to size convergence radii and to check the learning bounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::oracle::{max_slack, primal_oracle};
use super::solver::{maximize_dual, DualSolverConfig, EdgeAscent};
use super::{check_dist, dual_value_unchecked, DualError, Multiplier};
use crate::model::NetworkInstance;

/// Seed of the sampler behind [`estimate_polyhedral_rho`]; fixed so the
/// probe is a deterministic function of its inputs.
const RHO_PROBE_SEED: u64 = 0x5_eed0_fa11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConstants {
    pub b: f64,
    pub eta: f64,
    pub rho_hat: f64,
    pub d_p: f64,
    pub f_max: f64,
}

impl AnalysisConstants {
    /// Uses the midpoint `η = ρ̂/2`. `None` when `ρ̂ ≤ 0`.
    pub fn from_rho(inst: &NetworkInstance, rho_hat: f64) -> Option<Self> {
        Self::with_eta(inst, rho_hat, rho_hat / 2.0)
    }

    /// `D_p = (B − η²) / (2(ρ̂ − η))`; requires `0 < η < ρ̂`.
    pub fn with_eta(inst: &NetworkInstance, rho_hat: f64, eta: f64) -> Option<Self> {
        if !(rho_hat > 0.0 && eta > 0.0 && eta < rho_hat) {
            return None;
        }
        let b = inst.b();
        Some(Self { b, eta, rho_hat, d_p: (b - eta * eta) / (2.0 * (rho_hat - eta)), f_max: inst.f_max() })
    }
}

/// Multiplier bound `ξ = V·f_max/η₀`.
pub fn lemma1_xi(v: f64, f_max: f64, eta0: f64) -> f64 {
    v * f_max / eta0
}

/// Bound on `‖β(t) − γ*‖` from the empirical-distribution error:
/// `2·max_i|δ_i(t)|·M·(V·f_max + r·ξ·B)/ρ`.
pub fn lemma6_bound(inst: &NetworkInstance, v: f64, max_abs_error: f64, xi: f64, rho: f64) -> f64 {
    let m = inst.num_states() as f64;
    let r = inst.r() as f64;
    2.0 * max_abs_error * m * (v * inst.f_max() + r * xi * inst.b()) / rho
}

/// Smallest observed decay rate `(g(γ*) − g(γ))/‖γ* − γ‖` over points drawn
/// around `gamma_star` at distances up to `radius`, projected onto `γ ⪰ 0`.
///
/// Besides `sample_count` random points, the extreme rays of the local
/// linearity cones at `gamma_star` are probed at a short distance, which
/// pins the estimate down exactly for two queues. A non-positive result
/// means the polyhedral property was not numerically confirmed.
pub fn estimate_polyhedral_rho(
    inst: &NetworkInstance,
    dist: &[f64],
    v: f64,
    gamma_star: &[f64],
    sample_count: usize,
    radius: f64,
) -> Result<f64, DualError> {
    check_dist(inst, dist)?;
    if gamma_star.len() != inst.r() {
        return Err(DualError::Dimension { expected: inst.r(), got: gamma_star.len() });
    }
    let r = inst.r();
    let g_star = dual_value_unchecked(inst, dist, gamma_star, v);
    let mut rho = f64::INFINITY;
    let mut probe = |point: Vec<f64>| {
        let dist_to_star = super::distance(&point, gamma_star);
        if dist_to_star >= 1e-6 {
            let decay = (g_star - dual_value_unchecked(inst, dist, &point, v)) / dist_to_star;
            rho = rho.min(decay);
        }
    };

    let mut ascent = EdgeAscent::new(inst, dist, v);
    ascent.evaluate(gamma_star);
    let (rays, _) = ascent.candidate_directions();
    let short = (radius * 1e-3).max(1e-4);
    for d in &rays {
        probe(gamma_star.iter().zip(d).map(|(g, dk)| (g + short * dk).max(0.0)).collect());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(RHO_PROBE_SEED);
    for _ in 0..sample_count {
        let dir: Vec<f64> = (0..r).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let len = super::norm(&dir);
        if len == 0.0 {
            continue;
        }
        let shell = radius * rng.random::<f64>();
        probe(gamma_star.iter().zip(&dir).map(|(g, x)| (g + shell * x / len).max(0.0)).collect());
    }
    Ok(if rho.is_finite() { rho } else { 0.0 })
}

/// Reference quantities for one `(instance, V)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub v: f64,
    pub f_av_star: f64,
    pub g_star: f64,
    pub gamma_star: Multiplier,
    pub eta0: f64,
    pub rho_hat: f64,
    /// `None` when no positive polyhedral rate was found.
    pub constants: Option<AnalysisConstants>,
}

impl OracleSummary {
    pub const RHO_SAMPLES: usize = 4000;

    /// Solves the primal and dual under `dist` and probes `ρ̂` within
    /// `V·δ_max` of `γ*`.
    pub fn compute(inst: &NetworkInstance, dist: &[f64], v: f64) -> Result<Self, DualError> {
        let primal = primal_oracle(inst, dist)?;
        let eta0 = max_slack(inst, dist)?;
        let dual = maximize_dual(inst, dist, v, &DualSolverConfig::default())?;
        if dual.unbounded {
            return Err(DualError::Unbounded);
        }
        let radius = (v * inst.delta_max()).max(1.0);
        let rho_hat = estimate_polyhedral_rho(inst, dist, v, &dual.gamma.0, Self::RHO_SAMPLES, radius)?;
        Ok(Self {
            v,
            f_av_star: primal.f_av_star,
            g_star: dual.value,
            gamma_star: dual.gamma,
            eta0,
            rho_hat,
            constants: AnalysisConstants::from_rho(inst, rho_hat),
        })
    }

    pub fn d_p(&self) -> Option<f64> {
        self.constants.map(|c| c.d_p)
    }
}
