//! Nuclear spin-lattice relaxation of the ground-state hyperfine levels.
//!
//! ```text
//! R(B, T) = R₀ + α_D γ² B⁴ T + α_O(B) / (exp(h Δ_CF(B) / k_B T) − 1)
//! α_O(B)  = α + β B²
//! Δ_CF(B) = Δ_CF⁰ + γ_CF B²
//! ```
//!
//! Δ_CF is stored in Hz, so the Boltzmann exponent carries a factor h.

use crate::constants::{BOLTZMANN, PLANCK};
use crate::fitting::{least_squares, FitError, FitOptions, FitProblem, ParamSpec};
use crate::geometry::SiteIndex;
use crate::par;
use crate::zeeman::crystal_field_splitting;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelaxError {
    #[error("temperature must be positive, got {0} K")]
    NonpositiveTemperature(f64),
    #[error("input {name} must be positive, got {value}")]
    NonpositiveInput { name: &'static str, value: f64 },
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("invalid dataset {label}: {reason}")]
    InvalidDataset { label: String, reason: String },
    #[error("fitted rate {0:e} Hz is not positive")]
    NonPositiveRateEstimate(f64),
    #[error("relaxation of site {0} is not modeled (dipolar / impurity mechanisms)")]
    Unmodeled(SiteIndex),
    #[error(transparent)]
    Fit(#[from] FitError),
}

impl RelaxError {
    pub fn name(&self) -> &'static str {
        match self {
            RelaxError::NonpositiveTemperature(_) => "NonpositiveTemperature",
            RelaxError::NonpositiveInput { .. } => "NonpositiveInput",
            RelaxError::InvalidSeries(_) => "InvalidSeries",
            RelaxError::InvalidDataset { .. } => "InvalidDataset",
            RelaxError::NonPositiveRateEstimate(_) => "NonPositiveRateEstimate",
            RelaxError::Unmodeled(_) => "Unmodeled",
            RelaxError::Fit(e) => e.name(),
        }
    }
}

/// Parameters of the rate law, SI units (Hz, T, K).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxParams {
    #[serde(rename = "R0")]
    pub r0: f64,
    /// (Hz·K·T²)⁻¹
    #[serde(rename = "alpha_D")]
    pub alpha_d: f64,
    pub alpha: f64,
    /// Hz·T⁻²
    pub beta: f64,
    #[serde(rename = "delta_CF0")]
    pub delta_cf0: f64,
    /// Hz·T⁻²
    #[serde(rename = "gamma_CF")]
    pub gamma_cf: f64,
}

impl RelaxParams {
    /// The published two-dimensional fit values.
    pub fn reference() -> Self {
        RelaxParams {
            r0: 9.5e-5,
            alpha_d: 1.2e-24,
            alpha: 3.0e4,
            beta: 1.3e4,
            delta_cf0: 8.3e11,
            gamma_cf: 8.0e9,
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.r0,
            self.alpha_d,
            self.alpha,
            self.beta,
            self.delta_cf0,
            self.gamma_cf,
        ]
    }

    pub fn from_slice(p: &[f64]) -> Self {
        RelaxParams {
            r0: p[0],
            alpha_d: p[1],
            alpha: p[2],
            beta: p[3],
            delta_cf0: p[4],
            gamma_cf: p[5],
        }
    }

    pub fn check(&self) -> Result<(), RelaxError> {
        let bad = |name, value| Err(RelaxError::NonpositiveInput { name, value });
        if !(self.r0 >= 0.0) {
            return bad("R0", self.r0);
        }
        if !(self.alpha_d >= 0.0) {
            return bad("alpha_D", self.alpha_d);
        }
        if !(self.delta_cf0 > 0.0) {
            return bad("delta_CF0", self.delta_cf0);
        }
        Ok(())
    }
}

/// The three additive contributions to the rate, in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateTerms {
    pub residual: f64,
    pub direct: f64,
    pub orbach: f64,
}

impl RateTerms {
    pub fn total(&self) -> f64 {
        self.residual + self.direct + self.orbach
    }

    pub fn dominant(&self) -> Process {
        if self.orbach >= self.direct && self.orbach >= self.residual {
            Process::Orbach
        } else if self.direct >= self.residual {
            Process::Direct
        } else {
            Process::Residual
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Process {
    Residual,
    Direct,
    Orbach,
}

impl fmt::Display for Process {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Process::Residual => "residual",
            Process::Direct => "direct",
            Process::Orbach => "orbach",
        })
    }
}

fn orbach_occupation(b: f64, temp: f64, p: &RelaxParams) -> (f64, f64) {
    let x = PLANCK * crystal_field_splitting(b, p) / (BOLTZMANN * temp);
    (x, 1.0 / x.exp_m1())
}

/// Term-by-term rate at field `b` (T) and temperature `temp` (K); `gamma` is
/// the ground-state splitting per tesla along the field (Hz/T).
pub fn rate_terms(b: f64, temp: f64, gamma: f64, p: &RelaxParams) -> Result<RateTerms, RelaxError> {
    if !(temp > 0.0) {
        return Err(RelaxError::NonpositiveTemperature(temp));
    }
    if PLANCK * gamma.abs() * b.abs() > 0.1 * BOLTZMANN * temp {
        warn_once!(
            "direct-process term outside its high-temperature regime: h·γ·B = {:.3e} J vs k_B·T = {:.3e} J",
            PLANCK * gamma.abs() * b.abs(),
            BOLTZMANN * temp
        );
    }
    let b2 = b * b;
    let (_, occupation) = orbach_occupation(b, temp, p);
    Ok(RateTerms {
        residual: p.r0,
        direct: p.alpha_d * gamma * gamma * b2 * b2 * temp,
        orbach: (p.alpha + p.beta * b2) * occupation,
    })
}

pub fn rate(b: f64, temp: f64, gamma: f64, p: &RelaxParams) -> Result<f64, RelaxError> {
    rate_terms(b, temp, gamma, p).map(|t| t.total())
}

/// ∂R/∂(R₀, α_D, α, β, Δ_CF⁰, γ_CF).
pub fn rate_gradient(b: f64, temp: f64, gamma: f64, p: &RelaxParams) -> Result<[f64; 6], RelaxError> {
    if !(temp > 0.0) {
        return Err(RelaxError::NonpositiveTemperature(temp));
    }
    let b2 = b * b;
    let (x, occupation) = orbach_occupation(b, temp, p);
    let alpha_o = p.alpha + p.beta * b2;
    // d/dΔ of 1/(eˣ−1) with x = hΔ/(k_B T)
    let em1 = x.exp_m1();
    let d_occ = -(em1 + 1.0) / (em1 * em1) * PLANCK / (BOLTZMANN * temp);
    Ok([
        1.0,
        gamma * gamma * b2 * b2 * temp,
        occupation,
        b2 * occupation,
        alpha_o * d_occ,
        alpha_o * d_occ * b2,
    ])
}

/// Site-aware entry point: site 2 relaxes through mechanisms outside this model.
pub fn rate_for_site(
    site: SiteIndex,
    b: f64,
    temp: f64,
    gamma: f64,
    p: &RelaxParams,
) -> Result<f64, RelaxError> {
    if site.get() == 2 {
        return Err(RelaxError::Unmodeled(site));
    }
    rate(b, temp, gamma, p)
}

/// Order-of-magnitude direct-process coefficient 24π² k_B γ² / (ρ v⁵), with
/// v the mean of one longitudinal and two transverse acoustic velocities.
pub fn bleaney_alpha_d(gamma: f64, rho: f64, v_l: f64, v_t: f64) -> Result<f64, RelaxError> {
    for (name, value) in [("gamma", gamma), ("rho", rho), ("v_l", v_l), ("v_t", v_t)] {
        if !(value > 0.0) {
            return Err(RelaxError::NonpositiveInput { name, value });
        }
    }
    let v = (v_l + 2.0 * v_t) / 3.0;
    Ok(24.0 * std::f64::consts::PI.powi(2) * BOLTZMANN * gamma * gamma / (rho * v.powi(5)))
}

/// One grid cell of a process-dominance map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominanceCell {
    pub b: f64,
    pub temp: f64,
    pub terms: RateTerms,
    pub dominant: Process,
}

/// Largest rate contribution on a B × T grid (B outer, T inner).
pub fn dominance_map(
    b_grid: &[f64],
    t_grid: &[f64],
    gamma: f64,
    p: &RelaxParams,
) -> Result<Vec<DominanceCell>, RelaxError> {
    if let Some(&t) = t_grid.iter().find(|t| !(**t > 0.0)) {
        return Err(RelaxError::NonpositiveTemperature(t));
    }
    let cells: Vec<(f64, f64)> = b_grid
        .iter()
        .flat_map(|&b| t_grid.iter().map(move |&t| (b, t)))
        .collect();
    par::map(&cells, |&(b, t)| {
        rate_terms(b, t, gamma, p).map(|terms| DominanceCell {
            b,
            temp: t,
            terms,
            dominant: terms.dominant(),
        })
    })
    .into_iter()
    .collect()
}

/// Spectral-hole area versus waiting time.
#[derive(Debug, Clone, PartialEq)]
pub struct HoleDecay {
    pub times: Vec<f64>,
    pub areas: Vec<f64>,
}

fn gaussian_factors(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            if sigma == 0.0 {
                return 1.0;
            }
            loop {
                let z: f64 = StandardNormal.sample(&mut rng);
                let f = 1.0 + sigma * z;
                if f > 0.0 {
                    return f;
                }
            }
        })
        .collect()
}

/// A(t) = A₀ e^{−R t} with multiplicative Gaussian noise of relative width
/// `noise_sigma`; deterministic for a given seed.
pub fn simulate_hole_decay(
    rate_hz: f64,
    times: &[f64],
    a0: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<HoleDecay, RelaxError> {
    if !(rate_hz > 0.0) {
        return Err(RelaxError::NonpositiveInput { name: "rate", value: rate_hz });
    }
    if times.iter().any(|t| !(*t >= 0.0)) || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(RelaxError::InvalidSeries(
            "times must be nonnegative and strictly increasing".into(),
        ));
    }
    if !(noise_sigma >= 0.0) {
        return Err(RelaxError::NonpositiveInput { name: "noise_sigma", value: noise_sigma });
    }
    let noise = gaussian_factors(times.len(), noise_sigma, seed);
    let areas = times
        .iter()
        .zip(noise)
        .map(|(t, f)| a0 * (-rate_hz * t).exp() * f)
        .collect();
    Ok(HoleDecay {
        times: times.to_vec(),
        areas,
    })
}

/// Result of a single-exponential fit to a hole-decay series.
#[derive(Debug, Clone, PartialEq)]
pub struct T1Estimate {
    pub t1: f64,
    pub sigma_t1: f64,
    pub rate: f64,
    pub a0: f64,
    /// RMS of the relative residuals (A_fit − A)/A.
    pub residual_rms: f64,
    /// Largest |relative residual|, a coarse check for non-exponential decay.
    pub max_residual: f64,
}

pub fn extract_t1(series: &HoleDecay) -> Result<T1Estimate, RelaxError> {
    let n = series.times.len();
    if n < 4 || series.areas.len() != n {
        return Err(RelaxError::InvalidSeries(format!(
            "need at least 4 (time, area) pairs, got {n}"
        )));
    }
    if series.areas.iter().any(|a| !(*a > 0.0)) {
        return Err(RelaxError::InvalidSeries("areas must be positive".into()));
    }
    let (t, a) = (&series.times, &series.areas);

    // log-linear start
    let ln_a: Vec<f64> = a.iter().map(|x| x.ln()).collect();
    let tm = t.iter().sum::<f64>() / n as f64;
    let lm = ln_a.iter().sum::<f64>() / n as f64;
    let sxx: f64 = t.iter().map(|x| (x - tm) * (x - tm)).sum();
    if !(sxx > 0.0) {
        return Err(RelaxError::InvalidSeries("times must not all coincide".into()));
    }
    let sxy: f64 = t.iter().zip(&ln_a).map(|(x, y)| (x - tm) * (y - lm)).sum();
    let r_init = -sxy / sxx;
    let a_init = (lm + r_init * tm).exp();
    let t_span = t[n - 1] - t[0];
    let r_scale = if r_init.abs() > 0.0 { r_init.abs() } else { 1.0 / t_span };

    let problem = FitProblem::new(
        vec![ParamSpec::new("A0", a_init.abs()), ParamSpec::new("R", r_scale)],
        n,
        |p| {
            t.iter()
                .zip(a)
                .map(|(ti, ai)| (p[0] * (-p[1] * ti).exp() - ai) / ai)
                .collect()
        },
    )
    .describe("single-exponential hole decay");
    let fit = least_squares(&problem, &[a_init, r_init], &FitOptions::default())?;
    let (a0, r) = (fit.params[0], fit.params[1]);
    if !(r > 0.0) {
        return Err(RelaxError::NonPositiveRateEstimate(r));
    }
    // relative weights of unknown size: rescale by the residual variance
    let dof = (n - 2).max(1) as f64;
    let s2 = fit.residual_norm * fit.residual_norm / dof;
    let sigma_r = (fit.covariance[(1, 1)] * s2).max(0.0).sqrt();
    let rel: Vec<f64> = problem.residuals(&fit.params);
    let residual_rms = (rel.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();
    let max_residual = rel.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(T1Estimate {
        t1: 1.0 / r,
        sigma_t1: sigma_r / (r * r),
        rate: r,
        a0,
        residual_rms,
        max_residual,
    })
}

/// One (B, T, rate, σ) observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRecord {
    #[serde(rename = "B_T")]
    pub b: f64,
    #[serde(rename = "T_K")]
    pub temp: f64,
    #[serde(rename = "rate_Hz")]
    pub rate: f64,
    #[serde(rename = "sigma_Hz")]
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateDataset {
    pub label: String,
    pub records: Vec<RateRecord>,
}

/// Field / temperature box in which the rate law is trusted.
pub const VALID_B: (f64, f64) = (0.0, 6.0);
pub const VALID_T: (f64, f64) = (1.3, 5.0);

impl RateDataset {
    pub fn new(label: &str, records: Vec<RateRecord>) -> Result<Self, RelaxError> {
        let ds = RateDataset {
            label: label.to_string(),
            records,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<(), RelaxError> {
        let fail = |reason: String| {
            Err(RelaxError::InvalidDataset {
                label: self.label.clone(),
                reason,
            })
        };
        for (i, r) in self.records.iter().enumerate() {
            if !(r.rate > 0.0) {
                return fail(format!("record {i}: rate must be positive"));
            }
            if !(r.sigma > 0.0) {
                return fail(format!("record {i}: sigma must be positive"));
            }
            if !(r.b >= VALID_B.0 && r.b <= VALID_B.1) || !(r.temp >= VALID_T.0 && r.temp <= VALID_T.1) {
                return fail(format!(
                    "record {i}: (B, T) = ({}, {}) outside [0, 6] T x [1.3, 5] K",
                    r.b, r.temp
                ));
            }
        }
        Ok(())
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Synthetic stand-ins for the three measured series: a T-sweep at 3 T
/// (12 points, 1.6–4.5 K) and B-sweeps at 1.6 K and 4 K (10 points each,
/// 0–6 T). Rates carry multiplicative Gaussian noise of relative width
/// `noise`; σ is `noise` (or 10 % when noiseless) times the reported rate.
pub fn synthetic_experiments(
    p: &RelaxParams,
    gamma: f64,
    noise: f64,
    seed: u64,
) -> Result<Vec<RateDataset>, RelaxError> {
    let sigma_rel = if noise > 0.0 { noise } else { 0.1 };
    let designs: [(&str, Vec<(f64, f64)>); 3] = [
        ("T-sweep@3T", linspace(1.6, 4.5, 12).into_iter().map(|t| (3.0, t)).collect()),
        ("B-sweep@1.6K", linspace(0.0, 6.0, 10).into_iter().map(|b| (b, 1.6)).collect()),
        ("B-sweep@4K", linspace(0.0, 6.0, 10).into_iter().map(|b| (b, 4.0)).collect()),
    ];
    let mut out = Vec::with_capacity(3);
    for (k, (label, points)) in designs.into_iter().enumerate() {
        let factors = gaussian_factors(points.len(), noise, seed.wrapping_mul(3).wrapping_add(k as u64));
        let records = points
            .iter()
            .zip(factors)
            .map(|(&(b, t), f)| {
                let r = rate(b, t, gamma, p)? * f;
                Ok(RateRecord { b, temp: t, rate: r, sigma: sigma_rel * r })
            })
            .collect::<Result<Vec<_>, RelaxError>>()?;
        out.push(RateDataset::new(label, records)?);
    }
    Ok(out)
}
