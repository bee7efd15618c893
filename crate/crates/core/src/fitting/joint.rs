//! Simultaneous fit of the rate law to several (B, T) series.
//!
//! Residuals are taken in log space, `ln(R_model/R_data) / (σ/R_data)`, so a
//! series spanning four decades is weighted by its relative errors rather
//! than dominated by its largest rates.

use super::{least_squares, FitOptions, FitProblem, FitResult, ParamSpec};
use crate::fitting::FitError;
use crate::par;
use crate::relaxation::{
    rate, rate_gradient, synthetic_experiments, RateDataset, RateRecord, RelaxError, RelaxParams,
};
use nalgebra::DMatrix;

pub const RELAX_PARAM_NAMES: [&str; 6] = ["R0", "alpha_D", "alpha", "beta", "delta_CF0", "gamma_CF"];

/// Physically sensible window for the crystal-field splitting, Hz.
const DELTA_CF_BOUNDS: (f64, f64) = (2.5e11, 2.0e12);

/// Fallback scales used when an initial value is zero.
const FALLBACK_SCALE: [f64; 6] = [1e-4, 1e-24, 1e4, 1e4, 1e12, 1e10];

#[derive(Debug, Clone, PartialEq)]
pub struct JointFit {
    pub params: RelaxParams,
    pub fit: FitResult,
    /// Parameters whose standard error exceeds their value.
    pub poorly_determined: Vec<&'static str>,
}

impl JointFit {
    pub fn std_errors(&self) -> RelaxParams {
        RelaxParams::from_slice(&self.fit.std_errors)
    }
}

/// All records in a canonical order, so the fit does not depend on how the
/// caller arranged datasets or rows.
pub fn pooled_records(datasets: &[RateDataset]) -> Vec<(String, RateRecord)> {
    let mut all: Vec<(String, RateRecord)> = datasets
        .iter()
        .flat_map(|d| d.records.iter().map(move |r| (d.label.clone(), *r)))
        .collect();
    all.sort_by(|(la, a), (lb, b)| {
        la.cmp(lb)
            .then(a.b.total_cmp(&b.b))
            .then(a.temp.total_cmp(&b.temp))
            .then(a.rate.total_cmp(&b.rate))
            .then(a.sigma.total_cmp(&b.sigma))
    });
    all
}

fn distinct(values: impl Iterator<Item = f64>) -> usize {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

/// Fits all six rate-law parameters to the pooled datasets with γ held fixed.
pub fn joint_relax_fit(
    datasets: &[RateDataset],
    gamma: f64,
    init: &RelaxParams,
) -> Result<JointFit, RelaxError> {
    for d in datasets {
        d.validate()?;
    }
    let pooled = pooled_records(datasets);
    let records: Vec<RateRecord> = pooled.into_iter().map(|(_, r)| r).collect();
    let nb = distinct(records.iter().map(|r| r.b));
    let nt = distinct(records.iter().map(|r| r.temp));
    if nb < 2 || nt < 2 {
        return Err(FitError::InsufficientCoverage(format!(
            "{nb} distinct field(s) and {nt} distinct temperature(s); need at least 2 of each"
        ))
        .into());
    }
    if records.len() < RELAX_PARAM_NAMES.len() {
        return Err(FitError::InsufficientCoverage(format!(
            "{} records for {} parameters",
            records.len(),
            RELAX_PARAM_NAMES.len()
        ))
        .into());
    }

    let p0 = init.to_vec();
    let specs: Vec<ParamSpec> = RELAX_PARAM_NAMES
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let scale = if p0[k] != 0.0 { p0[k].abs() } else { FALLBACK_SCALE[k] };
            let spec = ParamSpec::new(name, scale);
            if k == 4 {
                spec.bounded(DELTA_CF_BOUNDS.0, DELTA_CF_BOUNDS.1)
            } else {
                spec.bounded(0.0, f64::INFINITY)
            }
        })
        .collect();

    let problem = build_problem(specs, &records, gamma, true);
    let fit = least_squares(&problem, &p0, &FitOptions::default())?;
    let poorly_determined = RELAX_PARAM_NAMES
        .iter()
        .enumerate()
        .filter(|&(k, _)| !(fit.relative_error(k) <= 1.0))
        .map(|(_, n)| *n)
        .collect();
    Ok(JointFit {
        params: RelaxParams::from_slice(&fit.params),
        fit,
        poorly_determined,
    })
}

/// Joint fits to independent noisy synthetic datasets, one per seed, started
/// from `init`. Runs on the rayon pool when enabled; output follows `seeds`.
pub fn monte_carlo_joint_fits(
    truth: &RelaxParams,
    init: &RelaxParams,
    gamma: f64,
    noise: f64,
    seeds: &[u64],
) -> Vec<Result<JointFit, RelaxError>> {
    par::map(seeds, |&seed| {
        let data = synthetic_experiments(truth, gamma, noise, seed)?;
        joint_relax_fit(&data, gamma, init)
    })
}

fn build_problem<'a>(
    specs: Vec<ParamSpec>,
    records: &'a [RateRecord],
    gamma: f64,
    analytic: bool,
) -> FitProblem<'a> {
    let residuals = move |p: &[f64]| -> Vec<f64> {
        let params = RelaxParams::from_slice(p);
        records
            .iter()
            .map(|r| {
                let m = rate(r.b, r.temp, gamma, &params).unwrap_or(f64::NAN);
                (m.max(f64::MIN_POSITIVE) / r.rate).ln() / (r.sigma / r.rate)
            })
            .collect()
    };
    let problem = FitProblem::new(specs, records.len(), residuals).describe("joint rate-law fit");
    if !analytic {
        return problem;
    }
    problem.with_jacobian(move |p: &[f64]| {
        let params = RelaxParams::from_slice(p);
        let mut jac = DMatrix::zeros(records.len(), 6);
        for (i, r) in records.iter().enumerate() {
            let m = rate(r.b, r.temp, gamma, &params).unwrap_or(f64::NAN).max(f64::MIN_POSITIVE);
            let g = rate_gradient(r.b, r.temp, gamma, &params).unwrap_or([f64::NAN; 6]);
            let w = r.rate / r.sigma;
            for (j, gj) in g.iter().enumerate() {
                jac[(i, j)] = gj / m * w;
            }
        }
        jac
    })
}
