//! Inhomogeneous absorption spectra: site- and polarization-resolved
//! synthesis, and Lorentzian-sum fitting.
//!
//! Absorption coefficients are in cm⁻¹ and detunings in Hz from ν₀.
//! Transmission exp(−αL) is only an I/O transform.

use crate::constants::MaterialConstants;
use crate::fitting::{least_squares, FitError, FitOptions, FitProblem, ParamSpec};
use crate::geometry::{all_frames, equivalence_classes, field_vector, FieldConfig, Polarization, SiteIndex};
use crate::par;
use crate::zeeman::{broadening, linestrength, zeeman_result, ZeemanError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectraError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid line shape: {0}")]
    InvalidLine(String),
    #[error("initial centres {0:e} and {1:e} Hz are closer than the grid step")]
    DegenerateInit(f64, f64),
    #[error("fit did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error(transparent)]
    Fit(FitError),
    #[error(transparent)]
    Zeeman(#[from] ZeemanError),
}

impl SpectraError {
    pub fn name(&self) -> &'static str {
        match self {
            SpectraError::InvalidGrid(_) => "InvalidGrid",
            SpectraError::InvalidLine(_) => "InvalidLine",
            SpectraError::DegenerateInit(..) => "DegenerateInit",
            SpectraError::NoConvergence { .. } => "NoConvergence",
            SpectraError::Fit(e) => e.name(),
            SpectraError::Zeeman(e) => e.name(),
        }
    }
}

impl From<FitError> for SpectraError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::NoConvergence { history, iterations, .. } => SpectraError::NoConvergence {
                iterations,
                residual: history.last().copied().unwrap_or(f64::NAN).sqrt(),
            },
            other => SpectraError::Fit(other),
        }
    }
}

/// A Lorentzian absorption line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineShape {
    /// Hz from ν₀.
    pub center: f64,
    /// Hz, > 0.
    pub fwhm: f64,
    /// cm⁻¹, ≥ 0.
    pub peak_alpha: f64,
}

impl LineShape {
    pub fn new(center: f64, fwhm: f64, peak_alpha: f64) -> Result<Self, SpectraError> {
        if !(fwhm > 0.0) || !fwhm.is_finite() {
            return Err(SpectraError::InvalidLine(format!("fwhm must be positive, got {fwhm}")));
        }
        if !(peak_alpha >= 0.0) || !center.is_finite() {
            return Err(SpectraError::InvalidLine(format!(
                "need finite centre and nonnegative peak, got ({center}, {peak_alpha})"
            )));
        }
        Ok(LineShape { center, fwhm, peak_alpha })
    }

    /// Builds a line from its integrated area (Hz·cm⁻¹).
    pub fn from_area(center: f64, fwhm: f64, area: f64) -> Result<Self, SpectraError> {
        LineShape::new(center, fwhm, area / (FRAC_PI_2 * fwhm))
    }

    /// Integrated area π/2 · peak · FWHM, in Hz·cm⁻¹.
    pub fn area(&self) -> f64 {
        FRAC_PI_2 * self.peak_alpha * self.fwhm
    }

    pub fn eval(&self, nu: f64) -> f64 {
        let u = 2.0 * (nu - self.center) / self.fwhm;
        self.peak_alpha / (1.0 + u * u)
    }

    /// Analytic area between `lo` and `hi`.
    pub fn area_between(&self, lo: f64, hi: f64) -> f64 {
        let at = |x: f64| (2.0 * (x - self.center) / self.fwhm).atan();
        0.5 * self.peak_alpha * self.fwhm * (at(hi) - at(lo))
    }

    /// Fraction of the area lying outside `[lo, hi]`. For a line centred well
    /// inside, this is about FWHM/(2π)·(1/(c−lo) + 1/(hi−c)).
    pub fn tail_fraction(&self, lo: f64, hi: f64) -> f64 {
        1.0 - self.area_between(lo, hi) / self.area()
    }
}

/// Absorption coefficient sampled on a uniform detuning grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub detuning: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Absolute noise σ (cm⁻¹) when known.
    pub noise_sigma: Option<f64>,
}

/// Symmetric grid of total width `span` with spacing `step` (Hz).
pub fn uniform_grid(span: f64, step: f64) -> Result<Vec<f64>, SpectraError> {
    if !(span > 0.0) || !(step > 0.0) || step > span {
        return Err(SpectraError::InvalidGrid(format!("span {span} / step {step}")));
    }
    let n = (span / step).round() as usize + 1;
    let start = -0.5 * (n - 1) as f64 * step;
    Ok((0..n).map(|i| start + i as f64 * step).collect())
}

fn check_grid(grid: &[f64]) -> Result<f64, SpectraError> {
    if grid.len() < 3 {
        return Err(SpectraError::InvalidGrid("need at least 3 points".into()));
    }
    if !grid.iter().all(|x| x.is_finite()) {
        return Err(SpectraError::InvalidGrid("non-finite detuning".into()));
    }
    let step = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    if !(step > 0.0) {
        return Err(SpectraError::InvalidGrid("grid must be strictly increasing".into()));
    }
    for (i, w) in grid.windows(2).enumerate() {
        let d = w[1] - w[0];
        if !(d > 0.0) {
            return Err(SpectraError::InvalidGrid(format!("not increasing at index {i}")));
        }
        // uniformity, measured against the grid extent to absorb rounding
        let expected = grid[0] + (i + 1) as f64 * step;
        if (w[1] - expected).abs() > 1e-9 * step.max(grid[0].abs().max(grid[grid.len() - 1].abs()) * 1e-6) {
            return Err(SpectraError::InvalidGrid(format!("non-uniform spacing at index {i}")));
        }
    }
    Ok(step)
}

impl Spectrum {
    pub fn new(detuning: Vec<f64>, alpha: Vec<f64>, noise_sigma: Option<f64>) -> Result<Self, SpectraError> {
        check_grid(&detuning)?;
        if alpha.len() != detuning.len() {
            return Err(SpectraError::InvalidGrid(format!(
                "{} values for {} grid points",
                alpha.len(),
                detuning.len()
            )));
        }
        if !alpha.iter().all(|a| a.is_finite()) {
            return Err(SpectraError::InvalidGrid("non-finite absorption".into()));
        }
        Ok(Spectrum { detuning, alpha, noise_sigma })
    }

    pub fn step(&self) -> f64 {
        (self.detuning[self.detuning.len() - 1] - self.detuning[0]) / (self.detuning.len() - 1) as f64
    }

    pub fn span(&self) -> f64 {
        self.detuning[self.detuning.len() - 1] - self.detuning[0]
    }

    /// Trapezoidal ∫α dν over the grid, Hz·cm⁻¹.
    pub fn integrated_area(&self) -> f64 {
        self.detuning
            .windows(2)
            .zip(self.alpha.windows(2))
            .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
            .sum()
    }

    /// exp(−α L) with L in metres (α is per cm).
    pub fn transmission(&self, length_m: f64) -> Vec<f64> {
        let l_cm = length_m * 100.0;
        self.alpha.iter().map(|a| (-a * l_cm).exp()).collect()
    }

    /// Inverse of [`Spectrum::transmission`].
    pub fn from_transmission(
        detuning: Vec<f64>,
        transmission: &[f64],
        length_m: f64,
    ) -> Result<Self, SpectraError> {
        if !(length_m > 0.0) {
            return Err(SpectraError::InvalidGrid("crystal length must be positive".into()));
        }
        if transmission.iter().any(|t| !(*t > 0.0)) {
            return Err(SpectraError::InvalidGrid("transmission must be positive".into()));
        }
        let l_cm = length_m * 100.0;
        let alpha = transmission.iter().map(|t| -t.ln() / l_cm).collect();
        Spectrum::new(detuning, alpha, None)
    }

    /// Multiplicative Gaussian noise of relative width `rel_sigma`.
    pub fn with_noise(&self, rel_sigma: f64, seed: u64) -> Spectrum {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alpha = self
            .alpha
            .iter()
            .map(|a| {
                let z: f64 = StandardNormal.sample(&mut rng);
                a * (1.0 + rel_sigma * z)
            })
            .collect();
        Spectrum { detuning: self.detuning.clone(), alpha, noise_sigma: None }
    }
}

/// Zero-field line and the field-dependence coefficients used for synthesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineModel {
    pub zero_field: LineShape,
    /// γ_CF, Hz/T².
    pub gamma_cf: f64,
    /// Γ_CF, inhomogeneous width of the crystal-field splitting, Hz.
    pub big_gamma_cf: f64,
    /// Δ_CF, Hz.
    pub delta_cf: f64,
    /// Linestrength field coefficient c in k(B) = k₀ + c B², Hz·cm⁻¹·T⁻².
    pub linestrength_coeff: f64,
}

impl Default for LineModel {
    fn default() -> Self {
        LineModel {
            zero_field: LineShape { center: 0.0, fwhm: 17e9, peak_alpha: 2.3 },
            gamma_cf: 8.0e9,
            big_gamma_cf: 2.7e10,
            delta_cf: 8.3e11,
            linestrength_coeff: -1.3e9,
        }
    }
}

impl LineModel {
    /// k(B)/k(0), not clamped.
    pub fn linestrength_ratio(&self, b: f64) -> f64 {
        let k0 = self.zero_field.area();
        let ls = linestrength(b, k0, self.linestrength_coeff);
        if ls.negative {
            warn_once!("linestrength negative at B = {b} T; quadratic law extrapolated too far");
        }
        ls.value / k0
    }

    pub fn fwhm_at(&self, b: f64) -> Result<f64, SpectraError> {
        Ok(self.zero_field.fwhm + broadening(b, self.gamma_cf, self.big_gamma_cf, self.delta_cf)?)
    }
}

/// One equivalence class's contribution to a synthesized spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassLine {
    pub sites: Vec<SiteIndex>,
    /// Σ |μ̂·Ê|² / 2 over the class (sums to 1 over all six sites).
    pub weight: f64,
    pub line: LineShape,
}

/// The per-class lines making up the spectrum at a given field and polarization.
pub fn class_lines(
    field: FieldConfig,
    pol: Polarization,
    consts: &MaterialConstants,
    model: &LineModel,
) -> Result<Vec<ClassLine>, SpectraError> {
    let e = pol.vector();
    let frames = all_frames();
    let b = field_vector(field);
    let classes = if field.magnitude == 0.0 {
        vec![SiteIndex::all().to_vec()]
    } else {
        equivalence_classes(&b).expect("nonzero field")
    };
    let fwhm = model.fwhm_at(field.magnitude)?;
    let ls_ratio = model.linestrength_ratio(field.magnitude);
    let area0 = model.zero_field.area();

    classes
        .into_iter()
        .map(|sites| {
            let weight: f64 = sites
                .iter()
                .map(|s| frames[(s.get() - 1) as usize].dipole_projection(&e).powi(2) / 2.0)
                .sum();
            let rep = &frames[(sites[0].get() - 1) as usize];
            let shift = zeeman_result(rep, &b, consts).optical_shift;
            let area = area0 * weight * ls_ratio;
            let line = LineShape {
                center: model.zero_field.center + shift,
                fwhm,
                peak_alpha: area / (FRAC_PI_2 * fwhm),
            };
            Ok(ClassLine { sites, weight, line })
        })
        .collect()
}

/// Sum of the class Lorentzians on `grid`.
pub fn synthesize_spectrum(
    field: FieldConfig,
    pol: Polarization,
    grid: &[f64],
    consts: &MaterialConstants,
    model: &LineModel,
) -> Result<Spectrum, SpectraError> {
    check_grid(grid)?;
    let lines = class_lines(field, pol, consts, model)?;
    let alpha = par::map(grid, |&nu| lines.iter().map(|c| c.line.eval(nu)).sum::<f64>());
    Spectrum::new(grid.to_vec(), alpha, None)
}

/// Fitted lines plus diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct LorentzFit {
    /// Sorted by centre.
    pub lines: Vec<LineShape>,
    /// Standard errors of (centre, fwhm, peak) per line, same order as `lines`.
    pub std_errors: Vec<[f64; 3]>,
    pub residual_norm: f64,
    pub iterations: usize,
    /// Set when two fitted lines are closer than FWHM/√3, where a pair of
    /// equal Lorentzians shows no central dip and the split is not resolved.
    pub ambiguous: bool,
}

fn half_max_width(s: &Spectrum, peak_idx: usize) -> f64 {
    let half = 0.5 * s.alpha[peak_idx];
    let mut lo = peak_idx;
    while lo > 0 && s.alpha[lo] > half {
        lo -= 1;
    }
    let mut hi = peak_idx;
    while hi + 1 < s.alpha.len() && s.alpha[hi] > half {
        hi += 1;
    }
    (s.detuning[hi] - s.detuning[lo]).max(2.0 * s.step())
}

/// Picks up to `n` starting lines from local maxima of the data.
pub fn auto_init(s: &Spectrum, n: usize) -> Vec<LineShape> {
    let a = &s.alpha;
    let mut maxima: Vec<usize> = (0..a.len())
        .filter(|&i| {
            let left = i == 0 || a[i] >= a[i - 1];
            let right = i + 1 == a.len() || a[i] > a[i + 1];
            left && right && a[i] > 0.0
        })
        .collect();
    maxima.sort_by(|&i, &j| a[j].total_cmp(&a[i]).then(i.cmp(&j)));
    let mut init: Vec<LineShape> = maxima
        .iter()
        .take(n)
        .map(|&i| LineShape {
            center: s.detuning[i],
            fwhm: half_max_width(s, i),
            peak_alpha: a[i],
        })
        .collect();
    // fewer maxima than requested lines: split the strongest one
    let mut k = 1.0;
    while init.len() < n {
        let base = init.first().copied().unwrap_or(LineShape {
            center: 0.5 * (s.detuning[0] + s.detuning[a.len() - 1]),
            fwhm: 0.1 * s.span(),
            peak_alpha: a.iter().cloned().fold(0.0, f64::max),
        });
        let offset = 0.25 * base.fwhm * k;
        init.push(LineShape { center: base.center + offset, fwhm: base.fwhm, peak_alpha: 0.5 * base.peak_alpha });
        k = -k - k.signum();
    }
    init
}

/// Least-squares fit of a sum of `n_lines` Lorentzians.
///
/// Without `init`, starting lines come from the data's local maxima.
pub fn fit_lorentzian(
    s: &Spectrum,
    n_lines: usize,
    init: Option<&[LineShape]>,
) -> Result<LorentzFit, SpectraError> {
    if n_lines == 0 {
        return Err(SpectraError::InvalidLine("n_lines must be at least 1".into()));
    }
    check_grid(&s.detuning)?;
    let step = s.step();
    let init: Vec<LineShape> = match init {
        Some(v) if v.len() == n_lines => v.to_vec(),
        Some(v) => {
            return Err(SpectraError::InvalidLine(format!(
                "{} initial lines for n_lines = {n_lines}",
                v.len()
            )))
        }
        None => auto_init(s, n_lines),
    };
    let mut centers: Vec<f64> = init.iter().map(|l| l.center).collect();
    centers.sort_by(f64::total_cmp);
    for w in centers.windows(2) {
        if w[1] - w[0] < step {
            return Err(SpectraError::DegenerateInit(w[0], w[1]));
        }
    }
    let widest = init.iter().map(|l| l.fwhm).fold(0.0, f64::max);
    if s.span() < 2.0 * widest {
        return Err(SpectraError::InvalidGrid(format!(
            "grid span {:e} Hz is less than twice the widest FWHM {:e} Hz",
            s.span(),
            widest
        )));
    }

    let peak_scale = s.alpha.iter().fold(0.0f64, |m, a| m.max(a.abs())).max(1e-30);
    let sigma = s.noise_sigma.unwrap_or(1.0);
    let mut specs = Vec::with_capacity(3 * n_lines);
    let mut p0 = Vec::with_capacity(3 * n_lines);
    for (k, l) in init.iter().enumerate() {
        let w = l.fwhm.max(step);
        specs.push(ParamSpec::new(&format!("center{k}"), w));
        specs.push(ParamSpec::new(&format!("fwhm{k}"), w).bounded(1e-3 * step, f64::INFINITY));
        specs.push(ParamSpec::new(&format!("peak{k}"), peak_scale).bounded(0.0, f64::INFINITY));
        p0.extend([l.center, w, l.peak_alpha.max(0.0)]);
    }
    let (x, y) = (&s.detuning, &s.alpha);
    let problem = FitProblem::new(specs, x.len(), move |p| {
        x.iter()
            .zip(y)
            .map(|(nu, a)| {
                let model: f64 = p
                    .chunks(3)
                    .map(|c| {
                        let u = 2.0 * (nu - c[0]) / c[1];
                        c[2] / (1.0 + u * u)
                    })
                    .sum();
                (model - a) / sigma
            })
            .collect()
    })
    .describe("Lorentzian sum");
    let fit = least_squares(&problem, &p0, &FitOptions::default())?;

    // unknown noise: scale the covariance by the residual variance
    let var_scale = if s.noise_sigma.is_some() {
        1.0
    } else {
        let dof = (x.len() - 3 * n_lines).max(1) as f64;
        fit.residual_norm * fit.residual_norm / dof
    };
    let mut rows: Vec<(LineShape, [f64; 3])> = fit
        .params
        .chunks(3)
        .enumerate()
        .map(|(k, c)| {
            let se = |j: usize| (fit.covariance[(3 * k + j, 3 * k + j)] * var_scale).max(0.0).sqrt();
            (
                LineShape { center: c[0], fwhm: c[1], peak_alpha: c[2] },
                [se(0), se(1), se(2)],
            )
        })
        .collect();
    rows.sort_by(|a, b| a.0.center.total_cmp(&b.0.center));
    let ambiguous = rows
        .windows(2)
        .any(|w| (w[1].0.center - w[0].0.center) < w[0].0.fwhm.max(w[1].0.fwhm) / 3f64.sqrt());
    Ok(LorentzFit {
        lines: rows.iter().map(|r| r.0).collect(),
        std_errors: rows.iter().map(|r| r.1).collect(),
        residual_norm: fit.residual_norm * sigma,
        iterations: fit.iterations,
        ambiguous,
    })
}

/// Σ of the analytic line areas between `lo` and `hi`.
pub fn expected_grid_area(lines: &[LineShape], lo: f64, hi: f64) -> f64 {
    lines.iter().map(|l| l.area_between(lo, hi)).sum()
}
