//! Table-producing subcommands.

use crate::output::{fmt_f64, Table};
use crate::{
    BleaneyArgs, CliError, DominanceMapArgs, FitRelaxArgs, FitSpectrumArgs, HoleDecayArgs,
    RateModelArgs, RelaxRateArgs, ShiftCurveArgs, ShiftVsBArgs, SiteTableArgs, SpectrumArgs,
};
use std::path::Path;
use tmyag_core::fitting::RELAX_PARAM_NAMES;
use tmyag_core::geometry::{all_frames, class_label, Polarization};
use tmyag_core::relaxation::{rate_for_site, rate_terms, synthetic_experiments};
use tmyag_core::spectra::{class_lines, uniform_grid};
use tmyag_core::zeeman::{shift_coefficient, zeeman_result};
use tmyag_core::*;

pub(crate) fn parse_pol(s: &str) -> Result<Polarization, CliError> {
    s.parse::<Polarization>()
        .map_err(|e| CliError::usage("InvalidValue", format!("--pol: {e}")))
}

/// `n` evenly spaced values from `a` to `b` inclusive, computed as
/// a + (b − a)·i/(n − 1) so grid points land exactly on round numbers.
pub(crate) fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Points from `lo` to `hi` at (approximately) `step`, both ends included.
fn stepped(flag: &str, lo: f64, hi: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(CliError::usage(
            "InvalidValue",
            format!("{flag}: need min <= max and step > 0, got [{lo}, {hi}] step {step}"),
        ));
    }
    let n = ((hi - lo) / step).round() as usize + 1;
    Ok(linspace(lo, hi, n))
}

fn nonnegative(flag: &str, v: f64) -> Result<f64, CliError> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::usage("InvalidValue", format!("{flag} must be >= 0, got {v}")))
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>, CliError> {
    csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
            CliError::compute("FileNotFound", format!("{}: not found", path.display()))
        }
        _ => CliError::from(e),
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::compute("ParseError", format!("{}: {e}", path.display())))
}

fn rate_model(m: &RateModelArgs) -> Result<(f64, RelaxParams), CliError> {
    let p = match &m.params {
        Some(path) => read_json::<RelaxParams>(path)?,
        None => RelaxParams::reference(),
    };
    p.check()?;
    Ok((m.gamma_mhz_per_t * 1e6, p))
}

pub fn site_table(a: &SiteTableArgs, consts: &MaterialConstants) -> Result<Table, CliError> {
    let b_mag = nonnegative("--B", a.b)?;
    let cfg = FieldConfig::from_degrees(b_mag, a.theta_deg);
    let pol = parse_pol(&a.pol)?.vector();
    let b = field_vector(cfg);
    let classes = if b_mag > 0.0 { equivalence_classes(&b)? } else { vec![SiteIndex::all().to_vec()] };
    let label_of = |s: SiteIndex| {
        classes
            .iter()
            .find(|c| c.contains(&s))
            .map(|c| class_label(c))
            .unwrap_or_default()
    };
    let dir = cfg.direction();
    let mut t = Table::new(&[
        "site",
        "class",
        "B_local_x_T",
        "B_local_y_T",
        "B_local_z_T",
        "splitting_ground_Hz",
        "splitting_excited_Hz",
        "D_ground_Hz",
        "D_excited_Hz",
        "shift_Hz",
        "gamma2_Hz_per_T2",
        "dipole_projection",
    ]);
    for f in all_frames() {
        let z = zeeman_result(&f, &b, consts);
        let local = local_field(&f, &b);
        t.push(vec![
            f.site.to_string(),
            label_of(f.site),
            fmt_f64(local.x),
            fmt_f64(local.y),
            fmt_f64(local.z),
            fmt_f64(z.splitting_ground),
            fmt_f64(z.splitting_excited),
            fmt_f64(z.d_ground),
            fmt_f64(z.d_excited),
            fmt_f64(z.optical_shift),
            fmt_f64(shift_coefficient(&f, &dir, consts)?),
            fmt_f64(f.dipole_projection(&pol)),
        ]);
    }
    Ok(t)
}

pub fn shift_curve(a: &ShiftCurveArgs, consts: &MaterialConstants) -> Result<Table, CliError> {
    let b = nonnegative("--B", a.b)?;
    let degs = stepped("--theta-*-deg", a.theta_min_deg, a.theta_max_deg, a.theta_step_deg)?;
    let thetas: Vec<f64> = degs.iter().map(|d| d.to_radians()).collect();
    let rows = tmyag_core::zeeman::shift_curve(&SiteIndex::all(), &thetas, b, consts);
    let mut t = Table::new(&["theta_deg", "class", "shift_Hz"]);
    // rows follow thetas; recover the degree value instead of converting back
    let mut k = 0;
    for (i, th) in thetas.iter().enumerate() {
        while k < rows.len() && rows[k].theta == *th {
            t.push(vec![fmt_f64(degs[i]), class_label(&rows[k].class), fmt_f64(rows[k].shift)]);
            k += 1;
        }
    }
    Ok(t)
}

pub fn shift_vs_b(a: &ShiftVsBArgs, consts: &MaterialConstants) -> Result<Table, CliError> {
    let bs = stepped("--B-max/--B-step", 0.0, nonnegative("--B-max", a.b_max)?, a.b_step)?;
    let dir = FieldConfig::from_degrees(1.0, a.theta_deg).direction();
    let frames = all_frames();
    let mut classes = equivalence_classes(&dir)?;
    if let Some(p) = &a.pol {
        let e = parse_pol(p)?.vector();
        classes.retain(|c| c.iter().any(|s| frames[(s.get() - 1) as usize].dipole_projection(&e) != 0.0));
    }
    let coeffs: Vec<f64> = classes
        .iter()
        .map(|c| shift_coefficient(&frames[(c[0].get() - 1) as usize], &dir, consts))
        .collect::<Result<_, _>>()?;
    let mut header = vec!["B_T".to_string()];
    header.extend(classes.iter().map(|c| format!("shift_{}_Hz", class_label(c))));
    let mut t = Table::new(&header);
    for b in bs {
        let mut row = vec![fmt_f64(b)];
        row.extend(coeffs.iter().map(|k| fmt_f64(k * b * b)));
        t.push(row);
    }
    Ok(t)
}

fn spectrum_grid(span_ghz: f64, step_mhz: f64) -> Result<Vec<f64>, CliError> {
    uniform_grid(span_ghz * 1e9, step_mhz * 1e6)
        .map_err(|e| CliError::usage("InvalidValue", format!("--grid-span-GHz/--grid-step-MHz: {e}")))
}

pub fn spectrum(a: &SpectrumArgs, consts: &MaterialConstants) -> Result<Table, CliError> {
    let cfg = FieldConfig::from_degrees(nonnegative("--B", a.b)?, a.theta_deg);
    let grid = spectrum_grid(a.grid_span_ghz, a.grid_step_mhz)?;
    let mut s = synthesize_spectrum(cfg, parse_pol(&a.pol)?, &grid, consts, &LineModel::default())?;
    if nonnegative("--noise", a.noise)? > 0.0 {
        s = s.with_noise(a.noise, a.seed);
    }
    let (name, values) = if a.transmission {
        let l = a.length_mm.expect("clap enforces --length-mm");
        if !(l > 0.0) {
            return Err(CliError::usage("InvalidValue", "--length-mm must be positive"));
        }
        ("transmission", s.transmission(l * 1e-3))
    } else {
        ("alpha_per_cm", s.alpha.clone())
    };
    let mut t = Table::new(&["detuning_Hz", name]);
    for (x, y) in s.detuning.iter().zip(values) {
        t.push(vec![fmt_f64(*x), fmt_f64(y)]);
    }
    Ok(t)
}

/// Reads a two-column spectrum CSV written by `spectrum`.
pub fn read_spectrum(path: &Path, length_mm: Option<f64>) -> Result<Spectrum, CliError> {
    let mut rdr = open_csv(path)?;
    let header = rdr.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let x_col = col("detuning_Hz")
        .ok_or_else(|| CliError::compute("ParseError", "missing detuning_Hz column"))?;
    let (y_col, is_t) = match (col("alpha_per_cm"), col("transmission")) {
        (Some(c), _) => (c, false),
        (None, Some(c)) => (c, true),
        _ => return Err(CliError::compute("ParseError", "need alpha_per_cm or transmission column")),
    };
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |c: usize| {
            rec.get(c)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| CliError::compute("ParseError", format!("line {}: bad number", i + 2)))
        };
        x.push(num(x_col)?);
        y.push(num(y_col)?);
    }
    if is_t {
        let l = length_mm.ok_or_else(|| {
            CliError::usage("MissingFlag", "transmission input needs --length-mm")
        })?;
        Ok(Spectrum::from_transmission(x, &y, l * 1e-3)?)
    } else {
        Ok(Spectrum::new(x, y, None)?)
    }
}

pub fn fit_spectrum(a: &FitSpectrumArgs, consts: &MaterialConstants) -> Result<Table, CliError> {
    let s = read_spectrum(&a.input, a.length_mm)?;
    let nearest_peak = |c: f64| {
        let i = s
            .detuning
            .iter()
            .enumerate()
            .min_by(|x, y| (x.1 - c).abs().total_cmp(&(y.1 - c).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        s.alpha[i].max(0.0)
    };
    let init: Option<Vec<LineShape>> = if let Some(b) = a.b {
        let cfg = FieldConfig::from_degrees(nonnegative("--B", b)?, a.theta_deg);
        let mut lines: Vec<LineShape> = class_lines(cfg, parse_pol(&a.pol)?, consts, &LineModel::default())?
            .into_iter()
            .filter(|l| l.weight > 0.0)
            .map(|l| l.line)
            .collect();
        lines.sort_by(|x, y| x.center.total_cmp(&y.center));
        for l in &mut lines {
            l.peak_alpha = nearest_peak(l.center);
        }
        Some(lines)
    } else {
        a.init_centers_ghz.as_ref().map(|cs| {
            cs.iter()
                .map(|c| LineShape { center: c * 1e9, fwhm: a.init_fwhm_ghz * 1e9, peak_alpha: nearest_peak(c * 1e9) })
                .collect()
        })
    };
    let n = match (a.n_lines, &init) {
        (Some(n), Some(v)) if n != v.len() => {
            return Err(CliError::usage(
                "ConflictingFlags",
                format!("--n-lines {n} but {} starting lines", v.len()),
            ))
        }
        (Some(n), _) => n,
        (None, Some(v)) => v.len(),
        (None, None) => 1,
    };
    let fit = fit_lorentzian(&s, n, init.as_deref())?;
    let mut t = Table::new(&[
        "line",
        "center_Hz",
        "center_err_Hz",
        "fwhm_Hz",
        "fwhm_err_Hz",
        "peak_alpha_per_cm",
        "peak_alpha_err_per_cm",
        "area_Hz_per_cm",
        "ambiguous",
    ]);
    for (k, (l, e)) in fit.lines.iter().zip(&fit.std_errors).enumerate() {
        t.push(vec![
            (k + 1).to_string(),
            fmt_f64(l.center),
            fmt_f64(e[0]),
            fmt_f64(l.fwhm),
            fmt_f64(e[1]),
            fmt_f64(l.peak_alpha),
            fmt_f64(e[2]),
            fmt_f64(l.area()),
            fit.ambiguous.to_string(),
        ]);
    }
    Ok(t)
}

const TERM_HEADER: [&str; 7] = ["B_T", "T_K", "residual_Hz", "direct_Hz", "orbach_Hz", "total_Hz", "dominant"];

pub fn relax_rate(a: &RelaxRateArgs) -> Result<Table, CliError> {
    let (gamma, p) = rate_model(&a.model)?;
    let site = a.site.map(SiteIndex::new).transpose()?;
    let mut t = Table::new(&TERM_HEADER);
    for &b in &a.b {
        for &temp in &a.t {
            if let Some(s) = site {
                rate_for_site(s, b, temp, gamma, &p)?;
            }
            let terms = rate_terms(b, temp, gamma, &p)?;
            t.push(vec![
                fmt_f64(b),
                fmt_f64(temp),
                fmt_f64(terms.residual),
                fmt_f64(terms.direct),
                fmt_f64(terms.orbach),
                fmt_f64(terms.total()),
                terms.dominant().to_string(),
            ]);
        }
    }
    Ok(t)
}

pub fn dominance_map(a: &DominanceMapArgs) -> Result<Table, CliError> {
    let (gamma, p) = rate_model(&a.model)?;
    if a.b_points == 0 || a.t_points == 0 {
        return Err(CliError::usage("InvalidValue", "--B-points and --T-points must be >= 1"));
    }
    let bs = linspace(a.b_min, a.b_max, a.b_points);
    let ts = linspace(a.t_min, a.t_max, a.t_points);
    let mut t = Table::new(&TERM_HEADER);
    for c in tmyag_core::dominance_map(&bs, &ts, gamma, &p)? {
        t.push(vec![
            fmt_f64(c.b),
            fmt_f64(c.temp),
            fmt_f64(c.terms.residual),
            fmt_f64(c.terms.direct),
            fmt_f64(c.terms.orbach),
            fmt_f64(c.terms.total()),
            c.dominant.to_string(),
        ]);
    }
    Ok(t)
}

/// Evenly spaced waiting times covering `half_lives` half-lives of `rate`.
pub fn decay_times(rate: f64, points: usize, half_lives: f64) -> Vec<f64> {
    linspace(0.0, half_lives * std::f64::consts::LN_2 / rate, points)
}

pub fn hole_decay(a: &HoleDecayArgs) -> Result<Table, CliError> {
    if let Some(path) = &a.input {
        let mut rdr = open_csv(path)?;
        let (mut times, mut areas) = (Vec::new(), Vec::new());
        for rec in rdr.deserialize::<(f64, f64)>() {
            let (t, y) = rec?;
            times.push(t);
            areas.push(y);
        }
        let est = extract_t1(&HoleDecay { times, areas })?;
        let mut t = Table::new(&["T1_s", "sigma_T1_s", "rate_Hz", "A0", "residual_rms", "max_residual"]);
        t.push(vec![
            fmt_f64(est.t1),
            fmt_f64(est.sigma_t1),
            fmt_f64(est.rate),
            fmt_f64(est.a0),
            fmt_f64(est.residual_rms),
            fmt_f64(est.max_residual),
        ]);
        return Ok(t);
    }
    let r = match (a.rate_hz, a.b, a.t) {
        (Some(r), _, _) => r,
        (None, Some(b), Some(temp)) => {
            let (gamma, p) = rate_model(&a.model)?;
            rate(b, temp, gamma, &p)?
        }
        _ => {
            return Err(CliError::usage(
                "MissingFlag",
                "give --input, --rate-Hz, or both --B and --T",
            ))
        }
    };
    if a.points < 2 || !(a.half_lives > 0.0) {
        return Err(CliError::usage("InvalidValue", "--points must be >= 2 and --half-lives > 0"));
    }
    if !(r > 0.0) {
        return Err(CliError::compute("NonpositiveInput", format!("rate must be positive, got {r}")));
    }
    let series = simulate_hole_decay(r, &decay_times(r, a.points, a.half_lives), a.a0, a.noise, a.seed)?;
    let mut t = Table::new(&["time_s", "area"]);
    for (x, y) in series.times.iter().zip(&series.areas) {
        t.push(vec![fmt_f64(*x), fmt_f64(*y)]);
    }
    Ok(t)
}

/// Reads a B_T,T_K,rate_Hz,sigma_Hz CSV labelled by its file stem.
pub fn read_rate_dataset(path: &Path) -> Result<RateDataset, CliError> {
    let mut rdr = open_csv(path)?;
    let records = rdr.deserialize::<RateRecord>().collect::<Result<Vec<_>, _>>()?;
    let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(RateDataset::new(&label, records)?)
}

pub fn write_rate_dataset(d: &RateDataset, path: &Path) -> Result<(), CliError> {
    let mut t = Table::new(&["B_T", "T_K", "rate_Hz", "sigma_Hz"]);
    for r in &d.records {
        t.push(vec![fmt_f64(r.b), fmt_f64(r.temp), fmt_f64(r.rate), fmt_f64(r.sigma)]);
    }
    t.write_to(path)
}

pub const RELAX_PARAM_UNITS: [&str; 6] = ["Hz", "Hz-1_K-1_T-2", "Hz", "Hz_per_T2", "Hz", "Hz_per_T2"];

pub fn joint_fit_table(fit: &JointFit) -> Table {
    let mut t = Table::new(&["param", "unit", "value", "std_error", "poorly_determined"]);
    for (k, name) in RELAX_PARAM_NAMES.iter().enumerate() {
        t.push(vec![
            name.to_string(),
            RELAX_PARAM_UNITS[k].to_string(),
            fmt_f64(fit.fit.params[k]),
            fmt_f64(fit.fit.std_errors[k]),
            fit.poorly_determined.contains(name).to_string(),
        ]);
    }
    t
}

pub fn fit_relax(a: &FitRelaxArgs) -> Result<Table, CliError> {
    let gamma = a.gamma_mhz_per_t * 1e6;
    let init = match &a.init {
        Some(p) => read_json::<RelaxParams>(p)?,
        None => RelaxParams::reference(),
    };
    let data = if a.synthetic {
        synthetic_experiments(&RelaxParams::reference(), gamma, nonnegative("--noise", a.noise)?, a.seed)?
    } else {
        a.input.iter().map(|p| read_rate_dataset(p)).collect::<Result<Vec<_>, _>>()?
    };
    let fit = joint_relax_fit(&data, gamma, &init)?;
    if !fit.poorly_determined.is_empty() {
        log::warn!("poorly determined: {}", fit.poorly_determined.join(", "));
    }
    Ok(joint_fit_table(&fit))
}

pub fn bleaney(a: &BleaneyArgs, consts: &MaterialConstants) -> Result<Table, CliError> {
    let gamma = a.gamma_mhz_per_t * 1e6;
    let rho = a.rho.unwrap_or(consts.rho);
    let v_l = a.v_l.unwrap_or(consts.v_l);
    let v_t = a.v_t.unwrap_or(consts.v_t);
    let alpha_d = bleaney_alpha_d(gamma, rho, v_l, v_t)?;
    let mut t = Table::new(&[
        "gamma_Hz_per_T",
        "rho_kg_per_m3",
        "v_l_m_per_s",
        "v_t_m_per_s",
        "v_mean_m_per_s",
        "alpha_D_Hz-1_K-1_T-2",
    ]);
    t.push(vec![
        fmt_f64(gamma),
        fmt_f64(rho),
        fmt_f64(v_l),
        fmt_f64(v_t),
        fmt_f64((v_l + 2.0 * v_t) / 3.0),
        fmt_f64(alpha_d),
    ]);
    Ok(t)
}
