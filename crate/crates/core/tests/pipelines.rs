//! End-to-end checks through the public API.

use tmyag_core::constants::read_constants_unchecked;
use tmyag_core::fitting::monte_carlo_joint_fits;
use tmyag_core::geometry::{class_label, Polarization};
use tmyag_core::relaxation::{synthetic_experiments, VALID_T};
use tmyag_core::spectra::{class_lines, uniform_grid};
use tmyag_core::zeeman::shift_curve;
use tmyag_core::*;

const GAMMA: f64 = 4.0e8;

#[test]
fn constants_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    let c = MaterialConstants::default_set();
    write_constants(&c, &path).unwrap();
    let back = load_constants(path.to_str().unwrap()).unwrap();
    assert_eq!(back.hash(), c.hash());
    assert_eq!(read_constants_unchecked("default").unwrap().hash(), c.hash());
}

#[test]
fn scaled_gamma_rejected_by_strict_loader() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    write_constants(&MaterialConstants::default_set().with_gamma_j_scaled(2.0), &path).unwrap();
    let err = load_constants(path.to_str().unwrap()).unwrap_err();
    assert_eq!(err.name(), "InvariantViolation");
    assert!(read_constants_unchecked(path.to_str().unwrap()).is_ok());
}

#[test]
fn shift_curve_classes_at_111() {
    let c = MaterialConstants::default_set();
    let rows = shift_curve(&SiteIndex::all(), &[0.0], 6.0, &c);
    let labels: Vec<String> = rows.iter().map(|r| class_label(&r.class)).collect();
    assert_eq!(labels, vec!["1+3+5", "2+4+6"]);
    assert!((rows[0].shift / 153e9 - 1.0).abs() < 0.05);
}

#[test]
fn synthesized_spectrum_refits_to_class_lines() {
    let c = MaterialConstants::default_set();
    let model = LineModel::default();
    let cfg = FieldConfig::from_degrees(6.0, 90.0);
    let grid = uniform_grid(600e9, 100e6).unwrap();
    let s = synthesize_spectrum(cfg, Polarization::AlongM1M12, &grid, &c, &model).unwrap();
    let bright: Vec<LineShape> = class_lines(cfg, Polarization::AlongM1M12, &c, &model)
        .unwrap()
        .into_iter()
        .filter(|l| l.weight > 0.0)
        .map(|l| l.line)
        .collect();
    let fit = fit_lorentzian(&s, bright.len(), Some(&bright)).unwrap();
    let mut want = bright.clone();
    want.sort_by(|a, b| a.center.total_cmp(&b.center));
    for (g, w) in fit.lines.iter().zip(&want) {
        assert!((g.center - w.center).abs() < 1e-6 * w.fwhm);
        assert!((g.fwhm / w.fwhm - 1.0).abs() < 1e-6);
    }
}

#[test]
fn hole_decay_feeds_joint_fit() {
    // rates from simulated hole decays, fitted jointly
    let truth = RelaxParams::reference();
    let mut records = Vec::new();
    for (b, t) in [(0.0, 1.6), (3.0, 1.6), (6.0, 1.6), (3.0, 2.5), (3.0, 3.5), (6.0, 4.0), (1.0, 4.0), (3.0, 4.5)] {
        assert!(t >= VALID_T.0);
        let r = rate(b, t, GAMMA, &truth).unwrap();
        let times: Vec<f64> = (0..12).map(|k| k as f64 * 3.0 * 2f64.ln() / r / 11.0).collect();
        let est = extract_t1(&simulate_hole_decay(r, &times, 1.0, 0.0, 0).unwrap()).unwrap();
        assert!((est.rate / r - 1.0).abs() < 1e-9);
        records.push(RateRecord { b, temp: t, rate: est.rate, sigma: 0.1 * est.rate });
    }
    let data = [RateDataset::new("decays", records).unwrap()];
    let fit = joint_relax_fit(&data, GAMMA, &truth).unwrap();
    assert!((fit.params.alpha_d / truth.alpha_d - 1.0).abs() < 1e-6);
}

#[test]
fn monte_carlo_is_reproducible() {
    let truth = RelaxParams::reference();
    let seeds = [4u64, 5, 6];
    let a = monte_carlo_joint_fits(&truth, &truth, GAMMA, 0.1, &seeds);
    let b = monte_carlo_joint_fits(&truth, &truth, GAMMA, 0.1, &seeds);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.as_ref().unwrap().params, y.as_ref().unwrap().params);
    }
    let direct = joint_relax_fit(&synthetic_experiments(&truth, GAMMA, 0.1, 5).unwrap(), GAMMA, &truth).unwrap();
    assert_eq!(direct.params, a[1].as_ref().unwrap().params);
}

#[test]
fn class_labels_are_stable() {
    let b = field_vector(FieldConfig::from_degrees(1.0, 30.0));
    let labels: Vec<String> = equivalence_classes(&b).unwrap().iter().map(|c| class_label(c)).collect();
    assert!(labels.contains(&"3+5".to_string()));
    assert!(labels.contains(&"4+6".to_string()));
}
