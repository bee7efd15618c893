//! Enhanced nuclear Zeeman splittings and quadratic Zeeman shifts.
//!
//! For a site with local field components `B_α` the nuclear spin-½ splitting
//! of a crystal-field singlet is `|(γ_x B_x, γ_y B_y, γ_z B_z)|`, and the
//! level displacement (in Hz) is
//!
//! ```text
//! D / h = g_J μ_B / (2 h A_J) · Σ_α (γ_α − γ_n) B_α²
//! ```
//!
//! with γ in Hz/T and A_J in Hz. The optical shift is `D_ground − D_excited`.
//! Everything here is strictly perturbative: no saturation once the shift
//! approaches the crystal-field splitting.

use crate::constants::MaterialConstants;
use crate::geometry::{all_frames, equivalence_classes, FieldConfig, SiteFrame, SiteIndex, Vec3};
use crate::geometry::{field_vector, local_field};
use crate::par;
use crate::relaxation::RelaxParams;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZeemanError {
    #[error("field direction has zero length")]
    ZeroDirection,
    #[error("crystal-field splitting must be positive, got {0}")]
    NonpositiveSplitting(f64),
}

impl ZeemanError {
    pub fn name(&self) -> &'static str {
        match self {
            ZeemanError::ZeroDirection => "ZeroDirection",
            ZeemanError::NonpositiveSplitting(_) => "NonpositiveSplitting",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpinState {
    Ground,
    Excited,
}

/// Per-site Zeeman quantities at one field. All entries in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeemanResult {
    pub site: SiteIndex,
    pub splitting_ground: f64,
    pub splitting_excited: f64,
    pub d_ground: f64,
    pub d_excited: f64,
    pub optical_shift: f64,
}

pub fn hyperfine_splitting(
    site: &SiteFrame,
    b: &Vec3,
    state: SpinState,
    consts: &MaterialConstants,
) -> f64 {
    let local = local_field(site, b);
    consts.gamma_j(state).component_mul(&local).norm()
}

/// Level displacement D_J/h in Hz.
pub fn quadratic_displacement(
    site: &SiteFrame,
    b: &Vec3,
    state: SpinState,
    consts: &MaterialConstants,
) -> f64 {
    let local = local_field(site, b);
    let gamma = consts.gamma_j(state);
    let weighted: f64 = (0..3)
        .map(|k| (gamma[k] - consts.gamma_n) * local[k] * local[k])
        .sum();
    consts.g_j(state) * consts.mu_b / (2.0 * consts.h * consts.a_j(state)) * weighted
}

pub fn zeeman_result(site: &SiteFrame, b: &Vec3, consts: &MaterialConstants) -> ZeemanResult {
    let d_ground = quadratic_displacement(site, b, SpinState::Ground, consts);
    let d_excited = quadratic_displacement(site, b, SpinState::Excited, consts);
    let optical_shift = d_ground - d_excited;
    if optical_shift.abs() > 0.1 * consts.delta_cf0 {
        warn_once!(
            "site {}: shift {:.3e} Hz exceeds 10% of the crystal-field splitting; quadratic model is outside its regime",
            site.site, optical_shift
        );
    }
    ZeemanResult {
        site: site.site,
        splitting_ground: hyperfine_splitting(site, b, SpinState::Ground, consts),
        splitting_excited: hyperfine_splitting(site, b, SpinState::Excited, consts),
        d_ground,
        d_excited,
        optical_shift,
    }
}

/// γ₂ in Hz/T²: the optical shift per tesla squared along `direction`.
pub fn shift_coefficient(
    site: &SiteFrame,
    direction: &Vec3,
    consts: &MaterialConstants,
) -> Result<f64, ZeemanError> {
    let n = direction.norm();
    if !(n > 0.0) {
        return Err(ZeemanError::ZeroDirection);
    }
    let u = direction / n;
    Ok(quadratic_displacement(site, &u, SpinState::Ground, consts)
        - quadratic_displacement(site, &u, SpinState::Excited, consts))
}

/// Ground-state splitting per tesla along `direction` (the γ that enters the
/// direct-phonon relaxation term).
pub fn effective_gamma(
    site: &SiteFrame,
    direction: &Vec3,
    consts: &MaterialConstants,
) -> Result<f64, ZeemanError> {
    let n = direction.norm();
    if !(n > 0.0) {
        return Err(ZeemanError::ZeroDirection);
    }
    Ok(hyperfine_splitting(site, &(direction / n), SpinState::Ground, consts))
}

/// One row of a shift-vs-angle table.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftPoint {
    pub theta: f64,
    pub class: Vec<SiteIndex>,
    pub shift: f64,
}

/// Optical shift per equivalence class over a θ grid at fixed |B|.
///
/// `sites` restricts output to classes containing at least one listed site
/// (the class is still reported whole); pass all six for the full table.
pub fn shift_curve(
    sites: &[SiteIndex],
    thetas: &[f64],
    magnitude: f64,
    consts: &MaterialConstants,
) -> Vec<ShiftPoint> {
    let frames = all_frames();
    let rows = par::map(thetas, |&theta| {
        let cfg = FieldConfig::new(magnitude, theta);
        let dir = cfg.direction();
        let b = field_vector(cfg);
        let classes = equivalence_classes(&dir).expect("unit direction");
        classes
            .into_iter()
            .filter(|class| class.iter().any(|s| sites.contains(s)))
            .map(|class| {
                let rep = &frames[(class[0].get() - 1) as usize];
                let r = zeeman_result(rep, &b, consts);
                ShiftPoint {
                    theta,
                    class,
                    shift: r.optical_shift,
                }
            })
            .collect::<Vec<_>>()
    });
    rows.into_iter().flatten().collect()
}

/// Extra inhomogeneous width γ_CF Γ_CF B² / Δ_CF, in Hz.
pub fn broadening(
    b: f64,
    gamma_cf: f64,
    big_gamma_cf: f64,
    delta_cf: f64,
) -> Result<f64, ZeemanError> {
    if !(delta_cf > 0.0) {
        return Err(ZeemanError::NonpositiveSplitting(delta_cf));
    }
    Ok(gamma_cf * big_gamma_cf / delta_cf * b * b)
}

/// Δ_CF(B) = Δ_CF⁰ + γ_CF B², in Hz.
pub fn crystal_field_splitting(b: f64, p: &RelaxParams) -> f64 {
    p.delta_cf0 + p.gamma_cf * b * b
}

/// Integrated linestrength k₀ + c B² (GHz·cm⁻¹ at the I/O boundary, any
/// consistent unit here).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linestrength {
    pub value: f64,
    /// Set when the quadratic law has gone negative; the value is not clamped.
    pub negative: bool,
}

pub fn linestrength(b: f64, k0: f64, c: f64) -> Linestrength {
    let value = k0 + c * b * b;
    Linestrength {
        value,
        negative: value < 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{dir_111, dir_112, frame, site_frame, theta_001};
    use proptest::prelude::*;

    fn consts() -> MaterialConstants {
        MaterialConstants::default_set()
    }

    fn site(i: i64) -> SiteFrame {
        site_frame(i).unwrap()
    }

    #[test]
    fn zero_field_gives_zero() {
        let c = consts();
        for f in all_frames() {
            let r = zeeman_result(&f, &Vec3::zeros(), &c);
            assert_eq!(r.splitting_ground, 0.0);
            assert_eq!(r.d_ground, 0.0);
            assert_eq!(r.optical_shift, 0.0);
        }
    }

    #[test]
    fn splitting_along_111() {
        let c = consts();
        let b = dir_111();
        let g = hyperfine_splitting(&site(1), &b, SpinState::Ground, &c);
        let e = hyperfine_splitting(&site(1), &b, SpinState::Excited, &c);
        assert!((g / 4.0e8 - 1.0).abs() < 0.05);
        assert!(g / e > 5.0);
    }

    #[test]
    fn shift_at_three_tesla() {
        let c = consts();
        let r = zeeman_result(&site(1), &(dir_111() * 3.0), &c);
        assert!((r.optical_shift / 3.78e10 - 1.0).abs() < 0.10);
    }

    #[test]
    fn coefficients() {
        let c = consts();
        for i in [1, 3, 5] {
            let k = shift_coefficient(&site(i), &dir_111(), &c).unwrap();
            assert!((k / 4.2e9 - 1.0).abs() < 0.10);
        }
        let k2 = shift_coefficient(&site(2), &dir_111(), &c).unwrap();
        assert!(k2.abs() < 0.15e9);
        for i in [4, 6] {
            let k = shift_coefficient(&site(i), &dir_112(), &c).unwrap();
            assert!((k * 36.0 / 1.6e11 - 1.0).abs() < 0.10);
        }
        assert_eq!(
            shift_coefficient(&site(1), &Vec3::zeros(), &c),
            Err(ZeemanError::ZeroDirection)
        );
    }

    #[test]
    fn shift_curve_table_points() {
        let c = consts();
        let all = SiteIndex::all();
        let rows = shift_curve(&all, &[0.0, theta_001()], 6.0, &c);
        let at = |theta: f64, s: u8| {
            rows.iter()
                .find(|r| r.theta == theta && r.class.iter().any(|x| x.get() == s))
                .unwrap()
                .clone()
        };
        let a = at(0.0, 1);
        assert_eq!(a.class.len(), 3);
        assert!((a.shift / 1.51e11 - 1.0).abs() < 0.05);
        assert!((a.shift / 153e9 - 1.0).abs() < 0.05);
        let z = at(0.0, 4);
        assert!(z.shift.abs() < 0.15e9 * 36.0);
        let cc = at(theta_001(), 3);
        assert!((cc.shift / 1.2e11 - 1.0).abs() < 0.10);
        // two rows at θ=0, four at [001]
        assert_eq!(rows.iter().filter(|r| r.theta == 0.0).count(), 2);
    }

    #[test]
    fn shift_curve_site_filter() {
        let c = consts();
        let only1 = [SiteIndex::new(1).unwrap()];
        let rows = shift_curve(&only1, &[0.3], 6.0, &c);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].class, vec![SiteIndex::new(1).unwrap()]);
    }

    #[test]
    fn broadening_examples() {
        assert_eq!(broadening(0.0, 8e9, 2.7e10, 8.3e11).unwrap(), 0.0);
        let k = broadening(1.0, 8.0e9, 2.7e10, 8.3e11).unwrap();
        assert!((k - 8.0e9 * 2.7e10 / 8.3e11).abs() < 1e-3);
        assert!((k / 2.60e8 - 1.0).abs() < 0.01);
        let k2 = broadening(1.0, 8.0e9, 5.4e10, 8.3e11).unwrap();
        assert!((k2 / k - 2.0).abs() < 1e-15);
        assert_eq!(
            broadening(1.0, 1.0, 1.0, 0.0),
            Err(ZeemanError::NonpositiveSplitting(0.0))
        );
    }

    #[test]
    fn crystal_field_examples() {
        let p = RelaxParams::reference();
        assert_eq!(crystal_field_splitting(0.0, &p), 8.3e11);
        assert!((crystal_field_splitting(6.0, &p) - 1.118e12).abs() < 1.0);
        assert!((p.gamma_cf / (2.0 * 4.69e9) - 1.0).abs() < 0.20);
    }

    #[test]
    fn linestrength_examples() {
        let k0 = 61.4;
        assert_eq!(linestrength(0.0, k0, -1.3).value, k0);
        assert!((linestrength(3.0, k0, -1.3).value - (k0 - 11.7)).abs() < 1e-12);
        assert!((linestrength(6.0, k0, -1.3).value - (k0 - 46.8)).abs() < 1e-12);
        let neg = linestrength(6.0, 10.0, -1.3);
        assert!(neg.negative && neg.value < 0.0);
    }

    #[test]
    fn argmax_is_scale_invariant() {
        let c = consts();
        let thetas: Vec<f64> = (0..=90).map(|d| (d as f64).to_radians()).collect();
        let argmax = |c: &MaterialConstants, s: u8| {
            let f = frame(SiteIndex::new(s as i64).unwrap());
            thetas
                .iter()
                .map(|&t| shift_coefficient(&f, &FieldConfig::new(1.0, t).direction(), c).unwrap())
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap()
                .0
        };
        let scaled = c.with_gamma_j_scaled(1.7);
        for s in [1, 3, 4] {
            assert_eq!(argmax(&c, s), argmax(&scaled, s));
        }
    }

    proptest! {
        #[test]
        fn field_scaling_laws(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0, i in 1i64..=6) {
            let c = consts();
            let b = Vec3::new(x, y, z) * 3.0;
            prop_assume!(b.norm() > 1e-2);
            let f = site(i);
            let r1 = zeeman_result(&f, &b, &c);
            let r2 = zeeman_result(&f, &(b * 2.0), &c);
            prop_assert!((r2.splitting_ground - 2.0 * r1.splitting_ground).abs() <= 1e-9 * r1.splitting_ground.abs().max(1.0));
            prop_assert!((r2.d_ground - 4.0 * r1.d_ground).abs() <= 1e-9 * r1.d_ground.abs().max(1.0));
            prop_assert!((r2.optical_shift - 4.0 * r1.optical_shift).abs() <= 1e-9 * r1.optical_shift.abs().max(1.0));
            prop_assert_eq!(r1.optical_shift, r1.d_ground - r1.d_excited);
        }

        #[test]
        fn coefficient_matches_displacements(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0, mag in 0.0f64..6.0, i in 1i64..=6) {
            let c = consts();
            let d = Vec3::new(x, y, z);
            prop_assume!(d.norm() > 1e-3);
            let f = site(i);
            let k = shift_coefficient(&f, &d, &c).unwrap();
            let b = d.normalize() * mag;
            let direct = quadratic_displacement(&f, &b, SpinState::Ground, &c)
                - quadratic_displacement(&f, &b, SpinState::Excited, &c);
            prop_assert!((k * mag * mag - direct).abs() <= 1e-9 * direct.abs().max(1e-6));
        }

        #[test]
        fn equivalent_sites_agree(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
            let c = consts();
            let b = Vec3::new(x, y, z) * 5.0;
            prop_assume!(b.norm() > 1e-2);
            for class in equivalence_classes(&b).unwrap() {
                let r0 = zeeman_result(&frame(class[0]), &b, &c);
                for s in &class[1..] {
                    let r = zeeman_result(&frame(*s), &b, &c);
                    prop_assert!((r.optical_shift - r0.optical_shift).abs() <= 1e-9 * r0.optical_shift.abs().max(1.0));
                    prop_assert!((r.splitting_ground - r0.splitting_ground).abs() <= 1e-9 * r0.splitting_ground.abs().max(1.0));
                }
            }
        }
    }
}
