//! Site frames of the six magnetically inequivalent Tm³⁺ sites in YAG.
//!
//! Every dodecahedral site has D₂ symmetry. Its three two-fold axes are one
//! cubic ⟨100⟩ axis and the two ⟨110⟩ directions perpendicular to it. The
//! local frame used here is:
//!
//! * `y`: the optical transition dipole, along a ⟨110⟩ direction,
//! * `z`: the cubic ⟨100⟩ axis (shared by sites 1/2, 3/4 and 5/6),
//! * `x = y × z`: the remaining ⟨110⟩ direction.
//!
//! Site numbering is fixed by two observable constraints: for `Ê ∥ [111]`
//! sites 2, 4, 6 are dark and 1, 3, 5 equally bright, and for `Ê ∥ [1̄1̄2]`
//! the projections are 0 (site 2), √3/2 (4, 6), 1/√3 (1) and 1/(2√3) (3, 5).
//!
//! The field scan plane is spanned by `[111]` and `[1̄1̄2]`; θ is measured
//! from `[111]` and is positive toward `[1̄1̄2]`. `[001]` sits at
//! θ = arccos(1/√3) ≈ 54.7356°.

use nalgebra::{Matrix3, Vector3};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Relative tolerance used to decide magnetic equivalence.
pub const EQUIVALENCE_RTOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("site index {0} out of range 1..=6")]
    IndexOutOfRange(i64),
    #[error("magnetic field direction has zero length")]
    ZeroField,
    #[error("cannot parse polarization {0:?}")]
    BadPolarization(String),
}

impl GeometryError {
    pub fn name(&self) -> &'static str {
        match self {
            GeometryError::IndexOutOfRange(_) => "IndexOutOfRange",
            GeometryError::ZeroField => "ZeroField",
            GeometryError::BadPolarization(_) => "BadPolarization",
        }
    }
}

/// A validated site number in `1..=6`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SiteIndex(u8);

impl SiteIndex {
    pub fn new(i: i64) -> Result<Self, GeometryError> {
        if (1..=6).contains(&i) {
            Ok(SiteIndex(i as u8))
        } else {
            Err(GeometryError::IndexOutOfRange(i))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn all() -> [SiteIndex; 6] {
        [1, 2, 3, 4, 5, 6].map(SiteIndex)
    }
}

impl fmt::Display for SiteIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Rotation from a site's local D₂ frame to the cubic lab frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteFrame {
    pub site: SiteIndex,
    /// Columns are the lab-frame images of local x, y, z.
    pub rotation: Matrix3<f64>,
    /// Unit transition dipole in the lab frame (local ŷ).
    pub dipole_lab: Vec3,
}

// (dipole ⟨110⟩, cubic axis) in units before normalisation.
const SITE_AXES: [([f64; 3], [f64; 3]); 6] = [
    ([1.0, 1.0, 0.0], [0.0, 0.0, 1.0]),
    ([1.0, -1.0, 0.0], [0.0, 0.0, 1.0]),
    ([1.0, 0.0, 1.0], [0.0, 1.0, 0.0]),
    ([1.0, 0.0, -1.0], [0.0, 1.0, 0.0]),
    ([0.0, 1.0, 1.0], [1.0, 0.0, 0.0]),
    ([0.0, 1.0, -1.0], [1.0, 0.0, 0.0]),
];

pub fn site_frame(i: i64) -> Result<SiteFrame, GeometryError> {
    Ok(frame(SiteIndex::new(i)?))
}

pub fn frame(site: SiteIndex) -> SiteFrame {
    let (y, z) = SITE_AXES[(site.get() - 1) as usize];
    let y = Vec3::from(y).normalize();
    let z = Vec3::from(z);
    let x = y.cross(&z);
    SiteFrame {
        site,
        rotation: Matrix3::from_columns(&[x, y, z]),
        dipole_lab: y,
    }
}

pub fn all_frames() -> [SiteFrame; 6] {
    SiteIndex::all().map(frame)
}

/// Unit vector along `[111]`.
pub fn dir_111() -> Vec3 {
    Vec3::new(1.0, 1.0, 1.0) / 3f64.sqrt()
}

/// Unit vector along `[1̄1̄2]`.
pub fn dir_112() -> Vec3 {
    Vec3::new(-1.0, -1.0, 2.0) / 6f64.sqrt()
}

/// θ (radians) at which the scan plane crosses `[001]`.
pub fn theta_001() -> f64 {
    (1.0 / 3f64.sqrt()).acos()
}

/// Magnetic field magnitude and in-plane angle from `[111]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldConfig {
    /// Tesla, ≥ 0.
    pub magnitude: f64,
    /// Radians from `[111]`, positive toward `[1̄1̄2]`.
    pub theta: f64,
}

impl FieldConfig {
    pub fn new(magnitude: f64, theta: f64) -> Self {
        FieldConfig { magnitude, theta }
    }

    pub fn from_degrees(magnitude: f64, theta_deg: f64) -> Self {
        FieldConfig::new(magnitude, theta_deg.to_radians())
    }

    pub fn direction(&self) -> Vec3 {
        dir_111() * self.theta.cos() + dir_112() * self.theta.sin()
    }
}

pub fn field_vector(cfg: FieldConfig) -> Vec3 {
    cfg.direction() * cfg.magnitude
}

/// Field components in the site's local frame.
pub fn local_field(site: &SiteFrame, b: &Vec3) -> Vec3 {
    site.rotation.transpose() * b
}

impl SiteFrame {
    pub fn to_lab(&self, local: &Vec3) -> Vec3 {
        self.rotation * local
    }

    /// |μ̂·Ê| for a (not necessarily normalised) polarization vector.
    pub fn dipole_projection(&self, e: &Vec3) -> f64 {
        let n = e.norm();
        if n == 0.0 {
            return 0.0;
        }
        (self.dipole_lab.dot(e) / n).abs()
    }
}

/// Groups sites whose local |B| component triples agree within
/// `1e-9·|B|`. Classes are sorted, and ordered by their smallest member.
pub fn equivalence_classes(b: &Vec3) -> Result<Vec<Vec<SiteIndex>>, GeometryError> {
    let norm = b.norm();
    if !(norm > 0.0) {
        return Err(GeometryError::ZeroField);
    }
    let tol = EQUIVALENCE_RTOL * norm;
    let abs_local: Vec<(SiteIndex, Vec3)> = all_frames()
        .iter()
        .map(|f| (f.site, local_field(f, b).abs()))
        .collect();

    let mut classes: Vec<Vec<SiteIndex>> = Vec::new();
    let mut reps: Vec<Vec3> = Vec::new();
    for (site, comp) in abs_local {
        match reps
            .iter()
            .position(|r| (r - comp).iter().all(|d| d.abs() <= tol))
        {
            Some(k) => classes[k].push(site),
            None => {
                reps.push(comp);
                classes.push(vec![site]);
            }
        }
    }
    Ok(classes)
}

/// Formats a class as e.g. `3+5`.
pub fn class_label(class: &[SiteIndex]) -> String {
    class
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join("+")
}

/// Probe light polarization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Polarization {
    Along111,
    AlongM1M12,
    Custom(Vec3),
}

impl Polarization {
    pub fn vector(&self) -> Vec3 {
        match self {
            Polarization::Along111 => dir_111(),
            Polarization::AlongM1M12 => dir_112(),
            Polarization::Custom(v) => v.normalize(),
        }
    }
}

impl FromStr for Polarization {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GeometryError::BadPolarization(s.to_string());
        match s.trim() {
            "111" => Ok(Polarization::Along111),
            "-1-12" => Ok(Polarization::AlongM1M12),
            other => {
                let parts: Vec<f64> = other
                    .split(',')
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad())?;
                if parts.len() != 3 {
                    return Err(bad());
                }
                let v = Vec3::new(parts[0], parts[1], parts[2]);
                if !(v.norm() > 0.0) || !v.iter().all(|c| c.is_finite()) {
                    return Err(bad());
                }
                Ok(Polarization::Custom(v))
            }
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Polarization::Along111 => write!(f, "111"),
            Polarization::AlongM1M12 => write!(f, "-1-12"),
            Polarization::Custom(v) => write!(f, "{},{},{}", v.x, v.y, v.z),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EPS: f64 = 1e-12;

    fn sites(ids: &[u8]) -> Vec<SiteIndex> {
        ids.iter().map(|&i| SiteIndex(i)).collect()
    }

    #[test]
    fn rotations_are_proper() {
        for f in all_frames() {
            let r = f.rotation;
            assert!((r.transpose() * r - Matrix3::identity()).abs().max() < EPS);
            assert!((r.determinant() - 1.0).abs() < EPS);
            assert!((f.dipole_lab - r.column(1)).norm() < EPS);
        }
    }

    #[test]
    fn dipoles_are_distinct_110_directions() {
        let frames = all_frames();
        for f in &frames {
            let mut a: Vec<f64> = f.dipole_lab.iter().map(|c| c.abs()).collect();
            a.sort_by(f64::total_cmp);
            let h = 0.5f64.sqrt();
            assert!(a[0].abs() < EPS && (a[1] - h).abs() < EPS && (a[2] - h).abs() < EPS);
        }
        for i in 0..6 {
            for j in (i + 1)..6 {
                let c = frames[i].dipole_lab.dot(&frames[j].dipole_lab).abs();
                assert!(c < 1.0 - 1e-6, "sites {} and {} parallel", i + 1, j + 1);
            }
        }
    }

    #[test]
    fn projections_for_111_polarization() {
        let e = dir_111();
        let p: Vec<f64> = all_frames().iter().map(|f| f.dipole_projection(&e)).collect();
        for i in [1, 3, 5] {
            assert!(p[i] < EPS);
        }
        assert!((p[0] - p[2]).abs() < EPS && (p[0] - p[4]).abs() < EPS);
        assert!((p[0] - (2.0f64 / 3.0).sqrt()).abs() < EPS);
    }

    #[test]
    fn projections_for_112_polarization() {
        let e = dir_112();
        let want = [
            1.0 / 3f64.sqrt(),
            0.0,
            1.0 / (2.0 * 3f64.sqrt()),
            3f64.sqrt() / 2.0,
            1.0 / (2.0 * 3f64.sqrt()),
            3f64.sqrt() / 2.0,
        ];
        for (f, w) in all_frames().iter().zip(want) {
            assert!((f.dipole_projection(&e) - w).abs() < EPS, "site {}", f.site);
        }
    }

    #[test]
    fn site_index_range() {
        assert_eq!(site_frame(0).unwrap_err(), GeometryError::IndexOutOfRange(0));
        assert_eq!(site_frame(7).unwrap_err(), GeometryError::IndexOutOfRange(7));
        assert!(site_frame(6).is_ok());
    }

    #[test]
    fn field_vector_examples() {
        let v = field_vector(FieldConfig::new(6.0, 0.0));
        assert!((v - Vec3::new(1.0, 1.0, 1.0) * (6.0 / 3f64.sqrt())).norm() < EPS);
        let v = field_vector(FieldConfig::from_degrees(2.0, 90.0));
        assert!((v.normalize() - dir_112()).norm() < EPS);
        let v = field_vector(FieldConfig::from_degrees(1.0, 54.7356103172453));
        assert!((v - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-9);
        let v = field_vector(FieldConfig::new(1.0, theta_001()));
        assert!((v - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn zero_field_maps_to_zero() {
        for f in all_frames() {
            assert_eq!(local_field(&f, &Vec3::zeros()), Vec3::zeros());
        }
    }

    #[test]
    fn sites_135_share_components_at_111() {
        let b = dir_111();
        let mut triples: Vec<Vec<f64>> = [1, 3, 5]
            .iter()
            .map(|&i| {
                let mut t: Vec<f64> = local_field(&site_frame(i).unwrap(), &b)
                    .iter()
                    .map(|c| c.abs())
                    .collect();
                t.sort_by(f64::total_cmp);
                t
            })
            .collect();
        let first = triples.remove(0);
        for t in triples {
            for (a, b) in first.iter().zip(&t) {
                assert!((a - b).abs() < EPS);
            }
        }
    }

    #[test]
    fn classes_at_111() {
        let c = equivalence_classes(&dir_111()).unwrap();
        assert_eq!(c, vec![sites(&[1, 3, 5]), sites(&[2, 4, 6])]);
    }

    #[test]
    fn classes_at_112() {
        let c = equivalence_classes(&dir_112()).unwrap();
        assert!(c.contains(&sites(&[3, 5])));
        assert!(c.contains(&sites(&[4, 6])));
        assert_eq!(c.len(), 4);
    }

    #[test]
    fn generic_direction_gives_singletons() {
        let c = equivalence_classes(&Vec3::new(0.31, -0.77, 0.52)).unwrap();
        assert_eq!(c.len(), 6);
    }

    #[test]
    fn zero_field_classification_fails() {
        assert_eq!(equivalence_classes(&Vec3::zeros()), Err(GeometryError::ZeroField));
    }

    #[test]
    fn scan_plane_keeps_pairs_equivalent() {
        for deg in 0..=180 {
            let b = FieldConfig::from_degrees(1.0, deg as f64).direction();
            let c = equivalence_classes(&b).unwrap();
            let same = |a: u8, b: u8| c.iter().any(|k| k.contains(&SiteIndex(a)) && k.contains(&SiteIndex(b)));
            assert!(same(3, 5) && same(4, 6), "theta = {deg}");
        }
    }

    #[test]
    fn polarization_parsing() {
        assert_eq!("111".parse::<Polarization>().unwrap(), Polarization::Along111);
        assert_eq!("-1-12".parse::<Polarization>().unwrap(), Polarization::AlongM1M12);
        let p: Polarization = "0, 0, 2".parse().unwrap();
        assert!((p.vector() - Vec3::new(0.0, 0.0, 1.0)).norm() < EPS);
        assert!("0,0,0".parse::<Polarization>().is_err());
        assert!("1,2".parse::<Polarization>().is_err());
        assert!("abc".parse::<Polarization>().is_err());
    }

    proptest! {
        #[test]
        fn local_field_is_isometric(x in -10.0f64..10.0, y in -10.0f64..10.0, z in -10.0f64..10.0, i in 1i64..=6) {
            let f = site_frame(i).unwrap();
            let b = Vec3::new(x, y, z);
            let l = local_field(&f, &b);
            prop_assert!((l.norm_squared() - b.norm_squared()).abs() <= 1e-12 * (1.0 + b.norm_squared()));
            prop_assert!((f.to_lab(&l) - b).norm() <= 1e-12 * (1.0 + b.norm()));
        }

        #[test]
        fn projection_ignores_polarization_sign(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
            let e = Vec3::new(x, y, z);
            prop_assume!(e.norm() > 1e-3);
            for f in all_frames() {
                prop_assert!((f.dipole_projection(&e) - f.dipole_projection(&-e)).abs() < 1e-15);
            }
        }

        #[test]
        fn classes_ignore_field_scale(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0, s in 1e-3f64..1e3) {
            let b = Vec3::new(x, y, z);
            prop_assume!(b.norm() > 1e-3);
            prop_assert_eq!(equivalence_classes(&b).unwrap(), equivalence_classes(&(b * s)).unwrap());
        }

        #[test]
        fn field_vector_stays_in_plane(mag in 0.0f64..10.0, theta in -3.2f64..3.2) {
            let v = field_vector(FieldConfig::new(mag, theta));
            prop_assert!((v.norm() - mag).abs() < 1e-12 * (1.0 + mag));
            let normal = dir_111().cross(&dir_112());
            prop_assert!(v.dot(&normal).abs() < 1e-12 * (1.0 + mag));
        }
    }
}
