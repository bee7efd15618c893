//! Material constants for Tm³⁺:YAG, loaded from a versioned JSON file or
//! from the compiled-in default set.

use crate::geometry::{dir_111, frame, SiteIndex, Vec3};
use crate::zeeman::{hyperfine_splitting, SpinState};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use thiserror::Error;

pub const SCHEMA_VERSION: u64 = 1;

/// Planck constant, J·s (exact in the 2019 SI).
pub const PLANCK: f64 = 6.62607015e-34;
/// Boltzmann constant, J/K (exact in the 2019 SI).
pub const BOLTZMANN: f64 = 1.380649e-23;
pub const DEFAULT_JSON: &str = include_str!("../data/constants.default.json");
pub const SCHEMA_JSON: &str = include_str!("../data/constants.schema.json");

/// Target ground-state splitting per tesla along `[111]` for sites 1/3/5.
pub const GAMMA_111_TARGET: f64 = 4.0e8;
pub const GAMMA_111_RTOL: f64 = 0.05;

#[derive(Debug, Error)]
pub enum ConstantsError {
    #[error("missing field {0:?}")]
    MissingField(String),
    #[error("invariant {name} violated: got {got}, expected {expected}")]
    InvariantViolation {
        name: String,
        got: String,
        expected: String,
    },
    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ConstantsError {
    pub fn name(&self) -> &'static str {
        match self {
            ConstantsError::MissingField(_) => "MissingField",
            ConstantsError::InvariantViolation { .. } => "InvariantViolation",
            ConstantsError::ParseError { .. } => "ParseError",
            ConstantsError::Io { .. } => "FileNotFound",
        }
    }
}

/// One failed invariant check.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub name: String,
    pub got: String,
    pub expected: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: got {}, expected {}", self.name, self.got, self.expected)
    }
}

impl From<Violation> for ConstantsError {
    fn from(v: Violation) -> Self {
        ConstantsError::InvariantViolation {
            name: v.name,
            got: v.got,
            expected: v.expected,
        }
    }
}

/// Physical constants and tensors parameterizing Tm:YAG. Frequencies in Hz,
/// gyromagnetic ratios in Hz/T, everything else SI.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialConstants {
    pub g_j_ground: f64,
    pub g_j_excited: f64,
    pub a_j_ground: f64,
    pub a_j_excited: f64,
    pub gamma_n: f64,
    /// Diagonal (x, y, z) in the local site frame.
    pub gamma_j_ground: Vec3,
    pub gamma_j_excited: Vec3,
    pub delta_cf0: f64,
    pub nu0: f64,
    pub rho: f64,
    pub v_l: f64,
    pub v_t: f64,
    pub k_b: f64,
    pub h: f64,
    pub mu_b: f64,
    /// Free-text provenance per field name.
    pub provenance: BTreeMap<String, String>,
}

const SCALAR_FIELDS: [&str; 13] = [
    "g_J_ground",
    "g_J_excited",
    "A_J_ground",
    "A_J_excited",
    "gamma_n",
    "delta_CF0",
    "nu0",
    "rho",
    "v_l",
    "v_t",
    "k_B",
    "h",
    "mu_B",
];
const TENSOR_FIELDS: [&str; 2] = ["gamma_J_ground", "gamma_J_excited"];

/// Landé g-factor with g_s = 2.
pub fn lande(l: f64, s: f64, j: f64) -> f64 {
    1.0 + (j * (j + 1.0) + s * (s + 1.0) - l * (l + 1.0)) / (2.0 * j * (j + 1.0))
}

impl MaterialConstants {
    pub fn default_set() -> Self {
        parse_constants(DEFAULT_JSON).expect("built-in constants must parse")
    }

    pub fn gamma_j(&self, state: SpinState) -> Vec3 {
        match state {
            SpinState::Ground => self.gamma_j_ground,
            SpinState::Excited => self.gamma_j_excited,
        }
    }

    pub fn g_j(&self, state: SpinState) -> f64 {
        match state {
            SpinState::Ground => self.g_j_ground,
            SpinState::Excited => self.g_j_excited,
        }
    }

    pub fn a_j(&self, state: SpinState) -> f64 {
        match state {
            SpinState::Ground => self.a_j_ground,
            SpinState::Excited => self.a_j_excited,
        }
    }

    /// Returns every violated invariant (empty when the set is valid).
    pub fn check_invariants(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |name: &str, got: f64, expected: &str| {
            out.push(Violation {
                name: name.to_string(),
                got: format!("{got:e}"),
                expected: expected.to_string(),
            })
        };

        let g6 = lande(5.0, 1.0, 6.0);
        if (self.g_j_ground - g6).abs() > 1e-12 {
            push("g_J_ground", self.g_j_ground, "7/6 within 1e-12");
        }
        let g4 = lande(5.0, 1.0, 4.0);
        if (self.g_j_excited - g4).abs() > 1e-12 {
            push("g_J_excited", self.g_j_excited, "4/5 within 1e-12");
        }

        for (name, v) in [
            ("rho", self.rho),
            ("v_l", self.v_l),
            ("v_t", self.v_t),
            ("delta_CF0", self.delta_cf0),
            ("nu0", self.nu0),
            ("k_B", self.k_b),
            ("h", self.h),
            ("mu_B", self.mu_b),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                push(name, v, ">0");
            }
        }
        for (name, v) in [("A_J_ground", self.a_j_ground), ("A_J_excited", self.a_j_excited)] {
            if v == 0.0 || !v.is_finite() {
                push(name, v, "nonzero");
            }
        }

        for (axis, (g, e)) in ["x", "y", "z"]
            .iter()
            .zip(self.gamma_j_ground.iter().zip(self.gamma_j_excited.iter()))
        {
            if !(g.abs() > e.abs()) {
                push(
                    &format!("gamma_J_ground.{axis}"),
                    *g,
                    &format!("|value| > |gamma_J_excited.{axis}| = {:e}", e.abs()),
                );
            }
        }

        let per_tesla = self.gamma_111_ground();
        if !((per_tesla - GAMMA_111_TARGET).abs() <= GAMMA_111_RTOL * GAMMA_111_TARGET) {
            push(
                "gamma_111_ground",
                per_tesla,
                "4.00e8 Hz/T within 5% (sites 1/3/5, B || [111])",
            );
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConstantsError> {
        match self.check_invariants().into_iter().next() {
            Some(v) => Err(v.into()),
            None => Ok(()),
        }
    }

    /// Ground-state splitting per tesla for site 1 with B ∥ [111].
    pub fn gamma_111_ground(&self) -> f64 {
        let f = frame(SiteIndex::new(1).unwrap());
        hyperfine_splitting(&f, &dir_111(), SpinState::Ground, self)
    }

    /// Serialises to the documented JSON schema.
    pub fn to_json(&self) -> String {
        let mut root = Map::new();
        root.insert("schema_version".into(), Value::from(SCHEMA_VERSION));
        let entry = |value: Value, key: &str| {
            let mut m = Map::new();
            m.insert("value".into(), value);
            if let Some(p) = self.provenance.get(key) {
                m.insert("provenance".into(), Value::from(p.clone()));
            }
            Value::Object(m)
        };
        for key in SCALAR_FIELDS {
            root.insert(key.into(), entry(Value::from(self.scalar(key)), key));
        }
        for key in TENSOR_FIELDS {
            let t = self.tensor(key);
            root.insert(
                key.into(),
                entry(Value::from(vec![t.x, t.y, t.z]), key),
            );
        }
        serde_json::to_string_pretty(&Value::Object(root)).expect("serialisable")
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn scalar(&self, key: &str) -> f64 {
        match key {
            "g_J_ground" => self.g_j_ground,
            "g_J_excited" => self.g_j_excited,
            "A_J_ground" => self.a_j_ground,
            "A_J_excited" => self.a_j_excited,
            "gamma_n" => self.gamma_n,
            "delta_CF0" => self.delta_cf0,
            "nu0" => self.nu0,
            "rho" => self.rho,
            "v_l" => self.v_l,
            "v_t" => self.v_t,
            "k_B" => self.k_b,
            "h" => self.h,
            "mu_B" => self.mu_b,
            _ => unreachable!("unknown scalar {key}"),
        }
    }

    fn tensor(&self, key: &str) -> Vec3 {
        match key {
            "gamma_J_ground" => self.gamma_j_ground,
            "gamma_J_excited" => self.gamma_j_excited,
            _ => unreachable!("unknown tensor {key}"),
        }
    }

    /// Scales every γ_J component of both states (used for sensitivity runs).
    pub fn with_gamma_j_scaled(&self, factor: f64) -> Self {
        let mut c = self.clone();
        c.gamma_j_ground *= factor;
        c.gamma_j_excited *= factor;
        c
    }
}

fn parse_error(e: serde_json::Error) -> ConstantsError {
    ConstantsError::ParseError {
        line: e.line(),
        message: e.to_string(),
    }
}

/// Parses without checking invariants.
pub fn parse_constants(text: &str) -> Result<MaterialConstants, ConstantsError> {
    let root: Value = serde_json::from_str(text).map_err(parse_error)?;
    let obj = root.as_object().ok_or(ConstantsError::ParseError {
        line: 1,
        message: "top level must be an object".into(),
    })?;

    match obj.get("schema_version").and_then(Value::as_u64) {
        Some(SCHEMA_VERSION) => {}
        Some(v) => {
            return Err(ConstantsError::ParseError {
                line: 1,
                message: format!("unsupported schema_version {v}"),
            })
        }
        None => return Err(ConstantsError::MissingField("schema_version".into())),
    }

    let mut provenance = BTreeMap::new();
    let mut value_of = |key: &str| -> Result<Value, ConstantsError> {
        let entry = obj
            .get(key)
            .ok_or_else(|| ConstantsError::MissingField(key.into()))?;
        let entry = entry.as_object().ok_or_else(|| ConstantsError::ParseError {
            line: 0,
            message: format!("{key}: expected an object with a \"value\" key"),
        })?;
        if let Some(p) = entry.get("provenance").and_then(Value::as_str) {
            provenance.insert(key.to_string(), p.to_string());
        }
        entry
            .get("value")
            .cloned()
            .ok_or_else(|| ConstantsError::MissingField(format!("{key}.value")))
    };

    let mut scalars = BTreeMap::new();
    for key in SCALAR_FIELDS {
        let v = value_of(key)?;
        let x = v.as_f64().ok_or_else(|| ConstantsError::ParseError {
            line: 0,
            message: format!("{key}.value: expected a number"),
        })?;
        scalars.insert(key, x);
    }
    let mut tensors = BTreeMap::new();
    for key in TENSOR_FIELDS {
        let v = value_of(key)?;
        let arr: Option<Vec<f64>> = v
            .as_array()
            .map(|a| a.iter().filter_map(Value::as_f64).collect());
        match arr {
            Some(a) if a.len() == 3 && v.as_array().map(Vec::len) == Some(3) => {
                tensors.insert(key, Vec3::new(a[0], a[1], a[2]));
            }
            _ => {
                return Err(ConstantsError::ParseError {
                    line: 0,
                    message: format!("{key}.value: expected three numbers"),
                })
            }
        }
    }

    Ok(MaterialConstants {
        g_j_ground: scalars["g_J_ground"],
        g_j_excited: scalars["g_J_excited"],
        a_j_ground: scalars["A_J_ground"],
        a_j_excited: scalars["A_J_excited"],
        gamma_n: scalars["gamma_n"],
        gamma_j_ground: tensors["gamma_J_ground"],
        gamma_j_excited: tensors["gamma_J_excited"],
        delta_cf0: scalars["delta_CF0"],
        nu0: scalars["nu0"],
        rho: scalars["rho"],
        v_l: scalars["v_l"],
        v_t: scalars["v_t"],
        k_b: scalars["k_B"],
        h: scalars["h"],
        mu_b: scalars["mu_B"],
        provenance,
    })
}

/// Reads a constants file without invariant checks; `"default"` selects the
/// built-in set.
pub fn read_constants_unchecked(path: &str) -> Result<MaterialConstants, ConstantsError> {
    if path == "default" {
        return parse_constants(DEFAULT_JSON);
    }
    let text = std::fs::read_to_string(Path::new(path)).map_err(|source| ConstantsError::Io {
        path: path.to_string(),
        source,
    })?;
    parse_constants(&text)
}

/// Loads and validates constants; `"default"` selects the built-in set.
pub fn load_constants(path: &str) -> Result<MaterialConstants, ConstantsError> {
    let c = read_constants_unchecked(path)?;
    c.validate()?;
    Ok(c)
}

pub fn write_constants(c: &MaterialConstants, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, c.to_json())
}
