//! Quadratic Zeeman effect and nuclear spin-lattice relaxation of ¹⁶⁹Tm³⁺
//! in Y₃Al₅O₁₂ (YAG).
//!
//! The crate models the six magnetically inequivalent D₂ sites of the garnet
//! lattice, the enhanced nuclear Zeeman splitting and quadratic Zeeman shift of
//! the ³H₆ → ³H₄ optical line, inhomogeneous absorption spectra, and the
//! direct + Orbach spin-lattice relaxation law together with the fitting
//! machinery needed to recover its parameters from data.
//!
//! All quantities are SI internally; frequencies are in Hz.

/// Warns the first time a call site fires and logs at debug level after
/// that, so a sweep over a grid reports a regime problem once.
macro_rules! warn_once {
    ($($arg:tt)*) => {{
        static FIRED: std::sync::atomic::AtomicBool = std::sync::atomic::AtomicBool::new(false);
        if FIRED.swap(true, std::sync::atomic::Ordering::Relaxed) {
            log::debug!($($arg)*);
        } else {
            log::warn!($($arg)*);
        }
    }};
}

pub mod constants;
pub mod fitting;
pub mod geometry;
pub mod par;
pub mod relaxation;
pub mod spectra;
pub mod zeeman;

pub use constants::{load_constants, write_constants, ConstantsError, MaterialConstants};
pub use fitting::{
    joint_relax_fit, least_squares, FitError, FitOptions, FitProblem, FitResult, JointFit,
};
pub use geometry::{
    equivalence_classes, field_vector, local_field, site_frame, FieldConfig, GeometryError,
    SiteFrame, SiteIndex, Vec3,
};
pub use relaxation::{
    bleaney_alpha_d, dominance_map, extract_t1, rate, simulate_hole_decay, HoleDecay, Process,
    RateDataset, RateRecord, RelaxError, RelaxParams,
};
pub use spectra::{fit_lorentzian, synthesize_spectrum, LineModel, LineShape, Spectrum};
pub use zeeman::{SpinState, ZeemanResult};
