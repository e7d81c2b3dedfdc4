//! Finite-level verification of the construction and empirical scans.

pub mod counting;
pub mod decay;
pub mod energy;
pub mod lemmas;
pub mod regularity;
pub mod report;
pub mod restriction;
pub mod sampling;

pub use counting::{counting_checks, CountingReport};
pub use decay::{decay_profile, fourier_dim_estimate, DecayProfile, DimEstimate, ShellStat};
pub use energy::{haar_energy_truncated, riesz_energy, riesz_energy_fourier, FourierEnergy, RieszEnergy};
pub use lemmas::{verify_lemma_fm, verify_lemma_muk, ClauseReport, FmLemmaReport, LemmaOptions, MukLemmaReport};
pub use regularity::{regularity_scan, RegularityReport, RegularityRow};
pub use restriction::{restriction_endpoint, restriction_ratio, scalar_endpoint, RestrictionReport, TestFunction};
pub use sampling::{shell_points_sampled, Sampling};

use crate::construction::{Ratio, Shape};

/// `(β, e)` in the decay envelope `|s|^{-β} ln^e`: `(1/τ, 2)` for the scalar
/// shape, `(n/τ, n+1)` for `m × n` matrices.
pub fn decay_exponents(shape: Shape, tau: Ratio) -> (f64, u32) {
    let (_, n) = shape.mn();
    match shape {
        Shape::Scalar => (1.0 / tau.to_f64(), 2),
        Shape::Matrix { .. } => (n as f64 / tau.to_f64(), n + 1),
    }
}
