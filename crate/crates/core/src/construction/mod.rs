//! The measures of the construction: prime sets, level schedules, the
//! averaged bumps `F_M`, the base density `ψ_0`, and the products `μ_k`.

mod fm;
mod growth;
mod measure;
mod params;
mod primes;
mod schedule;

pub use fm::{
    build_fm, build_psi0, ft_fm_closed, geometric_sum, geometric_sum_exact, membership_d, psi0_level, FmLevel,
};
pub use growth::{Growth, Ratio};
pub use measure::{
    manifest_hash, BuildOptions, DualCache, KaufmanMeasure, Witness, WitnessReport, WitnessRow,
};
pub use params::{BuildMode, ConstructionParams, Shape};
pub use primes::{enumerable, enumerate_qm, ENUMERATION_LIMIT};
pub use schedule::{choose_mk, ConditionCheck, Level, LevelSchedule, MAX_SEARCH_M};
