//! Occupation-time laws, transition kernels, simulation and likelihood fitting
//! for Brownian motion switched on and off by a three-state Markov chain
//! (moving, resting, handling).

pub mod error;
pub mod gamma_conv;
pub mod inference;
pub mod kernel;
pub mod occupation;
pub mod params;
pub mod quad;
pub mod sim;

pub use error::{MrhError, Result};
pub use gamma_conv::{cdf_diff_h, conv_cdf, conv_pdf, gamma_cdf, gamma_pdf, ConvRoute, ConvSpec, GammaSpec};
pub use inference::{
    fit_bm_baseline, fit_mle, loglik_brute, loglik_forward, stationary_dist, FitOptions, FitResult, FixedMask, Init,
    StateInfo, Track,
};
pub use kernel::{joint_density, normal_pdf_d, transition_kernel, Displacement, KernelQuery, PreparedKernel};
pub use occupation::{
    occ_atom, occ_density, occ_density_series, occ_total_mass, reduction_check, OccupationAtom, OccupationLaw,
    OccupationTable, ReductionReport, SeriesSum, TruncationPolicy,
};
pub use params::{ModelParams, StartSpec, StateId};
pub use sim::{
    empirical_occupation_law, occupation_of, simulate_chain, simulate_mrh, ChainPath, OccupationHistogram,
    SimulatedTrack,
};
