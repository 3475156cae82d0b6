//! Heat kernels and the semilinear heat equation `u_t = Delta u + u^{1+alpha}`
//! on locally finite weighted graphs, together with the quantitative
//! blow-up machinery around the Fujita critical exponent `alpha = 2/m`.

pub mod error;
pub mod fujita;
pub mod graph;
pub mod heat_kernel;
pub mod io;
pub mod operators;
pub mod semilinear;

pub use error::{Error, Result};
pub use graph::{Ball, DegreeBounds, Family, MuMode, VertexId, WeightedGraph};
pub use heat_kernel::{
    dirichlet_heat_kernel, gaussian_fit, heat_kernel, kernel_profile, mass, semigroup_apply, Exhaustion, GaussianFit,
    HeatKernelMatrix,
};
pub use operators::{
    cde_residual, cde_search, gamma, gamma2, laplacian_apply, CurvatureReport, DirichletOperator, SearchOptions,
    Verdict,
};
pub use fujita::{
    fujita_product, g_functional, lemma41_certificate, lemma42_mass_bound, squeeze_report, volume_growth_fit,
    FujitaCertificate, FujitaProduct, MassBoundReport, Regime, SqueezeConstants, SqueezeReport, VolumeGrowthFit,
};
pub use semilinear::{
    blowup_time, duhamel_iterate, integrate_mol, BlowupBracket, BlowupOptions, MolOptions, Output, Problem, Status,
    Trajectory,
};
