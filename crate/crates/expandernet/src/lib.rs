//! Discrete self-expanding multiphase surface networks.
//!
//! This crate computes self-expanding solutions of the mean curvature flow
//! for multiphase surface networks in R^3: it minimizes the weighted area
//! functional with weight `exp(|x|^2 / 4)` over phase-labeled non-manifold
//! triangle complexes spanning prescribed conical boundary data, and
//! certifies the junction and asymptotic structure of the results (120
//! degree triple curves, tetrahedral quadruple points, expander residual,
//! planar-end decay, Hausdorff convergence to the cone and junction
//! persistence under truncation-radius continuation).

pub mod cli;
pub mod complex;
pub mod cone;
pub mod continuation;
pub mod curvature;
pub mod energy;
pub mod ends;
pub mod io;
mod lbfgs;
pub mod models;
pub mod quality;
pub mod solver;
pub mod templates;
pub mod verify;

#[cfg(test)]
pub(crate) mod testmesh;

pub use complex::{
    connected_components, extract_junctions, refine, validate, BoundaryMark, FaceRecord,
    JunctionGraph, PhaseLabel, PhasePair, SurfaceComplex, Topology,
};
pub use cone::{boundary_trace, validate_cone, ConeSpec};
pub use continuation::{continue_in_radius, extend_to_radius};
pub use curvature::{expander_residual, mean_curvature, ExpanderResidualField};
pub use energy::{weighted_area, weighted_area_gradient, WeightedEnergy};
pub use ends::{fit_planar_end, jacobi_apply, PlanarEndSample};
pub use models::{
    angle_of_parallelism, ball_to_euclid, euclid_to_ball, hyperbolic_distance, to_ball,
    to_hyperboloid, BallPoint, HyperboloidPoint,
};
pub use quality::quality_pass;
pub use solver::{minimize, OptimizerState, SolveConfig, Termination};
pub use templates::{instantiate, TemplateKind, TopologyTemplate};
pub use verify::{
    check_hausdorff_asymptotics, check_persistence, check_quadruple, check_solid_angles,
    check_triple_angles, full_report, ToleranceProfile, VerificationReport, VerifyConfig,
};
