//! Lower bounds on the accuracy of quantum parameter estimation.
//!
//! This crate computes Cramér–Rao-type lower bounds for families of
//! finite-dimensional density operators and audits when a given generalized
//! measurement (POVM) attains them:
//!
//! * symmetric (Helstrom) bound from symmetrized logarithmic derivatives,
//! * right bound from right logarithmic derivatives of complex-parametrized
//!   families,
//! * generalized Heisenberg bound for unitary shift families,
//! * Lie-group corrected bound for non-commuting shift generators.
//!
//! Measurements are modeled as discrete POVMs (possibly quadrature-weighted
//! discretizations of continuous ones, with an explicit completeness
//! residual). Error matrices can be evaluated exactly or estimated by Monte
//! Carlo sampling, and efficiency audits check the structural conditions
//! under which each bound is attained.
//!
//! Numerical tolerances are centralized in [`Tolerances`].

pub mod audit;
pub mod bounds;
pub mod error;
pub mod logderiv;
pub mod matkernel;
pub mod povm;
pub mod states;
pub mod tol;

pub use error::{Error, Result};
pub use tol::Tolerances;

pub use matkernel::{CMatrix, CVector, EigenSystem, LyapunovSolution, Pinv, PsdCheck};
pub use states::{
    DensityOperator, DerivativeMode, DiffDirection, FockOps, GeneratingFunction, GeneratorSet,
    ParamKind, ParamPoint, StateFamily,
};
pub use logderiv::{FisherKind, FisherMatrix, LogDerivKind, LogDerivSet};
pub use bounds::{
    Bound, BoundCheck, BoundKind, BoundVerdict, JacobianMatrix, SchwarzChain, StructureConstants,
};
pub use povm::{ErrorMatrices, McErrorMatrix, MomentOps, Povm, PovmDiagnostics, PovmKind};
pub use audit::{
    regularity_check, theorem1_audit, theorem2_audit, theorem3_audit, RegularityReport,
    Theorem1Report, Theorem2Report, Theorem3Report,
};
