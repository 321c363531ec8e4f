//! Target detection for multiband raster scenes.
//!
//! Three unit-gain linear detectors are provided. CEM filters raw pixels
//! against the sample correlation matrix, MF filters mean-centered pixels
//! against the covariance, and CE treats the data origin as a free variable
//! and maximizes `g(μ) = (d−μ)ᵀR_μ⁻¹(d−μ)`, the reciprocal of the average
//! output energy. The optimal origins form the hyperplane
//! `(d−m)ᵀK⁻¹(m−μ) = 1`; every point on it yields a detector parallel to MF.
//!
//! The [`solver`] module produces those origins both in closed form and by
//! gradient ascent, [`eval`] scores detection maps, [`synth`] generates
//! seeded test scenes and [`io`] reads and writes the on-disk formats used by
//! the `tdrs` command-line tool.

// `!(x <= tol)` is used on purpose so that NaN fails every check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod detectors;
pub mod error;
pub mod eval;
pub mod io;
pub mod solver;
pub mod stats;
pub mod synth;

pub use detectors::{Detector, Method, ObjectiveReport};
pub use error::{Error, Result};
pub use eval::{DetectionMap, GroundTruthMask, RocCurve};
pub use solver::{AscentConfig, AscentTrace, BasicEquationSolution, SolutionKind};
pub use stats::{MatrixKind, OriginShift, Scene, SceneStats, TargetSignature};
pub use synth::{SynthConfig, SynthScene, TargetPosition};
