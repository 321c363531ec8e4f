//! Optimal data origins.
//!
//! The maxima of `g(μ)` are exactly the solutions of the basic equation
//! `(d−m)ᵀK⁻¹(m−μ) = 1`, a hyperplane of dimension `L − 1` with normal
//! `u = K⁻¹(d−m)`. This module solves it in closed form and, independently,
//! climbs `g` by gradient ascent with Armijo backtracking so the two routes
//! can be compared.

use nalgebra::DVector;

use crate::detectors::{g_gradient, g_value, objective, plateau_value};
use crate::error::{Error, Result};
use crate::stats::{OriginShift, SceneStats, TargetSignature};

/// Largest basic-equation residual accepted for a returned solution.
pub const SOLUTION_RESIDUAL_TOL: f64 = 1e-9;

/// Largest basic-equation residual accepted at the end of gradient ascent.
pub const ASCENT_RESIDUAL_TOL: f64 = 1e-6;

/// Residual the ascent keeps climbing towards while it can still make progress.
const ASCENT_TARGET_RESIDUAL: f64 = 1e-8;

/// Changes of `g` this small (relative) are treated as rounding noise.
const FLAT_RTOL: f64 = 16.0 * f64::EPSILON;

/// `(d−m)ᵀK⁻¹(m−μ) − 1`; zero exactly on the optimal-origin hyperplane.
pub fn basic_equation_residual(
    stats: &SceneStats,
    d: &TargetSignature,
    mu: &OriginShift,
) -> Result<f64> {
    stats.check_len(d.len())?;
    stats.check_len(mu.len())?;
    let u = stats.solve_cov(&(d.as_vector() - stats.mean()));
    Ok(u.dot(&(stats.mean() - mu.as_vector())) - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolutionKind {
    /// `μ* = m − u/‖u‖²`, the solution closest to the mean.
    MinimalShift,
    /// `μ* = m − (d−m)/((d−m)ᵀK⁻¹(d−m))`, on the line through `m` and `d`.
    AlongTargetLine,
    /// The minimal shift plus a tangent combination supplied by the caller.
    Sampled,
}

impl SolutionKind {
    pub fn label(self) -> &'static str {
        match self {
            SolutionKind::MinimalShift => "minimal_shift",
            SolutionKind::AlongTargetLine => "along_target_line",
            SolutionKind::Sampled => "sampled",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasicEquationSolution {
    pub mu_star: OriginShift,
    /// `|(d−m)ᵀK⁻¹(m−μ*) − 1|`
    pub residual: f64,
    pub kind: SolutionKind,
}

/// The optimal-origin hyperplane in point-normal form plus an orthonormal
/// basis of its direction space.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperplane {
    /// `u = K⁻¹(d−m)`.
    pub normal: DVector<f64>,
    /// The minimal-shift solution.
    pub point: DVector<f64>,
    /// `L − 1` orthonormal vectors spanning `{z : uᵀz = 0}`.
    pub tangents: Vec<DVector<f64>>,
}

impl Hyperplane {
    pub fn new(stats: &SceneStats, d: &TargetSignature) -> Result<Self> {
        stats.check_len(d.len())?;
        let offset = d.as_vector() - stats.mean();
        if offset.norm() <= 1e-12 * (1.0 + d.as_vector().norm()) {
            return Err(Error::DegenerateTarget(
                "target coincides with the scene mean".into(),
            ));
        }
        let normal = stats.solve_cov(&offset);
        let norm_sq = normal.norm_squared();
        if !(norm_sq > 0.0 && norm_sq.is_finite()) {
            return Err(Error::DegenerateTarget("K⁻¹(d−m) vanishes".into()));
        }
        let point = stats.mean() - &normal / norm_sq;
        let tangents = tangent_basis(&normal);
        Ok(Self {
            normal,
            point,
            tangents,
        })
    }

    /// `point + Σ coeffs[i]·tangents[i]`.
    pub fn at(&self, coeffs: &[f64]) -> Result<DVector<f64>> {
        if coeffs.len() != self.tangents.len() {
            return Err(Error::DimensionMismatch {
                expected: self.tangents.len(),
                found: coeffs.len(),
            });
        }
        let mut mu = self.point.clone();
        for (c, t) in coeffs.iter().zip(&self.tangents) {
            mu.axpy(*c, t, 1.0);
        }
        Ok(mu)
    }
}

/// Orthonormal complement of `normal` from the coordinate axes.
///
/// The axis most aligned with `normal` is dropped; the rest are
/// Gram–Schmidt orthogonalized (two passes) in index order.
fn tangent_basis(normal: &DVector<f64>) -> Vec<DVector<f64>> {
    let dim = normal.len();
    let unit = normal.normalize();
    let skip = unit.iamax();
    let mut basis: Vec<DVector<f64>> = vec![unit];
    for axis in (0..dim).filter(|&i| i != skip) {
        let mut v = DVector::zeros(dim);
        v[axis] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dot(&v);
                v.axpy(-proj, b, 1.0);
            }
        }
        basis.push(v.normalize());
    }
    basis.remove(0);
    basis
}

/// Closed-form solution of the basic equation.
///
/// `tangent` is required for [`SolutionKind::Sampled`] and must have `L − 1`
/// entries; it is ignored otherwise.
pub fn solve_basic_equation(
    stats: &SceneStats,
    d: &TargetSignature,
    kind: SolutionKind,
    tangent: Option<&[f64]>,
) -> Result<BasicEquationSolution> {
    let plane = Hyperplane::new(stats, d)?;
    let mu = match kind {
        SolutionKind::MinimalShift => plane.point.clone(),
        SolutionKind::AlongTargetLine => {
            let offset = d.as_vector() - stats.mean();
            let quad = offset.dot(&plane.normal);
            stats.mean() - offset / quad
        }
        SolutionKind::Sampled => {
            let coeffs = tangent.ok_or_else(|| {
                Error::ConfigInvalid("sampled solution needs tangent coefficients".into())
            })?;
            plane.at(coeffs)?
        }
    };
    let mu_star = OriginShift::from_vector(mu)?;
    let residual = basic_equation_residual(stats, d, &mu_star)?.abs();
    if !(residual <= SOLUTION_RESIDUAL_TOL) {
        return Err(Error::PreconditionFailed {
            check: "basic_equation_residual",
            value: residual,
            tolerance: SOLUTION_RESIDUAL_TOL,
        });
    }
    Ok(BasicEquationSolution {
        mu_star,
        residual,
        kind,
    })
}

/// Step policy for [`gradient_ascent`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentConfig {
    pub max_iters: usize,
    /// Converged when `‖g′(μ)‖ ≤ grad_tol·(1 + |g(μ)|)`.
    pub grad_tol: f64,
    /// First trial step; later line searches start from the
    /// Barzilai–Borwein step `‖s‖²/(−sᵀy)` of the previous move.
    pub initial_step: f64,
    /// Step shrink factor in `(0, 1)`.
    pub backtrack_factor: f64,
    /// Armijo constant: accept when `g(μ + t∇) ≥ g(μ) + armijo_c·t·‖∇‖²`.
    pub armijo_c: f64,
    /// Line-search trials before an iteration counts as stalled.
    pub max_backtracks: usize,
    /// Restart once from the scene mean when the ascent stalls below the
    /// plateau or is still under half of it after `max_iters / 2` iterations.
    pub restart_from_mean: bool,
}

impl Default for AscentConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tol: 1e-8,
            initial_step: 1.0,
            backtrack_factor: 0.5,
            armijo_c: 1e-4,
            max_backtracks: 60,
            restart_from_mean: true,
        }
    }
}

impl AscentConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if self.max_iters == 0 || self.max_backtracks == 0 {
            return Err(Error::ConfigInvalid(
                "iteration limits must be positive".into(),
            ));
        }
        if !(positive(self.grad_tol) && positive(self.initial_step) && positive(self.armijo_c)) {
            return Err(Error::ConfigInvalid(
                "grad_tol, initial_step and armijo_c must be positive".into(),
            ));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::ConfigInvalid(
                "backtrack_factor must lie in (0, 1)".into(),
            ));
        }
        if self.armijo_c >= 1.0 {
            return Err(Error::ConfigInvalid("armijo_c must be below 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AscentStep {
    pub mu: DVector<f64>,
    pub g: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AscentTrace {
    /// Accepted iterates, starting point included.
    pub iterates: Vec<AscentStep>,
    pub config: AscentConfig,
    pub converged: bool,
    /// Indices into `iterates` where a restart began.
    pub restarts: Vec<usize>,
}

impl AscentTrace {
    pub fn last(&self) -> &AscentStep {
        self.iterates
            .last()
            .expect("trace holds the starting point")
    }

    pub fn final_origin(&self) -> OriginShift {
        OriginShift::from_vector(self.last().mu.clone()).expect("iterates are finite")
    }

    /// Iterate ranges between restarts.
    pub fn segments(&self) -> impl Iterator<Item = &[AscentStep]> {
        let mut bounds = vec![0];
        bounds.extend(&self.restarts);
        bounds.push(self.iterates.len());
        bounds
            .windows(2)
            .map(|w| &self.iterates[w[0]..w[1]])
            .collect::<Vec<_>>()
            .into_iter()
    }
}

/// Maximizes `g(μ)` by steepest ascent with Armijo backtracking.
///
/// Converges when the gradient test passes with a basic-equation residual
/// below 1e-8, or when no further increase can be found while the residual
/// is within [`ASCENT_RESIDUAL_TOL`]. A vanishing gradient anywhere else
/// (such as the minimum at `μ = d`) is a stall, not convergence.
/// Returns [`Error::MaxItersExceeded`] carrying the trace otherwise.
pub fn gradient_ascent(
    stats: &SceneStats,
    d: &TargetSignature,
    mu0: &OriginShift,
    config: &AscentConfig,
) -> Result<AscentTrace> {
    config.validate()?;
    stats.check_len(d.len())?;
    stats.check_len(mu0.len())?;
    let plateau = plateau_value(stats, d)?;

    let mut report = objective(stats, d, mu0)?;
    let mut trace = AscentTrace {
        iterates: vec![AscentStep {
            mu: mu0.as_vector().clone(),
            g: report.g,
            grad_norm: report.grad.norm(),
        }],
        config: *config,
        converged: false,
        restarts: Vec::new(),
    };
    let mut restarted = false;
    // Barzilai–Borwein trial step from the last accepted move, if any.
    let mut trial_step = config.initial_step;

    for iter in 0..config.max_iters {
        let grad_norm = report.grad.norm();
        let grad_small = grad_norm <= config.grad_tol * (1.0 + report.g.abs());
        if grad_small
            && basic_equation_residual(stats, d, &report.mu)?.abs() <= ASCENT_TARGET_RESIDUAL
        {
            trace.converged = true;
            return Ok(trace);
        }

        let mut accepted = None;
        if grad_norm > 0.0 {
            let slope = grad_norm * grad_norm;
            let mut step = trial_step;
            for _ in 0..config.max_backtracks {
                let candidate = report.mu.as_vector() + &report.grad * step;
                let candidate = OriginShift::from_vector(candidate)?;
                let g = g_value(stats, d, &candidate)?;
                if g.is_finite() && g >= report.g + config.armijo_c * step * slope && g > report.g {
                    accepted = Some(candidate);
                    break;
                }
                // Near the plateau the gain drops below the resolution of g;
                // fall back to the gradient, which is still accurate there.
                if g.is_finite() && (g - report.g).abs() <= FLAT_RTOL * (1.0 + report.g.abs()) {
                    let grad = g_gradient(stats, d, &candidate)?;
                    if grad.dot(&report.grad) > 0.0 && grad.norm() < grad_norm {
                        accepted = Some(candidate);
                        break;
                    }
                }
                step *= config.backtrack_factor;
            }
        }

        let stalled = accepted.is_none();
        if stalled && basic_equation_residual(stats, d, &report.mu)?.abs() <= ASCENT_RESIDUAL_TOL {
            // No representable increase left and already on the hyperplane.
            trace.converged = true;
            return Ok(trace);
        }
        if let Some(next) = accepted {
            let previous = report;
            report = objective(stats, d, &next)?;
            let s = report.mu.as_vector() - previous.mu.as_vector();
            let curvature = -s.dot(&(&report.grad - &previous.grad));
            trial_step = if curvature > 0.0 && curvature.is_finite() {
                (s.norm_squared() / curvature).clamp(1e-12, 1e12)
            } else {
                config.initial_step
            };
            trace.iterates.push(AscentStep {
                mu: next.as_vector().clone(),
                g: report.g,
                grad_norm: report.grad.norm(),
            });
        }

        let lagging = iter + 1 == config.max_iters / 2 && report.g < 0.5 * plateau;
        if (stalled || lagging) && config.restart_from_mean && !restarted {
            restarted = true;
            let start = OriginShift::from_vector(stats.mean().clone())?;
            report = objective(stats, d, &start)?;
            trial_step = config.initial_step;
            trace.restarts.push(trace.iterates.len());
            trace.iterates.push(AscentStep {
                mu: start.as_vector().clone(),
                g: report.g,
                grad_norm: report.grad.norm(),
            });
        } else if stalled {
            break;
        }
    }

    let grad_small = report.grad.norm() <= config.grad_tol * (1.0 + report.g.abs());
    if grad_small && basic_equation_residual(stats, d, &report.mu)?.abs() <= ASCENT_RESIDUAL_TOL {
        trace.converged = true;
        return Ok(trace);
    }
    Err(Error::MaxItersExceeded {
        trace: Box::new(trace),
    })
}

/// Evaluation grid for two-band `g` surfaces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub mu1: (f64, f64),
    pub mu2: (f64, f64),
    pub resolution: (usize, usize),
}

impl GridSpec {
    fn coord(range: (f64, f64), count: usize, i: usize) -> f64 {
        if count == 1 {
            range.0
        } else {
            range.0 + i as f64 * (range.1 - range.0) / (count - 1) as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub mu1: f64,
    pub mu2: f64,
    pub g: f64,
}

/// `g` sampled on a grid; cells are ordered with `mu1` varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGrid {
    pub spec: GridSpec,
    pub cells: Vec<GridCell>,
}

impl SurfaceGrid {
    pub fn max_cell(&self) -> &GridCell {
        self.cells
            .iter()
            .max_by(|a, b| a.g.total_cmp(&b.g))
            .expect("grid is non-empty")
    }

    pub fn min_cell(&self) -> &GridCell {
        self.cells
            .iter()
            .min_by(|a, b| a.g.total_cmp(&b.g))
            .expect("grid is non-empty")
    }
}

/// Evaluates `g` over a two-band grid of origins.
pub fn g_surface_grid(
    stats: &SceneStats,
    d: &TargetSignature,
    grid: &GridSpec,
) -> Result<SurfaceGrid> {
    if stats.bands() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: stats.bands(),
        });
    }
    stats.check_len(d.len())?;
    let (nx, ny) = grid.resolution;
    if nx == 0 || ny == 0 {
        return Err(Error::ConfigInvalid(
            "grid resolution must be positive".into(),
        ));
    }
    if ![grid.mu1.0, grid.mu1.1, grid.mu2.0, grid.mu2.1]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(Error::ConfigInvalid("grid ranges must be finite".into()));
    }
    let mut cells = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        let mu2 = GridSpec::coord(grid.mu2, ny, j);
        for i in 0..nx {
            let mu1 = GridSpec::coord(grid.mu1, nx, i);
            let g = g_value(stats, d, &OriginShift::new(vec![mu1, mu2])?)?;
            cells.push(GridCell { mu1, mu2, g });
        }
    }
    Ok(SurfaceGrid { spec: *grid, cells })
}
