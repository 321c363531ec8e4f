//! CEM, MF and CE detectors and the CE objective.
//!
//! Every detector is a filter `w` paired with an origin `μ`, normalized so a
//! pixel equal to the target signature `d` scores exactly one:
//! `wᵀ(d − μ) = 1`. The average output energy over the scene is then
//! `1 / ((d−μ)ᵀR_μ⁻¹(d−μ))`.

use std::fmt;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::solver::basic_equation_residual;
use crate::stats::{MatrixKind, OriginShift, SceneStats, TargetSignature};

/// Relative tolerance for `d ≈ μ` and absolute floor for the quadratic form.
const DEGENERATE_TOL: f64 = 1e-12;

/// Basic-equation residual above which `verify_equivalence` refuses to run.
pub const EQUIVALENCE_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Cem,
    Mf,
    Ce,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Cem => "cem",
            Method::Mf => "mf",
            Method::Ce => "ce",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A unit-gain linear filter applied to origin-shifted pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    w: DVector<f64>,
    origin: OriginShift,
    method: Method,
    energy: f64,
}

impl Detector {
    pub fn w(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn origin(&self) -> &OriginShift {
        &self.origin
    }

    pub fn method(&self) -> Method {
        self.method
    }

    /// Average filter output energy `(1/N) Σ (wᵀ(rᵢ−μ))²` predicted in closed form.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Filter output for one pixel.
    pub fn apply(&self, pixel: &[f64]) -> f64 {
        self.w
            .iter()
            .zip(pixel)
            .zip(self.origin.as_vector().iter())
            .map(|((w, r), mu)| w * (r - mu))
            .sum()
    }

    /// `wᵀ(d − μ)`, which is 1 for every detector built here.
    pub fn gain(&self, d: &TargetSignature) -> f64 {
        self.apply(d.as_vector().as_slice())
    }

    /// `w / ‖w‖`.
    pub fn direction(&self) -> DVector<f64> {
        self.w.normalize()
    }
}

/// `g(μ)` together with its gradient and the implied output energy.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveReport {
    pub mu: OriginShift,
    pub g: f64,
    pub grad: DVector<f64>,
    /// `1 / g`, infinite at `g = 0`.
    pub energy: f64,
}

/// How close a CE detector at `mu_star` is to being a multiple of MF.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equivalence {
    /// Cosine between `R_μ*⁻¹(d−μ*)` and `K⁻¹(d−m)`.
    pub cosine: f64,
    /// Least-squares `c` in `R_μ*⁻¹(d−μ*) ≈ c·K⁻¹(d−m)`.
    pub c: f64,
    /// `‖u − c·v‖ / ‖v‖`.
    pub residual: f64,
}

fn check_target(stats: &SceneStats, d: &TargetSignature) -> Result<()> {
    stats.check_len(d.len())
}

fn check_not_at_origin(d: &DVector<f64>, origin: &DVector<f64>, name: &str) -> Result<()> {
    let gap = (d - origin).norm();
    if gap <= DEGENERATE_TOL * (1.0 + d.norm()) {
        return Err(Error::DegenerateTarget(format!(
            "target coincides with the {name} (distance {gap:e})"
        )));
    }
    Ok(())
}

fn normalize(
    direction: DVector<f64>,
    offset: &DVector<f64>,
    origin: OriginShift,
    method: Method,
) -> Result<Detector> {
    let quad = offset.dot(&direction);
    if !(quad > DEGENERATE_TOL) || !quad.is_finite() {
        return Err(Error::DegenerateTarget(format!(
            "{method} quadratic form is {quad:e}"
        )));
    }
    Ok(Detector {
        w: direction / quad,
        origin,
        method,
        energy: 1.0 / quad,
    })
}

/// Constrained energy minimization: `w = R⁻¹d / (dᵀR⁻¹d)` with origin 0.
pub fn cem(stats: &SceneStats, d: &TargetSignature) -> Result<Detector> {
    check_target(stats, d)?;
    let d = d.as_vector();
    check_not_at_origin(d, &DVector::zeros(d.len()), "origin")?;
    let x = stats.solve(MatrixKind::Correlation, d)?;
    normalize(x, d, OriginShift::zeros(d.len()), Method::Cem)
}

/// Matched filter: `w = K⁻¹(d−m) / ((d−m)ᵀK⁻¹(d−m))` with origin `m`.
pub fn mf(stats: &SceneStats, d: &TargetSignature) -> Result<Detector> {
    check_target(stats, d)?;
    let d = d.as_vector();
    check_not_at_origin(d, stats.mean(), "scene mean")?;
    let offset = d - stats.mean();
    let x = stats.solve(MatrixKind::Covariance, &offset)?;
    normalize(
        x,
        &offset,
        OriginShift::from_vector(stats.mean().clone())?,
        Method::Mf,
    )
}

/// CE detector for a fixed origin: `w = R_μ⁻¹(d−μ) / ((d−μ)ᵀR_μ⁻¹(d−μ))`.
///
/// `R_μ⁻¹` is applied through the Sherman–Morrison update of `K`.
pub fn ce_detector(stats: &SceneStats, d: &TargetSignature, mu: &OriginShift) -> Result<Detector> {
    check_target(stats, d)?;
    let d = d.as_vector();
    check_not_at_origin(d, mu.as_vector(), "origin")?;
    let offset = d - mu.as_vector();
    let x = stats.shifted_solver(mu)?.solve(&offset);
    normalize(x, &offset, mu.clone(), Method::Ce)
}

/// Terms shared by the objective and its gradient.
struct ObjectiveTerms {
    /// `K⁻¹(d−μ)`
    k_inv_target: DVector<f64>,
    /// `K⁻¹(m−μ)`
    k_inv_shift: DVector<f64>,
    /// `(d−μ)ᵀK⁻¹(d−μ)`
    s: f64,
    /// `(d−μ)ᵀK⁻¹(m−μ)`
    p: f64,
    /// `1 + (m−μ)ᵀK⁻¹(m−μ)`
    q: f64,
}

impl ObjectiveTerms {
    fn new(stats: &SceneStats, d: &TargetSignature, mu: &OriginShift) -> Result<Self> {
        check_target(stats, d)?;
        stats.check_len(mu.len())?;
        let target_offset = d.as_vector() - mu.as_vector();
        let shift = stats.mean() - mu.as_vector();
        let k_inv_target = stats.solve_cov(&target_offset);
        let k_inv_shift = stats.solve_cov(&shift);
        let s = target_offset.dot(&k_inv_target);
        let p = target_offset.dot(&k_inv_shift);
        let q = 1.0 + shift.dot(&k_inv_shift);
        Ok(Self {
            k_inv_target,
            k_inv_shift,
            s,
            p,
            q,
        })
    }

    fn value(&self) -> f64 {
        self.s - self.p * self.p / self.q
    }

    fn gradient(&self) -> DVector<f64> {
        let (p, q) = (self.p, self.q);
        let mut grad = &self.k_inv_target * (2.0 * p / q - 2.0);
        grad.axpy(2.0 * p / q - 2.0 * p * p / (q * q), &self.k_inv_shift, 1.0);
        grad
    }
}

/// `g(μ) = (d−μ)ᵀR_μ⁻¹(d−μ)`, evaluated as `s − p²/q` from the factorized `K`.
pub fn g_value(stats: &SceneStats, d: &TargetSignature, mu: &OriginShift) -> Result<f64> {
    Ok(ObjectiveTerms::new(stats, d, mu)?.value())
}

/// Analytic gradient of `g` with respect to `μ`.
///
/// With `a = d−μ`, `b = m−μ`, `p = aᵀK⁻¹b` and `q = 1 + bᵀK⁻¹b`:
/// `g′(μ) = −2K⁻¹a + 2p·K⁻¹(a+b)/q − 2p²·K⁻¹b/q²`.
pub fn g_gradient(
    stats: &SceneStats,
    d: &TargetSignature,
    mu: &OriginShift,
) -> Result<DVector<f64>> {
    Ok(ObjectiveTerms::new(stats, d, mu)?.gradient())
}

pub fn objective(
    stats: &SceneStats,
    d: &TargetSignature,
    mu: &OriginShift,
) -> Result<ObjectiveReport> {
    let terms = ObjectiveTerms::new(stats, d, mu)?;
    let g = terms.value();
    Ok(ObjectiveReport {
        mu: mu.clone(),
        g,
        grad: terms.gradient(),
        energy: 1.0 / g,
    })
}

/// `(d−m)ᵀK⁻¹(d−m)`, the reciprocal of the MF output energy.
pub fn mf_quadratic(stats: &SceneStats, d: &TargetSignature) -> Result<f64> {
    check_target(stats, d)?;
    let offset = d.as_vector() - stats.mean();
    Ok(offset.dot(&stats.solve_cov(&offset)))
}

/// `g` on the basic-equation hyperplane: `(d−m)ᵀK⁻¹(d−m) + 1`.
pub fn plateau_value(stats: &SceneStats, d: &TargetSignature) -> Result<f64> {
    Ok(mf_quadratic(stats, d)? + 1.0)
}

/// Measures how far the CE direction at `mu_star` is from the MF direction.
///
/// `mu_star` must satisfy the basic equation to within
/// [`EQUIVALENCE_RESIDUAL_TOL`].
pub fn verify_equivalence(
    stats: &SceneStats,
    d: &TargetSignature,
    mu_star: &OriginShift,
) -> Result<Equivalence> {
    let residual = basic_equation_residual(stats, d, mu_star)?;
    if !(residual.abs() <= EQUIVALENCE_RESIDUAL_TOL) {
        return Err(Error::PreconditionFailed {
            check: "basic_equation_residual",
            value: residual.abs(),
            tolerance: EQUIVALENCE_RESIDUAL_TOL,
        });
    }
    let u = stats
        .shifted_solver(mu_star)?
        .solve(&(d.as_vector() - mu_star.as_vector()));
    let v = stats.solve_cov(&(d.as_vector() - stats.mean()));
    let uv = u.dot(&v);
    let vv = v.dot(&v);
    let c = uv / vv;
    Ok(Equivalence {
        cosine: uv / (u.norm() * v.norm()),
        c,
        residual: (&u - &v * c).norm() / vv.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve_basic_equation, SolutionKind};
    use crate::stats::Scene;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_scene(seed: u64, n: usize, bands: usize) -> Scene {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..n * bands).map(|_| rng.random_range(0.0..1.0)).collect();
        Scene::new(n, 1, bands, values).unwrap()
    }

    fn target(values: &[f64]) -> TargetSignature {
        TargetSignature::new(values.to_vec()).unwrap()
    }

    fn brute_energy(scene: &Scene, det: &Detector) -> f64 {
        scene.pixels().map(|p| det.apply(p).powi(2)).sum::<f64>() / scene.n_pixels() as f64
    }

    #[test]
    fn cem_on_identity_correlation() {
        // Four pixels ±√2 on each axis give R = I.
        let s = 2.0_f64.sqrt();
        let pixels = vec![vec![s, 0.0], vec![-s, 0.0], vec![0.0, s], vec![0.0, -s]];
        let scene = Scene::from_pixels(4, 1, &pixels).unwrap();
        let stats = SceneStats::compute(&scene, 0.0).unwrap();
        let det = cem(&stats, &target(&[2.0, 0.0])).unwrap();
        assert!((det.w() - DVector::from_vec(vec![0.5, 0.0])).amax() < 1e-15);
        assert!((det.energy() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn detectors_have_unit_gain_and_matching_energy() {
        let scene = random_scene(1, 200, 3);
        let stats = SceneStats::compute(&scene, 0.0).unwrap();
        let d = target(&[0.9, 0.2, 0.7]);
        let mu = OriginShift::new(vec![0.3, 0.4, -0.2]).unwrap();
        for det in [
            cem(&stats, &d).unwrap(),
            mf(&stats, &d).unwrap(),
            ce_detector(&stats, &d, &mu).unwrap(),
        ] {
            assert!((det.gain(&d) - 1.0).abs() < 1e-12, "{}", det.method());
            let brute = brute_energy(&scene, &det);
            assert!((det.energy() - brute).abs() < 1e-10, "{}", det.method());
        }
    }

    #[test]
    fn mf_rejects_target_at_mean() {
        let scene = random_scene(2, 50, 2);
        let stats = SceneStats::compute(&scene, 0.0).unwrap();
        let d = TargetSignature::from_vector(stats.mean().clone()).unwrap();
        assert!(matches!(mf(&stats, &d), Err(Error::DegenerateTarget(_))));
        assert!(matches!(
            ce_detector(
                &stats,
                &target(&[0.5, 0.5]),
                &OriginShift::new(vec![0.5, 0.5]).unwrap()
            ),
            Err(Error::DegenerateTarget(_))
        ));
    }

    #[test]
    fn mf_parallel_to_cem_for_centered_scene() {
        let scene = random_scene(3, 100, 3);
        let stats = SceneStats::compute(&scene, 0.0).unwrap();
        let m = stats.mean().clone();
        let pixels: Vec<Vec<f64>> = scene
            .pixels()
            .map(|p| p.iter().zip(m.iter()).map(|(v, mv)| v - mv).collect())
            .collect();
        let centered = Scene::from_pixels(100, 1, &pixels).unwrap();
        let stats = SceneStats::compute(&centered, 0.0).unwrap();
        let d = target(&[0.4, -0.1, 0.3]);
        let a = cem(&stats, &d).unwrap().direction();
        let b = mf(&stats, &d).unwrap().direction();
        assert!(a.dot(&b) > 1.0 - 1e-12);
    }

    #[test]
    fn ce_reduces_to_cem_and_mf() {
        let scene = random_scene(4, 300, 4);
        let stats = SceneStats::compute(&scene, 0.0).unwrap();
        let d = target(&[0.9, 0.1, 0.8, 0.3]);
        let at_zero = ce_detector(&stats, &d, &OriginShift::zeros(4)).unwrap();
        let cem = cem(&stats, &d).unwrap();
        assert!((at_zero.w() - cem.w()).amax() < 1e-12 * (1.0 + cem.w().amax()));
        assert!((at_zero.energy() - cem.energy()).abs() < 1e-12);

        let mean = OriginShift::from_vector(stats.mean().clone()).unwrap();
        let at_mean = ce_detector(&stats, &d, &mean).unwrap();
        let mf = mf(&stats, &d).unwrap();
        assert!((at_mean.w() - mf.w()).amax() < 1e-12 * (1.0 + mf.w().amax()));
    }

    #[test]
    fn g_special_points() {
        let scene = random_scene(5, 150, 3);
        let stats = SceneStats::compute(&scene, 0.0).unwrap();
        let d = target(&[0.8, 0.1, 0.9]);
        let at_d = OriginShift::from_vector(d.as_vector().clone()).unwrap();
        assert_eq!(g_value(&stats, &d, &at_d).unwrap(), 0.0);

        let r_inv = stats.correlation().clone().try_inverse().unwrap();
        let expected = d.as_vector().dot(&(r_inv * d.as_vector()));
        let at_zero = g_value(&stats, &d, &OriginShift::zeros(3)).unwrap();
        assert!((at_zero - expected).abs() < 1e-10 * expected);

        let sol = solve_basic_equation(&stats, &d, SolutionKind::AlongTargetLine, None).unwrap();
        let g = g_value(&stats, &d, &sol.mu_star).unwrap();
        let plateau = plateau_value(&stats, &d).unwrap();
        assert!((g - plateau).abs() <= 1e-9 * plateau);
    }

    #[test]
    fn gradient_matches_scalar_calculus() {
        // One band: g(μ) = (d−μ)²/(k + (m−μ)²).
        let pixels = vec![vec![1.0], vec![2.0], vec![4.0]];
        let scene = Scene::from_pixels(3, 1, &pixels).unwrap();
        let stats = SceneStats::compute(&scene, 0.0).unwrap();
        let (k, m, d, mu) = (14.0 / 9.0, 7.0 / 3.0, 6.0, 0.5);
        assert!((stats.covariance()[(0, 0)] - k).abs() < 1e-14);
        let den = k + (m - mu) * (m - mu);
        let g = (d - mu) * (d - mu) / den;
        let dg = (-2.0 * (d - mu) * den + 2.0 * (m - mu) * (d - mu) * (d - mu)) / (den * den);
        let report =
            objective(&stats, &target(&[d]), &OriginShift::new(vec![mu]).unwrap()).unwrap();
        assert!((report.g - g).abs() < 1e-13);
        assert!((report.grad[0] - dg).abs() < 1e-13);
        assert!((report.energy * report.g - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let scene = random_scene(6, 120, 3);
        let stats = SceneStats::compute(&scene, 0.0).unwrap();
        let d = target(&[0.9, 0.2, 0.6]);
        for mu in [
            vec![0.0, 0.0, 0.0],
            vec![0.3, 1.1, -0.4],
            vec![0.95, 0.25, 0.55],
        ] {
            let mu = OriginShift::new(mu).unwrap();
            let grad = g_gradient(&stats, &d, &mu).unwrap();
            let h = 1e-5 * (1.0 + mu.as_vector().norm());
            let fd = DVector::from_fn(3, |i, _| {
                let mut plus = mu.as_vector().clone();
                let mut minus = mu.as_vector().clone();
                plus[i] += h;
                minus[i] -= h;
                let gp = g_value(&stats, &d, &OriginShift::from_vector(plus).unwrap()).unwrap();
                let gm = g_value(&stats, &d, &OriginShift::from_vector(minus).unwrap()).unwrap();
                (gp - gm) / (2.0 * h)
            });
            assert!((&grad - &fd).norm() < 1e-6 * fd.norm(), "{grad} vs {fd}");
        }
    }

    #[test]
    fn gradient_vanishes_on_hyperplane() {
        let scene = random_scene(7, 200, 3);
        let stats = SceneStats::compute(&scene, 0.0).unwrap();
        let d = target(&[0.9, 0.2, 0.6]);
        let g0 = g_gradient(&stats, &d, &OriginShift::zeros(3))
            .unwrap()
            .norm();
        for kind in [SolutionKind::MinimalShift, SolutionKind::AlongTargetLine] {
            let sol = solve_basic_equation(&stats, &d, kind, None).unwrap();
            let grad = g_gradient(&stats, &d, &sol.mu_star).unwrap();
            assert!(grad.norm() <= 1e-8 * (1.0 + g0));
        }
    }

    #[test]
    fn equivalence_on_hyperplane_and_failure_off_it() {
        let scene = random_scene(8, 400, 3);
        let stats = SceneStats::compute(&scene, 0.0).unwrap();
        let d = target(&[0.9, 0.2, 0.6]);
        let sol = solve_basic_equation(&stats, &d, SolutionKind::MinimalShift, None).unwrap();
        let eq = verify_equivalence(&stats, &d, &sol.mu_star).unwrap();
        assert!(eq.cosine >= 1.0 - 1e-10);
        assert!((eq.c - 1.0).abs() <= 1e-8);
        assert!(eq.residual <= 1e-8);

        let mean = OriginShift::from_vector(stats.mean().clone()).unwrap();
        assert!(matches!(
            verify_equivalence(&stats, &d, &mean),
            Err(Error::PreconditionFailed {
                check: "basic_equation_residual",
                ..
            })
        ));
    }

    #[test]
    fn energy_inequality_holds() {
        for seed in 0..20 {
            let scene = random_scene(100 + seed, 80, 3);
            let stats = SceneStats::compute(&scene, 0.0).unwrap();
            let d = target(&[1.2, -0.3, 0.5]);
            let cem_g = 1.0 / cem(&stats, &d).unwrap().energy();
            assert!(cem_g <= plateau_value(&stats, &d).unwrap() + 1e-10);
        }
    }

    #[test]
    fn ce_on_hyperplane_matches_dense_oracle() {
        let scene = random_scene(9, 300, 3);
        let stats = SceneStats::compute(&scene, 0.0).unwrap();
        let d = target(&[0.9, 0.2, 0.6]);
        let sol = solve_basic_equation(&stats, &d, SolutionKind::AlongTargetLine, None).unwrap();
        let r_mu: DMatrix<f64> = stats.shifted_correlation(&sol.mu_star).unwrap();
        let offset = d.as_vector() - sol.mu_star.as_vector();
        let dense = r_mu.try_inverse().unwrap() * &offset;
        let ce = ce_detector(&stats, &d, &sol.mu_star).unwrap();
        let mf = mf(&stats, &d).unwrap();
        assert!(dense.normalize().dot(&mf.direction()) >= 1.0 - 1e-10);
        assert!(ce.direction().dot(&mf.direction()) >= 1.0 - 1e-10);
    }

    #[test]
    fn cem_scales_inversely() {
        let scene = random_scene(10, 100, 3);
        let d = target(&[0.9, 0.2, 0.6]);
        let base = cem(&SceneStats::compute(&scene, 0.0).unwrap(), &d).unwrap();
        let s = 3.5;
        let scaled_scene = scene.scaled(s).unwrap();
        let scaled_d = TargetSignature::from_vector(d.as_vector() * s).unwrap();
        let scaled = cem(&SceneStats::compute(&scaled_scene, 0.0).unwrap(), &scaled_d).unwrap();
        assert!((scaled.w() * s - base.w()).amax() < 1e-10 * base.w().amax());
    }
}
