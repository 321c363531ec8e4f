//! Scene data model and second-order statistics.
//!
//! All statistics use the population divisor `N`. The correlation matrix is
//! `R = (1/N) Σ rᵢrᵢᵀ` and the covariance is `K = (1/N) Σ (rᵢ−m)(rᵢ−m)ᵀ`, so
//! `R = K + m·mᵀ`. Moving the data origin to `μ` gives the shifted
//! correlation `R_μ = K + (m−μ)(m−μ)ᵀ`, whose inverse is applied through a
//! rank-one Sherman–Morrison update of the factorized covariance.
//!
//! Accumulation is serial over pixels in storage order, so results are
//! bitwise reproducible for a given scene.

use nalgebra::{Cholesky, DMatrix, DVector, DVectorView, Dyn};

use crate::error::{Error, Result};

/// Pivots of the Cholesky factor below this fraction of the largest diagonal
/// entry are treated as a failed factorization.
const PIVOT_RTOL: f64 = 1e-12;

/// A multiband raster stored band-interleaved-by-pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    width: usize,
    height: usize,
    bands: usize,
    values: Vec<f64>,
}

impl Scene {
    /// Builds a scene from row-major BIP values (`values[(y*width + x)*bands + band]`).
    pub fn new(width: usize, height: usize, bands: usize, values: Vec<f64>) -> Result<Self> {
        if bands == 0 {
            return Err(Error::InvalidScene("band count must be at least 1".into()));
        }
        let n = width.checked_mul(height).ok_or(Error::DimensionOverflow)?;
        if n < 2 {
            return Err(Error::InvalidScene(format!(
                "need at least 2 pixels, got {width}x{height}"
            )));
        }
        let expected = n.checked_mul(bands).ok_or(Error::DimensionOverflow)?;
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            width,
            height,
            bands,
            values,
        })
    }

    /// Builds a `width`×`height` scene from a list of equal-length pixel vectors.
    pub fn from_pixels(width: usize, height: usize, pixels: &[Vec<f64>]) -> Result<Self> {
        let bands = pixels.first().map_or(0, Vec::len);
        if let Some(bad) = pixels.iter().find(|p| p.len() != bands) {
            return Err(Error::DimensionMismatch {
                expected: bands,
                found: bad.len(),
            });
        }
        Self::new(width, height, bands, pixels.concat())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn n_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.values[index * self.bands..(index + 1) * self.bands]
    }

    pub fn pixels(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.bands)
    }

    /// Returns a copy with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.width,
            self.height,
            self.bands,
            self.values.iter().map(|v| v * factor).collect(),
        )
    }
}

fn finite_vector(values: Vec<f64>) -> Result<DVector<f64>> {
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(DVector::from_vec(values))
}

/// The known spectrum `d` of the target being searched for.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSignature(DVector<f64>);

impl TargetSignature {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        finite_vector(values).map(Self)
    }

    pub fn from_vector(v: DVector<f64>) -> Result<Self> {
        Self::new(v.as_slice().to_vec())
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A data origin `μ` that is subtracted from every pixel before filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct OriginShift(DVector<f64>);

impl OriginShift {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        finite_vector(values).map(Self)
    }

    pub fn from_vector(v: DVector<f64>) -> Result<Self> {
        Self::new(v.as_slice().to_vec())
    }

    pub fn zeros(bands: usize) -> Self {
        Self(DVector::zeros(bands))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Selects which scene matrix a linear solve runs against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    Covariance,
    Correlation,
}

/// Mean, covariance and correlation of a scene together with the Cholesky
/// factors of `K + εI` and `R + εI`.
#[derive(Debug, Clone)]
pub struct SceneStats {
    n: usize,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    correlation: DMatrix<f64>,
    ridge: f64,
    cov_factor: Cholesky<f64, Dyn>,
    corr_factor: Cholesky<f64, Dyn>,
}

impl SceneStats {
    /// Computes the scene statistics and factorizes both matrices with
    /// `ridge` added to their diagonals.
    pub fn compute(scene: &Scene, ridge: f64) -> Result<Self> {
        if !(ridge.is_finite() && ridge >= 0.0) {
            return Err(Error::ConfigInvalid(format!(
                "ridge must be finite and non-negative, got {ridge}"
            )));
        }
        let bands = scene.bands();
        let n = scene.n_pixels();
        let inv_n = 1.0 / n as f64;

        let mut mean = DVector::zeros(bands);
        for p in scene.pixels() {
            mean += DVectorView::from_slice(p, bands);
        }
        mean *= inv_n;

        let mut covariance = DMatrix::zeros(bands, bands);
        let mut correlation = DMatrix::zeros(bands, bands);
        let mut centered = DVector::zeros(bands);
        for p in scene.pixels() {
            let r = DVectorView::from_slice(p, bands);
            centered.copy_from(&r);
            centered -= &mean;
            covariance.ger(1.0, &centered, &centered, 1.0);
            correlation.ger(1.0, &r, &r, 1.0);
        }
        covariance *= inv_n;
        correlation *= inv_n;
        symmetrize(&mut covariance);
        symmetrize(&mut correlation);

        let cov_factor = factorize(&covariance, ridge, "covariance")?;
        let corr_factor = factorize(&correlation, ridge, "correlation")?;
        Ok(Self {
            n,
            mean,
            covariance,
            correlation,
            ridge,
            cov_factor,
            corr_factor,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bands(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Covariance `K` without the ridge term.
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Correlation `R` without the ridge term.
    pub fn correlation(&self) -> &DMatrix<f64> {
        &self.correlation
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// `K + εI`, the covariance every solve actually uses.
    pub fn effective_covariance(&self) -> DMatrix<f64> {
        with_ridge(&self.covariance, self.ridge)
    }

    /// `R + εI`, the correlation every solve actually uses.
    pub fn effective_correlation(&self) -> DMatrix<f64> {
        with_ridge(&self.correlation, self.ridge)
    }

    /// Solves `(matrix + εI) x = b`.
    pub fn solve(&self, which: MatrixKind, b: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(b.len())?;
        let factor = match which {
            MatrixKind::Covariance => &self.cov_factor,
            MatrixKind::Correlation => &self.corr_factor,
        };
        Ok(factor.solve(b))
    }

    pub(crate) fn solve_cov(&self, b: &DVector<f64>) -> DVector<f64> {
        self.cov_factor.solve(b)
    }

    /// `K⁻¹` as a dense matrix.
    pub fn covariance_inverse(&self) -> DMatrix<f64> {
        self.cov_factor.inverse()
    }

    /// The origin-shifted correlation `K + εI + (m−μ)(m−μ)ᵀ`.
    ///
    /// Returns the effective covariance at `μ = m` and the effective
    /// correlation at `μ = 0`.
    pub fn shifted_correlation(&self, mu: &OriginShift) -> Result<DMatrix<f64>> {
        self.check_len(mu.len())?;
        let shift = &self.mean - mu.as_vector();
        let mut out = self.effective_covariance();
        out.ger(1.0, &shift, &shift, 1.0);
        Ok(out)
    }

    /// Dense `R_μ⁻¹` built from the factorized covariance by Sherman–Morrison.
    pub fn shifted_inverse(&self, mu: &OriginShift) -> Result<DMatrix<f64>> {
        self.check_len(mu.len())?;
        sherman_morrison_inverse(|b| Ok(self.solve_cov(b)), &self.mean, mu)
    }

    /// Prepares O(L²) applications of `R_μ⁻¹` for a fixed origin.
    pub fn shifted_solver(&self, mu: &OriginShift) -> Result<ShiftedSolver<'_>> {
        self.check_len(mu.len())?;
        let shift = &self.mean - mu.as_vector();
        let k_inv_shift = self.solve_cov(&shift);
        let denom = 1.0 + shift.dot(&k_inv_shift);
        if !(denom > 0.0 && denom.is_finite()) {
            return Err(Error::Singular {
                what: "shifted correlation",
                ridge: self.ridge,
            });
        }
        Ok(ShiftedSolver {
            stats: self,
            shift,
            k_inv_shift,
            denom,
        })
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.bands() {
            return Err(Error::DimensionMismatch {
                expected: self.bands(),
                found: len,
            });
        }
        Ok(())
    }
}

/// Applies `R_μ⁻¹ = K⁻¹ − K⁻¹b bᵀK⁻¹ / (1 + bᵀK⁻¹b)` with `b = m − μ`.
#[derive(Debug, Clone)]
pub struct ShiftedSolver<'a> {
    stats: &'a SceneStats,
    shift: DVector<f64>,
    k_inv_shift: DVector<f64>,
    denom: f64,
}

impl ShiftedSolver<'_> {
    /// `m − μ`.
    pub fn shift(&self) -> &DVector<f64> {
        &self.shift
    }

    /// `K⁻¹(m − μ)`.
    pub fn k_inv_shift(&self) -> &DVector<f64> {
        &self.k_inv_shift
    }

    /// `1 + (m−μ)ᵀK⁻¹(m−μ)`.
    pub fn denom(&self) -> f64 {
        self.denom
    }

    pub fn solve(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = self.stats.solve_cov(x);
        let coeff = self.k_inv_shift.dot(x) / self.denom;
        out.axpy(-coeff, &self.k_inv_shift, 1.0);
        out
    }
}

/// Inverts `K + (m−μ)(m−μ)ᵀ` given only a solver for `K`.
///
/// `solve_k` is called once per band to materialize `K⁻¹`.
pub fn sherman_morrison_inverse<F>(
    solve_k: F,
    mean: &DVector<f64>,
    mu: &OriginShift,
) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let bands = mean.len();
    if mu.len() != bands {
        return Err(Error::DimensionMismatch {
            expected: bands,
            found: mu.len(),
        });
    }
    let mut k_inv = DMatrix::zeros(bands, bands);
    for j in 0..bands {
        let col = solve_k(&DVector::from_fn(
            bands,
            |i, _| if i == j { 1.0 } else { 0.0 },
        ))?;
        k_inv.set_column(j, &col);
    }
    symmetrize(&mut k_inv);

    let shift = mean - mu.as_vector();
    let k_inv_shift = &k_inv * &shift;
    let denom = 1.0 + shift.dot(&k_inv_shift);
    if !(denom > 0.0 && denom.is_finite()) {
        return Err(Error::Singular {
            what: "shifted correlation",
            ridge: 0.0,
        });
    }
    k_inv.ger(-1.0 / denom, &k_inv_shift, &k_inv_shift, 1.0);
    Ok(k_inv)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

fn with_ridge(m: &DMatrix<f64>, ridge: f64) -> DMatrix<f64> {
    let mut out = m.clone();
    for i in 0..out.nrows() {
        out[(i, i)] += ridge;
    }
    out
}

fn factorize(m: &DMatrix<f64>, ridge: f64, what: &'static str) -> Result<Cholesky<f64, Dyn>> {
    let a = with_ridge(m, ridge);
    let max_diag = a
        .diagonal()
        .iter()
        .fold(0.0_f64, |acc, &v| acc.max(v.abs()));
    let singular = Error::Singular { what, ridge };
    if !(max_diag > 0.0 && max_diag.is_finite()) {
        return Err(singular);
    }
    let factor = Cholesky::new(a).ok_or(Error::Singular { what, ridge })?;
    let min_pivot_sq = factor
        .l_dirty()
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |acc, &v| acc.min(v * v));
    if !(min_pivot_sq > PIVOT_RTOL * max_diag) {
        return Err(singular);
    }
    Ok(factor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_scene(seed: u64, n: usize, bands: usize) -> Scene {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..n * bands)
            .map(|_| rng.random_range(-1.0..2.0))
            .collect();
        Scene::new(n, 1, bands, values).unwrap()
    }

    fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).amax()
    }

    #[test]
    fn two_pixel_scene() {
        let scene = Scene::from_pixels(2, 1, &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let stats = SceneStats::compute(&scene, 0.0);
        // K is rank one here, so the factorization must fail.
        assert!(matches!(
            stats,
            Err(Error::Singular {
                what: "covariance",
                ..
            })
        ));

        let stats = SceneStats::compute(&scene, 1e-3).unwrap();
        assert_eq!(stats.mean().as_slice(), &[0.5, 0.5]);
        assert_eq!(
            stats.covariance(),
            &DMatrix::from_row_slice(2, 2, &[0.25, -0.25, -0.25, 0.25])
        );
        assert_eq!(
            stats.correlation(),
            &DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5])
        );
    }

    #[test]
    fn identical_pixels_need_ridge() {
        let scene = Scene::from_pixels(3, 1, &vec![vec![0.1, 2.0]; 3]).unwrap();
        assert!(matches!(
            SceneStats::compute(&scene, 0.0),
            Err(Error::Singular { .. })
        ));
        let stats = SceneStats::compute(&scene, 1e-6).unwrap();
        assert!(stats.covariance().amax() < 1e-30);
    }

    #[test]
    fn rejects_bad_scenes() {
        assert!(matches!(
            Scene::new(2, 1, 1, vec![1.0, f64::NAN]),
            Err(Error::NonFinite { index: 1 })
        ));
        assert!(matches!(
            Scene::new(1, 1, 1, vec![1.0]),
            Err(Error::InvalidScene(_))
        ));
        assert!(matches!(
            Scene::new(2, 2, 1, vec![1.0; 3]),
            Err(Error::DimensionMismatch {
                expected: 4,
                found: 3
            })
        ));
        let scene = random_scene(1, 10, 2);
        assert!(matches!(
            SceneStats::compute(&scene, -1.0),
            Err(Error::ConfigInvalid(_))
        ));
    }

    #[test]
    fn correlation_is_covariance_plus_mean_outer() {
        let scene = random_scene(7, 100, 3);
        let stats = SceneStats::compute(&scene, 0.0).unwrap();
        let m = stats.mean();
        let rhs = stats.covariance() + m * m.transpose();
        assert!(max_abs_diff(stats.correlation(), &rhs) < 1e-12);
    }

    #[test]
    fn shifted_correlation_special_origins() {
        let scene = random_scene(11, 60, 4);
        let stats = SceneStats::compute(&scene, 0.0).unwrap();
        let at_mean = stats
            .shifted_correlation(&OriginShift::from_vector(stats.mean().clone()).unwrap())
            .unwrap();
        assert_eq!(&at_mean, stats.covariance());
        let at_zero = stats.shifted_correlation(&OriginShift::zeros(4)).unwrap();
        assert!(max_abs_diff(&at_zero, stats.correlation()) < 1e-14);
    }

    #[test]
    fn shifted_correlation_matches_pixel_sum() {
        let scene = random_scene(3, 80, 3);
        let stats = SceneStats::compute(&scene, 0.0).unwrap();
        let mu = OriginShift::new(vec![0.3, -1.2, 2.5]).unwrap();
        let mut brute = DMatrix::zeros(3, 3);
        for p in scene.pixels() {
            let v = DVector::from_column_slice(p) - mu.as_vector();
            brute += &v * v.transpose();
        }
        brute /= scene.n_pixels() as f64;
        let fast = stats.shifted_correlation(&mu).unwrap();
        assert!(max_abs_diff(&fast, &brute) < 1e-10);
    }

    #[test]
    fn sherman_morrison_against_dense_inverse() {
        let scene = random_scene(5, 50, 3);
        let stats = SceneStats::compute(&scene, 0.0).unwrap();
        let mu = OriginShift::new(vec![1.5, 0.0, -0.7]).unwrap();
        let sm = stats.shifted_inverse(&mu).unwrap();
        let dense = stats
            .shifted_correlation(&mu)
            .unwrap()
            .try_inverse()
            .unwrap();
        assert!(max_abs_diff(&sm, &dense) < 1e-10);
        let product = &sm * stats.shifted_correlation(&mu).unwrap();
        assert!(max_abs_diff(&product, &DMatrix::identity(3, 3)) < 1e-10);

        // At μ = m the rank-one term is exactly zero.
        let at_mean = OriginShift::from_vector(stats.mean().clone()).unwrap();
        let k_inv = stats.covariance_inverse();
        let diff = max_abs_diff(&stats.shifted_inverse(&at_mean).unwrap(), &k_inv);
        assert!(diff <= 1e-13 * k_inv.amax());
    }

    #[test]
    fn sherman_morrison_scalar_case() {
        let (k, m, mu) = (2.0, 0.5, -1.0);
        let inv = sherman_morrison_inverse(
            |b| Ok(b / k),
            &DVector::from_element(1, m),
            &OriginShift::new(vec![mu]).unwrap(),
        )
        .unwrap();
        let expected = 1.0 / (k + (m - mu) * (m - mu));
        assert!((inv[(0, 0)] - expected).abs() < 1e-15);
    }

    #[test]
    fn shifted_solver_matches_dense() {
        let scene = random_scene(9, 40, 5);
        let stats = SceneStats::compute(&scene, 0.0).unwrap();
        let mu = OriginShift::new(vec![0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0, -1.0]);
        let fast = stats.shifted_solver(&mu).unwrap().solve(&x);
        let dense = stats.shifted_inverse(&mu).unwrap() * &x;
        assert!((fast - dense).amax() < 1e-10);
    }

    #[test]
    fn solve_spd_examples() {
        // diag(2, 4) covariance from four axis-aligned pixels.
        let s = 2.0_f64.sqrt();
        let pixels = vec![vec![s, 0.0], vec![-s, 0.0], vec![0.0, 2.0], vec![0.0, -2.0]];
        let scene = Scene::from_pixels(4, 1, &pixels).unwrap();
        let stats = SceneStats::compute(&scene, 0.0).unwrap();
        let x = stats
            .solve(MatrixKind::Covariance, &DVector::from_vec(vec![1.0, 2.0]))
            .unwrap();
        assert!((x - DVector::from_vec(vec![1.0, 1.0])).amax() < 1e-14);

        let scene = random_scene(21, 200, 5);
        let stats = SceneStats::compute(&scene, 0.0).unwrap();
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        for which in [MatrixKind::Covariance, MatrixKind::Correlation] {
            let x = stats.solve(which, &b).unwrap();
            let a = match which {
                MatrixKind::Covariance => stats.effective_covariance(),
                MatrixKind::Correlation => stats.effective_correlation(),
            };
            assert!((a * x - &b).norm() <= 1e-8 * b.norm());
        }
        assert!(matches!(
            stats.solve(MatrixKind::Covariance, &DVector::zeros(3)),
            Err(Error::DimensionMismatch {
                expected: 5,
                found: 3
            })
        ));
    }

    #[test]
    fn permutation_invariance() {
        let scene = random_scene(13, 64, 3);
        let mut pixels: Vec<Vec<f64>> = scene.pixels().map(<[f64]>::to_vec).collect();
        pixels.reverse();
        pixels.swap(3, 40);
        let shuffled = Scene::from_pixels(64, 1, &pixels).unwrap();
        let a = SceneStats::compute(&scene, 0.0).unwrap();
        let b = SceneStats::compute(&shuffled, 0.0).unwrap();
        assert!((a.mean() - b.mean()).amax() <= 1e-12);
        assert!(max_abs_diff(a.covariance(), b.covariance()) <= 1e-12);
        assert!(max_abs_diff(a.correlation(), b.correlation()) <= 1e-12);
    }
}
