//! Seeded random scenes and dense brute-force oracles shared by the
//! integration tests. Nothing here goes through the library's factorized
//! solvers: matrices are accumulated from pixels and inverted by LU.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use tdrs::{Scene, SceneStats, TargetSignature};

pub const BAND_CYCLE: [usize; 4] = [2, 3, 8, 32];

pub struct Case {
    pub seed: u64,
    pub scene: Scene,
    pub stats: SceneStats,
    pub d: TargetSignature,
}

pub fn gaussian_vector(rng: &mut ChaCha20Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// `Q·diag(λ)·Qᵀ` with eigenvalues in `[0.2, 2]`, so condition number ≤ 10.
pub fn random_spd(rng: &mut ChaCha20Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = a.qr().q();
    let lambda = DVector::from_fn(n, |_, _| rng.random_range(0.2..2.0));
    &q * DMatrix::from_diagonal(&lambda) * q.transpose()
}

/// A 50×50 scene of `bands`-dimensional Gaussian pixels and a target a few
/// Mahalanobis units away from the background mean.
pub fn random_case(seed: u64, bands: usize) -> Case {
    random_case_sized(seed, bands, 50, 50)
}

pub fn random_case_sized(seed: u64, bands: usize, width: usize, height: usize) -> Case {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mean = gaussian_vector(&mut rng, bands);
    let cov = random_spd(&mut rng, bands);
    let chol = cov.clone().cholesky().expect("spd").l();
    let n = width * height;
    let mut values = Vec::with_capacity(n * bands);
    for _ in 0..n {
        let z = gaussian_vector(&mut rng, bands);
        values.extend((&mean + &chol * z).iter());
    }
    let scene = Scene::new(width, height, bands, values).expect("valid scene");
    let stats = SceneStats::compute(&scene, 0.0).expect("well conditioned");
    let dir = gaussian_vector(&mut rng, bands).normalize();
    let dist = rng.random_range(1.0..4.0);
    let d = TargetSignature::from_vector(&mean + &chol * dir * dist).unwrap();
    Case {
        seed,
        scene,
        stats,
        d,
    }
}

/// The standard 100-scene suite: 25 seeds per band count in `BAND_CYCLE`.
pub fn suite() -> Vec<Case> {
    (0..100u64)
        .map(|i| random_case(1000 + i, BAND_CYCLE[i as usize % BAND_CYCLE.len()]))
        .collect()
}

pub fn pixel_vector(scene: &Scene, i: usize) -> DVector<f64> {
    DVector::from_column_slice(scene.pixel(i))
}

pub fn brute_mean(scene: &Scene) -> DVector<f64> {
    let mut m = DVector::zeros(scene.bands());
    for p in scene.pixels() {
        m += DVector::from_column_slice(p);
    }
    m / scene.n_pixels() as f64
}

/// `(1/N) Σ (rᵢ−μ)(rᵢ−μ)ᵀ`.
pub fn brute_shifted(scene: &Scene, mu: &DVector<f64>) -> DMatrix<f64> {
    let l = scene.bands();
    let mut acc = DMatrix::zeros(l, l);
    for p in scene.pixels() {
        let r = DVector::from_column_slice(p) - mu;
        acc += &r * r.transpose();
    }
    acc / scene.n_pixels() as f64
}

pub fn dense_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().lu().try_inverse().expect("invertible")
}

/// `(d−μ)ᵀR_μ⁻¹(d−μ)` from a dense inverse of the shifted matrix built from
/// `k` and `m` (not from the library's factorization).
pub fn dense_g(k: &DMatrix<f64>, m: &DVector<f64>, d: &DVector<f64>, mu: &DVector<f64>) -> f64 {
    let b = m - mu;
    let r_mu = k + &b * b.transpose();
    let a = d - mu;
    a.dot(&(dense_inverse(&r_mu) * &a))
}

/// Central differences of [`dense_g`].
pub fn dense_fd_gradient(
    k: &DMatrix<f64>,
    m: &DVector<f64>,
    d: &DVector<f64>,
    mu: &DVector<f64>,
) -> DVector<f64> {
    let h = 1e-5 * (1.0 + mu.norm());
    DVector::from_fn(mu.len(), |i, _| {
        let mut plus = mu.clone();
        let mut minus = mu.clone();
        plus[i] += h;
        minus[i] -= h;
        (dense_g(k, m, d, &plus) - dense_g(k, m, d, &minus)) / (2.0 * h)
    })
}

/// Fraction of (positive, negative) pairs ranked correctly, ties counting ½.
pub fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut twice_wins = 0u64;
    let mut pairs = 0u64;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1;
            twice_wins += if si > sj {
                2
            } else if si == sj {
                1
            } else {
                0
            };
        }
    }
    twice_wins as f64 / (2 * pairs) as f64
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}
