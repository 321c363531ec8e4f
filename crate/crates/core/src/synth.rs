//! Seeded synthetic scenes: a Gaussian background with a Gaussian target
//! block pasted over it.
//!
//! Samples come from ChaCha20 seeded with the 64-bit seed, turned into
//! standard normals and colored by the lower Cholesky factor of each
//! covariance. Draw order is fixed (background pixels row-major, then target
//! pixels row-major, bands innermost), so a seed and config always give the
//! same scene bit for bit.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::eval::GroundTruthMask;
use crate::stats::{Scene, TargetSignature};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetPosition {
    Centered,
    /// Top-left corner of the block.
    At {
        x: usize,
        y: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub bg_size: (usize, usize),
    pub bands: usize,
    pub bg_mean: DVector<f64>,
    pub bg_cov: DMatrix<f64>,
    pub tgt_size: (usize, usize),
    pub tgt_mean: DVector<f64>,
    pub tgt_cov: DMatrix<f64>,
    pub tgt_position: TargetPosition,
}

impl Default for SynthConfig {
    /// 50×50×3 flat background cloud with a 5×5 target block above it.
    fn default() -> Self {
        Self {
            seed: 42,
            bg_size: (50, 50),
            bands: 3,
            bg_mean: DVector::zeros(3),
            bg_cov: DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.05])),
            tgt_size: (5, 5),
            tgt_mean: DVector::from_vec(vec![0.0, 0.0, 1.0]),
            tgt_cov: DMatrix::identity(3, 3) * 0.01,
            tgt_position: TargetPosition::Centered,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub scene: Scene,
    pub mask: GroundTruthMask,
    /// The target block's distribution mean.
    pub target: TargetSignature,
}

impl SynthConfig {
    /// Top-left corner of the target block.
    pub fn target_origin(&self) -> Result<(usize, usize)> {
        let (bw, bh) = self.bg_size;
        let (tw, th) = self.tgt_size;
        if tw > bw || th > bh {
            return Err(Error::ConfigInvalid(format!(
                "target block {tw}x{th} exceeds background {bw}x{bh}"
            )));
        }
        let (x, y) = match self.tgt_position {
            TargetPosition::Centered => ((bw - tw) / 2, (bh - th) / 2),
            TargetPosition::At { x, y } => (x, y),
        };
        if x + tw > bw || y + th > bh {
            return Err(Error::ConfigInvalid(format!(
                "target block at ({x}, {y}) with size {tw}x{th} leaves the {bw}x{bh} background"
            )));
        }
        Ok((x, y))
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.bands;
        if l == 0 {
            return Err(Error::ConfigInvalid("bands must be at least 1".into()));
        }
        if self.bg_size.0 * self.bg_size.1 < 2 {
            return Err(Error::ConfigInvalid(
                "background needs at least 2 pixels".into(),
            ));
        }
        for (name, v) in [("bg_mean", &self.bg_mean), ("tgt_mean", &self.tgt_mean)] {
            if v.len() != l {
                return Err(Error::ConfigInvalid(format!(
                    "{name} has {} entries, expected {l}",
                    v.len()
                )));
            }
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::ConfigInvalid(format!("{name} is not finite")));
            }
        }
        for (name, m) in [("bg_cov", &self.bg_cov), ("tgt_cov", &self.tgt_cov)] {
            color_factor(name, m, l)?;
        }
        self.target_origin()?;
        Ok(())
    }

    /// Sets one field from its config-file key. Returns `false` for unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let bad = |what: &str| Error::ConfigInvalid(format!("{key}: {what}: {value:?}"));
        let int = || {
            value
                .trim()
                .parse::<usize>()
                .map_err(|_| bad("expected an integer"))
        };
        match key {
            "seed" => self.seed = value.trim().parse().map_err(|_| bad("expected a u64"))?,
            "bands" => self.bands = int()?,
            "bg_width" => self.bg_size.0 = int()?,
            "bg_height" => self.bg_size.1 = int()?,
            "tgt_width" => self.tgt_size.0 = int()?,
            "tgt_height" => self.tgt_size.1 = int()?,
            "bg_mean" => self.bg_mean = DVector::from_vec(parse_list(value).map_err(|e| bad(&e))?),
            "tgt_mean" => {
                self.tgt_mean = DVector::from_vec(parse_list(value).map_err(|e| bad(&e))?)
            }
            "bg_cov" => self.bg_cov = parse_square(value).map_err(|e| bad(&e))?,
            "tgt_cov" => self.tgt_cov = parse_square(value).map_err(|e| bad(&e))?,
            "tgt_position" => {
                self.tgt_position = if value.trim() == "centered" {
                    TargetPosition::Centered
                } else {
                    let xy = parse_list(value).map_err(|e| bad(&e))?;
                    match xy.as_slice() {
                        [x, y]
                            if *x >= 0.0 && *y >= 0.0 && x.fract() == 0.0 && y.fract() == 0.0 =>
                        {
                            TargetPosition::At {
                                x: *x as usize,
                                y: *y as usize,
                            }
                        }
                        _ => return Err(bad("expected \"centered\" or \"x,y\"")),
                    }
                }
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// The config as `key=value` lines accepted by [`SynthConfig::set`].
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        let row_major = |m: &DMatrix<f64>| list(m.transpose().as_slice());
        let position = match self.tgt_position {
            TargetPosition::Centered => "centered".to_string(),
            TargetPosition::At { x, y } => format!("{x},{y}"),
        };
        vec![
            ("seed".into(), self.seed.to_string()),
            ("bg_width".into(), self.bg_size.0.to_string()),
            ("bg_height".into(), self.bg_size.1.to_string()),
            ("bands".into(), self.bands.to_string()),
            ("bg_mean".into(), list(self.bg_mean.as_slice())),
            ("bg_cov".into(), row_major(&self.bg_cov)),
            ("tgt_width".into(), self.tgt_size.0.to_string()),
            ("tgt_height".into(), self.tgt_size.1.to_string()),
            ("tgt_mean".into(), list(self.tgt_mean.as_slice())),
            ("tgt_cov".into(), row_major(&self.tgt_cov)),
            ("tgt_position".into(), position),
        ]
    }
}

fn parse_list(value: &str) -> std::result::Result<Vec<f64>, String> {
    value
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| format!("bad number {s:?}"))
        })
        .collect()
}

/// Row-major square matrix from a comma list.
fn parse_square(value: &str) -> std::result::Result<DMatrix<f64>, String> {
    let entries = parse_list(value)?;
    let n = (entries.len() as f64).sqrt().round() as usize;
    if n * n != entries.len() {
        return Err(format!(
            "{} entries do not form a square matrix",
            entries.len()
        ));
    }
    Ok(DMatrix::from_row_slice(n, n, &entries))
}

fn color_factor(name: &str, cov: &DMatrix<f64>, bands: usize) -> Result<DMatrix<f64>> {
    if cov.nrows() != bands || cov.ncols() != bands {
        return Err(Error::ConfigInvalid(format!(
            "{name} is {}x{}, expected {bands}x{bands}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    if !cov.iter().all(|v| v.is_finite()) {
        return Err(Error::ConfigInvalid(format!("{name} is not finite")));
    }
    let scale = cov.amax();
    if (cov - cov.transpose()).amax() > 1e-12 * scale {
        return Err(Error::ConfigInvalid(format!("{name} is not symmetric")));
    }
    Cholesky::new(cov.clone())
        .map(|c| c.l())
        .ok_or_else(|| Error::ConfigInvalid(format!("{name} is not positive definite")))
}

fn draw(rng: &mut ChaCha20Rng, mean: &DVector<f64>, factor: &DMatrix<f64>, out: &mut [f64]) {
    let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = mean + factor * z;
    out.copy_from_slice(x.as_slice());
}

/// Generates the scene, its ground-truth mask and the target signature.
pub fn generate(config: &SynthConfig) -> Result<SynthScene> {
    config.validate()?;
    let l = config.bands;
    let (bw, bh) = config.bg_size;
    let (tw, th) = config.tgt_size;
    let (tx, ty) = config.target_origin()?;
    let bg_factor = color_factor("bg_cov", &config.bg_cov, l)?;
    let tgt_factor = color_factor("tgt_cov", &config.tgt_cov, l)?;

    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut values = vec![0.0; bw * bh * l];
    for pixel in values.chunks_exact_mut(l) {
        draw(&mut rng, &config.bg_mean, &bg_factor, pixel);
    }
    let mut labels = vec![false; bw * bh];
    for y in ty..ty + th {
        for x in tx..tx + tw {
            let idx = y * bw + x;
            draw(
                &mut rng,
                &config.tgt_mean,
                &tgt_factor,
                &mut values[idx * l..(idx + 1) * l],
            );
            labels[idx] = true;
        }
    }
    Ok(SynthScene {
        scene: Scene::new(bw, bh, l, values)?,
        mask: GroundTruthMask::new(bw, bh, labels)?,
        target: TargetSignature::from_vector(config.tgt_mean.clone())?,
    })
}
