//! ROC curves of CEM, MF and CE against the ground-truth target block.
//!
//! cargo run --example roc_curves [out_dir]

use std::path::PathBuf;

use tdrs::detectors;
use tdrs::eval;
use tdrs::io;
use tdrs::solver::{self, SolutionKind};
use tdrs::synth::{self, SynthConfig};
use tdrs::{Result, SceneStats};

fn main() -> Result<()> {
    let out_dir = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "target/examples-out".into()),
    );
    std::fs::create_dir_all(&out_dir)?;

    // A weaker, noisier target than the default so the curves separate.
    let mut config = SynthConfig::default();
    config.set("tgt_mean", "0,0,0.45")?;
    config.set("tgt_cov", "0.5,0,0,0,0.5,0,0,0,0.02")?;
    let synth = synth::generate(&config)?;
    let stats = SceneStats::compute(&synth.scene, 0.0)?;
    let d = &synth.target;
    let mu = solver::solve_basic_equation(&stats, d, SolutionKind::MinimalShift, None)?.mu_star;

    for det in [
        detectors::cem(&stats, d)?,
        detectors::mf(&stats, d)?,
        detectors::ce_detector(&stats, d, &mu)?,
    ] {
        let curve = eval::roc(&eval::detect(&synth.scene, &det)?, &synth.mask)?;
        let tpr_at = |fpr: f64| {
            curve
                .fpr
                .iter()
                .zip(&curve.tpr)
                .filter(|(f, _)| **f <= fpr)
                .map(|(_, t)| *t)
                .fold(0.0, f64::max)
        };
        let label = det.method().label();
        let path = out_dir.join(format!("roc_{label}.csv"));
        io::write_roc(&curve, &path)?;
        println!(
            "{label:<4} auc {:.4}  tpr@fpr=0.01 {:.2}  tpr@fpr=0.05 {:.2}  -> {}",
            curve.auc,
            tpr_at(0.01),
            tpr_at(0.05),
            path.display()
        );
    }
    Ok(())
}
