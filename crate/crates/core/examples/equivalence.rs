//! CE at any optimal origin is the matched filter up to scale: the filter
//! directions agree and the maps are affinely related.
//!
//! cargo run --example equivalence

use tdrs::detectors;
use tdrs::eval;
use tdrs::solver::{self, Hyperplane, SolutionKind};
use tdrs::synth::{self, SynthConfig};
use tdrs::{Result, SceneStats};

fn main() -> Result<()> {
    let synth = synth::generate(&SynthConfig::default())?;
    let stats = SceneStats::compute(&synth.scene, 0.0)?;
    let d = &synth.target;
    let mf = detectors::mf(&stats, d)?;
    let mf_map = eval::detect(&synth.scene, &mf)?;
    let plane = Hyperplane::new(&stats, d)?;

    println!(
        "{:<20} {:>12} {:>12} {:>12} {:>14}",
        "origin", "1-cos", "|c-1|", "1-R2", "energy"
    );
    let tangents: [&[f64]; 3] = [&[0.0, 0.0], &[2.5, -1.0], &[-40.0, 15.0]];
    for (i, coeffs) in tangents.iter().enumerate() {
        let mu =
            solver::solve_basic_equation(&stats, d, SolutionKind::Sampled, Some(coeffs))?.mu_star;
        let eq = detectors::verify_equivalence(&stats, d, &mu)?;
        let ce = detectors::ce_detector(&stats, d, &mu)?;
        let r2 = eval::r_squared(&mf_map, &eval::detect(&synth.scene, &ce)?)?;
        println!(
            "{:<20} {:>12.2e} {:>12.2e} {:>12.2e} {:>14.8e}",
            format!("sample {i} {:?}", coeffs),
            (1.0 - eq.cosine).max(0.0),
            (eq.c - 1.0).abs(),
            1.0 - r2,
            ce.energy()
        );
    }
    println!(
        "{} tangent directions; MF energy {:.8e}",
        plane.tangents.len(),
        mf.energy()
    );
    Ok(())
}
