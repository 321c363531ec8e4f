//! Closed-form solutions of (d-m)'K^-1(m-mu) = 1 and the plateau value of g
//! on them.
//!
//! cargo run --example basic_equation

use tdrs::detectors;
use tdrs::solver::{self, SolutionKind};
use tdrs::synth::{self, SynthConfig};
use tdrs::{OriginShift, Result, SceneStats};

fn main() -> Result<()> {
    let synth = synth::generate(&SynthConfig::default())?;
    let stats = SceneStats::compute(&synth.scene, 0.0)?;
    let d = &synth.target;
    let plateau = detectors::plateau_value(&stats, d)?;
    println!("plateau (d-m)'K^-1(d-m)+1 = {plateau:.12}");

    let kinds = [
        (SolutionKind::MinimalShift, None),
        (SolutionKind::AlongTargetLine, None),
        (SolutionKind::Sampled, Some([1.0, -2.0].as_slice())),
    ];
    for (kind, tangent) in kinds {
        let sol = solver::solve_basic_equation(&stats, d, kind, tangent)?;
        let g = detectors::g_value(&stats, d, &sol.mu_star)?;
        println!(
            "{:<18} mu* = {:?}\n{:<18} residual {:.1e}, g(mu*) - plateau {:.1e}",
            kind.label(),
            sol.mu_star.as_vector().as_slice(),
            "",
            sol.residual,
            g - plateau
        );
    }

    // The classical origins are feasible but not optimal.
    for (name, mu) in [
        ("origin 0 (CEM)", OriginShift::zeros(stats.bands())),
        (
            "mean m (MF)",
            OriginShift::from_vector(stats.mean().clone())?,
        ),
    ] {
        println!(
            "{name:<18} residual {:+.3e}, g = {:.12}",
            solver::basic_equation_residual(&stats, d, &mu)?,
            detectors::g_value(&stats, d, &mu)?
        );
    }
    Ok(())
}
