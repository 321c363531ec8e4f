//! Climbs g(mu) from several starting origins and compares the end points
//! with the basic equation.
//!
//! cargo run --example gradient_ascent

use nalgebra::DVector;
use tdrs::detectors;
use tdrs::solver;
use tdrs::synth::{self, SynthConfig};
use tdrs::{AscentConfig, Error, OriginShift, Result, SceneStats};

fn main() -> Result<()> {
    let synth = synth::generate(&SynthConfig::default())?;
    let stats = SceneStats::compute(&synth.scene, 0.0)?;
    let d = &synth.target;
    let plateau = detectors::plateau_value(&stats, d)?;
    let config = AscentConfig::default();

    let starts = [
        ("zero", OriginShift::zeros(3)),
        ("mean", OriginShift::from_vector(stats.mean().clone())?),
        (
            "offset",
            OriginShift::from_vector(stats.mean() + DVector::from_vec(vec![2.0, -1.5, 0.7]))?,
        ),
        ("target", OriginShift::from_vector(d.as_vector().clone())?),
    ];
    for (name, mu0) in &starts {
        match solver::gradient_ascent(&stats, d, mu0, &config) {
            Ok(trace) => {
                let last = trace.last();
                println!(
                    "{name:<7} {:>4} iterates, restarts {:?}: g {:.12} (plateau {:.12}), residual {:.1e}",
                    trace.iterates.len(),
                    trace.restarts,
                    last.g,
                    plateau,
                    solver::basic_equation_residual(&stats, d, &trace.final_origin())?
                );
            }
            Err(Error::MaxItersExceeded { trace }) => {
                println!(
                    "{name:<7} did not converge after {} iterates",
                    trace.iterates.len()
                );
            }
            Err(e) => return Err(e),
        }
    }

    // Starting exactly at d, g = 0 is a minimum with zero gradient; without
    // the restart the ascent cannot move.
    let stuck = AscentConfig {
        restart_from_mean: false,
        ..config
    };
    let at_d = OriginShift::from_vector(d.as_vector().clone())?;
    match solver::gradient_ascent(&stats, d, &at_d, &stuck) {
        Err(Error::MaxItersExceeded { trace }) => {
            println!("from d without restart: stalled at g = {}", trace.last().g)
        }
        other => println!("from d without restart: {other:?}"),
    }
    Ok(())
}
