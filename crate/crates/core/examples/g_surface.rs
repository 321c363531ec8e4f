//! Samples g(mu) over a grid of origins for a two-band scene and writes the
//! surface plus the line of optimal origins as CSV for plotting.
//!
//! cargo run --example g_surface [out_dir]

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use tdrs::detectors;
use tdrs::io;
use tdrs::solver::{self, GridSpec, Hyperplane};
use tdrs::synth::{self, SynthConfig};
use tdrs::{Result, SceneStats};

fn main() -> Result<()> {
    let out_dir = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "target/examples-out".into()),
    );
    std::fs::create_dir_all(&out_dir)?;

    let config = SynthConfig {
        bands: 2,
        bg_mean: DVector::from_vec(vec![0.0, 0.0]),
        bg_cov: DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]),
        tgt_mean: DVector::from_vec(vec![2.0, 1.0]),
        tgt_cov: DMatrix::identity(2, 2) * 0.01,
        ..SynthConfig::default()
    };
    let synth = synth::generate(&config)?;
    let stats = SceneStats::compute(&synth.scene, 0.0)?;
    let d = &synth.target;

    let grid = solver::g_surface_grid(
        &stats,
        d,
        &GridSpec {
            mu1: (-2.0, 4.0),
            mu2: (-2.0, 4.0),
            resolution: (121, 121),
        },
    )?;
    let plane = Hyperplane::new(&stats, d)?;
    let (min, max) = (grid.min_cell(), grid.max_cell());
    println!(
        "min g {:.3e} at ({}, {})  (target d = {:?})",
        min.g,
        min.mu1,
        min.mu2,
        d.as_vector().as_slice()
    );
    println!("max g {:.9} at ({:.3}, {:.3})", max.g, max.mu1, max.mu2);
    println!("plateau {:.9}", detectors::plateau_value(&stats, d)?);
    println!(
        "optimal origins: point ({:.4}, {:.4}), direction ({:.4}, {:.4})",
        plane.point[0], plane.point[1], plane.tangents[0][0], plane.tangents[0][1]
    );

    let surface = out_dir.join("g_surface.csv");
    io::write_table(
        &surface,
        &["mu1", "mu2", "g"],
        grid.cells
            .iter()
            .map(|c| [io::fmt_f64(c.mu1), io::fmt_f64(c.mu2), io::fmt_f64(c.g)]),
    )?;
    println!("wrote {}", surface.display());
    Ok(())
}
