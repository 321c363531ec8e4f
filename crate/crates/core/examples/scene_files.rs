//! Writes a synthetic scene with its mask, target spectrum and config, then
//! reads everything back and checks it is unchanged.
//!
//! cargo run --example scene_files [out_dir]

use std::path::PathBuf;

use tdrs::io;
use tdrs::synth::{self, SynthConfig};
use tdrs::Result;

fn main() -> Result<()> {
    let out_dir = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "target/examples-out".into()),
    );
    std::fs::create_dir_all(&out_dir)?;

    let config = SynthConfig::default();
    let synth = synth::generate(&config)?;
    let (scene_path, mask_path, target_path, config_path) = (
        out_dir.join("scene.tdrs"),
        out_dir.join("mask.csv"),
        out_dir.join("d.csv"),
        out_dir.join("synth.cfg"),
    );
    io::write_scene(&synth.scene, &scene_path)?;
    io::write_mask(&synth.mask, &mask_path)?;
    io::write_spectrum(&synth.target, &target_path)?;
    let cfg: String = config
        .to_key_values()
        .into_iter()
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect();
    std::fs::write(&config_path, cfg)?;

    let bytes = std::fs::read(&scene_path)?;
    let header_end = bytes.iter().position(|&b| b == b'\n').unwrap();
    println!("header: {}", String::from_utf8_lossy(&bytes[..header_end]));
    println!("payload: {} bytes", bytes.len() - header_end - 1);

    assert_eq!(io::read_scene(&scene_path)?, synth.scene);
    assert_eq!(io::read_mask(&mask_path)?, synth.mask);
    assert_eq!(io::read_spectrum(&target_path)?, synth.target);
    let mut back = SynthConfig::default();
    for (k, v) in io::read_key_values(&config_path)? {
        back.set(&k, &v)?;
    }
    assert_eq!(back, config);
    assert_eq!(synth::generate(&back)?.scene, synth.scene);
    println!(
        "scene, mask, spectrum and config round-trip unchanged in {}",
        out_dir.display()
    );
    Ok(())
}
