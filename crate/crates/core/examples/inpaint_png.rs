//! Inpaint PNG files: writes a test image and mask, fills the hole with
//! each method and writes the results next to them.
//!
//! `cargo run --example inpaint_png -- [out_dir]`

use std::path::PathBuf;

use shellfill::direct_fill::{fill, fill_telea, FillConfig, TeleaConfig};
use shellfill::implicit_fill::{fill_semi_implicit, SemiImplicitConfig, Solver};
use shellfill::lattice::{read_mask_png, write_mask_png, BoundaryMode, FillState, PixelGrid};
use shellfill::stencil::{Guide, MethodTag};

fn main() -> shellfill::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("shellfill-inpaint"));
    std::fs::create_dir_all(&dir)?;
    let n = 128;
    let mut img = PixelGrid::new(n, n, 3, 1.0 / n as f64, BoundaryMode::DirichletX)?;
    let mut mask = vec![false; n * n];
    for j in 0..n {
        for i in 0..n {
            // Diagonal stripes at 60 degrees under a square hole.
            let t = (i as f64 * 60f64.to_radians().sin() - j as f64 * 60f64.to_radians().cos()) / 12.0;
            let on = t.rem_euclid(2.0) < 1.0;
            let hole = (40..88).contains(&i) && (40..88).contains(&j);
            let c = if hole { [0.0; 3] } else if on { [0.9, 0.3, 0.1] } else { [0.1, 0.2, 0.7] };
            for (k, v) in c.into_iter().enumerate() {
                img.set(i, j, k, v);
            }
            mask[j * n + i] = hole;
        }
    }
    img.write_png(&dir.join("input.png"))?;
    write_mask_png(&dir.join("mask.png"), n, n, &mask)?;

    let (w, h, mask) = read_mask_png(&dir.join("mask.png"))?;
    let guide = Guide::from_angle(60f64.to_radians());
    for method in ["coherence_transport", "guidefill", "semi_implicit", "telea"] {
        let mut g = PixelGrid::read_png(&dir.join("input.png"), 1.0 / w.max(h) as f64, BoundaryMode::DirichletX)?;
        let mut state = FillState::from_mask(g.geometry(), &mask)?;
        let shells = match method {
            "coherence_transport" => fill(&mut g, &mut state, &FillConfig::new(MethodTag::CoherenceTransport, 4, 25.0, guide.clone()))?.shells,
            "guidefill" => fill(&mut g, &mut state, &FillConfig::new(MethodTag::Guidefill, 4, 25.0, guide.clone()))?.shells,
            "semi_implicit" => {
                let cfg = SemiImplicitConfig::new(4, 25.0, guide.clone(), Solver::Sor, 5);
                fill_semi_implicit(&mut g, &mut state, &cfg)?.fill.shells
            }
            _ => fill_telea(&mut g, &mut state, &TeleaConfig::new(4))?.shells,
        };
        let out = dir.join(format!("{method}.png"));
        g.write_png(&out)?;
        println!("{method:<20} {shells:3} shells -> {}", out.display());
    }
    Ok(())
}
