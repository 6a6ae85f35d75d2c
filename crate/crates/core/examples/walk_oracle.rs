//! Stopped random walk: exact density, Monte Carlo check, and agreement
//! with an actual fill.
//!
//! `cargo run --example walk_oracle -- [theta_deg]`

use shellfill::experiments::exp_oracle;
use shellfill::stencil::{MethodTag, Stencil};
use shellfill::walk_oracle::{monte_carlo, stopped_density, WalkMode, DEFAULT_TOL};

fn main() -> shellfill::Result<()> {
    let t: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(30.0);
    let theta = t.to_radians();
    let eq = Stencil::symmetric(MethodTag::Guidefill, 3, [theta.cos(), theta.sin()], 100.0)?.equivalent();
    let exact = stopped_density([0, 12], &eq, WalkMode::Direct, DEFAULT_TOL)?;
    let mc = monte_carlo([0, 12], &eq, 200_000, 7)?;
    let m = exact.mean();
    println!("walk from y = 12: {} exit sites, mean ({:.3}, {:.3}), spread {:.3}", exact.as_map().len(), m[0], m[1], exact.std_x());
    println!("Monte Carlo total variation distance: {:.4}", exact.tv_distance(&mc));
    for method in [MethodTag::Guidefill, MethodTag::GuidefillSemiImplicit] {
        let d = exp_oracle(method, 3, 100.0, t, 48, 1)?;
        println!("{}: fill vs oracle max |diff| = {d:.2e}", method.name());
    }
    Ok(())
}
