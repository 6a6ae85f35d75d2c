//! Ghost-point stencil of Guidefill and its lattice equivalent.
//!
//! `cargo run --example equivalent_weights -- [theta_deg] [r] [mu]`

use shellfill::stencil::{MethodTag, Stencil};

fn main() -> shellfill::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let theta = args.first().copied().unwrap_or(73.0).to_radians();
    let r = args.get(1).copied().unwrap_or(3.0) as i64;
    let mu = args.get(2).copied().unwrap_or(100.0);

    let s = Stencil::symmetric(MethodTag::Guidefill, r, [theta.cos(), theta.sin()], mu)?;
    let eq = s.equivalent();
    println!("ghost stencil ({} points)\n{}", s.len(), s.to_csv());
    println!("equivalent stencil ({} lattice points)\n{}", eq.offsets.len(), eq.to_csv());
    let (a, b) = (s.center_of_mass()?, eq.center_of_mass()?);
    println!("mass    {:.15} vs {:.15}", s.total_weight(), eq.total_weight());
    println!("moment  ({:.12}, {:.12}) vs ({:.12}, {:.12})", a[0], a[1], b[0], b[1]);
    Ok(())
}
