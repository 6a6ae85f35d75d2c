//! Closed-form limiting directions of the three transport schemes.
//!
//! `cargo run --example limiting_directions -- [r]`

use shellfill::stencil::MethodTag;
use shellfill::theory::{critical_angle, guidefill_jump, half_ball_spectrum, limit_for, stencil_direction};

fn main() -> shellfill::Result<()> {
    let r: i64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3);
    let spec = half_ball_spectrum(r)?;
    println!("r = {r}: critical angle {:.3} deg, Guidefill jump {:.3} deg", critical_angle(r)?.to_degrees(), guidefill_jump(r)?.to_degrees());
    let deg = |v: &[f64]| v.iter().map(|a| format!("{:.2}", a.to_degrees())).collect::<Vec<_>>().join(" ");
    println!("spectrum    {}", deg(&spec.angles));
    println!("transitions {}", deg(&spec.transitions));
    println!("\ntheta   ct      guidefill  semi-implicit  ct(mu=40 stencil)");
    for t in [5.0, 15.0, 30.0, 50.0, 60.0, 75.0, 90.0, 120.0, 170.0] {
        let th = f64::to_radians(t);
        let row: Vec<f64> = [MethodTag::CoherenceTransport, MethodTag::Guidefill, MethodTag::GuidefillSemiImplicit]
            .into_iter()
            .map(|m| limit_for(m, th, r).map(f64::to_degrees))
            .collect::<shellfill::Result<_>>()?;
        let finite = stencil_direction(MethodTag::CoherenceTransport, th, r, 40.0)?.to_degrees();
        println!("{t:5.1}  {:7.3}  {:9.3}  {:13.3}  {finite:10.3}", row[0], row[1], row[2]);
    }
    Ok(())
}
