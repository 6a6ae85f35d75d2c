//! A line at 2 degrees: semi-implicit Guidefill connects it, direct
//! Guidefill kinks it.

use shellfill::experiments::exp_shallow;

fn main() -> shellfill::Result<()> {
    let (sig, gf) = exp_shallow(5)?;
    let fmt = |o: Option<f64>| o.map_or("n/a".to_string(), |v| format!("{v:.2} deg"));
    println!("semi-implicit (SOR, 5 sweeps): amplitude {:.3}, orientation {}", sig.terminal_amplitude, fmt(sig.orientation_deg));
    println!("guidefill:                     amplitude {:.3}, orientation {}", gf.terminal_amplitude, fmt(gf.orientation_deg));
    Ok(())
}
