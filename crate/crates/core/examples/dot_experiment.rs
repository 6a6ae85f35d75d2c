//! Kinking: transport a red dot across a 512 px strip and compare its
//! measured orientation with the limiting direction.
//!
//! `cargo run --example dot_experiment -- [method] [r] [step_deg]`

use shellfill::experiments::{dot_checks, dot_csv, exp_dot, verdict_text, DotConfig};
use shellfill::stencil::MethodTag;

fn main() -> shellfill::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let method = args.first().and_then(|m| MethodTag::from_name(m)).unwrap_or(MethodTag::CoherenceTransport);
    let r: i64 = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(3);
    let step: f64 = args.get(2).and_then(|a| a.parse().ok()).unwrap_or(15.0);
    let thetas: Vec<f64> = (1..).map(|k| k as f64 * step).take_while(|t| *t < 180.0).collect();
    let rows = exp_dot(method, r, 40.0, &thetas, &DotConfig::default())?;
    print!("{}", dot_csv(&rows));
    eprint!("{}", verdict_text(&[dot_checks(method, r, &rows)?]));
    Ok(())
}
