//! Measured first-shell contraction of damped Jacobi and SOR against the
//! closed-form infinity-norm bounds.
//!
//! `cargo run --example solver_rates -- [step_deg]`

use shellfill::experiments::{exp_solver_rates, solver_rates_csv};

fn main() -> shellfill::Result<()> {
    let step: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10.0);
    let thetas: Vec<f64> = (1..).map(|k| k as f64 * step).take_while(|t| *t < 180.0).collect();
    let rows = exp_solver_rates(&thetas, 3, 1e4, 60)?;
    print!("{}", solver_rates_csv(&rows));
    let worst = rows.iter().map(|r| (r.jacobi - r.j_norm).max(r.sor - r.g_norm)).fold(f64::NEG_INFINITY, f64::max);
    eprintln!("largest excess over the bound: {worst:.2e}");
    Ok(())
}
