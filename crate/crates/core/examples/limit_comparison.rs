//! Fixed-ratio limit against the high-resolution limit as the radius grows.
//!
//! `cargo run --example limit_comparison -- [h_power] [r_max]`

use shellfill::experiments::{exp_limits, limits_csv, LimitExample};

fn main() -> shellfill::Result<()> {
    let args: Vec<i64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let h = 2f64.powi(-(args.first().copied().unwrap_or(9) as i32));
    let r_max = args.get(1).copied().unwrap_or(8);
    let ex = LimitExample::MarzBall { mu: 10.0, theta: 20f64.to_radians() };
    let rows = exp_limits(ex, 2.0, 0.0, 1.0, h, &(3..=r_max).collect::<Vec<_>>())?;
    print!("{}", limits_csv(&rows));
    Ok(())
}
