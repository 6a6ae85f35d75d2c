//! Empirical convergence rates of the fill towards the transport limit on
//! boundary data of prescribed Sobolev regularity.
//!
//! `cargo run --example convergence_rates -- [finest_power]`

use shellfill::experiments::{exp_rates, rate_check, reference_configs, verdict_text};

fn main() -> shellfill::Result<()> {
    let finest: i32 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10);
    let h_list: Vec<f64> = (7..=finest).map(|k| 2f64.powi(-k)).collect();
    for (family, s, sp, ps) in reference_configs(true) {
        for rep in exp_rates(family, s, sp, &ps, &h_list)? {
            println!("{} s={s} s'={sp} p={}", rep.label, rep.norm_p);
            print!("{}", rep.to_csv());
            if finest >= 11 {
                print!("{}", verdict_text(&[rate_check(&rep)]));
            }
            println!();
        }
    }
    Ok(())
}
