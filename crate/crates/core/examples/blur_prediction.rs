//! Measured blur of a transported band against the Gaussian prediction.
//!
//! `cargo run --example blur_prediction -- [fig14|fig14-vertical|fig16|degenerate]`

use shellfill::experiments::{blur_check, exp_blur, verdict_text, BlurScenario};

fn main() -> shellfill::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "fig14".into());
    let sc = BlurScenario::from_name(&name).ok_or_else(|| shellfill::Error::Config(format!("unknown scenario {name}")))?;
    let slices = exp_blur(sc, &sc.default_heights())?;
    for s in &slices {
        println!("y = {:.4}: sigma = {:.5}, max deviation {:.2}/255", s.y, s.sigma, 255.0 * s.max_deviation());
    }
    print!("{}", verdict_text(&[blur_check(sc, &slices)]));
    Ok(())
}
