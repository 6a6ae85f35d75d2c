//! Stability: the weighted-average schemes stay inside the data range,
//! Telea's gradient extrapolation does not.

use shellfill::experiments::{stability_excess, telea_overshoot};
use shellfill::stencil::MethodTag;

fn main() -> shellfill::Result<()> {
    for m in [MethodTag::CoherenceTransport, MethodTag::Guidefill, MethodTag::GuidefillSemiImplicit] {
        let worst = (0..10).map(|s| stability_excess(m, 3, 50.0, 20.0 + 14.0 * s as f64, s)).try_fold(0.0f64, |a, e| e.map(|e| a.max(e)))?;
        println!("{:<24} worst excess over data range {worst:.1e}", m.name());
    }
    println!("{:<24} overshoot on a step edge  {:.3}", "telea (unclamped)", telea_overshoot()?);
    Ok(())
}
