//! Minimal contamination experiment: robust and classical lasso fits on the
//! leverage-point design, report printed as CSV.
//!
//! Run with `cargo run --release --example contamination_study`.

use mtglm::selection::RicFlavor;
use mtglm::simulation::{run_monte_carlo, Design, HarnessConfig, Method, ScenarioConfig};

fn main() -> Result<(), mtglm::MtError> {
    let cfg = ScenarioConfig::new(Design::Avy, 100, 10, 0.1, 400, 25, 42)?;
    let report = run_monte_carlo(
        &cfg,
        &[Method::MtLasso, Method::MlLasso],
        RicFlavor::Bic,
        &HarnessConfig::default(),
    )?;
    print!("{}", report.to_csv());
    Ok(())
}
