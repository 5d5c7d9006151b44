//! How far the frame transformation is from the identity.

use kpo::config::logspace;
use kpo::model::ModelParams;
use kpo::sweep::usdist_point;

fn main() -> kpo::Result<()> {
    for g3 in logspace(1e-5, 2e-2, 7) {
        let d2 = usdist_point(&ModelParams::new(g3, 1e-7, 80), 10.0, 2)?;
        let d4 = usdist_point(&ModelParams::new(g3, 1e-7, 80), 10.0, 4)?;
        println!("g3 {g3:.2e}: order 2 {d2:.3e}, order 4 {d4:.3e}");
    }
    Ok(())
}
