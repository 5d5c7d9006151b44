//! Below-well IPR of Floquet modes in the effective eigenbasis.

use kpo::floquet::SolverSettings;
use kpo::model::ModelParams;
use kpo::sweep::ipr_point;

fn main() -> kpo::Result<()> {
    for (g3, g4) in [(7.5e-4, 1.27e-7), (1e-2, 1e-7)] {
        let p = ipr_point(&ModelParams::new(g3, g4, 80), 10.0, &[2, 4], &SolverSettings::default())?;
        for (order, rep) in &p.reports {
            match rep {
                Ok(r) => println!("g3 {g3:.1e} g4 {g4:.1e} order {order}: I = {:.4} over {} states", r.average, r.n_b),
                Err(e) => println!("g3 {g3:.1e} g4 {g4:.1e} order {order}: {e}"),
            }
        }
        if p.truncated {
            println!("  truncation flag set");
        }
    }
    Ok(())
}
