//! Floquet quasienergies against the effective spectrum.

use kpo::effective::{excitation_spectrum, h_eff2};
use kpo::floquet::{self, SolverSettings};
use kpo::model::{control_to_drive, derive, ModelParams};

fn main() -> kpo::Result<()> {
    let n = 60;
    let p = control_to_drive(5.0, &ModelParams::new(7.5e-4, 1.27e-7, n))?;
    let d = derive(&p)?;
    let sol = floquet::solve(&p, &SolverSettings::default())?;
    println!("unitarity defect of U(T): {:.1e}", kpo::fock::unitarity_defect(&sol.u_t));

    let spec = excitation_spectrum(&h_eff2(&d, n)?, d.k2)?;
    let (k, overlap) = sol.best_match(&spec.vector(0));
    let levels = floquet::rescaled_quasienergies(&sol, sol.quasienergies[k], d.k2)?;
    println!("ground mode {k}, overlap {overlap:.4}");
    for (f, e) in levels.iter().zip(&spec.levels).take(8) {
        println!("floquet {:8.3}  effective {:8.3}  <n> {:5.2}", f.value, e.energy, f.photon_number);
    }
    Ok(())
}
