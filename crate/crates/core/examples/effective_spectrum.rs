//! Rescaled spectrum of the second-order effective Hamiltonian, with parity.

use kpo::analysis;
use kpo::effective::{esqpt_info, excitation_spectrum, h_eff2};
use kpo::model::{control_to_drive, derive, ModelParams};

fn main() -> kpo::Result<()> {
    let control = 13.0;
    let n = 160;
    let p = control_to_drive(control, &ModelParams::new(7.5e-4, 1.27e-7, n))?;
    let d = derive(&p)?;
    let spec = excitation_spectrum(&h_eff2(&d, n)?, d.k2)?;
    for l in spec.levels.iter().take(12) {
        println!("{:>9.3}  parity {:+}  <n> {:6.2}", l.energy, l.parity, l.photon_number);
    }
    let info = esqpt_info(control)?;
    println!(
        "{} levels below the separatrix at {} (expected about {})",
        spec.count_below(info.critical_energy),
        info.critical_energy,
        info.n_b
    );
    let gaps = analysis::kissing_gaps(&spec.energies(), &spec.parities())?;
    for (k, g) in gaps.iter().take(4) {
        println!("doublet at level {k}: splitting {g:.3e}");
    }
    Ok(())
}
