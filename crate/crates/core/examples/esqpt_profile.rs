//! Photon number along the spectrum and its dip near the separatrix.

use kpo::analysis::{find_dip, photon_number_profile};
use kpo::effective::{esqpt_info, excitation_spectrum, h_eff2};
use kpo::model::{control_to_drive, derive, ModelParams};

fn main() -> kpo::Result<()> {
    let control = 20.0;
    let n = 200;
    let p = control_to_drive(control, &ModelParams::new(7.5e-4, 1.27e-7, n))?;
    let d = derive(&p)?;
    let spec = excitation_spectrum(&h_eff2(&d, n)?, d.k2)?;
    let profile = photon_number_profile(&spec.vectors, &spec.energies())?;
    let ec = esqpt_info(control)?.critical_energy;
    for (e, nbar) in profile.iter().filter(|(e, _)| (e - ec).abs() < 80.0) {
        println!("{e:8.2}  <n> {nbar:6.2}");
    }
    match find_dip(&profile, ec, 0.1) {
        Some(dip) => println!("dip at {:.2}: ratio {:.3}", dip.energy, dip.ratio()),
        None => println!("no dip near {ec}"),
    }
    Ok(())
}
