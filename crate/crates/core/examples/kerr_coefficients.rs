//! Second-order Kerr and squeezing rates, and the drive that hits a target eps2/K.

use kpo::model::{control_to_drive, derive, kerr2, ModelParams};

fn main() -> kpo::Result<()> {
    let base = ModelParams::new(7.5e-4, 1.27e-7, 100);
    println!("K2 = {:.4e} omega_o", kerr2(base.g3, base.g4, base.omega_o));
    for control in [0.0, 5.0, 13.0, 30.0] {
        let p = control_to_drive(control, &base)?;
        let d = derive(&p)?;
        println!(
            "eps2/K = {control:>4}: drive {:.4e}, Pi {:.4}, omega_d {:.8}, delta {:.3e}, eps2 {:.3e}",
            p.drive, d.pi, p.omega_d, d.delta, d.eps2_2
        );
    }
    Ok(())
}
