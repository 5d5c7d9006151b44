//! Symbolic expansion of the effective Hamiltonian to fourth order.

use kpo::expansion::{self, coefficient_rows};
use kpo::model::{control_to_drive, derive, ModelParams};

fn main() -> kpo::Result<()> {
    let p = control_to_drive(10.0, &ModelParams::new(2e-3, 1e-7, 60))?;
    let res = expansion::expand(&p, 4)?;
    let d = derive(&p)?;
    println!("closed form: K2 {:.6e}, eps2 {:.6e}", d.k2, d.eps2_2);
    for row in coefficient_rows(&res.h_eff_by_order) {
        if row.coeff_re.abs().max(row.coeff_im.abs()) > 1e-12 {
            println!(
                "order {} a'^{} a^{}: {:+.6e} {:+.6e}i",
                row.order, row.p, row.q, row.coeff_re, row.coeff_im
            );
        }
    }
    let h4 = res.h_eff_upto(4);
    println!("{} terms, hermiticity defect {:.1e}", h4.len(), h4.hermiticity_defect());
    let u_s = expansion::u_s_matrix(&res, 4, 60)?;
    println!("U_S unitarity defect {:.1e}", kpo::fock::unitarity_defect(&u_s));
    Ok(())
}
