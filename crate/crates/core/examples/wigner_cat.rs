//! Wigner function of a Kerr-cat ground state, drawn in ASCII.

use kpo::analysis::{self, GridSpec};
use kpo::effective::{excitation_spectrum, kerr_cat_model};
use num_complex::Complex64;

fn main() -> kpo::Result<()> {
    let spec = excitation_spectrum(&kerr_cat_model(4.0, 1.0, 40)?, 1.0)?;
    let psi = spec.vector(1);
    let g = analysis::wigner(&psi, &GridSpec::square(4.0, 41))?;
    println!("normalization {:.4}, max |W| {:.3}", g.normalization(), g.max_abs());
    println!(
        "W(0,0) {:.4} vs displaced parity {:.4}",
        g.value_at(0.0, 0.0).unwrap_or(f64::NAN),
        analysis::wigner_displaced_parity(&psi, Complex64::new(0.0, 0.0), 20)?
    );
    let shades = [' ', '.', ':', '+', '#'];
    for ip in (0..41).rev().step_by(2) {
        let line: String = (0..41)
            .map(|ix| {
                let w = g.values[(ix, ip)] / g.max_abs();
                if w < -0.1 {
                    '-'
                } else {
                    shades[((w.max(0.0) * 4.0).round() as usize).min(4)]
                }
            })
            .collect();
        println!("{line}");
    }
    Ok(())
}
