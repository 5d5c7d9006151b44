//! Ladder operators in a truncated Fock space.

use kpo::fock::{self, CI, C1};
use num_complex::Complex64;

fn main() -> kpo::Result<()> {
    let n = 12;
    let (a, ad) = fock::ladder_operators(n)?;
    let comm = &a * &ad - &ad * &a;
    // [a, a'] = 1 except on the last Fock state, where truncation gives 1 - n
    for k in [0, 5, n - 1] {
        println!("[a, a']_{k}{k} = {:.3}", comm[(k, k)].re);
    }

    let alpha = Complex64::new(0.8, 0.3);
    let gen = &ad * alpha - &a * alpha.conj();
    let d = fock::matrix_exponential(&gen)?;
    println!("unitarity defect of D(alpha): {:.2e}", fock::unitarity_defect(&d));

    let h = fock::number_operator(n) + (&ad * &ad + &a * &a) * Complex64::new(0.1, 0.0);
    let spec = fock::eig_hermitian(&h)?;
    println!("lowest eigenvalues: {:?}", spec.values[..4].iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>());
    let u = fock::exp_hermitian(&h, -CI * C1)?;
    println!("exp(-iH) defect {:.2e}", fock::unitarity_defect(&u));
    Ok(())
}
