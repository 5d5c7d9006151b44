//! Adaptive Dormand-Prince 5(4) propagation of the dense frame Hamiltonian.
//! Shares nothing with the library propagator beyond `frame_hamiltonian`.

use kpo::fock::CMatrix;
use kpo::model::{frame_hamiltonian, ModelParams};
use num_complex::Complex64;

fn rhs(params: &ModelParams, t: f64, u: &CMatrix) -> CMatrix {
    let h = frame_hamiltonian(params, t).unwrap();
    (h * u) * Complex64::new(0.0, -1.0)
}

/// `U(t1, t0)` with mixed absolute/relative tolerance `tol`.
pub fn oracle_propagator(params: &ModelParams, t0: f64, t1: f64, tol: f64) -> CMatrix {
    const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let n = params.dim;
    let mut u = CMatrix::identity(n, n);
    let mut t = t0;
    let mut h = (t1 - t0) / 1000.0;
    while t < t1 {
        if t + h > t1 {
            h = t1 - t;
        }
        let mut k: Vec<CMatrix> = Vec::with_capacity(7);
        for s in 0..7 {
            let mut y = u.clone();
            for (j, kj) in k.iter().enumerate() {
                if A[s][j] != 0.0 {
                    y += kj * Complex64::new(h * A[s][j], 0.0);
                }
            }
            k.push(rhs(params, t + C[s] * h, &y));
        }
        let mut y5 = u.clone();
        let mut err = CMatrix::zeros(n, n);
        for s in 0..7 {
            y5 += &k[s] * Complex64::new(h * B5[s], 0.0);
            err += &k[s] * Complex64::new(h * (B5[s] - B4[s]), 0.0);
        }
        let scale = y5.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
        let e = err.iter().map(|z| z.norm()).fold(0.0, f64::max) / (tol * scale);
        if e <= 1.0 {
            t += h;
            u = y5;
        }
        let factor = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    u
}

pub fn max_entry_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}
