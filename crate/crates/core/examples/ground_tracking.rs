//! Follow the Floquet ground state while the drive ramps up.

use kpo::floquet::{control_ramp, track_ground_branch, TrackingSettings};
use kpo::model::ModelParams;

fn main() -> kpo::Result<()> {
    let base = ModelParams::new(7.5e-4, 1.27e-7, 60);
    let branch = track_ground_branch(&base, &control_ramp(6.0, 0.5), &TrackingSettings::default())?;
    for p in &branch.points {
        println!("eps2/K {:4.1}  eps0 {:.9}  overlap {:.4}", p.control, p.eps0, p.overlap);
    }
    Ok(())
}
