//! MPJPE against Procrustes-aligned MPJPE for a prediction that is a
//! rotated, scaled and shifted copy of the ground truth.

use nalgebra::{Rotation3, Vector3};
use skiplift::data::{synth_generate, SynthConfig};
use skiplift::model::{mpjpe, p_mpjpe};

fn main() -> skiplift::Result<()> {
    let ds = synth_generate(&SynthConfig { count: 1, frames: 1, noise: 0.0, ..SynthConfig::default() })?;
    let gt = ds.sequences[0].pose3d.frame(0).to_vec();
    let rot = Rotation3::from_euler_angles(0.3, -0.5, 0.8);
    for noise in [0.0, 20.0] {
        let mut k = 0.0;
        let pred: Vec<f64> = gt
            .chunks(3)
            .flat_map(|p| {
                k += 1.0;
                let q = rot * Vector3::new(p[0], p[1], p[2]) * 1.2 + Vector3::new(40.0, -10.0, 5.0);
                [q.x + noise * (k * 1.3_f64).sin(), q.y + noise * (k * 2.1_f64).cos(), q.z]
            })
            .collect();
        let p = p_mpjpe(&pred, &gt, 17)?;
        println!("noise {noise:>4}: MPJPE {:8.2} mm  P-MPJPE {:8.4} mm", mpjpe(&pred, &gt)?, p.value);
    }
    Ok(())
}
