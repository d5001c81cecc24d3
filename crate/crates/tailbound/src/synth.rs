//! Synthetic data generation for experiments and tests.

use rand::Rng;

use crate::substream;

/// `n` i.i.d. draws from a centered bivariate normal with independent
/// coordinates of standard deviation `sigma`, via the Box-Muller
/// transform. Deterministic for a given seed.
pub fn sample_bivariate_normal(n: usize, sigma: f64, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = substream(seed, &[0x6e_6f_72_6d]);
    (0..n)
        .map(|_| {
            let u1: f64 = loop {
                let u = rng.gen::<f64>();
                if u > 0.0 {
                    break u;
                }
            };
            let u2: f64 = rng.gen();
            let r = (-2.0 * u1.ln()).sqrt();
            let theta = 2.0 * std::f64::consts::PI * u2;
            (sigma * r * theta.cos(), sigma * r * theta.sin())
        })
        .collect()
}
