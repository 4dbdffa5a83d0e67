#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use flqr::funcdata::{FunctionalSample, Grid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` curves on a uniform `p`-point grid, each a cosine series with
/// coefficient scale `k^-decay`, plus responses from `β(t) = sin(2πt)` and noise.
pub fn cosine_sample(n: usize, p: usize, terms: usize, decay: f64, seed: u64) -> FunctionalSample {
    let grid = Arc::new(Grid::uniform(p).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let coef: Vec<f64> = (0..terms)
            .map(|k| rng.random_range(-1.0..1.0) * ((k + 1) as f64).powf(-decay))
            .collect();
        let row: Vec<f64> = grid
            .points()
            .iter()
            .map(|&t| {
                coef.iter()
                    .enumerate()
                    .map(|(k, a)| if k == 0 { *a } else { a * 2f64.sqrt() * (k as f64 * PI * t).cos() })
                    .sum()
            })
            .collect();
        let signal: f64 = grid.integrate_values(
            &row.iter()
                .zip(grid.points())
                .map(|(x, t)| x * (2.0 * PI * t).sin())
                .collect::<Vec<_>>(),
        );
        ys.push(0.3 + signal + 0.1 * rng.random_range(-1.0..1.0));
        rows.push(row);
    }
    FunctionalSample::from_rows(grid, &rows, ys).unwrap()
}
