//! Low-discrepancy sample points in the interior of a domain box.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::exprlang::Interval;

const PRIMES: [u32; 40] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103,
    107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173,
];

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut acc = 0.0;
    let mut scale = inv;
    while k > 0 {
        acc += (k % base) as f64 * scale;
        k /= base;
        scale *= inv;
    }
    acc
}

/// Sample points with the parameters that produced them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    pub seed: u64,
    /// Distance kept from each face of the box, per coordinate.
    pub margin: Vec<f64>,
    pub points: Vec<Vec<f64>>,
}

impl Grid {
    /// Shifted Halton points in the box shrunk by `margin_steps` finite
    /// difference steps of relative size `rel_step`.
    pub fn halton(domain: &[Interval], count: usize, seed: u64, rel_step: f64, margin_steps: f64) -> Grid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift: Vec<f64> = domain.iter().map(|_| rng.random::<f64>()).collect();
        let margin: Vec<f64> = domain
            .iter()
            .map(|iv| {
                let step = rel_step * (1.0 + iv.lo.abs().max(iv.hi.abs()));
                (margin_steps * step).min(0.25 * iv.width())
            })
            .collect();
        let points = (1..=count as u64)
            .map(|k| {
                domain
                    .iter()
                    .enumerate()
                    .map(|(d, iv)| {
                        let t = (radical_inverse(k, PRIMES[d % PRIMES.len()] as u64) + shift[d]).fract();
                        let (lo, hi) = (iv.lo + margin[d], iv.hi - margin[d]);
                        lo + t * (hi - lo)
                    })
                    .collect()
            })
            .collect();
        Grid { seed, margin, points }
    }

    /// A grid with explicitly given points.
    pub fn from_points(points: Vec<Vec<f64>>) -> Grid {
        let m = points.first().map_or(0, Vec::len);
        Grid { seed: 0, margin: vec![0.0; m], points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_are_interior_and_reproducible() {
        let dom = [Interval::new(-1.0, 1.0), Interval::new(0.5, 2.0), Interval::new(-3.0, 3.0)];
        let g = Grid::halton(&dom, 50, 7, 1e-4, 4.0);
        assert_eq!(g.len(), 50);
        for p in &g.points {
            for (x, (iv, mg)) in p.iter().zip(dom.iter().zip(&g.margin)) {
                assert!(*x >= iv.lo + mg && *x <= iv.hi - mg);
            }
        }
        assert_eq!(g, Grid::halton(&dom, 50, 7, 1e-4, 4.0));
        assert_ne!(g.points, Grid::halton(&dom, 50, 8, 1e-4, 4.0).points);
    }

    #[test]
    fn radical_inverse_base_two() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert_eq!(radical_inverse(6, 2), 0.375);
    }
}
