//! Random inputs for probes and property tests: smooth bounded histories,
//! elements of the exponential order cone, and base points.

use std::f64::consts::TAU;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baseflow::{BasePoint, TorusBase};
use crate::error::Result;
use crate::fde::Grid;
use crate::history::{HistoryFunction, OrderParams};

/// Deterministic generator used everywhere a seed is accepted.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn base_point<R: Rng>(rng: &mut R, base: &TorusBase) -> BasePoint {
    BasePoint::new((0..base.dim()).map(|_| rng.random::<f64>()).collect()).expect("finite")
}

/// A smooth history with `‖x‖∞ ≤ amplitude`: an offset plus three sinusoids
/// of frequency at most 4 per component, so every unit window has bounded variation.
pub fn history<R: Rng>(rng: &mut R, dim: usize, grid: &Grid, amplitude: f64) -> Result<HistoryFunction> {
    let modes: Vec<[f64; 7]> = (0..dim)
        .map(|_| {
            [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.2..4.0),
                rng.random_range(0.0..TAU),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.2..4.0),
                rng.random_range(0.0..TAU),
            ]
        })
        .collect();
    let raw = grid.sample(dim, |s| {
        modes
            .iter()
            .map(|p| p[0] + p[1] * (p[2] * s + p[3]).sin() + p[4] * (p[5] * s + p[6]).cos())
            .collect::<Vec<f64>>()
    })?;
    let sup = raw.sup_norm();
    let target = amplitude * rng.random_range(0.3..1.0);
    Ok(if sup > 0.0 { raw.scale(target / sup) } else { raw })
}

fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

/// An element `d` with `0 ≤_A d` and `‖d‖∞ ≤ scale`: per component
/// `d_i(s) = e^{a_i |s|} ψ_i(s)` with `ψ_i` a nonnegative sum of smooth ramps
/// switching on inside `[−5, 0]`. One component in four is left at zero.
pub fn cone_element<R: Rng>(rng: &mut R, order: &OrderParams, grid: &Grid, scale: f64) -> Result<HistoryFunction> {
    let dim = order.dim();
    let reach = grid.depth().min(5.0);
    let ramps: Vec<Vec<[f64; 3]>> = (0..dim)
        .map(|_| {
            if dim > 1 && rng.random_range(0..4) == 0 {
                return Vec::new();
            }
            (0..3)
                .map(|_| [rng.random_range(0.0..1.0), rng.random_range(-reach..0.0), rng.random_range(0.05..1.0)])
                .collect()
        })
        .collect();
    let rates = order.rates();
    let raw = grid.sample(dim, |s| {
        ramps
            .iter()
            .zip(&rates)
            .map(|(rs, a)| {
                let psi: f64 = rs.iter().map(|r| r[0] * smoothstep((s - r[1]) / r[2])).sum();
                (-a * s).exp() * psi
            })
            .collect::<Vec<f64>>()
    })?;
    let sup = raw.sup_norm();
    let target = scale * rng.random_range(0.2..1.0);
    Ok(if sup > 0.0 { raw.scale(target / sup) } else { raw })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_respect_bounds_and_cone() {
        let grid = Grid::new(0.01, 10.0).unwrap();
        let order = OrderParams::new(vec![-1.0, -3.0]).unwrap();
        let zero = grid.constant(&[0.0, 0.0]).unwrap();
        let mut r = rng(7);
        for _ in 0..20 {
            let x = history(&mut r, 2, &grid, 0.5).unwrap();
            assert!(x.sup_norm() <= 0.5 + 1e-12);
            let d = cone_element(&mut r, &order, &grid, 2.0).unwrap();
            assert!(d.sup_norm() <= 2.0 + 1e-12);
            assert!(order.leq(&zero, &d).unwrap());
            assert!(order.leq(&x, &x.add(&d).unwrap()).unwrap());
        }
    }

    #[test]
    fn seeded_generators_are_deterministic() {
        let grid = Grid::new(0.1, 2.0).unwrap();
        let a = history(&mut rng(3), 1, &grid, 1.0).unwrap();
        let b = history(&mut rng(3), 1, &grid, 1.0).unwrap();
        assert_eq!(a, b);
    }
}
