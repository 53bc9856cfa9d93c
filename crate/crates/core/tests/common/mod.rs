//! Finite-difference oracles and fixtures shared by the integration tests.
//! Nothing here calls a derivative routine of the library.

#![allow(dead_code)]

use eqctl::strip::{Configuration, StripModel, StripParams};
use rand::Rng;

pub fn model(node_count: usize) -> StripModel {
    StripModel::new(&StripParams {
        node_count,
        ..Default::default()
    })
    .expect("valid strip parameters")
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let fp = f(&p);
            p[i] = x[i] - h;
            let fm = f(&p);
            p[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Central-difference directional derivative of a vector function.
pub fn fd_directional<F: Fn(&[f64]) -> Vec<f64>>(f: F, x: &[f64], dir: &[f64], h: f64) -> Vec<f64> {
    let p: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + h * d).collect();
    let m: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a - h * d).collect();
    f(&p).iter().zip(f(&m)).map(|(a, b)| (a - b) / (2.0 * h)).collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `‖a − b‖ / ‖b‖`.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&d) / norm(b).max(1e-300)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (norm(a) * norm(b)).max(1e-300)
}

pub fn random_vector<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Smoothly bent, slightly stretched strip with per-node noise.
pub fn random_configuration<R: Rng>(model: &StripModel, rng: &mut R) -> Configuration {
    let n = model.node_count();
    let l = model.length();
    let a = [rng.random_range(-0.15..0.15) * l, rng.random_range(-0.1..0.1) * l];
    let stretch = rng.random_range(0.97..1.03);
    let noise = 0.02 * model.rest_edge_length();
    let positions: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let s = i as f64 / (n - 1) as f64;
            let y = a[0] * (std::f64::consts::PI * s).sin() + a[1] * (2.0 * std::f64::consts::PI * s).sin();
            [stretch * s * l + noise * rng.random_range(-1.0..1.0), y + noise * rng.random_range(-1.0..1.0)]
        })
        .collect();
    Configuration::from_positions(model, &positions)
}

/// Rigid motion of every node.
pub fn rigid(positions: &[[f64; 2]], angle: f64, shift: [f64; 2]) -> Vec<[f64; 2]> {
    let (s, c) = angle.sin_cos();
    positions.iter().map(|p| [c * p[0] - s * p[1] + shift[0], s * p[0] + c * p[1] + shift[1]]).collect()
}
