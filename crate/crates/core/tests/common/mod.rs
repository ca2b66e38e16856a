//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;
use uavtrust::pd3qn::{loss_and_gradients, Dense, DuelingParams};
use uavtrust::topology::{Coordinate, DeviceGraph};

/// Minimum s-d cut by enumerating every node subset that holds s but not d.
pub fn brute_min_cut(n: usize, links: &[(usize, usize, f64)], s: usize, d: usize) -> f64 {
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << n) {
        if mask & (1 << s) == 0 || mask & (1 << d) != 0 {
            continue;
        }
        let cut: f64 = links
            .iter()
            .filter(|&&(u, v, _)| mask & (1 << u) != 0 && mask & (1 << v) == 0)
            .map(|&(_, _, c)| c)
            .sum();
        best = best.min(cut);
    }
    best
}

/// Random digraph on `n` nodes with integer capacities in `1..=max_cap`;
/// node 0 is the source and node `n - 1` the gateway.
pub fn random_digraph<R: Rng>(rng: &mut R, n: usize, density: f64, max_cap: u32) -> (DeviceGraph, Vec<(usize, usize, f64)>) {
    let mut links = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u != v && rng.random_bool(density) {
                links.push((u, v, rng.random_range(1..=max_cap) as f64));
            }
        }
    }
    let nodes = (0..n).map(|i| Coordinate::new(10.0 * i as f64, 0.0)).collect();
    let g = DeviceGraph::new(nodes, links.clone(), 0, n - 1, Coordinate::new(0.0, 0.0)).expect("valid digraph");
    (g, links)
}

/// ReLU on/off pattern of every hidden unit for every batch row, from a
/// plain-loop forward pass over the public weights.
pub fn relu_pattern(p: &DuelingParams, obs: &Array2<f64>) -> Vec<bool> {
    fn layer(x: &[f64], d: &Dense) -> Vec<f64> {
        (0..d.bias.len())
            .map(|j| d.bias[j] + x.iter().enumerate().map(|(i, v)| v * d.weight[[i, j]]).sum::<f64>())
            .collect()
    }
    let mut bits = Vec::new();
    for row in obs.rows() {
        let x = row.to_vec();
        let shared: Vec<f64> = layer(&x, &p.shared).into_iter().map(|v| v.max(0.0)).collect();
        bits.extend(layer(&x, &p.shared).iter().map(|&v| v > 0.0));
        bits.extend(layer(&shared, &p.value_hidden).iter().map(|&v| v > 0.0));
        bits.extend(layer(&shared, &p.advantage_hidden).iter().map(|&v| v > 0.0));
    }
    bits
}

pub struct GradientCheck {
    /// Largest relative gap over the compared components.
    pub worst: f64,
    pub compared: usize,
    /// Components whose probe crossed a ReLU kink, where a central
    /// difference does not estimate the derivative.
    pub skipped: usize,
}

/// Compares the analytic gradient of the weighted loss with central
/// differences of step `h`. The loss is piecewise quadratic in any single
/// parameter, so away from kinks the difference is exact up to roundoff.
/// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`; the floor keeps
/// components that vanish up to roundoff from dividing noise by noise.
pub fn gradient_check(
    params: &DuelingParams,
    obs: &Array2<f64>,
    actions: &[usize],
    targets: &[f64],
    weights: &[f64],
    h: f64,
) -> GradientCheck {
    let (_, grads, _) = loss_and_gradients(params, obs.view(), actions, targets, weights).unwrap();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
    let loss_at = |p: &DuelingParams| loss_and_gradients(p, obs.view(), actions, targets, weights).unwrap().0;
    let mut out = GradientCheck {
        worst: 0.0,
        compared: 0,
        skipped: 0,
    };
    let mut probe = params.clone();
    for (t, grad_t) in analytic.iter().enumerate() {
        for (i, &a) in grad_t.iter().enumerate() {
            let orig = probe.tensors()[t][i];
            probe.tensors_mut()[t][i] = orig + h;
            let up = loss_at(&probe);
            let pattern_up = relu_pattern(&probe, obs);
            probe.tensors_mut()[t][i] = orig - h;
            let down = loss_at(&probe);
            let pattern_down = relu_pattern(&probe, obs);
            probe.tensors_mut()[t][i] = orig;
            if pattern_up != pattern_down {
                out.skipped += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * h);
            let scale = a.abs().max(numeric.abs()).max(1e-6);
            out.worst = out.worst.max((a - numeric).abs() / scale);
            out.compared += 1;
        }
    }
    out
}
