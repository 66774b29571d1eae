use rayon::prelude::*;
use serde::Serialize;

use super::harmonics::BoundaryFunction;
use super::quadrature::{frame, gauss_legendre, SphereRule};
use super::{
    dist, feller_density_at_chord, supplementary_density, unit_sphere_area, SphereError,
    SphereSpec,
};
use crate::tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DouglasValue {
    /// `½∬(φ(ξ)-φ(η))² U(ξ,η) dσ dσ`.
    pub jump: f64,
    /// `∫ φ² v dσ`.
    pub kill: f64,
    pub total: f64,
    pub order: usize,
}

/// Inner integral `∫ ½(φ(ξ)-φ(η))² U(ξ,η) dσ(η)` in polar coordinates
/// about `ξ`. With `θ = 2β` the kernel times the area element becomes
/// `cos^{n-2}β / (2Ωₙ r sin²β)`, and the squared difference cancels the
/// `sin²β`, so Gauss-Legendre in `β ∈ [0, π/2]` converges spectrally.
fn inner(
    sphere: &SphereSpec,
    phi: &BoundaryFunction,
    dir: &[f64],
    beta: &[(f64, f64)],
    ring: &SphereRule,
) -> f64 {
    let n = sphere.dim();
    let f = frame(dir);
    let fx = phi.value(dir);
    let mut acc = 0.0;
    let mut eta = vec![0.0; n];
    for &(b, wb) in beta {
        let (c2, s2) = ((2.0 * b).cos(), (2.0 * b).sin());
        let jac = b.cos().powi(n as i32 - 2) / b.sin().powi(2);
        let mut ring_sum = 0.0;
        for (e, we) in ring.directions.iter().zip(&ring.weights) {
            for (k, v) in eta.iter_mut().enumerate() {
                *v = c2 * f[0][k];
                for (m, em) in e.iter().enumerate() {
                    *v += s2 * em * f[m + 1][k];
                }
            }
            let d = fx - phi.value(&eta);
            ring_sum += we * d * d;
        }
        acc += wb * jac * ring_sum;
    }
    acc / (2.0 * unit_sphere_area(n) * sphere.radius())
}

fn douglas_with(
    sphere: &SphereSpec,
    phi: &BoundaryFunction,
    rule: &SphereRule,
    beta_nodes: usize,
) -> DouglasValue {
    let n = sphere.dim();
    let (t, w) = gauss_legendre(beta_nodes);
    let quarter = std::f64::consts::FRAC_PI_4;
    let beta: Vec<(f64, f64)> = t
        .iter()
        .zip(&w)
        .map(|(&ti, &wi)| (quarter * (ti + 1.0), quarter * wi))
        .collect();
    let ring = SphereRule::unit(n - 1, rule.order.max(2 * phi.max_degree() + 2));
    let per_node: Vec<f64> = rule
        .directions
        .par_iter()
        .map(|d| inner(sphere, phi, d, &beta, &ring))
        .collect();
    let jump: f64 = per_node.iter().zip(&rule.weights).map(|(a, w)| a * w).sum();
    let v = supplementary_density(sphere);
    let kill: f64 = rule
        .directions
        .iter()
        .zip(&rule.weights)
        .map(|(d, w)| {
            let p = phi.value(d);
            w * p * p * v
        })
        .sum();
    DouglasValue {
        jump,
        kill,
        total: jump + kill,
        order: rule.order,
    }
}

/// `½∬(φ(ξ)-φ(η))²U + ∫φ²v` with `rule` as the outer rule and a polar
/// rule about each outer node for the inner integral. The inner rule is
/// also run at half resolution; disagreement above `1e-2` is reported as
/// [`SphereError::QuadratureTooCoarse`].
pub fn douglas_integral(
    sphere: &SphereSpec,
    phi: &BoundaryFunction,
    rule: &SphereRule,
) -> Result<DouglasValue, SphereError> {
    let fine_nodes = rule.order.max(8) + 8;
    let fine = douglas_with(sphere, phi, rule, fine_nodes);
    let coarse = douglas_with(sphere, phi, rule, fine_nodes / 2);
    let scale = fine.total.abs().max(f64::MIN_POSITIVE);
    let rel = (fine.total - coarse.total).abs() / scale;
    if rel > tolerances::QUADRATURE_AGREEMENT {
        return Err(SphereError::QuadratureTooCoarse { rel });
    }
    Ok(fine)
}

/// Plain node-pair Douglas sums on two rules, each dropping pairs closer
/// than the rule's minimal node spacing, and their first-order Richardson
/// combination in the mean node spacing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairSumValue {
    pub coarse: f64,
    pub fine: f64,
    pub extrapolated: f64,
    pub spacing_coarse: f64,
    pub spacing_fine: f64,
}

fn pair_sum(sphere: &SphereSpec, phi: &BoundaryFunction, rule: &SphereRule) -> f64 {
    let h_min = rule.min_spacing();
    let vals: Vec<f64> = rule.directions.iter().map(|d| phi.value(d)).collect();
    let rows: Vec<f64> = (0..rule.len())
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..rule.len() {
                let d = dist(&rule.nodes[i], &rule.nodes[j]);
                if j == i || d < h_min {
                    continue;
                }
                let df = vals[i] - vals[j];
                acc += rule.weights[j] * df * df * feller_density_at_chord(sphere, d);
            }
            0.5 * rule.weights[i] * acc
        })
        .collect();
    let v = supplementary_density(sphere);
    rows.iter().sum::<f64>()
        + vals
            .iter()
            .zip(&rule.weights)
            .map(|(p, w)| w * p * p * v)
            .sum::<f64>()
}

pub fn douglas_pair_sum(
    sphere: &SphereSpec,
    phi: &BoundaryFunction,
    coarse: &SphereRule,
    fine: &SphereRule,
) -> PairSumValue {
    let spacing = |r: &SphereRule| (sphere.area() / r.len() as f64).sqrt();
    let (hc, hf) = (spacing(coarse), spacing(fine));
    let c = pair_sum(sphere, phi, coarse);
    let f = pair_sum(sphere, phi, fine);
    PairSumValue {
        coarse: c,
        fine: f,
        extrapolated: (hc * f - hf * c) / (hc - hf),
        spacing_coarse: hc,
        spacing_fine: hf,
    }
}
