use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{check_dim, sample_hit_from_outside, BmError, FarField, ShellConfig};
use crate::mc::RngStream;
use crate::sphere::{gauss_legendre, poisson_kernel, unit_sphere_area, Side, SphereSpec};

/// Polar-angle histogram of exterior hits against the normalized exterior
/// Poisson kernel, with its χ² statistic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HitLawTest {
    pub counts: Vec<u64>,
    /// Bin probabilities of the conditional hit law.
    pub expected: Vec<f64>,
    /// Unnormalized kernel mass, the hit probability `(r/|x|)^{n-2}`.
    pub kernel_mass: f64,
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
    pub hits: u64,
    pub walks: u64,
    pub max_steps_exceeded: u64,
}

/// Masses of `K_ext(x, ·)` over equal polar-angle bins about the direction
/// of `x`, by Gauss-Legendre in the angle.
pub fn exterior_bin_masses(sphere: &SphereSpec, x: &[f64], bins: usize) -> Result<Vec<f64>, BmError> {
    check_dim(sphere, x)?;
    let n = sphere.dim();
    let r = sphere.radius();
    let axis = sphere.direction(x);
    let ortho = super::frame(&axis);
    let ring = unit_sphere_area(n - 1) * r.powi(n as i32 - 1);
    let (t, w) = gauss_legendre(32);
    let width = std::f64::consts::PI / bins as f64;
    (0..bins)
        .map(|k| {
            let lo = k as f64 * width;
            let mut mass = 0.0;
            for (&ti, &wi) in t.iter().zip(&w) {
                let th = lo + 0.5 * width * (ti + 1.0);
                let unit: Vec<f64> = (0..n)
                    .map(|i| th.cos() * axis[i] + th.sin() * ortho[1][i])
                    .collect();
                let xi = sphere.point(&unit);
                let kern = poisson_kernel(sphere, Side::Exterior, x, &xi)?;
                mass += 0.5 * width * wi * ring * th.sin().powi(n as i32 - 2) * kern;
            }
            Ok(mass)
        })
        .collect()
}

/// Runs exterior walks from `x` until `n_hits` of them hit the sphere and
/// tests their polar angles against the Poisson kernel. Walk `i` uses
/// `stream.child(i)`; walks are drawn in parallel chunks and consumed in
/// index order.
pub fn exterior_hit_law(
    sphere: &SphereSpec,
    x: &[f64],
    bins: usize,
    n_hits: u64,
    cfg: &ShellConfig,
    stream: RngStream,
) -> Result<HitLawTest, BmError> {
    check_dim(sphere, x)?;
    cfg.validate(sphere)?;
    if bins < 2 || n_hits == 0 {
        return Err(BmError::InvalidConfig("need at least two bins and one hit".into()));
    }
    if cfg.far_field != FarField::Restart {
        return Err(BmError::InvalidConfig(
            "the conditional hit law needs the restart far field".into(),
        ));
    }
    let masses = exterior_bin_masses(sphere, x, bins)?;
    let kernel_mass: f64 = masses.iter().sum();
    let expected: Vec<f64> = masses.iter().map(|m| m / kernel_mass).collect();
    let axis = sphere.direction(x);
    let width = std::f64::consts::PI / bins as f64;
    let chunk = 1u64 << 14;
    let mut counts = vec![0u64; bins];
    let (mut hits, mut walks, mut failed) = (0u64, 0u64, 0u64);
    while hits < n_hits {
        let outcomes: Vec<Option<Option<usize>>> = (walks..walks + chunk)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream.child(i).rng();
                match sample_hit_from_outside(sphere, x, cfg, &mut rng) {
                    Ok(h) if h.escaped => Some(None),
                    Ok(h) => {
                        let u = sphere.direction(&h.point);
                        let c: f64 = u.iter().zip(&axis).map(|(a, b)| a * b).sum();
                        let bin = ((c.clamp(-1.0, 1.0).acos() / width) as usize).min(bins - 1);
                        Some(Some(bin))
                    }
                    Err(_) => None,
                }
            })
            .collect();
        for o in outcomes {
            if hits == n_hits {
                break;
            }
            walks += 1;
            match o {
                Some(Some(b)) => {
                    counts[b] += 1;
                    hits += 1;
                }
                Some(None) => {}
                None => failed += 1,
            }
        }
    }
    let chi2: f64 = counts
        .iter()
        .zip(&expected)
        .map(|(&c, &p)| {
            let e = p * hits as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let dof = bins - 1;
    let p_value = ChiSquared::new(dof as f64).expect("positive dof").sf(chi2);
    Ok(HitLawTest {
        counts,
        expected,
        kernel_mass,
        chi2,
        dof,
        p_value,
        hits,
        walks,
        max_steps_exceeded: failed,
    })
}
