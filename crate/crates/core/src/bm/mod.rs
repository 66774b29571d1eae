//! Brownian motion relative to a sphere: exact hitting samplers,
//! walk-on-spheres in the exterior, escape probabilities, and an ε-shell
//! estimator of the Feller kernel.

mod hitlaw;
mod shell;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::mc::{EstimatorReport, RngStream};
use crate::sphere::{annulus_hit_probability, frame, SphereError, SphereSpec};

pub use hitlaw::{exterior_bin_masses, exterior_hit_law, HitLawTest};
pub use shell::{
    estimate_feller_sphere_mc, AngularBins, BinEstimate, EpsRow, SphereFellerReport, SupplementaryRow,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BmError {
    #[error("walk exceeded {steps} steps")]
    MaxStepsExceeded { steps: u64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Sphere(#[from] SphereError),
}

/// What a walk does on reaching the outer radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FarField {
    /// Stop and report an escape; hit statistics are those of the annulus.
    Absorb,
    /// Escape for good with probability `1 - (r/R)^{n-2}`, otherwise draw
    /// the hit point from the exterior hitting law at the outer point. The
    /// result is exact for the whole exterior.
    Restart,
}

/// Walk parameters for exterior and ε-shell launches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShellConfig {
    pub eps: f64,
    pub kill_radius: f64,
    pub max_steps: u64,
    /// Distance at which a walk is snapped to a boundary.
    pub tol: f64,
    pub far_field: FarField,
}

impl ShellConfig {
    /// `R = 100 r`, `tol = 1e-8 r`, absorbing far field.
    pub fn new(sphere: &SphereSpec, eps: f64) -> Self {
        let r = sphere.radius();
        Self {
            eps,
            kill_radius: 100.0 * r,
            max_steps: 100_000,
            tol: 1e-8 * r,
            far_field: FarField::Absorb,
        }
    }

    pub fn with_far_field(mut self, far_field: FarField) -> Self {
        self.far_field = far_field;
        self
    }

    pub fn validate(&self, sphere: &SphereSpec) -> Result<(), BmError> {
        let r = sphere.radius();
        if !(self.eps > 0.0 && self.eps < r) {
            return Err(BmError::InvalidConfig(format!("eps {} must lie in (0, r = {r})", self.eps)));
        }
        if !(self.kill_radius > 2.0 * r) || !self.kill_radius.is_finite() {
            return Err(BmError::InvalidConfig(format!(
                "kill radius {} must exceed 2r = {}",
                self.kill_radius,
                2.0 * r
            )));
        }
        if !(self.tol > 0.0 && self.tol < self.eps) {
            return Err(BmError::InvalidConfig(format!("tolerance {} must lie in (0, eps)", self.tol)));
        }
        if self.max_steps == 0 {
            return Err(BmError::InvalidConfig("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Where a walk ended.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HitSample {
    /// Hit point on the sphere; the last position when escaped.
    pub point: Vec<f64>,
    pub escaped: bool,
    pub steps: u64,
}

fn uniform_direction<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-300 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn check_dim(sphere: &SphereSpec, x: &[f64]) -> Result<(), BmError> {
    if x.len() != sphere.dim() {
        return Err(SphereError::Dimension {
            expected: sphere.dim(),
            found: x.len(),
        }
        .into());
    }
    Ok(())
}

/// Point at polar cosine `u` about `axis`, with uniform azimuth.
fn around_axis<R: Rng + ?Sized>(sphere: &SphereSpec, axis: &[f64], u: f64, rng: &mut R) -> Vec<f64> {
    let n = sphere.dim();
    let f = frame(axis);
    let e = uniform_direction(n - 1, rng);
    let s = (1.0 - u * u).max(0.0).sqrt();
    let unit: Vec<f64> = (0..n)
        .map(|k| u * f[0][k] + s * e.iter().enumerate().map(|(m, em)| em * f[m + 1][k]).sum::<f64>())
        .collect();
    sphere.point(&unit)
}

/// Polar cosine from the interior Poisson law in ℝ³ at relative radius
/// `rho = |x|/r`: inverse of
/// `P(U ≤ u) = (1-ρ²)/(2ρ) [(1+ρ²-2ρu)^{-1/2} - 1/(1+ρ)]`.
fn interior_polar_cosine_3d(rho: f64, p: f64) -> f64 {
    if rho < 1e-8 {
        return 2.0 * p - 1.0;
    }
    let s = 2.0 * rho * p / (1.0 - rho * rho) + 1.0 / (1.0 + rho);
    ((1.0 + rho * rho - 1.0 / (s * s)) / (2.0 * rho)).clamp(-1.0, 1.0)
}

/// Draw from the harmonic measure of the sphere seen from an interior
/// point. Exact inverse transform in ℝ³; walk-on-spheres otherwise.
pub fn sample_hit_from_inside<R: Rng + ?Sized>(
    sphere: &SphereSpec,
    x: &[f64],
    rng: &mut R,
) -> Result<HitSample, BmError> {
    check_dim(sphere, x)?;
    let r = sphere.radius();
    let d = sphere.distance(x);
    if d >= r {
        return Err(SphereError::Unsupported("point is not inside the sphere".into()).into());
    }
    if sphere.dim() == 3 {
        let axis = if d > 0.0 { sphere.direction(x) } else { vec![1.0, 0.0, 0.0] };
        let u = interior_polar_cosine_3d(d / r, rng.random());
        return Ok(HitSample {
            point: around_axis(sphere, &axis, u, rng),
            escaped: false,
            steps: 0,
        });
    }
    let tol = 1e-8 * r;
    let mut y = x.to_vec();
    let mut steps = 0;
    loop {
        let gap = r - sphere.distance(&y);
        if gap < tol {
            return Ok(HitSample {
                point: sphere.point(&sphere.direction(&y)),
                escaped: false,
                steps,
            });
        }
        let e = uniform_direction(sphere.dim(), rng);
        for (yk, ek) in y.iter_mut().zip(&e) {
            *yk += gap * ek;
        }
        steps += 1;
    }
}

/// Walk-on-spheres in the annulus `r < |y - c| < R`. Each step jumps to a
/// uniform point on the largest sphere about the current point that fits
/// in the annulus; the walk stops within `tol` of either boundary.
pub fn sample_hit_from_outside<R: Rng + ?Sized>(
    sphere: &SphereSpec,
    x: &[f64],
    cfg: &ShellConfig,
    rng: &mut R,
) -> Result<HitSample, BmError> {
    check_dim(sphere, x)?;
    let r = sphere.radius();
    let big_r = cfg.kill_radius;
    let n = sphere.dim();
    let d0 = sphere.distance(x);
    if d0 <= r {
        return Err(SphereError::PointInsideOrOn.into());
    }
    if d0 >= big_r {
        return Err(BmError::InvalidConfig(format!(
            "start distance {d0} is beyond the kill radius {big_r}"
        )));
    }
    let mut y = x.to_vec();
    let mut steps = 0;
    loop {
        let d = sphere.distance(&y);
        let inner = d - r;
        let outer = big_r - d;
        if inner < cfg.tol {
            return Ok(HitSample {
                point: sphere.point(&sphere.direction(&y)),
                escaped: false,
                steps,
            });
        }
        if outer < cfg.tol {
            return match cfg.far_field {
                FarField::Absorb => Ok(HitSample {
                    point: y,
                    escaped: true,
                    steps,
                }),
                FarField::Restart => {
                    let back = (r / d).powi(n as i32 - 2);
                    if rng.random::<f64>() >= back {
                        return Ok(HitSample {
                            point: y,
                            escaped: true,
                            steps,
                        });
                    }
                    // the normalised exterior law at y is the interior law at
                    // its Kelvin image r² y/|y|²
                    let c = sphere.center();
                    let image: Vec<f64> = y
                        .iter()
                        .zip(c)
                        .map(|(yk, ck)| ck + (yk - ck) * r * r / (d * d))
                        .collect();
                    let mut hit = sample_hit_from_inside(sphere, &image, rng)?;
                    hit.steps += steps;
                    Ok(hit)
                }
            };
        }
        steps += 1;
        if steps > cfg.max_steps {
            return Err(BmError::MaxStepsExceeded { steps: cfg.max_steps });
        }
        let radius = inner.min(outer);
        let e = uniform_direction(n, rng);
        for (yk, ek) in y.iter_mut().zip(&e) {
            *yk += radius * ek;
        }
    }
}

/// Escape fraction from `x` with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EscapeEstimate {
    /// Fraction of walks that escaped; reference per the far-field mode:
    /// `1 - annulus hit probability` when absorbing, `q(x)` on restart.
    pub escape: EstimatorReport,
    /// `1 - escape`, with the matching hit-probability reference.
    pub hit: EstimatorReport,
    /// Escape probability to infinity recovered from an absorbing run:
    /// `escape · (1 - (r/R)^{n-2})`.
    pub corrected_escape: f64,
    /// `q(x) = 1 - (r/|x|)^{n-2}`.
    pub q_exact: f64,
    pub max_steps_exceeded: u64,
}

/// Escape probability to infinity, from the escape probability through an
/// absorbing sphere of radius `big_r`.
pub fn far_field_escape(sphere: &SphereSpec, escape_at_r: f64, big_r: f64) -> f64 {
    escape_at_r * (1.0 - (sphere.radius() / big_r).powi(sphere.dim() as i32 - 2))
}

pub fn escape_probability_mc(
    sphere: &SphereSpec,
    x: &[f64],
    cfg: &ShellConfig,
    n_walks: u64,
    stream: RngStream,
) -> Result<EscapeEstimate, BmError> {
    check_dim(sphere, x)?;
    if n_walks < 2 {
        return Err(BmError::InvalidConfig("need at least two walks".into()));
    }
    let d = sphere.distance(x);
    let q_exact = crate::sphere::escape_probability(sphere, x)?;
    let hit_exact = match cfg.far_field {
        FarField::Absorb => annulus_hit_probability(sphere, d, cfg.kill_radius),
        FarField::Restart => 1.0 - q_exact,
    };
    let chunks = crate::mc::batch_ranges(n_walks, crate::tolerances::BATCHES);
    let parts: Vec<(u64, u64)> = chunks
        .par_iter()
        .map(|&(_, lo, hi)| {
            let (mut escaped, mut failed) = (0, 0);
            for i in lo..hi {
                let mut rng = stream.child(i).rng();
                match sample_hit_from_outside(sphere, x, cfg, &mut rng) {
                    Ok(h) if h.escaped => escaped += 1,
                    Ok(_) => {}
                    Err(_) => failed += 1,
                }
            }
            (escaped, failed)
        })
        .collect();
    let escaped: u64 = parts.iter().map(|p| p.0).sum();
    let failed: u64 = parts.iter().map(|p| p.1).sum();
    let used = n_walks - failed;
    let p = escaped as f64 / used as f64;
    let se = (p * (1.0 - p) / used as f64).sqrt();
    let escape = EstimatorReport::new(p, se, escaped).with_exact(1.0 - hit_exact);
    let hit = EstimatorReport::new(1.0 - p, se, used - escaped).with_exact(hit_exact);
    let corrected_escape = match cfg.far_field {
        FarField::Absorb => far_field_escape(sphere, p, cfg.kill_radius),
        FarField::Restart => p,
    };
    Ok(EscapeEstimate {
        escape,
        hit,
        corrected_escape,
        q_exact,
        max_steps_exceeded: failed,
    })
}

/// Side of the normal a shell launch starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Launch {
    Inward,
    Outward,
}

/// End of an ε-shell excursion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum PairEnd {
    Return(Vec<f64>),
    Escape,
}

/// Launches from `ξ ∓ eps·n(ξ)` and reports where the path next meets the
/// sphere, or that it escaped.
pub fn excursion_pair_sampler<R: Rng + ?Sized>(
    sphere: &SphereSpec,
    xi: &[f64],
    launch: Launch,
    cfg: &ShellConfig,
    rng: &mut R,
) -> Result<(PairEnd, u64), BmError> {
    check_dim(sphere, xi)?;
    cfg.validate(sphere)?;
    let r = sphere.radius();
    let dir = sphere.direction(xi);
    let rad = match launch {
        Launch::Inward => r - cfg.eps,
        Launch::Outward => r + cfg.eps,
    };
    let start: Vec<f64> = dir
        .iter()
        .zip(sphere.center())
        .map(|(u, c)| c + rad * u)
        .collect();
    let hit = match launch {
        Launch::Inward => sample_hit_from_inside(sphere, &start, rng)?,
        Launch::Outward => sample_hit_from_outside(sphere, &start, cfg, rng)?,
    };
    let end = if hit.escaped {
        PairEnd::Escape
    } else {
        PairEnd::Return(hit.point)
    };
    Ok((end, hit.steps))
}
