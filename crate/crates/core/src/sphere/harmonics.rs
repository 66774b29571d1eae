use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::quadrature::SphereRule;
use super::{unit_sphere_area, SphereError};

/// Gegenbauer polynomial `C_l^λ(t)` by the three-term recurrence.
pub fn gegenbauer(l: usize, lambda: f64, t: f64) -> f64 {
    let (mut c0, mut c1) = (1.0, 2.0 * lambda * t);
    if l == 0 {
        return c0;
    }
    for k in 2..=l {
        let kf = k as f64;
        let c2 = (2.0 * t * (kf + lambda - 1.0) * c1 - (kf + 2.0 * lambda - 2.0) * c0) / kf;
        c0 = c1;
        c1 = c2;
    }
    c1
}

/// Reproducing kernel of degree-`l` harmonics on the unit sphere in ℝⁿ:
/// `Σ_m Y_lm(ξ) Y_lm(η) = ((l+λ)/λ) C_l^λ(ξ·η) / Ωₙ`, `λ = (n-2)/2`.
pub fn zonal_kernel(n: usize, l: usize, t: f64) -> f64 {
    let lambda = (n as f64 - 2.0) / 2.0;
    (l as f64 + lambda) / lambda * gegenbauer(l, lambda, t) / unit_sphere_area(n)
}

fn factorial_ratio(l: usize, m: usize) -> f64 {
    // (l-m)!/(l+m)!
    ((l - m + 1)..=(l + m)).fold(1.0, |acc, k| acc / k as f64)
}

/// Associated Legendre `P_l^m(x)`, no Condon-Shortley phase.
fn assoc_legendre(l: usize, m: usize, x: f64) -> f64 {
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut pmm = 1.0;
    for k in 1..=m {
        pmm *= (2 * k - 1) as f64 * s;
    }
    if l == m {
        return pmm;
    }
    let mut pm1 = x * (2 * m + 1) as f64 * pmm;
    if l == m + 1 {
        return pm1;
    }
    let mut pm0 = pmm;
    for k in (m + 2)..=l {
        let p = ((2 * k - 1) as f64 * x * pm1 - (k + m - 1) as f64 * pm0) / (k - m) as f64;
        pm0 = pm1;
        pm1 = p;
    }
    pm1
}

/// Real orthonormal spherical harmonic on the unit sphere in ℝ³ with
/// polar axis `z`: `m > 0` carries `√2 cos(mφ)`, `m < 0` carries
/// `√2 sin(|m|φ)`.
pub fn real_spherical_harmonic(l: usize, m: i64, unit: &[f64]) -> f64 {
    let am = m.unsigned_abs() as usize;
    assert!(am <= l, "|m| must not exceed l");
    let z = unit[2].clamp(-1.0, 1.0);
    let phi = unit[1].atan2(unit[0]);
    let norm = ((2 * l + 1) as f64 / (4.0 * std::f64::consts::PI) * factorial_ratio(l, am)).sqrt();
    let p = norm * assoc_legendre(l, am, z);
    match m.signum() {
        0 => p,
        1 => std::f64::consts::SQRT_2 * p * (am as f64 * phi).cos(),
        _ => std::f64::consts::SQRT_2 * p * (am as f64 * phi).sin(),
    }
}

/// Boundary data as a function of the unit direction from the centre.
#[derive(Clone)]
pub enum BoundaryFunction {
    /// Real spherical-harmonic coefficients `(l, m, c)`, three dimensions.
    Harmonics(Vec<(usize, i64, f64)>),
    /// Arbitrary function with a declared maximal harmonic degree.
    Function {
        f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
        degree: usize,
    },
}

impl fmt::Debug for BoundaryFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryFunction::Harmonics(c) => f.debug_tuple("Harmonics").field(c).finish(),
            BoundaryFunction::Function { degree, .. } => f
                .debug_struct("Function")
                .field("degree", degree)
                .finish_non_exhaustive(),
        }
    }
}

/// `‖φ_l‖²` in `L²(σ_r)` per degree, with the unexplained remainder.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeNorms {
    pub norms: Vec<f64>,
    /// `|‖φ‖² - Σ‖φ_l‖²| / ‖φ‖²`.
    pub residual: f64,
}

/// Residual above which a function is not considered resolved.
const RESOLUTION: f64 = 1e-10;

impl BoundaryFunction {
    pub fn from_fn(degree: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        BoundaryFunction::Function {
            f: Arc::new(f),
            degree,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::from_fn(0, move |_| c)
    }

    pub fn max_degree(&self) -> usize {
        match self {
            BoundaryFunction::Harmonics(c) => c.iter().map(|t| t.0).max().unwrap_or(0),
            BoundaryFunction::Function { degree, .. } => *degree,
        }
    }

    fn require_dim(&self, n: usize) -> Result<(), SphereError> {
        match self {
            BoundaryFunction::Harmonics(_) if n != 3 => Err(SphereError::Unsupported(
                "spherical-harmonic coefficients are three-dimensional".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn value(&self, unit: &[f64]) -> f64 {
        match self {
            BoundaryFunction::Harmonics(c) => c
                .iter()
                .map(|&(l, m, v)| v * real_spherical_harmonic(l, m, unit))
                .sum(),
            BoundaryFunction::Function { f, .. } => f(unit),
        }
    }

    /// Least-squares fit of `(theta, phi, value)` samples (polar angle from
    /// `z`, azimuth from `x`) to real harmonics of degree `<= degree`.
    pub fn fit_samples(samples: &[(f64, f64, f64)], degree: usize) -> Result<Self, SphereError> {
        let basis: Vec<(usize, i64)> = (0..=degree)
            .flat_map(|l| (-(l as i64)..=l as i64).map(move |m| (l, m)))
            .collect();
        if samples.len() < basis.len() {
            return Err(SphereError::UnresolvedExpansion {
                degree,
                residual: f64::INFINITY,
            });
        }
        let units: Vec<[f64; 3]> = samples
            .iter()
            .map(|&(t, p, _)| [t.sin() * p.cos(), t.sin() * p.sin(), t.cos()])
            .collect();
        let a = DMatrix::from_fn(samples.len(), basis.len(), |i, j| {
            real_spherical_harmonic(basis[j].0, basis[j].1, &units[i])
        });
        let b = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.2));
        let x = a
            .clone()
            .svd(true, true)
            .solve(&b, 1e-12)
            .map_err(|e| SphereError::Unsupported(e.to_string()))?;
        let res = (&a * &x - &b).norm();
        let scale = b.norm().max(f64::MIN_POSITIVE);
        if res / scale > 1e-8 {
            return Err(SphereError::UnresolvedExpansion {
                degree,
                residual: res / scale,
            });
        }
        Ok(BoundaryFunction::Harmonics(
            basis
                .into_iter()
                .zip(x.iter())
                .filter(|(_, &c)| c.abs() > 1e-14 * scale)
                .map(|((l, m), &c)| (l, m, c))
                .collect(),
        ))
    }

    fn projection_rule(&self, n: usize) -> SphereRule {
        SphereRule::unit(n, 2 * self.max_degree() + 8)
    }

    /// Degree components `φ_l(ξ)`, `l = 0..=max_degree`, at a unit direction.
    pub fn degree_components(&self, n: usize, unit: &[f64]) -> Result<Vec<f64>, SphereError> {
        self.require_dim(n)?;
        let big_l = self.max_degree();
        let mut out = vec![0.0; big_l + 1];
        match self {
            BoundaryFunction::Harmonics(c) => {
                for &(l, m, v) in c {
                    out[l] += v * real_spherical_harmonic(l, m, unit);
                }
            }
            BoundaryFunction::Function { f, .. } => {
                let rule = self.projection_rule(n);
                for (d, w) in rule.directions.iter().zip(&rule.weights) {
                    let t: f64 = d.iter().zip(unit).map(|(a, b)| a * b).sum();
                    let fv = w * f(d);
                    for (l, o) in out.iter_mut().enumerate() {
                        *o += fv * zonal_kernel(n, l, t);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Per-degree `L²(σ_r)` norms; fails if degrees beyond `max_degree`
    /// carry more than a `1e-10` share of the norm.
    pub fn degree_norms(&self, n: usize, r: f64) -> Result<DegreeNorms, SphereError> {
        self.require_dim(n)?;
        let big_l = self.max_degree();
        let scale = r.powi(n as i32 - 1);
        match self {
            BoundaryFunction::Harmonics(c) => {
                let mut norms = vec![0.0; big_l + 1];
                for &(l, _, v) in c {
                    norms[l] += v * v * scale;
                }
                Ok(DegreeNorms {
                    norms,
                    residual: 0.0,
                })
            }
            BoundaryFunction::Function { f, .. } => {
                let rule = self.projection_rule(n);
                let vals: Vec<f64> = rule.directions.iter().map(|d| f(d)).collect();
                let total: f64 = vals.iter().zip(&rule.weights).map(|(v, w)| w * v * v).sum();
                let mut norms = vec![0.0; big_l + 1];
                for i in 0..vals.len() {
                    let wi = rule.weights[i] * vals[i];
                    for j in 0..vals.len() {
                        let t: f64 = rule.directions[i]
                            .iter()
                            .zip(&rule.directions[j])
                            .map(|(a, b)| a * b)
                            .sum();
                        let wij = wi * rule.weights[j] * vals[j];
                        for (l, nl) in norms.iter_mut().enumerate() {
                            *nl += wij * zonal_kernel(n, l, t);
                        }
                    }
                }
                let explained: f64 = norms.iter().sum();
                let residual = if total > 0.0 {
                    (total - explained).abs() / total
                } else {
                    0.0
                };
                if residual > RESOLUTION {
                    return Err(SphereError::UnresolvedExpansion {
                        degree: big_l,
                        residual,
                    });
                }
                Ok(DegreeNorms {
                    norms: norms.into_iter().map(|v| v * scale).collect(),
                    residual,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn gegenbauer_matches_legendre() {
        let t: f64 = 0.3;
        assert_relative_eq!(gegenbauer(2, 0.5, t), 0.5 * (3.0 * t * t - 1.0), max_relative = 1e-15);
        assert_relative_eq!(
            gegenbauer(3, 0.5, t),
            0.5 * (5.0 * t.powi(3) - 3.0 * t),
            max_relative = 1e-14
        );
        // C_2^1 = 4t² - 1 (Chebyshev second kind)
        assert_relative_eq!(gegenbauer(2, 1.0, t), 4.0 * t * t - 1.0, max_relative = 1e-15);
    }

    #[test]
    fn real_harmonics_are_orthonormal() {
        let rule = SphereRule::unit(3, 12);
        let basis: Vec<(usize, i64)> = (0..=4)
            .flat_map(|l| (-(l as i64)..=l as i64).map(move |m| (l, m)))
            .collect();
        for &(l1, m1) in &basis {
            for &(l2, m2) in &basis {
                let g = rule.integrate(|x| {
                    real_spherical_harmonic(l1, m1, x) * real_spherical_harmonic(l2, m2, x)
                });
                let e = if (l1, m1) == (l2, m2) { 1.0 } else { 0.0 };
                assert!((g - e).abs() < 1e-13, "({l1},{m1}) vs ({l2},{m2}): {g}");
            }
        }
    }

    #[test]
    fn addition_theorem() {
        let a = [0.6, 0.0, 0.8];
        let b = [0.0, 0.6, -0.8];
        let t: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        for l in 0..5 {
            let s: f64 = (-(l as i64)..=l as i64)
                .map(|m| real_spherical_harmonic(l, m, &a) * real_spherical_harmonic(l, m, &b))
                .sum();
            assert_relative_eq!(s, zonal_kernel(3, l, t), epsilon = 1e-14);
        }
    }

    #[test]
    fn norms_of_simple_functions() {
        let one = BoundaryFunction::constant(1.0);
        let n1 = one.degree_norms(3, 1.0).unwrap();
        assert_relative_eq!(n1.norms[0], 4.0 * PI, max_relative = 1e-13);
        let x1 = BoundaryFunction::from_fn(1, |x| x[0]);
        let n = x1.degree_norms(3, 1.0).unwrap();
        assert!(n.norms[0].abs() < 1e-14);
        assert_relative_eq!(n.norms[1], 4.0 * PI / 3.0, max_relative = 1e-13);
        // radius 2: ‖ξ̂₁‖² scales by r²
        let n = x1.degree_norms(3, 2.0).unwrap();
        assert_relative_eq!(n.norms[1], 16.0 * PI / 3.0, max_relative = 1e-13);
        // n = 4 unit sphere: ∫ x₁² = Ω₄ / 4
        let n = x1.degree_norms(4, 1.0).unwrap();
        assert_relative_eq!(n.norms[1], unit_sphere_area(4) / 4.0, max_relative = 1e-12);
    }

    #[test]
    fn under_declared_degree_is_flagged() {
        let f = BoundaryFunction::from_fn(1, |x| x[0] * x[1]);
        assert!(matches!(
            f.degree_norms(3, 1.0),
            Err(SphereError::UnresolvedExpansion { degree: 1, .. })
        ));
    }

    #[test]
    fn sample_fit_recovers_coefficients() {
        let truth = BoundaryFunction::Harmonics(vec![(0, 0, 0.5), (2, -1, 1.25), (3, 2, -0.75)]);
        let mut samples = Vec::new();
        for i in 0..12 {
            for j in 0..16 {
                let th = PI * (i as f64 + 0.5) / 12.0;
                let ph = 2.0 * PI * j as f64 / 16.0;
                let u = [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()];
                samples.push((th, ph, truth.value(&u)));
            }
        }
        let fit = BoundaryFunction::fit_samples(&samples, 3).unwrap();
        let u = [0.48, 0.6, 0.64];
        assert_relative_eq!(fit.value(&u), truth.value(&u), epsilon = 1e-12);
        assert!(matches!(
            BoundaryFunction::fit_samples(&samples, 1),
            Err(SphereError::UnresolvedExpansion { .. })
        ));
    }

    #[test]
    fn components_sum_back_to_value() {
        let f = BoundaryFunction::from_fn(2, |x| 1.0 + x[0] + x[0] * x[1]);
        let u = [0.48, 0.6, 0.64];
        let c = f.degree_components(3, &u).unwrap();
        assert_relative_eq!(c.iter().sum::<f64>(), f.value(&u), epsilon = 1e-13);
        assert_relative_eq!(c[1], u[0], epsilon = 1e-13);
    }
}
