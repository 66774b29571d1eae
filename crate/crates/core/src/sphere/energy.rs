use serde::Serialize;

use super::douglas::douglas_integral;
use super::harmonics::BoundaryFunction;
use super::quadrature::{gauss_legendre, SphereRule};
use super::{poisson_kernel, Side, SphereError, SphereSpec};

/// Value at `x` of the degree-series of `φ` continued from the given side:
/// `Σ (ρ/r)^l φ_l` inside, `Σ (r/ρ)^{l+n-2} φ_l` outside.
fn extension_branch(
    sphere: &SphereSpec,
    phi: &BoundaryFunction,
    x: &[f64],
    side: Side,
) -> Result<f64, SphereError> {
    let n = sphere.dim();
    let d = sphere.distance(x);
    let ratio = d / sphere.radius();
    let unit = if d > 0.0 {
        sphere.direction(x)
    } else {
        let mut e = vec![0.0; n];
        e[0] = 1.0;
        e
    };
    let comps = phi.degree_components(n, &unit)?;
    Ok(comps
        .iter()
        .enumerate()
        .map(|(l, c)| match side {
            Side::Interior => c * ratio.powi(l as i32),
            Side::Exterior => c * ratio.powi(-((l + n - 2) as i32)),
        })
        .sum())
}

/// `Hφ(x) = E_x[φ(X_{σ_S})]` from the degree expansion of `φ`. Outside,
/// constants decay like `(r/|x|)^{n-2}`: the escape mass is lost.
pub fn harmonic_extension(
    sphere: &SphereSpec,
    phi: &BoundaryFunction,
    x: &[f64],
) -> Result<f64, SphereError> {
    let side = sphere.side(x)?;
    extension_branch(sphere, phi, x, side)
}

/// `Hφ(x)` as the Poisson integral `∫ K(x,ξ) φ(ξ) dσ(ξ)` on a rule.
pub fn poisson_integral(
    sphere: &SphereSpec,
    phi: &BoundaryFunction,
    x: &[f64],
    rule: &SphereRule,
) -> Result<f64, SphereError> {
    let side = sphere.side(x)?;
    let mut acc = 0.0;
    for ((node, dir), w) in rule.nodes.iter().zip(&rule.directions).zip(&rule.weights) {
        acc += w * poisson_kernel(sphere, side, x, node)? * phi.value(dir);
    }
    Ok(acc)
}

/// `½∫_{ℝⁿ}|∇Hφ|²` through the Dirichlet-to-Neumann eigenvalues:
/// `½ Σ_l (l/r + (l+n-2)/r) ‖φ_l‖²`.
pub fn dirichlet_energy(sphere: &SphereSpec, phi: &BoundaryFunction) -> Result<f64, SphereError> {
    let n = sphere.dim() as f64;
    let r = sphere.radius();
    let norms = phi.degree_norms(sphere.dim(), r)?;
    Ok(0.5
        * norms
            .norms
            .iter()
            .enumerate()
            .map(|(l, v)| (2.0 * l as f64 + n - 2.0) / r * v)
            .sum::<f64>())
}

/// `½∫|∇Hφ|²` by volume quadrature: Gauss-Legendre in the radius inside,
/// in `s = r/ρ` outside, a sphere rule in angle, and central differences
/// for the gradient.
pub fn dirichlet_energy_volume(
    sphere: &SphereSpec,
    phi: &BoundaryFunction,
    radial_nodes: usize,
) -> Result<f64, SphereError> {
    let n = sphere.dim();
    let r = sphere.radius();
    let rule = SphereRule::unit(n, 2 * phi.max_degree() + 6);
    let (t, w) = gauss_legendre(radial_nodes);
    let step = 1e-4 * r;
    let grad2 = |x: &[f64], side: Side| -> Result<f64, SphereError> {
        let mut g2 = 0.0;
        for k in 0..n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += step;
            xm[k] -= step;
            let d = (extension_branch(sphere, phi, &xp, side)?
                - extension_branch(sphere, phi, &xm, side)?)
                / (2.0 * step);
            g2 += d * d;
        }
        Ok(g2)
    };
    let shell = |rho: f64, side: Side| -> Result<f64, SphereError> {
        let mut acc = 0.0;
        for (d, wd) in rule.directions.iter().zip(&rule.weights) {
            let x: Vec<f64> = d
                .iter()
                .zip(sphere.center())
                .map(|(u, c)| c + rho * u)
                .collect();
            acc += wd * grad2(&x, side)?;
        }
        Ok(acc * rho.powi(n as i32 - 1))
    };
    let mut total = 0.0;
    for (&ti, &wi) in t.iter().zip(&w) {
        let u = 0.5 * (ti + 1.0);
        // interior ρ = r u, dρ = r du
        total += 0.5 * wi * r * shell(r * u, Side::Interior)?;
        // exterior ρ = r / s, dρ = r / s² ds
        total += 0.5 * wi * r / (u * u) * shell(r / u, Side::Exterior)?;
    }
    Ok(0.5 * total)
}

/// Both sides of `½∫|∇Hφ|² = ½∬(φ(ξ)-φ(η))²U dσdσ + ∫φ²v dσ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyIdentity {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub order: usize,
    pub jump_term: f64,
    pub kill_term: f64,
}

pub fn verify_energy_identity(
    sphere: &SphereSpec,
    phi: &BoundaryFunction,
    rule: &SphereRule,
) -> Result<EnergyIdentity, SphereError> {
    let lhs = dirichlet_energy(sphere, phi)?;
    let d = douglas_integral(sphere, phi, rule)?;
    let residual = if lhs != 0.0 {
        (lhs - d.total).abs() / lhs.abs()
    } else {
        d.total.abs()
    };
    Ok(EnergyIdentity {
        lhs,
        rhs: d.total,
        residual,
        order: rule.order,
        jump_term: d.jump,
        kill_term: d.kill,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn unit3() -> SphereSpec {
        SphereSpec::new(3, 1.0).unwrap()
    }

    #[test]
    fn extension_examples() {
        let s = unit3();
        let one = BoundaryFunction::constant(1.0);
        assert_relative_eq!(harmonic_extension(&s, &one, &[0.1, 0.2, 0.3]).unwrap(), 1.0, epsilon = 1e-13);
        assert_relative_eq!(harmonic_extension(&s, &one, &[2.0, 0.0, 0.0]).unwrap(), 0.5, epsilon = 1e-13);
        let x1 = BoundaryFunction::from_fn(1, |x| x[0]);
        assert_relative_eq!(harmonic_extension(&s, &x1, &[0.3, 0.2, -0.1]).unwrap(), 0.3, epsilon = 1e-13);
        assert_relative_eq!(harmonic_extension(&s, &x1, &[2.0, 0.0, 0.0]).unwrap(), 0.25, epsilon = 1e-13);
        assert_relative_eq!(harmonic_extension(&s, &x1, &[0.0; 3]).unwrap(), 0.0, epsilon = 1e-13);
        assert_eq!(
            harmonic_extension(&s, &x1, &[1.0, 0.0, 0.0]),
            Err(SphereError::PointOnBoundary)
        );
    }

    #[test]
    fn poisson_integral_agrees_with_expansion() {
        let s = unit3();
        let rule = SphereRule::product(&s, 60);
        let f = BoundaryFunction::from_fn(2, |x| 0.5 + x[0] - 2.0 * x[1] * x[2]);
        for x in [[0.2, -0.3, 0.1], [1.8, 0.5, -0.4], [0.0, 0.0, 3.0]] {
            let a = harmonic_extension(&s, &f, &x).unwrap();
            let b = poisson_integral(&s, &f, &x, &rule).unwrap();
            assert!((a - b).abs() < 1e-8, "{x:?}: {a} vs {b}");
        }
    }

    #[test]
    fn dtn_energies() {
        let s = unit3();
        assert_relative_eq!(
            dirichlet_energy(&s, &BoundaryFunction::constant(1.0)).unwrap(),
            2.0 * PI,
            max_relative = 1e-13
        );
        assert_relative_eq!(
            dirichlet_energy(&s, &BoundaryFunction::from_fn(1, |x| x[0])).unwrap(),
            2.0 * PI,
            max_relative = 1e-13
        );
        assert_eq!(dirichlet_energy(&s, &BoundaryFunction::constant(0.0)).unwrap(), 0.0);
        // ξ₁ξ₂: ‖·‖² = 4π/15, DtN factor ½(2+3)
        assert_relative_eq!(
            dirichlet_energy(&s, &BoundaryFunction::from_fn(2, |x| x[0] * x[1])).unwrap(),
            0.5 * 5.0 * 4.0 * PI / 15.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn volume_route_matches_dtn() {
        for r in [1.0, 2.0] {
            let s = SphereSpec::new(3, r).unwrap();
            for f in [
                BoundaryFunction::constant(1.0),
                BoundaryFunction::from_fn(1, |x| x[0]),
                BoundaryFunction::Harmonics(vec![(2, 1, 1.0), (3, -2, 0.5)]),
            ] {
                let a = dirichlet_energy(&s, &f).unwrap();
                let b = dirichlet_energy_volume(&s, &f, 24).unwrap();
                assert!((a - b).abs() / a < 1e-3, "r = {r}, {f:?}: {a} vs {b}");
            }
        }
    }
}
