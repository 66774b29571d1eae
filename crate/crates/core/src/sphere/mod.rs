//! Brownian motion and a sphere in ℝⁿ: Poisson kernels, the Feller kernel
//! `(2/Ωₙ)|ξ-η|⁻ⁿ`, the supplementary density `(n-2)/(2r)`, and the two
//! sides of the energy identity `½∫|∇Hφ|² = ½∬(φ(ξ)-φ(η))²U + ∫φ²v`.

mod douglas;
mod energy;
mod harmonics;
mod prototype;
mod quadrature;

use statrs::function::gamma::gamma;
use thiserror::Error;

pub use douglas::{douglas_integral, douglas_pair_sum, DouglasValue, PairSumValue};
pub use energy::{
    dirichlet_energy, dirichlet_energy_volume, harmonic_extension, poisson_integral,
    verify_energy_identity, EnergyIdentity,
};
pub use harmonics::{
    gegenbauer, real_spherical_harmonic, zonal_kernel, BoundaryFunction, DegreeNorms,
};
pub use prototype::{prototype_trace_energy, PrototypeEnergy};
pub use quadrature::{gauss_gegenbauer, gauss_legendre, SphereRule};
pub(crate) use quadrature::frame;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SphereError {
    #[error("dimension {0} is below 3")]
    DimensionTooSmall(usize),
    #[error("radius {0} is not positive")]
    InvalidRadius(f64),
    #[error("point lies on the sphere")]
    PointOnBoundary,
    #[error("point must lie strictly outside the sphere")]
    PointInsideOrOn,
    #[error("Feller kernel is singular at coincident points")]
    CoincidentPoints,
    #[error("alpha {0} outside (0, 2)")]
    AlphaOutOfRange(f64),
    #[error("boundary function not resolved to degree {degree}: relative residual {residual:e}")]
    UnresolvedExpansion { degree: usize, residual: f64 },
    #[error("quadrature too coarse: successive resolutions differ by {rel:e}")]
    QuadratureTooCoarse { rel: f64 },
    #[error("missing Feller data: {0}")]
    MissingFellerData(String),
    #[error("point has {found} coordinates, sphere lives in dimension {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("{0}")]
    Unsupported(String),
}

/// Area `Ωₙ = 2π^{n/2}/Γ(n/2)` of the unit sphere in ℝⁿ.
pub fn unit_sphere_area(n: usize) -> f64 {
    use std::f64::consts::PI;
    assert!(n >= 1, "unit sphere area needs n >= 1");
    // Ω₁ = 2, Ω₂ = 2π, Ω_{n+2} = 2π Ωₙ / n
    let (mut k, mut area) = if n % 2 == 1 { (1, 2.0) } else { (2, 2.0 * PI) };
    while k < n {
        area *= 2.0 * PI / k as f64;
        k += 2;
    }
    area
}

/// `A(n,-α) = α 2^{α-1} Γ((α+n)/2) / (π^{n/2} Γ(1-α/2))`.
pub fn stable_constant(n: usize, alpha: f64) -> Result<f64, SphereError> {
    use std::f64::consts::PI;
    if !(alpha > 0.0 && alpha < 2.0) || n == 0 {
        return Err(SphereError::AlphaOutOfRange(alpha));
    }
    let n = n as f64;
    Ok(alpha * 2f64.powf(alpha - 1.0) * gamma((alpha + n) / 2.0)
        / (PI.powf(n / 2.0) * gamma(1.0 - alpha / 2.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Interior,
    Exterior,
}

/// Sphere of radius `r` about `center` in ℝⁿ, `n >= 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereSpec {
    n: usize,
    r: f64,
    center: Vec<f64>,
}

impl SphereSpec {
    pub fn new(n: usize, r: f64) -> Result<Self, SphereError> {
        Self::with_center(r, vec![0.0; n])
    }

    pub fn with_center(r: f64, center: Vec<f64>) -> Result<Self, SphereError> {
        let n = center.len();
        if n < 3 {
            return Err(SphereError::DimensionTooSmall(n));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(SphereError::InvalidRadius(r));
        }
        Ok(Self { n, r, center })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn radius(&self) -> f64 {
        self.r
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    /// `Ωₙ rⁿ⁻¹`.
    pub fn area(&self) -> f64 {
        unit_sphere_area(self.n) * self.r.powi(self.n as i32 - 1)
    }

    fn check(&self, x: &[f64]) -> Result<(), SphereError> {
        if x.len() != self.n {
            return Err(SphereError::Dimension {
                expected: self.n,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `|x - center|`.
    pub fn distance(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Unit direction of `x` seen from the centre.
    pub fn direction(&self, x: &[f64]) -> Vec<f64> {
        let d = self.distance(x);
        x.iter().zip(&self.center).map(|(a, b)| (a - b) / d).collect()
    }

    /// Point on the sphere in direction `unit`.
    pub fn point(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .zip(&self.center)
            .map(|(u, c)| c + self.r * u)
            .collect()
    }

    fn side(&self, x: &[f64]) -> Result<Side, SphereError> {
        let d = self.distance(x);
        if (d - self.r).abs() <= 1e-14 * self.r {
            return Err(SphereError::PointOnBoundary);
        }
        Ok(if d < self.r {
            Side::Interior
        } else {
            Side::Exterior
        })
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Poisson kernel density with respect to surface measure:
/// `|r² - |x|²| / (Ωₙ r |x-ξ|ⁿ)`.
pub fn poisson_kernel(
    sphere: &SphereSpec,
    side: Side,
    x: &[f64],
    xi: &[f64],
) -> Result<f64, SphereError> {
    sphere.check(x)?;
    sphere.check(xi)?;
    if sphere.side(x)? != side {
        return Err(match side {
            Side::Interior => SphereError::Unsupported("point is not inside the sphere".into()),
            Side::Exterior => SphereError::PointInsideOrOn,
        });
    }
    let n = sphere.n;
    let d = sphere.distance(x);
    let num = (sphere.r * sphere.r - d * d).abs();
    Ok(num / (unit_sphere_area(n) * sphere.r * dist(x, xi).powi(n as i32)))
}

/// `U(ξ,η) = (2/Ωₙ)|ξ-η|⁻ⁿ`.
pub fn feller_density(sphere: &SphereSpec, xi: &[f64], eta: &[f64]) -> Result<f64, SphereError> {
    sphere.check(xi)?;
    sphere.check(eta)?;
    let d = dist(xi, eta);
    if d <= 1e-14 * sphere.r {
        return Err(SphereError::CoincidentPoints);
    }
    Ok(2.0 / unit_sphere_area(sphere.n) * d.powi(-(sphere.n as i32)))
}

/// Feller kernel as a function of the chord length `|ξ-η|`.
pub fn feller_density_at_chord(sphere: &SphereSpec, chord: f64) -> f64 {
    2.0 / unit_sphere_area(sphere.n) * chord.powi(-(sphere.n as i32))
}

/// `v = (n-2)/(2r)`.
pub fn supplementary_density(sphere: &SphereSpec) -> f64 {
    (sphere.n as f64 - 2.0) / (2.0 * sphere.r)
}

/// `q(x) = 1 - (r/|x|)^{n-2}` for `|x| > r`.
pub fn escape_probability(sphere: &SphereSpec, x: &[f64]) -> Result<f64, SphereError> {
    sphere.check(x)?;
    let d = sphere.distance(x);
    if d <= sphere.r {
        return Err(SphereError::PointInsideOrOn);
    }
    Ok(1.0 - (sphere.r / d).powi(sphere.n as i32 - 2))
}

/// Probability of reaching the inner sphere before radius `big_r` from
/// distance `d` in the annulus: `(d^{2-n} - R^{2-n}) / (r^{2-n} - R^{2-n})`.
pub fn annulus_hit_probability(sphere: &SphereSpec, d: f64, big_r: f64) -> f64 {
    let p = 2 - sphere.n as i32;
    (d.powi(p) - big_r.powi(p)) / (sphere.r.powi(p) - big_r.powi(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn sphere_areas() {
        assert_relative_eq!(unit_sphere_area(3), 4.0 * PI, max_relative = 1e-15);
        assert_relative_eq!(unit_sphere_area(4), 2.0 * PI * PI, max_relative = 1e-15);
        assert_relative_eq!(unit_sphere_area(2), 2.0 * PI, max_relative = 1e-15);
        for n in 1..12 {
            let g = 2.0 * PI.powf(n as f64 / 2.0) / gamma(n as f64 / 2.0);
            assert_relative_eq!(unit_sphere_area(n), g, max_relative = 1e-13);
        }
    }

    #[test]
    fn stable_constants() {
        assert_relative_eq!(stable_constant(1, 1.0).unwrap(), 1.0 / PI, max_relative = 1e-14);
        assert_relative_eq!(stable_constant(3, 1.0).unwrap(), 1.0 / (PI * PI), max_relative = 1e-14);
        assert!(stable_constant(3, 1e-9).unwrap() < 1e-8);
        assert_eq!(stable_constant(3, 2.0), Err(SphereError::AlphaOutOfRange(2.0)));
        assert_eq!(stable_constant(3, 0.0), Err(SphereError::AlphaOutOfRange(0.0)));
    }

    #[test]
    fn kernel_values() {
        let s = SphereSpec::new(3, 1.0).unwrap();
        let k = poisson_kernel(&s, Side::Interior, &[0.0; 3], &[0.0, 0.0, 1.0]).unwrap();
        assert_relative_eq!(k, 1.0 / (4.0 * PI), max_relative = 1e-15);
        let k = poisson_kernel(&s, Side::Exterior, &[2.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap();
        assert_relative_eq!(k, 3.0 / (4.0 * PI), max_relative = 1e-15);
        assert_eq!(
            poisson_kernel(&s, Side::Exterior, &[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]),
            Err(SphereError::PointOnBoundary)
        );
    }

    #[test]
    fn feller_density_values() {
        let s = SphereSpec::new(3, 1.0).unwrap();
        let u = feller_density(&s, &[0.0, 0.0, 1.0], &[0.0, 0.0, -1.0]).unwrap();
        assert_relative_eq!(u, 1.0 / (16.0 * PI), max_relative = 1e-15);
        assert_relative_eq!(u, 0.019_894_4, max_relative = 1e-5);
        let u = feller_density(&s, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        assert_relative_eq!(u, 1.0 / (4.0 * 2f64.sqrt() * PI), max_relative = 1e-14);
        let v = feller_density(&s, &[0.0, 1.0, 0.0], &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(u, v);
        assert_eq!(
            feller_density(&s, &[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]),
            Err(SphereError::CoincidentPoints)
        );
    }

    #[test]
    fn supplementary_and_escape() {
        let v = |n, r| supplementary_density(&SphereSpec::new(n, r).unwrap());
        assert_eq!(v(3, 1.0), 0.5);
        assert_eq!(v(4, 2.0), 0.5);
        assert_eq!(v(3, 2.0), 0.25);
        let s = SphereSpec::new(3, 1.0).unwrap();
        assert_relative_eq!(escape_probability(&s, &[2.0, 0.0, 0.0]).unwrap(), 0.5);
        assert_relative_eq!(escape_probability(&s, &[0.0, 4.0, 0.0]).unwrap(), 0.75);
        assert!(escape_probability(&s, &[1.0 + 1e-12, 0.0, 0.0]).unwrap() < 1e-11);
        assert_eq!(
            escape_probability(&s, &[0.5, 0.0, 0.0]),
            Err(SphereError::PointInsideOrOn)
        );
        assert_relative_eq!(annulus_hit_probability(&s, 2.0, 100.0), 0.49 / 0.99, max_relative = 1e-14);
        assert_relative_eq!(
            annulus_hit_probability(&s, 50.0, 100.0),
            (1.0 / 50.0 - 1.0 / 100.0) / (1.0 - 1.0 / 100.0),
            max_relative = 1e-14
        );
    }

    #[test]
    fn low_dimensions_rejected() {
        assert_eq!(SphereSpec::new(2, 1.0), Err(SphereError::DimensionTooSmall(2)));
        assert_eq!(SphereSpec::new(3, 0.0), Err(SphereError::InvalidRadius(0.0)));
    }
}
