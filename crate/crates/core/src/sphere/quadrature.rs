use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::gamma::ln_gamma;

use super::SphereSpec;

/// Gauss rule with `k` nodes for the weight `(1-t²)^a` on `[-1, 1]`,
/// `a >= 0`, by Golub-Welsch. Exact for polynomials of degree `2k-1`.
pub fn gauss_gegenbauer(k: usize, a: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(k >= 1, "need at least one node");
    assert!(a >= 0.0, "weight exponent must be nonnegative");
    let mut jac = DMatrix::<f64>::zeros(k, k);
    for j in 1..k {
        let jf = j as f64;
        let d = 2.0 * jf + 2.0 * a;
        let b = (jf * (jf + 2.0 * a) / (d * d - 1.0)).sqrt();
        jac[(j - 1, j)] = b;
        jac[(j, j - 1)] = b;
    }
    // ∫(1-t²)^a dt = √π Γ(a+1)/Γ(a+3/2)
    let mu0 = std::f64::consts::PI.sqrt() * (ln_gamma(a + 1.0) - ln_gamma(a + 1.5)).exp();
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..k)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    // symmetrize to remove eigen-solver noise
    for i in 0..k / 2 {
        let j = k - 1 - i;
        let t = 0.5 * (pairs[j].0 - pairs[i].0);
        let w = 0.5 * (pairs[i].1 + pairs[j].1);
        pairs[i] = (-t, w);
        pairs[j] = (t, w);
    }
    if k % 2 == 1 {
        pairs[k / 2].0 = 0.0;
    }
    pairs.into_iter().unzip()
}

/// Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(k: usize) -> (Vec<f64>, Vec<f64>) {
    gauss_gegenbauer(k, 0.0)
}

/// Positive-weight rule on a sphere, exact for polynomials of degree
/// `<= order` restricted to the sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereRule {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub order: usize,
    /// Unit directions of the nodes from the centre.
    pub directions: Vec<Vec<f64>>,
}

fn unit_rule(n: usize, order: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    if n == 2 {
        let m = order + 1;
        let w = 2.0 * std::f64::consts::PI / m as f64;
        let nodes = (0..m)
            .map(|j| {
                let a = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
                vec![a.cos(), a.sin()]
            })
            .collect();
        return (nodes, vec![w; m]);
    }
    let (ts, wt) = gauss_gegenbauer(order / 2 + 1, (n as f64 - 3.0) / 2.0);
    let (sub, wsub) = unit_rule(n - 1, order);
    let mut nodes = Vec::with_capacity(ts.len() * sub.len());
    let mut weights = Vec::with_capacity(nodes.capacity());
    for (&t, &w) in ts.iter().zip(&wt) {
        let s = (1.0 - t * t).max(0.0).sqrt();
        for (e, &we) in sub.iter().zip(&wsub) {
            let mut p = Vec::with_capacity(n);
            p.push(t);
            p.extend(e.iter().map(|c| s * c));
            nodes.push(p);
            weights.push(w * we);
        }
    }
    (nodes, weights)
}

impl SphereRule {
    /// Gauss-Gegenbauer in the first coordinate times a rule on the
    /// equatorial sphere, recursively, down to an equispaced circle.
    pub fn product(sphere: &SphereSpec, order: usize) -> Self {
        let (dirs, w) = unit_rule(sphere.dim(), order);
        let scale = sphere.radius().powi(sphere.dim() as i32 - 1);
        Self {
            nodes: dirs.iter().map(|d| sphere.point(d)).collect(),
            weights: w.into_iter().map(|x| x * scale).collect(),
            order,
            directions: dirs,
        }
    }

    /// Unit-sphere rule in dimension `n`.
    pub fn unit(n: usize, order: usize) -> Self {
        let (dirs, weights) = unit_rule(n, order);
        Self {
            nodes: dirs.clone(),
            weights,
            order,
            directions: dirs,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Applies the orthogonal matrix `rot` (rows) to every node direction.
    pub fn rotated(&self, sphere: &SphereSpec, rot: &[Vec<f64>]) -> Self {
        let directions: Vec<Vec<f64>> = self.directions.iter().map(|d| apply(rot, d)).collect();
        Self {
            nodes: directions.iter().map(|d| sphere.point(d)).collect(),
            weights: self.weights.clone(),
            order: self.order,
            directions,
        }
    }

    /// `Σ wᵢ f(nodeᵢ)`.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(x))
            .sum()
    }

    /// Smallest distance between two distinct nodes.
    pub fn min_spacing(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.nodes.len() {
            for j in i + 1..self.nodes.len() {
                let d = super::dist(&self.nodes[i], &self.nodes[j]);
                if d > 0.0 {
                    best = best.min(d);
                }
            }
        }
        best
    }
}

pub(crate) fn apply(rot: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    rot.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// Orthonormal frame whose first vector is `unit` (a Householder
/// reflection of the standard basis). Returned as a list of vectors.
pub(crate) fn frame(unit: &[f64]) -> Vec<Vec<f64>> {
    let n = unit.len();
    let mut v: Vec<f64> = unit.iter().map(|u| -u).collect();
    v[0] += 1.0;
    let vv: f64 = v.iter().map(|x| x * x).sum();
    (0..n)
        .map(|j| {
            (0..n)
                .map(|i| {
                    let id = if i == j { 1.0 } else { 0.0 };
                    if vv < 1e-30 {
                        id
                    } else {
                        id - 2.0 * v[i] * v[j] / vv
                    }
                })
                .collect()
        })
        .collect()
}
