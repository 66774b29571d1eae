//! Box lattices with nearest-neighbour and truncated stable jump kernels.
//!
//! Sites sit at `h·(i - (N-1)/2)` along each axis, so the box is centred at
//! the origin. Outside the box the chain is killed: a missing neighbour or an
//! out-of-box stable jump target contributes its rate to the killing rate.

use super::{ChainError, SubsetSpec, SymmetricChain};
use crate::linalg::DenseMatrix;
use crate::sphere::stable_constant;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSpec {
    pub dim: usize,
    /// Sites per axis.
    pub sites: usize,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// `½Δ` stencil: rate `1/(2h²)` to each nearest neighbour.
    Laplacian,
    /// `A(n,-α) hⁿ / |x-y|^{n+α}` for `0 < |x-y| <= cutoff`.
    Stable { alpha: f64, cutoff: f64 },
    /// Sum of the two.
    Mixed { alpha: f64, cutoff: f64 },
}

impl Kernel {
    fn stable(&self) -> Option<(f64, f64)> {
        match *self {
            Kernel::Laplacian => None,
            Kernel::Stable { alpha, cutoff } | Kernel::Mixed { alpha, cutoff } => {
                Some((alpha, cutoff))
            }
        }
    }

    fn has_laplacian(&self) -> bool {
        !matches!(self, Kernel::Stable { .. })
    }
}

/// Lattice chain together with its geometry and the split of each rate
/// into its Laplacian and stable parts.
#[derive(Debug, Clone)]
pub struct LatticeChain {
    pub chain: SymmetricChain<f64>,
    pub subset: SubsetSpec,
    pub coords: Vec<Vec<f64>>,
    pub spec: LatticeSpec,
    pub kernel: Kernel,
    /// `A(n,-α)`, zero for the pure Laplacian.
    pub stable_amplitude: f64,
    laplacian: DenseMatrix<f64>,
}

impl LatticeChain {
    /// Nearest-neighbour part of `Q(x,y)`.
    pub fn laplacian_rate(&self, x: usize, y: usize) -> f64 {
        self.laplacian[(x, y)]
    }

    /// Stable part of `Q(x,y)`.
    pub fn stable_rate(&self, x: usize, y: usize) -> f64 {
        if x == y {
            return 0.0;
        }
        self.chain.rate(x, y) - self.laplacian[(x, y)]
    }

    /// Site weight `hⁿ`.
    pub fn cell_volume(&self) -> f64 {
        self.spec.h.powi(self.spec.dim as i32)
    }
}

fn multi_index(mut k: usize, n: usize, dim: usize) -> Vec<usize> {
    let mut idx = vec![0; dim];
    for d in (0..dim).rev() {
        idx[d] = k % n;
        k /= n;
    }
    idx
}

pub fn lattice_chain_from_kernel(
    spec: LatticeSpec,
    kernel: Kernel,
    in_trace: impl Fn(&[f64]) -> bool,
) -> Result<LatticeChain, ChainError> {
    let LatticeSpec { dim, sites, h } = spec;
    if dim == 0 || sites < 2 {
        return Err(ChainError::DegenerateGrid(format!(
            "need dim >= 1 and at least 2 sites per axis, got dim {dim}, {sites} sites"
        )));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(ChainError::DegenerateGrid(format!("spacing {h} is not positive")));
    }
    let total = sites
        .checked_pow(dim as u32)
        .filter(|&t| t <= 4000)
        .ok_or_else(|| ChainError::DegenerateGrid("more than 4000 sites".into()))?;
    let stable = kernel.stable();
    let amp = match stable {
        Some((alpha, cutoff)) => {
            if cutoff < h {
                return Err(ChainError::DegenerateGrid(format!(
                    "cutoff {cutoff} is below the spacing {h}"
                )));
            }
            stable_constant(dim, alpha)
                .map_err(|e| ChainError::DegenerateGrid(e.to_string()))?
        }
        None => 0.0,
    };

    let centre = (sites as f64 - 1.0) / 2.0;
    let index: Vec<Vec<usize>> = (0..total).map(|k| multi_index(k, sites, dim)).collect();
    let coords: Vec<Vec<f64>> = index
        .iter()
        .map(|i| i.iter().map(|&a| h * (a as f64 - centre)).collect())
        .collect();
    let flat = |i: &[i64]| -> Option<usize> {
        let mut k = 0usize;
        for &a in i {
            if a < 0 || a >= sites as i64 {
                return None;
            }
            k = k * sites + a as usize;
        }
        Some(k)
    };

    let nn = 1.0 / (2.0 * h * h);
    let mut lap = DenseMatrix::zeros(total, total);
    let mut jump = DenseMatrix::zeros(total, total);
    let mut kill = vec![0.0; total];

    if kernel.has_laplacian() {
        for (x, ix) in index.iter().enumerate() {
            for d in 0..dim {
                for step in [-1i64, 1] {
                    let mut j: Vec<i64> = ix.iter().map(|&a| a as i64).collect();
                    j[d] += step;
                    match flat(&j) {
                        Some(y) => {
                            lap[(x, y)] = nn;
                            jump[(x, y)] = nn;
                        }
                        None => kill[x] += nn,
                    }
                }
            }
        }
    }

    if let Some((alpha, cutoff)) = stable {
        let reach = (cutoff / h).floor() as i64;
        let width = (2 * reach + 1) as usize;
        let offsets: Vec<(Vec<i64>, f64)> = (0..width.pow(dim as u32))
            .filter_map(|k| {
                let o: Vec<i64> = multi_index(k, width, dim)
                    .into_iter()
                    .map(|a| a as i64 - reach)
                    .collect();
                let r = h * (o.iter().map(|&a| (a * a) as f64).sum::<f64>()).sqrt();
                (r > 0.0 && r <= cutoff * (1.0 + 1e-12)).then_some((o, r))
            })
            .collect();
        let hn = h.powi(dim as i32);
        for (x, ix) in index.iter().enumerate() {
            for (o, r) in &offsets {
                let rate = amp * hn / r.powf(dim as f64 + alpha);
                let j: Vec<i64> = ix.iter().zip(o).map(|(&a, &b)| a as i64 + b).collect();
                match flat(&j) {
                    Some(y) => jump[(x, y)] += rate,
                    None => kill[x] += rate,
                }
            }
        }
    }

    let subset_idx: Vec<usize> = (0..total).filter(|&x| in_trace(&coords[x])).collect();
    if subset_idx.is_empty() {
        return Err(ChainError::EmptyTraceSet);
    }
    let subset = SubsetSpec::new(total, &subset_idx)?;
    let weights = vec![h.powi(dim as i32); total];
    let chain = SymmetricChain::from_jump_rates(jump, kill, weights)?;
    Ok(LatticeChain {
        chain,
        subset,
        coords,
        spec,
        kernel,
        stable_amplitude: amp,
        laplacian: lap,
    })
}

/// Geometry of the two-component trace set: a closed ball and a disjoint
/// spherical shell of the same radius, lattice-resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrototypeGeometry {
    pub ball_center: [f64; 3],
    pub shell_center: [f64; 3],
    pub radius: f64,
    /// Sites with `||x - shell_center| - radius| <= shell_half_width` form
    /// the shell.
    pub shell_half_width: f64,
}

impl PrototypeGeometry {
    pub fn in_ball(&self, x: &[f64]) -> bool {
        dist(x, &self.ball_center) <= self.radius * (1.0 + 1e-12)
    }

    pub fn in_shell(&self, x: &[f64]) -> bool {
        (dist(x, &self.shell_center) - self.radius).abs() <= self.shell_half_width
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.in_ball(x) || self.in_shell(x)
    }
}

fn dist(x: &[f64], c: &[f64; 3]) -> f64 {
    x.iter()
        .zip(c)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// The 9³ prototype: spacing 2/3, unit ball centred at `(-4/3, 0, 0)`, unit
/// shell centred at `(4/3, 0, 0)`, mixed kernel with `α = 1` and a cutoff
/// spanning the whole box.
pub fn prototype_lattice() -> Result<(LatticeChain, PrototypeGeometry), ChainError> {
    let h = 2.0 / 3.0;
    let geom = PrototypeGeometry {
        ball_center: [-4.0 / 3.0, 0.0, 0.0],
        shell_center: [4.0 / 3.0, 0.0, 0.0],
        radius: 1.0,
        shell_half_width: 0.25,
    };
    let spec = LatticeSpec {
        dim: 3,
        sites: 9,
        h,
    };
    let kernel = Kernel::Mixed {
        alpha: 1.0,
        cutoff: 8.0 * h * 3f64.sqrt(),
    };
    let lattice = lattice_chain_from_kernel(spec, kernel, |x| geom.contains(x))?;
    Ok((lattice, geom))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn one_dimensional_laplacian_is_half_stencil() {
        let spec = LatticeSpec {
            dim: 1,
            sites: 5,
            h: 1.0,
        };
        let l = lattice_chain_from_kernel(spec, Kernel::Laplacian, |x| x[0] == 0.0).unwrap();
        let q = l.chain.rates();
        for x in 0..5 {
            assert_eq!(q[(x, x)], -1.0);
            for y in 0..5 {
                let expect = if x.abs_diff(y) == 1 { 0.5 } else { 0.0 };
                if x != y {
                    assert_eq!(q[(x, y)], expect);
                }
            }
        }
        assert_eq!(l.chain.kill_rates()[0], 0.5);
        assert_eq!(l.chain.kill_rates()[2], 0.0);
        assert_eq!(l.subset.trace(), &[2]);
    }

    #[test]
    fn stable_rates_follow_power_law() {
        let spec = LatticeSpec {
            dim: 1,
            sites: 6,
            h: 0.5,
        };
        let l = lattice_chain_from_kernel(spec, Kernel::Stable { alpha: 1.0, cutoff: 2.0 }, |x| {
            x[0] < 0.0
        })
        .unwrap();
        let a = 1.0 / PI;
        let expect = a * 0.5 / 1.0f64.powi(2);
        assert!((l.chain.rate(0, 2) - expect).abs() < 1e-15);
        assert!((l.stable_rate(0, 2) - expect).abs() < 1e-15);
        assert_eq!(l.chain.rate(0, 5), 0.0);
        assert_eq!(l.laplacian_rate(0, 1), 0.0);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let spec = LatticeSpec {
            dim: 2,
            sites: 3,
            h: 1.0,
        };
        assert_eq!(
            lattice_chain_from_kernel(spec, Kernel::Laplacian, |_| false).unwrap_err(),
            ChainError::EmptyTraceSet
        );
        assert!(matches!(
            lattice_chain_from_kernel(spec, Kernel::Stable { alpha: 1.0, cutoff: 0.5 }, |_| true),
            Err(ChainError::DegenerateGrid(_))
        ));
        assert!(matches!(
            lattice_chain_from_kernel(spec, Kernel::Stable { alpha: 2.5, cutoff: 2.0 }, |_| true),
            Err(ChainError::DegenerateGrid(_))
        ));
        let bad = LatticeSpec { h: 0.0, ..spec };
        assert!(matches!(
            lattice_chain_from_kernel(bad, Kernel::Laplacian, |_| true),
            Err(ChainError::DegenerateGrid(_))
        ));
    }

    #[test]
    fn prototype_partition() {
        let (l, g) = prototype_lattice().unwrap();
        let ball = l.coords.iter().filter(|x| g.in_ball(x)).count();
        let shell = l.coords.iter().filter(|x| g.in_shell(x)).count();
        assert_eq!(ball, 19);
        assert_eq!(shell, 20);
        assert_eq!(l.subset.trace().len(), 39);
        assert!((l.stable_amplitude - 1.0 / (PI * PI)).abs() < 1e-15);
    }
}
