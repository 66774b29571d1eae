use serde::Serialize;

use super::SphereError;
use crate::chain::lattice::LatticeChain;
use crate::chain::FellerData;

/// Terms of the trace energy of a lattice prototype, assembled from the
/// lattice rates and a Feller measure on the trace set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrototypeEnergy {
    /// `Σ_{NN pairs in F} hⁿ (φ(x)-φ(y))²/(2h²)`, the discrete `½∫_F|∇φ|²`.
    pub gradient: f64,
    /// `Σ_{x≠y in F} (φ(x)-φ(y))² ½ hⁿ Q_stable(x,y)`.
    pub stable: f64,
    /// `Σ_{x≠y in F} (φ(x)-φ(y))² ½ U(x,y)`.
    pub feller: f64,
    /// `Σ_F φ² (V + κ)`, with `κ` the killing at the box boundary.
    pub killing: f64,
    pub total: f64,
}

/// Formula-assembly evaluator of the prototype trace energy on a lattice:
/// gradient, stable and Feller jump terms plus killing. `phi` is indexed
/// by position in the trace set.
pub fn prototype_trace_energy(
    lattice: &LatticeChain,
    phi: &[f64],
    feller: Option<&FellerData<f64>>,
) -> Result<PrototypeEnergy, SphereError> {
    let f = lattice.subset.trace();
    let k = f.len();
    let feller = feller.ok_or_else(|| SphereError::MissingFellerData("no Feller data supplied".into()))?;
    if feller.u.rows() != k || feller.v.len() != k {
        return Err(SphereError::MissingFellerData(format!(
            "Feller data covers {} states, trace set has {k}",
            feller.v.len()
        )));
    }
    if phi.len() != k {
        return Err(SphereError::Dimension {
            expected: k,
            found: phi.len(),
        });
    }
    let m = lattice.cell_volume();
    let kill = lattice.chain.kill_rates();
    let (mut gradient, mut stable, mut feller_term, mut killing) = (0.0, 0.0, 0.0, 0.0);
    for a in 0..k {
        for b in 0..k {
            if a == b {
                continue;
            }
            let d = phi[a] - phi[b];
            let d2 = d * d;
            gradient += d2 * 0.5 * m * lattice.laplacian_rate(f[a], f[b]);
            stable += d2 * 0.5 * m * lattice.stable_rate(f[a], f[b]);
            feller_term += d2 * 0.5 * feller.u[(a, b)];
        }
        killing += phi[a] * phi[a] * (feller.v[a] + m * kill[f[a]]);
    }
    Ok(PrototypeEnergy {
        gradient,
        stable,
        feller: feller_term,
        killing,
        total: gradient + stable + feller_term + killing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::lattice::{lattice_chain_from_kernel, Kernel, LatticeSpec};
    use crate::chain::{feller_for, trace_form};

    #[test]
    fn small_lattice_matches_trace_form() {
        let spec = LatticeSpec {
            dim: 2,
            sites: 5,
            h: 0.5,
        };
        let l = lattice_chain_from_kernel(spec, Kernel::Mixed { alpha: 1.5, cutoff: 1.0 }, |x| {
            x[0].abs() + x[1].abs() <= 0.5 || x[0] > 0.9
        })
        .unwrap();
        let (blocks, _, feller) = feller_for(&l.chain, &l.subset, &[]).unwrap();
        let t = trace_form(&l.chain, &l.subset, &blocks.mf).unwrap();
        let phi: Vec<f64> = (0..l.subset.trace().len()).map(|i| (i % 3) as f64 - 0.5).collect();
        let e = prototype_trace_energy(&l, &phi, Some(&feller)).unwrap();
        let exact = t.energy(&phi, &phi);
        assert!((e.total - exact).abs() <= 1e-10 * exact);
        let zero = prototype_trace_energy(&l, &vec![0.0; phi.len()], Some(&feller)).unwrap();
        assert_eq!(zero.total, 0.0);
        let one = prototype_trace_energy(&l, &vec![1.0; phi.len()], Some(&feller)).unwrap();
        assert_eq!(one.total, one.killing);
        assert!(matches!(
            prototype_trace_energy(&l, &phi, None),
            Err(SphereError::MissingFellerData(_))
        ));
    }
}
