use rayon::prelude::*;
use serde::Serialize;

use super::{excursion_pair_sampler, BmError, Launch, PairEnd, ShellConfig};
use crate::mc::{EstimatorReport, RngStream};
use crate::sphere::{feller_density_at_chord, gauss_legendre, supplementary_density, unit_sphere_area, SphereSpec};
use crate::tolerances;

/// Partition of the polar angle `∠(ξ, η)` in degrees. Bins starting below
/// `min_deg` are reported but not estimated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AngularBins {
    pub edges_deg: Vec<f64>,
    pub min_deg: f64,
}

impl AngularBins {
    pub fn new(edges_deg: Vec<f64>, min_deg: f64) -> Result<Self, BmError> {
        let ok = edges_deg.len() >= 2
            && edges_deg.windows(2).all(|w| w[0] < w[1])
            && edges_deg[0] >= 0.0
            && *edges_deg.last().unwrap() <= 180.0;
        if !ok {
            return Err(BmError::InvalidConfig(
                "bin edges must increase within [0, 180] degrees".into(),
            ));
        }
        Ok(Self { edges_deg, min_deg })
    }

    /// `[0,10)` unestimated, `[10,20)`, `[20,30)`, then 15° bins to 180°.
    pub fn standard() -> Self {
        let mut e = vec![0.0, 10.0, 20.0];
        let mut a = 30.0;
        while a <= 180.0 {
            e.push(a);
            a += 15.0;
        }
        Self {
            edges_deg: e,
            min_deg: 10.0,
        }
    }

    pub fn len(&self) -> usize {
        self.edges_deg.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn locate(&self, deg: f64) -> Option<usize> {
        let k = self.edges_deg.partition_point(|&e| e <= deg);
        if k == 0 {
            return None;
        }
        if k == self.edges_deg.len() {
            return (deg <= self.edges_deg[k - 1]).then_some(k - 2);
        }
        Some(k - 1)
    }
}

/// One bin at one `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpsRow {
    pub eps: f64,
    pub count: u64,
    pub density: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinEstimate {
    pub lo_deg: f64,
    pub hi_deg: f64,
    pub estimated: bool,
    /// Bin average of `(2/Ωₙ)|ξ-η|^{-n}` over surface measure.
    pub reference: f64,
    pub rows: Vec<EpsRow>,
    /// Second-order Richardson value from the two largest `eps`; `None`
    /// when not estimated or when a count is below the event minimum.
    pub extrapolated: Option<EstimatorReport>,
    /// Distance to the reference shrinks along the schedule, within two
    /// standard errors at each step.
    pub monotone: bool,
}

/// Escape fraction over `2 eps`, per `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupplementaryRow {
    pub eps: f64,
    pub escapes: u64,
    pub v_hat: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SphereFellerReport {
    pub dim: usize,
    pub radius: f64,
    pub n_per_eps: u64,
    pub eps_schedule: Vec<f64>,
    pub bins: Vec<BinEstimate>,
    pub v_rows: Vec<SupplementaryRow>,
    /// First-order Richardson of `v̂` from the two largest `eps`, against
    /// `(n-2)/(2r)`.
    pub v_hat: EstimatorReport,
    pub max_steps_exceeded: u64,
}

impl SphereFellerReport {
    /// Rows `bin_lo_deg,bin_hi_deg,eps,count,density,reference`, one per
    /// bin and `eps`, then one per bin with `eps = 0` for the extrapolated
    /// value.
    pub fn csv(&self) -> String {
        let mut s = String::from("bin_lo_deg,bin_hi_deg,eps,count,density,reference\n");
        for b in &self.bins {
            for r in &b.rows {
                s.push_str(&format!(
                    "{},{},{},{},{:.10e},{:.10e}\n",
                    b.lo_deg, b.hi_deg, r.eps, r.count, r.density, b.reference
                ));
            }
        }
        for b in &self.bins {
            if let Some(x) = &b.extrapolated {
                let count: u64 = b.rows.iter().map(|r| r.count).sum();
                s.push_str(&format!(
                    "{},{},0,{},{:.10e},{:.10e}\n",
                    b.lo_deg, b.hi_deg, count, x.estimate, b.reference
                ));
            }
        }
        s
    }

    /// Bins with a lower edge at or above `min_deg` whose extrapolated
    /// value is within `rel` of the reference.
    pub fn bins_within(&self, min_deg: f64, rel: f64) -> bool {
        self.bins
            .iter()
            .filter(|b| b.lo_deg >= min_deg)
            .all(|b| b.extrapolated.is_some_and(|x| (x.estimate - b.reference).abs() <= rel * b.reference))
    }
}

/// `∫_{θ₁}^{θ₂} sin^{n-2}θ g(θ) dθ` by Gauss-Legendre.
fn polar_integral(n: usize, lo: f64, hi: f64, g: impl Fn(f64) -> f64) -> f64 {
    let (t, w) = gauss_legendre(48);
    let half = 0.5 * (hi - lo);
    t.iter()
        .zip(&w)
        .map(|(&ti, &wi)| {
            let th = lo + half * (ti + 1.0);
            wi * half * th.sin().powi(n as i32 - 2) * g(th)
        })
        .sum()
}

#[derive(Debug, Clone, Default)]
struct Counts {
    bins: Vec<u64>,
    bins_sq: Vec<u64>,
    escapes: u64,
    failed: u64,
}

impl Counts {
    fn new(k: usize) -> Self {
        Self {
            bins: vec![0; k],
            bins_sq: vec![0; k],
            ..Default::default()
        }
    }

    fn merge(mut self, o: &Counts) -> Counts {
        for k in 0..self.bins.len() {
            self.bins[k] += o.bins[k];
            self.bins_sq[k] += o.bins_sq[k];
        }
        self.escapes += o.escapes;
        self.failed += o.failed;
        self
    }
}

/// ε-shell estimate of the Feller kernel seen from the pole `ξ = c + r eₙ`.
///
/// Each trial launches once inward from `r - eps` and once outward from
/// `r + eps` and bins the return points by polar angle. Per `eps` the
/// density of a bin is `count / (n · 2eps · area)`, and `v̂` is
/// `escapes / (n · 2eps)`. Trials that exceed the step limit are dropped
/// and counted.
pub fn estimate_feller_sphere_mc(
    sphere: &SphereSpec,
    bins: &AngularBins,
    eps_schedule: &[f64],
    n_per_eps: u64,
    cfg: &ShellConfig,
    stream: RngStream,
) -> Result<SphereFellerReport, BmError> {
    if eps_schedule.len() < 3 || !eps_schedule.windows(2).all(|w| w[0] > w[1]) {
        return Err(BmError::InvalidConfig(
            "eps schedule needs at least three strictly decreasing values".into(),
        ));
    }
    if n_per_eps < 2 {
        return Err(BmError::InvalidConfig("need at least two trials per eps".into()));
    }
    let n = sphere.dim();
    let r = sphere.radius();
    let mut pole = vec![0.0; n];
    pole[n - 1] = 1.0;
    let xi = sphere.point(&pole);
    let k = bins.len();
    let ring = unit_sphere_area(n - 1) * r.powi(n as i32 - 1);
    let geometry: Vec<(f64, f64, f64)> = (0..k)
        .map(|b| {
            let lo = bins.edges_deg[b].to_radians();
            let hi = bins.edges_deg[b + 1].to_radians();
            let weight = polar_integral(n, lo, hi, |_| 1.0);
            let area = ring * weight;
            let reference = if bins.edges_deg[b] >= bins.min_deg {
                polar_integral(n, lo, hi, |th| feller_density_at_chord(sphere, 2.0 * r * (0.5 * th).sin())) / weight
            } else {
                f64::NAN
            };
            (area, reference, weight)
        })
        .collect();

    let mut per_eps = Vec::with_capacity(eps_schedule.len());
    for (j, &eps) in eps_schedule.iter().enumerate() {
        let mut c = *cfg;
        c.eps = eps;
        c.validate(sphere)?;
        let ranges = crate::mc::batch_ranges(n_per_eps, tolerances::BATCHES);
        let parts: Vec<Counts> = ranges
            .par_iter()
            .map(|&(_, lo, hi)| {
                let mut acc = Counts::new(k);
                let mut hits = vec![0u64; k];
                for i in lo..hi {
                    let mut rng = stream.child(j as u64 * n_per_eps + i).rng();
                    hits.iter_mut().for_each(|h| *h = 0);
                    let mut ok = true;
                    for launch in [Launch::Inward, Launch::Outward] {
                        match excursion_pair_sampler(sphere, &xi, launch, &c, &mut rng) {
                            Ok((PairEnd::Return(eta), _)) => {
                                let cos = sphere
                                    .direction(&eta)
                                    .iter()
                                    .zip(&pole)
                                    .map(|(a, b)| a * b)
                                    .sum::<f64>()
                                    .clamp(-1.0, 1.0);
                                if let Some(b) = bins.locate(cos.acos().to_degrees()) {
                                    hits[b] += 1;
                                }
                            }
                            Ok((PairEnd::Escape, _)) => acc.escapes += 1,
                            Err(_) => ok = false,
                        }
                    }
                    if !ok {
                        acc.failed += 1;
                        continue;
                    }
                    for b in 0..k {
                        acc.bins[b] += hits[b];
                        acc.bins_sq[b] += hits[b] * hits[b];
                    }
                }
                acc
            })
            .collect();
        let total = parts.iter().fold(Counts::new(k), |a, p| a.merge(p));
        per_eps.push((eps, total));
    }

    let max_steps_exceeded: u64 = per_eps.iter().map(|(_, c)| c.failed).sum();
    let mut out_bins = Vec::with_capacity(k);
    for b in 0..k {
        let (area, reference, _) = geometry[b];
        let estimated = bins.edges_deg[b] >= bins.min_deg;
        let rows: Vec<EpsRow> = per_eps
            .iter()
            .map(|(eps, c)| {
                let used = (n_per_eps - c.failed) as f64;
                let mean = c.bins[b] as f64 / used;
                let var = (c.bins_sq[b] as f64 / used - mean * mean).max(0.0);
                let scale = 1.0 / (2.0 * eps * area);
                EpsRow {
                    eps: *eps,
                    count: c.bins[b],
                    density: mean * scale,
                    std_error: (var / used).sqrt() * scale,
                }
            })
            .collect();
        let enough = rows[..2].iter().all(|r| r.count >= tolerances::MIN_EVENTS);
        let extrapolated = (estimated && enough).then(|| {
            let (a, s) = (rows[0], rows[1]);
            let rho2 = (a.eps / s.eps).powi(2);
            let est = (rho2 * s.density - a.density) / (rho2 - 1.0);
            let se = (rho2 * rho2 * s.std_error.powi(2) + a.std_error.powi(2)).sqrt() / (rho2 - 1.0);
            EstimatorReport::new(est, se, a.count + s.count).with_exact(reference)
        });
        let monotone = estimated
            && rows.windows(2).all(|w| {
                let noise = 2.0 * (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt();
                (w[1].density - reference).abs() <= (w[0].density - reference).abs() + noise
            });
        out_bins.push(BinEstimate {
            lo_deg: bins.edges_deg[b],
            hi_deg: bins.edges_deg[b + 1],
            estimated,
            reference,
            rows,
            extrapolated,
            monotone,
        });
    }

    let v_rows: Vec<SupplementaryRow> = per_eps
        .iter()
        .map(|(eps, c)| {
            let used = (n_per_eps - c.failed) as f64;
            let p = c.escapes as f64 / used;
            SupplementaryRow {
                eps: *eps,
                escapes: c.escapes,
                v_hat: p / (2.0 * eps),
                std_error: (p * (1.0 - p) / used).sqrt() / (2.0 * eps),
            }
        })
        .collect();
    let (a, s) = (v_rows[0], v_rows[1]);
    let rho = a.eps / s.eps;
    let v_est = (rho * s.v_hat - a.v_hat) / (rho - 1.0);
    let v_se = (rho * rho * s.std_error.powi(2) + a.std_error.powi(2)).sqrt() / (rho - 1.0);
    let v_hat = EstimatorReport::new(v_est, v_se, a.escapes + s.escapes).with_exact(supplementary_density(sphere));

    Ok(SphereFellerReport {
        dim: n,
        radius: r,
        n_per_eps,
        eps_schedule: eps_schedule.to_vec(),
        bins: out_bins,
        v_rows,
        v_hat,
        max_steps_exceeded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bm::FarField;
    use std::f64::consts::PI;

    #[test]
    fn bins_locate() {
        let b = AngularBins::standard();
        assert_eq!(b.len(), 13);
        assert_eq!(b.locate(0.0), Some(0));
        assert_eq!(b.locate(29.9), Some(2));
        assert_eq!(b.locate(30.0), Some(3));
        assert_eq!(b.locate(180.0), Some(12));
        assert!(AngularBins::new(vec![10.0, 5.0], 0.0).is_err());
    }

    #[test]
    fn antipodal_reference() {
        // U at the antipode of the unit sphere in ℝ³ is (2/4π)/8 = 1/(16π)
        let s = SphereSpec::new(3, 1.0).unwrap();
        let v = polar_integral(3, PI - 1e-4, PI, |th| feller_density_at_chord(&s, 2.0 * (0.5 * th).sin()))
            / polar_integral(3, PI - 1e-4, PI, |_| 1.0);
        assert!((v - 1.0 / (16.0 * PI)).abs() < 1e-9);
        // band weight times 2π is the band area
        let a = 2.0 * PI * polar_integral(3, 0.0, PI, |_| 1.0);
        assert!((a - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn small_run_shapes_and_csv() {
        let s = SphereSpec::new(3, 1.0).unwrap();
        let cfg = ShellConfig::new(&s, 0.1).with_far_field(FarField::Restart);
        let bins = AngularBins::new(vec![0.0, 10.0, 90.0, 180.0], 10.0).unwrap();
        let rep = estimate_feller_sphere_mc(&s, &bins, &[0.2, 0.1, 0.05], 20_000, &cfg, RngStream::new(11, 0)).unwrap();
        assert_eq!(rep.bins.len(), 3);
        assert!(!rep.bins[0].estimated);
        assert!(rep.bins[0].extrapolated.is_none());
        let csv = rep.csv();
        assert!(csv.starts_with("bin_lo_deg,bin_hi_deg,eps,count,density,reference\n"));
        assert_eq!(csv.lines().count(), 1 + 9 + 2);
        let far = rep.bins[2].extrapolated.unwrap();
        assert!(far.relative_error().unwrap() < 0.25, "{far:?}");
        assert!((rep.v_hat.estimate - 0.5).abs() < 0.1);
        assert!(estimate_feller_sphere_mc(&s, &bins, &[0.1, 0.2, 0.05], 10, &cfg, RngStream::new(1, 0)).is_err());
    }
}
