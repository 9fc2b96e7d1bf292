//! Capacity equivalence of Brownian traces with the unit square: the ratio
//! `R(f) = Cap_f(path) / Cap_f([0,1]²)` stays in one band for all kernels.
//!
//! Path capacities come from the occupation-measure energy route with the
//! kernel smoothed at the binning resolution; the reference uses the same
//! smoothed kernel, both in path units.

use rayon::prelude::*;

use crate::capacity::reference_square_capacity;
use crate::energy::dyadic_energy;
use crate::error::{invalid, Result};
use crate::kernel::Kernel;
use crate::numeric::replica_seed;
use crate::path::sample_brownian;

use super::{bin_in_box, check_level_guard, Abort, ExperimentOutput, ExperimentRecord, BOX_HALF_WIDTH};

/// Levels summed by the reference series; increments of smoothed kernels
/// vanish long before this.
const REFERENCE_LEVELS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    /// `r^{-α}`.
    Riesz,
    /// `r^{-α}·max(-ln r, 0)`, the planar correction.
    LogAdjusted,
}

impl KernelFamily {
    pub fn kernel(self, alpha: f64) -> Result<Kernel> {
        let base = Kernel::riesz(alpha)?;
        Ok(match self {
            KernelFamily::Riesz => base,
            KernelFamily::LogAdjusted => Kernel::log_adjusted(base),
        })
    }
}

/// Smoothing scale in path units: two finest cube sides of the binning box.
pub fn smoothing_scale(n_max: usize) -> f64 {
    2.0 * 2.0 * BOX_HALF_WIDTH * 0.5f64.powi(n_max as i32)
}

pub fn run_capacity_equivalence(
    dim: usize,
    family: KernelFamily,
    alphas: &[f64],
    n_steps: usize,
    n_max: usize,
    replicas: usize,
    seed: u64,
) -> Result<ExperimentOutput> {
    if dim < 2 {
        return Err(invalid("dim", "capacity equivalence needs d ≥ 2"));
    }
    if alphas.is_empty() || replicas == 0 {
        return Err(invalid("alphas", "need at least one kernel and one replica"));
    }
    if let Some(a) = alphas.iter().find(|a| (**a - 2.0).abs() < 0.1) {
        return Err(invalid(
            "alphas",
            format!("α = {a} is within 0.1 of the critical exponent 2"),
        ));
    }
    check_level_guard(n_max, n_steps)?;
    let eps = smoothing_scale(n_max);
    let kernels: Vec<(Kernel, Kernel)> = alphas
        .iter()
        .map(|&a| {
            let base = family.kernel(a)?;
            let smooth = base.smooth(eps, dim)?;
            Ok((base, smooth))
        })
        .collect::<Result<_>>()?;
    let references: Vec<(f64, bool)> = kernels
        .iter()
        .map(|(base, smooth)| {
            let divergent = reference_square_capacity(base, REFERENCE_LEVELS).diagnostics.divergent;
            (reference_square_capacity(smooth, REFERENCE_LEVELS).value, divergent)
        })
        .collect();

    let per_replica: Vec<std::result::Result<Vec<f64>, String>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let path = sample_brownian(dim, n_steps, 1.0, replica_seed(seed, r)).map_err(|e| e.to_string())?;
            let h = bin_in_box(&path, n_max)?;
            let mass = h.total_mass();
            kernels
                .iter()
                .map(|(_, smooth)| {
                    let e = dyadic_energy(&h, smooth).map_err(|e| e.to_string())?;
                    Ok(mass * mass / e.value)
                })
                .collect()
        })
        .collect();

    let mut out = ExperimentOutput::default();
    out.header.push(("eps", eps));
    for (r, result) in per_replica.into_iter().enumerate() {
        let caps = match result {
            Ok(c) => c,
            Err(reason) => {
                out.aborts.push(Abort {
                    replica: r as u64,
                    reason,
                });
                continue;
            }
        };
        let mut ratios = Vec::new();
        for ((&alpha, &cap), &(reference, divergent)) in alphas.iter().zip(&caps).zip(&references) {
            let ratio = cap / reference;
            ratios.push(ratio);
            out.records.push(ExperimentRecord {
                experiment: "cap-equiv",
                replica: Some(r as u64),
                seed,
                scale_name: "alpha",
                scale: alpha,
                quantity: "capacity_ratio",
                estimate: ratio,
                reference: None,
                aux: vec![
                    ("path_capacity", cap),
                    ("reference_capacity", reference),
                    ("reference_divergent", f64::from(u8::from(divergent))),
                ],
            });
        }
        let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        out.records.push(ExperimentRecord {
            experiment: "cap-equiv",
            replica: Some(r as u64),
            seed,
            scale_name: "-",
            scale: f64::NAN,
            quantity: "spread",
            estimate: max / min,
            reference: None,
            aux: vec![("eps", eps)],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_exponent_is_rejected() {
        assert!(run_capacity_equivalence(3, KernelFamily::Riesz, &[1.95], 1 << 12, 6, 1, 0).is_err());
    }

    #[test]
    fn supercritical_kernels_are_flagged() {
        let out = run_capacity_equivalence(3, KernelFamily::Riesz, &[1.0, 2.5], 1 << 12, 6, 1, 0).unwrap();
        let rows: Vec<_> = out.select("capacity_ratio").collect();
        assert_eq!(rows[0].aux("reference_divergent"), Some(0.0));
        assert_eq!(rows[1].aux("reference_divergent"), Some(1.0));
        assert!(rows.iter().all(|r| r.estimate.is_finite() && r.estimate > 0.0));
    }

    #[test]
    fn small_run_has_one_spread_per_replica() {
        let out = run_capacity_equivalence(2, KernelFamily::LogAdjusted, &[0.5, 1.0, 1.5], 1 << 12, 6, 2, 3).unwrap();
        assert_eq!(out.select("spread").count(), 2);
        assert_eq!(out.select("capacity_ratio").count(), 6);
    }
}
