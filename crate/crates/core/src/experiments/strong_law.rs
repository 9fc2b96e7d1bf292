//! Strong law for approximate self-intersections: `S_σ/σ² → 4/(d-2)` for
//! `d ≥ 3` and `S_σ/(σ² ln(1/σ)) → 4` for `d = 2`, along single paths.

use rayon::prelude::*;

use crate::energy::gaussian_energy_fast;
use crate::error::{invalid, Error, Result};
use crate::numeric::{mean_and_se, replica_seed};
use crate::path::{occupation_measure, sample_brownian};

use super::moments::expected_s_quadrature;
use super::{ExperimentOutput, ExperimentRecord};

/// Pairs farther apart than this many σ are dropped by the fast evaluator.
pub const CUTOFF: f64 = 6.0;

/// Largest power-of-two stride dividing `n_steps` with `stride/n_steps ≤ σ²/16`:
/// the subsampled atoms stay four times finer than σ in the diffusive scale.
pub fn subsample_stride(n_steps: usize, sigma: f64) -> usize {
    let target = n_steps as f64 * sigma * sigma / 16.0;
    let mut k = 1;
    while (2 * k) as f64 <= target && n_steps.is_multiple_of(2 * k) {
        k *= 2;
    }
    k
}

/// The strong-law normalization of `S_σ` and its limit.
pub fn normalize(s: f64, sigma: f64, dim: usize) -> (f64, f64) {
    if dim == 2 {
        (s / (sigma * sigma * (1.0 / sigma).ln()), 4.0)
    } else {
        (s / (sigma * sigma), 4.0 / (dim as f64 - 2.0))
    }
}

pub fn check_sigma_guard(sigmas: &[f64], n_steps: usize) -> Result<()> {
    let floor = 4.0 / (n_steps as f64).sqrt();
    match sigmas.iter().copied().find(|&s| !(s >= floor)) {
        Some(s) => Err(Error::Resolution(format!(
            "sigma_min must be ≥ 4·n_steps^(-1/2) = {floor}; got {s}"
        ))),
        None => Ok(()),
    }
}

/// Per replica and σ: occupation measure of a horizon-1 Brownian path,
/// subsampled to spacing `≤ σ²/16` in time, then `S_σ` by the cutoff
/// evaluator. Summary rows put the replica mean of `S_σ/σ²` next to the
/// quadrature value of `E S_σ/σ²`.
pub fn run_strong_law(
    dim: usize,
    n_steps: usize,
    sigmas: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<ExperimentOutput> {
    if dim < 2 {
        return Err(invalid("dim", "the strong law needs d ≥ 2"));
    }
    if sigmas.is_empty() || replicas == 0 {
        return Err(invalid("sigmas", "need at least one σ and one replica"));
    }
    if sigmas.iter().any(|&s| !(s < 1.0)) {
        return Err(invalid("sigmas", "σ must be below 1"));
    }
    check_sigma_guard(sigmas, n_steps)?;
    let per_replica: Vec<Vec<(f64, f64, usize)>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let path = sample_brownian(dim, n_steps, 1.0, replica_seed(seed, r))?;
            sigmas
                .iter()
                .map(|&sigma| {
                    let k = subsample_stride(n_steps, sigma);
                    let coarse = path.subsample(k)?;
                    let m = occupation_measure(&coarse);
                    let e = gaussian_energy_fast(&m, sigma, CUTOFF, coarse.step().sqrt())?;
                    Ok((e.value, e.error_bound, k))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut out = ExperimentOutput::default();
    for (r, rows) in per_replica.iter().enumerate() {
        for (&sigma, &(s, bound, k)) in sigmas.iter().zip(rows) {
            let (ratio, target) = normalize(s, sigma, dim);
            out.records.push(ExperimentRecord {
                experiment: "strong-law",
                replica: Some(r as u64),
                seed,
                scale_name: "sigma",
                scale: sigma,
                quantity: "normalized_s",
                estimate: ratio,
                reference: Some(target),
                aux: vec![("s", s), ("error_bound", bound), ("stride", k as f64)],
            });
        }
    }
    for (j, &sigma) in sigmas.iter().enumerate() {
        let scaled: Vec<f64> = per_replica.iter().map(|rows| rows[j].0 / (sigma * sigma)).collect();
        let (mean, se) = mean_and_se(&scaled);
        let expected = expected_s_quadrature(sigma, dim)? / (sigma * sigma);
        out.records.push(ExperimentRecord {
            experiment: "strong-law",
            replica: None,
            seed,
            scale_name: "sigma",
            scale: sigma,
            quantity: "mean_s_over_sigma2",
            estimate: mean,
            reference: Some(expected),
            aux: vec![("se", se), ("z", (mean - expected) / se)],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::OutputFormat;

    #[test]
    fn strides_divide_and_respect_the_spacing() {
        let n = 1 << 22;
        assert_eq!(subsample_stride(n, 2f64.powi(-8)), 4);
        assert_eq!(subsample_stride(n, 2f64.powi(-2)), 1 << 14);
        assert_eq!(subsample_stride(n, 1e-4), 1);
        assert_eq!(subsample_stride(3 * 5, 1.0), 1);
    }

    #[test]
    fn guard_rejects_fine_sigma() {
        let err = run_strong_law(3, 1 << 10, &[0.1], 1, 0).unwrap_err();
        assert!(err.to_string().contains("4·n_steps^(-1/2)"), "{err}");
    }

    #[test]
    fn small_run_is_reproducible_and_sensible() {
        let sigmas = [0.25, 0.125, 0.0625];
        let a = run_strong_law(3, 1 << 14, &sigmas, 3, 9).unwrap();
        let b = run_strong_law(3, 1 << 14, &sigmas, 3, 9).unwrap();
        assert_eq!(a.render(OutputFormat::Csv), b.render(OutputFormat::Csv));
        assert_eq!(a.records.len(), 3 * 3 + 3);
        for r in a.select("normalized_s") {
            assert!(r.estimate > 0.5 && r.estimate < 40.0, "{r:?}");
        }
    }

    #[test]
    fn two_dimensional_normalization() {
        let (v, t) = normalize(0.5, 0.1, 2);
        assert!((v - 0.5 / (0.01 * 10f64.ln())).abs() < 1e-12);
        assert_eq!(t, 4.0);
        assert_eq!(normalize(1.0, 0.5, 5).1, 4.0 / 3.0);
    }
}
