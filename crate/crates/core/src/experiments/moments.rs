//! Deterministic moment integrals of `S_σ` for Brownian occupation measure on
//! `[0,1]`: `E S_σ = 2 ∫₀¹ (1-s)(1 + s/σ²)^{-d/2} ds` and the leading term
//! `I₁` of the second moment.

use crate::error::{invalid, Result};
use crate::numeric::ls_slope;
use crate::quadrature::{geometric_breaks, integrate_with_breaks, Tolerance};

use super::{ExperimentOutput, ExperimentRecord};

fn check(sigma: f64, dim: usize) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid("sigma", "must be positive and finite"));
    }
    if dim < 2 {
        return Err(invalid("dim", "must be at least 2"));
    }
    Ok(())
}

/// `σ^d (σ² + s)^{-d/2}`, the Gaussian factor of a time lag `s`.
fn lag_factor(s: f64, sigma: f64, dim: usize) -> f64 {
    (1.0 + s / (sigma * sigma)).powf(-(dim as f64) / 2.0)
}

/// `E S_σ = 2σ^d ∫₀¹ (1-s)(σ²+s)^{-d/2} ds` by adaptive quadrature.
pub fn expected_s_quadrature(sigma: f64, dim: usize) -> Result<f64> {
    check(sigma, dim)?;
    let integral = integrate_with_breaks(
        |s| (1.0 - s) * lag_factor(s, sigma, dim),
        &geometric_breaks(sigma * sigma, 1.0),
        Tolerance::relative(1e-13),
    )?;
    Ok(2.0 * integral.value)
}

/// `E S_σ` in `d = 3` from the antiderivative:
/// `4σ² + 8σ⁴ - 8σ³(1+σ²)^{1/2}`.
pub fn expected_s_closed_form_d3(sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    4.0 * s2 + 8.0 * s2 * s2 - 8.0 * s2 * sigma * (1.0 + s2).sqrt()
}

/// `∫₀¹ q(s₁) ∫₀^{upper(s₁)} ((1-s₁-s₃)²/2) q(s₃) ds₃ ds₁` with `q` the lag factor.
fn i1_over(sigma: f64, dim: usize, upper: impl Fn(f64) -> f64) -> Result<f64> {
    let inner = |s1: f64| {
        let top = upper(s1);
        if top <= 0.0 {
            return 0.0;
        }
        let rest = 1.0 - s1;
        integrate_with_breaks(
            |s3| 0.5 * (rest - s3).powi(2) * lag_factor(s3, sigma, dim),
            &geometric_breaks(sigma * sigma, top),
            Tolerance::relative(1e-12),
        )
        .map_or(f64::NAN, |i| i.value)
    };
    let outer = integrate_with_breaks(
        |s1| lag_factor(s1, sigma, dim) * inner(s1),
        &geometric_breaks(sigma * sigma, 1.0),
        Tolerance::relative(1e-10),
    )?;
    Ok(outer.value)
}

/// `I₁ = σ^{2d} ∬_{s₁+s₃≤1} ((1-s₁-s₃)²/2)(σ²+s₁)^{-d/2}(σ²+s₃)^{-d/2}`
/// by nested adaptive quadrature over the triangle.
pub fn second_moment_i1_quadrature(sigma: f64, dim: usize) -> Result<f64> {
    check(sigma, dim)?;
    i1_over(sigma, dim, |s1| 1.0 - s1)
}

/// Tabulates `E S_σ` and `I₁` over a σ grid. For `d ≥ 3` the rows carry the
/// leading term `4σ²/(d-2)`, and a summary row fits the order of the
/// remainder `|E S_σ - 4σ²/(d-2)|` in σ.
pub fn run_moments(dim: usize, sigmas: &[f64]) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::default();
    let (mut log_sigma, mut log_rem) = (Vec::new(), Vec::new());
    for &sigma in sigmas {
        let es = expected_s_quadrature(sigma, dim)?;
        let i1 = second_moment_i1_quadrature(sigma, dim)?;
        let mut aux = vec![("i1", i1)];
        let leading = (dim >= 3).then(|| 4.0 * sigma * sigma / (dim as f64 - 2.0));
        if let Some(lead) = leading {
            aux.push(("remainder", es - lead));
            aux.push(("i1_ratio", 8.0 * i1 / (lead * lead)));
            if es != lead {
                log_sigma.push(sigma.ln());
                log_rem.push((es - lead).abs().ln());
            }
        }
        if dim == 3 {
            aux.push(("closed_form", expected_s_closed_form_d3(sigma)));
        }
        out.records.push(ExperimentRecord {
            experiment: "moments",
            replica: None,
            seed: 0,
            scale_name: "sigma",
            scale: sigma,
            quantity: "expected_s",
            estimate: es,
            reference: leading,
            aux,
        });
    }
    if log_sigma.len() >= 2 {
        out.records.push(ExperimentRecord {
            experiment: "moments",
            replica: None,
            seed: 0,
            scale_name: "-",
            scale: f64::NAN,
            quantity: "remainder_slope",
            estimate: ls_slope(&log_sigma, &log_rem),
            reference: (dim == 3).then_some(3.0),
            aux: Vec::new(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_matches_closed_form_in_d3() {
        for sigma in [1e-3, 0.01, 0.1, 0.125, 0.5, 1.0, 4.0] {
            let q = expected_s_quadrature(sigma, 3).unwrap();
            let c = expected_s_closed_form_d3(sigma);
            assert!(((q - c) / c).abs() < 1e-9, "σ = {sigma}: {q} vs {c}");
        }
    }

    #[test]
    fn remainder_is_cubic_in_d3() {
        let sigmas = [0.1, 0.05, 0.025];
        let rem: Vec<f64> = sigmas
            .iter()
            .map(|&s| (expected_s_quadrature(s, 3).unwrap() - 4.0 * s * s).abs())
            .collect();
        let k = sigmas.iter().zip(&rem).map(|(s, r)| r / s.powi(3)).fold(0.0, f64::max);
        for (s, r) in sigmas.iter().zip(&rem) {
            assert!(*r <= k * s.powi(3));
        }
        let out = run_moments(3, &sigmas).unwrap();
        let slope = out.select("remainder_slope").next().unwrap().estimate;
        assert!((2.7..=3.3).contains(&slope), "{slope}");
    }

    #[test]
    fn total_mass_limit() {
        let v = expected_s_quadrature(1e6, 3).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn leading_term_in_d4() {
        let sigma = 1e-3;
        let v = expected_s_quadrature(sigma, 4).unwrap() / (sigma * sigma);
        assert!((v / 2.0 - 1.0).abs() < 0.01, "{v}");
    }

    #[test]
    fn i1_leading_term_in_d3() {
        let sigma = 1e-3;
        let i1 = second_moment_i1_quadrature(sigma, 3).unwrap();
        let ratio = 8.0 * i1 / (4.0 * sigma * sigma).powi(2);
        assert!((ratio - 1.0).abs() <= 0.02, "{ratio}");
    }

    #[test]
    fn i1_is_symmetric() {
        for sigma in [0.05, 0.3] {
            let full = second_moment_i1_quadrature(sigma, 3).unwrap();
            let half = i1_over(sigma, 3, |s1| s1.min(1.0 - s1)).unwrap();
            assert!(((2.0 * half - full) / full).abs() < 1e-9, "{full} {half}");
        }
    }

    #[test]
    fn i1_large_sigma_limit() {
        // ∬_{x+y≤1} (1-x-y)²/2 = 1/24.
        let v = second_moment_i1_quadrature(1e6, 3).unwrap();
        assert!((v - 1.0 / 24.0).abs() < 1e-8, "{v}");
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(expected_s_quadrature(0.0, 3).is_err());
        assert!(expected_s_quadrature(0.1, 1).is_err());
        assert!(second_moment_i1_quadrature(-1.0, 3).is_err());
    }
}
