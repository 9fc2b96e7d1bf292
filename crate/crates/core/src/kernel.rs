//! Decreasing kernels `f(r)` of the distance `r = |x - y|`.
//!
//! Every kernel here is weakly decreasing and nonnegative on `[0, ∞)`. The
//! derived kernels are the log adjustment `f(r)·max(ln(1/r), 0)` and the
//! ε-smoothing, which replaces `f` below `ε` by its spherical average
//! `f̄(ε) = d·ε^{-d} ∫₀^ε f(s) s^{d-1} ds`.

use std::fmt;

use statrs::function::gamma::gamma;

use crate::error::{invalid, Error, Result};
use crate::quadrature::{self, Tolerance};

/// Piecewise-linear kernel through `(r, f(r))` knots, constant past the last knot.
#[derive(Debug, Clone, PartialEq)]
pub struct TableKernel {
    knots: Vec<(f64, f64)>,
}

impl TableKernel {
    fn eval(&self, r: f64) -> f64 {
        let knots = &self.knots;
        let i = knots.partition_point(|&(x, _)| x <= r);
        if i == 0 {
            return knots[0].1;
        }
        if i == knots.len() {
            return knots[i - 1].1;
        }
        let (x0, y0) = knots[i - 1];
        let (x1, y1) = knots[i];
        y0 + (y1 - y0) * (r - x0) / (x1 - x0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    /// `r^{-α}`.
    Riesz {
        alpha: f64,
    },
    /// Potential density of the symmetric α-stable process in `R^d`:
    /// `c(α)·r^{α-d}`.
    StablePotential {
        alpha: f64,
        dim: usize,
        constant: f64,
    },
    /// `f(r)·max(ln(1/r), 0)`.
    LogAdjusted(Box<Kernel>),
    /// `f(r)` for `r ≥ ε`, the spherical average `f̄(ε)` below.
    Smoothed {
        base: Box<Kernel>,
        eps: f64,
        dim: usize,
        plateau: f64,
    },
    Table(TableKernel),
    /// `exp(-r²/2σ²)`.
    Gaussian {
        sigma: f64,
    },
}

/// Normalizing constant of the α-stable potential density in `R^d`, for the
/// process with characteristic function `exp(-t|λ|^α)`.
pub fn stable_constant(alpha: f64, dim: usize) -> f64 {
    let d = dim as f64;
    gamma((d - alpha) / 2.0) / (2f64.powf(alpha) * std::f64::consts::PI.powf(d / 2.0) * gamma(alpha / 2.0))
}

impl Kernel {
    pub fn riesz(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(invalid(
                "alpha",
                format!("Riesz exponent must be positive, got {alpha}"),
            ));
        }
        Ok(Kernel::Riesz { alpha })
    }

    pub fn stable_potential(alpha: f64, dim: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(invalid(
                "alpha",
                format!("stable index must lie in (0, 2], got {alpha}"),
            ));
        }
        if dim < 3 {
            return Err(invalid("d", format!("stable potential needs d ≥ 3, got {dim}")));
        }
        if alpha >= dim as f64 {
            return Err(invalid("alpha", "stable index must be below the dimension"));
        }
        Ok(Kernel::StablePotential {
            alpha,
            dim,
            constant: stable_constant(alpha, dim),
        })
    }

    pub fn log_adjusted(base: Kernel) -> Self {
        Kernel::LogAdjusted(Box::new(base))
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(invalid("sigma", "must be positive"));
        }
        Ok(Kernel::Gaussian { sigma })
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::table(vec![(0.0, value)])
    }

    /// Piecewise-linear kernel through the given knots. The first knot must
    /// sit at `r = 0`; values must be nonnegative and weakly decreasing.
    pub fn table(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.first().map(|k| k.0) != Some(0.0) {
            return Err(invalid("table", "first knot must be at r = 0"));
        }
        for w in knots.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(invalid("table", "knot radii must increase strictly"));
            }
            if w[1].1 > w[0].1 {
                return Err(invalid("table", "kernel values must be weakly decreasing"));
            }
        }
        if knots.iter().any(|k| !(k.1 >= 0.0 && k.1.is_finite())) {
            return Err(invalid("table", "kernel values must be finite and nonnegative"));
        }
        Ok(Kernel::Table(TableKernel { knots }))
    }

    pub fn family(&self) -> &'static str {
        match self {
            Kernel::Riesz { .. } => "riesz",
            Kernel::StablePotential { .. } => "stable",
            Kernel::LogAdjusted(_) => "logadj",
            Kernel::Smoothed { .. } => "smooth",
            Kernel::Table(_) => "table",
            Kernel::Gaussian { .. } => "gauss",
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        match self {
            Kernel::Riesz { alpha } => {
                if r > 0.0 {
                    r.powf(-alpha)
                } else {
                    f64::INFINITY
                }
            }
            Kernel::StablePotential { alpha, dim, constant } => {
                if r > 0.0 {
                    constant * r.powf(alpha - *dim as f64)
                } else {
                    f64::INFINITY
                }
            }
            Kernel::LogAdjusted(base) => {
                if r <= 0.0 {
                    return if base.eval(0.0) > 0.0 { f64::INFINITY } else { 0.0 };
                }
                let log = -r.ln();
                if log > 0.0 {
                    base.eval(r) * log
                } else {
                    0.0
                }
            }
            Kernel::Smoothed { base, eps, plateau, .. } => {
                if r >= *eps {
                    base.eval(r)
                } else {
                    *plateau
                }
            }
            Kernel::Table(t) => t.eval(r),
            Kernel::Gaussian { sigma } => (-r * r / (2.0 * sigma * sigma)).exp(),
        }
    }

    pub fn value_at_zero(&self) -> f64 {
        self.eval(0.0)
    }

    pub fn is_bounded(&self) -> bool {
        self.value_at_zero().is_finite()
    }

    /// `f(2^{-n}) - f(2^{1-n})`, or `+∞` when `f(2^{-n})` is infinite.
    pub fn dyadic_increment(&self, n: usize) -> f64 {
        self.dyadic_increment_scaled(n, 1.0)
    }

    /// Dyadic increment for cubes whose level-0 side is `unit`:
    /// `f(unit·2^{-n}) - f(unit·2^{1-n})`.
    pub fn dyadic_increment_scaled(&self, n: usize, unit: f64) -> f64 {
        let fine = self.eval(unit * 0.5f64.powi(n as i32));
        if fine.is_infinite() {
            return f64::INFINITY;
        }
        let coarse = self.eval(unit * 0.5f64.powi(n as i32 - 1));
        (fine - coarse).max(0.0)
    }

    /// Power of the singularity at the origin: `f(r) ≈ r^{-p}` as `r → 0`
    /// (log factors ignored). Zero for bounded kernels.
    fn singularity_exponent(&self) -> f64 {
        match self {
            Kernel::Riesz { alpha } => *alpha,
            Kernel::StablePotential { alpha, dim, .. } => *dim as f64 - alpha,
            Kernel::LogAdjusted(base) => base.singularity_exponent(),
            _ => 0.0,
        }
    }

    /// Radii where `f` fails to be smooth.
    fn kinks(&self) -> Vec<f64> {
        match self {
            Kernel::LogAdjusted(base) => {
                let mut k = base.kinks();
                k.push(1.0);
                k
            }
            Kernel::Smoothed { base, eps, .. } => {
                let mut k = base.kinks();
                k.push(*eps);
                k
            }
            Kernel::Table(t) => t.knots.iter().map(|k| k.0).collect(),
            _ => Vec::new(),
        }
    }

    /// Spherical average `f̄(ε) = d·ε^{-d} ∫₀^ε f(s) s^{d-1} ds`.
    ///
    /// Closed form for the power-law families, adaptive quadrature (relative
    /// accuracy 1e-10) otherwise.
    pub fn smoothed_value(&self, eps: f64, dim: usize) -> Result<f64> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(invalid("eps", "smoothing radius must be positive"));
        }
        if dim == 0 {
            return Err(invalid("d", "dimension must be at least 1"));
        }
        let d = dim as f64;
        let p = self.singularity_exponent();
        if p >= d {
            return Err(Error::NonCapacitable(format!(
                "∫₀ f(s) s^(d-1) ds diverges for {self} in dimension {dim}"
            )));
        }
        match self {
            Kernel::Riesz { alpha } => Ok(d / (d - alpha) * eps.powf(-alpha)),
            Kernel::StablePotential {
                alpha,
                dim: kd,
                constant,
            } if *kd == dim => Ok(d * constant / alpha * eps.powf(alpha - d)),
            _ => {
                // s = ε e^{-t} turns the integral into d ∫₀^∞ f(ε e^{-t}) e^{-dt} dt,
                // whose integrand is bounded and decays exponentially. Kinks of f
                // become break points so the error estimate is not fooled.
                let integrand = |t: f64| {
                    let w = (-d * t).exp();
                    if w == 0.0 {
                        0.0
                    } else {
                        self.eval(eps * (-t).exp()) * w
                    }
                };
                let tol = Tolerance::relative(1e-12);
                let mut breaks = vec![0.0];
                let mut kinks = self.kinks();
                kinks.sort_by(|a, b| b.total_cmp(a));
                breaks.extend(
                    kinks
                        .into_iter()
                        .filter(|&r| r > 0.0 && r < eps)
                        .map(|r| (eps / r).ln()),
                );
                breaks.dedup();
                let last = *breaks.last().expect("nonempty");
                let head = if breaks.len() > 1 {
                    quadrature::integrate_with_breaks(integrand, &breaks, tol)?.value
                } else {
                    0.0
                };
                let tail = quadrature::integrate_to_infinity(integrand, last, tol)?.value;
                let integral = head + tail;
                Ok(d * integral)
            }
        }
    }

    /// The ε-smoothed kernel `f_ε`.
    pub fn smooth(&self, eps: f64, dim: usize) -> Result<Kernel> {
        let plateau = self.smoothed_value(eps, dim)?;
        Ok(Kernel::Smoothed {
            base: Box::new(self.clone()),
            eps,
            dim,
            plateau,
        })
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Riesz { alpha } => write!(f, "riesz:alpha={alpha}"),
            Kernel::StablePotential { alpha, dim, .. } => write!(f, "stable:alpha={alpha},d={dim}"),
            Kernel::LogAdjusted(base) => write!(f, "logadj:{base}"),
            Kernel::Smoothed { base, eps, dim, .. } => write!(f, "smooth:eps={eps},d={dim}:{base}"),
            Kernel::Table(t) => {
                write!(f, "table:")?;
                for (i, (r, v)) in t.knots.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{r}={v}")?;
                }
                Ok(())
            }
            Kernel::Gaussian { sigma } => write!(f, "gauss:sigma={sigma}"),
        }
    }
}

/// Parses a kernel specification such as `riesz:alpha=0.5`,
/// `stable:alpha=1,d=3`, `logadj:riesz:alpha=1` or
/// `smooth:eps=0.01:riesz:alpha=1`.
///
/// `dim` supplies the ambient dimension where a spec omits `d=`.
pub fn parse_kernel_spec(spec: &str, dim: usize) -> Result<Kernel> {
    let tokens: Vec<&str> = spec.split(':').collect();
    let (kernel, next) = parse_at(&tokens, 0, dim)?;
    if let Some(extra) = tokens.get(next) {
        return Err(spec_error(extra, "unexpected trailing token"));
    }
    Ok(kernel)
}

fn spec_error(token: &str, reason: &str) -> Error {
    Error::KernelSpec {
        token: token.to_string(),
        reason: reason.to_string(),
    }
}

struct Params<'a> {
    token: &'a str,
    pairs: Vec<(&'a str, &'a str)>,
}

impl<'a> Params<'a> {
    fn parse(token: &'a str, allowed: &[&str]) -> Result<Self> {
        let mut pairs = Vec::new();
        for item in token.split(',') {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| spec_error(token, "expected key=value"))?;
            if !allowed.contains(&key) {
                return Err(spec_error(token, &format!("unknown parameter `{key}`")));
            }
            pairs.push((key, value));
        }
        Ok(Self { token, pairs })
    }

    fn get(&self, key: &str) -> Result<Option<f64>> {
        match self.pairs.iter().find(|(k, _)| *k == key) {
            None => Ok(None),
            Some((_, v)) => v
                .parse::<f64>()
                .map(Some)
                .map_err(|_| spec_error(self.token, &format!("`{key}` is not a number"))),
        }
    }

    fn require(&self, key: &str) -> Result<f64> {
        self.get(key)?
            .ok_or_else(|| spec_error(self.token, &format!("missing `{key}`")))
    }

    fn dim(&self, default: usize) -> Result<usize> {
        match self.get("d")? {
            None => Ok(default),
            Some(d) if d >= 1.0 && d.fract() == 0.0 => Ok(d as usize),
            Some(_) => Err(spec_error(self.token, "`d` must be a positive integer")),
        }
    }
}

fn parse_at(tokens: &[&str], i: usize, dim: usize) -> Result<(Kernel, usize)> {
    let family = *tokens.get(i).ok_or_else(|| spec_error("", "missing kernel family"))?;
    let params = |allowed: &[&str]| -> Result<Params<'_>> {
        let token = tokens
            .get(i + 1)
            .ok_or_else(|| spec_error(family, "missing parameter list"))?;
        Params::parse(token, allowed)
    };
    let wrap = |e: Error, token: &str| match e {
        Error::InvalidParameter { reason, .. } => spec_error(token, &reason),
        other => other,
    };
    match family {
        "riesz" => {
            let p = params(&["alpha"])?;
            let k = Kernel::riesz(p.require("alpha")?).map_err(|e| wrap(e, p.token))?;
            Ok((k, i + 2))
        }
        "stable" => {
            let p = params(&["alpha", "d"])?;
            let k = Kernel::stable_potential(p.require("alpha")?, p.dim(dim)?).map_err(|e| wrap(e, p.token))?;
            Ok((k, i + 2))
        }
        "gauss" => {
            let p = params(&["sigma"])?;
            let k = Kernel::gaussian(p.require("sigma")?).map_err(|e| wrap(e, p.token))?;
            Ok((k, i + 2))
        }
        "const" => {
            let p = params(&["c"])?;
            let k = Kernel::constant(p.require("c")?).map_err(|e| wrap(e, p.token))?;
            Ok((k, i + 2))
        }
        "logadj" => {
            let (base, next) = parse_at(tokens, i + 1, dim)?;
            Ok((Kernel::log_adjusted(base), next))
        }
        "smooth" => {
            let p = params(&["eps", "d"])?;
            let eps = p.require("eps")?;
            let d = p.dim(dim)?;
            let (base, next) = parse_at(tokens, i + 2, dim)?;
            let k = base.smooth(eps, d).map_err(|e| wrap(e, p.token))?;
            Ok((k, next))
        }
        other => Err(spec_error(other, "unknown kernel family")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn riesz_values() {
        assert_eq!(Kernel::riesz(1.0).unwrap().eval(0.5), 2.0);
        assert_eq!(Kernel::riesz(2.0).unwrap().eval(1.0), 1.0);
        assert_relative_eq!(Kernel::riesz(0.5).unwrap().eval(0.25), 2.0, max_relative = 1e-15);
        assert!(Kernel::riesz(1.0).unwrap().value_at_zero().is_infinite());
        assert!(Kernel::riesz(0.0).is_err());
        assert!(Kernel::riesz(-1.0).is_err());
    }

    #[test]
    fn stable_constant_in_three_dimensions() {
        use std::f64::consts::PI;
        // Γ(1) = 1 and Γ(1/2) = √π exactly, so c(1) = 1/(2 π^{3/2} √π) = 1/(2π²),
        // the Green function of the Cauchy process in R³.
        let k = Kernel::stable_potential(1.0, 3).unwrap();
        assert_relative_eq!(k.eval(1.0), 1.0 / (2.0 * PI * PI), max_relative = 1e-14);
        // α = 2 is B(2t), whose Green function is 1/(4π r).
        let k = Kernel::stable_potential(2.0, 3).unwrap();
        assert_relative_eq!(k.eval(2.0), 1.0 / (8.0 * PI), max_relative = 1e-14);
        // c(2) in d = 4: Γ(1)/(4 π² Γ(1)) = 1/(4π²).
        let k = Kernel::stable_potential(2.0, 4).unwrap();
        assert_relative_eq!(k.eval(1.0), 1.0 / (4.0 * PI * PI), max_relative = 1e-14);
    }

    #[test]
    fn stable_homogeneity() {
        let k = Kernel::stable_potential(1.3, 4).unwrap();
        for r in [0.01, 0.3, 2.5] {
            assert_relative_eq!(k.eval(r) / k.eval(2.0 * r), 2f64.powf(4.0 - 1.3), max_relative = 1e-12);
        }
        let k = Kernel::stable_potential(2.0, 5).unwrap();
        assert_relative_eq!(k.eval(0.5) / k.eval(1.0), 8.0, max_relative = 1e-12);
    }

    #[test]
    fn stable_parameter_checks() {
        assert!(Kernel::stable_potential(0.0, 3).is_err());
        assert!(Kernel::stable_potential(2.5, 3).is_err());
        assert!(Kernel::stable_potential(1.0, 2).is_err());
    }

    #[test]
    fn log_adjusted_values() {
        let e = std::f64::consts::E;
        let k = Kernel::log_adjusted(Kernel::riesz(1.0).unwrap());
        assert_relative_eq!(k.eval(1.0 / e), e, max_relative = 1e-14);
        assert_eq!(k.eval(1.0), 0.0);
        assert_eq!(k.eval(3.0), 0.0);
        let k = Kernel::log_adjusted(Kernel::riesz(0.5).unwrap());
        assert_relative_eq!(k.eval(0.25), 2.0 * 4f64.ln(), max_relative = 1e-14);
    }

    #[test]
    fn smoothed_constant_is_constant() {
        let k = Kernel::constant(2.5).unwrap();
        assert_relative_eq!(k.smoothed_value(0.3, 3).unwrap(), 2.5, max_relative = 1e-10);
    }

    #[test]
    fn smoothed_riesz_closed_form() {
        // d ε^{-d} ∫₀^ε s^{-1} s² ds = (3/2) ε^{-1} = 3 at ε = 1/2.
        let k = Kernel::riesz(1.0).unwrap();
        assert_relative_eq!(k.smoothed_value(0.5, 3).unwrap(), 3.0, max_relative = 1e-14);
    }

    #[test]
    fn smoothed_stable_closed_form() {
        // d·c(α)/α · ε^{α-d}
        let k = Kernel::stable_potential(1.0, 3).unwrap();
        let c = 1.0 / (2.0 * std::f64::consts::PI.powi(2));
        assert_relative_eq!(k.smoothed_value(0.5, 3).unwrap(), 3.0 * c * 4.0, max_relative = 1e-12);
    }

    #[test]
    fn divergent_average_is_rejected() {
        assert!(matches!(
            Kernel::riesz(3.0).unwrap().smoothed_value(0.1, 3),
            Err(Error::NonCapacitable(_))
        ));
        assert!(Kernel::riesz(1.0).unwrap().smoothed_value(0.1, 1).is_err());
        assert!(Kernel::log_adjusted(Kernel::riesz(2.0).unwrap())
            .smoothed_value(0.1, 2)
            .is_err());
    }

    #[test]
    fn smooth_branches() {
        let k = Kernel::riesz(1.0).unwrap().smooth(0.5, 3).unwrap();
        assert_relative_eq!(k.eval(0.75), 4.0 / 3.0, max_relative = 1e-15);
        assert_eq!(k.eval(0.0), k.eval(0.25));
        assert!(k.is_bounded());
        let mut prev = f64::INFINITY;
        for i in 0..1000 {
            let v = k.eval(i as f64 * 0.004);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn dyadic_increments() {
        assert_eq!(Kernel::riesz(1.0).unwrap().dyadic_increment(1), 1.0);
        assert_eq!(Kernel::riesz(2.0).unwrap().dyadic_increment(2), 12.0);
        let c = Kernel::constant(4.0).unwrap();
        for n in 0..10 {
            assert_eq!(c.dyadic_increment(n), 0.0);
        }
    }

    #[test]
    fn dyadic_increments_telescope() {
        let k = Kernel::riesz(0.7).unwrap();
        let (m, top) = (3usize, 25usize);
        let sum: f64 = (m..=top).map(|n| k.dyadic_increment(n)).sum();
        let exact = k.eval(0.5f64.powi(top as i32)) - k.eval(0.5f64.powi(m as i32 - 1));
        assert_relative_eq!(sum, exact, max_relative = 1e-9);
    }

    #[test]
    fn table_interpolates() {
        let k = Kernel::table(vec![(0.0, 4.0), (1.0, 2.0), (2.0, 0.0)]).unwrap();
        assert_eq!(k.eval(0.5), 3.0);
        assert_eq!(k.eval(1.5), 1.0);
        assert_eq!(k.eval(9.0), 0.0);
        assert!(Kernel::table(vec![(0.0, 1.0), (1.0, 2.0)]).is_err());
        assert!(Kernel::table(vec![(0.5, 1.0)]).is_err());
    }

    #[test]
    fn spec_round_trip() {
        for s in [
            "riesz:alpha=0.5",
            "stable:alpha=1,d=3",
            "logadj:riesz:alpha=1",
            "gauss:sigma=0.25",
        ] {
            let k = parse_kernel_spec(s, 3).unwrap();
            assert_eq!(k.to_string(), s);
        }
        let k = parse_kernel_spec("smooth:eps=0.01:riesz:alpha=1", 3).unwrap();
        assert_eq!(k.to_string(), "smooth:eps=0.01,d=3:riesz:alpha=1");
        assert_eq!(parse_kernel_spec(&k.to_string(), 2).unwrap(), k);
    }

    #[test]
    fn spec_errors_name_the_token() {
        let cases = [
            ("riesz:beta=1", "beta=1"),
            ("riesz:alpha=x", "alpha=x"),
            ("riesz:alpha=-1", "alpha=-1"),
            ("bogus:alpha=1", "bogus"),
            ("riesz:alpha=1:extra", "extra"),
            ("smooth:eps=0.1:riesz", "riesz"),
        ];
        for (spec, token) in cases {
            match parse_kernel_spec(spec, 3) {
                Err(Error::KernelSpec { token: t, .. }) => assert_eq!(t, token, "{spec}"),
                other => panic!("{spec}: {other:?}"),
            }
        }
    }
    /// Defining integral evaluated on [0, 1] after s = ε·u^k, with k chosen
    /// so the integrand vanishes at u = 0 instead of blowing up.
    fn average_by_quadrature(k: &Kernel, eps: f64, dim: usize, singularity: f64) -> f64 {
        let d = dim as f64;
        let power = (2.0 / (d - singularity)).ceil().max(1.0);
        // The log adjustment has a kink at s = 1.
        let mut breaks = vec![0.0, 1.0];
        if eps > 1.0 {
            breaks.insert(1, eps.recip().powf(power.recip()));
        }
        let r = quadrature::integrate_with_breaks(
            |u| {
                let s = eps * u.powf(power);
                if s == 0.0 {
                    return 0.0;
                }
                // Past overflow of f the remaining mass is below 1e-16 relative
                // for the parameter ranges exercised here.
                let v = k.eval(s) * s.powi(dim as i32 - 1) * eps * power * u.powf(power - 1.0);
                if v.is_finite() {
                    v
                } else {
                    0.0
                }
            },
            &breaks,
            Tolerance::relative(1e-13),
        )
        .unwrap();
        d * eps.powf(-d) * r.value
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(50))]

        #[test]
        fn closed_forms_match_quadrature(
            dim in 1usize..=5,
            frac in 0.1f64..0.9,
            eps in 1e-3f64..2.0,
            stable in proptest::bool::ANY,
        ) {
            let k = if stable && dim >= 3 {
                Kernel::stable_potential(2.0 * frac, dim).unwrap()
            } else {
                Kernel::riesz(frac * dim as f64).unwrap()
            };
            let closed = k.smoothed_value(eps, dim).unwrap();
            let oracle = average_by_quadrature(&k, eps, dim, k.singularity_exponent());
            proptest::prop_assert!((closed - oracle).abs() <= 1e-10 * oracle, "{k}: {closed} vs {oracle}");
        }

        #[test]
        fn generic_smoothing_matches_quadrature(
            dim in 1usize..=4,
            eps in 1e-2f64..1.5,
            alpha in 0.1f64..0.9,
        ) {
            let k = Kernel::log_adjusted(Kernel::riesz(alpha).unwrap());
            let via_substitution = k.smoothed_value(eps, dim).unwrap();
            let oracle = average_by_quadrature(&k, eps, dim, alpha);
            proptest::prop_assert!((via_substitution - oracle).abs() <= 1e-9 * oracle, "{via_substitution} vs {oracle}");
        }

        #[test]
        fn every_family_is_decreasing(
            mut grid in proptest::collection::vec(1e-6f64..4.0, 2..60),
            alpha in 0.1f64..1.9,
            eps in 1e-3f64..1.0,
        ) {
            grid.sort_by(f64::total_cmp);
            let riesz = Kernel::riesz(alpha).unwrap();
            let kernels = [
                riesz.clone(),
                Kernel::stable_potential(alpha, 3).unwrap(),
                Kernel::log_adjusted(riesz.clone()),
                riesz.smooth(eps, 3).unwrap(),
                Kernel::log_adjusted(riesz.clone()).smooth(eps, 2).unwrap(),
                Kernel::gaussian(eps).unwrap(),
            ];
            for k in &kernels {
                for w in grid.windows(2) {
                    let (a, b) = (k.eval(w[0]), k.eval(w[1]));
                    proptest::prop_assert!(b >= 0.0);
                    proptest::prop_assert!(a >= b - 1e-12 * a.abs(), "{k} at {:?}", w);
                }
            }
        }

        #[test]
        fn smoothing_agrees_above_eps(r in 0.0f64..4.0, eps in 1e-3f64..1.0, alpha in 0.1f64..2.5) {
            let base = Kernel::riesz(alpha).unwrap();
            let k = base.smooth(eps, 3).unwrap();
            if r >= eps {
                proptest::prop_assert_eq!(k.eval(r), base.eval(r));
            } else {
                proptest::prop_assert_eq!(k.eval(r), k.value_at_zero());
            }
        }
    }
}
