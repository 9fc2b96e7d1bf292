//! Globally adaptive Gauss–Kronrod (10/21 point) integration.
//!
//! The error estimate is the raw `|K21 - G10|` difference per interval, which
//! is pessimistic for smooth integrands; the integrator bisects the interval
//! with the largest estimate until the summed estimate meets the tolerance.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_22,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_725,
    0.054_755_896_574_351_995,
    0.075_039_674_810_919_96,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_84,
    0.134_709_217_311_473_34,
    0.142_775_938_577_060_09,
    0.147_739_104_901_338_49,
    0.149_445_554_002_916_9,
];

// Gauss weights for the odd-indexed Kronrod nodes XGK[1], XGK[3], ...
const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_35,
    0.295_524_224_714_752_87,
];

/// Tolerances and limits for the adaptive integrator.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub max_intervals: usize,
}

impl Tolerance {
    pub fn relative(rel: f64) -> Self {
        Self {
            rel,
            abs: 0.0,
            max_intervals: 20_000,
        }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self::relative(1e-10)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[10] * fc;
    let mut gauss = 0.0;
    for j in 0..10 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).abs();
    (value, error)
}

/// Integrates `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Integral> {
    integrate_with_breaks(f, &[a, b], tol)
}

/// Integrates `f` over `[points[0], points[last]]`, seeding the adaptive
/// partition with the given (sorted) break points.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(f: F, points: &[f64], tol: Tolerance) -> Result<Integral> {
    if points.len() < 2 {
        return Err(Error::Quadrature("need at least two break points".into()));
    }
    let mut heap = BinaryHeap::new();
    for w in points.windows(2) {
        if w[1] < w[0] {
            return Err(Error::Quadrature("break points must be sorted".into()));
        }
        if w[1] > w[0] {
            let (value, error) = kronrod21(&f, w[0], w[1]);
            heap.push(Piece {
                a: w[0],
                b: w[1],
                value,
                error,
            });
        }
    }
    loop {
        let (value, error) = heap.iter().fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
        if !value.is_finite() || !error.is_finite() {
            return Err(Error::Quadrature("non-finite integrand value".into()));
        }
        if error <= tol.abs.max(tol.rel * value.abs()) {
            return Ok(Integral {
                value,
                error,
                intervals: heap.len(),
            });
        }
        if heap.len() >= tol.max_intervals {
            return Err(Error::Quadrature(format!(
                "{} intervals exhausted (estimate {value:e}, error {error:e})",
                heap.len()
            )));
        }
        let worst = heap.pop().expect("heap is nonempty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::Quadrature("interval collapsed below precision".into()));
        }
        for (a, b) in [(worst.a, mid), (mid, worst.b)] {
            let (value, error) = kronrod21(&f, a, b);
            heap.push(Piece { a, b, value, error });
        }
    }
}

/// Integrates `f` over `[a, ∞)` through the map `x = a + (1 - u) / u`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, tol: Tolerance) -> Result<Integral> {
    integrate(
        |u: f64| {
            let x = a + (1.0 - u) / u;
            let v = f(x) / (u * u);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        tol,
    )
}

/// Geometric break points `0, scale, 4·scale, 16·scale, …` clipped to `[0, end]`.
/// Useful for integrands with a peak of width `scale` at the origin.
pub fn geometric_breaks(scale: f64, end: f64) -> Vec<f64> {
    let mut pts = vec![0.0];
    let mut x = scale;
    while x < end {
        pts.push(x);
        x *= 4.0;
    }
    pts.push(end);
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let r = integrate(|x| 3.0 * x * x + 2.0 * x + 1.0, 0.0, 2.0, Tolerance::default()).unwrap();
        assert!((r.value - 14.0).abs() < 1e-13);
        let r = integrate(|x| x.powi(20), -1.0, 1.0, Tolerance::default()).unwrap();
        assert!((r.value - 2.0 / 21.0).abs() < 1e-14);
    }

    #[test]
    fn endpoint_singularity() {
        // ∫₀¹ x^{-1/2} dx = 2
        let r = integrate(|x| x.powf(-0.5), 0.0, 1.0, Tolerance::relative(1e-10)).unwrap();
        assert!((r.value - 2.0).abs() < 1e-9, "{}", r.value);
    }

    #[test]
    fn semi_infinite() {
        let r = integrate_to_infinity(|x| (-x).exp(), 0.0, Tolerance::default()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
        let r = integrate_to_infinity(|x| 1.0 / (1.0 + x * x), 0.0, Tolerance::default()).unwrap();
        assert!((r.value - std::f64::consts::FRAC_PI_2).abs() < 1e-10);
    }

    #[test]
    fn narrow_peak_with_breaks() {
        let s = 1e-6;
        let r =
            integrate_with_breaks(|x| s / (s + x).powi(2), &geometric_breaks(s, 1.0), Tolerance::default()).unwrap();
        let exact = 1.0 - s / (s + 1.0);
        assert!((r.value - exact).abs() < 1e-10 * exact);
    }

    #[test]
    fn non_finite_is_an_error() {
        assert!(integrate(|_| f64::NAN, 0.0, 1.0, Tolerance::default()).is_err());
    }
}
