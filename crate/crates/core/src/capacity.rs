//! Capacities `Cap_f(Λ) = [inf_{ν(Λ)=1} E_f(ν)]^{-1}`: the box-count upper
//! bound, closed-form references for the unit square and the middle-half
//! Cantor set, a Frank–Wolfe equilibrium solver for finite point sets, the
//! sausage bracket and hitting-probability brackets.
//!
//! Absolute constants in the `≍` relations are unknown; every estimate here
//! sets them to one.

use std::fmt;
use std::ops::RangeInclusive;

use crate::dyadic::DyadicHistogram;
use crate::energy::dyadic_energy;
use crate::error::{invalid, Error, Result};
use crate::kernel::Kernel;
use crate::measure::squared_distance;
use crate::numeric::pairwise_sum;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    UpperBound,
    Equilibrium,
    ReferenceSquare,
    ReferenceCantor,
    Sausage,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::UpperBound => "upper-bound",
            Method::Equilibrium => "equilibrium",
            Method::ReferenceSquare => "reference-square",
            Method::ReferenceCantor => "reference-cantor",
            Method::Sausage => "sausage",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub iterations: usize,
    /// Final Frank–Wolfe duality gap.
    pub gap: f64,
    /// Finest dyadic level used.
    pub truncation_level: usize,
    /// The defining series does not converge; the capacity is reported as 0.
    pub divergent: bool,
    /// The energy omitted the sub-resolution tail (`f(0) = ∞`).
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityEstimate {
    pub value: f64,
    pub method: Method,
    pub kernel: String,
    pub diagnostics: Diagnostics,
}

/// `[Σ_{n ∈ levels} (f(2^{-n}) - f(2^{1-n})) / N_n]^{-1}`, where
/// `box_counts[n] = N_n`. Infinite if every increment vanishes.
pub fn capacity_upper_bound(
    box_counts: &[usize],
    k: &Kernel,
    levels: RangeInclusive<usize>,
) -> Result<CapacityEstimate> {
    if levels.is_empty() {
        return Err(invalid("levels", "empty level range"));
    }
    let mut terms = Vec::new();
    for n in levels.clone() {
        let count = *box_counts
            .get(n)
            .ok_or_else(|| invalid("box_counts", format!("no box count for level {n}")))?;
        if count == 0 {
            return Err(invalid("box_counts", format!("N_{n} = 0")));
        }
        terms.push(k.dyadic_increment(n) / count as f64);
    }
    Ok(CapacityEstimate {
        value: 1.0 / pairwise_sum(&terms),
        method: Method::UpperBound,
        kernel: k.to_string(),
        diagnostics: Diagnostics {
            truncation_level: *levels.end(),
            ..Default::default()
        },
    })
}

/// `[Σ_{n=0}^{n_max} (f(2^{-n}) - f(2^{1-n}))·weight(n)]^{-1}`, flagged
/// divergent (value 0) when the terms stop decaying at the finest levels.
fn reference_capacity(k: &Kernel, n_max: usize, weight: impl Fn(usize) -> f64, method: Method) -> CapacityEstimate {
    let terms: Vec<f64> = (0..=n_max).map(|n| k.dyadic_increment(n) * weight(n)).collect();
    let sum = pairwise_sum(&terms);
    let tail_flat = n_max >= 2 && {
        let (a, b) = (terms[n_max - 1], terms[n_max]);
        b > 0.0 && b >= a * (1.0 - 1e-12)
    };
    let divergent = !sum.is_finite() || tail_flat;
    CapacityEstimate {
        value: if divergent { 0.0 } else { 1.0 / sum },
        method,
        kernel: k.to_string(),
        diagnostics: Diagnostics {
            truncation_level: n_max,
            divergent,
            ..Default::default()
        },
    }
}

/// Capacity of `[0,1]²` up to constants: weights `4^{-n}`.
pub fn reference_square_capacity(k: &Kernel, n_max: usize) -> CapacityEstimate {
    reference_capacity(k, n_max, |n| 0.25f64.powi(n as i32), Method::ReferenceSquare)
}

/// Capacity of the middle-half Cantor set up to constants: weights `2^{-n/2}`.
pub fn reference_cantor_capacity(k: &Kernel, n_max: usize) -> CapacityEstimate {
    reference_capacity(k, n_max, |n| 0.5f64.powf(n as f64 / 2.0), Method::ReferenceCantor)
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Relative duality-gap tolerance.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 50_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Equilibrium {
    /// Probability weights on the input points.
    pub weights: Vec<f64>,
    /// `Σ_ij w_i w_j f(|x_i - x_j|)`.
    pub energy: f64,
    /// Frank–Wolfe duality gap `∇E·(w - s)`, an upper bound on `E - E_min`.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Smallest `dᵀKd / |d|²` over the search directions; negative values
    /// expose an indefinite Gram matrix.
    pub min_rayleigh: f64,
}

impl Equilibrium {
    pub fn capacity(&self, k: &Kernel) -> CapacityEstimate {
        CapacityEstimate {
            value: 1.0 / self.energy,
            method: Method::Equilibrium,
            kernel: k.to_string(),
            diagnostics: Diagnostics {
                iterations: self.iterations,
                gap: self.gap,
                ..Default::default()
            },
        }
    }
}

/// Kernel matrix access, dense when it fits in 2^24 entries.
struct Gram<'a> {
    dim: usize,
    coords: &'a [f64],
    kernel: &'a Kernel,
    dense: Option<Vec<f64>>,
    n: usize,
}

impl<'a> Gram<'a> {
    fn new(dim: usize, coords: &'a [f64], kernel: &'a Kernel) -> Self {
        let n = coords.len() / dim;
        let dense = (n * n <= 1 << 24).then(|| {
            let mut g = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let v = kernel.eval(
                        squared_distance(&coords[i * dim..(i + 1) * dim], &coords[j * dim..(j + 1) * dim]).sqrt(),
                    );
                    g[i * n + j] = v;
                    g[j * n + i] = v;
                }
            }
            g
        });
        Self {
            dim,
            coords,
            kernel,
            dense,
            n,
        }
    }

    fn column(&self, j: usize, out: &mut [f64]) {
        match &self.dense {
            Some(g) => out.copy_from_slice(&g[j * self.n..(j + 1) * self.n]),
            None => {
                let xj = &self.coords[j * self.dim..(j + 1) * self.dim];
                for (i, o) in out.iter_mut().enumerate() {
                    *o = self
                        .kernel
                        .eval(squared_distance(&self.coords[i * self.dim..(i + 1) * self.dim], xj).sqrt());
                }
            }
        }
    }

    fn diag(&self) -> f64 {
        self.kernel.value_at_zero()
    }

    fn apply(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        let mut col = vec![0.0; self.n];
        for (j, &wj) in w.iter().enumerate() {
            if wj != 0.0 {
                self.column(j, &mut col);
                for (o, c) in out.iter_mut().zip(&col) {
                    *o += wj * c;
                }
            }
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let p: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    pairwise_sum(&p)
}

/// Minimizes `wᵀKw` over the probability simplex on the given points by
/// Frank–Wolfe with away steps and exact line search, starting from uniform
/// weights. Stops once the duality gap is at most `tol·energy`.
pub fn equilibrium_measure(dim: usize, coords: &[f64], k: &Kernel, opts: SolverOptions) -> Result<Equilibrium> {
    if dim == 0 || !coords.len().is_multiple_of(dim) {
        return Err(invalid("coords", "length is not a multiple of the dimension"));
    }
    let n = coords.len() / dim;
    if n == 0 {
        return Err(Error::EmptyPointSet);
    }
    if !k.is_bounded() {
        return Err(invalid(
            "kernel",
            format!("{k} is infinite at 0; smooth it at the grid scale first"),
        ));
    }
    let gram = Gram::new(dim, coords, k);
    let diag = gram.diag();
    let mut w = vec![1.0 / n as f64; n];
    let mut kw = gram.apply(&w);
    let mut energy = dot(&w, &kw);
    let mut col = vec![0.0; n];
    let mut min_rayleigh = f64::INFINITY;
    let mut gap = f64::INFINITY;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        if iterations > 0 && iterations % 1000 == 0 {
            kw = gram.apply(&w);
            energy = dot(&w, &kw);
        }
        let (s, kws) = kw
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, &v)| (i, v))
            .expect("n ≥ 1");
        let (a, kwa) = kw
            .iter()
            .enumerate()
            .filter(|(i, _)| w[*i] > 0.0)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, &v)| (i, v))
            .expect("some weight is positive");
        // Gradients are 2Kw; gaps are reported for E itself.
        gap = 2.0 * (energy - kws);
        if gap <= opts.tol * energy {
            return Ok(Equilibrium {
                weights: w,
                energy,
                gap: gap.max(0.0),
                iterations,
                converged: true,
                min_rayleigh,
            });
        }
        let away_gap = 2.0 * (kwa - energy);
        iterations += 1;
        if gap >= away_gap {
            // w ← (1-γ)w + γ e_s
            let slope = kws - energy;
            let curvature = diag - 2.0 * kws + energy;
            let norm2 = dot(&w, &w) - 2.0 * w[s] + 1.0;
            if norm2 > 0.0 {
                min_rayleigh = min_rayleigh.min(curvature / norm2);
            }
            let gamma = if curvature > 0.0 {
                (-slope / curvature).clamp(0.0, 1.0)
            } else {
                1.0
            };
            gram.column(s, &mut col);
            for i in 0..n {
                w[i] *= 1.0 - gamma;
                kw[i] = (1.0 - gamma) * kw[i] + gamma * col[i];
            }
            w[s] += gamma;
        } else {
            // w ← (1+γ)w - γ e_a, keeping w_a ≥ 0
            let gamma_max = w[a] / (1.0 - w[a]);
            let slope = energy - kwa;
            let curvature = energy - 2.0 * kwa + diag;
            let norm2 = dot(&w, &w) - 2.0 * w[a] + 1.0;
            if norm2 > 0.0 {
                min_rayleigh = min_rayleigh.min(curvature / norm2);
            }
            let gamma = if curvature > 0.0 {
                (-slope / curvature).clamp(0.0, gamma_max)
            } else {
                gamma_max
            };
            gram.column(a, &mut col);
            for i in 0..n {
                w[i] *= 1.0 + gamma;
                kw[i] = (1.0 + gamma) * kw[i] - gamma * col[i];
            }
            w[a] -= gamma;
            if gamma == gamma_max {
                w[a] = 0.0;
            }
        }
        w.iter_mut().for_each(|x| *x = x.max(0.0));
        energy = dot(&w, &kw);
    }
    Ok(Equilibrium {
        weights: w,
        energy,
        gap,
        iterations,
        converged: false,
        min_rayleigh,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SausageCapacity {
    /// `1 / E_{f_ε}` of the normalized binned measure (occupation route).
    pub lower: f64,
    /// Box-count upper bound for `f_ε`.
    pub upper: f64,
    pub kernel: String,
}

/// Two-sided estimate of `Cap_{f_ε}(Λ) ≍ Cap_f(Λ_ε)` for the support `Λ` of
/// a binned measure, in the histogram's own length units.
///
/// The lower end is `m² / E_{f_ε}` by the dyadic energy; the upper end is
/// `[f_ε(2s) + Σ_n (f_ε(s 2^{-n}) - f_ε(s 2^{1-n})) / N_n]^{-1}` over the
/// histogram levels, where `s` is the level-0 cube side. Requires
/// `ε ≥ 2·s·2^{-n_max}` so that the smoothed increments vanish below the
/// finest level.
pub fn sausage_capacity(h: &DyadicHistogram, k: &Kernel, eps: f64) -> Result<SausageCapacity> {
    let finest = h.side() * 0.5f64.powi(h.n_max() as i32);
    if eps < 2.0 * finest {
        return Err(Error::Resolution(format!(
            "eps = {eps} must be ≥ 2·(finest cube side) = {}",
            2.0 * finest
        )));
    }
    let smoothed = k.smooth(eps, h.dim())?;
    let mass = h.total_mass();
    let energy = dyadic_energy(h, &smoothed)?;
    let mut terms = vec![smoothed.eval(2.0 * h.side())];
    for n in 0..=h.n_max() {
        let inc = smoothed.dyadic_increment_scaled(n, h.side());
        if inc > 0.0 {
            terms.push(inc / h.box_count(n)? as f64);
        }
    }
    Ok(SausageCapacity {
        lower: mass * mass / energy.value,
        upper: 1.0 / pairwise_sum(&terms),
        kernel: smoothed.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HittingBracket {
    pub lower: f64,
    pub upper: f64,
    /// The upper slope was infinite (start on the set) and the bound clamps to 1.
    pub clamped: bool,
}

/// `(k_lo·cap, min(1, k_hi·cap))`.
pub fn hitting_probability_bracket(cap: f64, k_lo: f64, k_hi: f64) -> Result<HittingBracket> {
    if !(k_lo > 0.0 && k_lo <= k_hi) {
        return Err(invalid("k_lo", "need 0 < k_lo ≤ k_hi"));
    }
    if !(cap >= 0.0) {
        return Err(invalid("cap", "capacity must be nonnegative"));
    }
    if k_hi.is_infinite() {
        return Ok(HittingBracket {
            lower: (k_lo * cap).min(1.0),
            upper: 1.0,
            clamped: true,
        });
    }
    Ok(HittingBracket {
        lower: (k_lo * cap).min(1.0),
        upper: (k_hi * cap).min(1.0),
        clamped: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::WeightedMeasure;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn upper_bound_of_a_point() {
        let k = Kernel::riesz(1.0).unwrap().smooth(1e-4, 2).unwrap();
        let counts = vec![1usize; 11];
        let cap = capacity_upper_bound(&counts, &k, 1..=10).unwrap();
        assert_relative_eq!(
            cap.value,
            1.0 / (k.eval(0.5f64.powi(10)) - k.eval(1.0)),
            max_relative = 1e-12
        );
        let doubled: Vec<usize> = counts.iter().map(|c| 2 * c).collect();
        let cap2 = capacity_upper_bound(&doubled, &k, 1..=10).unwrap();
        assert_relative_eq!(cap2.value, 2.0 * cap.value, max_relative = 1e-12);
        assert!(capacity_upper_bound(&counts, &k, std::ops::RangeInclusive::new(3, 2)).is_err());
        assert!(capacity_upper_bound(&[1, 0], &k, 0..=1).is_err());
    }

    #[test]
    fn upper_bound_on_square_counts() {
        let k = Kernel::riesz(1.5).unwrap();
        let counts: Vec<usize> = (0..=20).map(|n| 1usize << (2 * n)).collect();
        let cap = capacity_upper_bound(&counts, &k, 0..=20).unwrap();
        // Σ (2^{1.5n} - 2^{1.5(n-1)}) 4^{-n} summed independently as a geometric series.
        let r = 2f64.powf(-0.5);
        let series = (1.0 - 2f64.powf(-1.5)) * (1.0 - r.powi(21)) / (1.0 - r);
        assert_relative_eq!(cap.value, 1.0 / series, max_relative = 1e-12);
        let reference = reference_square_capacity(&k, 20);
        assert_relative_eq!(cap.value, reference.value, max_relative = 1e-12);
    }

    #[test]
    fn square_references() {
        let cap = reference_square_capacity(&Kernel::riesz(1.0).unwrap(), 60);
        assert!((cap.value - 1.0).abs() <= 1e-12);
        for n_max in [10, 20, 40] {
            let cap = reference_square_capacity(&Kernel::riesz(2.0).unwrap(), n_max);
            assert!(cap.diagnostics.divergent && cap.value == 0.0);
            let cap = reference_square_capacity(&Kernel::riesz(1.9).unwrap(), n_max);
            assert!(!cap.diagnostics.divergent && cap.value > 0.0);
            let cap = reference_square_capacity(&Kernel::riesz(2.5).unwrap(), n_max);
            assert!(cap.diagnostics.divergent);
        }
        let flat = reference_square_capacity(&Kernel::constant(1.0).unwrap(), 10);
        assert!(flat.value.is_infinite());
    }

    #[test]
    fn cantor_references() {
        for n_max in [10, 20, 40] {
            let cap = reference_cantor_capacity(&Kernel::riesz(0.5).unwrap(), n_max);
            assert!(cap.diagnostics.divergent && cap.value == 0.0);
            let cap = reference_cantor_capacity(&Kernel::riesz(0.25).unwrap(), n_max);
            assert!(!cap.diagnostics.divergent && cap.value > 0.0);
        }
    }

    #[test]
    fn two_point_equilibrium() {
        let k = Kernel::riesz(0.5).unwrap().smooth(0.1, 1).unwrap();
        let eq = equilibrium_measure(1, &[0.0, 0.7], &k, SolverOptions::default()).unwrap();
        assert!(eq.converged);
        assert!((eq.weights[0] - 0.5).abs() < 1e-8);
        assert_relative_eq!(eq.energy, (k.eval(0.0) + k.eval(0.7)) / 2.0, max_relative = 1e-8);
    }

    #[test]
    fn three_point_equilibrium_matches_grid_search() {
        // The d = 1 plateau of riesz(1) is infinite; the collinear points sit in the plane.
        let k = Kernel::riesz(1.0).unwrap().smooth(1.0 / 16.0, 2).unwrap();
        let pts: [f64; 3] = [0.0, 0.5, 1.0];
        let planar = [0.0, 0.0, 0.5, 0.0, 1.0, 0.0];
        let eq = equilibrium_measure(2, &planar, &k, SolverOptions::default()).unwrap();
        let energy = |w: [f64; 3]| {
            let mut e = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    e += w[i] * w[j] * k.eval((pts[i] - pts[j]).abs());
                }
            }
            e
        };
        let steps = 1000;
        let mut best = (f64::INFINITY, [0.0; 3]);
        for i in 0..=steps {
            for j in 0..=steps - i {
                let w = [
                    i as f64 / steps as f64,
                    j as f64 / steps as f64,
                    (steps - i - j) as f64 / steps as f64,
                ];
                let e = energy(w);
                if e < best.0 {
                    best = (e, w);
                }
            }
        }
        for i in 0..3 {
            assert!(
                (eq.weights[i] - best.1[i]).abs() < 5e-3,
                "{:?} {:?}",
                eq.weights,
                best.1
            );
        }
        assert!(eq.gap <= 1e-6 * eq.energy);
    }

    #[test]
    fn solver_rejects_unbounded_kernels() {
        assert!(equilibrium_measure(1, &[0.0, 1.0], &Kernel::riesz(0.5).unwrap(), SolverOptions::default()).is_err());
        assert!(matches!(
            equilibrium_measure(1, &[], &Kernel::constant(1.0).unwrap(), SolverOptions::default()),
            Err(Error::EmptyPointSet)
        ));
    }

    #[test]
    fn hitting_brackets() {
        let b = hitting_probability_bracket(0.0, 1.0, 2.0).unwrap();
        assert_eq!((b.lower, b.upper), (0.0, 0.0));
        let b = hitting_probability_bracket(0.3, 2.0, 2.0).unwrap();
        assert_eq!((b.lower, b.upper), (0.6, 0.6));
        let b = hitting_probability_bracket(0.3, 5.0, 5.0).unwrap();
        assert_eq!(b.upper, 1.0);
        let b = hitting_probability_bracket(0.3, 1.0, f64::INFINITY).unwrap();
        assert!(b.clamped && b.upper == 1.0);
        assert!(hitting_probability_bracket(0.3, 0.0, 1.0).is_err());
        assert!(hitting_probability_bracket(0.3, 2.0, 1.0).is_err());
    }

    fn random_cloud(seed: u64, n: usize) -> WeightedMeasure {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..3 * n).map(|_| 0.3 + 0.4 * rng.random::<f64>()).collect();
        WeightedMeasure::uniform(3, pts, 1.0).unwrap()
    }

    #[test]
    fn sausage_bracket_is_ordered_and_monotone() {
        let m = random_cloud(1, 500);
        let h = DyadicHistogram::build(&m, 8).unwrap();
        let k = Kernel::stable_potential(1.0, 3).unwrap();
        let mut prev = 0.0;
        for eps in [1.0 / 64.0, 1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0] {
            let s = sausage_capacity(&h, &k, eps).unwrap();
            assert!(s.lower <= s.upper * (1.0 + 1e-12), "{s:?}");
            assert!(s.lower >= prev);
            prev = s.lower;
        }
        assert!(matches!(
            sausage_capacity(&h, &k, 1.0 / 512.0),
            Err(Error::Resolution(_))
        ));
    }

    #[test]
    fn sausage_of_a_small_set_is_flat() {
        // ε beyond the set's diameter: both ends see f_ε ≈ f̄(ε) on the set.
        let m = random_cloud(2, 200);
        let h = DyadicHistogram::build(&m, 6).unwrap();
        let k = Kernel::stable_potential(1.0, 3).unwrap();
        let eps = 1.0;
        let s = sausage_capacity(&h, &k, eps).unwrap();
        let flat = 1.0 / k.smoothed_value(eps, 3).unwrap();
        assert!(s.lower >= flat / 4.0 && s.lower <= flat * 4.0, "{s:?} {flat}");
        assert!(s.upper >= flat / 4.0 && s.upper <= flat * 4.0, "{s:?} {flat}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn equilibrium_invariants(seed in any::<u64>(), n in 2usize..40, shift in -2.0f64..2.0, angle in 0.0f64..std::f64::consts::TAU) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<f64> = (0..2 * n).map(|_| rng.random::<f64>()).collect();
            let k = Kernel::riesz(1.0).unwrap().smooth(0.05, 2).unwrap();
            let opts = SolverOptions { tol: 1e-9, max_iters: 200_000 };
            let eq = equilibrium_measure(2, &pts, &k, opts).unwrap();
            prop_assert!(eq.converged);
            let uniform = crate::energy::direct_energy(&WeightedMeasure::uniform(2, pts.clone(), 1.0).unwrap(), &k);
            prop_assert!(eq.energy <= uniform * (1.0 + 1e-12));
            prop_assert!((eq.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);

            // Rigid motion and relabeling.
            let (c, s) = (angle.cos(), angle.sin());
            let mut moved: Vec<f64> = pts
                .chunks_exact(2)
                .flat_map(|p| [c * p[0] - s * p[1] + shift, s * p[0] + c * p[1] - shift])
                .collect();
            let len = moved.len();
            moved.rotate_left(2 * (n / 2));
            prop_assert_eq!(moved.len(), len);
            let eq2 = equilibrium_measure(2, &moved, &k, opts).unwrap();
            prop_assert!((eq.energy - eq2.energy).abs() <= 1e-8 * eq.energy);
        }
    }
}
