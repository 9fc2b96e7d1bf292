//! Brownian and symmetric α-stable path sampling, zero sets, local times and
//! occupation measures.
//!
//! Time always runs on a uniform grid `t_i = i·horizon/n_steps`. Stable
//! paths are built by subordination: `X_t = W(2 S_t)` for an independent
//! Brownian motion `W` and an (α/2)-stable subordinator `S` with
//! `E e^{-u S_t} = e^{-t u^{α/2}}`, which gives `E e^{iλ·X_t} = e^{-t|λ|^α}`.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp1, Open01, StandardNormal};

use crate::error::{invalid, Result};
use crate::measure::WeightedMeasure;

pub use crate::numeric::replica_seed;

/// The random generator behind every sampler in the crate.
pub type PathRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> PathRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Process {
    Brownian,
    Stable { alpha: f64 },
}

#[derive(Debug, Clone)]
pub struct PathSample {
    dim: usize,
    n_steps: usize,
    horizon: f64,
    positions: Vec<f64>,
    process: Process,
    seed: u64,
}

impl PathSample {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn process(&self) -> Process {
        self.process
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.horizon / self.n_steps as f64
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    /// All `n_steps + 1` positions, flattened.
    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn start(&self) -> &[f64] {
        self.position(0)
    }

    /// Every `k`-th grid point; `k` must divide `n_steps`.
    pub fn subsample(&self, k: usize) -> Result<PathSample> {
        if k == 0 || !self.n_steps.is_multiple_of(k) {
            return Err(invalid("k", format!("{k} does not divide n_steps = {}", self.n_steps)));
        }
        let positions = self
            .positions
            .chunks_exact(self.dim)
            .step_by(k)
            .flatten()
            .copied()
            .collect();
        Ok(PathSample {
            n_steps: self.n_steps / k,
            positions,
            ..self.clone()
        })
    }

    /// Writes `t,x1,...,xd` rows with a header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "t")?;
        for k in 1..=self.dim {
            write!(out, ",x{k}")?;
        }
        writeln!(out)?;
        for i in 0..=self.n_steps {
            write!(out, "{}", self.time(i))?;
            for x in self.position(i) {
                write!(out, ",{x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

fn check_common(dim: usize, n_steps: usize, horizon: f64) -> Result<()> {
    if dim == 0 {
        return Err(invalid("dim", "must be at least 1"));
    }
    if n_steps == 0 {
        return Err(invalid("n_steps", "must be at least 1"));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid("horizon", "must be positive and finite"));
    }
    Ok(())
}

/// Brownian motion from the origin with `n_steps` Gaussian increments of
/// per-coordinate variance `horizon / n_steps`.
pub fn sample_brownian(dim: usize, n_steps: usize, horizon: f64, seed: u64) -> Result<PathSample> {
    check_common(dim, n_steps, horizon)?;
    let mut rng = rng_from_seed(seed);
    let sd = (horizon / n_steps as f64).sqrt();
    let mut positions = vec![0.0; (n_steps + 1) * dim];
    for i in 1..=n_steps {
        let (prev, cur) = positions.split_at_mut(i * dim);
        let prev = &prev[(i - 1) * dim..];
        for k in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            cur[k] = prev[k] + sd * z;
        }
    }
    Ok(PathSample {
        dim,
        n_steps,
        horizon,
        positions,
        process: Process::Brownian,
        seed,
    })
}

/// A draw of `S_1` for the β-stable subordinator with `E e^{-uS_1} = e^{-u^β}`,
/// `0 < β < 1`, by Kanter's representation `(A(U)/E)^{(1-β)/β}`.
pub fn positive_stable<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> f64 {
    let u: f64 = PI * rng.sample::<f64, _>(Open01);
    let e: f64 = rng.sample(Exp1);
    let a = (beta * u).sin().powf(beta / (1.0 - beta)) * ((1.0 - beta) * u).sin() / u.sin().powf(1.0 / (1.0 - beta));
    (a / e).powf((1.0 - beta) / beta)
}

/// Adds one increment of the symmetric α-stable process over time `dt` to `x`.
pub fn stable_increment<R: Rng + ?Sized>(alpha: f64, dt: f64, x: &mut [f64], rng: &mut R) {
    let clock = if alpha == 2.0 {
        dt
    } else {
        dt.powf(2.0 / alpha) * positive_stable(alpha / 2.0, rng)
    };
    let sd = (2.0 * clock).sqrt();
    for xk in x.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *xk += sd * z;
    }
}

/// Symmetric α-stable process with `E e^{iλ·(X_t - x)} = e^{-t|λ|^α}`,
/// started at `start`.
pub fn sample_stable(
    alpha: f64,
    dim: usize,
    n_steps: usize,
    horizon: f64,
    start: &[f64],
    seed: u64,
) -> Result<PathSample> {
    check_common(dim, n_steps, horizon)?;
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(invalid(
            "alpha",
            format!("stable index must lie in (0, 2], got {alpha}"),
        ));
    }
    if start.len() != dim {
        return Err(invalid(
            "start",
            format!("expected {dim} coordinates, got {}", start.len()),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let dt = horizon / n_steps as f64;
    let mut positions = Vec::with_capacity((n_steps + 1) * dim);
    positions.extend_from_slice(start);
    let mut x = start.to_vec();
    for _ in 0..n_steps {
        stable_increment(alpha, dt, &mut x, &mut rng);
        positions.extend_from_slice(&x);
    }
    Ok(PathSample {
        dim,
        n_steps,
        horizon,
        positions,
        process: Process::Stable { alpha },
        seed,
    })
}

/// Uniform point on the unit sphere `S^{d-1}`, written into `out`.
pub fn uniform_direction<R: Rng + ?Sized>(out: &mut [f64], rng: &mut R) {
    loop {
        let mut norm2 = 0.0;
        for x in out.iter_mut() {
            *x = rng.sample(StandardNormal);
            norm2 += *x * *x;
        }
        if norm2 > 0.0 {
            let inv = norm2.sqrt().recip();
            out.iter_mut().for_each(|x| *x *= inv);
            return;
        }
    }
}

/// Exact sampler for the position at which a symmetric α-stable process
/// (α < 2) started at the centre of a ball leaves it.
///
/// The exit point is isotropic and `|X_τ - x| / r = (1 - V)^{-1/2}` with
/// `V ~ Beta(1 - α/2, α/2)`, which is the radial part of the
/// Blumenthal–Getoor–Ray exit density `∝ r^α (|y|² - r²)^{-α/2} |y|^{-d}`.
#[derive(Debug, Clone)]
pub struct BallExit {
    radial: Beta<f64>,
}

impl BallExit {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(invalid("alpha", "ball exits are jumps only for 0 < α < 2"));
        }
        let radial = Beta::new(1.0 - alpha / 2.0, alpha / 2.0).map_err(|e| invalid("alpha", e.to_string()))?;
        Ok(Self { radial })
    }

    /// Moves `x` to the exit point of the ball of radius `r` centred at `x`.
    pub fn jump<R: Rng + ?Sized>(&self, x: &mut [f64], r: f64, scratch: &mut [f64], rng: &mut R) {
        let v = self.radial.sample(rng).min(1.0 - f64::EPSILON);
        let rho = r / (1.0 - v).sqrt();
        uniform_direction(scratch, rng);
        for (xk, u) in x.iter_mut().zip(scratch.iter()) {
            *xk += rho * u;
        }
    }
}

/// Zeros and excursion intervals of a one-dimensional path.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroSetSample {
    horizon: f64,
    zeros: Vec<f64>,
    intervals: Vec<(f64, f64)>,
}

impl ZeroSetSample {
    /// Sorted detected zero times.
    pub fn zeros(&self) -> &[f64] {
        &self.zeros
    }

    /// Maximal open intervals of `[0, horizon]` free of detected zeros.
    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of excursion intervals longer than `delta`.
    pub fn excursion_count(&self, delta: f64) -> usize {
        self.intervals.iter().filter(|(a, b)| b - a > delta).count()
    }
}

/// Zeros of a one-dimensional path: grid points where it vanishes, plus the
/// linearly interpolated crossing inside every step with a sign change.
pub fn zero_set(path: &PathSample) -> Result<ZeroSetSample> {
    if path.dim != 1 {
        return Err(invalid("path", "zero sets need a one-dimensional path"));
    }
    let x = &path.positions;
    let dt = path.step();
    let mut zeros = Vec::new();
    for i in 0..path.n_steps {
        let (a, b) = (x[i], x[i + 1]);
        if a == 0.0 {
            zeros.push(path.time(i));
        } else if a * b < 0.0 {
            zeros.push(path.time(i) + dt * a / (a - b));
        }
    }
    if x[path.n_steps] == 0.0 {
        zeros.push(path.horizon);
    }
    let mut cuts = Vec::with_capacity(zeros.len() + 2);
    cuts.push(0.0);
    cuts.extend_from_slice(&zeros);
    cuts.push(path.horizon);
    let intervals = cuts.windows(2).filter(|w| w[1] > w[0]).map(|w| (w[0], w[1])).collect();
    Ok(ZeroSetSample {
        horizon: path.horizon,
        zeros,
        intervals,
    })
}

/// Occupation-band estimate of local time at zero on the path grid.
#[derive(Debug, Clone)]
pub struct LocalTimeProfile {
    step: f64,
    values: Vec<f64>,
    bandwidth: f64,
}

impl LocalTimeProfile {
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// `ℓ̂(t_i)` for `i = 0..=n_steps`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn horizon(&self) -> f64 {
        self.step * (self.values.len() - 1) as f64
    }

    pub fn total(&self) -> f64 {
        *self.values.last().expect("profile is nonempty")
    }

    /// `ℓ̂(t)`, linearly interpolated and clamped to `[0, horizon]`.
    pub fn at(&self, t: f64) -> f64 {
        let n = self.values.len() - 1;
        let s = (t / self.step).clamp(0.0, n as f64);
        let i = (s.floor() as usize).min(n.saturating_sub(1));
        let frac = s - i as f64;
        if n == 0 {
            return self.values[0];
        }
        self.values[i] + frac * (self.values[i + 1] - self.values[i])
    }

    /// The measure `dℓ̂` on the time axis: an atom of mass `ℓ̂(t_i) - ℓ̂(t_{i-1})`
    /// at `t_{i-1}` for every step where the estimate grows.
    pub fn measure(&self) -> WeightedMeasure {
        let mut coords = Vec::new();
        let mut weights = Vec::new();
        for (i, w) in self.values.windows(2).enumerate() {
            let dl = w[1] - w[0];
            if dl > 0.0 {
                coords.push(i as f64 * self.step);
                weights.push(dl);
            }
        }
        WeightedMeasure::new(1, coords, weights).expect("weights are positive")
    }
}

/// `ℓ̂(t) = (1/2h)·|{s ≤ t : |B_s| ≤ h}|`, counting grid samples `1..=i` in the
/// band times the step.
pub fn local_time_profile(path: &PathSample, bandwidth: f64) -> Result<LocalTimeProfile> {
    if path.dim != 1 {
        return Err(invalid("path", "local time needs a one-dimensional path"));
    }
    if !(bandwidth > 0.0) {
        return Err(invalid("bandwidth", "must be positive"));
    }
    let step = path.step();
    let unit = step / (2.0 * bandwidth);
    let mut values = Vec::with_capacity(path.n_steps + 1);
    values.push(0.0);
    let mut count = 0usize;
    for &x in &path.positions[1..] {
        if x.abs() <= bandwidth {
            count += 1;
        }
        values.push(count as f64 * unit);
    }
    Ok(LocalTimeProfile {
        step,
        values,
        bandwidth,
    })
}

/// Default local-time bandwidth: the diffusive scale `(horizon/n_steps)^{1/2}`.
pub fn default_bandwidth(path: &PathSample) -> f64 {
    path.step().sqrt()
}

/// One atom of weight `horizon/n_steps` at each of `positions[1..=n_steps]`.
pub fn occupation_measure(path: &PathSample) -> WeightedMeasure {
    let coords = path.positions[path.dim..].to_vec();
    WeightedMeasure::new(path.dim, coords, vec![path.step(); path.n_steps]).expect("positions are finite")
}
