//! Kernel energies `E_f(ν) = Σ_i Σ_j w_i w_j f(|x_i - x_j|)` of atomic
//! measures: the exact double sum, the dyadic decomposition, and a
//! cutoff-accelerated evaluator for the Gaussian self-intersection functional
//! `S_σ = E_{g_σ}(ν)` with `g_σ(r) = exp(-r²/2σ²)`.
//!
//! Every parallel sum partitions its outer index into fixed blocks and
//! reduces the block results in order, so values do not depend on the
//! number of worker threads.

use rayon::prelude::*;
use rustc_hash::FxHashMap;

use crate::dyadic::DyadicHistogram;
use crate::error::{invalid, Error, Result};
use crate::kernel::Kernel;
use crate::measure::{squared_distance, WeightedMeasure};
use crate::numeric::{pairwise_sum, CompensatedSum};
use crate::path::LocalTimeProfile;

const ROW_BLOCK: usize = 64;

/// Exact `Σ_i Σ_j w_i w_j f(|x_i - x_j|)`, diagonal included. `O(N²)`.
///
/// Infinite when `f(0) = ∞` and some weight is positive.
pub fn direct_energy(m: &WeightedMeasure, k: &Kernel) -> f64 {
    let f0 = k.value_at_zero();
    let w = m.weights();
    if f0.is_infinite() && w.iter().any(|&x| x > 0.0) {
        return f64::INFINITY;
    }
    let n = m.len();
    let rows: Vec<usize> = (0..n).collect();
    let blocks: Vec<f64> = rows
        .par_chunks(ROW_BLOCK)
        .map(|block| {
            let mut acc = CompensatedSum::default();
            for &i in block {
                let xi = m.point(i);
                let mut row = CompensatedSum::default();
                for (j, &wj) in w.iter().enumerate().skip(i + 1) {
                    row.add(wj * k.eval(squared_distance(xi, m.point(j)).sqrt()));
                }
                acc.add(w[i] * (w[i] * f0 + 2.0 * row.value()));
            }
            acc.value()
        })
        .collect();
    pairwise_sum(&blocks)
}

/// Exact `S_σ`: the direct energy under `g_σ`.
pub fn gaussian_energy(m: &WeightedMeasure, sigma: f64) -> Result<f64> {
    Ok(direct_energy(m, &Kernel::gaussian(sigma)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DyadicEnergy {
    pub value: f64,
    /// Set when `f(0) = ∞`, so the sub-resolution tail was dropped.
    pub truncated: bool,
}

/// The dyadic form of the energy of a binned measure of mass `m`, with
/// level-0 cube side `s` and finest level `M`:
///
/// `f(2s)·m² + Σ_{n=0}^{M} [f(s 2^{-n}) - f(s 2^{1-n})]·Σ_{Q∈D_n} ν(Q)²
///   + [f(0) - f(s 2^{-M})]·Σ_{Q∈D_M} ν(Q)²`.
///
/// The first term stands for the coarse levels `n < 0` (all mass in one
/// cube, kernel vanishing at infinity) and the last for the levels below the
/// resolution, where every finest cube is treated as a point mass. With this
/// bookkeeping a single atom has dyadic energy exactly `f(0)`.
pub fn dyadic_energy(h: &DyadicHistogram, k: &Kernel) -> Result<DyadicEnergy> {
    let side = h.side();
    let mass = h.total_mass();
    let mut terms = vec![k.eval(2.0 * side) * mass * mass];
    for n in 0..=h.n_max() {
        let inc = k.dyadic_increment_scaled(n, side);
        if inc.is_infinite() {
            return Ok(DyadicEnergy {
                value: f64::INFINITY,
                truncated: false,
            });
        }
        if inc > 0.0 {
            terms.push(inc * h.sum_squares(n)?);
        }
    }
    let f0 = k.value_at_zero();
    let truncated = f0.is_infinite();
    if !truncated {
        let finest = side * 0.5f64.powi(h.n_max() as i32);
        terms.push((f0 - k.eval(finest)) * h.sum_squares(h.n_max())?);
    }
    Ok(DyadicEnergy {
        value: pairwise_sum(&terms),
        truncated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianEnergy {
    pub value: f64,
    /// Upper bound on the mass of the omitted far pairs.
    pub error_bound: f64,
}

/// `S_σ` summed over atom pairs closer than `cutoff·σ` only.
///
/// Atoms are hashed into cells of side `σ`; a pair of cells is visited only
/// if their closest points are within `cutoff·σ`. The omitted pairs carry
/// `g_σ ≤ exp(-cutoff²/2)`, and the reported bound is the cruder
/// `mass²·exp(-(cutoff-1)²/2)`. `resolution` is the discretization scale of
/// the atoms; `σ` below twice that is rejected.
pub fn gaussian_energy_fast(m: &WeightedMeasure, sigma: f64, cutoff: f64, resolution: f64) -> Result<GaussianEnergy> {
    if !(sigma > 0.0) {
        return Err(invalid("sigma", "must be positive"));
    }
    if !(cutoff >= 4.0) {
        return Err(invalid("cutoff", "must be at least 4"));
    }
    if sigma < 2.0 * resolution {
        return Err(Error::Resolution(format!(
            "sigma = {sigma} must be ≥ 2·resolution = {}",
            2.0 * resolution
        )));
    }
    let mass = m.total_mass();
    let error_bound = mass * mass * (-(cutoff - 1.0).powi(2) / 2.0).exp();
    if m.is_empty() {
        return Ok(GaussianEnergy {
            value: 0.0,
            error_bound,
        });
    }
    let grid = CellGrid::new(m, sigma)?;
    let reach = cutoff.ceil() as i64 + 1;
    let offsets = half_shell(m.dim(), reach, cutoff);
    let inv_two_var = 1.0 / (2.0 * sigma * sigma);
    let max_d2 = (cutoff * sigma).powi(2);
    let w = m.weights();

    let blocks: Vec<f64> = grid
        .cells
        .par_chunks(ROW_BLOCK)
        .map(|block| {
            let mut acc = CompensatedSum::default();
            let mut neighbor = vec![0i64; m.dim()];
            for cell in block {
                let own = &grid.order[cell.start..cell.end];
                // Pairs inside the cell, diagonal included.
                for (a, &i) in own.iter().enumerate() {
                    let xi = m.point(i);
                    let mut row = 0.0;
                    for &j in &own[a + 1..] {
                        let d2 = squared_distance(xi, m.point(j));
                        if d2 <= max_d2 {
                            row += w[j] * (-d2 * inv_two_var).exp();
                        }
                    }
                    acc.add(w[i] * (w[i] + 2.0 * row));
                }
                for off in &offsets {
                    for k in 0..neighbor.len() {
                        neighbor[k] = cell.coords[k] + off[k];
                    }
                    let Some(other) = grid.lookup(&neighbor) else {
                        continue;
                    };
                    let theirs = &grid.order[other.0..other.1];
                    let mut cross = 0.0;
                    for &i in own {
                        let xi = m.point(i);
                        let mut row = 0.0;
                        for &j in theirs {
                            let d2 = squared_distance(xi, m.point(j));
                            if d2 <= max_d2 {
                                row += w[j] * (-d2 * inv_two_var).exp();
                            }
                        }
                        cross += w[i] * row;
                    }
                    acc.add(2.0 * cross);
                }
            }
            acc.value()
        })
        .collect();
    Ok(GaussianEnergy {
        value: pairwise_sum(&blocks),
        error_bound,
    })
}

struct Cell {
    coords: Vec<i64>,
    start: usize,
    end: usize,
}

/// Atoms bucketed into a uniform grid, cells listed in key order.
struct CellGrid {
    base: Vec<i64>,
    bits: u32,
    cells: Vec<Cell>,
    order: Vec<usize>,
    index: FxHashMap<u128, (usize, usize)>,
}

impl CellGrid {
    fn new(m: &WeightedMeasure, side: f64) -> Result<Self> {
        let dim = m.dim();
        let cell_of = |x: f64| (x / side).floor() as i64;
        let (lo, hi) = m.bounding_box();
        let base: Vec<i64> = lo.iter().map(|&x| cell_of(x)).collect();
        let span = lo
            .iter()
            .zip(&hi)
            .map(|(&a, &b)| (cell_of(b) - cell_of(a)) as u64 + 1)
            .max()
            .expect("dim ≥ 1");
        let bits = 64 - span.leading_zeros();
        if bits as usize * dim > 128 {
            return Err(invalid("sigma", "too many grid cells for the packed cell key"));
        }
        let pack = |c: &[i64]| -> u128 {
            c.iter()
                .zip(&base)
                .fold(0u128, |key, (&x, &b)| (key << bits) | (x - b) as u128)
        };
        let mut keyed: Vec<(u128, usize)> = (0..m.len())
            .map(|i| {
                let c: Vec<i64> = m.point(i).iter().map(|&x| cell_of(x)).collect();
                (pack(&c), i)
            })
            .collect();
        keyed.sort_unstable();
        let order: Vec<usize> = keyed.iter().map(|e| e.1).collect();
        let mut cells = Vec::new();
        let mut index = FxHashMap::default();
        let mut start = 0;
        while start < keyed.len() {
            let key = keyed[start].0;
            let mut end = start;
            while end < keyed.len() && keyed[end].0 == key {
                end += 1;
            }
            let coords = m.point(keyed[start].1).iter().map(|&x| cell_of(x)).collect();
            cells.push(Cell { coords, start, end });
            index.insert(key, (start, end));
            start = end;
        }
        Ok(Self {
            base,
            bits,
            cells,
            order,
            index,
        })
    }

    fn lookup(&self, coords: &[i64]) -> Option<(usize, usize)> {
        let limit = 1i64 << self.bits;
        let mut key = 0u128;
        for (&x, &b) in coords.iter().zip(&self.base) {
            let rel = x - b;
            if rel < 0 || rel >= limit {
                return None;
            }
            key = (key << self.bits) | rel as u128;
        }
        self.index.get(&key).copied()
    }
}

/// Nonzero offsets in `[-reach, reach]^d` that are lexicographically
/// positive and whose cells can hold points within `cutoff` cell sides.
fn half_shell(dim: usize, reach: i64, cutoff: f64) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut off = vec![-reach; dim];
    loop {
        let positive = off.iter().find(|&&x| x != 0).is_some_and(|&x| x > 0);
        let gap2: f64 = off.iter().map(|&x| ((x.abs() - 1).max(0) as f64).powi(2)).sum();
        if positive && gap2 <= cutoff * cutoff {
            out.push(off.clone());
        }
        let mut k = 0;
        loop {
            if k == dim {
                return out;
            }
            off[k] += 1;
            if off[k] <= reach {
                break;
            }
            off[k] = -reach;
            k += 1;
        }
    }
}

/// Which evaluator a profile uses for `S_σ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SEvaluator {
    Exact,
    Cutoff { cutoff: f64, resolution: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SProfilePoint {
    pub sigma: f64,
    pub s: f64,
    /// `σ^{-d} S_σ`.
    pub scaled: f64,
    pub error_bound: f64,
}

/// `S_σ` and `σ^{-d} S_σ` along a strictly decreasing σ sequence.
pub fn scaled_s_profile(m: &WeightedMeasure, sigmas: &[f64], evaluator: SEvaluator) -> Result<Vec<SProfilePoint>> {
    if sigmas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("sigmas", "must be strictly decreasing"));
    }
    let d = m.dim() as i32;
    sigmas
        .iter()
        .map(|&sigma| {
            let (s, error_bound) = match evaluator {
                SEvaluator::Exact => (gaussian_energy(m, sigma)?, 0.0),
                SEvaluator::Cutoff { cutoff, resolution } => {
                    let e = gaussian_energy_fast(m, sigma, cutoff, resolution)?;
                    (e.value, e.error_bound)
                }
            };
            Ok(SProfilePoint {
                sigma,
                s,
                scaled: s * sigma.powi(-d),
                error_bound,
            })
        })
        .collect()
}

/// `L_δ = Σ_{j=0}^{⌈T/δ⌉} (ℓ̂((j+1)δ) - ℓ̂(jδ))²` over the profile horizon `T`.
pub fn quadratic_variation(lt: &LocalTimeProfile, delta: f64) -> Result<f64> {
    if !(delta >= 2.0 * lt.step()) {
        return Err(Error::Resolution(format!(
            "delta = {delta} must be ≥ 2·step = {}",
            2.0 * lt.step()
        )));
    }
    let blocks = (lt.horizon() / delta).ceil() as usize;
    let terms: Vec<f64> = (0..=blocks)
        .map(|j| {
            let inc = lt.at((j + 1) as f64 * delta) - lt.at(j as f64 * delta);
            inc * inc
        })
        .collect();
    Ok(pairwise_sum(&terms))
}
