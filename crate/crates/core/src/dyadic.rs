//! Dyadic-cube histograms and a nearest-point index.
//!
//! Level-`n` cubes of the unit cube are `Π [j_k 2^{-n}, (j_k+1) 2^{-n})`. A
//! histogram stores, per level, the nonempty cubes sorted by Morton key
//! (bit-interleaved coordinates), so the parent of a cube is `key >> d` and
//! every level is a run-length aggregation of the level below.

use std::io::Write;

use crate::error::{invalid, Error, Result};
use crate::measure::{squared_distance, WeightedMeasure};
use crate::numeric::CompensatedSum;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CubeIndex {
    pub level: usize,
    pub coords: Vec<u64>,
}

impl CubeIndex {
    /// The level-`level` cube containing `x ∈ [0,1)^d`.
    pub fn containing(x: &[f64], level: usize) -> Self {
        let scale = (level as f64).exp2();
        Self {
            level,
            coords: x.iter().map(|v| (v * scale).floor() as u64).collect(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        *self == Self::containing(x, self.level)
    }
}

fn interleave(coords: &[u64], level: usize) -> u128 {
    let d = coords.len();
    let mut key = 0u128;
    for b in 0..level {
        for (k, &c) in coords.iter().enumerate() {
            key |= (((c >> b) & 1) as u128) << (b * d + k);
        }
    }
    key
}

fn deinterleave(key: u128, dim: usize, level: usize) -> Vec<u64> {
    let mut coords = vec![0u64; dim];
    for b in 0..level {
        for (k, c) in coords.iter_mut().enumerate() {
            *c |= (((key >> (b * dim + k)) & 1) as u64) << b;
        }
    }
    coords
}

#[derive(Debug, Clone)]
pub struct DyadicHistogram {
    dim: usize,
    n_max: usize,
    side: f64,
    origin: Vec<f64>,
    total: f64,
    levels: Vec<Vec<(u128, f64)>>,
}

impl DyadicHistogram {
    /// Bins a measure supported in `[0,1)^d` down to level `n_max`.
    pub fn build(measure: &WeightedMeasure, n_max: usize) -> Result<Self> {
        let origin = vec![0.0; measure.dim()];
        Self::build_in_box(measure, n_max, &origin, 1.0)
    }

    /// Bins a measure supported in the cube `origin + [0, side)^d`, whose
    /// level-`n` cubes have side `side·2^{-n}`.
    pub fn build_in_box(measure: &WeightedMeasure, n_max: usize, origin: &[f64], side: f64) -> Result<Self> {
        let dim = measure.dim();
        if origin.len() != dim {
            return Err(invalid("origin", "dimension mismatch"));
        }
        if !(side > 0.0 && side.is_finite()) {
            return Err(invalid("side", "must be positive"));
        }
        if dim * n_max > 128 {
            return Err(invalid(
                "n_max",
                format!("dim·n_max = {} exceeds the 128-bit cube key", dim * n_max),
            ));
        }
        let scale = (n_max as f64).exp2() / side;
        let cells = 1u64 << n_max;
        let mut keyed: Vec<(u128, f64)> = Vec::with_capacity(measure.len());
        let mut coords = vec![0u64; dim];
        for i in 0..measure.len() {
            let p = measure.point(i);
            for k in 0..dim {
                let u = (p[k] - origin[k]) * scale;
                if !(u >= 0.0) || u.floor() as u64 >= cells {
                    return Err(Error::OutsideUnitCube { index: i });
                }
                coords[k] = u.floor() as u64;
            }
            keyed.push((interleave(&coords, n_max), measure.weights()[i]));
        }
        keyed.sort_unstable_by_key(|e| e.0);
        let mut levels = vec![aggregate(&keyed, 0)];
        for _ in 0..n_max {
            let finer = levels.last().expect("nonempty");
            let coarser = aggregate(finer, dim);
            levels.push(coarser);
        }
        levels.reverse();
        let mut total = CompensatedSum::default();
        measure.weights().iter().for_each(|&w| total.add(w));
        let h = Self {
            dim,
            n_max,
            side,
            origin: origin.to_vec(),
            total: total.value(),
            levels,
        };
        h.check_consistency();
        Ok(h)
    }

    /// Asserts that every cube's mass is the aggregate of its children and
    /// that every level carries the total mass.
    fn check_consistency(&self) {
        for n in 0..self.n_max {
            let rebuilt = aggregate(&self.levels[n + 1], self.dim);
            assert_eq!(rebuilt, self.levels[n], "parent/child masses disagree at level {n}");
        }
        for level in &self.levels {
            let mut s = CompensatedSum::default();
            level.iter().for_each(|e| s.add(e.1));
            assert!(
                (s.value() - self.total).abs() <= 1e-12 * self.total.abs().max(f64::MIN_POSITIVE),
                "level mass {} differs from total {}",
                s.value(),
                self.total
            );
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Side length of the level-0 cube in the measure's own units.
    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn total_mass(&self) -> f64 {
        self.total
    }

    fn level(&self, n: usize) -> Result<&[(u128, f64)]> {
        self.levels.get(n).map(Vec::as_slice).ok_or(Error::LevelOutOfRange {
            level: n,
            n_max: self.n_max,
        })
    }

    /// Number of level-`n` cubes of positive mass.
    pub fn box_count(&self, n: usize) -> Result<usize> {
        Ok(self.level(n)?.iter().filter(|e| e.1 > 0.0).count())
    }

    /// `Σ_{Q ∈ D_n} ν(Q)²`.
    pub fn sum_squares(&self, n: usize) -> Result<f64> {
        let mut s = CompensatedSum::default();
        self.level(n)?.iter().for_each(|e| s.add(e.1 * e.1));
        Ok(s.value())
    }

    /// Mass of one cube (zero if empty).
    pub fn mass(&self, cube: &CubeIndex) -> Result<f64> {
        let level = self.level(cube.level)?;
        let key = interleave(&cube.coords, cube.level);
        Ok(level
            .binary_search_by_key(&key, |e| e.0)
            .map(|i| level[i].1)
            .unwrap_or(0.0))
    }

    /// Nonempty cubes of level `n` with their masses, in Morton order.
    pub fn cubes(&self, n: usize) -> Result<impl Iterator<Item = (CubeIndex, f64)> + '_> {
        let dim = self.dim;
        Ok(self.level(n)?.iter().map(move |&(key, m)| {
            (
                CubeIndex {
                    level: n,
                    coords: deinterleave(key, dim, n),
                },
                m,
            )
        }))
    }

    /// Writes `level,j1,...,jd,mass` rows with a header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "level")?;
        for k in 1..=self.dim {
            write!(out, ",j{k}")?;
        }
        writeln!(out, ",mass")?;
        for n in 0..=self.n_max {
            for (cube, m) in self.cubes(n)? {
                write!(out, "{n}")?;
                for j in &cube.coords {
                    write!(out, ",{j}")?;
                }
                writeln!(out, ",{m}")?;
            }
        }
        Ok(())
    }
}

/// Merges runs of equal `key >> shift` in a key-sorted slice.
fn aggregate(sorted: &[(u128, f64)], shift: usize) -> Vec<(u128, f64)> {
    let mut out: Vec<(u128, f64)> = Vec::new();
    let mut current: Option<(u128, CompensatedSum)> = None;
    for &(key, m) in sorted {
        let k = key >> shift;
        match &mut current {
            Some((ck, acc)) if *ck == k => acc.add(m),
            _ => {
                if let Some((ck, acc)) = current.take() {
                    out.push((ck, acc.value()));
                }
                let mut acc = CompensatedSum::default();
                acc.add(m);
                current = Some((k, acc));
            }
        }
    }
    if let Some((ck, acc)) = current {
        out.push((ck, acc.value()));
    }
    out
}

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
struct Node {
    lo: Vec<f64>,
    hi: Vec<f64>,
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

/// Exact nearest-point queries over a fixed point set.
///
/// A static kd-tree with per-node bounding boxes: subtrees whose box lies
/// farther than the current best (or the cutoff) are skipped.
#[derive(Debug, Clone)]
pub struct PointIndex {
    dim: usize,
    points: Vec<f64>,
    nodes: Vec<Node>,
}

impl PointIndex {
    pub fn new(dim: usize, coords: &[f64]) -> Result<Self> {
        if dim == 0 || !coords.len().is_multiple_of(dim) {
            return Err(invalid("coords", "length is not a multiple of the dimension"));
        }
        let n = coords.len() / dim;
        if n == 0 {
            return Err(Error::EmptyPointSet);
        }
        let mut order: Vec<usize> = (0..n).collect();
        let mut nodes = Vec::new();
        build_node(dim, coords, &mut order, 0, n, &mut nodes);
        let points = order
            .iter()
            .flat_map(|&i| coords[i * dim..(i + 1) * dim].iter().copied())
            .collect();
        Ok(Self { dim, points, nodes })
    }

    pub fn from_measure(m: &WeightedMeasure) -> Result<Self> {
        Self::new(m.dim(), m.coords())
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Exact distance from `x` to the nearest point if it is at most
    /// `cutoff`, `None` otherwise.
    pub fn nearest_distance(&self, x: &[f64], cutoff: f64) -> Option<f64> {
        let mut best = cutoff * cutoff;
        let mut found = false;
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i];
            if box_distance2(x, &node.lo, &node.hi) > best {
                continue;
            }
            match node.children {
                Some((a, b)) => {
                    let da = box_distance2(x, &self.nodes[a].lo, &self.nodes[a].hi);
                    let db = box_distance2(x, &self.nodes[b].lo, &self.nodes[b].hi);
                    // Visit the nearer child first: push it last.
                    if da <= db {
                        stack.push(b);
                        stack.push(a);
                    } else {
                        stack.push(a);
                        stack.push(b);
                    }
                }
                None => {
                    for p in self.points[node.start * self.dim..node.end * self.dim].chunks_exact(self.dim) {
                        let d2 = squared_distance(x, p);
                        if d2 <= best {
                            best = d2;
                            found = true;
                        }
                    }
                }
            }
        }
        found.then(|| best.sqrt())
    }

    /// Distance from `x` to the nearest point.
    pub fn nearest(&self, x: &[f64]) -> f64 {
        self.nearest_distance(x, f64::INFINITY).expect("index is nonempty")
    }

    /// Distance from `x` to the farthest point (linear scan).
    pub fn farthest(&self, x: &[f64]) -> f64 {
        self.points
            .chunks_exact(self.dim)
            .map(|p| squared_distance(x, p))
            .fold(0.0, f64::max)
            .sqrt()
    }
}

fn box_distance2(x: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..x.len() {
        let d = if x[k] < lo[k] {
            lo[k] - x[k]
        } else if x[k] > hi[k] {
            x[k] - hi[k]
        } else {
            0.0
        };
        s += d * d;
    }
    s
}

fn build_node(
    dim: usize,
    coords: &[f64],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for &i in &order[start..end] {
        for k in 0..dim {
            lo[k] = lo[k].min(coords[i * dim + k]);
            hi[k] = hi[k].max(coords[i * dim + k]);
        }
    }
    let id = nodes.len();
    nodes.push(Node {
        lo: lo.clone(),
        hi: hi.clone(),
        start,
        end,
        children: None,
    });
    if end - start > LEAF_SIZE {
        let axis = (0..dim)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .expect("dim ≥ 1");
        let mid = (start + end) / 2;
        order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            coords[a * dim + axis].total_cmp(&coords[b * dim + axis])
        });
        let left = build_node(dim, coords, order, start, mid, nodes);
        let right = build_node(dim, coords, order, mid, end, nodes);
        nodes[id].children = Some((left, right));
    }
    id
}
