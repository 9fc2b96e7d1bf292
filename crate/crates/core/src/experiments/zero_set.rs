//! Zero sets of one-dimensional Brownian motion: Lévy's excursion count,
//! dyadic box counts against local time, the quadratic variation `L_δ` of
//! local time, and capacity equivalence with the middle-half Cantor set.

use std::f64::consts::PI;
use std::ops::RangeInclusive;

use rayon::prelude::*;

use crate::capacity::reference_cantor_capacity;
use crate::dyadic::DyadicHistogram;
use crate::energy::{dyadic_energy, quadratic_variation};
use crate::error::{invalid, Error, Result};
use crate::kernel::Kernel;
use crate::numeric::{ls_slope, replica_seed};
use crate::path::{default_bandwidth, local_time_profile, sample_brownian, zero_set};

use super::{ExperimentOutput, ExperimentRecord};

/// Riesz exponents compared against the Cantor set, all below its
/// critical exponent ½ by at least 0.1.
pub const CANTOR_ALPHAS: [f64; 4] = [0.1, 0.2, 0.3, 0.4];

/// Number of level-`n` dyadic intervals of `[0, 1]` containing a zero.
pub fn zero_box_count(zeros: &[f64], n: usize) -> usize {
    let cells = 1u64 << n;
    let mut last = None;
    let mut count = 0;
    for &z in zeros {
        let j = ((z * cells as f64) as u64).min(cells - 1);
        if last != Some(j) {
            count += 1;
            last = Some(j);
        }
    }
    count
}

struct ReplicaRows {
    local_time: f64,
    zeros: usize,
    levy: Vec<f64>,
    boxes: Vec<usize>,
    qv: Vec<f64>,
    cantor: Option<Vec<f64>>,
}

fn replica(n_steps: usize, deltas: &[f64], levels: &RangeInclusive<usize>, seed: u64) -> Result<ReplicaRows> {
    let path = sample_brownian(1, n_steps, 1.0, seed)?;
    let zs = zero_set(&path)?;
    let lt = local_time_profile(&path, default_bandwidth(&path))?;
    let local_time = lt.total();
    let levy = deltas
        .iter()
        .map(|&d| d.sqrt() * zs.excursion_count(d) as f64 / ((2.0 / PI).sqrt() * local_time))
        .collect();
    let boxes = levels.clone().map(|n| zero_box_count(zs.zeros(), n)).collect();
    let qv = deltas
        .iter()
        .map(|&d| quadratic_variation(&lt, d))
        .collect::<Result<_>>()?;
    let measure = lt.measure();
    let cantor = if measure.is_empty() {
        None
    } else {
        let n_max = *levels.end();
        let h = DyadicHistogram::build(&measure.normalized()?, n_max)?;
        let eps = 2.0 * 0.5f64.powi(n_max as i32);
        Some(
            CANTOR_ALPHAS
                .iter()
                .map(|&a| {
                    let k = Kernel::riesz(a)?.smooth(eps, 1)?;
                    let cap = 1.0 / dyadic_energy(&h, &k)?.value;
                    Ok(cap / reference_cantor_capacity(&k, 60).value)
                })
                .collect::<Result<_>>()?,
        )
    };
    Ok(ReplicaRows {
        local_time,
        zeros: zs.zeros().len(),
        levy,
        boxes,
        qv,
        cantor,
    })
}

fn spread(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

pub fn run_zero_set(
    n_steps: usize,
    deltas: &[f64],
    levels: RangeInclusive<usize>,
    replicas: usize,
    seed: u64,
) -> Result<ExperimentOutput> {
    if deltas.len() < 2 || levels.is_empty() || replicas == 0 {
        return Err(invalid(
            "deltas",
            "need at least two δ values, a nonempty level range and one replica",
        ));
    }
    let floor = 10.0 / n_steps as f64;
    if let Some(d) = deltas.iter().find(|&&d| !(d >= floor && d <= 1.0)) {
        return Err(Error::Resolution(format!(
            "delta must lie in [10/n_steps, 1] = [{floor}, 1]; got {d}"
        )));
    }
    if 0.5f64.powi(*levels.end() as i32) < floor {
        return Err(Error::Resolution(format!("2^(-n_max) must be ≥ 10/n_steps = {floor}")));
    }
    if *levels.end() > 60 {
        return Err(invalid("levels", "n_max must be at most 60"));
    }
    let rows: Vec<ReplicaRows> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| replica(n_steps, deltas, &levels, replica_seed(seed, r)))
        .collect::<Result<_>>()?;

    let record = |replica, scale_name, scale, quantity, estimate, reference, aux| ExperimentRecord {
        experiment: "zero-set",
        replica,
        seed,
        scale_name,
        scale,
        quantity,
        estimate,
        reference,
        aux,
    };
    let mut out = ExperimentOutput::default();
    let log_delta: Vec<f64> = deltas.iter().map(|d| d.ln()).collect();
    for (r, row) in rows.iter().enumerate() {
        let id = Some(r as u64);
        let empty = f64::from(u8::from(row.local_time == 0.0));
        for (&d, &v) in deltas.iter().zip(&row.levy) {
            out.records.push(record(
                id,
                "delta",
                d,
                "levy_ratio",
                v,
                Some(1.0),
                vec![("local_time", row.local_time), ("empty", empty)],
            ));
        }
        let scaled: Vec<f64> = levels
            .clone()
            .zip(&row.boxes)
            .map(|(n, &c)| 0.5f64.powf(n as f64 / 2.0) * c as f64 / row.local_time)
            .collect();
        for ((n, &c), &v) in levels.clone().zip(&row.boxes).zip(&scaled) {
            out.records.push(record(
                id,
                "n",
                n as f64,
                "zero_boxes",
                v,
                None,
                vec![("box_count", c as f64)],
            ));
        }
        out.records.push(record(
            id,
            "-",
            f64::NAN,
            "zero_boxes_spread",
            spread(&scaled),
            None,
            vec![("zeros", row.zeros as f64)],
        ));
        for (&d, &l) in deltas.iter().zip(&row.qv) {
            out.records
                .push(record(id, "delta", d, "qv_scaled", l / d.sqrt(), None, vec![("qv", l)]));
        }
        let log_qv: Vec<f64> = row.qv.iter().map(|l| l.ln()).collect();
        let slope = if row.qv.iter().all(|&l| l > 0.0) {
            ls_slope(&log_delta, &log_qv)
        } else {
            f64::NAN
        };
        out.records.push(record(
            id,
            "-",
            f64::NAN,
            "qv_slope",
            slope,
            Some(0.5),
            vec![("empty", empty)],
        ));
        match &row.cantor {
            Some(ratios) => {
                for (&a, &v) in CANTOR_ALPHAS.iter().zip(ratios) {
                    out.records
                        .push(record(id, "alpha", a, "cantor_ratio", v, None, Vec::new()));
                }
                out.records.push(record(
                    id,
                    "-",
                    f64::NAN,
                    "cantor_spread",
                    spread(ratios),
                    None,
                    Vec::new(),
                ));
            }
            None => out.records.push(record(
                id,
                "-",
                f64::NAN,
                "cantor_spread",
                f64::NAN,
                None,
                vec![("empty", 1.0)],
            )),
        }
    }
    let mean_qv: Vec<f64> = (0..deltas.len())
        .map(|j| rows.iter().map(|r| r.qv[j]).sum::<f64>() / rows.len() as f64)
        .collect();
    let log_mean: Vec<f64> = mean_qv.iter().map(|l| l.ln()).collect();
    out.records.push(record(
        None,
        "-",
        f64::NAN,
        "qv_slope_of_mean",
        ls_slope(&log_delta, &log_mean),
        Some(0.5),
        Vec::new(),
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_counts_of_explicit_zeros() {
        let zeros = [0.0, 0.1, 0.2, 0.26, 0.9, 1.0];
        assert_eq!(zero_box_count(&zeros, 0), 1);
        assert_eq!(zero_box_count(&zeros, 1), 2);
        assert_eq!(zero_box_count(&zeros, 2), 3);
        assert_eq!(zero_box_count(&[], 3), 0);
    }

    #[test]
    fn guards() {
        assert!(run_zero_set(1 << 10, &[1e-3, 1e-2], 2..=4, 1, 0).is_err());
        assert!(run_zero_set(1 << 10, &[1.0 / 64.0, 1.0 / 32.0], 2..=7, 1, 0).is_err());
    }

    #[test]
    fn small_run() {
        let deltas = [1.0 / 16.0, 1.0 / 64.0, 1.0 / 256.0];
        let out = run_zero_set(1 << 14, &deltas, 2..=6, 4, 11).unwrap();
        assert_eq!(out.select("levy_ratio").count(), 12);
        assert_eq!(out.select("qv_slope").count(), 4);
        let slope = out.select("qv_slope_of_mean").next().unwrap().estimate;
        assert!(slope > 0.0 && slope < 1.0, "{slope}");
    }
}
