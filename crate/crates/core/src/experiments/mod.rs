//! End-to-end experiments: each runs independent replicas keyed by
//! `(master seed, replica id)` and returns a table of [`ExperimentRecord`]s.
//!
//! Replicas are mapped in parallel and collected in replica order, and every
//! inner reduction has a fixed order, so the tables are byte-identical for
//! any number of worker threads.

pub mod approach;
pub mod cap_equiv;
pub mod equilibrium;
pub mod moments;
pub mod sausage;
pub mod strong_law;
pub mod zero_set;

use std::fmt::Write as _;
use std::io::Write;

use serde_json::{json, Map, Value};

use crate::dyadic::DyadicHistogram;
use crate::error::{Error, Result};
use crate::path::{occupation_measure, PathSample};

pub use approach::{run_approach, ApproachConfig, HitOutcome, NeighborhoodHitting};
pub use cap_equiv::{run_capacity_equivalence, KernelFamily};
pub use equilibrium::run_equilibrium;
pub use moments::{expected_s_closed_form_d3, expected_s_quadrature, run_moments, second_moment_i1_quadrature};
pub use sausage::run_sausage_counts;
pub use strong_law::run_strong_law;
pub use zero_set::run_zero_set;

/// Horizon-1 Brownian paths are binned in the fixed box `[-L, L]^d`.
pub const BOX_HALF_WIDTH: f64 = 4.0;

/// One row of an experiment table.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub experiment: &'static str,
    /// `None` marks a row aggregated over replicas.
    pub replica: Option<u64>,
    /// Master seed; with `replica` it reproduces the row.
    pub seed: u64,
    /// Name of the scale parameter: `sigma`, `delta`, `eps`, `n`, `alpha`, or `-`.
    pub scale_name: &'static str,
    pub scale: f64,
    pub quantity: &'static str,
    pub estimate: f64,
    pub reference: Option<f64>,
    pub aux: Vec<(&'static str, f64)>,
}

impl ExperimentRecord {
    pub fn aux(&self, key: &str) -> Option<f64> {
        self.aux.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
    }
}

/// A replica that was discarded, e.g. because its path left the binning box.
#[derive(Debug, Clone, PartialEq)]
pub struct Abort {
    pub replica: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentOutput {
    pub records: Vec<ExperimentRecord>,
    pub aborts: Vec<Abort>,
    /// Run-level parameters chosen by the experiment (escape radius, caps).
    pub header: Vec<(&'static str, f64)>,
}

impl ExperimentOutput {
    /// Rows with the given quantity, in table order.
    pub fn select<'a>(&'a self, quantity: &'a str) -> impl Iterator<Item = &'a ExperimentRecord> + 'a {
        self.records.iter().filter(move |r| r.quantity == quantity)
    }

    /// The table rendered in the given format.
    pub fn render(&self, format: OutputFormat) -> Vec<u8> {
        let mut buf = Vec::new();
        write_records(&self.records, format, &mut buf).expect("writing to memory");
        buf
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    JsonLines,
}

const CSV_HEADER: &str = "experiment,replica,seed,scale_name,scale,quantity,estimate,reference,aux";

fn replica_label(r: Option<u64>) -> String {
    r.map_or_else(|| "all".to_string(), |r| r.to_string())
}

fn number(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or_else(|| Value::String(x.to_string()), Value::Number)
}

/// Writes the table as CSV (with header) or JSON lines. Floats use Rust's
/// shortest round-trip formatting, which is deterministic.
pub fn write_records<W: Write>(records: &[ExperimentRecord], format: OutputFormat, mut out: W) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            writeln!(out, "{CSV_HEADER}")?;
            for r in records {
                let mut aux = String::new();
                for (i, (k, v)) in r.aux.iter().enumerate() {
                    if i > 0 {
                        aux.push(';');
                    }
                    write!(aux, "{k}={v}").expect("writing to a String");
                }
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    r.experiment,
                    replica_label(r.replica),
                    r.seed,
                    r.scale_name,
                    r.scale,
                    r.quantity,
                    r.estimate,
                    r.reference.map_or_else(|| "n/a".to_string(), |v| v.to_string()),
                    aux
                )?;
            }
        }
        OutputFormat::JsonLines => {
            for r in records {
                let aux: Map<String, Value> = r.aux.iter().map(|(k, v)| (k.to_string(), number(*v))).collect();
                let row = json!({
                    "experiment": r.experiment,
                    "replica": replica_label(r.replica),
                    "seed": r.seed,
                    "scale_name": r.scale_name,
                    "scale": number(r.scale),
                    "quantity": r.quantity,
                    "estimate": number(r.estimate),
                    "reference": r.reference.map_or(Value::String("n/a".into()), number),
                    "aux": aux,
                });
                writeln!(out, "{row}")?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Bins the occupation measure of a horizon-1 path in `[-L, L]^d`, or
/// reports the box escape.
pub(crate) fn bin_in_box(path: &PathSample, n_max: usize) -> std::result::Result<DyadicHistogram, String> {
    let origin = vec![-BOX_HALF_WIDTH; path.dim()];
    match DyadicHistogram::build_in_box(&occupation_measure(path), n_max, &origin, 2.0 * BOX_HALF_WIDTH) {
        Ok(h) => Ok(h),
        Err(Error::OutsideUnitCube { index }) => Err(format!(
            "box escape: sample {} leaves [-{BOX_HALF_WIDTH}, {BOX_HALF_WIDTH}]^{}",
            index + 1,
            path.dim()
        )),
        Err(e) => Err(e.to_string()),
    }
}

/// Guard shared by the box-count experiments: `2^{n_max} ≤ n_steps^{1/2}`.
pub(crate) fn check_level_guard(n_max: usize, n_steps: usize) -> Result<()> {
    if (n_max as f64).exp2() > (n_steps as f64).sqrt() {
        return Err(Error::Resolution(format!(
            "2^n_max must be ≤ n_steps^(1/2): 2^{n_max} > {}",
            (n_steps as f64).sqrt()
        )));
    }
    Ok(())
}
