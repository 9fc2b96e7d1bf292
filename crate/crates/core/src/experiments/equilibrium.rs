//! Direct access to the equilibrium solver on a user-supplied point set.

use crate::capacity::{equilibrium_measure, SolverOptions};
use crate::error::Result;
use crate::kernel::Kernel;

use super::{ExperimentOutput, ExperimentRecord};

/// One `weight` row per point (scale = point index) followed by `energy`
/// and `capacity` rows carrying the solver diagnostics.
pub fn run_equilibrium(dim: usize, coords: &[f64], k: &Kernel, opts: SolverOptions) -> Result<ExperimentOutput> {
    let eq = equilibrium_measure(dim, coords, k, opts)?;
    let record = |scale_name, scale, quantity, estimate, aux| ExperimentRecord {
        experiment: "equilibrium",
        replica: None,
        seed: 0,
        scale_name,
        scale,
        quantity,
        estimate,
        reference: None,
        aux,
    };
    let mut out = ExperimentOutput::default();
    for (i, &w) in eq.weights.iter().enumerate() {
        out.records.push(record("point", i as f64, "weight", w, Vec::new()));
    }
    let diagnostics = vec![
        ("iterations", eq.iterations as f64),
        ("gap", eq.gap),
        ("converged", f64::from(u8::from(eq.converged))),
        ("min_rayleigh", eq.min_rayleigh),
    ];
    out.records
        .push(record("-", f64::NAN, "energy", eq.energy, diagnostics.clone()));
    out.records
        .push(record("-", f64::NAN, "capacity", eq.capacity(k).value, diagnostics));
    out.header = vec![
        ("points", eq.weights.len() as f64),
        ("tol", opts.tol),
        ("max_iters", opts.max_iters as f64),
    ];
    Ok(out)
}
