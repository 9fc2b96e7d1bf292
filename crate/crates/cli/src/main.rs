//! `capmc`: runs one experiment and writes its table, plus a sidecar
//! `<out>.meta.json` holding the resolved config and run header.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 invalid configuration,
//! 3 replica aborts (the table is still written), 4 I/O failure.

mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use capmc::capacity::SolverOptions;
use capmc::experiments::{
    run_approach, run_capacity_equivalence, run_equilibrium, run_moments, run_sausage_counts, run_strong_law,
    run_zero_set, ApproachConfig, ExperimentOutput, KernelFamily, OutputFormat,
};
use capmc::numeric::replica_seed;
use capmc::path::sample_brownian;
use capmc::{parse_kernel_spec, Error};
use serde_json::{json, Map, Value};

use config::{Settings, Subcommand, SUBCOMMANDS};

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Io(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Numerical(_) => 1,
            Failure::Config(_) => 2,
            Failure::Io(_) => 4,
        }
    }
}

/// Library parameter names that differ from the flag carrying them.
fn flag_for(param: &str) -> String {
    match param {
        "sigmas" | "sigma" => "sigma".into(),
        "alphas" => "alpha".into(),
        "deltas" => "delta".into(),
        "levels" => "n-max".into(),
        "n_steps" => "steps".into(),
        "coords" => "points".into(),
        "mc_paths" => "paths".into(),
        other => other.replace('_', "-"),
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { name, reason } => Failure::Config(format!("--{}: {reason}", flag_for(name))),
            Error::Resolution(msg) => Failure::Config(msg),
            Error::KernelSpec { .. } => Failure::Config(format!("--kernel: {e}")),
            Error::EmptyPointSet => Failure::Config("--points: the point file has no points".into()),
            Error::NonCapacitable(_) | Error::OutsideUnitCube { .. } | Error::LevelOutOfRange { .. } => {
                Failure::Config(e.to_string())
            }
            Error::Io(io) => Failure::Io(io.to_string()),
            Error::Quadrature(_) => Failure::Numerical(e.to_string()),
        }
    }
}

fn family(name: &str) -> Result<KernelFamily, Failure> {
    match name {
        "riesz" => Ok(KernelFamily::Riesz),
        "logadj" => Ok(KernelFamily::LogAdjusted),
        other => Err(Failure::Config(format!(
            "--family: expected riesz or logadj, got `{other}`"
        ))),
    }
}

fn level(s: &mut Settings, name: &'static str) -> Result<usize, Failure> {
    let n = s.uint(name)?;
    usize::try_from(n)
        .ok()
        .filter(|&n| n <= 60)
        .ok_or_else(|| Failure::Config(format!("--{name}: must be at most 60")))
}

fn levels(s: &mut Settings) -> Result<std::ops::RangeInclusive<usize>, Failure> {
    let (lo, hi) = (level(s, "n-min")?, level(s, "n-max")?);
    if lo > hi {
        return Err(Failure::Config(format!("--n-min must be ≤ --n-max: {lo} > {hi}")));
    }
    Ok(lo..=hi)
}

/// Reads one point per line, comma or whitespace separated; blank lines,
/// `#` comments and a non-numeric first line (a header) are skipped.
fn read_points(path: &Path) -> Result<(usize, Vec<f64>), Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Io(format!("--points: cannot read {}: {e}", path.display())))?;
    let mut dim = None;
    let mut coords = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Result<Vec<f64>, _> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(str::parse::<f64>)
            .collect();
        let row = match row {
            Ok(r) if r.iter().all(|x| x.is_finite()) => r,
            _ if i == 0 => continue,
            _ => {
                return Err(Failure::Config(format!(
                    "--points: line {} is not a row of numbers",
                    i + 1
                )))
            }
        };
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(Failure::Config(format!(
                    "--points: line {} has {} coordinates, expected {d}",
                    i + 1,
                    row.len()
                )))
            }
            Some(_) => {}
        }
        coords.extend(row);
    }
    dim.map(|d| (d, coords))
        .ok_or_else(|| Failure::Config("--points: the point file has no points".into()))
}

fn run_subcommand(sub: &Subcommand, s: &mut Settings, seed: u64) -> Result<ExperimentOutput, Failure> {
    let output = match sub.name {
        "strong-law" => {
            let (dim, steps, sigmas, replicas) = (
                s.count("dim")?,
                s.count("steps")?,
                s.grid("sigma")?,
                s.count("replicas")?,
            );
            run_strong_law(dim, steps, &sigmas, replicas, seed)?
        }
        "moments" => {
            let (dim, sigmas) = (s.count("dim")?, s.grid("sigma")?);
            run_moments(dim, &sigmas)?
        }
        "cap-equiv" => {
            let (dim, steps, alphas) = (s.count("dim")?, s.count("steps")?, s.grid("alpha")?);
            let fam = family(&s.string("family")?)?;
            let (n_max, replicas) = (level(s, "n-max")?, s.count("replicas")?);
            run_capacity_equivalence(dim, fam, &alphas, steps, n_max, replicas, seed)?
        }
        "sausage" => {
            let (dim, steps) = (s.count("dim")?, s.count("steps")?);
            let (lv, replicas) = (levels(s)?, s.count("replicas")?);
            run_sausage_counts(dim, steps, lv, replicas, seed)?
        }
        "zero-set" => {
            let (steps, deltas) = (s.count("steps")?, s.grid("delta")?);
            let (lv, replicas) = (levels(s)?, s.count("replicas")?);
            run_zero_set(steps, &deltas, lv, replicas, seed)?
        }
        "approach" => {
            let (dim, alpha, steps) = (s.count("dim")?, s.real("alpha")?, s.count("steps")?);
            let (eps, paths) = (s.grid("eps")?, s.count("paths")?);
            let mut cfg = ApproachConfig::new(dim, alpha, steps, eps, paths, seed);
            cfg.max_jumps = s.count("max-jumps")?;
            cfg.widening = s.real("widening")?;
            cfg.x_start = s.optional_list("x-start")?;
            run_approach(&cfg)?
        }
        "equilibrium" => {
            let points = PathBuf::from(s.string("points")?);
            let spec = s.string("kernel")?;
            let opts = SolverOptions {
                tol: s.real("tol")?,
                max_iters: s.count("max-iters")?,
            };
            let (dim, coords) = read_points(&points)?;
            let kernel = parse_kernel_spec(&spec, dim)?;
            if !kernel.is_bounded() {
                return Err(Failure::Config(format!(
                    "--kernel: `{kernel}` is infinite at 0 and every point set is atomic; \
                     smooth it at the grid scale, e.g. --kernel smooth:eps=0.01:{spec}"
                )));
            }
            run_equilibrium(dim, &coords, &kernel, opts)?
        }
        other => unreachable!("unknown subcommand {other}"),
    };
    Ok(output)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Io(format!("cannot create {}: {e}", path.display())))
}

fn write_to(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let mut w = create(path)?;
    w.write_all(bytes)
        .and_then(|_| w.flush())
        .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
}

fn dump_path(dim: usize, steps: usize, seed: u64, path: &Path) -> Result<(), Failure> {
    let sample = sample_brownian(dim, steps, 1.0, replica_seed(seed, 0))?;
    let mut w = create(path)?;
    sample
        .write_csv(&mut w)
        .and_then(|_| w.flush().map_err(Error::from))
        .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
}

fn metadata(sub: &Subcommand, s: &Settings, output: &ExperimentOutput) -> Value {
    let header: Map<String, Value> = output
        .header
        .iter()
        .map(|(k, v)| {
            (
                k.to_string(),
                serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            )
        })
        .collect();
    let config: Map<String, Value> = s.resolved().iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
    let aborts: Vec<Value> = output
        .aborts
        .iter()
        .map(|a| json!({ "replica": a.replica, "reason": a.reason }))
        .collect();
    json!({
        "experiment": sub.name,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "header": header,
        "rows": output.records.len(),
        "aborts": aborts,
    })
}

/// Runs the invocation; `None` when clap printed help or the version.
fn execute() -> Result<Option<ExperimentOutput>, Failure> {
    let matches = match config::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            // Usage errors are already printed; an empty message suppresses a second one.
            return if e.use_stderr() {
                Err(Failure::Config(String::new()))
            } else {
                Ok(None)
            };
        }
    };
    let (name, sub_matches) = matches.subcommand().expect("a subcommand is required");
    let sub = SUBCOMMANDS
        .iter()
        .find(|c| c.name == name)
        .expect("registered subcommand");
    let mut s = Settings::resolve(sub, sub_matches)?;

    let seed = s.uint("seed")?;
    let format = match s.string("format")?.as_str() {
        "csv" => OutputFormat::Csv,
        "jsonl" => OutputFormat::JsonLines,
        other => {
            return Err(Failure::Config(format!(
                "--format: expected csv or jsonl, got `{other}`"
            )))
        }
    };
    let out = s.optional_string("out")?.map(PathBuf::from);
    if let Some(workers) = s.optional_count("workers")? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| Failure::Config(format!("--workers: {e}")))?;
    }
    let dump = if sub.dumps_path {
        s.optional_string("dump-path")?.map(PathBuf::from)
    } else {
        None
    };

    let output = run_subcommand(sub, &mut s, seed)?;

    if let Some(path) = dump {
        let dim = if sub.name == "zero-set" { 1 } else { s.count("dim")? };
        dump_path(dim, s.count("steps")?, seed, &path)?;
    }
    let table = output.render(format);
    match &out {
        Some(path) => {
            write_to(path, &table)?;
            let mut meta_path = path.clone().into_os_string();
            meta_path.push(".meta.json");
            let meta = serde_json::to_vec_pretty(&metadata(sub, &s, &output)).expect("serializing JSON values");
            write_to(Path::new(&meta_path), &meta)?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(&table)
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::Io(format!("cannot write to stdout: {e}")))?;
        }
    }
    Ok(Some(output))
}

/// Reports the outcome on stderr and returns the process exit code.
fn report(result: &Result<Option<ExperimentOutput>, Failure>) -> u8 {
    match result {
        Ok(Some(output)) if !output.aborts.is_empty() => {
            for a in &output.aborts {
                eprintln!("replica {} aborted: {}", a.replica, a.reason);
            }
            3
        }
        Ok(_) => 0,
        Err(f) => {
            match f {
                Failure::Config(msg) if msg.is_empty() => {}
                Failure::Config(msg) | Failure::Io(msg) | Failure::Numerical(msg) => eprintln!("error: {msg}"),
            }
            f.code()
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(report(&execute()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use capmc::experiments::Abort;

    #[test]
    fn exit_codes() {
        let mut output = ExperimentOutput::default();
        assert_eq!(report(&Ok(Some(output.clone()))), 0);
        assert_eq!(report(&Ok(None)), 0);
        output.aborts.push(Abort {
            replica: 2,
            reason: "box escape".into(),
        });
        assert_eq!(report(&Ok(Some(output))), 3);
        assert_eq!(report(&Err(Failure::Config("--dim: missing".into()))), 2);
        assert_eq!(report(&Err(Failure::Io("disk full".into()))), 4);
        assert_eq!(report(&Err(Failure::Numerical("quadrature".into()))), 1);
    }

    #[test]
    fn library_errors_name_the_flag() {
        let e = Error::InvalidParameter {
            name: "sigmas",
            reason: "σ must be below 1".into(),
        };
        match Failure::from(e) {
            Failure::Config(msg) => assert!(msg.starts_with("--sigma:"), "{msg}"),
            other => panic!("{other:?}"),
        }
        assert_eq!(flag_for("x_start"), "x-start");
    }
}
