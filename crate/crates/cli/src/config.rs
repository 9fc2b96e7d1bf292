//! Parameter tables, config-file merging and value parsing. Every value
//! resolves as flag > config file > default; `CAPMC_WORKERS` sits between
//! the config file and the built-in worker default.

use std::collections::BTreeMap;
use std::path::Path;

use clap::{Arg, ArgMatches, Command};
use serde_json::{Map, Number, Value};

use crate::Failure;

pub struct Param {
    pub name: &'static str,
    pub help: &'static str,
    pub default: Option<&'static str>,
    pub required: bool,
}

const fn required(name: &'static str, help: &'static str) -> Param {
    Param {
        name,
        help,
        default: None,
        required: true,
    }
}

const fn optional(name: &'static str, help: &'static str, default: &'static str) -> Param {
    Param {
        name,
        help,
        default: Some(default),
        required: false,
    }
}

/// Flags shared by every subcommand. `out`, `workers` and `dump-path` have no
/// default value: absence means stdout, the rayon default, and no dump.
pub const COMMON: &[Param] = &[
    optional("seed", "Master seed", "0"),
    optional("format", "Output format: csv or jsonl", "csv"),
    Param {
        name: "out",
        help: "Output table path; a sidecar <out>.meta.json is written next to it",
        default: None,
        required: false,
    },
    Param {
        name: "workers",
        help: "Worker threads (default: $CAPMC_WORKERS, else all cores)",
        default: None,
        required: false,
    },
];

const SIGMA_GRID: &str = "Gaussian scales: start:stop:halving, start:stop:linear:k, or a comma list";

pub struct Subcommand {
    pub name: &'static str,
    pub about: &'static str,
    pub params: &'static [Param],
    /// Subcommands that simulate a Brownian path accept `--dump-path`.
    pub dumps_path: bool,
}

pub const SUBCOMMANDS: &[Subcommand] = &[
    Subcommand {
        name: "strong-law",
        about: "Normalized Gaussian self-intersection energies S_σ along Brownian paths",
        params: &[
            required("dim", "Dimension of the Brownian motion (≥ 2)"),
            required("steps", "Time steps on [0, 1]"),
            required("sigma", SIGMA_GRID),
            optional("replicas", "Independent paths", "1"),
        ],
        dumps_path: true,
    },
    Subcommand {
        name: "moments",
        about: "Quadrature values of E S_σ and the second-moment term I₁",
        params: &[required("dim", "Dimension (≥ 2)"), required("sigma", SIGMA_GRID)],
        dumps_path: false,
    },
    Subcommand {
        name: "cap-equiv",
        about: "Capacity of the Brownian trace against the unit square",
        params: &[
            required("dim", "Dimension of the Brownian motion (≥ 2)"),
            required("steps", "Time steps on [0, 1]"),
            required("alpha", "Riesz exponents: grid syntax or comma list"),
            optional("family", "Kernel family: riesz or logadj", "riesz"),
            optional("n-max", "Finest dyadic level", "10"),
            optional("replicas", "Independent paths", "1"),
        ],
        dumps_path: true,
    },
    Subcommand {
        name: "sausage",
        about: "Dyadic box counts of the Brownian trace",
        params: &[
            required("dim", "Dimension of the Brownian motion (≥ 2)"),
            required("steps", "Time steps on [0, 1]"),
            optional("n-min", "Coarsest dyadic level", "3"),
            required("n-max", "Finest dyadic level"),
            optional("replicas", "Independent paths", "1"),
        ],
        dumps_path: true,
    },
    Subcommand {
        name: "zero-set",
        about: "Excursion counts, box counts and local time of the 1-d Brownian zero set",
        params: &[
            required("steps", "Time steps on [0, 1]"),
            required("delta", "Excursion length thresholds: grid syntax or comma list"),
            optional("n-min", "Coarsest dyadic level", "4"),
            required("n-max", "Finest dyadic level"),
            optional("replicas", "Independent paths", "1"),
        ],
        dumps_path: true,
    },
    Subcommand {
        name: "approach",
        about: "Probability that a stable process approaches a Brownian trace within ε",
        params: &[
            required("dim", "Dimension (≥ 3)"),
            required("alpha", "Stability index, 0 < α ≤ min(2, d-2)"),
            required("steps", "Time steps of the Brownian trace"),
            required("eps", "Neighborhood radii: grid syntax or comma list"),
            required("paths", "Monte Carlo paths per ε"),
            optional("max-jumps", "Jump cap per path before it is censored", "10000"),
            optional("widening", "Bracket widening factor", "2"),
            Param {
                name: "x-start",
                help: "Start point as a comma list (default: distance ≈ 1 from the trace)",
                default: None,
                required: false,
            },
        ],
        dumps_path: true,
    },
    Subcommand {
        name: "equilibrium",
        about: "Equilibrium measure and capacity of a point set under a bounded kernel",
        params: &[
            required(
                "points",
                "Point file: one point per line, comma or whitespace separated",
            ),
            required("kernel", "Kernel spec, e.g. smooth:eps=0.01:riesz:alpha=1"),
            optional("tol", "Relative duality-gap tolerance", "1e-6"),
            optional("max-iters", "Iteration cap", "50000"),
        ],
        dumps_path: false,
    },
];

const DUMP_PATH: Param = Param {
    name: "dump-path",
    help: "Write replica 0's Brownian path as CSV (t,x1,...,xd) to this file",
    default: None,
    required: false,
};

impl Subcommand {
    pub fn all_params(&self) -> impl Iterator<Item = &Param> {
        let dump = self.dumps_path.then_some(&DUMP_PATH);
        self.params.iter().chain(COMMON).chain(dump)
    }
}

pub fn command() -> Command {
    let mut cmd = Command::new("capmc")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Kernel energies and capacities of simulated Brownian fractal sets")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for sub in SUBCOMMANDS {
        let mut c = Command::new(sub.name).about(sub.about).arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("JSON object of flag values; flags given on the command line override it"),
        );
        for p in sub.all_params() {
            let mut help = p.help.to_string();
            if let Some(d) = p.default {
                help.push_str(&format!(" [default: {d}]"));
            } else if p.required {
                help.push_str(" [required]");
            }
            c = c.arg(Arg::new(p.name).long(p.name).value_name("VALUE").help(help));
        }
        cmd = cmd.subcommand(c);
    }
    cmd
}

/// Resolved flag values of one invocation.
pub struct Settings {
    values: BTreeMap<&'static str, Value>,
    /// Typed, defaults-filled values echoed into the sidecar.
    resolved: BTreeMap<&'static str, Value>,
}

fn config_error(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

impl Settings {
    pub fn resolve(sub: &Subcommand, matches: &ArgMatches) -> Result<Self, Failure> {
        let mut file = match matches.get_one::<String>("config") {
            Some(path) => read_config(Path::new(path))?,
            None => Map::new(),
        };
        let mut values = BTreeMap::new();
        for p in sub.all_params() {
            let from_file = file.remove(p.name);
            let value = match matches.get_one::<String>(p.name) {
                Some(v) => Some(Value::String(v.clone())),
                None => from_file,
            };
            let value = value.or_else(|| {
                (p.name == "workers")
                    .then(|| std::env::var("CAPMC_WORKERS").ok().map(Value::String))
                    .flatten()
            });
            if let Some(v) = value.or_else(|| p.default.map(|d| Value::String(d.to_string()))) {
                values.insert(p.name, v);
            }
        }
        if let Some(key) = file.keys().next() {
            return Err(config_error(format!(
                "--config: unknown key `{key}` for `{}`",
                sub.name
            )));
        }
        Ok(Self {
            values,
            resolved: BTreeMap::new(),
        })
    }

    pub fn resolved(&self) -> &BTreeMap<&'static str, Value> {
        &self.resolved
    }

    fn raw(&self, name: &'static str) -> Result<&Value, Failure> {
        self.values
            .get(name)
            .ok_or_else(|| config_error(format!("missing required flag --{name}")))
    }

    fn record(&mut self, name: &'static str, v: Value) {
        self.resolved.insert(name, v);
    }

    pub fn is_set(&self, name: &str) -> bool {
        self.values.contains_key(name)
    }

    pub fn string(&mut self, name: &'static str) -> Result<String, Failure> {
        let s = match self.raw(name)? {
            Value::String(s) => s.clone(),
            other => return Err(config_error(format!("--{name}: expected a string, got {other}"))),
        };
        self.record(name, Value::String(s.clone()));
        Ok(s)
    }

    pub fn optional_string(&mut self, name: &'static str) -> Result<Option<String>, Failure> {
        if self.is_set(name) {
            self.string(name).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn uint(&mut self, name: &'static str) -> Result<u64, Failure> {
        let bad =
            |v: &dyn std::fmt::Display| config_error(format!("--{name}: expected a nonnegative integer, got {v}"));
        let n = match self.raw(name)? {
            Value::Number(n) => n.as_u64().ok_or_else(|| bad(n))?,
            Value::String(s) => s.trim().parse().map_err(|_| bad(s))?,
            other => return Err(bad(other)),
        };
        self.record(name, Value::from(n));
        Ok(n)
    }

    /// A positive integer that fits in `usize`.
    pub fn count(&mut self, name: &'static str) -> Result<usize, Failure> {
        let n = self.uint(name)?;
        if n == 0 {
            return Err(config_error(format!("--{name}: must be at least 1")));
        }
        usize::try_from(n).map_err(|_| config_error(format!("--{name}: {n} is too large")))
    }

    pub fn optional_count(&mut self, name: &'static str) -> Result<Option<usize>, Failure> {
        if self.is_set(name) {
            self.count(name).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn real(&mut self, name: &'static str) -> Result<f64, Failure> {
        let x = match self.raw(name)? {
            Value::Number(n) => n.as_f64().expect("JSON numbers are finite"),
            Value::String(s) => parse_real(name, s)?,
            other => return Err(config_error(format!("--{name}: expected a number, got {other}"))),
        };
        self.record(name, number(x));
        Ok(x)
    }

    /// A grid (`start:stop:halving`, `start:stop:linear:k`), a comma list, a
    /// single number, or a JSON array of numbers.
    pub fn grid(&mut self, name: &'static str) -> Result<Vec<f64>, Failure> {
        let xs = match self.raw(name)? {
            Value::Number(n) => vec![n.as_f64().expect("JSON numbers are finite")],
            Value::String(s) => parse_grid(name, s)?,
            Value::Array(items) => items
                .iter()
                .map(|v| {
                    v.as_f64()
                        .ok_or_else(|| config_error(format!("--{name}: expected numbers, got {v}")))
                })
                .collect::<Result<_, _>>()?,
            other => return Err(config_error(format!("--{name}: expected a grid, got {other}"))),
        };
        self.record(name, Value::Array(xs.iter().map(|&x| number(x)).collect()));
        Ok(xs)
    }

    pub fn optional_list(&mut self, name: &'static str) -> Result<Option<Vec<f64>>, Failure> {
        if self.is_set(name) {
            self.grid(name).map(Some)
        } else {
            Ok(None)
        }
    }
}

fn number(x: f64) -> Value {
    Number::from_f64(x).map_or_else(|| Value::String(x.to_string()), Value::Number)
}

fn read_config(path: &Path) -> Result<Map<String, Value>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Io(format!("--config: cannot read {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(config_error("--config: expected a JSON object of flag values")),
        Err(e) => Err(config_error(format!("--config: {e}"))),
    }
}

fn parse_real(name: &str, s: &str) -> Result<f64, Failure> {
    match s.trim().parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(config_error(format!("--{name}: expected a finite number, got `{s}`"))),
    }
}

pub fn parse_grid(name: &str, s: &str) -> Result<Vec<f64>, Failure> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = |why: &str| config_error(format!("--{name}: {why} in `{s}`"));
    match parts.as_slice() {
        [single] => single.split(',').map(|x| parse_real(name, x)).collect(),
        [start, stop, "halving"] => {
            let (start, stop) = (parse_real(name, start)?, parse_real(name, stop)?);
            if !(start >= stop && stop > 0.0) {
                return Err(bad("a halving grid needs start ≥ stop > 0"));
            }
            let mut xs = vec![start];
            while xs[xs.len() - 1] / 2.0 >= stop * (1.0 - 1e-12) {
                xs.push(xs[xs.len() - 1] / 2.0);
            }
            Ok(xs)
        }
        [start, stop, "linear", k] => {
            let (start, stop) = (parse_real(name, start)?, parse_real(name, stop)?);
            let k: usize = k.parse().map_err(|_| bad("the point count must be an integer"))?;
            match k {
                0 => Err(bad("a linear grid needs at least one point")),
                1 => Ok(vec![start]),
                _ => Ok((0..k)
                    .map(|i| start + (stop - start) * i as f64 / (k - 1) as f64)
                    .collect()),
            }
        }
        _ => Err(bad("expected start:stop:halving, start:stop:linear:k or a comma list")),
    }
}
