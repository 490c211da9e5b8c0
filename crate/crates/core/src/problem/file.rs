//! JSON problem files.
//!
//! ```json
//! { "m": 2, "n": 3, "b": [5.0000000000000000e0, 5.0000000000000000e0],
//!   "C": { "format": "dense", "data": [[1, 1, 1], [1, 1, 1]] },
//!   "utilities": { "variant": "quadratic", "a": [...], "sigma": 1.0000000000000001e-1 } }
//! ```
//!
//! Reals are written with 17 significant digits so that loading a saved
//! file reproduces every bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use super::{Network, NetworkProblem, RoutingMatrix, UtilitySpec};
use crate::error::{Error, Result};

/// Storage layout of the routing matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatrixFormat {
    #[default]
    Dense,
    Coo,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    m: usize,
    n: usize,
    #[serde(serialize_with = "decimal_vec")]
    b: Vec<f64>,
    #[serde(rename = "C")]
    c: MatrixFile,
    utilities: UtilityFile,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "format", content = "data", rename_all = "lowercase")]
enum MatrixFile {
    Dense(Vec<Vec<u8>>),
    Coo(Vec<[usize; 2]>),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
enum UtilityFile {
    Quadratic {
        #[serde(serialize_with = "decimal_vec")]
        a: Vec<f64>,
        #[serde(serialize_with = "decimal")]
        sigma: f64,
    },
    Log {
        #[serde(serialize_with = "decimal")]
        x_lo: f64,
        #[serde(serialize_with = "decimal")]
        x_hi: f64,
    },
}

fn raw(v: f64) -> Box<RawValue> {
    RawValue::from_string(format!("{v:.16e}")).expect("finite reals format as JSON numbers")
}

fn decimal<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    raw(*v).serialize(s)
}

fn decimal_vec<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|&x| raw(x)))
}

pub fn save_problem(problem: &NetworkProblem, path: impl AsRef<Path>) -> Result<()> {
    save_problem_with(problem, path, MatrixFormat::default())
}

pub fn save_problem_with(problem: &NetworkProblem, path: impl AsRef<Path>, format: MatrixFormat) -> Result<()> {
    fs::write(path, to_json(problem, format)?)?;
    Ok(())
}

pub fn load_problem(path: impl AsRef<Path>) -> Result<NetworkProblem> {
    from_json(&fs::read_to_string(path)?)
}

pub(crate) fn to_json(problem: &NetworkProblem, format: MatrixFormat) -> Result<String> {
    problem.validate()?;
    let routing = problem.routing();
    let c = match format {
        MatrixFormat::Dense => MatrixFile::Dense(routing.to_dense()),
        MatrixFormat::Coo => {
            let mut pairs = Vec::with_capacity(routing.nnz());
            for j in 0..routing.links() {
                pairs.extend(routing.row(j).iter().map(|&k| [j, k]));
            }
            MatrixFile::Coo(pairs)
        }
    };
    let utilities = match &problem.utilities {
        UtilitySpec::Quadratic { a, sigma } => UtilityFile::Quadratic { a: a.clone(), sigma: *sigma },
        UtilitySpec::Logarithmic { x_lo, x_hi } => UtilityFile::Log { x_lo: *x_lo, x_hi: *x_hi },
    };
    let file = ProblemFile { m: problem.links(), n: problem.users(), b: problem.capacities().to_vec(), c, utilities };
    serde_json::to_string_pretty(&file).map_err(|e| Error::Parse { field: String::new(), message: e.to_string() })
}

pub(crate) fn from_json(text: &str) -> Result<NetworkProblem> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ProblemFile = serde_path_to_error::deserialize(de)
        .map_err(|e| Error::Parse { field: e.path().to_string(), message: e.inner().to_string() })?;

    let routing = match file.c {
        MatrixFile::Dense(rows) => {
            if rows.len() != file.m || rows.iter().any(|r| r.len() != file.n) {
                return Err(Error::Validation(format!("dense routing matrix must be {}×{}", file.m, file.n)));
            }
            RoutingMatrix::from_dense(&rows)?
        }
        MatrixFile::Coo(pairs) => {
            let mut columns = vec![Vec::new(); file.n];
            for [j, k] in pairs {
                if j >= file.m || k >= file.n {
                    return Err(Error::Validation(format!("routing entry [{j}, {k}] outside {}×{}", file.m, file.n)));
                }
                columns[k].push(j);
            }
            RoutingMatrix::from_columns(file.m, columns)?
        }
    };
    let utilities = match file.utilities {
        UtilityFile::Quadratic { a, sigma } => UtilitySpec::Quadratic { a, sigma },
        UtilityFile::Log { x_lo, x_hi } => UtilitySpec::Logarithmic { x_lo, x_hi },
    };
    NetworkProblem::new(Network::new(routing, file.b)?, utilities)
}
