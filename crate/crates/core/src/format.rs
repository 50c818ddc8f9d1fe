//! JSON problem and body files.
//!
//! A problem file carries the dimension, the norm, the data records and
//! optional modulus and construction parameters:
//!
//! ```json
//! {
//!   "dimension": 2,
//!   "norm": { "kind": "euclidean" },
//!   "data": [ { "point": [1, 0], "normal": [1, 0] } ],
//!   "modulus": { "kind": "power", "K": 1, "alpha": 0.5 },
//!   "construction": { "r": 0.5, "delta": 0.25 }
//! }
//! ```
//!
//! Under an `l^p` norm a record gives `"dual"` in place of `"normal"`. Body
//! files embed the problem; C^{1,omega} bodies store their parameters and
//! are rebuilt on load.

use serde::{Deserialize, Serialize};

use crate::body_c11::BodyC11;
use crate::body_c1omega::{BodyC1Omega, BuildOptions, Construction};
use crate::envelope::EnvelopeBackend;
use crate::error::{Error, Result};
use crate::feasibility::{Datum, TangencyProblem, UNIT_TOLERANCE};
use crate::fixtures::FixtureSpec;
use crate::geometry::{NormKind, NormSpace};
use crate::modulus::ModulusSpec;

fn euclidean_norm() -> NormKind {
    NormKind::Euclidean
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataRecord {
    pub point: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dual: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstructionParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub dimension: usize,
    #[serde(default = "euclidean_norm")]
    pub norm: NormKind,
    pub data: Vec<DataRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulus: Option<ModulusSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub construction: Option<ConstructionParams>,
    /// Generator that produced the data, when it came from a fixture.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<FixtureSpec>,
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text)
        .map_err(|e| Error::Input(format!("{what}: line {}, column {}: {e}", e.line(), e.column())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self> {
        parse_json(text, "problem file")
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }

    pub fn from_problem(problem: &TangencyProblem) -> Self {
        let euclidean = problem.space.is_euclidean();
        ProblemFile {
            dimension: problem.dimension(),
            norm: problem.space.kind,
            data: problem
                .data
                .iter()
                .map(|d| DataRecord {
                    point: d.point.clone(),
                    normal: euclidean.then(|| d.normal.clone()),
                    dual: (!euclidean).then(|| d.normal.clone()),
                })
                .collect(),
            modulus: None,
            construction: None,
            fixture: None,
        }
    }

    /// Validates every record and assembles the problem.
    pub fn to_problem(&self) -> Result<TangencyProblem> {
        let space = NormSpace {
            kind: self.norm,
            dimension: self.dimension,
        };
        space.validate()?;
        if self.data.is_empty() {
            return Err(Error::Input("problem file has no data records".into()));
        }
        let n = self.dimension;
        let mut data = Vec::with_capacity(self.data.len());
        for (i, rec) in self.data.iter().enumerate() {
            let normal = match (&rec.normal, &rec.dual) {
                (Some(v), None) | (None, Some(v)) => v.clone(),
                (Some(_), Some(_)) => {
                    return Err(Error::Input(format!("record {i}: give either \"normal\" or \"dual\", not both")))
                }
                (None, None) => return Err(Error::Input(format!("record {i}: missing \"normal\" or \"dual\""))),
            };
            if rec.point.len() != n {
                return Err(Error::Input(format!(
                    "record {i}: point has {} coordinates, expected {n}",
                    rec.point.len()
                )));
            }
            if normal.len() != n {
                return Err(Error::Input(format!(
                    "record {i}: normal has {} coordinates, expected {n}",
                    normal.len()
                )));
            }
            if rec.point.iter().chain(&normal).any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("record {i}: non-finite coordinate")));
            }
            let len = space.dual_norm(&normal);
            if (len - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::Input(format!("record {i}: normal has norm {len}, expected 1")));
            }
            data.push(Datum {
                point: rec.point.clone(),
                normal,
            });
        }
        TangencyProblem::new(space, data)
    }
}

/// A constructed body of either class.
#[derive(Clone, Debug)]
pub enum Body {
    C11(BodyC11),
    C1Omega(BodyC1Omega),
}

impl Body {
    pub fn source(&self) -> &TangencyProblem {
        match self {
            Body::C11(b) => &b.source,
            Body::C1Omega(b) => b.source(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.source().dimension()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "lowercase", deny_unknown_fields)]
pub enum BodyFile {
    C11 {
        radius: f64,
        centers: Vec<Vec<f64>>,
        problem: ProblemFile,
    },
    C1omega {
        modulus: ModulusSpec,
        delta: f64,
        backend: EnvelopeBackend,
        cross_check_points: usize,
        seed: u64,
        problem: ProblemFile,
    },
    C1alpha {
        alpha: f64,
        delta: f64,
        backend: EnvelopeBackend,
        cross_check_points: usize,
        seed: u64,
        problem: ProblemFile,
    },
}

impl BodyFile {
    pub fn parse(text: &str) -> Result<Self> {
        parse_json(text, "body file")
    }

    pub fn to_json(&self) -> String {
        to_json(self)
    }

    pub fn from_body(body: &Body) -> Self {
        match body {
            Body::C11(b) => BodyFile::C11 {
                radius: b.radius,
                centers: b.centers.vertices.clone(),
                problem: ProblemFile::from_problem(&b.source),
            },
            Body::C1Omega(b) => {
                let opts = b.build_options();
                let problem = ProblemFile::from_problem(b.source());
                match b.construction() {
                    Construction::Hilbert { modulus, delta } => BodyFile::C1omega {
                        modulus,
                        delta,
                        backend: opts.backend.clone(),
                        cross_check_points: opts.cross_check_points,
                        seed: opts.seed,
                        problem,
                    },
                    Construction::DualAlpha { alpha, delta } => BodyFile::C1alpha {
                        alpha,
                        delta,
                        backend: opts.backend.clone(),
                        cross_check_points: opts.cross_check_points,
                        seed: opts.seed,
                        problem,
                    },
                }
            }
        }
    }

    /// Reassembles the body. C^{1,1} bodies are taken as stored, without
    /// re-running feasibility; the others are rebuilt from their parameters.
    pub fn into_body(&self) -> Result<Body> {
        match self {
            BodyFile::C11 {
                radius,
                centers,
                problem,
            } => Ok(Body::C11(BodyC11::from_parts(centers.clone(), *radius, problem.to_problem()?)?)),
            BodyFile::C1omega {
                modulus,
                delta,
                backend,
                cross_check_points,
                seed,
                problem,
            } => {
                let construction = Construction::Hilbert {
                    modulus: modulus.clone(),
                    delta: *delta,
                };
                let opts = BuildOptions {
                    backend: backend.clone(),
                    cross_check_points: *cross_check_points,
                    seed: *seed,
                };
                Ok(Body::C1Omega(BodyC1Omega::build(&problem.to_problem()?, &construction, &opts)?))
            }
            BodyFile::C1alpha {
                alpha,
                delta,
                backend,
                cross_check_points,
                seed,
                problem,
            } => {
                let construction = Construction::DualAlpha {
                    alpha: *alpha,
                    delta: *delta,
                };
                let opts = BuildOptions {
                    backend: backend.clone(),
                    cross_check_points: *cross_check_points,
                    seed: *seed,
                };
                Ok(Body::C1Omega(BodyC1Omega::build(&problem.to_problem()?, &construction, &opts)?))
            }
        }
    }
}
