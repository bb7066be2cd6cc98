//! TOML instance documents.
//!
//! ```toml
//! [chain]
//! transition = [[0.9, 0.1], [0.2, 0.8]]   # rows of P, row-stochastic
//! initial_eta = [1.0, 0.0]                # distribution of eta(0)
//! horizon = 5
//!
//! [control]                # or [filter] with F, G, L, H, Sigma
//! A = [[[0.9]], [[1.2]]]   # one matrix per mode, rows as nested arrays
//! B = [[1.0]]              # a single matrix is used for every mode
//! C = [[1.0], [0.0]]
//! D = [[0.0], [1.0]]
//! E = [[1.0]]
//! Delta = [[1.0]]
//!
//! [simulation]             # optional
//! samples = 100000
//! seed = 7
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::export::{nested_to_family, nested_to_mat};
use crate::family::{Mat, MatrixFamily};
use crate::model::{ControlPlant, FilterPlant, MarkovSpec, Plant};

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum FamilyEntry {
    Single(Rows),
    PerMode(Vec<Rows>),
}

impl FamilyEntry {
    fn build(&self, name: &str, modes: usize) -> Result<MatrixFamily> {
        let ctx = |e: Error| Error::Config(format!("{name}: {}", strip(&e)));
        match self {
            FamilyEntry::Single(m) => Ok(MatrixFamily::repeat(modes, nested_to_mat(m).map_err(ctx)?)),
            FamilyEntry::PerMode(ms) => {
                if ms.len() != modes {
                    return Err(Error::Config(format!(
                        "{name}: {} matrices given for {modes} modes",
                        ms.len()
                    )));
                }
                nested_to_family(ms).map_err(ctx)
            }
        }
    }
}

fn strip(e: &Error) -> String {
    match e {
        Error::Config(s) => s.clone(),
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainSection {
    transition: Rows,
    initial_eta: Vec<f64>,
    horizon: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlSection {
    #[serde(rename = "A")]
    a: FamilyEntry,
    #[serde(rename = "B")]
    b: FamilyEntry,
    #[serde(rename = "C")]
    c: FamilyEntry,
    #[serde(rename = "D")]
    d: FamilyEntry,
    #[serde(rename = "E")]
    e: FamilyEntry,
    #[serde(rename = "Delta")]
    delta: Rows,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FilterSection {
    #[serde(rename = "F")]
    f: FamilyEntry,
    #[serde(rename = "G")]
    g: FamilyEntry,
    #[serde(rename = "L")]
    l: FamilyEntry,
    #[serde(rename = "H")]
    h: FamilyEntry,
    #[serde(rename = "Sigma")]
    sigma: Rows,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub samples: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    chain: ChainSection,
    control: Option<ControlSection>,
    filter: Option<FilterSection>,
    simulation: Option<SimulationSection>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Instance {
    Control(ControlPlant),
    Filter(FilterPlant),
}

impl Instance {
    pub fn chain(&self) -> &MarkovSpec {
        match self {
            Instance::Control(p) => &p.chain,
            Instance::Filter(p) => &p.chain,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Instance::Control(_) => "control",
            Instance::Filter(_) => "filter",
        }
    }
}

/// A parsed and validated problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceDocument {
    pub instance: Instance,
    pub simulation: Option<SimulationSection>,
}

impl InstanceDocument {
    /// Parses and checks every standing assumption. Syntax errors carry the
    /// line and column; assumption violations name the mode or row.
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawDocument = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let modes = raw.chain.transition.len();
        if modes == 0 {
            return Err(Error::Config("chain.transition must have at least one row".into()));
        }
        let transition = nested_to_mat(&raw.chain.transition)
            .map_err(|e| Error::Config(format!("chain.transition: {}", strip(&e))))?;
        let chain = MarkovSpec::new_unchecked(transition, raw.chain.initial_eta, raw.chain.horizon);
        let chain_violations = chain.validate();
        if !chain_violations.is_empty() {
            return Err(Error::Assumptions(chain_violations));
        }
        let chain = MarkovSpec::new(chain.transition().clone(), chain.initial_eta().to_vec(), chain.horizon())?;
        let instance = match (raw.control, raw.filter) {
            (Some(c), None) => {
                let plant = ControlPlant {
                    a: c.a.build("A", modes)?,
                    b: c.b.build("B", modes)?,
                    c: c.c.build("C", modes)?,
                    d: c.d.build("D", modes)?,
                    e: c.e.build("E", modes)?,
                    delta: square(&c.delta, "Delta")?,
                    chain,
                };
                check(&plant)?;
                Instance::Control(plant)
            }
            (None, Some(f)) => {
                let plant = FilterPlant {
                    f: f.f.build("F", modes)?,
                    g: f.g.build("G", modes)?,
                    l: f.l.build("L", modes)?,
                    h: f.h.build("H", modes)?,
                    sigma: square(&f.sigma, "Sigma")?,
                    chain,
                };
                check(&plant)?;
                Instance::Filter(plant)
            }
            (Some(_), Some(_)) => {
                return Err(Error::Config("document has both [control] and [filter] sections".into()))
            }
            (None, None) => return Err(Error::Config("document needs a [control] or [filter] section".into())),
        };
        Ok(Self {
            instance,
            simulation: raw.simulation,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

fn square(rows: &Rows, name: &str) -> Result<Mat> {
    nested_to_mat(rows).map_err(|e| Error::Config(format!("{name}: {}", strip(&e))))
}

fn check<P: Plant>(plant: &P) -> Result<()> {
    let v = plant.validate();
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::Assumptions(v))
    }
}
