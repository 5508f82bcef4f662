//! Instance files.
//!
//! ```toml
//! horizon = 2
//!
//! [cost]
//! comm = 0.8
//! distortion = { kind = "indicator" }      # or { kind = "power", k = 2.0 }
//!
//! [energy]
//! battery_cap = 1
//! initial = { offset = 1, weights = [1.0] }
//! harvest = { offset = 0, weights = [1.0] }
//!
//! [source]
//! kind = "random_walk"                     # "iid" | "gaussian_radial"
//! init = { offset = -1, weights = [0.25, 0.5, 0.25] }
//! noise = { offset = -1, weights = [0.25, 0.5, 0.25] }
//!
//! # gaussian_radial only; init and noise are then omitted
//! # [source.gaussian]
//! # dim = 2
//! # lambda = 1.0
//! # s1 = 1.0
//! # s2 = 1.0
//! ```
//!
//! A pmf is the weight of `offset`, `offset + 1`, …. Weights must sum to
//! one within [`PARSE_TOL`] and are renormalized.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dist::Pmf;
use crate::model::{Distortion, GaussianSpec, ProblemSpec, SourceKind, SourceSpec};
use crate::{Error, Result};

/// Slack on the total mass of a pmf read from a file.
pub const PARSE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    horizon: usize,
    cost: CostSection,
    energy: EnergySection,
    source: SourceSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CostSection {
    comm: f64,
    distortion: Distortion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnergySection {
    battery_cap: usize,
    initial: PmfEntry,
    harvest: PmfEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceSection {
    kind: SourceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    init: Option<PmfEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise: Option<PmfEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gaussian: Option<GaussianSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PmfEntry {
    offset: i64,
    weights: Vec<f64>,
}

impl PmfEntry {
    fn to_pmf(&self, key: &str) -> Result<Pmf> {
        Pmf::with_tolerance(self.offset, self.weights.clone(), PARSE_TOL)
            .map_err(|e| Error::InvalidSpec(format!("{key}: {e}")))
    }

    fn from_pmf(p: &Pmf) -> Self {
        Self { offset: p.lo(), weights: p.weights().to_vec() }
    }
}

/// A parsed instance and the non-fatal remarks made while reading it.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub spec: ProblemSpec,
    pub warnings: Vec<String>,
}

/// Reads an instance file.
pub fn parse_spec(path: impl AsRef<Path>) -> Result<Parsed> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidSpec(format!("{}: {e}", path.display())))?;
    parse_spec_str(&text).map_err(|e| match e {
        Error::InvalidSpec(m) => Error::InvalidSpec(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Parses instance text.
pub fn parse_spec_str(text: &str) -> Result<Parsed> {
    let file: SpecFile = toml::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))?;
    let mut warnings = Vec::new();
    let initial = file.energy.initial.to_pmf("energy.initial")?;
    let harvest = file.energy.harvest.to_pmf("energy.harvest")?;
    let cap = file.energy.battery_cap as i64;
    if harvest.iter().any(|(n, w)| n > cap && w > 0.0) {
        warnings.push(format!("energy.harvest: mass above battery_cap = {cap} is moved onto the cap"));
    }
    let s = &file.source;
    let source = match s.kind {
        SourceKind::GaussianRadial => {
            if s.init.is_some() || s.noise.is_some() {
                warnings.push("source: init and noise are ignored for a gaussian_radial source".into());
            }
            let g = s.gaussian.clone().ok_or_else(|| Error::InvalidSpec("source.gaussian: missing".into()))?;
            SourceSpec::gaussian(g)
        }
        kind => {
            let need = |p: &Option<PmfEntry>, key: &str| -> Result<Pmf> {
                p.as_ref().ok_or_else(|| Error::InvalidSpec(format!("{key}: missing")))?.to_pmf(key)
            };
            if s.gaussian.is_some() {
                warnings.push("source.gaussian: ignored for an integer source".into());
            }
            let (init, noise) = (need(&s.init, "source.init")?, need(&s.noise, "source.noise")?);
            match kind {
                SourceKind::Iid => SourceSpec::iid(init, noise),
                _ => SourceSpec::random_walk(init, noise),
            }
        }
    };
    let spec = ProblemSpec::new(
        file.horizon,
        file.cost.comm,
        file.energy.battery_cap,
        initial,
        harvest,
        source,
        file.cost.distortion,
    )?;
    Ok(Parsed { spec, warnings })
}

/// Writes `spec` in the file format; [`parse_spec_str`] reads it back to an
/// equal instance.
pub fn to_toml(spec: &ProblemSpec) -> String {
    let gaussian = spec.source.kind == SourceKind::GaussianRadial;
    let file = SpecFile {
        horizon: spec.horizon,
        cost: CostSection { comm: spec.comm_cost, distortion: spec.distortion },
        energy: EnergySection {
            battery_cap: spec.battery_cap,
            initial: PmfEntry::from_pmf(&spec.initial_energy),
            harvest: PmfEntry::from_pmf(&spec.harvest),
        },
        source: SourceSection {
            kind: spec.source.kind,
            init: (!gaussian).then(|| PmfEntry::from_pmf(&spec.source.init)),
            noise: (!gaussian).then(|| PmfEntry::from_pmf(&spec.source.noise)),
            gaussian: spec.source.gaussian.clone(),
        },
    };
    toml::to_string(&file).expect("instance serializes")
}
