//! Run configuration and the small text formats accepted on the command line.

use cptp_hmc::duality::{self, ChoiState};
use cptp_hmc::family::FamilyKind;
use cptp_hmc::tomo::{self, CountsData, PriorSpec, ProbTable, TomographyScheme};
use cptp_hmc::{fixtures, Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    Desk,
    Paper,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepSize {
    Auto,
    Value(f64),
}

impl std::str::FromStr for StepSize {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(StepSize::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(StepSize::Value(v)),
            _ => Err(format!("step size must be 'auto' or a positive number, got '{s}'")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub chains: usize,
    pub draws: Option<usize>,
    pub burn_in: Option<usize>,
    pub step_size: StepSize,
    pub scheme: String,
    pub counts: Option<String>,
    pub family: FamilyKind,
    pub prior: String,
    pub property: Option<String>,
    pub scale: Scale,
    pub out: PathBuf,
    pub channel: Option<String>,
    pub copies: Option<u64>,
    pub truth: Option<String>,
    pub assess: bool,
    pub probabilities: bool,
}

pub const COMMANDS: [&str; 5] = ["simulate", "sample", "regions", "marginal", "model-select"];

impl RunConfig {
    /// Checks the configuration before any sampling starts.
    pub fn validate(&self) -> Result<()> {
        if !COMMANDS.contains(&self.command.as_str()) {
            return Err(Error::Config(format!("unknown command '{}'", self.command)));
        }
        if self.chains == 0 {
            return Err(Error::Config("chains must be at least 1".into()));
        }
        if self.draws == Some(0) {
            return Err(Error::Config("draws must be positive".into()));
        }
        let scheme = parse_scheme(&self.scheme)?;
        let prior = parse_prior(&self.prior, &scheme)?;
        if self.family != FamilyKind::General && scheme.dim() != 2 {
            return Err(Error::Config(format!("family {} needs a qubit scheme", self.family)));
        }
        match self.command.as_str() {
            "simulate" => {
                parse_channel(self.channel.as_deref().ok_or_else(|| Error::Config("simulate needs --channel".into()))?)?;
                if self.copies.is_none() {
                    return Err(Error::Config("simulate needs --copies".into()));
                }
            }
            "regions" | "marginal" | "model-select" => {
                match self.counts.as_deref() {
                    Some(c) => load_counts(c)?.check_scheme(&scheme)?,
                    None if self.command == "model-select" && self.assess => {}
                    None => return Err(Error::Config(format!("{} needs --counts", self.command))),
                }
                if self.command == "marginal" {
                    let name = self.property.as_deref().ok_or_else(|| Error::Config("marginal needs --property".into()))?;
                    cptp_hmc::marginal::Property::builtin(name, self.family, scheme.dim())?;
                }
                if self.command == "model-select" && (scheme.dim() != 2 || !matches!(prior, PriorSpec::Primitive)) {
                    return Err(Error::Config("model selection uses the tetrahedron scheme and the primitive prior".into()));
                }
            }
            _ => {}
        }
        if let Some(t) = &self.truth {
            parse_channel(t)?;
        }
        Ok(())
    }
}

pub fn parse_scheme(spec: &str) -> Result<TomographyScheme> {
    match spec {
        "tetrahedron" => Ok(tomo::scheme_tetrahedron()),
        "qutrit-sic" => Ok(tomo::scheme_qutrit_sic()),
        path => TomographyScheme::read_json(std::fs::File::open(path).map_err(|e| Error::Config(format!("scheme '{path}': {e}")))?),
    }
}

/// Counts CSV path, or `fixture:table1` etc.
pub fn load_counts(spec: &str) -> Result<CountsData> {
    match spec {
        "fixture:table1" => Ok(fixtures::table1()),
        "fixture:table2" => Ok(fixtures::table2()),
        "fixture:table3" => Ok(fixtures::table3()),
        path => CountsData::read_csv(std::fs::File::open(path).map_err(|e| Error::Config(format!("counts '{path}': {e}")))?),
    }
}

fn kv(args: &str) -> Result<Vec<(String, f64)>> {
    if args.is_empty() {
        return Ok(Vec::new());
    }
    args.split(',')
        .map(|p| {
            let (k, v) = p.split_once('=').ok_or_else(|| Error::Config(format!("expected key=value, got '{p}'")))?;
            let x = v.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad number '{v}'")))?;
            Ok((k.trim().to_string(), x))
        })
        .collect()
}

fn take(pairs: &[(String, f64)], key: &str, default: Option<f64>) -> Result<f64> {
    pairs
        .iter()
        .find(|(k, _)| k == key)
        .map(|p| p.1)
        .or(default)
        .ok_or_else(|| Error::Config(format!("missing parameter '{key}'")))
}

/// Channel from `name[:k=v,...]`, e.g. `amplitude-damping:gamma=0.4`.
pub fn parse_channel(spec: &str) -> Result<ChoiState> {
    let (name, args) = spec.split_once(':').unwrap_or((spec, ""));
    let p = kv(args)?;
    let known: &[&str] = match name {
        "identity" | "depolarizing" => &["d"],
        "amplitude-damping" => &["gamma"],
        "qutrit-amplitude-damping" => &["g1", "g2"],
        "pauli" => &["px", "py", "pz"],
        "dephasing" => &["p"],
        other => return Err(Error::Config(format!("unknown channel '{other}'"))),
    };
    if let Some((k, _)) = p.iter().find(|(k, _)| !known.contains(&k.as_str())) {
        return Err(Error::Config(format!("unknown parameter '{k}' for {name}")));
    }
    let dim = || -> Result<usize> {
        let d = take(&p, "d", Some(2.0))?;
        if d.fract() != 0.0 || d < 2.0 {
            return Err(Error::Config(format!("bad dimension {d}")));
        }
        Ok(d as usize)
    };
    let bad = |e: Error| Error::Config(format!("channel '{spec}': {e}"));
    match name {
        "identity" => Ok(duality::identity_channel(dim()?)),
        "depolarizing" => Ok(duality::depolarizing_channel(dim()?)),
        "amplitude-damping" => {
            duality::choi_from_kraus(&duality::amplitude_damping(take(&p, "gamma", None)?).map_err(bad)?).map_err(bad)
        }
        "qutrit-amplitude-damping" => duality::choi_from_kraus(
            &duality::qutrit_amplitude_damping(take(&p, "g1", None)?, take(&p, "g2", None)?).map_err(bad)?,
        )
        .map_err(bad),
        "pauli" => duality::pauli_channel(take(&p, "px", Some(0.0))?, take(&p, "py", Some(0.0))?, take(&p, "pz", Some(0.0))?).map_err(bad),
        _ => duality::dephasing_channel(take(&p, "p", None)?).map_err(bad),
    }
}

/// Headerless CSV of probabilities, one row per input.
pub fn read_prob_table(path: &Path) -> Result<ProbTable> {
    let mut rd = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_path(path)?;
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|v| v.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad probability '{v}' in {}", path.display()))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// `primitive` or `conjugate:beta=<β>,ref=<file or channel spec>`.
pub fn parse_prior(spec: &str, scheme: &TomographyScheme) -> Result<PriorSpec> {
    if spec == "primitive" {
        return Ok(PriorSpec::Primitive);
    }
    let rest = spec.strip_prefix("conjugate:").ok_or_else(|| Error::Config(format!("unknown prior '{spec}'")))?;
    let (beta_part, reference) = rest
        .split_once(",ref=")
        .ok_or_else(|| Error::Config("conjugate prior needs beta=<value>,ref=<file>".into()))?;
    let beta = beta_part
        .strip_prefix("beta=")
        .and_then(|b| b.parse::<f64>().ok())
        .ok_or_else(|| Error::Config(format!("bad conjugate strength '{beta_part}'")))?;
    let path = Path::new(reference);
    let table = if path.exists() {
        read_prob_table(path)?
    } else {
        duality::born_probabilities(&parse_channel(reference)?, scheme)?
    };
    PriorSpec::conjugate(beta, table)
}
