//! Run configuration.
//!
//! A run is described by one TOML file with `[data]` and `[run]` sections
//! plus optional `[folds]`, `[eval]` and `[nn]` overrides. The file is
//! validated into a [`RunConfig`] before any data is loaded, so model/set
//! mismatches and malformed grids fail fast. The resolved configuration is
//! serialized back into every output directory for provenance.
//!
//! ```toml
//! [data]
//! canonical = "data/cases.csv"     # relative paths resolve against the config file
//!
//! [run]
//! out_dir = "runs/demo"
//! horizons = [14, 28, 42]
//! seeds = [42]
//! workers = 4
//! models = ["d-daily", "es-daily", { name = "nn2", set = 3 }]
//! ```

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use epibench::error::{Error, Result};
use epibench::eval::Averaging;
use epibench::folds::FoldPlan;
use epibench::nn::NnKind;
use serde::{Deserialize, Serialize};

/// Every model family the grid can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    DDaily,
    DSum,
    EsDaily,
    EsSum,
    MlLr,
    MlSvr,
    Nn(NnKind),
}

impl ModelKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "d-daily" => Ok(ModelKind::DDaily),
            "d-sum" => Ok(ModelKind::DSum),
            "es-daily" => Ok(ModelKind::EsDaily),
            "es-sum" => Ok(ModelKind::EsSum),
            "ml-lr" => Ok(ModelKind::MlLr),
            "ml-svr" => Ok(ModelKind::MlSvr),
            "nn1" => Ok(ModelKind::Nn(NnKind::Nn1)),
            "nn2" => Ok(ModelKind::Nn(NnKind::Nn2)),
            other => Err(Error::Config(format!("unknown model {other:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::DDaily => "d-daily",
            ModelKind::DSum => "d-sum",
            ModelKind::EsDaily => "es-daily",
            ModelKind::EsSum => "es-sum",
            ModelKind::MlLr => "ml-lr",
            ModelKind::MlSvr => "ml-svr",
            ModelKind::Nn(kind) => kind.name(),
        }
    }

    pub fn is_nn(self) -> bool {
        matches!(self, ModelKind::Nn(_))
    }

    /// Training-data regime used when the config gives only a model name:
    /// per-region models run on their own region, the networks pool both
    /// countries.
    pub fn default_set(self) -> SetLevel {
        if self.is_nn() {
            SetLevel::World
        } else {
            SetLevel::Single
        }
    }

}

/// Training-data regime: one region, all regions of one country, or all
/// regions of both countries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetLevel {
    Single,
    Country,
    World,
}

impl SetLevel {
    pub fn number(self) -> usize {
        match self {
            SetLevel::Single => 1,
            SetLevel::Country => 2,
            SetLevel::World => 3,
        }
    }

    pub fn from_number(n: usize) -> Result<Self> {
        match n {
            1 => Ok(SetLevel::Single),
            2 => Ok(SetLevel::Country),
            3 => Ok(SetLevel::World),
            other => Err(Error::Config(format!("data set must be 1, 2 or 3, got {other}"))),
        }
    }
}

/// One validated grid entry: a model plus the data regime it trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelEntry {
    pub kind: ModelKind,
    pub set: SetLevel,
}

impl ModelEntry {
    fn new(kind: ModelKind, set: SetLevel) -> Result<Self> {
        if kind.is_nn() && set == SetLevel::Single {
            return Err(Error::Config(format!(
                "model {} needs set 2 or 3: one region is not enough data to train a network",
                kind.name()
            )));
        }
        if !kind.is_nn() && set != SetLevel::Single {
            return Err(Error::Config(format!(
                "model {} is fit per region and only runs on set 1",
                kind.name()
            )));
        }
        Ok(ModelEntry { kind, set })
    }

    /// Column name in results and summary tables. Networks carry their data
    /// regime ("nn2-set3") because the same architecture scores differently
    /// per regime; everything else runs on set 1 and keeps its plain name.
    pub fn label(&self) -> String {
        if self.kind.is_nn() {
            format!("{}-set{}", self.kind.name(), self.set.number())
        } else {
            self.kind.name().to_string()
        }
    }
}

/// Trimmed training budgets for smoke tests; `None` keeps the benchmark
/// defaults (1000 epochs, batch 200, patience 100).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NnOverrides {
    pub max_epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub patience: Option<usize>,
}

/// A fully validated run description.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub canonical: PathBuf,
    /// Synthesize one whole-country series per country (treated as an extra
    /// region, as the benchmark tables do).
    pub add_country_totals: bool,
    pub out_dir: PathBuf,
    pub horizons: Vec<usize>,
    pub seeds: Vec<u64>,
    pub workers: usize,
    pub models: Vec<ModelEntry>,
    pub plan: FoldPlan,
    pub averaging: Averaging,
    pub nn: NnOverrides,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    data: DataSection,
    run: RunSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    folds: Option<FoldsSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eval: Option<EvalSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nn: Option<NnSection>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataSection {
    canonical: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    add_country_totals: Option<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    out_dir: PathBuf,
    horizons: Vec<usize>,
    seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    workers: Option<usize>,
    models: Vec<ModelSpec>,
}

/// A model is either a bare name (default set) or a name/set table.
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum ModelSpec {
    Name(String),
    Detailed { name: String, set: usize },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FoldsSection {
    start: String,
    end: String,
    boundaries: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalSection {
    averaging: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NnSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    max_epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    patience: Option<usize>,
}

/// The forecast horizons the benchmark defines targets for.
pub const VALID_HORIZONS: [usize; 3] = [14, 28, 42];

fn parse_date(s: &str, what: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|e| Error::Config(format!("bad {what} date {s:?}: {e}")))
}

/// Joins a possibly-relative path onto the config file's directory, so a
/// config travels with the data it names regardless of the working
/// directory.
fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: RawConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        RunConfig::from_raw(raw, base)
    }

    fn from_raw(raw: RawConfig, base: &Path) -> Result<Self> {
        let mut horizons = raw.run.horizons;
        if horizons.is_empty() {
            return Err(Error::Config("horizons must not be empty".into()));
        }
        for &fh in &horizons {
            if !VALID_HORIZONS.contains(&fh) {
                return Err(Error::Config(format!(
                    "horizon {fh} is not one of {VALID_HORIZONS:?}"
                )));
            }
        }
        horizons.sort_unstable();
        horizons.dedup();

        let seeds = raw.run.seeds;
        if seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("duplicate seeds".into()));
        }

        let workers = raw.run.workers.unwrap_or(1);
        if workers == 0 {
            return Err(Error::Config("workers must be >= 1".into()));
        }

        if raw.run.models.is_empty() {
            return Err(Error::Config("models must not be empty".into()));
        }
        let mut models = Vec::with_capacity(raw.run.models.len());
        for spec in &raw.run.models {
            let entry = match spec {
                ModelSpec::Name(name) => {
                    let kind = ModelKind::parse(name)?;
                    ModelEntry::new(kind, kind.default_set())?
                }
                ModelSpec::Detailed { name, set } => {
                    ModelEntry::new(ModelKind::parse(name)?, SetLevel::from_number(*set)?)?
                }
            };
            if models.contains(&entry) {
                return Err(Error::Config(format!("duplicate model {}", entry.label())));
            }
            models.push(entry);
        }

        let plan = match &raw.folds {
            None => FoldPlan::default(),
            Some(section) => {
                let start = parse_date(&section.start, "fold start")?;
                let end = parse_date(&section.end, "fold end")?;
                let boundaries = section
                    .boundaries
                    .iter()
                    .map(|s| parse_date(s, "fold boundary"))
                    .collect::<Result<Vec<_>>>()?;
                FoldPlan::new(start, end, boundaries)?
            }
        };

        let averaging = match raw.eval.as_ref().map(|e| e.averaging.as_str()) {
            None | Some("fold-then-region") => Averaging::FoldThenRegion,
            Some("pooled") => Averaging::Pooled,
            Some(other) => {
                return Err(Error::Config(format!(
                    "averaging must be \"fold-then-region\" or \"pooled\", got {other:?}"
                )))
            }
        };

        let nn = match &raw.nn {
            None => NnOverrides::default(),
            Some(section) => {
                for (field, value) in [
                    ("max_epochs", section.max_epochs),
                    ("batch_size", section.batch_size),
                    ("patience", section.patience),
                ] {
                    if value == Some(0) {
                        return Err(Error::Config(format!("nn.{field} must be >= 1")));
                    }
                }
                NnOverrides {
                    max_epochs: section.max_epochs,
                    batch_size: section.batch_size,
                    patience: section.patience,
                }
            }
        };

        Ok(RunConfig {
            canonical: resolve(base, &raw.data.canonical),
            add_country_totals: raw.data.add_country_totals.unwrap_or(true),
            out_dir: resolve(base, &raw.run.out_dir),
            horizons,
            seeds,
            workers,
            models,
            plan,
            averaging,
            nn,
        })
    }

    /// Command-line overrides applied after the file is validated.
    pub fn apply_overrides(
        &mut self,
        seed: Option<u64>,
        workers: Option<usize>,
        out: Option<PathBuf>,
    ) -> Result<()> {
        if let Some(seed) = seed {
            self.seeds = vec![seed];
        }
        if let Some(workers) = workers {
            if workers == 0 {
                return Err(Error::Config("workers must be >= 1".into()));
            }
            self.workers = workers;
        }
        if let Some(out) = out {
            self.out_dir = out;
        }
        Ok(())
    }

    /// The resolved configuration as TOML, written next to each run's
    /// outputs so a finished run documents exactly what produced it.
    pub fn to_toml(&self) -> String {
        let is_default_plan = self.plan == FoldPlan::default();
        let raw = RawConfig {
            data: DataSection {
                canonical: self.canonical.clone(),
                add_country_totals: Some(self.add_country_totals),
            },
            run: RunSection {
                out_dir: self.out_dir.clone(),
                horizons: self.horizons.clone(),
                seeds: self.seeds.clone(),
                workers: Some(self.workers),
                models: self
                    .models
                    .iter()
                    .map(|m| ModelSpec::Detailed {
                        name: m.kind.name().to_string(),
                        set: m.set.number(),
                    })
                    .collect(),
            },
            folds: (!is_default_plan).then(|| FoldsSection {
                start: self.plan.global_start.to_string(),
                end: self.plan.global_end.to_string(),
                boundaries: self.plan.boundaries.iter().map(|d| d.to_string()).collect(),
            }),
            eval: Some(EvalSection {
                averaging: match self.averaging {
                    Averaging::FoldThenRegion => "fold-then-region".to_string(),
                    Averaging::Pooled => "pooled".to_string(),
                },
            }),
            nn: (self.nn != NnOverrides::default()).then(|| NnSection {
                max_epochs: self.nn.max_epochs,
                batch_size: self.nn.batch_size,
                patience: self.nn.patience,
            }),
        };
        toml::to_string(&raw).expect("config serializes")
    }
}
