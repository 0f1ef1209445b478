//! Plain-text run configuration: `key = value` lines under one section per
//! module. Unknown sections or keys are errors, values are validated against
//! the ranges the modules declare.

use std::path::{Path, PathBuf};

use progspace::seeding;

use crate::error::{CliError, Result};

/// How an mtry option is specified in the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtrySpec {
    /// ceil(sqrt(d))
    Sqrt,
    /// ceil(d / 3)
    Third,
    Fixed(usize),
}

impl MtrySpec {
    pub fn resolve(&self, d: usize) -> usize {
        let v = match self {
            MtrySpec::Sqrt => (d as f64).sqrt().ceil() as usize,
            MtrySpec::Third => (d as f64 / 3.0).ceil() as usize,
            MtrySpec::Fixed(v) => *v,
        };
        v.clamp(1, d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Space,
    Zones,
    Roc,
    Apoe4,
    Reversion,
    ControlAge,
}

impl PlotKind {
    pub const ALL: [PlotKind; 6] = [
        PlotKind::Space,
        PlotKind::Zones,
        PlotKind::Roc,
        PlotKind::Apoe4,
        PlotKind::Reversion,
        PlotKind::ControlAge,
    ];

    pub fn token(self) -> &'static str {
        match self {
            PlotKind::Space => "space",
            PlotKind::Zones => "zones",
            PlotKind::Roc => "roc",
            PlotKind::Apoe4 => "apoe4",
            PlotKind::Reversion => "reversion",
            PlotKind::ControlAge => "control_age",
        }
    }

    pub fn from_token(tok: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.token() == tok)
    }
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub subjects: Option<usize>,
    pub seed: Option<u64>,
    pub missing_rate: Option<f64>,
    pub reversion_fraction: Option<f64>,
    pub noise_sd: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct NmfConfig {
    pub rank: usize,
    pub seed: Option<u64>,
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone)]
pub struct GmmConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub restarts: usize,
    pub reg: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct ForestConfig {
    pub n_trees: Vec<usize>,
    pub max_depth: Vec<Option<usize>>,
    pub mtry: Vec<MtrySpec>,
    pub min_samples_leaf: Vec<usize>,
    pub folds: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default)]
pub struct PredictConfig {
    pub model: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub horizon: u32,
    pub out_dir: PathBuf,
    pub master_seed: u64,
    pub cohort_input: Option<PathBuf>,
    pub cohort_schema: Option<PathBuf>,
    pub synth: SynthConfig,
    pub nmf: NmfConfig,
    pub gmm: GmmConfig,
    pub forest: ForestConfig,
    pub predict: PredictConfig,
    pub plot_kinds: Vec<PlotKind>,
    /// Verbatim config file content, echoed into the run manifest.
    pub echo: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            horizon: 24,
            out_dir: PathBuf::from("out"),
            master_seed: 42,
            cohort_input: None,
            cohort_schema: None,
            synth: SynthConfig {
                subjects: None,
                seed: None,
                missing_rate: None,
                reversion_fraction: None,
                noise_sd: None,
            },
            nmf: NmfConfig { rank: 2, seed: None, tol: 1e-6, max_iter: 2000 },
            gmm: GmmConfig { k_min: 1, k_max: 6, restarts: 5, reg: 1e-6, tol: 1e-6, max_iter: 500, seed: None },
            forest: ForestConfig {
                n_trees: vec![100, 300],
                max_depth: vec![Some(8), Some(16), None],
                mtry: vec![MtrySpec::Sqrt, MtrySpec::Third],
                min_samples_leaf: vec![1, 5],
                folds: 5,
                seed: None,
            },
            predict: PredictConfig::default(),
            plot_kinds: PlotKind::ALL.to_vec(),
            echo: String::new(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config `{}`: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig { echo: text.to_string(), ..Default::default() };
        let mut section: Option<String> = None;

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let name = name.trim();
                const SECTIONS: [&str; 8] =
                    ["pipeline", "cohort", "synth", "nmf", "gmm", "forest", "predict", "plot"];
                if !SECTIONS.contains(&name) {
                    return Err(CliError::Config(format!(
                        "line {line_no}: unknown section `[{name}]` (expected one of {SECTIONS:?})"
                    )));
                }
                section = Some(name.to_string());
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!(
                    "line {line_no}: expected `key = value`, got `{line}`"
                )));
            };
            let key = key.trim();
            let value = value.trim();
            let Some(section) = section.as_deref() else {
                return Err(CliError::Config(format!(
                    "line {line_no}: key `{key}` appears before any [section] header"
                )));
            };
            cfg.apply(section, key, value, line_no)?;
        }

        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, section: &str, key: &str, value: &str, line: usize) -> Result<()> {
        let bad_key = || {
            CliError::Config(format!("line {line}: unknown key `{key}` in section [{section}]"))
        };
        match section {
            "pipeline" => match key {
                "horizon" => self.horizon = parse_num(value, section, key, line)?,
                "out" => self.out_dir = PathBuf::from(value),
                "seed" => self.master_seed = parse_num(value, section, key, line)?,
                _ => return Err(bad_key()),
            },
            "cohort" => match key {
                "input" => self.cohort_input = Some(PathBuf::from(value)),
                "schema" => self.cohort_schema = Some(PathBuf::from(value)),
                _ => return Err(bad_key()),
            },
            "synth" => match key {
                "subjects" => self.synth.subjects = Some(parse_num(value, section, key, line)?),
                "seed" => self.synth.seed = Some(parse_num(value, section, key, line)?),
                "missing_rate" => self.synth.missing_rate = Some(parse_num(value, section, key, line)?),
                "reversion_fraction" => {
                    self.synth.reversion_fraction = Some(parse_num(value, section, key, line)?)
                }
                "noise_sd" => self.synth.noise_sd = Some(parse_num(value, section, key, line)?),
                _ => return Err(bad_key()),
            },
            "nmf" => match key {
                "rank" => self.nmf.rank = parse_num(value, section, key, line)?,
                "seed" => self.nmf.seed = Some(parse_num(value, section, key, line)?),
                "tol" => self.nmf.tol = parse_num(value, section, key, line)?,
                "max_iter" => self.nmf.max_iter = parse_num(value, section, key, line)?,
                _ => return Err(bad_key()),
            },
            "gmm" => match key {
                "k_min" => self.gmm.k_min = parse_num(value, section, key, line)?,
                "k_max" => self.gmm.k_max = parse_num(value, section, key, line)?,
                "restarts" => self.gmm.restarts = parse_num(value, section, key, line)?,
                "reg" => self.gmm.reg = parse_num(value, section, key, line)?,
                "tol" => self.gmm.tol = parse_num(value, section, key, line)?,
                "max_iter" => self.gmm.max_iter = parse_num(value, section, key, line)?,
                "seed" => self.gmm.seed = Some(parse_num(value, section, key, line)?),
                _ => return Err(bad_key()),
            },
            "forest" => match key {
                "n_trees" => self.forest.n_trees = parse_list(value, section, key, line)?,
                "max_depth" => {
                    let mut out = Vec::new();
                    for tok in value.split(',').map(str::trim) {
                        if tok == "none" {
                            out.push(None);
                        } else {
                            out.push(Some(parse_num(tok, section, key, line)?));
                        }
                    }
                    self.forest.max_depth = out;
                }
                "mtry" => {
                    let mut out = Vec::new();
                    for tok in value.split(',').map(str::trim) {
                        out.push(match tok {
                            "sqrt" => MtrySpec::Sqrt,
                            "third" => MtrySpec::Third,
                            _ => MtrySpec::Fixed(parse_num(tok, section, key, line)?),
                        });
                    }
                    self.forest.mtry = out;
                }
                "min_samples_leaf" => {
                    self.forest.min_samples_leaf = parse_list(value, section, key, line)?
                }
                "folds" => self.forest.folds = parse_num(value, section, key, line)?,
                "seed" => self.forest.seed = Some(parse_num(value, section, key, line)?),
                _ => return Err(bad_key()),
            },
            "predict" => match key {
                "model" => self.predict.model = Some(PathBuf::from(value)),
                "input" => self.predict.input = Some(PathBuf::from(value)),
                "schema" => self.predict.schema = Some(PathBuf::from(value)),
                "output" => self.predict.output = Some(PathBuf::from(value)),
                _ => return Err(bad_key()),
            },
            "plot" => match key {
                "kinds" => {
                    let mut kinds = Vec::new();
                    for tok in value.split(',').map(str::trim) {
                        let kind = PlotKind::from_token(tok).ok_or_else(|| {
                            CliError::Config(format!("line {line}: unknown plot kind `{tok}`"))
                        })?;
                        kinds.push(kind);
                    }
                    self.plot_kinds = kinds;
                }
                _ => return Err(bad_key()),
            },
            _ => unreachable!("sections are validated before keys"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon != 24 && self.horizon != 48 {
            return Err(CliError::Config(format!("horizon must be 24 or 48, got {}", self.horizon)));
        }
        if self.nmf.rank == 0 {
            return Err(CliError::Config("nmf rank must be at least 1".into()));
        }
        if !(self.nmf.tol > 0.0) || self.nmf.max_iter == 0 {
            return Err(CliError::Config("nmf tol must be positive and max_iter nonzero".into()));
        }
        if self.gmm.k_min == 0 || self.gmm.k_min > self.gmm.k_max {
            return Err(CliError::Config(format!(
                "gmm k range [{}, {}] is invalid",
                self.gmm.k_min, self.gmm.k_max
            )));
        }
        if self.gmm.restarts == 0 || self.gmm.max_iter == 0 {
            return Err(CliError::Config("gmm restarts and max_iter must be nonzero".into()));
        }
        if !(self.gmm.reg > 0.0) || !(self.gmm.tol > 0.0) {
            return Err(CliError::Config("gmm reg and tol must be positive".into()));
        }
        if self.forest.folds < 2 {
            return Err(CliError::Config("forest folds must be at least 2".into()));
        }
        if self.forest.n_trees.is_empty()
            || self.forest.max_depth.is_empty()
            || self.forest.mtry.is_empty()
            || self.forest.min_samples_leaf.is_empty()
        {
            return Err(CliError::Config("forest grid lists must be non-empty".into()));
        }
        if self.forest.n_trees.iter().any(|&n| n == 0)
            || self.forest.min_samples_leaf.iter().any(|&n| n == 0)
        {
            return Err(CliError::Config("forest n_trees and min_samples_leaf must be positive".into()));
        }
        if self.forest.mtry.iter().any(|m| matches!(m, MtrySpec::Fixed(0))) {
            return Err(CliError::Config("forest mtry values must be positive".into()));
        }
        if let Some(rate) = self.synth.missing_rate {
            if !(0.0..=0.5).contains(&rate) {
                return Err(CliError::Config("synth missing_rate must lie in [0, 0.5]".into()));
            }
        }
        if let Some(rf) = self.synth.reversion_fraction {
            if !(0.0..=0.1).contains(&rf) {
                return Err(CliError::Config("synth reversion_fraction must lie in [0, 0.1]".into()));
            }
        }
        if let Some(sd) = self.synth.noise_sd {
            if !(sd > 0.0) {
                return Err(CliError::Config("synth noise_sd must be positive".into()));
            }
        }
        if self.plot_kinds.is_empty() {
            return Err(CliError::Config("plot kinds must be non-empty".into()));
        }
        Ok(())
    }

    pub fn synth_seed(&self) -> u64 {
        self.synth.seed.unwrap_or_else(|| seeding::derive(self.master_seed, &[1]))
    }

    pub fn nmf_seed(&self) -> u64 {
        self.nmf.seed.unwrap_or_else(|| seeding::derive(self.master_seed, &[2]))
    }

    pub fn gmm_seed(&self) -> u64 {
        self.gmm.seed.unwrap_or_else(|| seeding::derive(self.master_seed, &[3]))
    }

    pub fn forest_seed(&self) -> u64 {
        self.forest.seed.unwrap_or_else(|| seeding::derive(self.master_seed, &[4]))
    }
}

fn parse_num<T: std::str::FromStr>(value: &str, section: &str, key: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| {
        CliError::Config(format!("line {line}: bad value `{value}` for [{section}] {key}"))
    })
}

fn parse_list<T: std::str::FromStr>(value: &str, section: &str, key: &str, line: usize) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|tok| parse_num(tok.trim(), section, key, line))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_config() {
        let text = "\
# run configuration
[pipeline]
horizon = 48
out = runs/demo
seed = 7

[synth]
subjects = 100

[nmf]
rank = 2
tol = 1e-7

[gmm]
k_min = 2
k_max = 4

[forest]
n_trees = 50
max_depth = 8,none
mtry = sqrt,20
min_samples_leaf = 1

[plot]
kinds = space,roc
";
        let cfg = PipelineConfig::parse(text).unwrap();
        assert_eq!(cfg.horizon, 48);
        assert_eq!(cfg.out_dir, PathBuf::from("runs/demo"));
        assert_eq!(cfg.synth.subjects, Some(100));
        assert_eq!(cfg.nmf.tol, 1e-7);
        assert_eq!(cfg.forest.max_depth, vec![Some(8), None]);
        assert_eq!(cfg.forest.mtry, vec![MtrySpec::Sqrt, MtrySpec::Fixed(20)]);
        assert_eq!(cfg.plot_kinds, vec![PlotKind::Space, PlotKind::Roc]);
    }

    #[test]
    fn unknown_keys_and_sections_are_errors() {
        assert!(PipelineConfig::parse("[pipeline]\nhorizons = 24\n").is_err());
        assert!(PipelineConfig::parse("[warp]\nspeed = 9\n").is_err());
        assert!(PipelineConfig::parse("horizon = 24\n").is_err());
    }

    #[test]
    fn invalid_ranges_are_rejected() {
        assert!(PipelineConfig::parse("[pipeline]\nhorizon = 36\n").is_err());
        assert!(PipelineConfig::parse("[gmm]\nk_min = 4\nk_max = 2\n").is_err());
        assert!(PipelineConfig::parse("[forest]\nfolds = 1\n").is_err());
        assert!(PipelineConfig::parse("[synth]\nreversion_fraction = 0.5\n").is_err());
    }

    #[test]
    fn mtry_resolution_clamps_to_d() {
        assert_eq!(MtrySpec::Sqrt.resolve(436), 21);
        assert_eq!(MtrySpec::Third.resolve(436), 146);
        assert_eq!(MtrySpec::Fixed(900).resolve(436), 436);
    }

    #[test]
    fn defaults_are_valid() {
        PipelineConfig::default().validate().unwrap();
    }
}
