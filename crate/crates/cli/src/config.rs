//! Experiment configuration: a flat key=value file, every key mirrored by
//! a CLI flag, with explicit CLI values overriding the file and the file
//! overriding built-in defaults. The resolved configuration fully
//! determines a run given the dataset files.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::RunError;

/// Weight family trained by the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    /// Binary synaptic weights with real biases.
    Binary,
    /// Real weights trained by the variance-scaled mean update.
    Real,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Binary => "binary",
            Mode::Real => "real",
        })
    }
}

/// How hidden layers connect to the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum InputMode {
    /// Fully connected layers sized by `hidden`.
    Vector,
    /// Sliding-block receptive fields sized by `block`.
    Spatial,
}

impl fmt::Display for InputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputMode::Vector => "vector",
            InputMode::Spatial => "spatial",
        })
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub input_mode: InputMode,
    /// Hidden unit counts (vector mode).
    pub hidden: Vec<usize>,
    /// Receptive-field block sizes, one per hidden layer (spatial mode).
    pub block: Vec<usize>,
    pub dropout: bool,
    /// Keep probability under dropout.
    pub p: f64,
    pub epochs: u32,
    /// Training-subset size; `0` trains on the full split.
    pub subset: usize,
    pub seed_init: u64,
    pub seed_shuffle: u64,
    pub seed_dropout: u64,
    pub data_dir: PathBuf,
    pub out: PathBuf,
}

/// Unresolved values from one source (file or command line); `None` means
/// "not specified here".
#[derive(Debug, Clone, Default)]
pub struct PartialConfig {
    pub mode: Option<Mode>,
    pub input_mode: Option<InputMode>,
    pub hidden: Option<Vec<usize>>,
    pub block: Option<Vec<usize>>,
    pub dropout: Option<bool>,
    pub p: Option<f64>,
    pub epochs: Option<u32>,
    pub subset: Option<usize>,
    pub seed_init: Option<u64>,
    pub seed_shuffle: Option<u64>,
    pub seed_dropout: Option<u64>,
    pub data_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl PartialConfig {
    /// Overlays `over` on `self`: values present in `over` win.
    pub fn overridden_by(self, over: PartialConfig) -> PartialConfig {
        PartialConfig {
            mode: over.mode.or(self.mode),
            input_mode: over.input_mode.or(self.input_mode),
            hidden: over.hidden.or(self.hidden),
            block: over.block.or(self.block),
            dropout: over.dropout.or(self.dropout),
            p: over.p.or(self.p),
            epochs: over.epochs.or(self.epochs),
            subset: over.subset.or(self.subset),
            seed_init: over.seed_init.or(self.seed_init),
            seed_shuffle: over.seed_shuffle.or(self.seed_shuffle),
            seed_dropout: over.seed_dropout.or(self.seed_dropout),
            data_dir: over.data_dir.or(self.data_dir),
            out: over.out.or(self.out),
        }
    }

    /// Fills defaults and validates. `out` has no default and must come
    /// from some source.
    pub fn resolve(self) -> Result<ExperimentConfig, RunError> {
        let cfg = ExperimentConfig {
            mode: self.mode.unwrap_or(Mode::Binary),
            input_mode: self.input_mode.unwrap_or(InputMode::Vector),
            hidden: self.hidden.unwrap_or_default(),
            block: self.block.unwrap_or_default(),
            dropout: self.dropout.unwrap_or(false),
            p: self.p.unwrap_or(0.8),
            epochs: self.epochs.unwrap_or(120),
            subset: self.subset.unwrap_or(0),
            seed_init: self.seed_init.unwrap_or(1),
            seed_shuffle: self.seed_shuffle.unwrap_or(2),
            seed_dropout: self.seed_dropout.unwrap_or(3),
            data_dir: self.data_dir.unwrap_or_else(|| PathBuf::from("data")),
            out: self.out.ok_or_else(|| RunError::config("no output directory: pass --out or set out= in the config file"))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        match self.input_mode {
            InputMode::Vector => {
                if self.hidden.is_empty() {
                    return Err(RunError::config("vector mode needs at least one hidden layer (--hidden)"));
                }
                if let Some(&n) = self.hidden.iter().find(|&&n| n == 0) {
                    return Err(RunError::config(format!("hidden layer size {n} must be positive")));
                }
            }
            InputMode::Spatial => {
                if self.block.is_empty() {
                    return Err(RunError::config("spatial mode needs at least one block size (--block)"));
                }
                if let Some(&b) = self.block.iter().find(|&&b| b == 0) {
                    return Err(RunError::config(format!("block size {b} must be positive")));
                }
            }
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(RunError::config(format!("keep probability {} outside (0, 1]", self.p)));
        }
        Ok(())
    }

    /// Serializes in the same key=value format [`parse_file`] reads, so a
    /// run's recorded configuration can seed another run.
    pub fn to_file_string(&self) -> String {
        let subset = self.subset.to_string();
        format!(
            "mode = {}\ninput_mode = {}\nhidden = {}\nblock = {}\ndropout = {}\np = {}\nepochs = {}\nsubset = {}\nseed_init = {}\nseed_shuffle = {}\nseed_dropout = {}\ndata_dir = {}\nout = {}\n",
            self.mode,
            self.input_mode,
            join_list(&self.hidden),
            join_list(&self.block),
            self.dropout,
            self.p,
            self.epochs,
            subset,
            self.seed_init,
            self.seed_shuffle,
            self.seed_dropout,
            self.data_dir.display(),
            self.out.display(),
        )
    }
}

fn join_list(values: &[usize]) -> String {
    if values.is_empty() {
        "none".to_string()
    } else {
        values.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
    }
}

/// Parses the flat key=value config format: one `key = value` pair per
/// line, `#` comments, blank lines ignored, unknown keys rejected.
pub fn parse_file(path: &Path) -> Result<PartialConfig, RunError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RunError::config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_text(&text).map_err(|e| RunError::config(format!("{}: {e}", path.display())))
}

fn parse_config_text(text: &str) -> Result<PartialConfig, String> {
    let mut seen = BTreeMap::new();
    let mut out = PartialConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value, got {raw:?}", lineno + 1))?;
        let (key, value) = (key.trim(), value.trim());
        if seen.insert(key.to_string(), lineno).is_some() {
            return Err(format!("line {}: duplicate key {key:?}", lineno + 1));
        }
        let fail = |e: String| format!("line {}: key {key:?}: {e}", lineno + 1);
        match key {
            "mode" => {
                out.mode = Some(match value {
                    "binary" => Mode::Binary,
                    "real" => Mode::Real,
                    other => return Err(fail(format!("expected binary|real, got {other:?}"))),
                })
            }
            "input_mode" => {
                out.input_mode = Some(match value {
                    "vector" => InputMode::Vector,
                    "spatial" => InputMode::Spatial,
                    other => return Err(fail(format!("expected vector|spatial, got {other:?}"))),
                })
            }
            "hidden" => out.hidden = Some(parse_list(value).map_err(fail)?),
            "block" => out.block = Some(parse_list(value).map_err(fail)?),
            "dropout" => out.dropout = Some(value.parse::<bool>().map_err(|e| fail(e.to_string()))?),
            "p" => out.p = Some(value.parse::<f64>().map_err(|e| fail(e.to_string()))?),
            "epochs" => out.epochs = Some(value.parse::<u32>().map_err(|e| fail(e.to_string()))?),
            "subset" => out.subset = Some(value.parse::<usize>().map_err(|e| fail(e.to_string()))?),
            "seed_init" => out.seed_init = Some(value.parse::<u64>().map_err(|e| fail(e.to_string()))?),
            "seed_shuffle" => out.seed_shuffle = Some(value.parse::<u64>().map_err(|e| fail(e.to_string()))?),
            "seed_dropout" => out.seed_dropout = Some(value.parse::<u64>().map_err(|e| fail(e.to_string()))?),
            "data_dir" => out.data_dir = Some(PathBuf::from(value)),
            "out" => out.out = Some(PathBuf::from(value)),
            other => return Err(format!("line {}: unknown key {other:?}", lineno + 1)),
        }
    }
    Ok(out)
}

/// Comma-separated positive integers, or `none` for an empty list.
fn parse_list(value: &str) -> Result<Vec<usize>, String> {
    if value == "none" {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|part| part.trim().parse::<usize>().map_err(|e| format!("{part:?}: {e}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolved(text: &str) -> Result<ExperimentConfig, RunError> {
        parse_config_text(text).map_err(RunError::config)?.resolve()
    }

    #[test]
    fn round_trips_through_the_file_format() {
        let cfg = resolved(
            "mode = real\ninput_mode = spatial\nblock = 14\ndropout = true\np = 0.8\n\
             epochs = 7\nsubset = 500\nseed_init = 10\nseed_shuffle = 11\nseed_dropout = 12\n\
             data_dir = somewhere\nout = results\n",
        )
        .unwrap();
        let again = parse_config_text(&cfg.to_file_string()).unwrap().resolve().unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn comments_blanks_and_spacing_are_tolerated() {
        let cfg = resolved("# a run\n\n  hidden=800 , 800  # two layers\nout=o\n").unwrap();
        assert_eq!(cfg.hidden, vec![800, 800]);
        assert_eq!(cfg.mode, Mode::Binary);
    }

    #[test]
    fn explicit_values_override_the_file() {
        let file = parse_config_text("hidden = 100\nepochs = 3\nout = a\n").unwrap();
        let cli = PartialConfig { epochs: Some(9), out: Some(PathBuf::from("b")), ..Default::default() };
        let cfg = file.overridden_by(cli).resolve().unwrap();
        assert_eq!((cfg.epochs, cfg.out.as_path(), cfg.hidden.as_slice()), (9, Path::new("b"), &[100][..]));
    }

    #[test]
    fn defaults_match_the_published_protocol() {
        let cfg = resolved("hidden = 800\nout = o\n").unwrap();
        assert_eq!(cfg.p, 0.8);
        assert_eq!(cfg.epochs, 120);
        assert!(!cfg.dropout);
        assert_eq!(cfg.subset, 0);
        assert_eq!((cfg.seed_init, cfg.seed_shuffle, cfg.seed_dropout), (1, 2, 3));
    }

    #[test]
    fn bad_inputs_are_rejected_with_line_numbers() {
        for (text, needle) in [
            ("hidden\nout = o\n", "expected key = value"),
            ("colour = blue\nout = o\n", "unknown key"),
            ("mode = ternary\nout = o\n", "expected binary|real"),
            ("epochs = -1\nout = o\n", "invalid digit"),
            ("hidden = 800\nhidden = 100\nout = o\n", "duplicate key"),
        ] {
            let err = resolved(text).unwrap_err().to_string();
            assert!(err.contains(needle), "{text:?} -> {err}");
        }
    }

    #[test]
    fn structural_validation_is_enforced() {
        assert!(resolved("out = o\n").unwrap_err().to_string().contains("hidden"));
        assert!(resolved("input_mode = spatial\nout = o\n").unwrap_err().to_string().contains("block"));
        assert!(resolved("hidden = 800\np = 0\nout = o\n").unwrap_err().to_string().contains("keep probability"));
        assert!(resolved("hidden = 800\n").unwrap_err().to_string().contains("output directory"));
    }

}
