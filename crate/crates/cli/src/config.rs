//! Run configuration: a TOML file of `[section]` headers and `key = value`
//! lines. Every key is optional and falls back to the default shown in
//! `csht <command> --help`.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use csht_core::model::ModelConfig;
use csht_core::panel::io::LoadOptions;
use csht_core::panel::DateRange;
use csht_core::synthetic::PanelTemplate;
use csht_core::{AssetPanel, DiscoveryConfig, Task, TimeSplit};
use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds of the repeated training runs; the first also seeds data
    /// generation.
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub data: DataSection,
    pub synthetic: SyntheticSection,
    pub split: SplitSection,
    pub discovery: DiscoverySection,
    pub model: ModelSection,
    pub evaluate: EvaluateSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2, 3, 4],
            out_dir: PathBuf::from("csht_out"),
            data: DataSection::default(),
            synthetic: SyntheticSection::default(),
            split: SplitSection::default(),
            discovery: DiscoverySection::default(),
            model: ModelSection::default(),
            evaluate: EvaluateSection::default(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Directory of panel CSVs. Empty means `<out_dir>/panel`, as written by
    /// `generate`.
    pub panel_dir: Option<PathBuf>,
    /// Rolling window of the realized-volatility feature; 0 disables it.
    pub volatility_window: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { panel_dir: None, volatility_window: 30 }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub assets: usize,
    pub planted_edges: usize,
    pub coefficient_min: f64,
    pub coefficient_max: f64,
    pub source_persistence: f64,
    pub news: bool,
    pub chains: bool,
    pub index: bool,
    pub noise_stdev: f64,
    pub length: usize,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        Self {
            assets: 4,
            planted_edges: 4,
            coefficient_min: 0.8,
            coefficient_max: 1.5,
            source_persistence: 0.3,
            news: false,
            chains: false,
            index: true,
            noise_stdev: 1.0,
            length: 1500,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train_fraction: f64,
    pub valid_fraction: f64,
    /// Explicit boundaries; when both are set they replace the fractions.
    #[serde(deserialize_with = "date_literal")]
    pub valid_start: Option<NaiveDate>,
    #[serde(deserialize_with = "date_literal")]
    pub test_start: Option<NaiveDate>,
}

/// Accepts a TOML local date (`2020-01-02`) or a quoted `YYYY-MM-DD` string.
fn date_literal<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<NaiveDate>, D::Error> {
    use serde::de::Error as _;
    let text = match toml::Value::deserialize(d)? {
        toml::Value::String(s) => s,
        toml::Value::Datetime(dt) if dt.time.is_none() && dt.offset.is_none() => dt.to_string(),
        other => return Err(D::Error::custom(format!("expected a date, got {other}"))),
    };
    NaiveDate::parse_from_str(&text, "%Y-%m-%d").map(Some).map_err(D::Error::custom)
}

impl Default for SplitSection {
    fn default() -> Self {
        Self { train_fraction: 0.7, valid_fraction: 0.15, valid_start: None, test_start: None }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DiscoverySection {
    pub max_lag: usize,
    pub alpha: f64,
    /// Sliding window length in days; 0 fits one graph on the training split
    /// and applies it to every date.
    pub window_length: usize,
    pub stride: usize,
}

impl Default for DiscoverySection {
    fn default() -> Self {
        Self { max_lag: 5, alpha: 0.01, window_length: 0, stride: 20 }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ffn_width: usize,
    pub lambda: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub use_causal_mask: bool,
    pub use_spherical_attention: bool,
    pub angular_cutoff: Option<f64>,
    pub input_noise: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub task: String,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            layers: m.layers,
            hidden: m.hidden,
            heads: m.heads,
            ffn_width: m.ffn_width,
            lambda: m.lambda,
            learning_rate: m.learning_rate,
            batch_size: m.batch_size,
            use_causal_mask: m.use_causal_mask,
            use_spherical_attention: m.use_spherical_attention,
            angular_cutoff: m.angular_cutoff,
            input_noise: m.input_noise,
            max_epochs: m.max_epochs,
            patience: m.patience,
            task: m.task.to_string(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub ndcg_k: usize,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self { ndcg_k: 10 }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.seeds.is_empty() {
            return bad("seeds must list at least one seed".into());
        }
        self.task()?;
        if let Some(dir) = &self.data.panel_dir {
            if !dir.is_dir() {
                return bad(format!("panel_dir {} does not exist", dir.display()));
            }
        }
        match (self.split.valid_start, self.split.test_start) {
            (Some(v), Some(t)) if v >= t => return bad(format!("valid_start {v} is not before test_start {t}")),
            (Some(_), None) | (None, Some(_)) => return bad("set both valid_start and test_start, or neither".into()),
            _ => {}
        }
        if self.discovery.window_length > 0 && self.discovery.stride == 0 {
            return bad("stride must be positive".into());
        }
        if self.evaluate.ndcg_k == 0 {
            return bad("ndcg_k must be positive".into());
        }
        self.model_config(self.seeds[0])?.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn task(&self) -> Result<Task, CliError> {
        self.model.task.parse().map_err(CliError::Config)
    }

    pub fn panel_dir(&self) -> PathBuf {
        self.data.panel_dir.clone().unwrap_or_else(|| self.out_dir.join("panel"))
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            volatility_window: (self.data.volatility_window > 0).then_some(self.data.volatility_window),
            ..LoadOptions::default()
        }
    }

    pub fn template(&self) -> PanelTemplate {
        let s = &self.synthetic;
        PanelTemplate {
            assets: s.assets,
            news: s.news,
            index: s.index,
            planted_edges: s.planted_edges,
            coefficient: (s.coefficient_min, s.coefficient_max),
            source_persistence: s.source_persistence,
            chains: s.chains,
            noise_stdev: s.noise_stdev,
            length: s.length,
            max_lag: self.discovery.max_lag,
        }
    }

    pub fn time_split(&self, panel: &AssetPanel) -> Result<TimeSplit, CliError> {
        let dates = panel.dates();
        let split = match (self.split.valid_start, self.split.test_start) {
            (Some(v), Some(t)) => {
                let end = dates[dates.len() - 1] + chrono::Duration::days(1);
                TimeSplit::new(DateRange::new(dates[0], v), DateRange::new(v, t), DateRange::new(t, end))
            }
            _ => TimeSplit::by_fractions(dates, self.split.train_fraction, self.split.valid_fraction),
        };
        Ok(split.map_err(csht_core::Error::from)?)
    }

    pub fn discovery_config(&self) -> DiscoveryConfig {
        DiscoveryConfig { max_lag: self.discovery.max_lag, alpha: self.discovery.alpha }
    }

    pub fn model_config(&self, seed: u64) -> Result<ModelConfig, CliError> {
        let m = &self.model;
        Ok(ModelConfig {
            layers: m.layers,
            hidden: m.hidden,
            heads: m.heads,
            ffn_width: m.ffn_width,
            lambda: m.lambda,
            learning_rate: m.learning_rate,
            batch_size: m.batch_size,
            max_lag: self.discovery.max_lag,
            use_causal_mask: m.use_causal_mask,
            use_spherical_attention: m.use_spherical_attention,
            angular_cutoff: m.angular_cutoff,
            input_noise: m.input_noise,
            max_epochs: m.max_epochs,
            patience: m.patience,
            task: self.task()?,
            seed,
        })
    }
}

/// Config keys and their defaults, shown under every command's `--help`.
pub fn defaults_help() -> String {
    let c = RunConfig::default();
    let (s, d, m) = (&c.synthetic, &c.discovery, &c.model);
    format!(
        "Config file keys (TOML) and defaults:
  seeds = {:?}    out_dir = \"{}\"
  [data]       panel_dir = <out_dir>/panel, volatility_window = 30
  [synthetic]  assets = {}, planted_edges = {}, coefficient_min = {}, coefficient_max = {},
               source_persistence = {}, news = {}, chains = {}, index = {}, noise_stdev = {}, length = {}
  [split]      train_fraction = {}, valid_fraction = {}, valid_start/test_start = unset
  [discovery]  max_lag = {}, alpha = {}, window_length = {} (0 = one graph from the training split), stride = {}
  [model]      layers = {}, hidden = {}, heads = {}, ffn_width = {}, lambda = {}, learning_rate = {},
               batch_size = {}, use_causal_mask = {}, use_spherical_attention = {}, angular_cutoff = unset,
               input_noise = {}, max_epochs = {}, patience = {}, task = \"{}\"
  [evaluate]   ndcg_k = {}",
        c.seeds,
        c.out_dir.display(),
        s.assets,
        s.planted_edges,
        s.coefficient_min,
        s.coefficient_max,
        s.source_persistence,
        s.news,
        s.chains,
        s.index,
        s.noise_stdev,
        s.length,
        c.split.train_fraction,
        c.split.valid_fraction,
        d.max_lag,
        d.alpha,
        d.window_length,
        d.stride,
        m.layers,
        m.hidden,
        m.heads,
        m.ffn_width,
        m.lambda,
        m.learning_rate,
        m.batch_size,
        m.use_causal_mask,
        m.use_spherical_attention,
        m.input_noise,
        m.max_epochs,
        m.patience,
        m.task,
        c.evaluate.ndcg_k,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn sections_override_defaults() {
        let cfg = RunConfig::from_toml(
            "seeds = [7]\n[discovery]\nalpha = 0.05\n[model]\nhidden = 16\nheads = 2\ntask = \"both\"\n",
        )
        .unwrap();
        assert_eq!(cfg.seeds, vec![7]);
        assert_eq!(cfg.discovery.alpha, 0.05);
        assert_eq!(cfg.discovery.max_lag, 5);
        let m = cfg.model_config(7).unwrap();
        assert_eq!((m.hidden, m.heads, m.task, m.seed, m.lambda), (16, 2, Task::Both, 7, 10.0));
    }

    #[test]
    fn split_dates_accept_literals_and_strings() {
        let d = |s| NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap();
        for text in [
            "[split]\nvalid_start = 2020-01-01\ntest_start = 2020-06-01",
            "[split]\nvalid_start = \"2020-01-01\"\ntest_start = \"2020-06-01\"",
        ] {
            let cfg = RunConfig::from_toml(text).unwrap();
            assert_eq!((cfg.split.valid_start, cfg.split.test_start), (Some(d("2020-01-01")), Some(d("2020-06-01"))));
        }
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "seeds = []",
            "[model]\ntask = \"ranking\"",
            "[model]\nhidden = 10\nheads = 4",
            "[split]\nvalid_start = 2020-01-01",
            "[data]\npanel_dir = \"/nonexistent/csht\"",
            "[discovery]\nwindow_length = 100\nstride = 0",
            "[modle]\nhidden = 8",
        ] {
            assert!(matches!(RunConfig::from_toml(text), Err(CliError::Config(_))), "{text}");
        }
    }
}
