use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::config::{write_resolved, RunConfig};
use super::eval::{binary_metrics, multiclass_metrics};
use super::io::{create_dir, read_dataset, write_csv, write_json, HISTORY_HEADER};
use crate::baselines::{
    baseline_from_text, baseline_to_text, train_baseline, BaselineConfig, BaselineModel, BaselineSpec, RiskModel,
    BASELINE_CONFIG_KEYS, BASELINE_HEADER,
};
use crate::dataset::LabeledDataset;
use crate::error::{contract, Result, VieError};
use crate::nn::split_seed;
use crate::trainer::{
    checkpoint, train, TrainConfig, TrainedModel, VariantSpec, CONFIG_KEYS, HISTORY_COLUMNS, STREAM_VALID,
};

/// What `train` fits: a VIE-family variant or a baseline.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelChoice {
    Variant(VariantSpec),
    Baseline(BaselineSpec),
}

/// A trained model of either family, as stored in a checkpoint file.
#[derive(Clone, Debug)]
pub enum AnyModel {
    Vie(Box<TrainedModel>),
    Baseline(Box<BaselineModel>),
}

impl AnyModel {
    /// Picks the format from the checkpoint's first line.
    pub fn from_text(text: &str) -> Result<Self> {
        let first = text.lines().next().unwrap_or("").trim();
        if first == BASELINE_HEADER {
            Ok(AnyModel::Baseline(Box::new(baseline_from_text(text)?)))
        } else if first == checkpoint::CHECKPOINT_HEADER {
            Ok(AnyModel::Vie(Box::new(checkpoint::from_text(text)?)))
        } else {
            Err(VieError::Parse { line: 1, message: format!("unrecognized checkpoint header '{first}'") })
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            VieError::Io(std::io::Error::new(e.kind(), format!("cannot read {}: {e}", path.display())))
        })?;
        Self::from_text(&text)
    }

    pub fn to_text(&self) -> String {
        match self {
            AnyModel::Vie(m) => checkpoint::to_text(m),
            AnyModel::Baseline(m) => baseline_to_text(m),
        }
    }

    pub fn name(&self) -> String {
        match self {
            AnyModel::Vie(m) => m.variant.name(),
            AnyModel::Baseline(m) => m.spec.name().to_string(),
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            AnyModel::Vie(m) => m.classes(),
            AnyModel::Baseline(_) => 2,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            AnyModel::Vie(m) => m.input_dim(),
            AnyModel::Baseline(m) => m.input_dim(),
        }
    }

    /// Draw count used when none is requested.
    pub fn default_draws(&self) -> usize {
        match self {
            AnyModel::Vie(m) => m.config.eval_draws,
            AnyModel::Baseline(_) => 1,
        }
    }

    pub fn predict_risk(&self, x: &crate::autodiff::Tensor, seed: u64, draws: usize) -> Result<Vec<f64>> {
        match self {
            AnyModel::Vie(m) => m.predict_risk(x, seed, draws),
            AnyModel::Baseline(m) => m.predict_risk(x, seed, draws),
        }
    }

    /// Metrics object for `data`; binary models report ranking and loss
    /// metrics, multiclass models micro-F1.
    pub fn score(&self, data: &LabeledDataset, seed: u64, draws: usize, bootstrap: usize) -> Result<serde_json::Value> {
        if data.dim() != self.input_dim() {
            return Err(VieError::Mismatch(format!(
                "model expects {} feature columns, data has {}",
                self.input_dim(),
                data.dim()
            )));
        }
        if data.num_classes() > self.classes() {
            return Err(VieError::Mismatch(format!(
                "model predicts {} classes, data has labels up to {}",
                self.classes(),
                data.num_classes() - 1
            )));
        }
        match self {
            AnyModel::Vie(m) if m.classes() > 2 => {
                let pred = m.predict_class(&data.features, seed, draws)?;
                multiclass_metrics(&pred, &data.labels, bootstrap, seed)
            }
            _ => {
                let scores = self.predict_risk(&data.features, seed, draws)?;
                binary_metrics(&scores, &data.labels, bootstrap, seed)
            }
        }
    }
}

const TRAIN_KEYS: [&str; 6] = ["data", "train", "valid", "out", "variant", "baseline"];
/// Baseline parameters folded into the baseline spec.
const BASELINE_PARAMS: [&str; 5] = ["alpha", "gamma", "mode", "w0", "w1"];

#[derive(Clone, Debug)]
pub struct TrainSettings {
    pub data: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub model: ModelChoice,
    pub config: TrainConfig,
    pub baseline: BaselineConfig,
}

impl TrainSettings {
    pub fn from_config(c: &RunConfig) -> Result<Self> {
        let baseline_name = c.get("baseline");
        if baseline_name.is_some() && c.get("variant").is_some() {
            return contract("give either variant or baseline, not both");
        }
        let mut allowed: Vec<&str> = TRAIN_KEYS.to_vec();
        match baseline_name {
            Some(_) => {
                allowed.extend_from_slice(&BASELINE_CONFIG_KEYS);
                allowed.extend_from_slice(&BASELINE_PARAMS);
            }
            None => allowed.extend_from_slice(&CONFIG_KEYS),
        }
        c.check_keys("train", &allowed)?;
        let model = match baseline_name {
            Some(name) => {
                let mut spec = name.to_string();
                for key in BASELINE_PARAMS {
                    if let Some(v) = c.get(key) {
                        spec.push_str(&format!(" {key}={v}"));
                    }
                }
                ModelChoice::Baseline(spec.parse()?)
            }
            None => ModelChoice::Variant(c.get("variant").unwrap_or("vie").parse()?),
        };
        let mut s = TrainSettings {
            data: None,
            train: None,
            valid: None,
            out: None,
            model,
            config: TrainConfig::default(),
            baseline: BaselineConfig::default(),
        };
        for (k, v) in c.pairs() {
            match k.as_str() {
                "data" => s.data = Some(PathBuf::from(v)),
                "train" => s.train = Some(PathBuf::from(v)),
                "valid" => s.valid = Some(PathBuf::from(v)),
                "out" => s.out = Some(PathBuf::from(v)),
                "variant" | "baseline" => {}
                key if BASELINE_PARAMS.contains(&key) => {}
                key => match s.model {
                    ModelChoice::Variant(_) => s.config.set(key, v)?,
                    ModelChoice::Baseline(_) => s.baseline.set(key, v)?,
                },
            }
        }
        match s.model {
            ModelChoice::Variant(v) => {
                v.validate()?;
                s.config.validate()?;
            }
            ModelChoice::Baseline(b) => {
                b.validate()?;
                s.baseline.validate()?;
            }
        }
        Ok(s)
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        let mut pairs = vec![
            ("data".to_string(), path(&self.data)),
            ("train".to_string(), path(&self.train)),
            ("valid".to_string(), path(&self.valid)),
            ("out".to_string(), path(&self.out)),
        ];
        match &self.model {
            ModelChoice::Variant(v) => {
                pairs.push(("variant".into(), v.name()));
                pairs.extend(self.config.to_pairs());
            }
            ModelChoice::Baseline(b) => {
                let text = b.to_string();
                let mut toks = text.split_whitespace();
                pairs.push(("baseline".into(), toks.next().unwrap_or_default().to_string()));
                for t in toks {
                    if let Some((k, v)) = t.split_once('=') {
                        pairs.push((k.to_string(), v.to_string()));
                    }
                }
                pairs.extend(self.baseline.to_pairs());
            }
        }
        // Empty paths mean "not given" and are left out so the file reloads.
        pairs.retain(|(_, v)| !v.is_empty());
        pairs
    }

    fn split_path(&self, explicit: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
        match (explicit, &self.data) {
            (Some(p), _) => Ok(p.clone()),
            (None, Some(dir)) => Ok(dir.join(format!("{name}.csv"))),
            (None, None) => contract(format!("train needs --data DIR or --{name} FILE")),
        }
    }

    /// Evaluation seed for validation metrics.
    pub fn seed(&self) -> u64 {
        match self.model {
            ModelChoice::Variant(_) => self.config.seed,
            ModelChoice::Baseline(_) => self.baseline.seed,
        }
    }
}

/// Fits the chosen model on `train`, early-stopping on `valid`.
pub fn fit(s: &TrainSettings, train_data: &LabeledDataset, valid: &LabeledDataset) -> Result<AnyModel> {
    match s.model {
        ModelChoice::Variant(v) => Ok(AnyModel::Vie(Box::new(train(train_data, valid, v, &s.config)?))),
        ModelChoice::Baseline(b) => Ok(AnyModel::Baseline(Box::new(train_baseline(train_data, valid, b, &s.baseline)?))),
    }
}

fn write_history(dir: &Path, model: &AnyModel) -> Result<()> {
    let fmt = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let (columns, rows, validation): (Vec<&str>, Vec<Vec<String>>, &[f64]) = match model {
        AnyModel::Vie(m) => (HISTORY_COLUMNS.to_vec(), m.history.iter().map(|r| fmt(&r.values())).collect(), &m.validation),
        AnyModel::Baseline(m) => (
            vec!["step", "objective"],
            m.history.iter().enumerate().map(|(i, o)| vec![i.to_string(), o.to_string()]).collect(),
            &m.validation,
        ),
    };
    write_csv(&dir.join("history.csv"), HISTORY_HEADER, &columns, &rows)?;
    let rows: Vec<Vec<String>> =
        validation.iter().enumerate().map(|(e, v)| vec![e.to_string(), v.to_string()]).collect();
    write_csv(&dir.join("validation.csv"), HISTORY_HEADER, &["epoch", "score"], &rows)
}

pub fn cmd_train(c: &RunConfig) -> Result<()> {
    let s = TrainSettings::from_config(c)?;
    let Some(out) = s.out.clone() else {
        return contract("train needs --out DIR");
    };
    let train_data = read_dataset(&s.split_path(&s.train, "train")?)?;
    let valid = read_dataset(&s.split_path(&s.valid, "valid")?)?;
    if valid.dim() != train_data.dim() {
        return Err(VieError::Mismatch(format!(
            "train has {} feature columns, valid has {}",
            train_data.dim(),
            valid.dim()
        )));
    }
    create_dir(&out)?;
    let model = fit(&s, &train_data, &valid)?;
    fs::write(out.join("model.ckpt"), model.to_text())?;
    write_history(&out, &model)?;
    let seed = split_seed(s.seed(), STREAM_VALID);
    let mut metrics = model.score(&valid, seed, model.default_draws(), 0)?;
    if let serde_json::Value::Object(map) = &mut metrics {
        map.insert("split".into(), json!("valid"));
    }
    write_json(&out.join("metrics.json"), &metrics)?;
    write_resolved(&out, "train", &s.to_pairs())?;
    eprintln!("trained {} -> {}", model.name(), out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(args: &[&str]) -> Result<TrainSettings> {
        let args: Vec<String> = args.iter().map(|s| s.to_string()).collect();
        TrainSettings::from_config(&RunConfig::from_args(&args)?)
    }

    #[test]
    fn model_choice_and_key_scoping() {
        let s = settings(&["--variant", "vae-gpd", "--epochs", "3"]).unwrap();
        assert_eq!(s.model, ModelChoice::Variant(VariantSpec::vae_gpd()));
        assert_eq!(s.config.epochs, 3);
        let b = settings(&["--baseline", "focal", "--gamma", "1.5", "--mlp-lr", "0.01"]).unwrap();
        assert_eq!(b.model, ModelChoice::Baseline(BaselineSpec::Focal { gamma: 1.5 }));
        assert_eq!(b.baseline.mlp_lr, 0.01);
        assert!(settings(&["--variant", "vie", "--gamma", "1"]).is_err());
        assert!(settings(&["--baseline", "lasso", "--flow-steps", "2"]).is_err());
        assert!(settings(&["--variant", "vie", "--baseline", "lasso"]).is_err());
        assert!(matches!(settings(&["--variant", "nope"]), Err(VieError::Contract(_))));
    }

    #[test]
    fn resolved_pairs_reproduce_settings() {
        for args in [
            vec!["--variant", "iaf-gpd", "--data", "d", "--out", "o", "--beta", "0", "--hidden", "8,8"],
            vec!["--baseline", "mlp-weighted", "--mode", "oversample", "--data", "d", "--epochs", "2"],
            vec!["--baseline", "importance-weighted", "--w0", "1", "--w1", "3", "--data", "d"],
        ] {
            let s = settings(&args).unwrap();
            let text = super::super::config::resolved_text("train", &s.to_pairs());
            let again = TrainSettings::from_config(&RunConfig::parse_text(&text).unwrap()).unwrap();
            assert_eq!(again.to_pairs(), s.to_pairs());
            assert_eq!(again.model, s.model);
        }
    }
}
