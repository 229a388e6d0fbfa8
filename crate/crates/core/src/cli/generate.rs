use std::path::{Path, PathBuf};

use serde_json::json;

use super::config::{join, parse_list, parse_value, write_resolved, RunConfig};
use super::io::{create_dir, write_dataset, write_json};
use crate::datagen::{
    generate_longtailed, generate_semisynthetic, Generated, LongTailConfig, RiskKind, SemiSynthConfig,
    DEFAULT_MULTICLASS_PERCENTILES,
};
use crate::dataset::LabeledDataset;
use crate::error::{contract, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeneratorKind {
    LongTailed,
    SemiSynthetic,
}

/// Generator choice and parameters; keys shared by both generators (`n`,
/// `rate`, `seed`, Weibull shape) live in the long-tailed config.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorSettings {
    pub kind: GeneratorKind,
    pub long: LongTailConfig,
    pub semi: SemiSynthConfig,
    /// Seed of the 6:2:2 split; `None` reuses the generator seed.
    pub split_seed: Option<u64>,
    /// Relabel by time percentiles instead of the binary event cut.
    pub multiclass: bool,
    pub percentiles: Vec<f64>,
}

impl Default for GeneratorSettings {
    fn default() -> Self {
        GeneratorSettings {
            kind: GeneratorKind::LongTailed,
            long: LongTailConfig::default(),
            semi: SemiSynthConfig::default(),
            split_seed: None,
            multiclass: false,
            percentiles: DEFAULT_MULTICLASS_PERCENTILES.to_vec(),
        }
    }
}

pub const GENERATOR_KEYS: [&str; 22] = [
    "generator",
    "n",
    "rate",
    "seed",
    "split_seed",
    "weibull_lambda",
    "weibull_nu",
    "latent_dim",
    "covariate_dim",
    "threshold",
    "xi",
    "sigma",
    "feature_hidden",
    "risk_hidden",
    "risk_curvature",
    "risk_sd",
    "continuous",
    "categorical",
    "category_rate",
    "risk_kind",
    "labels",
    "percentiles",
];

impl GeneratorSettings {
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let l = &mut self.long;
        let s = &mut self.semi;
        match key {
            "generator" => {
                self.kind = match v {
                    "longtailed" => GeneratorKind::LongTailed,
                    "semisynthetic" => GeneratorKind::SemiSynthetic,
                    _ => return contract(format!("unknown generator '{v}'; expected longtailed or semisynthetic")),
                }
            }
            "n" => l.n = parse_value(key, v)?,
            "rate" => l.rate = parse_value(key, v)?,
            "seed" => l.seed = parse_value(key, v)?,
            "split_seed" => self.split_seed = if v == "auto" { None } else { Some(parse_value(key, v)?) },
            "weibull_lambda" => l.lambda = parse_value(key, v)?,
            "weibull_nu" => l.nu = parse_value(key, v)?,
            "latent_dim" => l.latent_dim = parse_value(key, v)?,
            "covariate_dim" => l.covariate_dim = parse_value(key, v)?,
            "threshold" => l.threshold = parse_value(key, v)?,
            "xi" => l.xi = parse_value(key, v)?,
            "sigma" => l.sigma = parse_value(key, v)?,
            "feature_hidden" => l.feature_hidden = if v == "none" { Vec::new() } else { parse_list(key, v)? },
            "risk_hidden" => l.risk_hidden = parse_list(key, v)?,
            "risk_curvature" => l.risk_curvature = parse_value(key, v)?,
            "risk_sd" => l.risk_sd = parse_value(key, v)?,
            "continuous" => s.continuous = parse_value(key, v)?,
            "categorical" => s.categorical = parse_value(key, v)?,
            "category_rate" => s.category_rate = parse_value(key, v)?,
            "risk_kind" => {
                s.kind = match v {
                    "linear" => RiskKind::Linear,
                    "mlp" => RiskKind::RandomMlp,
                    _ => return contract(format!("unknown risk_kind '{v}'; expected linear or mlp")),
                }
            }
            "labels" => {
                self.multiclass = match v {
                    "binary" => false,
                    "multiclass" => true,
                    _ => return contract(format!("unknown labels '{v}'; expected binary or multiclass")),
                }
            }
            "percentiles" => self.percentiles = parse_list(key, v)?,
            _ => return contract(format!("unknown generator key '{key}'")),
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let l = &self.long;
        let s = &self.semi;
        let values = [
            match self.kind {
                GeneratorKind::LongTailed => "longtailed".to_string(),
                GeneratorKind::SemiSynthetic => "semisynthetic".to_string(),
            },
            l.n.to_string(),
            l.rate.to_string(),
            l.seed.to_string(),
            self.split_seed.map_or("auto".to_string(), |v| v.to_string()),
            l.lambda.to_string(),
            l.nu.to_string(),
            l.latent_dim.to_string(),
            l.covariate_dim.to_string(),
            l.threshold.to_string(),
            l.xi.to_string(),
            l.sigma.to_string(),
            if l.feature_hidden.is_empty() { "none".to_string() } else { join(&l.feature_hidden) },
            join(&l.risk_hidden),
            l.risk_curvature.to_string(),
            l.risk_sd.to_string(),
            s.continuous.to_string(),
            s.categorical.to_string(),
            s.category_rate.to_string(),
            match s.kind {
                RiskKind::Linear => "linear".to_string(),
                RiskKind::RandomMlp => "mlp".to_string(),
            },
            if self.multiclass { "multiclass".to_string() } else { "binary".to_string() },
            join(&self.percentiles),
        ];
        GENERATOR_KEYS.iter().map(|k| k.to_string()).zip(values).collect()
    }

    pub fn generate(&self) -> Result<Generated> {
        let l = &self.long;
        match self.kind {
            GeneratorKind::LongTailed => generate_longtailed(l),
            GeneratorKind::SemiSynthetic => generate_semisynthetic(&SemiSynthConfig {
                n: l.n,
                rate: l.rate,
                seed: l.seed,
                lambda: l.lambda,
                nu: l.nu,
                ..self.semi.clone()
            }),
        }
    }

    /// Generated data split 6:2:2, with the calibrated cut-off time.
    pub fn generate_splits(&self) -> Result<Splits> {
        let g = self.generate()?;
        let data = if self.multiclass { g.multiclass(&self.percentiles)? } else { g.data.clone() };
        let (train, valid, test) = data.split_622(self.split_seed.unwrap_or(self.long.seed))?;
        Ok(Splits { train, valid, test, t0: g.t0 })
    }
}

#[derive(Clone, Debug)]
pub struct Splits {
    pub train: LabeledDataset,
    pub valid: LabeledDataset,
    pub test: LabeledDataset,
    pub t0: f64,
}

pub const SPLIT_NAMES: [&str; 3] = ["train", "valid", "test"];

impl Splits {
    pub fn parts(&self) -> [&LabeledDataset; 3] {
        [&self.train, &self.valid, &self.test]
    }
}

#[derive(Clone, Debug)]
pub struct GenerateSettings {
    pub out: Option<PathBuf>,
    pub generator: GeneratorSettings,
}

impl GenerateSettings {
    pub fn from_config(c: &RunConfig) -> Result<Self> {
        let mut allowed = vec!["out"];
        allowed.extend_from_slice(&GENERATOR_KEYS);
        c.check_keys("generate", &allowed)?;
        let mut s = GenerateSettings { out: None, generator: GeneratorSettings::default() };
        for (k, v) in c.pairs() {
            match k.as_str() {
                "out" => s.out = Some(PathBuf::from(v)),
                _ => s.generator.set(k, v)?,
            }
        }
        Ok(s)
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut pairs = vec![("out".to_string(), self.out.as_ref().map_or(String::new(), |p| p.display().to_string()))];
        pairs.extend(self.generator.to_pairs());
        pairs
    }
}

fn class_rates(d: &LabeledDataset) -> Vec<f64> {
    d.class_counts().iter().map(|&c| c as f64 / d.len().max(1) as f64).collect()
}

/// Writes `train.csv`, `valid.csv`, `test.csv`, `manifest.json` and
/// `resolved.conf` into `out`.
pub fn write_splits(out: &Path, g: &GeneratorSettings, splits: &Splits) -> Result<serde_json::Value> {
    create_dir(out)?;
    let mut manifest = serde_json::Map::new();
    manifest.insert("format".into(), json!("vie-manifest v1"));
    manifest.insert(
        "generator".into(),
        json!(match g.kind {
            GeneratorKind::LongTailed => "longtailed",
            GeneratorKind::SemiSynthetic => "semisynthetic",
        }),
    );
    manifest.insert("seed".into(), json!(g.long.seed));
    manifest.insert("split_seed".into(), json!(g.split_seed.unwrap_or(g.long.seed)));
    manifest.insert("n".into(), json!(g.long.n));
    manifest.insert("target_rate".into(), json!(g.long.rate));
    manifest.insert("t0".into(), json!(splits.t0));
    manifest.insert("features".into(), json!(splits.train.dim()));
    for (name, part) in SPLIT_NAMES.iter().zip(splits.parts()) {
        write_dataset(&out.join(format!("{name}.csv")), part)?;
        manifest.insert(format!("{name}_rows"), json!(part.len()));
        if g.multiclass {
            manifest.insert(format!("{name}_class_rates"), json!(class_rates(part)));
        } else {
            manifest.insert(format!("{name}_rate"), json!(part.event_rate()));
        }
    }
    let manifest = serde_json::Value::Object(manifest);
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn cmd_generate(c: &RunConfig) -> Result<()> {
    let s = GenerateSettings::from_config(c)?;
    let Some(out) = s.out.clone() else {
        return contract("generate needs --out DIR");
    };
    let splits = s.generator.generate_splits()?;
    let manifest = write_splits(&out, &s.generator, &splits)?;
    write_resolved(&out, "generate", &s.to_pairs())?;
    eprintln!("wrote {} ({})", out.display(), manifest["t0"]);
    Ok(())
}
