use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::{join, parse_list, write_resolved, RunConfig};
use super::generate::{GeneratorSettings, Splits, GENERATOR_KEYS};
use super::io::{create_dir, read_dataset, write_csv, TABLE_HEADER};
use crate::error::{contract, Result};
use crate::metrics::{auprc, roc_auc};
use crate::nn::split_seed;
use crate::trainer::{train, TrainConfig, VariantSpec, CONFIG_KEYS, PRESET_NAMES};

/// Prefix of generator keys inside `ablate`, where names such as
/// `latent_dim` and `seed` already belong to training.
pub const GEN_PREFIX: &str = "gen_";

/// Stream of the training seed used for test-set predictions.
const STREAM_TEST: u64 = 5;

#[derive(Clone, Debug)]
pub struct AblateSettings {
    /// Directory with `train.csv`, `valid.csv`, `test.csv`; generated in
    /// memory when absent.
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub presets: Vec<String>,
    pub seeds: Vec<u64>,
    pub generator: GeneratorSettings,
    /// Shared by every run; `seed` is replaced per run.
    pub config: TrainConfig,
}

impl Default for AblateSettings {
    fn default() -> Self {
        AblateSettings {
            data: None,
            out: None,
            presets: PRESET_NAMES.iter().map(|s| s.to_string()).collect(),
            seeds: vec![0, 1, 2],
            generator: GeneratorSettings::default(),
            config: TrainConfig::default(),
        }
    }
}

impl AblateSettings {
    pub fn from_config(c: &RunConfig) -> Result<Self> {
        let mut s = AblateSettings::default();
        for (k, v) in c.pairs() {
            match k.as_str() {
                "data" => s.data = Some(PathBuf::from(v)),
                "out" => s.out = Some(PathBuf::from(v)),
                "presets" => {
                    s.presets = v.split(',').map(|p| p.trim().to_string()).collect();
                    for p in &s.presets {
                        VariantSpec::preset(p)?;
                    }
                }
                "seeds" => s.seeds = parse_list(k, v)?,
                "seed" => return contract("ablate takes 'seeds' for training and 'gen_seed' for data"),
                key => match key.strip_prefix(GEN_PREFIX) {
                    Some(g) if GENERATOR_KEYS.contains(&g) => s.generator.set(g, v)?,
                    _ if CONFIG_KEYS.contains(&key) => s.config.set(key, v)?,
                    _ => return contract(format!("unknown key '{key}' for 'ablate'")),
                },
            }
        }
        if s.presets.is_empty() || s.seeds.is_empty() {
            return contract("ablate needs at least one preset and one seed");
        }
        s.config.validate()?;
        Ok(s)
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut pairs = Vec::new();
        if let Some(d) = &self.data {
            pairs.push(("data".to_string(), d.display().to_string()));
        }
        if let Some(o) = &self.out {
            pairs.push(("out".to_string(), o.display().to_string()));
        }
        pairs.push(("presets".to_string(), self.presets.join(",")));
        pairs.push(("seeds".to_string(), join(&self.seeds)));
        if self.data.is_none() {
            pairs.extend(self.generator.to_pairs().into_iter().map(|(k, v)| (format!("{GEN_PREFIX}{k}"), v)));
        }
        pairs.extend(self.config.to_pairs().into_iter().filter(|(k, _)| k != "seed"));
        pairs
    }

    pub fn load_splits(&self) -> Result<Splits> {
        match &self.data {
            Some(dir) => Ok(Splits {
                train: read_dataset(&dir.join("train.csv"))?,
                valid: read_dataset(&dir.join("valid.csv"))?,
                test: read_dataset(&dir.join("test.csv"))?,
                t0: f64::NAN,
            }),
            None => self.generator.generate_splits(),
        }
    }
}

/// One trained model's test scores.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRun {
    pub preset: String,
    pub seed: u64,
    pub auc: f64,
    pub auprc: f64,
    /// Best validation AUC over the epochs run.
    pub best_valid: f64,
    pub iterations: usize,
    pub seconds: f64,
}

/// Mean and sample standard deviation across seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub name: String,
    pub runs: usize,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub auprc_mean: f64,
    pub auprc_std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub runs: Vec<AblationRun>,
    /// One row per preset in the requested order, then `oracle` when the
    /// test split carries the true risk.
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, name: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    (mean, (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt())
}

/// Trains every preset at every seed on `splits` and scores the test split.
pub fn run_ablation(s: &AblateSettings, splits: &Splits) -> Result<AblationTable> {
    let test = &splits.test;
    if test.num_classes() != 2 {
        return contract("ablate needs binary labels");
    }
    let mut runs = Vec::new();
    let mut rows = Vec::new();
    for name in &s.presets {
        let variant = VariantSpec::preset(name)?;
        let mut mine = Vec::new();
        for &seed in &s.seeds {
            let started = Instant::now();
            let config = TrainConfig { seed, ..s.config.clone() };
            let model = train(&splits.train, &splits.valid, variant, &config)?;
            let scores = model.predict(&test.features, split_seed(seed, STREAM_TEST), config.eval_draws)?;
            let run = AblationRun {
                preset: name.clone(),
                seed,
                auc: roc_auc(&scores, &test.labels)?,
                auprc: auprc(&scores, &test.labels)?,
                best_valid: model.validation.iter().copied().filter(|v| v.is_finite()).fold(f64::NAN, f64::max),
                iterations: model.history.len(),
                seconds: started.elapsed().as_secs_f64(),
            };
            eprintln!("{name} seed {seed}: test auc {:.4} auprc {:.4} ({:.0} s)", run.auc, run.auprc, run.seconds);
            mine.push(run);
        }
        let (auc_mean, auc_std) = mean_std(&mine.iter().map(|r| r.auc).collect::<Vec<_>>());
        let (auprc_mean, auprc_std) = mean_std(&mine.iter().map(|r| r.auprc).collect::<Vec<_>>());
        rows.push(AblationRow { name: name.clone(), runs: mine.len(), auc_mean, auc_std, auprc_mean, auprc_std });
        runs.extend(mine);
    }
    if let Some(oracle) = &test.oracle_risk {
        rows.push(AblationRow {
            name: "oracle".into(),
            runs: 1,
            auc_mean: roc_auc(oracle, &test.labels)?,
            auc_std: 0.0,
            auprc_mean: auprc(oracle, &test.labels)?,
            auprc_std: 0.0,
        });
    }
    Ok(AblationTable { runs, rows })
}

/// Rows as `mean (std)` in aligned columns.
pub fn format_table(t: &AblationTable) -> String {
    let cells: Vec<[String; 3]> = t
        .rows
        .iter()
        .map(|r| {
            [
                r.name.clone(),
                format!("{:.3} ({:.3})", r.auc_mean, r.auc_std),
                format!("{:.3} ({:.3})", r.auprc_mean, r.auprc_std),
            ]
        })
        .collect();
    let head = ["model", "AUC", "AUPRC"];
    let widths: Vec<usize> =
        (0..3).map(|j| cells.iter().map(|c| c[j].chars().count()).chain([head[j].len()]).max().unwrap_or(0)).collect();
    let mut out = String::new();
    let mut line = |c: [&str; 3]| {
        let _ = writeln!(out, "{:<w0$}  {:>w1$}  {:>w2$}", c[0], c[1], c[2], w0 = widths[0], w1 = widths[1], w2 = widths[2]);
    };
    line(head);
    for c in &cells {
        line([&c[0], &c[1], &c[2]]);
    }
    out
}

/// `ablation.csv`, `ablation.txt` and per-run `runs.csv` in `out`.
pub fn write_table(out: &Path, t: &AblationTable) -> Result<()> {
    create_dir(out)?;
    let rows: Vec<Vec<String>> = t
        .rows
        .iter()
        .map(|r| {
            vec![
                r.name.clone(),
                r.runs.to_string(),
                r.auc_mean.to_string(),
                r.auc_std.to_string(),
                r.auprc_mean.to_string(),
                r.auprc_std.to_string(),
            ]
        })
        .collect();
    write_csv(&out.join("ablation.csv"), TABLE_HEADER, &["model", "runs", "auc_mean", "auc_std", "auprc_mean", "auprc_std"], &rows)?;
    let runs: Vec<Vec<String>> = t
        .runs
        .iter()
        .map(|r| {
            vec![
                r.preset.clone(),
                r.seed.to_string(),
                r.auc.to_string(),
                r.auprc.to_string(),
                r.best_valid.to_string(),
                r.iterations.to_string(),
            ]
        })
        .collect();
    write_csv(&out.join("runs.csv"), TABLE_HEADER, &["preset", "seed", "auc", "auprc", "best_valid", "iterations"], &runs)?;
    fs::write(out.join("ablation.txt"), format_table(t))?;
    Ok(())
}

pub fn cmd_ablate(c: &RunConfig) -> Result<()> {
    let s = AblateSettings::from_config(c)?;
    let Some(out) = s.out.clone() else {
        return contract("ablate needs --out DIR");
    };
    let splits = s.load_splits()?;
    let table = run_ablation(&s, &splits)?;
    write_table(&out, &table)?;
    write_resolved(&out, "ablate", &s.to_pairs())?;
    print!("{}", format_table(&table));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(args: &[&str]) -> Result<AblateSettings> {
        let args: Vec<String> = args.iter().map(|s| s.to_string()).collect();
        AblateSettings::from_config(&RunConfig::from_args(&args)?)
    }

    #[test]
    fn keys_are_scoped() {
        let s = settings(&["--gen-n", "500", "--latent-dim", "2", "--gen-latent-dim", "3", "--seeds", "4,5"]).unwrap();
        assert_eq!((s.generator.long.n, s.config.latent_dim, s.generator.long.latent_dim), (500, 2, 3));
        assert_eq!(s.seeds, vec![4, 5]);
        assert!(settings(&["--seed", "1"]).is_err());
        assert!(settings(&["--presets", "vie,bogus"]).is_err());
        assert!(settings(&["--gen-bogus", "1"]).is_err());
        let text = super::super::config::resolved_text("ablate", &s.to_pairs());
        let again = AblateSettings::from_config(&RunConfig::parse_text(&text).unwrap()).unwrap();
        assert_eq!(again.to_pairs(), s.to_pairs());
    }

    #[test]
    fn table_has_a_row_per_preset_plus_oracle() {
        let s = settings(&[
            "--gen-n", "600", "--gen-rate", "0.1", "--presets", "vae,vae-gpd", "--seeds", "0,1", "--epochs", "1",
            "--bins", "4", "--max-iterations", "2", "--hidden", "4", "--init-hidden", "4", "--flow-steps", "1",
        ])
        .unwrap();
        let t = run_ablation(&s, &s.load_splits().unwrap()).unwrap();
        let names: Vec<&str> = t.rows.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["vae", "vae-gpd", "oracle"]);
        assert_eq!(t.runs.len(), 4);
        assert!(t.rows.iter().all(|r| r.auc_mean > 0.0 && r.auc_mean <= 1.0));
        let text = format_table(&t);
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().all(|l| l.chars().count() == text.lines().next().unwrap().chars().count()));
    }
}
