use crate::amnn::{IntegrationMode, DEFAULT_BINS, DEFAULT_LOWER};
use crate::error::{contract, Result, VieError};
use crate::evt::default_threshold;

/// Event rate at or above which the larger `(β, λ)` pair is used.
pub const RATE_SWITCH: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub latent_dim: usize,
    pub flow_steps: usize,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation AUC improvement before stopping; 0 disables.
    pub patience: usize,
    pub seed: u64,
    /// Mixed prior threshold `u`.
    pub threshold: f64,
    /// KL weight; `None` selects by event rate.
    pub beta: Option<f64>,
    /// Critic penalty weight; `None` selects by event rate.
    pub lambda: Option<f64>,
    pub adam_lr: f64,
    pub critic_lr: f64,
    pub encoder_extra_updates: usize,
    pub grad_clip_norm: Option<f64>,
    pub critic_steps: usize,
    pub bins: usize,
    pub lower: f64,
    pub init_hidden: Vec<usize>,
    pub hidden: Vec<usize>,
    pub reverse_flow: bool,
    /// One `(ξ, σ)` pair for every latent dimension.
    pub shared_prior: bool,
    /// Closed-form Gaussian KL for Gaussian encoder with Gaussian prior.
    pub analytic_kl: bool,
    pub train_integration: IntegrationMode,
    pub eval_integration: IntegrationMode,
    /// Posterior draws averaged at prediction time.
    pub eval_draws: usize,
    /// Optional cap on total training iterations.
    pub max_iterations: Option<usize>,
    pub xi_init: f64,
    pub sigma_init: f64,
    /// Monotone integrands per latent dimension for multiclass labels.
    pub multiclass_nets: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            latent_dim: 4,
            flow_steps: 5,
            batch_size: 200,
            epochs: 100,
            patience: 10,
            seed: 0,
            threshold: default_threshold(),
            beta: None,
            lambda: None,
            adam_lr: 1e-4,
            critic_lr: 1e-3,
            encoder_extra_updates: 5,
            grad_clip_norm: Some(10.0),
            critic_steps: 1,
            bins: DEFAULT_BINS,
            lower: DEFAULT_LOWER,
            init_hidden: vec![32, 32, 32],
            hidden: vec![32, 32],
            reverse_flow: true,
            shared_prior: false,
            analytic_kl: false,
            train_integration: IntegrationMode::Random,
            eval_integration: IntegrationMode::Midpoint,
            eval_draws: 1,
            max_iterations: None,
            xi_init: 0.1,
            sigma_init: 1.0,
            multiclass_nets: 2,
        }
    }
}

pub const CONFIG_KEYS: [&str; 28] = [
    "latent_dim",
    "flow_steps",
    "batch_size",
    "epochs",
    "patience",
    "seed",
    "threshold",
    "beta",
    "lambda",
    "adam_lr",
    "critic_lr",
    "encoder_extra_updates",
    "grad_clip_norm",
    "critic_steps",
    "bins",
    "lower",
    "init_hidden",
    "hidden",
    "reverse_flow",
    "shared_prior",
    "analytic_kl",
    "train_integration",
    "eval_integration",
    "eval_draws",
    "max_iterations",
    "xi_init",
    "sigma_init",
    "multiclass_nets",
];

impl TrainConfig {
    /// `(β, λ)` for a training event rate unless overridden.
    pub fn penalties(&self, event_rate: f64) -> (f64, f64) {
        let (b, l) = if event_rate >= RATE_SWITCH { (1e-5, 1e-3) } else { (1e-6, 1e-4) };
        (self.beta.unwrap_or(b), self.lambda.unwrap_or(l))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("latent_dim", self.latent_dim),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("bins", self.bins),
            ("eval_draws", self.eval_draws),
            ("multiclass_nets", self.multiclass_nets),
        ];
        for (k, v) in positive {
            if v == 0 {
                return contract(format!("{k} must be positive"));
            }
        }
        if self.init_hidden.is_empty() || self.hidden.is_empty() || self.init_hidden.contains(&0) || self.hidden.contains(&0) {
            return contract("hidden layer lists must be nonempty and positive");
        }
        for (k, v) in [("adam_lr", self.adam_lr), ("critic_lr", self.critic_lr), ("sigma_init", self.sigma_init)] {
            if !(v > 0.0 && v.is_finite()) {
                return contract(format!("{k} must be positive"));
            }
        }
        if !(self.xi_init > 0.0) {
            return contract("xi_init must be positive");
        }
        for (k, v) in [("beta", self.beta), ("lambda", self.lambda)] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return contract(format!("{k} must be nonnegative"));
                }
            }
        }
        if let Some(c) = self.grad_clip_norm {
            if !(c > 0.0) {
                return contract("grad_clip_norm must be positive");
            }
        }
        if !self.threshold.is_finite() || !self.lower.is_finite() {
            return contract("threshold and lower must be finite");
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let bad = |e: String| VieError::Contract(format!("{key}: {e}"));
        let int = |v: &str| v.parse::<usize>().map_err(|e| bad(e.to_string()));
        let float = |v: &str| v.parse::<f64>().map_err(|e| bad(e.to_string()));
        let boolean = |v: &str| v.parse::<bool>().map_err(|e| bad(e.to_string()));
        let opt_float = |v: &str| if v == "auto" || v == "none" { Ok(None) } else { float(v).map(Some) };
        let list = |v: &str| v.split(',').map(|s| int(s.trim())).collect::<Result<Vec<usize>>>();
        let mode = |v: &str| match v {
            "midpoint" => Ok(IntegrationMode::Midpoint),
            "random" => Ok(IntegrationMode::Random),
            _ => Err(bad(format!("unknown integration mode '{v}'"))),
        };
        match key {
            "latent_dim" => self.latent_dim = int(v)?,
            "flow_steps" => self.flow_steps = int(v)?,
            "batch_size" => self.batch_size = int(v)?,
            "epochs" => self.epochs = int(v)?,
            "patience" => self.patience = int(v)?,
            "seed" => self.seed = v.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            "threshold" => self.threshold = float(v)?,
            "beta" => self.beta = opt_float(v)?,
            "lambda" => self.lambda = opt_float(v)?,
            "adam_lr" => self.adam_lr = float(v)?,
            "critic_lr" => self.critic_lr = float(v)?,
            "encoder_extra_updates" => self.encoder_extra_updates = int(v)?,
            "grad_clip_norm" => self.grad_clip_norm = opt_float(v)?,
            "critic_steps" => self.critic_steps = int(v)?,
            "bins" => self.bins = int(v)?,
            "lower" => self.lower = float(v)?,
            "init_hidden" => self.init_hidden = list(v)?,
            "hidden" => self.hidden = list(v)?,
            "reverse_flow" => self.reverse_flow = boolean(v)?,
            "shared_prior" => self.shared_prior = boolean(v)?,
            "analytic_kl" => self.analytic_kl = boolean(v)?,
            "train_integration" => self.train_integration = mode(v)?,
            "eval_integration" => self.eval_integration = mode(v)?,
            "eval_draws" => self.eval_draws = int(v)?,
            "max_iterations" => self.max_iterations = if v == "none" { None } else { Some(int(v)?) },
            "xi_init" => self.xi_init = float(v)?,
            "sigma_init" => self.sigma_init = float(v)?,
            "multiclass_nets" => self.multiclass_nets = int(v)?,
            _ => return contract(format!("unknown config key '{key}'")),
        }
        Ok(())
    }

    /// Every field as `(key, value)` in a form accepted by [`TrainConfig::set`].
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let opt = |v: Option<f64>, none: &str| v.map_or(none.to_string(), |x| x.to_string());
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mode = |m: IntegrationMode| match m {
            IntegrationMode::Midpoint => "midpoint".to_string(),
            IntegrationMode::Random => "random".to_string(),
        };
        let values = vec![
            self.latent_dim.to_string(),
            self.flow_steps.to_string(),
            self.batch_size.to_string(),
            self.epochs.to_string(),
            self.patience.to_string(),
            self.seed.to_string(),
            self.threshold.to_string(),
            opt(self.beta, "auto"),
            opt(self.lambda, "auto"),
            self.adam_lr.to_string(),
            self.critic_lr.to_string(),
            self.encoder_extra_updates.to_string(),
            opt(self.grad_clip_norm, "none"),
            self.critic_steps.to_string(),
            self.bins.to_string(),
            self.lower.to_string(),
            list(&self.init_hidden),
            list(&self.hidden),
            self.reverse_flow.to_string(),
            self.shared_prior.to_string(),
            self.analytic_kl.to_string(),
            mode(self.train_integration),
            mode(self.eval_integration),
            self.eval_draws.to_string(),
            self.max_iterations.map_or("none".to_string(), |v| v.to_string()),
            self.xi_init.to_string(),
            self.sigma_init.to_string(),
            self.multiclass_nets.to_string(),
        ];
        CONFIG_KEYS.iter().map(|k| k.to_string()).zip(values).collect()
    }
}
