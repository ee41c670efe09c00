//! Flat `key = value` experiment configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{long_tailed_counts, Arrangement, Augmentation, Heterogeneity, PartitionSpec, SyntheticSpec};
use crate::error::{Error, Result};
use crate::fed::{FedHyperParams, Method};
use crate::ssl::SslHyperParams;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    pub dataset: String,
    pub seed: u64,
    pub repeats: usize,
    pub out: PathBuf,

    pub clients: usize,
    pub activation_rate: f64,
    pub rounds: usize,
    pub local_epochs: usize,
    pub e_aggr: usize,
    pub lr: f64,
    pub lr_aggr: f64,
    pub momentum: f64,
    pub tau: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub force_uniform_appu: bool,

    pub iid: bool,
    pub delta: f64,
    pub independent_unlabeled_draw: bool,
    pub classes: usize,
    pub dim: usize,
    pub labeled_total: usize,
    pub unlabeled_total: usize,
    pub test_per_class: usize,
    pub arrangement: Arrangement,
    /// Head-to-tail ratio of the training corpus class sizes; 1 is balanced.
    pub imbalance_ratio: f64,
    pub class_separation: f64,
    pub noise_scale: f64,
    pub hidden: Vec<usize>,
    /// Explicit augmentation strengths; `None` derives them from `noise_scale`.
    pub weak_sigma: Option<f64>,
    pub strong_sigma: Option<f64>,
    pub mask_prob: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            dataset: "synthetic".into(),
            seed: 0,
            repeats: 1,
            out: PathBuf::from("results"),

            clients: 10,
            activation_rate: 1.0,
            rounds: 200,
            local_epochs: 5,
            e_aggr: 100,
            lr: 0.03,
            lr_aggr: 1.0,
            momentum: 0.9,
            tau: 0.95,
            lambda: 1.0,
            gamma: 0.9,
            force_uniform_appu: false,

            iid: false,
            delta: 0.3,
            independent_unlabeled_draw: true,
            classes: 5,
            dim: 16,
            labeled_total: 100,
            unlabeled_total: 4900,
            test_per_class: 200,
            arrangement: Arrangement::Simplex,
            imbalance_ratio: 1.0,
            class_separation: 2.5,
            noise_scale: 1.0,
            hidden: vec![64],
            weak_sigma: None,
            strong_sigma: None,
            mask_prob: 0.2,
        }
    }
}

/// Values that may come from the command line and win over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub methods: Option<Vec<Method>>,
    pub delta: Option<f64>,
    pub iid: bool,
    pub clients: Option<usize>,
    pub activation_rate: Option<f64>,
    pub rounds: Option<usize>,
    pub local_epochs: Option<usize>,
    pub tau: Option<f64>,
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    pub lr: Option<f64>,
    pub lr_aggr: Option<f64>,
    pub e_aggr: Option<usize>,
    pub seed: Option<u64>,
    pub repeats: Option<usize>,
    pub out: Option<PathBuf>,
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::config(format!("invalid value `{raw}` for `{key}`")))
}

fn parse_bool(key: &str, raw: &str) -> Result<bool> {
    match raw {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(format!("invalid boolean `{raw}` for `{key}`"))),
    }
}

pub fn parse_methods(raw: &str) -> Result<Vec<Method>> {
    if raw.trim() == "all" {
        return Ok(Method::ALL.to_vec());
    }
    let methods = raw
        .split(',')
        .map(|m| m.trim().parse::<Method>())
        .collect::<Result<Vec<_>>>()?;
    if methods.is_empty() {
        return Err(Error::config("no methods given"));
    }
    Ok(methods)
}

fn parse_list(key: &str, raw: &str) -> Result<Vec<usize>> {
    if raw.trim().is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',').map(|v| parse_value(key, v.trim())).collect()
}

impl ExperimentConfig {
    fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        match key {
            "method" | "methods" => self.methods = parse_methods(raw)?,
            "dataset" => self.dataset = raw.to_string(),
            "seed" => self.seed = parse_value(key, raw)?,
            "repeats" => self.repeats = parse_value(key, raw)?,
            "out" => self.out = PathBuf::from(raw),
            "clients" => self.clients = parse_value(key, raw)?,
            "activation_rate" => self.activation_rate = parse_value(key, raw)?,
            "rounds" => self.rounds = parse_value(key, raw)?,
            "local_epochs" => self.local_epochs = parse_value(key, raw)?,
            "e_aggr" => self.e_aggr = parse_value(key, raw)?,
            "lr" => self.lr = parse_value(key, raw)?,
            "lr_aggr" => self.lr_aggr = parse_value(key, raw)?,
            "momentum" => self.momentum = parse_value(key, raw)?,
            "tau" => self.tau = parse_value(key, raw)?,
            "lambda" => self.lambda = parse_value(key, raw)?,
            "gamma" => self.gamma = parse_value(key, raw)?,
            "force_uniform_appu" => self.force_uniform_appu = parse_bool(key, raw)?,
            "iid" => self.iid = parse_bool(key, raw)?,
            "delta" => self.delta = parse_value(key, raw)?,
            "independent_unlabeled_draw" => self.independent_unlabeled_draw = parse_bool(key, raw)?,
            "classes" => self.classes = parse_value(key, raw)?,
            "dim" => self.dim = parse_value(key, raw)?,
            "labeled_total" => self.labeled_total = parse_value(key, raw)?,
            "unlabeled_total" => self.unlabeled_total = parse_value(key, raw)?,
            "test_per_class" => self.test_per_class = parse_value(key, raw)?,
            "arrangement" => self.arrangement = raw.parse()?,
            "imbalance_ratio" => self.imbalance_ratio = parse_value(key, raw)?,
            "class_separation" => self.class_separation = parse_value(key, raw)?,
            "noise_scale" => self.noise_scale = parse_value(key, raw)?,
            "hidden" => self.hidden = parse_list(key, raw)?,
            "weak_sigma" => self.weak_sigma = Some(parse_value(key, raw)?),
            "strong_sigma" => self.strong_sigma = Some(parse_value(key, raw)?),
            "mask_prob" => self.mask_prob = parse_value(key, raw)?,
            _ => return Err(Error::config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_overrides(&mut self, o: &Overrides) -> Result<()> {
        if o.iid && o.delta.is_some() {
            return Err(Error::config("--iid and --delta are mutually exclusive"));
        }
        if let Some(v) = &o.methods {
            self.methods = v.clone();
        }
        if let Some(v) = o.delta {
            self.delta = v;
            self.iid = false;
        }
        if o.iid {
            self.iid = true;
        }
        macro_rules! take {
            ($($field:ident),*) => {$(
                if let Some(v) = o.$field.clone() {
                    self.$field = v;
                }
            )*};
        }
        take!(clients, activation_rate, rounds, local_epochs, tau, lambda, gamma, lr, lr_aggr, e_aggr, seed, repeats, out);
        Ok(())
    }

    /// Defaults, then the file (if any), then command-line overrides.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = path {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            cfg.apply_text(&text)?;
        }
        cfg.apply_overrides(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn heterogeneity(&self) -> Heterogeneity {
        if self.iid {
            Heterogeneity::Iid
        } else {
            Heterogeneity::Dirichlet(self.delta)
        }
    }

    /// `iid` or the δ value, as used in output file names.
    pub fn delta_label(&self) -> String {
        if self.iid {
            "iid".into()
        } else {
            self.delta.to_string()
        }
    }

    pub fn ssl(&self) -> SslHyperParams {
        SslHyperParams {
            tau: self.tau,
            lambda: self.lambda,
            gamma: self.gamma,
        }
    }

    pub fn hyper_for(&self, method: Method) -> FedHyperParams {
        FedHyperParams {
            clients: self.clients,
            activation_rate: self.activation_rate,
            rounds: self.rounds,
            local_epochs: self.local_epochs,
            aggr_epochs: self.e_aggr,
            lr: self.lr,
            lr_aggr: self.lr_aggr,
            momentum: self.momentum,
            ssl: self.ssl(),
            method,
            force_uniform_appu: self.force_uniform_appu,
        }
    }

    pub fn augmentation(&self) -> Augmentation {
        let base = Augmentation::for_noise_scale(self.noise_scale);
        Augmentation {
            weak_sigma: self.weak_sigma.unwrap_or(base.weak_sigma),
            strong_sigma: self.strong_sigma.unwrap_or(base.strong_sigma),
            mask_prob: self.mask_prob,
        }
    }

    pub fn synthetic_spec(&self, run_seed: u64) -> Result<SyntheticSpec> {
        Ok(SyntheticSpec {
            classes: self.classes,
            dim: self.dim,
            class_counts: long_tailed_counts(self.labeled_total + self.unlabeled_total, self.classes, self.imbalance_ratio)?,
            test_per_class: self.test_per_class,
            arrangement: self.arrangement,
            class_separation: self.class_separation,
            noise_scale: self.noise_scale,
            seed: run_seed,
        })
    }

    pub fn partition_spec(&self, run_seed: u64) -> PartitionSpec {
        PartitionSpec {
            clients: self.clients,
            heterogeneity: self.heterogeneity(),
            classes: self.classes,
            labeled_total: self.labeled_total,
            unlabeled_total: self.unlabeled_total,
            seed: run_seed,
            independent_unlabeled_draw: self.independent_unlabeled_draw,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::config("at least one method is required"));
        }
        if self.repeats == 0 {
            return Err(Error::config("repeats must be at least 1"));
        }
        if self.dataset.is_empty() || self.dataset.contains(['/', '\\']) {
            return Err(Error::config("dataset name must be non-empty and contain no path separators"));
        }
        if !self.iid && !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::config(format!("delta must be positive, got {}", self.delta)));
        }
        if self.classes < 2 || self.dim < 2 {
            return Err(Error::config("need at least 2 classes and 2 feature dimensions"));
        }
        if !(self.labeled_total + self.unlabeled_total).is_multiple_of(self.classes) {
            return Err(Error::config("labeled_total + unlabeled_total must be divisible by the class count"));
        }
        if !self.labeled_total.is_multiple_of(self.classes) || self.labeled_total < self.clients {
            return Err(Error::config(
                "labeled_total must be a multiple of the class count and at least the client count",
            ));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("hidden layer widths must be positive"));
        }
        if !(self.noise_scale > 0.0) || !(self.class_separation >= 0.0) {
            return Err(Error::config("noise_scale must be positive and class_separation nonnegative"));
        }
        if !(self.imbalance_ratio >= 1.0 && self.imbalance_ratio.is_finite()) {
            return Err(Error::config(format!("imbalance_ratio must be at least 1, got {}", self.imbalance_ratio)));
        }
        self.augmentation().validate()?;
        self.hyper_for(self.methods[0]).validate()
    }

    /// Serializes every key; [`ExperimentConfig::from_text`] reads it back.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let names: Vec<&str> = self.methods.iter().map(|m| m.name()).collect();
        let hidden: Vec<String> = self.hidden.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "methods = {}", names.join(","));
        let _ = writeln!(s, "dataset = {}", self.dataset);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "repeats = {}", self.repeats);
        let _ = writeln!(s, "out = {}", self.out.display());
        let _ = writeln!(s, "clients = {}", self.clients);
        let _ = writeln!(s, "activation_rate = {}", self.activation_rate);
        let _ = writeln!(s, "rounds = {}", self.rounds);
        let _ = writeln!(s, "local_epochs = {}", self.local_epochs);
        let _ = writeln!(s, "e_aggr = {}", self.e_aggr);
        let _ = writeln!(s, "lr = {}", self.lr);
        let _ = writeln!(s, "lr_aggr = {}", self.lr_aggr);
        let _ = writeln!(s, "momentum = {}", self.momentum);
        let _ = writeln!(s, "tau = {}", self.tau);
        let _ = writeln!(s, "lambda = {}", self.lambda);
        let _ = writeln!(s, "gamma = {}", self.gamma);
        let _ = writeln!(s, "force_uniform_appu = {}", self.force_uniform_appu);
        let _ = writeln!(s, "iid = {}", self.iid);
        let _ = writeln!(s, "delta = {}", self.delta);
        let _ = writeln!(s, "independent_unlabeled_draw = {}", self.independent_unlabeled_draw);
        let _ = writeln!(s, "classes = {}", self.classes);
        let _ = writeln!(s, "dim = {}", self.dim);
        let _ = writeln!(s, "labeled_total = {}", self.labeled_total);
        let _ = writeln!(s, "unlabeled_total = {}", self.unlabeled_total);
        let _ = writeln!(s, "test_per_class = {}", self.test_per_class);
        let _ = writeln!(s, "arrangement = {}", self.arrangement.name());
        let _ = writeln!(s, "imbalance_ratio = {}", self.imbalance_ratio);
        let _ = writeln!(s, "class_separation = {}", self.class_separation);
        let _ = writeln!(s, "noise_scale = {}", self.noise_scale);
        let _ = writeln!(s, "hidden = {}", hidden.join(","));
        if let Some(v) = self.weak_sigma {
            let _ = writeln!(s, "weak_sigma = {v}");
        }
        if let Some(v) = self.strong_sigma {
            let _ = writeln!(s, "strong_sigma = {v}");
        }
        let _ = writeln!(s, "mask_prob = {}", self.mask_prob);
        s
    }
}
