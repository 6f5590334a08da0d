//! Flat `key = value` run configuration.
//!
//! Precedence is command-line flag, then config file, then built-in default.
//! Only keys that were set explicitly are stored; typed views fill in the
//! rest from defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use srvd_core::nets::PerceptualKind;
use srvd_core::trainer::{DecayMode, Phase};
use srvd_core::{AnchorSet, LossWeights, NetConfig, TrainConfig};

use crate::error::{Error, IoContext, Result};

/// Network keys. `net` picks a preset the others override.
pub const NET_KEYS: &[&str] = &[
    "net",
    "image_channels",
    "base_resolution",
    "n_residual_blocks",
    "feature_width",
    "disc_width",
    "det_width",
    "leaky_slope",
    "num_classes",
    "perceptual",
    "perceptual_layer",
    "anchors",
    "bn_eps",
];

pub const TRAIN_KEYS: &[&str] = &[
    "lr",
    "lr_decay_factor",
    "lr_decay_every",
    "ema_decay",
    "decay_mode",
    "batch_size",
    "epochs",
    "max_steps",
    "seed",
    "conf_threshold",
    "nms_threshold",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "clip_norm",
    "bn_momentum",
    "joint_discriminators",
    "alpha",
    "beta",
    "gamma",
    "lambda_coord",
    "lambda_noobj",
    "lambda_l1",
];

pub const OTHER_KEYS: &[&str] = &[
    "data",
    "out",
    "checkpoint",
    "init_sr",
    "init_det",
    "input",
    "anchors_file",
    "perceptual_weights",
    "n_scenes",
    "scene_size",
    "n_vehicles",
    "eval_iou",
];

fn known(key: &str) -> bool {
    NET_KEYS.contains(&key) || TRAIN_KEYS.contains(&key) || OTHER_KEYS.contains(&key)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn bad(key: &str, value: &str, what: &str) -> Error {
    Error::Config(format!("{key} = {value}: expected {what}"))
}

fn parse<T: FromStr>(key: &str, value: &str, what: &str) -> Result<T> {
    value.trim().parse().map_err(|_| bad(key, value, what))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(bad(key, value, "a boolean")),
    }
}

impl RunConfig {
    /// Parses `key = value` lines. `#` starts a comment; unknown and
    /// repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            let k = k.trim();
            if cfg.values.contains_key(k) {
                return Err(Error::Config(format!("line {}: {k} given twice", i + 1)));
            }
            cfg.set(k, v.trim())?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        RunConfig::parse(&text)
    }

    /// Sets a key, replacing any earlier value.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !known(key) {
            return Err(Error::Config(format!("unknown key {key}")));
        }
        self.values.insert(key.to_string(), value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    /// Errors with a usage message naming the first missing key.
    pub fn require(&self, keys: &[&str], command: &str) -> Result<()> {
        for k in keys {
            if self.get(k).is_none() {
                return Err(Error::Usage(format!(
                    "srvd {command} needs {k} (config key or --{} flag)",
                    k.replace('_', "-")
                )));
            }
        }
        Ok(())
    }

    pub fn value<T: FromStr>(&self, key: &str, default: T, what: &str) -> Result<T> {
        match self.get(key) {
            Some(v) => parse(key, v, what),
            None => Ok(default),
        }
    }

    pub fn seed(&self) -> Result<u64> {
        self.value("seed", 0, "an unsigned integer")
    }

    /// True if any network key was set explicitly.
    pub fn has_net_keys(&self) -> bool {
        NET_KEYS.iter().any(|k| self.values.contains_key(*k))
    }

    pub fn net_config(&self) -> Result<NetConfig> {
        let mut net = match self.get("net").unwrap_or("desk") {
            "desk" => NetConfig::desk(),
            "compact" => NetConfig::compact(),
            "paper" => NetConfig::paper(),
            other => return Err(bad("net", other, "desk, compact or paper")),
        };
        for k in &NET_KEYS[1..] {
            if let Some(v) = self.get(k) {
                apply_net_key(&mut net, k, v)?;
            }
        }
        if let Some(p) = self.path("anchors_file") {
            let text = std::fs::read_to_string(&p).at(&p)?;
            net.anchors = parse_anchor_lines(&text)?;
        }
        net.validate()?;
        Ok(net)
    }

    pub fn train_config(&self, phase: Phase) -> Result<TrainConfig> {
        let mut t = TrainConfig {
            phase,
            ..TrainConfig::default()
        };
        for k in TRAIN_KEYS {
            if let Some(v) = self.get(k) {
                apply_train_key(&mut t, k, v)?;
            }
        }
        t.validate()?;
        Ok(t)
    }

    /// Every explicitly set key, one `key = value` line each.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

fn perceptual_text(p: &PerceptualKind) -> String {
    match p {
        PerceptualKind::Identity => "identity".into(),
        PerceptualKind::Stack { widths } => widths
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join(","),
    }
}

fn anchors_text(a: &AnchorSet) -> String {
    a.all()
        .iter()
        .map(|(w, h)| format!("{w} {h}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Anchors as `w h` pairs separated by commas or newlines.
pub fn parse_anchor_lines(text: &str) -> Result<AnchorSet> {
    let mut pairs = Vec::new();
    for part in text.split([',', '\n']) {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let nums: Vec<&str> = part.split_whitespace().collect();
        if nums.len() != 2 {
            return Err(bad("anchors", part, "`w h` pairs"));
        }
        pairs.push((
            parse("anchors", nums[0], "a number")?,
            parse("anchors", nums[1], "a number")?,
        ));
    }
    Ok(AnchorSet::new(&pairs)?)
}

pub fn apply_net_key(net: &mut NetConfig, key: &str, v: &str) -> Result<()> {
    let n = "a non-negative integer";
    match key {
        "image_channels" => net.image_channels = parse(key, v, n)?,
        "base_resolution" => *net = net.clone().with_base_resolution(parse(key, v, n)?),
        "n_residual_blocks" => net.n_residual_blocks = parse(key, v, n)?,
        "feature_width" => net.feature_width = parse(key, v, n)?,
        "disc_width" => net.disc_width = parse(key, v, n)?,
        "det_width" => net.det_width = parse(key, v, n)?,
        "leaky_slope" => net.leaky_slope = parse(key, v, "a number")?,
        "num_classes" => net.num_classes = parse(key, v, n)?,
        "perceptual" => {
            net.perceptual = if v.trim() == "identity" {
                PerceptualKind::Identity
            } else {
                let widths = v
                    .split(',')
                    .map(|w| parse(key, w, "identity or comma-separated widths"))
                    .collect::<Result<Vec<usize>>>()?;
                PerceptualKind::Stack { widths }
            }
        }
        "perceptual_layer" => net.perceptual_layer = parse(key, v, n)?,
        "anchors" => net.anchors = parse_anchor_lines(v)?,
        "bn_eps" => net.bn_eps = parse(key, v, "a number")?,
        _ => return Err(Error::Config(format!("unknown network key {key}"))),
    }
    Ok(())
}

/// The network as `(key, value)` pairs that [`apply_net_key`] reads back.
pub fn net_pairs(net: &NetConfig) -> Vec<(&'static str, String)> {
    vec![
        ("image_channels", net.image_channels.to_string()),
        ("base_resolution", net.base_resolution.to_string()),
        ("n_residual_blocks", net.n_residual_blocks.to_string()),
        ("feature_width", net.feature_width.to_string()),
        ("disc_width", net.disc_width.to_string()),
        ("det_width", net.det_width.to_string()),
        ("leaky_slope", net.leaky_slope.to_string()),
        ("num_classes", net.num_classes.to_string()),
        ("perceptual", perceptual_text(&net.perceptual)),
        ("perceptual_layer", net.perceptual_layer.to_string()),
        ("anchors", anchors_text(&net.anchors)),
        ("bn_eps", net.bn_eps.to_string()),
    ]
}

pub fn apply_train_key(t: &mut TrainConfig, key: &str, v: &str) -> Result<()> {
    let (num, int) = ("a number", "a non-negative integer");
    let w: &mut LossWeights = &mut t.weights;
    match key {
        "lr" => t.lr = parse(key, v, num)?,
        "lr_decay_factor" => t.lr_decay_factor = parse(key, v, num)?,
        "lr_decay_every" => t.lr_decay_every = parse(key, v, int)?,
        "ema_decay" => t.ema_decay = parse(key, v, num)?,
        "decay_mode" => {
            t.decay_mode = match v.trim() {
                "lr" => DecayMode::LearningRate,
                "ema" => DecayMode::ParameterEma,
                _ => return Err(bad(key, v, "lr or ema")),
            }
        }
        "batch_size" => t.batch_size = parse(key, v, int)?,
        "epochs" => t.epochs = parse(key, v, int)?,
        "max_steps" => t.max_steps = Some(parse(key, v, int)?),
        "seed" => t.seed = parse(key, v, int)?,
        "conf_threshold" => t.conf_threshold = parse(key, v, num)?,
        "nms_threshold" => t.nms_threshold = parse(key, v, num)?,
        "adam_beta1" => t.adam_beta1 = parse(key, v, num)?,
        "adam_beta2" => t.adam_beta2 = parse(key, v, num)?,
        "adam_eps" => t.adam_eps = parse(key, v, num)?,
        "clip_norm" => t.clip_norm = parse(key, v, num)?,
        "bn_momentum" => t.bn_momentum = parse(key, v, num)?,
        "joint_discriminators" => t.joint_discriminators = parse_bool(key, v)?,
        "alpha" => w.alpha = parse(key, v, num)?,
        "beta" => w.beta = parse(key, v, num)?,
        "gamma" => w.gamma = parse(key, v, num)?,
        "lambda_coord" => w.lambda_coord = parse(key, v, num)?,
        "lambda_noobj" => w.lambda_noobj = parse(key, v, num)?,
        "lambda_l1" => w.lambda_l1 = parse(key, v, num)?,
        _ => return Err(Error::Config(format!("unknown training key {key}"))),
    }
    Ok(())
}

pub fn train_pairs(t: &TrainConfig) -> Vec<(&'static str, String)> {
    let w = &t.weights;
    vec![
        ("phase", t.phase.name().to_string()),
        ("lr", t.lr.to_string()),
        ("lr_decay_factor", t.lr_decay_factor.to_string()),
        ("lr_decay_every", t.lr_decay_every.to_string()),
        ("ema_decay", t.ema_decay.to_string()),
        (
            "decay_mode",
            if t.decay_mode == DecayMode::ParameterEma {
                "ema"
            } else {
                "lr"
            }
            .to_string(),
        ),
        ("batch_size", t.batch_size.to_string()),
        ("epochs", t.epochs.to_string()),
        (
            "max_steps",
            t.max_steps.map_or("none".into(), |s| s.to_string()),
        ),
        ("seed", t.seed.to_string()),
        ("conf_threshold", t.conf_threshold.to_string()),
        ("nms_threshold", t.nms_threshold.to_string()),
        ("adam_beta1", t.adam_beta1.to_string()),
        ("adam_beta2", t.adam_beta2.to_string()),
        ("adam_eps", t.adam_eps.to_string()),
        ("clip_norm", t.clip_norm.to_string()),
        ("bn_momentum", t.bn_momentum.to_string()),
        ("joint_discriminators", t.joint_discriminators.to_string()),
        ("alpha", w.alpha.to_string()),
        ("beta", w.beta.to_string()),
        ("gamma", w.gamma.to_string()),
        ("lambda_coord", w.lambda_coord.to_string()),
        ("lambda_noobj", w.lambda_noobj.to_string()),
        ("lambda_l1", w.lambda_l1.to_string()),
    ]
}
