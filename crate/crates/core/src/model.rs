//! Versioned `key = value` model file.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! parameter reads back bit-identical. Circuit layers use a compact token per
//! layer: `I` (input), `I-` (input without candidate re-upload), or
//! `V[ZX,ZX,X,]` / `Ve[...]` for a variational layer without / with the CX ring,
//! listing the rotation axes of each qubit.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::data::Scaler;
use crate::detect::{DetectionMode, Threshold};
use crate::error::{Error, Result};
use crate::qgan::{Activation, ClassicalGan, Mlp, OptimizerKind, WeightPolicy};
use crate::qsim::{Backend, NoiseModel};
use crate::vqc::{Axis, CircuitPlan, LayerPlan, ParamVector};

pub const FORMAT: &str = "qgan-model";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum ModelBody {
    Quantum {
        generator_plan: CircuitPlan,
        discriminator_plan: CircuitPlan,
        theta_g: ParamVector,
        theta_d: ParamVector,
    },
    Classical(ClassicalGan),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub body: ModelBody,
    pub seed: u64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub backend: Backend,
    pub scaler: Scaler,
    pub last_loss_g: f64,
    pub last_loss_d: f64,
    pub step_count: usize,
    pub weight_policy: WeightPolicy,
    /// Losses the detection weights are derived from.
    pub weight_losses: (f64, f64),
    pub train_mse: f64,
    pub thresholds: Vec<(DetectionMode, Threshold)>,
    /// Effective run configuration, flattened to `key = value`.
    pub config_echo: Vec<(String, String)>,
}

impl ModelFile {
    pub fn threshold(&self, mode: DetectionMode) -> Option<&Threshold> {
        self.thresholds
            .iter()
            .find(|(m, _)| *m == mode)
            .map(|(_, t)| t)
    }
}

fn floats(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

fn usizes(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn axis_char(a: Axis) -> char {
    match a {
        Axis::X => 'X',
        Axis::Z => 'Z',
    }
}

fn layers_to_string(plan: &CircuitPlan) -> String {
    plan.layers
        .iter()
        .map(|l| match l {
            LayerPlan::Input { reupload_candidate } => match reupload_candidate {
                None => "I".to_owned(),
                Some(true) => "I+".to_owned(),
                Some(false) => "I-".to_owned(),
            },
            LayerPlan::Variational { rotations, entangle } => {
                let qubits: Vec<String> = rotations
                    .iter()
                    .map(|axes| axes.iter().map(|&a| axis_char(a)).collect())
                    .collect();
                format!("V{}[{}]", if *entangle { "e" } else { "" }, qubits.join(","))
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_layers(s: &str) -> Result<Vec<LayerPlan>> {
    let bad = |tok: &str| Error::ModelFormat(format!("bad layer token `{tok}`"));
    s.split_whitespace()
        .map(|tok| match tok {
            "I" => Ok(LayerPlan::Input {
                reupload_candidate: None,
            }),
            "I+" => Ok(LayerPlan::Input {
                reupload_candidate: Some(true),
            }),
            "I-" => Ok(LayerPlan::Input {
                reupload_candidate: Some(false),
            }),
            _ => {
                let (entangle, rest) = if let Some(r) = tok.strip_prefix("Ve[") {
                    (true, r)
                } else if let Some(r) = tok.strip_prefix("V[") {
                    (false, r)
                } else {
                    return Err(bad(tok));
                };
                let inner = rest.strip_suffix(']').ok_or_else(|| bad(tok))?;
                let rotations = inner
                    .split(',')
                    .map(|q| {
                        q.chars()
                            .map(|c| match c {
                                'X' => Ok(Axis::X),
                                'Z' => Ok(Axis::Z),
                                _ => Err(bad(tok)),
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(LayerPlan::Variational { rotations, entangle })
            }
        })
        .collect()
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Tanh => "tanh",
        Activation::Sigmoid => "sigmoid",
    }
}

impl ModelFile {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("format", FORMAT.into());
        kv("version", VERSION.to_string());
        match &self.body {
            ModelBody::Quantum {
                generator_plan,
                discriminator_plan,
                theta_g,
                theta_d,
            } => {
                kv("kind", "quantum".into());
                for (name, plan, theta) in [
                    ("generator", generator_plan, theta_g),
                    ("discriminator", discriminator_plan, theta_d),
                ] {
                    kv(&format!("{name}.params"), plan.params.to_string());
                    kv(&format!("{name}.redundancy"), plan.redundancy.to_string());
                    kv(&format!("{name}.layers"), layers_to_string(plan));
                    kv(&format!("{name}.theta"), floats(theta.as_slice()));
                }
            }
            ModelBody::Classical(gan) => {
                kv("kind", "classical".into());
                for (name, net) in [("generator", &gan.generator), ("discriminator", &gan.discriminator)] {
                    kv(&format!("{name}.sizes"), usizes(&net.sizes()));
                    kv(&format!("{name}.masked"), net.masked().to_string());
                    kv(
                        &format!("{name}.output"),
                        activation_name(net.output_activation().unwrap_or(Activation::Tanh)).into(),
                    );
                    kv(&format!("{name}.theta"), floats(&net.params()));
                }
            }
        }
        kv("seed", self.seed.to_string());
        kv("learning_rate", format!("{:?}", self.learning_rate));
        kv("epochs", self.epochs.to_string());
        kv(
            "optimizer",
            match self.optimizer {
                OptimizerKind::Sgd => "sgd",
                OptimizerKind::Adam => "adam",
            }
            .into(),
        );
        match &self.backend {
            Backend::Pure => kv("backend", "pure".into()),
            Backend::Noisy(n) => {
                kv("backend", "noisy".into());
                kv("noise.p1", format!("{:?}", n.p1));
                kv("noise.p2", format!("{:?}", n.p2));
                kv("noise.readout_flip", format!("{:?}", n.readout_flip));
                kv("noise.enabled", n.enabled.to_string());
            }
        }
        kv("scaler.min", floats(&self.scaler.min));
        kv("scaler.max", floats(&self.scaler.max));
        kv("loss.g", format!("{:?}", self.last_loss_g));
        kv("loss.d", format!("{:?}", self.last_loss_d));
        kv("step_count", self.step_count.to_string());
        kv(
            "weight.policy",
            match self.weight_policy {
                WeightPolicy::LastStep => "last_step".into(),
                WeightPolicy::TrailingMean { steps } => format!("trailing_mean:{steps}"),
            },
        );
        kv("weight.loss_g", format!("{:?}", self.weight_losses.0));
        kv("weight.loss_d", format!("{:?}", self.weight_losses.1));
        kv("train_mse", format!("{:?}", self.train_mse));
        for (mode, t) in &self.thresholds {
            let m = mode.name();
            kv(&format!("threshold.{m}.value"), format!("{:?}", t.value));
            kv(&format!("threshold.{m}.percentile"), format!("{:?}", t.percentile));
            kv(&format!("threshold.{m}.source_size"), t.source_size.to_string());
        }
        for (k, v) in &self.config_echo {
            kv(&format!("config.{k}"), v.clone());
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut echo = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| Error::ModelFormat(format!("line {}: expected `key = value`", n + 1)))?;
            if let Some(rest) = k.strip_prefix("config.") {
                echo.push((rest.to_owned(), v.to_owned()));
            } else if map.insert(k.to_owned(), v.to_owned()).is_some() {
                return Err(Error::ModelFormat(format!("duplicate key `{k}`")));
            }
        }
        let doc = Doc(map);
        if doc.str("format")? != FORMAT {
            return Err(Error::ModelFormat("not a model file".into()));
        }
        let version: u32 = doc.parse("version")?;
        if version != VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {version}")));
        }
        let body = match doc.str("kind")? {
            "quantum" => {
                let plan = |name: &str| -> Result<CircuitPlan> {
                    Ok(CircuitPlan {
                        params: doc.parse(&format!("{name}.params"))?,
                        redundancy: doc.parse(&format!("{name}.redundancy"))?,
                        layers: parse_layers(doc.str(&format!("{name}.layers"))?)?,
                    })
                };
                ModelBody::Quantum {
                    generator_plan: plan("generator")?,
                    discriminator_plan: plan("discriminator")?,
                    theta_g: ParamVector(doc.floats("generator.theta")?),
                    theta_d: ParamVector(doc.floats("discriminator.theta")?),
                }
            }
            "classical" => {
                let net = |name: &str| -> Result<Mlp> {
                    let sizes = doc.usizes(&format!("{name}.sizes"))?;
                    if sizes.len() < 2 {
                        return Err(Error::ModelFormat(format!("{name}.sizes too short")));
                    }
                    let output = match doc.str(&format!("{name}.output"))? {
                        "tanh" => Activation::Tanh,
                        "sigmoid" => Activation::Sigmoid,
                        other => return Err(Error::ModelFormat(format!("unknown activation `{other}`"))),
                    };
                    let mut mlp = Mlp::new(&sizes, output, doc.parse(&format!("{name}.masked"))?);
                    mlp.set_params(&doc.floats(&format!("{name}.theta"))?)?;
                    Ok(mlp)
                };
                ModelBody::Classical(ClassicalGan {
                    generator: net("generator")?,
                    discriminator: net("discriminator")?,
                })
            }
            other => return Err(Error::ModelFormat(format!("unknown kind `{other}`"))),
        };
        let backend = match doc.str("backend")? {
            "pure" => Backend::Pure,
            "noisy" => Backend::Noisy(NoiseModel {
                p1: doc.parse("noise.p1")?,
                p2: doc.parse("noise.p2")?,
                readout_flip: doc.parse("noise.readout_flip")?,
                enabled: doc.parse("noise.enabled")?,
            }),
            other => return Err(Error::ModelFormat(format!("unknown backend `{other}`"))),
        };
        let optimizer = match doc.str("optimizer")? {
            "sgd" => OptimizerKind::Sgd,
            "adam" => OptimizerKind::Adam,
            other => return Err(Error::ModelFormat(format!("unknown optimizer `{other}`"))),
        };
        let weight_policy = match doc.str("weight.policy")? {
            "last_step" => WeightPolicy::LastStep,
            s => match s.strip_prefix("trailing_mean:").map(str::parse) {
                Some(Ok(steps)) => WeightPolicy::TrailingMean { steps },
                _ => return Err(Error::ModelFormat(format!("unknown weight policy `{s}`"))),
            },
        };
        let to2 = |v: Vec<f64>, key: &str| -> Result<[f64; 2]> {
            v.try_into()
                .map_err(|_| Error::ModelFormat(format!("{key} needs two values")))
        };
        let mut thresholds = Vec::new();
        for mode in DetectionMode::ALL {
            let m = mode.name();
            let key = format!("threshold.{m}.value");
            if doc.0.contains_key(&key) {
                thresholds.push((
                    mode,
                    Threshold {
                        value: doc.parse(&key)?,
                        percentile: doc.parse(&format!("threshold.{m}.percentile"))?,
                        source_size: doc.parse(&format!("threshold.{m}.source_size"))?,
                    },
                ));
            }
        }
        Ok(Self {
            body,
            seed: doc.parse("seed")?,
            learning_rate: doc.parse("learning_rate")?,
            epochs: doc.parse("epochs")?,
            optimizer,
            backend,
            scaler: Scaler {
                min: to2(doc.floats("scaler.min")?, "scaler.min")?,
                max: to2(doc.floats("scaler.max")?, "scaler.max")?,
            },
            last_loss_g: doc.parse("loss.g")?,
            last_loss_d: doc.parse("loss.d")?,
            step_count: doc.parse("step_count")?,
            weight_policy,
            weight_losses: (doc.parse("weight.loss_g")?, doc.parse("weight.loss_d")?),
            train_mse: doc.parse("train_mse")?,
            thresholds,
            config_echo: echo,
        })
    }
}

struct Doc(BTreeMap<String, String>);

impl Doc {
    fn str(&self, key: &str) -> Result<&str> {
        self.0
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::ModelFormat(format!("missing key `{key}`")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.str(key)?;
        raw.parse()
            .map_err(|_| Error::ModelFormat(format!("bad value `{raw}` for `{key}`")))
    }

    fn floats(&self, key: &str) -> Result<Vec<f64>> {
        let raw = self.str(key)?;
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::ModelFormat(format!("bad float `{s}` in `{key}`")))
            })
            .collect()
    }

    fn usizes(&self, key: &str) -> Result<Vec<usize>> {
        self.str(key)?
            .split(',')
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::ModelFormat(format!("bad integer `{s}` in `{key}`")))
            })
            .collect()
    }
}
