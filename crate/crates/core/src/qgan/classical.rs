//! Fully connected GAN with the same conditioning, losses and loop as the
//! circuit pair. Hidden widths are searched so that the trainable parameter
//! count lands exactly on the requested budget; surplus first-layer weights are
//! masked to zero and frozen.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{policy_losses, GanModel, Optimizer, StepLoss, TrainConfig, WeightPolicy};
use crate::data::{TimePoint, TimeWindow, TAU};
use crate::error::{Error, Result};

const GEN_INPUTS: usize = 2 * TAU;
const DISC_INPUTS: usize = 2 * TAU + 2;
const MAX_SEARCH_WIDTH: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    /// `false` marks a frozen, zero weight.
    pub trainable: Vec<bool>,
    pub activation: Activation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// `sizes = [in, hidden…, out]`; the last `masked` first-layer weights are frozen at zero.
    pub fn new(sizes: &[usize], output: Activation, masked: usize) -> Self {
        let mut layers = Vec::new();
        for (k, pair) in sizes.windows(2).enumerate() {
            let (i, o) = (pair[0], pair[1]);
            let mut trainable = vec![true; i * o];
            if k == 0 {
                let m = masked.min(i * o);
                trainable[i * o - m..].fill(false);
            }
            let last = k + 2 == sizes.len();
            layers.push(Dense {
                inputs: i,
                outputs: o,
                weights: vec![0.0; i * o],
                bias: vec![0.0; o],
                trainable,
                activation: if last { output } else { Activation::Tanh },
            });
        }
        Self { layers }
    }

    fn init(&mut self, rng: &mut ChaCha8Rng) {
        for l in &mut self.layers {
            let bound = 1.0 / (l.inputs as f64).sqrt();
            for (w, &t) in l.weights.iter_mut().zip(&l.trainable) {
                *w = if t { rng.gen_range(-bound..=bound) } else { 0.0 };
            }
            l.bias.fill(0.0);
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.layers.iter().map(|l| l.inputs).collect();
        s.extend(self.layers.last().map(|l| l.outputs));
        s
    }

    pub fn masked(&self) -> usize {
        self.layers
            .first()
            .map_or(0, |l| l.trainable.iter().filter(|&&t| !t).count())
    }

    pub fn output_activation(&self) -> Option<Activation> {
        self.layers.last().map(|l| l.activation)
    }

    /// Trainable weights plus biases.
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.trainable.iter().filter(|&&t| t).count() + l.bias.len())
            .sum()
    }

    /// Trainable values, layer by layer: unmasked weights row-major, then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(
                l.weights
                    .iter()
                    .zip(&l.trainable)
                    .filter(|(_, &t)| t)
                    .map(|(w, _)| *w),
            );
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::ParamLength {
                expected: self.param_count(),
                actual: values.len(),
            });
        }
        let mut it = values.iter();
        for l in &mut self.layers {
            for (w, &t) in l.weights.iter_mut().zip(&l.trainable) {
                if t {
                    *w = *it.next().unwrap();
                }
            }
            for b in &mut l.bias {
                *b = *it.next().unwrap();
            }
        }
        Ok(())
    }

    /// Activations of every layer, starting with the input.
    fn forward_all(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        for l in &self.layers {
            let input = acts.last().unwrap();
            let out = (0..l.outputs)
                .map(|o| {
                    let row = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                    let z = row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + l.bias[o];
                    l.activation.apply(z)
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_all(x).pop().unwrap()
    }

    /// Gradient of `dout · output` with respect to the trainable parameters
    /// (in [`Mlp::params`] order) and to the input.
    fn backward(&self, acts: &[Vec<f64>], dout: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut per_layer: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(self.layers.len());
        let mut delta_out = dout.to_vec();
        for (k, l) in self.layers.iter().enumerate().rev() {
            let input = &acts[k];
            let output = &acts[k + 1];
            let dz: Vec<f64> = delta_out
                .iter()
                .zip(output)
                .map(|(d, y)| d * l.activation.derivative_from_output(*y))
                .collect();
            let mut dw = Vec::new();
            for o in 0..l.outputs {
                for i in 0..l.inputs {
                    if l.trainable[o * l.inputs + i] {
                        dw.push(dz[o] * input[i]);
                    }
                }
            }
            let mut dx = vec![0.0; l.inputs];
            for o in 0..l.outputs {
                for i in 0..l.inputs {
                    dx[i] += l.weights[o * l.inputs + i] * dz[o];
                }
            }
            per_layer.push((dw, dz));
            delta_out = dx;
        }
        per_layer.reverse();
        let grad = per_layer
            .into_iter()
            .flat_map(|(dw, db)| dw.into_iter().chain(db))
            .collect();
        (grad, delta_out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassicalGanConfig {
    pub generator_params: usize,
    pub discriminator_params: usize,
    /// Explicit hidden widths; empty searches a single hidden layer and masks the surplus.
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
}

impl Default for ClassicalGanConfig {
    fn default() -> Self {
        Self {
            generator_params: 51,
            discriminator_params: 55,
            generator_hidden: Vec::new(),
            discriminator_hidden: Vec::new(),
        }
    }
}

fn dense_total(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
}

fn plan_network(inputs: usize, outputs: usize, hidden: &[usize], target: usize, act: Activation) -> Result<Mlp> {
    if !hidden.is_empty() {
        let sizes: Vec<usize> = std::iter::once(inputs)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(outputs))
            .collect();
        if hidden.contains(&0) || dense_total(&sizes) != target {
            return Err(Error::Plan(format!(
                "widths {sizes:?} give {} parameters, declared {target}",
                dense_total(&sizes)
            )));
        }
        return Ok(Mlp::new(&sizes, act, 0));
    }
    for h in 1..=MAX_SEARCH_WIDTH {
        let sizes = [inputs, h, outputs];
        let total = dense_total(&sizes);
        if total >= target {
            let surplus = total - target;
            if surplus > inputs * h {
                break;
            }
            return Ok(Mlp::new(&sizes, act, surplus));
        }
    }
    Err(Error::Plan(format!("no single-hidden-layer plan reaches {target} parameters")))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalGan {
    pub generator: Mlp,
    pub discriminator: Mlp,
}

/// Builds both networks and seeds their weights.
pub fn build_classical_gan(config: &ClassicalGanConfig, seed: u64) -> Result<ClassicalGan> {
    let mut generator = plan_network(
        GEN_INPUTS,
        2,
        &config.generator_hidden,
        config.generator_params,
        Activation::Tanh,
    )?;
    let mut discriminator = plan_network(
        DISC_INPUTS,
        1,
        &config.discriminator_hidden,
        config.discriminator_params,
        Activation::Sigmoid,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generator.init(&mut rng);
    discriminator.init(&mut rng);
    Ok(ClassicalGan {
        generator,
        discriminator,
    })
}

fn flatten(context: &[TimePoint; TAU]) -> Vec<f64> {
    context.iter().flat_map(|p| [p.a, p.b]).collect()
}

fn disc_input(context: &[TimePoint; TAU], candidate: &TimePoint) -> Vec<f64> {
    let mut x = flatten(context);
    x.extend([candidate.a, candidate.b]);
    x
}

impl GanModel for ClassicalGan {
    fn predict(&self, context: &[TimePoint; TAU]) -> Result<TimePoint> {
        let y = self.generator.forward(&flatten(context));
        Ok(TimePoint::new(y[0], y[1]))
    }

    fn discriminate(&self, context: &[TimePoint; TAU], candidate: &TimePoint) -> Result<f64> {
        Ok(self.discriminator.forward(&disc_input(context, candidate))[0])
    }
}

impl ClassicalGan {
    /// `L_D` and its gradient over discriminator parameters.
    pub fn discriminator_loss_grad(&self, w: &TimeWindow, fake: &TimePoint) -> (f64, Vec<f64>) {
        let real_acts = self.discriminator.forward_all(&disc_input(&w.context, &w.target));
        let fake_acts = self.discriminator.forward_all(&disc_input(&w.context, fake));
        let dr = real_acts.last().unwrap()[0];
        let df = fake_acts.last().unwrap()[0];
        let (gr, _) = self.discriminator.backward(&real_acts, &[2.0 * (dr - 1.0)]);
        let (gf, _) = self.discriminator.backward(&fake_acts, &[2.0 * df]);
        let grad = gr.iter().zip(&gf).map(|(a, b)| a + b).collect();
        ((dr - 1.0).powi(2) + df.powi(2), grad)
    }

    /// `L_G` and its gradient over generator parameters, backpropagated through the discriminator.
    pub fn generator_loss_grad(&self, w: &TimeWindow) -> (f64, Vec<f64>) {
        let g_acts = self.generator.forward_all(&flatten(&w.context));
        let y = g_acts.last().unwrap();
        let fake = TimePoint::new(y[0], y[1]);
        let d_acts = self.discriminator.forward_all(&disc_input(&w.context, &fake));
        let d = d_acts.last().unwrap()[0];
        let (_, dx) = self.discriminator.backward(&d_acts, &[2.0 * (d - 1.0)]);
        let (grad, _) = self.generator.backward(&g_acts, &dx[2 * TAU..]);
        ((d - 1.0).powi(2), grad)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalState {
    pub gan: ClassicalGan,
    pub last_loss_g: f64,
    pub last_loss_d: f64,
    pub loss_history: Vec<StepLoss>,
    pub step_count: usize,
}

impl ClassicalState {
    pub fn weight_losses(&self, policy: WeightPolicy) -> (f64, f64) {
        policy_losses(&self.loss_history, (self.last_loss_g, self.last_loss_d), policy)
    }
}

/// Same loop as the circuit trainer, with backpropagated gradients.
pub fn train_classical(
    windows: &[TimeWindow],
    config: &TrainConfig,
    gan_config: &ClassicalGanConfig,
) -> Result<ClassicalState> {
    config.validate()?;
    if windows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut gan = build_classical_gan(gan_config, config.seed)?;
    let mut opt_g = Optimizer::new(config.optimizer, config.learning_rate, gan.generator.param_count());
    let mut opt_d = Optimizer::new(
        config.optimizer,
        config.learning_rate,
        gan.discriminator.param_count(),
    );
    let mut state_losses = Vec::new();
    let (mut lg, mut ld) = (0.0, 0.0);
    for _ in 0..config.epochs {
        for w in windows {
            let step = state_losses.len();
            let fake = gan.predict(&w.context)?;
            let (loss_d, grad_d) = gan.discriminator_loss_grad(w, &fake);
            if !loss_d.is_finite() {
                return Err(Error::Divergence { step });
            }
            let mut pd = gan.discriminator.params();
            opt_d.step(&mut pd, &grad_d);
            gan.discriminator.set_params(&pd)?;

            let (loss_g, grad_g) = gan.generator_loss_grad(w);
            if !loss_g.is_finite() {
                return Err(Error::Divergence { step });
            }
            let mut pg = gan.generator.params();
            opt_g.step(&mut pg, &grad_g);
            gan.generator.set_params(&pg)?;

            lg = loss_g;
            ld = loss_d;
            state_losses.push(StepLoss { g: loss_g, d: loss_d });
        }
    }
    Ok(ClassicalState {
        gan,
        last_loss_g: lg,
        last_loss_d: ld,
        step_count: state_losses.len(),
        loss_history: state_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window(k: u64) -> TimeWindow {
        let mut rng = ChaCha8Rng::seed_from_u64(k);
        let mut p = || TimePoint::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        TimeWindow {
            t: 3,
            context: [p(), p(), p()],
            target: p(),
            label: false,
            context_attacked: false,
        }
    }

    #[test]
    fn default_totals() {
        let gan = build_classical_gan(&ClassicalGanConfig::default(), 0).unwrap();
        assert_eq!(gan.generator.param_count(), 51);
        assert_eq!(gan.discriminator.param_count(), 55);
        assert_eq!(gan.generator.params().len(), 51);
    }

    #[test]
    fn explicit_widths_must_match() {
        let cfg = ClassicalGanConfig {
            generator_hidden: vec![5],
            ..ClassicalGanConfig::default()
        };
        assert!(matches!(build_classical_gan(&cfg, 0), Err(Error::Plan(_))));
        let cfg = ClassicalGanConfig {
            generator_params: 47,
            generator_hidden: vec![5],
            ..ClassicalGanConfig::default()
        };
        assert_eq!(build_classical_gan(&cfg, 0).unwrap().generator.param_count(), 47);
    }

    #[test]
    fn zero_weights_output_tanh_bias() {
        let mut gan = build_classical_gan(&ClassicalGanConfig::default(), 1).unwrap();
        let n = gan.generator.param_count();
        gan.generator.set_params(&vec![0.0; n]).unwrap();
        let last = gan.generator.layers.last_mut().unwrap();
        last.bias = vec![0.3, -0.7];
        for k in 0..3 {
            let p = gan.predict(&window(k).context).unwrap();
            assert!((p.a - 0.3f64.tanh()).abs() < 1e-15);
            assert!((p.b + 0.7f64.tanh()).abs() < 1e-15);
        }
    }

    fn fd<F: Fn(&[f64]) -> f64>(f: F, x: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        (0..x.len())
            .map(|i| {
                let mut p = x.to_vec();
                p[i] += h;
                let mut m = x.to_vec();
                m[i] -= h;
                (f(&p) - f(&m)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let gan = build_classical_gan(&ClassicalGanConfig::default(), 3).unwrap();
        for k in 0..8 {
            let w = window(100 + k);
            let fake = gan.predict(&w.context).unwrap();

            let (_, gd) = gan.discriminator_loss_grad(&w, &fake);
            let num = fd(
                |p| {
                    let mut g = gan.clone();
                    g.discriminator.set_params(p).unwrap();
                    g.discriminator_loss_grad(&w, &fake).0
                },
                &gan.discriminator.params(),
            );
            let err = gd.iter().zip(&num).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-6, "disc grad err {err}");

            let (_, gg) = gan.generator_loss_grad(&w);
            let num = fd(
                |p| {
                    let mut g = gan.clone();
                    g.generator.set_params(p).unwrap();
                    g.generator_loss_grad(&w).0
                },
                &gan.generator.params(),
            );
            let err = gg.iter().zip(&num).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-6, "gen grad err {err}");
        }
    }

    #[test]
    fn zero_lr_and_determinism() {
        let ws: Vec<_> = (0..5).map(window).collect();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            seed: 4,
            ..TrainConfig::default()
        };
        let st = train_classical(&ws, &cfg, &ClassicalGanConfig::default()).unwrap();
        let init = build_classical_gan(&ClassicalGanConfig::default(), 4).unwrap();
        assert_eq!(st.gan, init);

        let cfg = TrainConfig {
            learning_rate: 0.01,
            ..cfg
        };
        let a = train_classical(&ws, &cfg, &ClassicalGanConfig::default()).unwrap();
        let b = train_classical(&ws, &cfg, &ClassicalGanConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.gan, init);
    }
}
