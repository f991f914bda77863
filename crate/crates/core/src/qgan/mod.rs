//! Adversarial training of the circuit pair, and the classical baseline.
//!
//! Each window yields one discriminator update on
//! `L_D = (D(w, x) − 1)² + D(w, x̂)²` followed by one generator update on
//! `L_G = (D(w, x̂) − 1)²`, where `x̂ = G(w)`. Gradients with respect to circuit
//! parameters come from the parameter-shift rule; the generator's gradient is
//! chained through the discriminator's dependence on the candidate point.

mod classical;
mod optim;

pub use classical::{
    build_classical_gan, train_classical, Activation, ClassicalGan, ClassicalGanConfig,
    ClassicalState, Mlp,
};
pub use optim::{Optimizer, OptimizerKind};

use serde::{Deserialize, Serialize};

use crate::data::{Scaler, TimePoint, TimeWindow, TAU};
use crate::error::{Error, Result};
use crate::qsim::Backend;
use crate::vqc::{CircuitPlan, Discriminator, Generator, ParamVector};

/// Anything that can predict the next point and judge a candidate.
pub trait GanModel: Sync {
    fn predict(&self, context: &[TimePoint; TAU]) -> Result<TimePoint>;
    /// Probability-like score that `candidate` is a real continuation.
    fn discriminate(&self, context: &[TimePoint; TAU], candidate: &TimePoint) -> Result<f64>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub backend: Backend,
    pub generator_plan: CircuitPlan,
    pub discriminator_plan: CircuitPlan,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            epochs: 1,
            seed: 0,
            backend: Backend::Pure,
            generator_plan: CircuitPlan::default_generator(),
            discriminator_plan: CircuitPlan::default_discriminator(),
            optimizer: OptimizerKind::Sgd,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::TrainConfig("learning_rate must be finite and ≥ 0".into()));
        }
        if self.epochs == 0 {
            return Err(Error::TrainConfig("epochs must be at least 1".into()));
        }
        if let Backend::Noisy(n) = &self.backend {
            n.validate()?;
        }
        Ok(())
    }
}

/// Loss pair recorded after one training step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLoss {
    pub g: f64,
    pub d: f64,
}

/// Which losses set the detection weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum WeightPolicy {
    /// Losses of the final step.
    #[default]
    LastStep,
    /// Mean losses over the final `steps` steps.
    TrailingMean { steps: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub theta_g: ParamVector,
    pub theta_d: ParamVector,
    pub last_loss_g: f64,
    pub last_loss_d: f64,
    pub loss_history: Vec<StepLoss>,
    pub scaler: Option<Scaler>,
    pub step_count: usize,
    pub opt_g: Optimizer,
    pub opt_d: Optimizer,
}

impl TrainState {
    pub fn init(qgan: &Qgan, config: &TrainConfig) -> Self {
        let ng = qgan.generator.circuit.total_params;
        let nd = qgan.discriminator.circuit.total_params;
        Self {
            theta_g: ParamVector::init(ng, config.seed),
            theta_d: ParamVector::init(nd, config.seed.wrapping_add(0x9e37_79b9)),
            last_loss_g: 0.0,
            last_loss_d: 0.0,
            loss_history: Vec::new(),
            scaler: None,
            step_count: 0,
            opt_g: Optimizer::new(config.optimizer, config.learning_rate, ng),
            opt_d: Optimizer::new(config.optimizer, config.learning_rate, nd),
        }
    }

    /// `(L_G, L_D)` under the given policy.
    pub fn weight_losses(&self, policy: WeightPolicy) -> (f64, f64) {
        policy_losses(&self.loss_history, (self.last_loss_g, self.last_loss_d), policy)
    }
}

/// `(L_G, L_D)` from a loss history; `last` is used when the history is empty.
pub fn policy_losses(history: &[StepLoss], last: (f64, f64), policy: WeightPolicy) -> (f64, f64) {
    match policy {
        WeightPolicy::LastStep => last,
        WeightPolicy::TrailingMean { steps } => {
            let k = steps.min(history.len());
            if k == 0 {
                return last;
            }
            let tail = &history[history.len() - k..];
            let g = tail.iter().map(|l| l.g).sum::<f64>() / k as f64;
            let d = tail.iter().map(|l| l.d).sum::<f64>() / k as f64;
            (g, d)
        }
    }
}

/// The generator/discriminator circuit pair.
#[derive(Clone, Debug)]
pub struct Qgan {
    pub generator: Generator,
    pub discriminator: Discriminator,
}

impl Qgan {
    pub fn new(generator_plan: &CircuitPlan, discriminator_plan: &CircuitPlan) -> Result<Self> {
        Ok(Self {
            generator: Generator::new(generator_plan)?,
            discriminator: Discriminator::new(discriminator_plan)?,
        })
    }

    /// `L_D` and its gradient at the given state.
    pub fn discriminator_loss_grad(
        &self,
        theta_d: &ParamVector,
        window: &TimeWindow,
        fake: &TimePoint,
        backend: &Backend,
    ) -> Result<(f64, Vec<f64>)> {
        let disc = &self.discriminator;
        let (d_real, g_real) = disc.forward_with_grad(theta_d, &window.context, &window.target, backend)?;
        let (d_fake, g_fake) = disc.forward_with_grad(theta_d, &window.context, fake, backend)?;
        let loss = (d_real - 1.0).powi(2) + d_fake.powi(2);
        let grad = g_real
            .iter()
            .zip(&g_fake)
            .map(|(r, f)| 2.0 * (d_real - 1.0) * r + 2.0 * d_fake * f)
            .collect();
        Ok((loss, grad))
    }

    /// `L_G` and its gradient with respect to the generator parameters.
    pub fn generator_loss_grad(
        &self,
        theta_g: &ParamVector,
        theta_d: &ParamVector,
        window: &TimeWindow,
        backend: &Backend,
    ) -> Result<(f64, Vec<f64>)> {
        let (fake, jac) = self
            .generator
            .forward_with_jacobian(theta_g, &window.context, backend)?;
        let d = self
            .discriminator
            .forward(theta_d, &window.context, &fake, backend)?;
        let dd_dy = self
            .discriminator
            .candidate_grad(theta_d, &window.context, &fake, backend)?;
        let outer = 2.0 * (d - 1.0);
        let grad = jac
            .iter()
            .map(|j| outer * (dd_dy[0] * j[0] + dd_dy[1] * j[1]))
            .collect();
        Ok(((d - 1.0).powi(2), grad))
    }
}

/// One discriminator update followed by one generator update.
pub fn train_step(
    qgan: &Qgan,
    state: &mut TrainState,
    window: &TimeWindow,
    backend: &Backend,
) -> Result<()> {
    let step = state.step_count;
    let fake = qgan
        .generator
        .forward(&state.theta_g, &window.context, backend)?;
    let (loss_d, grad_d) = qgan.discriminator_loss_grad(&state.theta_d, window, &fake, backend)?;
    if !loss_d.is_finite() || grad_d.iter().any(|g| !g.is_finite()) {
        return Err(Error::Divergence { step });
    }
    state.opt_d.step(&mut state.theta_d.0, &grad_d);

    let (loss_g, grad_g) =
        qgan.generator_loss_grad(&state.theta_g, &state.theta_d, window, backend)?;
    if !loss_g.is_finite() || grad_g.iter().any(|g| !g.is_finite()) {
        return Err(Error::Divergence { step });
    }
    state.opt_g.step(&mut state.theta_g.0, &grad_g);

    state.last_loss_g = loss_g;
    state.last_loss_d = loss_d;
    state.loss_history.push(StepLoss { g: loss_g, d: loss_d });
    state.step_count += 1;
    Ok(())
}

/// Sequential passes over `windows` in order.
pub fn train(windows: &[TimeWindow], config: &TrainConfig) -> Result<(Qgan, TrainState)> {
    config.validate()?;
    if windows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let qgan = Qgan::new(&config.generator_plan, &config.discriminator_plan)?;
    let mut state = TrainState::init(&qgan, config);
    for epoch in 0..config.epochs {
        for w in windows {
            train_step(&qgan, &mut state, w, &config.backend)?;
        }
        if let Some(last) = state.loss_history.last() {
            log::debug!("epoch {epoch}: L_G={:.6} L_D={:.6}", last.g, last.d);
        }
    }
    Ok((qgan, state))
}

/// Trained circuit pair bound to its parameters and an evaluation backend.
#[derive(Clone, Debug)]
pub struct TrainedQgan<'a> {
    pub qgan: &'a Qgan,
    pub theta_g: &'a ParamVector,
    pub theta_d: &'a ParamVector,
    pub backend: Backend,
}

impl<'a> TrainedQgan<'a> {
    pub fn new(qgan: &'a Qgan, state: &'a TrainState, backend: Backend) -> Self {
        Self {
            qgan,
            theta_g: &state.theta_g,
            theta_d: &state.theta_d,
            backend,
        }
    }
}

impl GanModel for TrainedQgan<'_> {
    fn predict(&self, context: &[TimePoint; TAU]) -> Result<TimePoint> {
        self.qgan
            .generator
            .forward(self.theta_g, context, &self.backend)
    }

    fn discriminate(&self, context: &[TimePoint; TAU], candidate: &TimePoint) -> Result<f64> {
        self.qgan
            .discriminator
            .forward(self.theta_d, context, candidate, &self.backend)
    }
}

/// Mean over windows of the per-point squared error averaged across both features.
pub fn evaluate_mse<M: GanModel + ?Sized>(model: &M, windows: &[TimeWindow]) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    use rayon::prelude::*;
    let errs: Vec<f64> = windows
        .par_iter()
        .map(|w| Ok(model.predict(&w.context)?.squared_error(&w.target)))
        .collect::<Result<_>>()?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}
