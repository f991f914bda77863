//! Generator and discriminator circuits.
//!
//! Both circuits alternate input layers with variational layers. Input layer
//! `i` injects the `i`-th point of the window as `RY(arccos x)` rotations, each
//! feature on its own group of redundant qubits. The discriminator additionally
//! re-uploads the candidate point on two extra qubits at every input layer.
//! A variational layer applies per-qubit RZ/RX rotations and optionally a CX
//! ring `0→1→…→n−1→0`.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{TimePoint, TAU};
use crate::error::{Error, Result};
use crate::qsim::{Backend, Gate, QuantumState};

pub const N_FEATURES: usize = 2;
const ENCODING_SLACK: f64 = 1e-9;
const INIT_SCALE: f64 = PI / 100.0;

/// `arccos x`, clamping values that overshoot `[-1, 1]` by at most 1e-9.
pub fn encode_angle(x: f64) -> Result<f64> {
    if !x.is_finite() || x.abs() > 1.0 + ENCODING_SLACK {
        return Err(Error::EncodingDomain(x));
    }
    Ok(x.clamp(-1.0, 1.0).acos())
}

/// d/dx arccos x, with the singularity at ±1 capped.
fn encode_angle_derivative(x: f64) -> f64 {
    let s = (1.0 - x * x).max(1e-12);
    -1.0 / s.sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Z,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Generator,
    Discriminator,
}

/// Layer descriptor as it appears in a configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerPlan {
    Input {
        /// Re-upload the candidate point (discriminator only). Defaults to the role's behavior.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reupload_candidate: Option<bool>,
    },
    Variational {
        /// Rotation axes per qubit, applied in order.
        rotations: Vec<Vec<Axis>>,
        entangle: bool,
    },
}

impl LayerPlan {
    fn input() -> Self {
        LayerPlan::Input {
            reupload_candidate: None,
        }
    }

    fn full(n_qubits: usize, entangle: bool) -> Self {
        LayerPlan::Variational {
            rotations: vec![vec![Axis::Z, Axis::X]; n_qubits],
            entangle,
        }
    }
}

/// Ordered layer list plus the parameter budget it must hit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitPlan {
    /// Declared parameter total; building fails if the layers disagree.
    pub params: usize,
    #[serde(default = "default_redundancy")]
    pub redundancy: usize,
    pub layers: Vec<LayerPlan>,
}

fn default_redundancy() -> usize {
    2
}

impl CircuitPlan {
    /// Four qubits, three interleaved full layers and a 6-parameter readout layer: 30 parameters.
    pub fn default_generator() -> Self {
        let n = 4;
        let mut layers = Vec::new();
        for _ in 0..TAU {
            layers.push(LayerPlan::input());
            layers.push(LayerPlan::full(n, true));
        }
        layers.push(LayerPlan::Variational {
            rotations: vec![
                vec![Axis::Z, Axis::X],
                vec![Axis::Z, Axis::X],
                vec![Axis::X],
                vec![Axis::X],
            ],
            entangle: false,
        });
        Self {
            params: 30,
            redundancy: 2,
            layers,
        }
    }

    /// Six qubits, three interleaved full layers, one trailing full layer and a
    /// 2-parameter readout layer on qubit 0: 50 parameters.
    pub fn default_discriminator() -> Self {
        let n = 6;
        let mut layers = Vec::new();
        for _ in 0..TAU {
            layers.push(LayerPlan::input());
            layers.push(LayerPlan::full(n, true));
        }
        layers.push(LayerPlan::full(n, true));
        let mut readout = vec![Vec::new(); n];
        readout[0] = vec![Axis::Z, Axis::X];
        layers.push(LayerPlan::Variational {
            rotations: readout,
            entangle: false,
        });
        Self {
            params: 50,
            redundancy: 2,
            layers,
        }
    }

    /// Only the three input layers.
    pub fn inputs_only() -> Self {
        Self {
            params: 0,
            redundancy: 2,
            layers: vec![LayerPlan::input(); TAU],
        }
    }
}

/// Which qubits carry which feature.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodingPlan {
    pub redundancy: usize,
    /// `feature_qubits[f]` are the qubits that receive feature `f` of the window.
    pub feature_qubits: [Vec<usize>; N_FEATURES],
    /// Discriminator only: one qubit per feature of the candidate point.
    pub candidate_qubits: Option<[usize; N_FEATURES]>,
}

impl EncodingPlan {
    fn new(redundancy: usize, role: Role) -> Self {
        let feature_qubits = [
            (0..redundancy).collect(),
            (redundancy..2 * redundancy).collect(),
        ];
        let candidate_qubits = match role {
            Role::Generator => None,
            Role::Discriminator => Some([2 * redundancy, 2 * redundancy + 1]),
        };
        Self {
            redundancy,
            feature_qubits,
            candidate_qubits,
        }
    }

    pub fn n_qubits(&self) -> usize {
        N_FEATURES * self.redundancy + if self.candidate_qubits.is_some() { N_FEATURES } else { 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Input {
        injection: usize,
        reupload_candidate: bool,
    },
    Variational {
        /// `(qubit, axis)` in application order; parameter `offset + k` drives entry `k`.
        rotations: Vec<(usize, Axis)>,
        offset: usize,
        entangle: bool,
    },
}

/// Where a rotation angle comes from when the circuit is bound to inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AngleSource {
    Param(usize),
    Window { step: usize, feature: usize },
    Candidate { feature: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Op {
    Rx(usize, AngleSource),
    Ry(usize, AngleSource),
    Rz(usize, AngleSource),
    Cx(usize, usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CircuitSpec {
    pub role: Role,
    pub n_qubits: usize,
    pub layers: Vec<Layer>,
    pub total_params: usize,
    pub encoding: EncodingPlan,
    ops: Vec<Op>,
}

pub fn build_generator(plan: &CircuitPlan) -> Result<CircuitSpec> {
    CircuitSpec::build(plan, Role::Generator)
}

pub fn build_discriminator(plan: &CircuitPlan) -> Result<CircuitSpec> {
    CircuitSpec::build(plan, Role::Discriminator)
}

impl CircuitSpec {
    pub fn build(plan: &CircuitPlan, role: Role) -> Result<Self> {
        if plan.redundancy == 0 {
            return Err(Error::Plan("redundancy must be at least 1".into()));
        }
        let encoding = EncodingPlan::new(plan.redundancy, role);
        let n_qubits = encoding.n_qubits();
        if n_qubits > crate::qsim::MAX_QUBITS {
            return Err(Error::QubitCount(n_qubits));
        }
        let mut layers = Vec::with_capacity(plan.layers.len());
        let mut offset = 0;
        let mut injection = 0;
        for layer in &plan.layers {
            match layer {
                LayerPlan::Input { reupload_candidate } => {
                    if injection == TAU {
                        return Err(Error::Plan(format!("more than {TAU} input layers")));
                    }
                    let reupload = match (role, reupload_candidate) {
                        (Role::Generator, Some(true)) => {
                            return Err(Error::Plan("generator has no candidate qubits".into()))
                        }
                        (Role::Generator, _) => false,
                        (Role::Discriminator, r) => r.unwrap_or(true),
                    };
                    layers.push(Layer::Input {
                        injection,
                        reupload_candidate: reupload,
                    });
                    injection += 1;
                }
                LayerPlan::Variational { rotations, entangle } => {
                    if rotations.len() != n_qubits {
                        return Err(Error::Plan(format!(
                            "variational layer lists {} qubits, circuit has {n_qubits}",
                            rotations.len()
                        )));
                    }
                    let flat: Vec<(usize, Axis)> = rotations
                        .iter()
                        .enumerate()
                        .flat_map(|(q, axes)| axes.iter().map(move |&a| (q, a)))
                        .collect();
                    let len = flat.len();
                    layers.push(Layer::Variational {
                        rotations: flat,
                        offset,
                        entangle: *entangle,
                    });
                    offset += len;
                }
            }
        }
        if injection != TAU {
            return Err(Error::Plan(format!(
                "expected {TAU} input layers, found {injection}"
            )));
        }
        if offset != plan.params {
            return Err(Error::ParamBudget {
                expected: plan.params,
                actual: offset,
            });
        }
        let mut spec = Self {
            role,
            n_qubits,
            layers,
            total_params: offset,
            encoding,
            ops: Vec::new(),
        };
        spec.ops = spec.compile();
        Ok(spec)
    }

    fn compile(&self) -> Vec<Op> {
        let mut ops = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Input {
                    injection,
                    reupload_candidate,
                } => {
                    for (feature, qubits) in self.encoding.feature_qubits.iter().enumerate() {
                        for &q in qubits {
                            ops.push(Op::Ry(
                                q,
                                AngleSource::Window {
                                    step: *injection,
                                    feature,
                                },
                            ));
                        }
                    }
                    if *reupload_candidate {
                        if let Some(cq) = self.encoding.candidate_qubits {
                            for (feature, &q) in cq.iter().enumerate() {
                                ops.push(Op::Ry(q, AngleSource::Candidate { feature }));
                            }
                        }
                    }
                }
                Layer::Variational {
                    rotations,
                    offset,
                    entangle,
                } => {
                    for (k, &(q, axis)) in rotations.iter().enumerate() {
                        let src = AngleSource::Param(offset + k);
                        ops.push(match axis {
                            Axis::X => Op::Rx(q, src),
                            Axis::Z => Op::Rz(q, src),
                        });
                    }
                    if *entangle && self.n_qubits > 1 {
                        for q in 0..self.n_qubits {
                            ops.push(Op::Cx(q, (q + 1) % self.n_qubits));
                        }
                    }
                }
            }
        }
        ops
    }

    /// Angle sources of every rotation, in gate order (CX gates yield `None`).
    pub fn angle_sources(&self) -> Vec<Option<AngleSource>> {
        self.ops
            .iter()
            .map(|op| match *op {
                Op::Rx(_, s) | Op::Ry(_, s) | Op::Rz(_, s) => Some(s),
                Op::Cx(..) => None,
            })
            .collect()
    }

    /// Concrete gate list for the given parameters and inputs.
    pub fn bind(
        &self,
        params: &[f64],
        window: &[TimePoint; TAU],
        candidate: Option<&TimePoint>,
    ) -> Result<Vec<Gate>> {
        if params.len() != self.total_params {
            return Err(Error::ParamLength {
                expected: self.total_params,
                actual: params.len(),
            });
        }
        let mut window_angles = [[0.0; N_FEATURES]; TAU];
        for (step, p) in window.iter().enumerate() {
            for f in 0..N_FEATURES {
                window_angles[step][f] = encode_angle(p.feature(f))?;
            }
        }
        let candidate_angles = match (self.encoding.candidate_qubits, candidate) {
            (Some(_), Some(c)) => Some([encode_angle(c.a)?, encode_angle(c.b)?]),
            (Some(_), None) => {
                return Err(Error::Plan("discriminator needs a candidate point".into()))
            }
            (None, _) => None,
        };
        let angle = |src: AngleSource| match src {
            AngleSource::Param(k) => params[k],
            AngleSource::Window { step, feature } => window_angles[step][feature],
            AngleSource::Candidate { feature } => candidate_angles.map_or(0.0, |c| c[feature]),
        };
        Ok(self
            .ops
            .iter()
            .map(|op| match *op {
                Op::Rx(qubit, s) => Gate::Rx {
                    qubit,
                    angle: angle(s),
                },
                Op::Ry(qubit, s) => Gate::Ry {
                    qubit,
                    angle: angle(s),
                },
                Op::Rz(qubit, s) => Gate::Rz {
                    qubit,
                    angle: angle(s),
                },
                Op::Cx(control, target) => Gate::Cx { control, target },
            })
            .collect())
    }

    /// Gate index of every occurrence of each parameter.
    fn param_positions(&self) -> Vec<Vec<usize>> {
        let mut pos = vec![Vec::new(); self.total_params];
        for (i, src) in self.angle_sources().into_iter().enumerate() {
            if let Some(AngleSource::Param(k)) = src {
                pos[k].push(i);
            }
        }
        pos
    }
}

/// Trainable angles.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    /// Uniform in `[-π/100, π/100]`.
    pub fn init(len: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self(
            (0..len)
                .map(|_| rng.gen_range(-INIT_SCALE..=INIT_SCALE))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Pauli-Z expectations of `readout` qubits after running `gates` from `|0…0⟩`.
pub fn run_expectations(
    n_qubits: usize,
    gates: &[Gate],
    backend: &Backend,
    readout: &[usize],
) -> Result<Vec<f64>> {
    let mut state = QuantumState::new(n_qubits, backend)?;
    state.run(gates)?;
    readout.iter().map(|&q| state.expect_z(q)).collect()
}

fn shift_gate(gate: &mut Gate, delta: f64) -> Result<()> {
    match gate {
        Gate::Rx { angle, .. } | Gate::Ry { angle, .. } | Gate::Rz { angle, .. } => {
            *angle += delta;
            Ok(())
        }
        Gate::Cx { .. } => Err(Error::NonPauliGate("CX".into())),
    }
}

/// Sum over `positions` of `[f(θ+π/2) − f(θ−π/2)]/2`, one output vector per call.
fn shift_rule<F>(gates: &[Gate], positions: &[usize], eval: &F) -> Result<Vec<f64>>
where
    F: Fn(&[Gate]) -> Result<Vec<f64>>,
{
    let mut total: Option<Vec<f64>> = None;
    for &pos in positions {
        let mut plus = gates.to_vec();
        shift_gate(&mut plus[pos], FRAC_PI_2)?;
        let mut minus = gates.to_vec();
        shift_gate(&mut minus[pos], -FRAC_PI_2)?;
        let (fp, fm) = (eval(&plus)?, eval(&minus)?);
        let d: Vec<f64> = fp.iter().zip(&fm).map(|(p, m)| (p - m) / 2.0).collect();
        total = Some(match total {
            None => d,
            Some(t) => t.iter().zip(&d).map(|(a, b)| a + b).collect(),
        });
    }
    Ok(total.unwrap_or_default())
}

/// Parameter-shift Jacobian of the readout expectations: `jac[k][j] = ∂⟨Z_{readout[j]}⟩/∂θ_k`.
pub fn param_shift_jacobian(
    circuit: &CircuitSpec,
    gates: &[Gate],
    backend: &Backend,
    readout: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let positions = circuit.param_positions();
    let eval = |g: &[Gate]| run_expectations(circuit.n_qubits, g, backend, readout);
    positions
        .par_iter()
        .map(|pos| {
            if pos.is_empty() {
                Ok(vec![0.0; readout.len()])
            } else {
                shift_rule(gates, pos, &eval)
            }
        })
        .collect()
}

/// Parameter-shift gradient of a scalar that is linear in the circuit's Z expectations.
///
/// `output` maps the expectations of `readout` to the scalar.
pub fn param_shift_grad<F>(
    circuit: &CircuitSpec,
    gates: &[Gate],
    backend: &Backend,
    readout: &[usize],
    output: F,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let positions = circuit.param_positions();
    let eval = |g: &[Gate]| {
        let e = run_expectations(circuit.n_qubits, g, backend, readout)?;
        Ok(vec![output(&e)])
    };
    positions
        .par_iter()
        .map(|pos| {
            if pos.is_empty() {
                Ok(0.0)
            } else {
                Ok(shift_rule(gates, pos, &eval)?[0])
            }
        })
        .collect()
}

/// Generator circuit with its readout rule.
#[derive(Clone, Debug)]
pub struct Generator {
    pub circuit: CircuitSpec,
}

impl Generator {
    pub fn new(plan: &CircuitPlan) -> Result<Self> {
        Ok(Self {
            circuit: build_generator(plan)?,
        })
    }

    fn readout(&self) -> Vec<usize> {
        self.circuit.encoding.feature_qubits.concat()
    }

    fn combine(&self, e: &[f64]) -> TimePoint {
        let r = self.circuit.encoding.redundancy;
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        TimePoint::new(mean(&e[..r]), mean(&e[r..2 * r]))
    }

    /// Predicted next point: per feature, the mean `⟨Z⟩` of its qubits.
    pub fn forward(
        &self,
        params: &ParamVector,
        window: &[TimePoint; TAU],
        backend: &Backend,
    ) -> Result<TimePoint> {
        let gates = self.circuit.bind(params.as_slice(), window, None)?;
        let e = run_expectations(self.circuit.n_qubits, &gates, backend, &self.readout())?;
        Ok(self.combine(&e))
    }

    /// Prediction and its Jacobian, `jac[k] = ∂(â, b̂)/∂θ_k`.
    pub fn forward_with_jacobian(
        &self,
        params: &ParamVector,
        window: &[TimePoint; TAU],
        backend: &Backend,
    ) -> Result<(TimePoint, Vec<[f64; 2]>)> {
        let gates = self.circuit.bind(params.as_slice(), window, None)?;
        let readout = self.readout();
        let e = run_expectations(self.circuit.n_qubits, &gates, backend, &readout)?;
        let jac = param_shift_jacobian(&self.circuit, &gates, backend, &readout)?
            .into_iter()
            .map(|row| {
                let p = self.combine(&row);
                [p.a, p.b]
            })
            .collect();
        Ok((self.combine(&e), jac))
    }
}

/// Discriminator circuit; the score is `(1 + ⟨Z_0⟩)/2`.
#[derive(Clone, Debug)]
pub struct Discriminator {
    pub circuit: CircuitSpec,
}

fn score(z0: f64) -> f64 {
    ((1.0 + z0) / 2.0).clamp(0.0, 1.0)
}

impl Discriminator {
    pub fn new(plan: &CircuitPlan) -> Result<Self> {
        Ok(Self {
            circuit: build_discriminator(plan)?,
        })
    }

    pub fn forward(
        &self,
        params: &ParamVector,
        window: &[TimePoint; TAU],
        candidate: &TimePoint,
        backend: &Backend,
    ) -> Result<f64> {
        let gates = self.circuit.bind(params.as_slice(), window, Some(candidate))?;
        let e = run_expectations(self.circuit.n_qubits, &gates, backend, &[0])?;
        Ok(score(e[0]))
    }

    /// Score and `∂score/∂θ` by parameter shift.
    pub fn forward_with_grad(
        &self,
        params: &ParamVector,
        window: &[TimePoint; TAU],
        candidate: &TimePoint,
        backend: &Backend,
    ) -> Result<(f64, Vec<f64>)> {
        let gates = self.circuit.bind(params.as_slice(), window, Some(candidate))?;
        let e = run_expectations(self.circuit.n_qubits, &gates, backend, &[0])?;
        let grad = param_shift_grad(&self.circuit, &gates, backend, &[0], |e| e[0] / 2.0)?;
        Ok((score(e[0]), grad))
    }

    /// `∂score/∂candidate` per feature: shift rule over every re-upload of the
    /// candidate angle, times `d arccos(y)/dy`.
    pub fn candidate_grad(
        &self,
        params: &ParamVector,
        window: &[TimePoint; TAU],
        candidate: &TimePoint,
        backend: &Backend,
    ) -> Result<[f64; N_FEATURES]> {
        let gates = self.circuit.bind(params.as_slice(), window, Some(candidate))?;
        let sources = self.circuit.angle_sources();
        let eval = |g: &[Gate]| {
            let e = run_expectations(self.circuit.n_qubits, g, backend, &[0])?;
            Ok(vec![e[0] / 2.0])
        };
        let mut out = [0.0; N_FEATURES];
        for (f, slot) in out.iter_mut().enumerate() {
            let positions: Vec<usize> = sources
                .iter()
                .enumerate()
                .filter(|(_, s)| **s == Some(AngleSource::Candidate { feature: f }))
                .map(|(i, _)| i)
                .collect();
            let d_angle = shift_rule(&gates, &positions, &eval)?
                .first()
                .copied()
                .unwrap_or(0.0);
            *slot = d_angle * encode_angle_derivative(candidate.feature(f));
        }
        Ok(out)
    }
}
