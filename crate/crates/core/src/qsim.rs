//! Small exact circuit simulator.
//!
//! Two representations share one gate set (RX, RY, RZ, CX): a pure statevector
//! and a density matrix that can carry depolarizing noise after every gate plus
//! a symmetric readout flip on Pauli-Z expectations.
//!
//! Qubit 0 is the most significant bit of a basis index, so on three qubits the
//! amplitude at index `0b100` belongs to `|1⟩|0⟩|0⟩`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const MAX_QUBITS: usize = 8;
const ORACLE_MAX_QUBITS: usize = 4;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

type Mat2 = [[C64; 2]; 2];

const PAULI_X: Mat2 = [[ZERO, ONE], [ONE, ZERO]];
const PAULI_Y: Mat2 = [[ZERO, C64::new(0.0, -1.0)], [I, ZERO]];
const PAULI_Z: Mat2 = [[ONE, ZERO], [ZERO, C64::new(-1.0, 0.0)]];

/// Per-gate depolarizing noise plus readout flip.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    /// Depolarizing probability after single-qubit gates.
    pub p1: f64,
    /// Depolarizing probability after CX.
    pub p2: f64,
    /// Classical flip probability folded into Z expectations.
    pub readout_flip: f64,
    pub enabled: bool,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            p1: 0.001,
            p2: 0.01,
            readout_flip: 0.02,
            enabled: true,
        }
    }
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self {
            p1: 0.0,
            p2: 0.0,
            readout_flip: 0.0,
            enabled: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in [self.p1, self.p2, self.readout_flip] {
            check_probability(p)?;
        }
        Ok(())
    }
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Probability(p))
    }
}

/// Which representation a circuit is evaluated in.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum Backend {
    #[default]
    Pure,
    Noisy(NoiseModel),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Gate {
    Rx { qubit: usize, angle: f64 },
    Ry { qubit: usize, angle: f64 },
    Rz { qubit: usize, angle: f64 },
    Cx { control: usize, target: usize },
}

impl Gate {
    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        let check = |q: usize| {
            if q < n_qubits {
                Ok(())
            } else {
                Err(Error::QubitIndex { index: q, n_qubits })
            }
        };
        match *self {
            Gate::Rx { qubit, .. } | Gate::Ry { qubit, .. } | Gate::Rz { qubit, .. } => check(qubit),
            Gate::Cx { control, target } => {
                check(control)?;
                check(target)?;
                if control == target {
                    return Err(Error::SameQubit(control));
                }
                Ok(())
            }
        }
    }

    /// The 2×2 matrix of a single-qubit gate; `None` for CX.
    pub fn matrix(&self) -> Option<Mat2> {
        match *self {
            Gate::Rx { angle, .. } => {
                let (s, c) = (angle / 2.0).sin_cos();
                let ms = C64::new(0.0, -s);
                Some([[C64::new(c, 0.0), ms], [ms, C64::new(c, 0.0)]])
            }
            Gate::Ry { angle, .. } => {
                let (s, c) = (angle / 2.0).sin_cos();
                Some([
                    [C64::new(c, 0.0), C64::new(-s, 0.0)],
                    [C64::new(s, 0.0), C64::new(c, 0.0)],
                ])
            }
            Gate::Rz { angle, .. } => {
                let h = angle / 2.0;
                Some([
                    [C64::from_polar(1.0, -h), ZERO],
                    [ZERO, C64::from_polar(1.0, h)],
                ])
            }
            Gate::Cx { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Repr {
    Pure(Vec<C64>),
    /// Row-major `dim × dim` density matrix.
    Noisy { rho: Vec<C64>, noise: NoiseModel },
}

/// Register state in either representation.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState {
    n_qubits: usize,
    repr: Repr,
}

impl QuantumState {
    /// `|0…0⟩`, or its projector for a noisy backend.
    pub fn new(n_qubits: usize, backend: &Backend) -> Result<Self> {
        if !(1..=MAX_QUBITS).contains(&n_qubits) {
            return Err(Error::QubitCount(n_qubits));
        }
        let dim = 1usize << n_qubits;
        let repr = match backend {
            Backend::Pure => {
                let mut amps = vec![ZERO; dim];
                amps[0] = ONE;
                Repr::Pure(amps)
            }
            Backend::Noisy(noise) => {
                noise.validate()?;
                let mut rho = vec![ZERO; dim * dim];
                rho[0] = ONE;
                Repr::Noisy { rho, noise: *noise }
            }
        };
        Ok(Self { n_qubits, repr })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn is_noisy(&self) -> bool {
        matches!(self.repr, Repr::Noisy { .. })
    }

    /// Statevector amplitudes, if this is a pure state.
    pub fn amplitudes(&self) -> Option<&[C64]> {
        match &self.repr {
            Repr::Pure(a) => Some(a),
            Repr::Noisy { .. } => None,
        }
    }

    /// Density matrix; a pure state returns `|ψ⟩⟨ψ|`.
    pub fn density_matrix(&self) -> DMatrix<C64> {
        let dim = self.dim();
        match &self.repr {
            Repr::Pure(a) => DMatrix::from_fn(dim, dim, |r, c| a[r] * a[c].conj()),
            Repr::Noisy { rho, .. } => DMatrix::from_fn(dim, dim, |r, c| rho[r * dim + c]),
        }
    }

    fn bit(&self, qubit: usize) -> usize {
        self.n_qubits - 1 - qubit
    }

    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        gate.validate(self.n_qubits)?;
        let n = self.n_qubits;
        match gate.matrix() {
            Some(m) => {
                let bit = self.bit(gate_qubit(gate));
                match &mut self.repr {
                    Repr::Pure(a) => apply_mat2(a, bit, &m),
                    Repr::Noisy { rho, .. } => apply_mat2_rho(rho, n, bit, &m),
                }
            }
            None => {
                let Gate::Cx { control, target } = *gate else {
                    unreachable!()
                };
                let (cb, tb) = (self.bit(control), self.bit(target));
                match &mut self.repr {
                    Repr::Pure(a) => apply_cx(a, cb, tb),
                    Repr::Noisy { rho, .. } => {
                        apply_cx(rho, cb + n, tb + n);
                        apply_cx(rho, cb, tb);
                    }
                }
            }
        }
        if let Repr::Noisy { noise, .. } = &self.repr {
            if noise.enabled {
                let noise = *noise;
                match *gate {
                    Gate::Cx { control, target } if noise.p2 > 0.0 => {
                        self.apply_depolarizing(&[control, target], noise.p2)?
                    }
                    Gate::Rx { qubit, .. } | Gate::Ry { qubit, .. } | Gate::Rz { qubit, .. }
                        if noise.p1 > 0.0 =>
                    {
                        self.apply_depolarizing(&[qubit], noise.p1)?
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    pub fn run(&mut self, gates: &[Gate]) -> Result<()> {
        gates.iter().try_for_each(|g| self.apply(g))
    }

    /// `ρ ← (1−p)ρ + p/(4^k−1) Σ_{P≠I} PρP†` over the Pauli strings on `qubits`.
    pub fn apply_depolarizing(&mut self, qubits: &[usize], p: f64) -> Result<()> {
        check_probability(p)?;
        let n = self.n_qubits;
        for (i, &q) in qubits.iter().enumerate() {
            if q >= n {
                return Err(Error::QubitIndex {
                    index: q,
                    n_qubits: n,
                });
            }
            if qubits[..i].contains(&q) {
                return Err(Error::SameQubit(q));
            }
        }
        let bits: Vec<usize> = qubits.iter().map(|&q| self.bit(q)).collect();
        let Repr::Noisy { rho, .. } = &mut self.repr else {
            return Err(Error::RequiresNoisy);
        };
        if p == 0.0 || qubits.is_empty() {
            return Ok(());
        }
        let k = qubits.len();
        let strings = 1usize << (2 * k);
        let mut acc = vec![ZERO; rho.len()];
        let mut scratch = vec![ZERO; rho.len()];
        for code in 1..strings {
            scratch.copy_from_slice(rho);
            for (j, &bit) in bits.iter().enumerate() {
                let pauli = match (code >> (2 * j)) & 3 {
                    0 => continue,
                    1 => &PAULI_X,
                    2 => &PAULI_Y,
                    _ => &PAULI_Z,
                };
                apply_mat2_rho(&mut scratch, n, bit, pauli);
            }
            for (a, s) in acc.iter_mut().zip(&scratch) {
                *a += s;
            }
        }
        let keep = 1.0 - p;
        let mix = p / (strings - 1) as f64;
        for (r, a) in rho.iter_mut().zip(&acc) {
            *r = *r * keep + *a * mix;
        }
        Ok(())
    }

    /// `⟨Z_qubit⟩`; noisy states fold in the readout flip as `(1−2ε)⟨Z⟩`.
    pub fn expect_z(&self, qubit: usize) -> Result<f64> {
        if qubit >= self.n_qubits {
            return Err(Error::QubitIndex {
                index: qubit,
                n_qubits: self.n_qubits,
            });
        }
        let mask = 1usize << self.bit(qubit);
        let dim = self.dim();
        let sign = |i: usize| if i & mask == 0 { 1.0 } else { -1.0 };
        let value = match &self.repr {
            Repr::Pure(a) => a.iter().enumerate().map(|(i, z)| sign(i) * z.norm_sqr()).sum(),
            Repr::Noisy { rho, noise } => {
                let raw: f64 = (0..dim).map(|i| sign(i) * rho[i * dim + i].re).sum();
                if noise.enabled {
                    (1.0 - 2.0 * noise.readout_flip) * raw
                } else {
                    raw
                }
            }
        };
        Ok(value.clamp(-1.0, 1.0))
    }

    /// `Σ|a|²` for pure states, `tr ρ` for noisy ones.
    pub fn trace(&self) -> f64 {
        let dim = self.dim();
        match &self.repr {
            Repr::Pure(a) => a.iter().map(|z| z.norm_sqr()).sum(),
            Repr::Noisy { rho, .. } => (0..dim).map(|i| rho[i * dim + i].re).sum(),
        }
    }
}

fn gate_qubit(gate: &Gate) -> usize {
    match *gate {
        Gate::Rx { qubit, .. } | Gate::Ry { qubit, .. } | Gate::Rz { qubit, .. } => qubit,
        Gate::Cx { target, .. } => target,
    }
}

fn apply_mat2(v: &mut [C64], bit: usize, m: &Mat2) {
    let mask = 1usize << bit;
    for i in 0..v.len() {
        if i & mask == 0 {
            let j = i | mask;
            let (a, b) = (v[i], v[j]);
            v[i] = m[0][0] * a + m[0][1] * b;
            v[j] = m[1][0] * a + m[1][1] * b;
        }
    }
}

/// `ρ ← UρU†`: `U` on the row index and `conj(U)` on the column index.
fn apply_mat2_rho(rho: &mut [C64], n: usize, bit: usize, m: &Mat2) {
    let conj = [
        [m[0][0].conj(), m[0][1].conj()],
        [m[1][0].conj(), m[1][1].conj()],
    ];
    apply_mat2(rho, bit + n, m);
    apply_mat2(rho, bit, &conj);
}

fn apply_cx(v: &mut [C64], control_bit: usize, target_bit: usize) {
    let (cm, tm) = (1usize << control_bit, 1usize << target_bit);
    for i in 0..v.len() {
        if i & cm != 0 && i & tm == 0 {
            v.swap(i, i | tm);
        }
    }
}

/// Dense unitary of a gate list, built from Kronecker-embedded gate matrices.
/// Test oracle; limited to four qubits.
pub fn brute_force_unitary(gates: &[Gate], n_qubits: usize) -> Result<DMatrix<C64>> {
    if n_qubits > ORACLE_MAX_QUBITS {
        return Err(Error::OracleScale(n_qubits));
    }
    if n_qubits == 0 {
        return Err(Error::QubitCount(0));
    }
    let dim = 1usize << n_qubits;
    let mut total = DMatrix::<C64>::identity(dim, dim);
    for gate in gates {
        gate.validate(n_qubits)?;
        let g = match gate.matrix() {
            Some(m) => {
                let q = gate_qubit(gate);
                let u = DMatrix::from_fn(2, 2, |r, c| m[r][c]);
                let left = DMatrix::<C64>::identity(1 << q, 1 << q);
                let right_dim = 1usize << (n_qubits - q - 1);
                let right = DMatrix::<C64>::identity(right_dim, right_dim);
                left.kronecker(&u).kronecker(&right)
            }
            None => {
                let Gate::Cx { control, target } = *gate else {
                    unreachable!()
                };
                let cm = 1usize << (n_qubits - 1 - control);
                let tm = 1usize << (n_qubits - 1 - target);
                let mut p = DMatrix::<C64>::zeros(dim, dim);
                for i in 0..dim {
                    let j = if i & cm != 0 { i ^ tm } else { i };
                    p[(j, i)] = ONE;
                }
                p
            }
        };
        total = g * total;
    }
    Ok(total)
}
