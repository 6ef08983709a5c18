//! Truncated Fock basis and Hamiltonian assembly.
//!
//! Each transmon is a Duffing oscillator
//! `f·n + (α/2)·n(n−1)`, each cable mode a harmonic oscillator at `m·fsr`,
//! and every qubit couples to every retained mode with strength `g_{i,m}`;
//! qubit 2 carries the `(−1)^m` parity sign.

use std::fmt;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuit::{CircuitParams, ModeSet, Qubit};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_DIM: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingModel {
    /// Excitation-conserving exchange `g(a†c + c†a)`.
    Rwa,
    /// Capacitive coupling `g(a† + a)(c† + c)`.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationSpec {
    pub levels_qubit: usize,
    pub levels_mode: usize,
    pub coupling_model: CouplingModel,
    pub max_dim: usize,
}

impl Default for TruncationSpec {
    fn default() -> Self {
        TruncationSpec {
            levels_qubit: 4,
            levels_mode: 3,
            coupling_model: CouplingModel::Full,
            max_dim: DEFAULT_MAX_DIM,
        }
    }
}

impl TruncationSpec {
    pub fn with_levels(levels_qubit: usize, levels_mode: usize) -> Self {
        TruncationSpec { levels_qubit, levels_mode, ..Default::default() }
    }

    pub fn rwa(self) -> Self {
        TruncationSpec { coupling_model: CouplingModel::Rwa, ..self }
    }

    pub fn dimension(&self, n_modes: usize) -> Option<usize> {
        let mut dim = self.levels_qubit.checked_mul(self.levels_qubit)?;
        for _ in 0..n_modes {
            dim = dim.checked_mul(self.levels_mode)?;
        }
        Some(dim)
    }
}

/// Occupation numbers of the uncoupled subsystems: `|q1 q2, m_a m_b ...⟩`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BareLabel {
    pub qubits: [u8; 2],
    pub modes: Vec<u8>,
}

impl BareLabel {
    pub fn new(q1: u8, q2: u8, modes: Vec<u8>) -> Self {
        BareLabel { qubits: [q1, q2], modes }
    }

    /// Qubit occupations with every cable mode empty.
    pub fn qubits_only(q1: u8, q2: u8, n_modes: usize) -> Self {
        BareLabel { qubits: [q1, q2], modes: vec![0; n_modes] }
    }

    pub fn excitations(&self) -> u32 {
        self.qubits.iter().chain(&self.modes).map(|&n| n as u32).sum()
    }

    /// Parses the compact form `"11,00"` (qubits, then modes). A bare
    /// qubit pair such as `"10"` is padded with empty modes.
    pub fn parse(text: &str, n_modes: usize) -> Result<Self> {
        let text = text.trim().trim_start_matches('|').trim_end_matches(['>', '⟩']);
        let (q, m) = match text.split_once(',') {
            Some((q, m)) => (q, Some(m)),
            None => (text, None),
        };
        let digits = |s: &str| -> Result<Vec<u8>> {
            s.chars()
                .map(|c| {
                    c.to_digit(10)
                        .map(|d| d as u8)
                        .ok_or_else(|| Error::Domain(format!("bad label {text:?}")))
                })
                .collect()
        };
        let qd = digits(q)?;
        if qd.len() != 2 {
            return Err(Error::Domain(format!("label {text:?} needs two qubit digits")));
        }
        let modes = match m {
            Some(m) => digits(m)?,
            None => vec![0; n_modes],
        };
        if modes.len() != n_modes {
            return Err(Error::Domain(format!("label {text:?} needs {n_modes} mode digits")));
        }
        Ok(BareLabel::new(qd[0], qd[1], modes))
    }
}

impl fmt::Display for BareLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{}{},", self.qubits[0], self.qubits[1])?;
        for m in &self.modes {
            write!(f, "{m}")?;
        }
        write!(f, ">")
    }
}

/// Row-major product basis over (q1, q2, modes ascending).
#[derive(Debug, Clone, PartialEq)]
pub struct FockBasis {
    levels_qubit: usize,
    levels_mode: usize,
    n_modes: usize,
    labels: Vec<BareLabel>,
}

pub fn build_basis(modes: &ModeSet, trunc: &TruncationSpec) -> Result<FockBasis> {
    if modes.is_empty() {
        return Err(Error::Domain("mode set is empty".into()));
    }
    if trunc.levels_qubit < 2 || trunc.levels_mode < 2 {
        return Err(Error::Domain("truncation needs at least two levels per subsystem".into()));
    }
    let n_modes = modes.len();
    let dim = trunc.dimension(n_modes).unwrap_or(usize::MAX);
    if dim > trunc.max_dim {
        return Err(Error::HilbertSpaceTooLarge { dim, cap: trunc.max_dim });
    }
    let mut labels = Vec::with_capacity(dim);
    for i in 0..dim {
        labels.push(decode(i, trunc.levels_qubit, trunc.levels_mode, n_modes));
    }
    Ok(FockBasis { levels_qubit: trunc.levels_qubit, levels_mode: trunc.levels_mode, n_modes, labels })
}

fn decode(mut i: usize, lq: usize, lm: usize, n_modes: usize) -> BareLabel {
    let mut modes = vec![0u8; n_modes];
    for k in (0..n_modes).rev() {
        modes[k] = (i % lm) as u8;
        i /= lm;
    }
    let q2 = (i % lq) as u8;
    let q1 = (i / lq) as u8;
    BareLabel { qubits: [q1, q2], modes }
}

impl FockBasis {
    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn levels_qubit(&self) -> usize {
        self.levels_qubit
    }

    pub fn levels_mode(&self) -> usize {
        self.levels_mode
    }

    pub fn labels(&self) -> &[BareLabel] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> &BareLabel {
        &self.labels[index]
    }

    /// Dense index of a bare label.
    pub fn bare_index(&self, label: &BareLabel) -> Result<usize> {
        if label.modes.len() != self.n_modes
            || label.qubits.iter().any(|&n| n as usize >= self.levels_qubit)
            || label.modes.iter().any(|&n| n as usize >= self.levels_mode)
        {
            return Err(Error::LabelOutOfTruncation(label.to_string()));
        }
        let mut idx = label.qubits[0] as usize * self.levels_qubit + label.qubits[1] as usize;
        for &n in &label.modes {
            idx = idx * self.levels_mode + n as usize;
        }
        Ok(idx)
    }

    /// Index of `|q1 q2, 0…0⟩`.
    pub fn qubit_state(&self, q1: u8, q2: u8) -> Result<usize> {
        self.bare_index(&BareLabel::qubits_only(q1, q2, self.n_modes))
    }

    /// Index strides of (q1, q2, mode_0, mode_1, …).
    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![0; 2 + self.n_modes];
        let mut s = 1;
        for k in (0..self.n_modes).rev() {
            strides[2 + k] = s;
            s *= self.levels_mode;
        }
        strides[1] = s;
        strides[0] = s * self.levels_qubit;
        strides
    }

    /// Invariant subspaces of the coupled Hamiltonian: total excitation
    /// number for RWA, excitation parity for full coupling.
    pub fn sectors(&self, model: CouplingModel) -> Vec<Vec<usize>> {
        let key = |l: &BareLabel| match model {
            CouplingModel::Rwa => l.excitations(),
            CouplingModel::Full => l.excitations() % 2,
        };
        let mut keys: Vec<u32> = self.labels.iter().map(key).collect();
        keys.sort_unstable();
        keys.dedup();
        keys.iter()
            .map(|&k| (0..self.dim()).filter(|&i| key(&self.labels[i]) == k).collect())
            .collect()
    }
}

/// Dense Hermitian Hamiltonian in GHz (ordinary frequency).
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianMatrix {
    pub entries: DMatrix<Complex64>,
}

impl HamiltonianMatrix {
    pub fn from_real(m: &DMatrix<f64>) -> Self {
        HamiltonianMatrix { entries: m.map(|x| Complex64::new(x, 0.0)) }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// max |H − H†| relative to max |H|.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim();
        let mut scale: f64 = 0.0;
        let mut dev: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let a = self.entries[(i, j)];
                scale = scale.max(a.norm());
                dev = dev.max((a - self.entries[(j, i)].conj()).norm());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            dev / scale
        }
    }

    /// Real part, if every imaginary part vanishes exactly.
    pub fn as_real(&self) -> Option<DMatrix<f64>> {
        if self.entries.iter().all(|z| z.im == 0.0) {
            Some(self.entries.map(|z| z.re))
        } else {
            None
        }
    }

    /// Writes the nonzero entries as `row,col,real,imag` CSV lines.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "row,col,real,imag")?;
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                let z = self.entries[(i, j)];
                if z.re != 0.0 || z.im != 0.0 {
                    writeln!(out, "{i},{j},{:.16e},{:.16e}", z.re, z.im)?;
                }
            }
        }
        Ok(())
    }
}

/// How qubit–mode couplings respond to flux tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingUpdate {
    /// `g ∝ √f_q` evaluated at the instantaneous qubit frequency.
    #[default]
    Instantaneous,
    /// `g` evaluated once at the idle frequencies in `CircuitParams`.
    FrozenAtIdle,
}

pub(crate) fn assemble_real(
    params: &CircuitParams,
    modes: &ModeSet,
    basis: &FockBasis,
    model: CouplingModel,
    update: CouplingUpdate,
    f1: f64,
    f2: f64,
) -> DMatrix<f64> {
    let dim = basis.dim();
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    let freqs = [f1, f2];
    let alphas = [params.alpha(Qubit::Q1), params.alpha(Qubit::Q2)];

    for (i, l) in basis.labels.iter().enumerate() {
        let mut e = 0.0;
        for q in 0..2 {
            let n = l.qubits[q] as f64;
            e += freqs[q] * n + 0.5 * alphas[q] * n * (n - 1.0);
        }
        for (k, &n) in l.modes.iter().enumerate() {
            e += modes.frequencies[k] * n as f64;
        }
        h[(i, i)] = e;
    }

    let strides = basis.strides();
    let lq = basis.levels_qubit as u8;
    let lm = basis.levels_mode as u8;
    for (qi, qubit) in [Qubit::Q1, Qubit::Q2].into_iter().enumerate() {
        let f_ref = match update {
            CouplingUpdate::Instantaneous => freqs[qi],
            CouplingUpdate::FrozenAtIdle => params.idle_frequency(qubit),
        };
        for (k, &m) in modes.indices.iter().enumerate() {
            let g = params.signed_coupling(qubit, f_ref, m);
            if g == 0.0 {
                continue;
            }
            let (sq, sm) = (strides[qi], strides[2 + k]);
            for (i, l) in basis.labels.iter().enumerate() {
                let nq = l.qubits[qi];
                let nm = l.modes[k];
                // raise the qubit: a† c (RWA) and a† c† (counter-rotating)
                if nq + 1 < lq {
                    let aq = ((nq + 1) as f64).sqrt();
                    if nm > 0 {
                        let j = i + sq - sm;
                        h[(j, i)] += g * aq * (nm as f64).sqrt();
                    }
                    if model == CouplingModel::Full && nm + 1 < lm {
                        let j = i + sq + sm;
                        h[(j, i)] += g * aq * ((nm + 1) as f64).sqrt();
                    }
                }
                // lower the qubit: a c† (RWA) and a c (counter-rotating)
                if nq > 0 {
                    let aq = (nq as f64).sqrt();
                    if nm + 1 < lm {
                        let j = i - sq + sm;
                        h[(j, i)] += g * aq * ((nm + 1) as f64).sqrt();
                    }
                    if model == CouplingModel::Full && nm > 0 {
                        let j = i - sq - sm;
                        h[(j, i)] += g * aq * (nm as f64).sqrt();
                    }
                }
            }
        }
    }
    h
}

/// Builds the system Hamiltonian with both qubits at the given frequencies.
pub fn build_hamiltonian(
    params: &CircuitParams,
    modes: &ModeSet,
    trunc: &TruncationSpec,
    f1: f64,
    f2: f64,
) -> Result<HamiltonianMatrix> {
    check_qubit_frequency(f1)?;
    check_qubit_frequency(f2)?;
    let basis = build_basis(modes, trunc)?;
    let h = assemble_real(params, modes, &basis, trunc.coupling_model, CouplingUpdate::Instantaneous, f1, f2);
    let h = HamiltonianMatrix::from_real(&h);
    debug_assert!(h.hermiticity_error() < 1e-12);
    Ok(h)
}

pub(crate) fn check_qubit_frequency(f: f64) -> Result<()> {
    if f.is_finite() && f > 0.0 && f <= 20.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("qubit frequency {f} GHz outside (0, 20]")))
    }
}
