//! Physical circuit parameters and the coefficients derived from them:
//! transmon anharmonicity, cable-mode frequencies and qubit–mode couplings.
//!
//! Frequencies are ordinary frequencies in GHz, capacitances are in fF
//! (the cable in pF) and lifetimes in µs.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// e²/(2h) expressed in GHz·fF, from the exact SI values of e and h.
/// Dividing by a capacitance in fF gives the charging energy E_C/h in GHz.
pub const CHARGING_ENERGY_GHZ_FF: f64 = 19.370_229;

/// One of the two transmons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Qubit {
    Q1,
    Q2,
}

impl Qubit {
    pub fn index(self) -> usize {
        match self {
            Qubit::Q1 => 0,
            Qubit::Q2 => 1,
        }
    }

    pub fn other(self) -> Qubit {
        match self {
            Qubit::Q1 => Qubit::Q2,
            Qubit::Q2 => Qubit::Q1,
        }
    }
}

impl fmt::Display for Qubit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Qubit::Q1 => write!(f, "q1"),
            Qubit::Q2 => write!(f, "q2"),
        }
    }
}

/// Physical description of the qubit–cable–qubit circuit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitParams {
    /// Qubit self-capacitances (fF).
    pub c_q1: f64,
    pub c_q2: f64,
    /// Qubit–cable coupling capacitances (fF).
    pub c_c1: f64,
    pub c_c2: f64,
    /// Cable self-capacitance (pF).
    pub c_cable: f64,
    /// Free spectral range of the cable (GHz).
    pub fsr: f64,
    /// Qubit idle frequencies (GHz).
    pub f_q1: f64,
    pub f_q2: f64,
    /// Relaxation times (µs).
    pub t1_qubit: f64,
    pub t1_cable: f64,
}

const PARAM_FIELDS: [&str; 10] = [
    "c_q1", "c_q2", "c_c1", "c_c2", "c_cable", "fsr", "f_q1", "f_q2", "t1_qubit", "t1_cable",
];

impl Default for CircuitParams {
    /// 0.25 m cable with 440 MHz FSR, 90 fF transmons, 5 fF coupling
    /// capacitors, idling at the optimized iSWAP idle point.
    fn default() -> Self {
        CircuitParams {
            c_q1: 90.0,
            c_q2: 90.0,
            c_c1: 5.0,
            c_c2: 5.0,
            c_cable: 11.75,
            fsr: 0.440,
            f_q1: 4.684,
            f_q2: 4.738,
            t1_qubit: 100.0,
            t1_cable: 10.0,
        }
    }
}

impl CircuitParams {
    /// Parses a JSON document with exactly the field names of this struct.
    /// Unknown keys are rejected and all of them are listed in the error.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::InvalidParams(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::InvalidParams("expected a JSON object".into()))?;
        let unknown: Vec<&str> = obj
            .keys()
            .map(String::as_str)
            .filter(|k| !PARAM_FIELDS.contains(k))
            .collect();
        if !unknown.is_empty() {
            return Err(Error::InvalidParams(format!("unknown keys: {}", unknown.join(", "))));
        }
        let params: CircuitParams =
            serde_json::from_value(value).map_err(|e| Error::InvalidParams(e.to_string()))?;
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("c_q1", self.c_q1),
            ("c_q2", self.c_q2),
            ("c_cable", self.c_cable),
            ("fsr", self.fsr),
            ("f_q1", self.f_q1),
            ("f_q2", self.f_q2),
            ("t1_qubit", self.t1_qubit),
            ("t1_cable", self.t1_cable),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        // Zero coupling capacitance is allowed: it decouples the qubits.
        for (name, v) in [("c_c1", self.c_c1), ("c_c2", self.c_c2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn c_q(&self, q: Qubit) -> f64 {
        match q {
            Qubit::Q1 => self.c_q1,
            Qubit::Q2 => self.c_q2,
        }
    }

    pub fn c_c(&self, q: Qubit) -> f64 {
        match q {
            Qubit::Q1 => self.c_c1,
            Qubit::Q2 => self.c_c2,
        }
    }

    pub fn idle_frequency(&self, q: Qubit) -> f64 {
        match q {
            Qubit::Q1 => self.f_q1,
            Qubit::Q2 => self.f_q2,
        }
    }

    /// Anharmonicity of a qubit (GHz, negative). Independent of the qubit
    /// frequency: flux tuning changes E_J, not E_C.
    pub fn alpha(&self, q: Qubit) -> f64 {
        -CHARGING_ENERGY_GHZ_FF / self.c_q(q)
    }

    /// Coupling of qubit `q` at frequency `f_q` to cable mode `m`, without
    /// the mode-parity sign.
    pub fn coupling(&self, q: Qubit, f_q: f64, m: u32) -> f64 {
        coupling_magnitude(self.c_c(q), self.c_q(q), self.c_cable, f_q, m as f64 * self.fsr)
    }

    /// Same as [`CircuitParams::coupling`] but with the (−1)^m sign carried
    /// by qubit 2.
    pub fn signed_coupling(&self, q: Qubit, f_q: f64, m: u32) -> f64 {
        let g = self.coupling(q, f_q, m);
        match q {
            Qubit::Q1 => g,
            Qubit::Q2 => parity_sign(m) * g,
        }
    }

    pub fn with_coupling_capacitance(&self, c_c: f64) -> Self {
        CircuitParams { c_c1: c_c, c_c2: c_c, ..self.clone() }
    }
}

/// Transmon anharmonicity −e²/(2C·h) in GHz for a self-capacitance in fF.
pub fn anharmonicity(c_q: f64) -> Result<f64> {
    if !(c_q.is_finite() && c_q > 0.0) {
        return Err(Error::Domain(format!("capacitance must be positive, got {c_q} fF")));
    }
    Ok(-CHARGING_ENERGY_GHZ_FF / c_q)
}

/// Qubit–mode coupling g = ½·C_c/√(C_q·C_m)·√(f_q·f_m) in GHz.
///
/// `c_c` and `c_q` are in fF, `c_m` in pF, frequencies in GHz. A zero
/// coupling capacitance is accepted and yields zero coupling.
pub fn coupling_strength(c_c: f64, c_q: f64, c_m: f64, f_q: f64, f_m: f64) -> Result<f64> {
    if !(c_c.is_finite() && c_c >= 0.0) {
        return Err(Error::Domain(format!("coupling capacitance must be non-negative, got {c_c}")));
    }
    for (name, v) in [("c_q", c_q), ("c_m", c_m), ("f_q", f_q), ("f_m", f_m)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(coupling_magnitude(c_c, c_q, c_m, f_q, f_m))
}

fn coupling_magnitude(c_c: f64, c_q: f64, c_m_pf: f64, f_q: f64, f_m: f64) -> f64 {
    0.5 * c_c / (c_q * c_m_pf * 1000.0).sqrt() * (f_q * f_m).sqrt()
}

pub fn parity_sign(m: u32) -> f64 {
    if m % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// The cable modes retained in the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSet {
    pub indices: Vec<u32>,
    pub frequencies: Vec<f64>,
    pub parity_signs: Vec<f64>,
}

impl ModeSet {
    pub fn from_indices(fsr: f64, indices: impl IntoIterator<Item = u32>) -> Result<Self> {
        let set: BTreeSet<u32> = indices.into_iter().collect();
        if set.is_empty() {
            return Err(Error::Domain("mode index list is empty".into()));
        }
        if set.contains(&0) {
            return Err(Error::Domain("mode index 0 has zero frequency".into()));
        }
        let indices: Vec<u32> = set.into_iter().collect();
        Ok(ModeSet {
            frequencies: indices.iter().map(|&m| m as f64 * fsr).collect(),
            parity_signs: indices.iter().map(|&m| parity_sign(m)).collect(),
            indices,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// How cable modes are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum ModeSelection {
    /// Every mode whose frequency lies strictly inside the interval (GHz).
    Window { lo: f64, hi: f64 },
    /// Exactly these mode numbers.
    Indices(Vec<u32>),
}

pub fn select_modes(params: &CircuitParams, selection: &ModeSelection) -> Result<ModeSet> {
    match selection {
        ModeSelection::Indices(list) => ModeSet::from_indices(params.fsr, list.iter().copied()),
        &ModeSelection::Window { lo, hi } => {
            if !(lo < hi) {
                return Err(Error::Domain(format!("empty window [{lo}, {hi}]")));
            }
            let first = (lo / params.fsr).floor().max(1.0) as u32;
            let last = (hi / params.fsr).ceil() as u32;
            let inside: Vec<u32> = (first..=last)
                .filter(|&m| {
                    let f = m as f64 * params.fsr;
                    f > lo && f < hi
                })
                .collect();
            if inside.is_empty() {
                return Err(Error::NoModesInWindow { lo, hi });
            }
            ModeSet::from_indices(params.fsr, inside)
        }
    }
}

/// Modes bracketing both idle frequencies: every m from ⌊f_min/fsr⌋ to
/// ⌈f_max/fsr⌉. Two modes for qubits between adjacent modes, three when
/// the qubits straddle a mode.
pub fn bracketing_modes(params: &CircuitParams) -> Result<ModeSet> {
    let lo = params.f_q1.min(params.f_q2) / params.fsr;
    let hi = params.f_q1.max(params.f_q2) / params.fsr;
    let first = (lo.floor() as u32).max(1);
    let mut last = hi.ceil() as u32;
    if last <= first {
        last = first + 1;
    }
    ModeSet::from_indices(params.fsr, first..=last)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anharmonicity_of_paper_transmon() {
        let a = anharmonicity(90.0).unwrap();
        assert!((a + 0.2151).abs() < 1e-3, "{a}");
        assert!((a * 1000.0 + 216.0).abs() < 2.0);
    }

    #[test]
    fn anharmonicity_scales_inversely() {
        let a90 = anharmonicity(90.0).unwrap();
        assert_eq!(anharmonicity(45.0).unwrap(), 2.0 * a90);
        assert_eq!(anharmonicity(180.0).unwrap(), 0.5 * a90);
        for c in [1.0, 17.5, 90.0, 300.0] {
            let k = anharmonicity(c).unwrap() * c;
            assert!((k + CHARGING_ENERGY_GHZ_FF).abs() < 1e-12);
        }
        assert!(matches!(anharmonicity(0.0), Err(Error::Domain(_))));
        assert!(anharmonicity(-3.0).is_err());
    }

    #[test]
    fn coupling_at_paper_defaults() {
        let g = coupling_strength(5.0, 90.0, 11.75, 4.70, 4.84).unwrap();
        assert!((g - 0.0115).abs() < 5e-4, "{g}");
        assert_eq!(coupling_strength(0.0, 90.0, 11.75, 4.70, 4.84).unwrap(), 0.0);
        let g2 = coupling_strength(10.0, 90.0, 11.75, 4.70, 4.84).unwrap();
        assert_eq!(g2, 2.0 * g);
        assert!(coupling_strength(5.0, 0.0, 11.75, 4.7, 4.84).is_err());
        assert!(coupling_strength(5.0, 90.0, 11.75, -1.0, 4.84).is_err());
    }

    #[test]
    fn coupling_is_symmetric_between_identical_qubits() {
        let p = CircuitParams::default();
        for m in [9, 10, 11, 12] {
            assert_eq!(p.coupling(Qubit::Q1, 4.7, m), p.coupling(Qubit::Q2, 4.7, m));
            assert_eq!(
                p.signed_coupling(Qubit::Q2, 4.7, m),
                parity_sign(m) * p.signed_coupling(Qubit::Q1, 4.7, m)
            );
        }
    }

    #[test]
    fn window_selection() {
        let p = CircuitParams::default();
        let ms = select_modes(&p, &ModeSelection::Window { lo: 4.0, hi: 5.2 }).unwrap();
        assert_eq!(ms.indices, vec![10, 11]);
        assert!((ms.frequencies[0] - 4.40).abs() < 1e-12);
        assert!((ms.frequencies[1] - 4.84).abs() < 1e-12);
        let err = select_modes(&p, &ModeSelection::Window { lo: 4.41, hi: 4.83 }).unwrap_err();
        assert!(err.to_string().contains("no cable modes in window"));
    }

    #[test]
    fn explicit_selection_signs() {
        let p = CircuitParams::default();
        let ms = select_modes(&p, &ModeSelection::Indices(vec![12, 9, 11, 10])).unwrap();
        assert_eq!(ms.indices, vec![9, 10, 11, 12]);
        assert_eq!(ms.parity_signs, vec![-1.0, 1.0, -1.0, 1.0]);
        for (k, &m) in ms.indices.iter().enumerate() {
            assert_eq!(ms.frequencies[k], m as f64 * p.fsr);
        }
        assert!(select_modes(&p, &ModeSelection::Indices(vec![])).is_err());
    }

    #[test]
    fn bracketing() {
        let p = CircuitParams::default();
        assert_eq!(bracketing_modes(&p).unwrap().indices, vec![10, 11]);
        let cross = CircuitParams { f_q1: 4.7, f_q2: 5.0, ..p.clone() };
        assert_eq!(bracketing_modes(&cross).unwrap().indices, vec![10, 11, 12]);
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let p = CircuitParams::default();
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(CircuitParams::from_json_str(&text).unwrap(), p);

        let bad = text.trim_end_matches('}').to_string() + ",\"foo\":1,\"bar\":2}";
        let err = CircuitParams::from_json_str(&bad).unwrap_err().to_string();
        assert!(err.contains("foo") && err.contains("bar"), "{err}");

        let neg = text.replace("\"fsr\":0.44", "\"fsr\":-0.44");
        assert!(CircuitParams::from_json_str(&neg).is_err());
    }
}
