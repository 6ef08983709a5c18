//! Closed-form dispersive analytics: the cable-mediated exchange coupling,
//! the fourth-order ZZ shift, and its near-resonance limit.
//!
//! Mode sums run over the supplied [`ModeSet`] only.

use serde::{Deserialize, Serialize};

use crate::circuit::{CircuitParams, ModeSet, Qubit};
use crate::error::{Error, Result};

/// Denominators closer to zero than this (GHz) are treated as resonances.
pub const SINGULARITY_GUARD: f64 = 1e-6;

fn guard(term: &str, value: f64) -> Result<f64> {
    if value.abs() < SINGULARITY_GUARD {
        Err(Error::Singularity { term: term.to_string(), value })
    } else {
        Ok(value)
    }
}

/// Qubit–mode and qubit–qubit detunings for one operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detunings {
    /// `delta_im[i][k] = f_i − m_k·fsr`.
    pub delta_im: [Vec<f64>; 2],
    /// `sigma_im[i][k] = f_i + m_k·fsr`.
    pub sigma_im: [Vec<f64>; 2],
    pub delta_12: f64,
    pub sigma_12: f64,
}

impl Detunings {
    pub fn new(modes: &ModeSet, f1: f64, f2: f64) -> Self {
        let d = |f: f64| modes.frequencies.iter().map(|fm| f - fm).collect();
        let s = |f: f64| modes.frequencies.iter().map(|fm| f + fm).collect();
        Detunings {
            delta_im: [d(f1), d(f2)],
            sigma_im: [s(f1), s(f2)],
            delta_12: f1 - f2,
            sigma_12: f1 + f2,
        }
    }

    /// Single-frequency forms `(Δ_m, Σ_m)` used by the resonant limit.
    pub fn resonant(modes: &ModeSet, f: f64) -> Vec<(f64, f64)> {
        modes.frequencies.iter().map(|fm| (f - fm, f + fm)).collect()
    }
}

/// Effective XX coupling `½ Σ_m (−1)^m g1 g2 (1/Δ1 + 1/Δ2 − 1/Σ1 − 1/Σ2)`.
pub fn g_eff(params: &CircuitParams, modes: &ModeSet, f1: f64, f2: f64) -> Result<f64> {
    let det = Detunings::new(modes, f1, f2);
    let mut sum = 0.0;
    for (k, &m) in modes.indices.iter().enumerate() {
        let g1 = params.coupling(Qubit::Q1, f1, m);
        let g2 = params.coupling(Qubit::Q2, f2, m);
        let d1 = guard("delta_1m", det.delta_im[0][k])?;
        let d2 = guard("delta_2m", det.delta_im[1][k])?;
        let (s1, s2) = (det.sigma_im[0][k], det.sigma_im[1][k]);
        sum += modes.parity_signs[k] * g1 * g2 * (1.0 / d1 + 1.0 / d2 - 1.0 / s1 - 1.0 / s2);
    }
    Ok(0.5 * sum)
}

/// Per-mode contributions to [`g_eff`].
pub fn g_eff_terms(params: &CircuitParams, modes: &ModeSet, f1: f64, f2: f64) -> Result<Vec<f64>> {
    modes
        .indices
        .iter()
        .map(|&m| {
            let single = ModeSet::from_indices(params.fsr, [m])?;
            g_eff(params, &single, f1, f2)
        })
        .collect()
}

/// Fourth-order ZZ shift for arbitrary detuning and anharmonicities.
pub fn zz_fourth_order(
    params: &CircuitParams,
    modes: &ModeSet,
    f1: f64,
    f2: f64,
    alpha1: f64,
    alpha2: f64,
) -> Result<f64> {
    let det = Detunings::new(modes, f1, f2);
    let d12 = guard("delta_12", det.delta_12)?;
    let d12m = guard("delta_12 - alpha_2", d12 - alpha2)?;
    let d12p = guard("delta_12 + alpha_1", d12 + alpha1)?;
    let mut sum = 0.0;
    for (k, &m) in modes.indices.iter().enumerate() {
        let g1 = params.coupling(Qubit::Q1, f1, m);
        let g2 = params.coupling(Qubit::Q2, f2, m);
        let d1 = guard("delta_1m", det.delta_im[0][k])?;
        let d2 = guard("delta_2m", det.delta_im[1][k])?;
        let (s1, s2) = (det.sigma_im[0][k], det.sigma_im[1][k]);
        let s12m = guard("sigma_12 - 2m fsr", det.sigma_12 - 2.0 * modes.frequencies[k])?;

        let exchange = ((1.0 / d2 - 1.0 / s1).powi(2) - (1.0 / d1 - 1.0 / s2).powi(2)) / d12;
        let anharmonic = 2.0 / d12m * (1.0 / d1 - 1.0 / (s2 + alpha2)).powi(2)
            - 2.0 / d12p * (1.0 / d2 - 1.0 / (s1 + alpha1)).powi(2);
        let two_photon = (2.0 * (1.0 / d1 + 1.0 / d2).powi(2) - 1.0 / (d1 * d2)) / s12m;
        sum += g1 * g1 * g2 * g2 * (exchange + anharmonic + two_photon);
    }
    Ok(sum)
}

/// The four bracketed terms of the near-resonance ZZ formula for one mode,
/// without the `g⁴` prefactor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonantTerms {
    pub qubit_second_level: f64,
    pub mode_second_level: f64,
    pub anharmonic_counter_rotating: f64,
    pub counter_rotating: f64,
}

impl ResonantTerms {
    pub fn sum(&self) -> f64 {
        self.qubit_second_level + self.mode_second_level + self.anharmonic_counter_rotating + self.counter_rotating
    }
}

pub fn resonant_terms(delta_m: f64, sigma_m: f64, alpha: f64) -> Result<ResonantTerms> {
    let d = guard("delta_m", delta_m)?;
    let a = guard("alpha", alpha)?;
    let sa = guard("sigma_m + alpha", sigma_m + a)?;
    Ok(ResonantTerms {
        qubit_second_level: -4.0 / (d * d * a),
        mode_second_level: 11.0 / (2.0 * d * d * d),
        anharmonic_counter_rotating: 8.0 / (d * a * sa),
        counter_rotating: -2.0 / (d * d * sigma_m),
    })
}

/// Near-resonance ZZ shift with both qubits at `f` and equal anharmonicity.
pub fn zz_resonant_approx(params: &CircuitParams, modes: &ModeSet, f: f64, alpha: f64) -> Result<f64> {
    let mut sum = 0.0;
    for (k, (d, s)) in Detunings::resonant(modes, f).into_iter().enumerate() {
        let m = modes.indices[k];
        let g1 = params.coupling(Qubit::Q1, f, m);
        let g2 = params.coupling(Qubit::Q2, f, m);
        sum += g1 * g1 * g2 * g2 * resonant_terms(d, s, alpha)?.sum();
    }
    Ok(sum)
}

/// Bisection root of [`zz_resonant_approx`] in `bracket`.
pub fn zz_resonant_root(params: &CircuitParams, modes: &ModeSet, alpha: f64, bracket: (f64, f64)) -> Result<f64> {
    let f = |x: f64| zz_resonant_approx(params, modes, x, alpha);
    let (mut lo, mut hi) = bracket;
    let mut flo = f(lo)?;
    if flo.signum() == f(hi)?.signum() {
        return Err(Error::NoSignChange { lo, hi });
    }
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn modes() -> ModeSet {
        ModeSet::from_indices(0.44, [10, 11]).unwrap()
    }

    #[test]
    fn detuning_identities() {
        let d = Detunings::new(&modes(), 4.68, 4.73);
        for i in 0..2 {
            for k in 0..2 {
                let f = [4.68, 4.73][i];
                assert!((d.delta_im[i][k] + d.sigma_im[i][k] - 2.0 * f).abs() < 1e-12);
            }
        }
        assert!((d.delta_12 + 0.05).abs() < 1e-12);
    }

    #[test]
    fn zero_coupling_gives_zero() {
        let p = CircuitParams::default().with_coupling_capacitance(0.0);
        let a = p.alpha(Qubit::Q1);
        assert_eq!(g_eff(&p, &modes(), 4.7, 4.71).unwrap(), 0.0);
        assert_eq!(zz_fourth_order(&p, &modes(), 4.65, 4.75, a, a).unwrap(), 0.0);
        assert_eq!(zz_resonant_approx(&p, &modes(), 4.7, a).unwrap(), 0.0);
    }

    #[test]
    fn mode_paths_add_constructively() {
        let t = g_eff_terms(&CircuitParams::default(), &modes(), 4.708, 4.708).unwrap();
        assert!(t[0] * t[1] > 0.0, "{t:?}");
    }

    #[test]
    fn resonance_is_guarded() {
        let p = CircuitParams::default();
        let err = g_eff(&p, &modes(), 4.40, 4.7).unwrap_err();
        assert_eq!(err.kind(), "singularity");
        let a = p.alpha(Qubit::Q1);
        assert!(zz_fourth_order(&p, &modes(), 4.7, 4.7, a, a).is_err());
    }

    #[test]
    fn fourth_order_is_exchange_symmetric() {
        let p = CircuitParams::default();
        let a = p.alpha(Qubit::Q1);
        let x = zz_fourth_order(&p, &modes(), 4.65, 4.752, a, a).unwrap();
        let y = zz_fourth_order(&p, &modes(), 4.752, 4.65, a, a).unwrap();
        assert!((x - y).abs() <= 1e-9 * x.abs(), "{x} {y}");
    }

    #[test]
    fn quartic_and_quadratic_scaling() {
        let p = CircuitParams::default();
        let h = p.with_coupling_capacitance(2.5);
        let a = p.alpha(Qubit::Q1);
        let r4 = zz_fourth_order(&p, &modes(), 4.65, 4.75, a, a).unwrap()
            / zz_fourth_order(&h, &modes(), 4.65, 4.75, a, a).unwrap();
        let r5 = zz_resonant_approx(&p, &modes(), 4.7, a).unwrap() / zz_resonant_approx(&h, &modes(), 4.7, a).unwrap();
        let r2 = g_eff(&p, &modes(), 4.7, 4.71).unwrap() / g_eff(&h, &modes(), 4.7, 4.71).unwrap();
        assert!((r4 - 16.0).abs() < 1e-9 && (r5 - 16.0).abs() < 1e-9 && (r2 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn resonant_form_changes_sign_once_in_window() {
        let p = CircuitParams::default();
        let a = p.alpha(Qubit::Q1);
        let mut changes = 0;
        let mut prev = zz_resonant_approx(&p, &modes(), 4.42, a).unwrap();
        for k in 1..=400 {
            let f = 4.42 + k as f64 * 0.4 / 400.0;
            let z = zz_resonant_approx(&p, &modes(), f, a).unwrap();
            if z.signum() != prev.signum() {
                changes += 1;
            }
            prev = z;
        }
        assert_eq!(changes, 1);
    }
}
