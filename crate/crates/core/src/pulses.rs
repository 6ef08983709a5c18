//! Flux-pulse waveforms: ideal square steps and Slepian-shaped adiabatic
//! trajectories defined through a control angle θ(t).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::circuit::Qubit;
use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_DT: f64 = 0.05;
pub const DEFAULT_LAMBDAS: [f64; 3] = [1.273, 0.550, -0.273];
pub const DEFAULT_THETA_F: f64 = 0.449 * PI;
pub const DEFAULT_TAU: f64 = 450.0;

/// Ideal step to `f_int` on the open interval `(t_start, t_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquarePulse {
    pub f_idle: f64,
    pub f_int: f64,
    pub t_start: f64,
    pub t_end: f64,
}

impl SquarePulse {
    pub fn new(f_idle: f64, f_int: f64, t_start: f64, t_end: f64) -> Result<Self> {
        if !(t_start >= 0.0 && t_end > t_start) {
            return Err(Error::InvalidSchedule(format!("square pulse window [{t_start}, {t_end}]")));
        }
        Ok(SquarePulse { f_idle, f_int, t_start, t_end })
    }

    pub fn frequency(&self, t: f64) -> f64 {
        if t > self.t_start && t < self.t_end {
            self.f_int
        } else {
            self.f_idle
        }
    }

    /// ∫ (f(t) − f_idle) dt over the pulse, in GHz·ns.
    pub fn detuning_area(&self) -> f64 {
        (self.f_int - self.f_idle) * (self.t_end - self.t_start)
    }
}

/// Shape parameters shared by Slepian pulses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlepianShape {
    pub lambdas: Vec<f64>,
    pub theta_f: f64,
    pub tau: f64,
}

impl Default for SlepianShape {
    fn default() -> Self {
        SlepianShape { lambdas: DEFAULT_LAMBDAS.to_vec(), theta_f: DEFAULT_THETA_F, tau: DEFAULT_TAU }
    }
}

impl SlepianShape {
    /// Σ of odd-index coefficients; θ(τ/2) = θ_f exactly when this is 1.
    pub fn odd_sum(&self) -> f64 {
        self.lambdas.iter().step_by(2).sum()
    }
}

/// `θ_i = atan2(2j, f_idle − f_int)`, in (0, π).
pub fn initial_angle(j: f64, f_idle: f64, f_int: f64) -> Result<f64> {
    if f_idle == f_int {
        return Err(Error::SingularPulse("initial angle undefined at zero detuning".into()));
    }
    if !(j > 0.0) {
        return Err(Error::SingularPulse(format!("coupling {j} must be positive")));
    }
    let mut th = (2.0 * j).atan2(f_idle - f_int);
    if th < 0.0 {
        th += PI;
    }
    Ok(th)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlepianPulse {
    pub f_idle: f64,
    pub f_int: f64,
    pub j_coupling: f64,
    pub shape: SlepianShape,
    pub theta_i: f64,
    pub t_start: f64,
}

impl SlepianPulse {
    pub fn new(f_idle: f64, f_int: f64, j_coupling: f64, shape: SlepianShape, t_start: f64) -> Result<Self> {
        let theta_i = initial_angle(j_coupling, f_idle, f_int)?;
        Self::with_angle(f_idle, f_int, j_coupling, shape, theta_i, t_start)
    }

    /// One qubit of a pair moved together: both qubits follow the pair's
    /// control angle, each carrying its share `d_q/D` of the pair detuning
    /// excursion, where `d_q = f_idle − f_int` and `D = d_1 − d_2`.
    pub fn co_moving(
        f_idle: f64,
        f_int: f64,
        pair_detuning_swing: f64,
        j_pair: f64,
        shape: SlepianShape,
        t_start: f64,
    ) -> Result<Self> {
        let theta_i = initial_angle(j_pair, pair_detuning_swing, 0.0)?;
        let share = (f_idle - f_int) / pair_detuning_swing;
        Self::with_angle(f_idle, f_int, j_pair * share, shape, theta_i, t_start)
    }

    fn with_angle(f_idle: f64, f_int: f64, j: f64, shape: SlepianShape, theta_i: f64, t_start: f64) -> Result<Self> {
        if !(shape.tau > 0.0) || shape.lambdas.is_empty() {
            return Err(Error::InvalidSchedule("Slepian pulse needs tau > 0 and at least one coefficient".into()));
        }
        if !(t_start >= 0.0) {
            return Err(Error::InvalidSchedule(format!("negative start time {t_start}")));
        }
        let p = SlepianPulse { f_idle, f_int, j_coupling: j, shape, theta_i, t_start };
        // The pulse must stay away from θ = 0, π for its whole duration.
        for k in 0..=1000 {
            p.detuning(p.shape.tau * k as f64 / 1000.0)?;
        }
        Ok(p)
    }

    pub fn t_end(&self) -> f64 {
        self.t_start + self.shape.tau
    }

    /// θ(t) for local time `t ∈ [0, τ]`.
    pub fn control_angle(&self, t: f64) -> Result<f64> {
        let tau = self.shape.tau;
        if !(0.0..=tau).contains(&t) {
            return Err(Error::Domain(format!("time {t} outside [0, {tau}]")));
        }
        let series: f64 = self
            .shape
            .lambdas
            .iter()
            .enumerate()
            .map(|(k, l)| l * (1.0 - (2.0 * (k + 1) as f64 * PI * t / tau).cos()))
            .sum();
        Ok(self.theta_i + 0.5 * (self.shape.theta_f - self.theta_i) * series)
    }

    /// Δω(t) = f_int − f_idle + 2j/tan θ(t), local time.
    pub fn detuning(&self, t: f64) -> Result<f64> {
        let th = self.control_angle(t)?;
        let s = th.sin();
        if th <= 0.0 || th >= PI || s.abs() < 1e-12 {
            return Err(Error::SingularPulse(format!("control angle {th} at t={t}")));
        }
        Ok(self.f_int - self.f_idle + 2.0 * self.j_coupling * th.cos() / s)
    }

    /// Absolute-time frequency; idle outside the pulse window.
    pub fn frequency(&self, t: f64) -> f64 {
        if t <= self.t_start || t >= self.t_end() {
            return self.f_idle;
        }
        let local = t - self.t_start;
        self.f_idle + self.detuning(local).expect("validated at construction")
    }
}

/// `slepian_detuning(t, pulse)`: frequency offset from idle at local time `t`.
pub fn slepian_detuning(t: f64, pulse: &SlepianPulse) -> Result<f64> {
    pulse.detuning(t)
}

pub fn control_angle(t: f64, pulse: &SlepianPulse) -> Result<f64> {
    pulse.control_angle(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Waveform {
    Idle { f: f64 },
    Square(SquarePulse),
    Slepian(SlepianPulse),
}

impl Waveform {
    pub fn frequency(&self, t: f64) -> f64 {
        match self {
            Waveform::Idle { f } => *f,
            Waveform::Square(p) => p.frequency(t),
            Waveform::Slepian(p) => p.frequency(t),
        }
    }

    pub fn idle_frequency(&self) -> f64 {
        match self {
            Waveform::Idle { f } => *f,
            Waveform::Square(p) => p.f_idle,
            Waveform::Slepian(p) => p.f_idle,
        }
    }

    pub fn is_piecewise_constant(&self) -> bool {
        !matches!(self, Waveform::Slepian(_))
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self, Waveform::Square(_))
    }

    pub fn window(&self) -> Option<(f64, f64)> {
        match self {
            Waveform::Idle { .. } => None,
            Waveform::Square(p) => Some((p.t_start, p.t_end)),
            Waveform::Slepian(p) => Some((p.t_start, p.t_end())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub waveform_q1: Waveform,
    pub waveform_q2: Waveform,
    pub total_time: f64,
    pub sample_dt: f64,
}

impl PulseSchedule {
    pub fn new(waveform_q1: Waveform, waveform_q2: Waveform, total_time: f64, sample_dt: f64) -> Result<Self> {
        if !(total_time >= 0.0) || !(sample_dt > 0.0) {
            return Err(Error::InvalidSchedule(format!("total_time {total_time}, sample_dt {sample_dt}")));
        }
        for w in [&waveform_q1, &waveform_q2] {
            if let Some((_, end)) = w.window() {
                if end > total_time + 1e-12 {
                    return Err(Error::InvalidSchedule(format!("pulse ends at {end} after total time {total_time}")));
                }
            }
        }
        if let (Waveform::Slepian(a), Waveform::Slepian(b)) = (&waveform_q1, &waveform_q2) {
            if a.shape.tau != b.shape.tau || a.t_start != b.t_start {
                return Err(Error::InvalidSchedule("Slepian pulses disagree on tau or start time".into()));
            }
        }
        Ok(PulseSchedule { waveform_q1, waveform_q2, total_time, sample_dt })
    }

    /// Both qubits held at fixed frequencies for `total_time`.
    pub fn idle(f1: f64, f2: f64, total_time: f64) -> Result<Self> {
        Self::new(Waveform::Idle { f: f1 }, Waveform::Idle { f: f2 }, total_time, DEFAULT_SAMPLE_DT)
    }

    pub fn frequencies(&self, t: f64) -> (f64, f64) {
        (self.waveform_q1.frequency(t), self.waveform_q2.frequency(t))
    }

    pub fn idle_frequencies(&self) -> (f64, f64) {
        (self.waveform_q1.idle_frequency(), self.waveform_q2.idle_frequency())
    }

    pub fn is_piecewise_constant(&self) -> bool {
        self.waveform_q1.is_piecewise_constant() && self.waveform_q2.is_piecewise_constant()
    }

    /// Times where either waveform may jump, including 0 and `total_time`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut ts = vec![0.0, self.total_time];
        for w in [&self.waveform_q1, &self.waveform_q2] {
            if let Some((a, b)) = w.window() {
                ts.push(a);
                ts.push(b);
            }
        }
        ts.retain(|t| (0.0..=self.total_time).contains(t));
        ts.sort_by(f64::total_cmp);
        ts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        ts
    }

    /// Samples `(t, f1, f2)` on the `sample_dt` grid (endpoint included).
    pub fn sample(&self) -> Vec<(f64, f64, f64)> {
        let n = (self.total_time / self.sample_dt).round() as usize;
        (0..=n)
            .map(|k| {
                let t = (k as f64 * self.sample_dt).min(self.total_time);
                let (a, b) = self.frequencies(t);
                (t, a, b)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScheduleKind {
    SquareSquare,
    SlepianSlepian,
    Hybrid,
}

impl ScheduleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScheduleKind::SquareSquare => "SQUARE_SQUARE",
            ScheduleKind::SlepianSlepian => "SLEPIAN_SLEPIAN",
            ScheduleKind::Hybrid => "HYBRID",
        }
    }
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "SQUARE_SQUARE" | "SQUARE" => Ok(ScheduleKind::SquareSquare),
            "SLEPIAN_SLEPIAN" | "SLEPIAN" => Ok(ScheduleKind::SlepianSlepian),
            "HYBRID" => Ok(ScheduleKind::Hybrid),
            _ => Err(Error::InvalidParams(format!("unknown schedule kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub idle: (f64, f64),
    pub int: (f64, f64),
    /// Hold time of square pulses (ns); Slepian pulses use `shape.tau`.
    pub hold: f64,
    /// Pair coupling driving the Slepian angle relation (GHz).
    pub j_coupling: f64,
    pub shape: SlepianShape,
    /// Qubit receiving the square pulse in a hybrid schedule.
    pub hybrid_square_qubit: Qubit,
    pub sample_dt: f64,
}

impl ScheduleConfig {
    pub fn square(idle: (f64, f64), int: (f64, f64), hold: f64) -> Self {
        ScheduleConfig {
            idle,
            int,
            hold,
            j_coupling: 0.0,
            shape: SlepianShape::default(),
            hybrid_square_qubit: Qubit::Q2,
            sample_dt: DEFAULT_SAMPLE_DT,
        }
    }
}

fn square_or_idle(f_idle: f64, f_int: f64, t0: f64, t1: f64) -> Result<Waveform> {
    if f_idle == f_int {
        Ok(Waveform::Idle { f: f_idle })
    } else {
        Ok(Waveform::Square(SquarePulse::new(f_idle, f_int, t0, t1)?))
    }
}

pub fn build_schedule(kind: ScheduleKind, cfg: &ScheduleConfig) -> Result<PulseSchedule> {
    let (i1, i2) = cfg.idle;
    let (n1, n2) = cfg.int;
    match kind {
        ScheduleKind::SquareSquare => {
            if !(cfg.hold >= 0.0) {
                return Err(Error::InvalidSchedule(format!("hold time {}", cfg.hold)));
            }
            if cfg.hold == 0.0 {
                return PulseSchedule::idle(i1, i2, 0.0);
            }
            PulseSchedule::new(
                square_or_idle(i1, n1, 0.0, cfg.hold)?,
                square_or_idle(i2, n2, 0.0, cfg.hold)?,
                cfg.hold,
                cfg.sample_dt,
            )
        }
        ScheduleKind::SlepianSlepian => {
            let swing = (i1 - n1) - (i2 - n2);
            if swing == 0.0 {
                return Err(Error::SingularPulse("pair detuning does not change".into()));
            }
            let wave = |idle: f64, int: f64| -> Result<Waveform> {
                if idle == int {
                    Ok(Waveform::Idle { f: idle })
                } else {
                    Ok(Waveform::Slepian(SlepianPulse::co_moving(
                        idle,
                        int,
                        swing,
                        cfg.j_coupling,
                        cfg.shape.clone(),
                        0.0,
                    )?))
                }
            };
            PulseSchedule::new(wave(i1, n1)?, wave(i2, n2)?, cfg.shape.tau, cfg.sample_dt)
        }
        ScheduleKind::Hybrid => {
            let tau = cfg.shape.tau;
            let (sq, sl) = match cfg.hybrid_square_qubit {
                Qubit::Q1 => ((i1, n1), (i2, n2)),
                Qubit::Q2 => ((i2, n2), (i1, n1)),
            };
            let square = square_or_idle(sq.0, sq.1, 0.0, tau)?;
            let slep = Waveform::Slepian(SlepianPulse::new(sl.0, sl.1, cfg.j_coupling, cfg.shape.clone(), 0.0)?);
            let (w1, w2) = match cfg.hybrid_square_qubit {
                Qubit::Q1 => (square, slep),
                Qubit::Q2 => (slep, square),
            };
            PulseSchedule::new(w1, w2, tau, cfg.sample_dt)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pulse() -> SlepianPulse {
        SlepianPulse::new(4.665, 4.537, 0.0037, SlepianShape::default(), 0.0).unwrap()
    }

    #[test]
    fn initial_angle_cases() {
        assert!((initial_angle(0.005, 4.71, 4.70).unwrap() - PI / 4.0).abs() < 1e-12);
        assert!(initial_angle(0.005, 1e9, 0.0).unwrap() < 1e-10);
        let th = initial_angle(0.005, 4.70, 4.71).unwrap();
        assert!(th > PI / 2.0 && th < PI);
        assert!(initial_angle(0.005, 4.7, 4.7).is_err());
    }

    #[test]
    fn control_angle_endpoints_and_midpoint() {
        let p = pulse();
        assert!((p.control_angle(0.0).unwrap() - p.theta_i).abs() < 1e-15);
        assert!((p.control_angle(450.0).unwrap() - p.theta_i).abs() < 1e-12);
        assert!((p.control_angle(225.0).unwrap() - DEFAULT_THETA_F).abs() < 1e-12);
        assert!(p.control_angle(451.0).is_err());
        assert!((SlepianShape::default().odd_sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn detuning_starts_at_zero_and_is_symmetric() {
        let p = pulse();
        assert!(p.detuning(0.0).unwrap().abs() < 1e-12);
        assert!(p.detuning(450.0).unwrap().abs() < 1e-12);
        for k in 0..=90 {
            let t = 2.5 * k as f64;
            assert!((p.detuning(t).unwrap() - p.detuning(450.0 - t).unwrap()).abs() < 1e-12);
        }
        let mid = p.f_idle + p.detuning(225.0).unwrap();
        let expected = p.f_int + 2.0 * p.j_coupling / DEFAULT_THETA_F.tan();
        assert!((mid - expected).abs() < 1e-12);
    }

    #[test]
    fn square_pulse_area() {
        let s = SquarePulse::new(4.684, 4.708, 0.0, 180.0).unwrap();
        assert!((s.detuning_area() - 0.024 * 180.0).abs() < 1e-12);
        assert_eq!(s.frequency(0.0), 4.684);
        assert_eq!(s.frequency(90.0), 4.708);
        assert_eq!(s.frequency(180.0), 4.684);
    }

    #[test]
    fn schedules() {
        let mut cfg = ScheduleConfig::square((4.684, 4.738), (4.708, 4.708), 180.0);
        let sq = build_schedule(ScheduleKind::SquareSquare, &cfg).unwrap();
        assert_eq!(sq.frequencies(90.0), (4.708, 4.708));
        assert_eq!(sq.frequencies(0.0), (4.684, 4.738));
        assert_eq!(sq.breakpoints(), vec![0.0, 180.0]);

        cfg.idle = (4.665, 4.758);
        cfg.int = (4.537, 4.75);
        cfg.j_coupling = 0.0037;
        let sl = build_schedule(ScheduleKind::SlepianSlepian, &cfg).unwrap();
        let (a, b) = sl.frequencies(0.0);
        let (c, d) = sl.frequencies(450.0);
        assert!((a - 4.665).abs() < 1e-12 && (b - 4.758).abs() < 1e-12);
        assert!((c - 4.665).abs() < 1e-12 && (d - 4.758).abs() < 1e-12);
        // co-moving pulses keep both qubits on the same angle
        let (x, y) = sl.frequencies(225.0);
        assert!(((x - y) - (4.537 - 4.75) - 2.0 * 0.0037 / DEFAULT_THETA_F.tan()).abs() < 1e-12);

        let hy = build_schedule(ScheduleKind::Hybrid, &cfg).unwrap();
        assert!(hy.waveform_q1.is_continuous() != hy.waveform_q2.is_continuous());
    }

    #[test]
    fn mismatched_slepian_windows_are_rejected() {
        let a = pulse();
        let mut shape = SlepianShape::default();
        shape.tau = 400.0;
        let b = SlepianPulse::new(4.758, 4.75, 0.0005, shape, 0.0).unwrap();
        let err = PulseSchedule::new(Waveform::Slepian(a), Waveform::Slepian(b), 450.0, 0.05).unwrap_err();
        assert_eq!(err.kind(), "invalid_schedule");
    }
}
