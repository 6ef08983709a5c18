//! Time evolution under a pulse schedule.
//!
//! Piecewise-constant stretches are propagated with one exact exponential
//! each; shaped stretches use the midpoint rule on slices of at most `dt`.
//! Each slice exponential comes from the block eigen-decomposition of the
//! instantaneous Hamiltonian.

use nalgebra::{DMatrix, Matrix4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::BareLabel;
use crate::linalg::{apply_evolution, BlockEigen};
use crate::pulses::PulseSchedule;
use crate::spectrum::{computational_spectrum, SpectrumResult};
use crate::system::System;

/// Element-wise tolerance of the dt-halving check.
pub const CONVERGENCE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Slice {
    t0: f64,
    dt: f64,
    f1: f64,
    f2: f64,
}

/// Splits the schedule at its breakpoints; constant stretches become one
/// slice unless `split_constant` caps their length.
fn slices(schedule: &PulseSchedule, dt: f64, split_constant: Option<f64>) -> Vec<Slice> {
    let bp = schedule.breakpoints();
    let constant = schedule.is_piecewise_constant();
    let mut out = Vec::new();
    for w in bp.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = b - a;
        if len <= 0.0 {
            continue;
        }
        let step = match (constant, split_constant) {
            (true, None) => len,
            (true, Some(s)) => s,
            (false, _) => dt,
        };
        let n = ((len / step) - 1e-9).ceil().max(1.0) as usize;
        let h = len / n as f64;
        for k in 0..n {
            let t0 = a + h * k as f64;
            let (f1, f2) = schedule.frequencies(t0 + 0.5 * h);
            out.push(Slice { t0, dt: h, f1, f2 });
        }
    }
    out
}

/// Evolves the columns of `psi`, calling `observe(t, psi)` at t = 0 and
/// after every slice. Returns the largest slice length used.
fn evolve<F: FnMut(f64, &DMatrix<Complex64>)>(
    sys: &System,
    schedule: &PulseSchedule,
    dt: f64,
    split_constant: Option<f64>,
    psi: &mut DMatrix<Complex64>,
    mut observe: F,
) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("time step {dt} must be positive")));
    }
    let mut cache: Option<((f64, f64), Vec<BlockEigen>)> = None;
    let mut dt_used: f64 = 0.0;
    observe(0.0, psi);
    for s in slices(schedule, dt, split_constant) {
        let key = (s.f1, s.f2);
        if cache.as_ref().map_or(true, |(k, _)| *k != key) {
            cache = Some((key, sys.block_eigen(s.f1, s.f2)?));
        }
        apply_evolution(&cache.as_ref().unwrap().1, s.dt, psi);
        dt_used = dt_used.max(s.dt);
        observe(s.t0 + s.dt, psi);
    }
    Ok(dt_used)
}

#[derive(Debug, Clone)]
pub struct Propagator {
    pub matrix: DMatrix<Complex64>,
    pub total_time: f64,
    pub dt_used: f64,
    /// Largest element change when the step is halved, if checked.
    pub halving_change: Option<f64>,
}

impl Propagator {
    pub fn converged(&self) -> Option<bool> {
        self.halving_change.map(|d| d <= CONVERGENCE_TOL)
    }

    /// max |U†U − I|.
    pub fn unitarity_error(&self) -> f64 {
        let p = self.matrix.adjoint() * &self.matrix;
        let n = p.nrows();
        let mut e: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                e = e.max((p[(i, j)] - Complex64::new(target, 0.0)).norm());
            }
        }
        e
    }
}

/// Full-space propagator of the schedule.
pub fn propagate(sys: &System, schedule: &PulseSchedule, dt: f64) -> Result<Propagator> {
    let mut u = DMatrix::identity(sys.dim(), sys.dim());
    let dt_used = evolve(sys, schedule, dt, None, &mut u, |_, _| {})?;
    Ok(Propagator { matrix: u, total_time: schedule.total_time, dt_used, halving_change: None })
}

/// [`propagate`] plus a second run at `dt/2`, recording the largest
/// element change in `halving_change`.
pub fn propagate_checked(sys: &System, schedule: &PulseSchedule, dt: f64) -> Result<Propagator> {
    let mut p = propagate(sys, schedule, dt)?;
    let fine = propagate(sys, schedule, 0.5 * dt)?;
    p.halving_change = Some(max_abs_diff(&p.matrix, &fine.matrix));
    Ok(p)
}

pub(crate) fn max_abs_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Gate restricted to the labeled idle eigenstates |00⟩, |01⟩, |10⟩, |11⟩.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComputationalGate {
    pub u4: Matrix4<Complex64>,
    pub leakage_per_state: [f64; 4],
}

impl ComputationalGate {
    pub fn from_u4(u4: Matrix4<Complex64>) -> Self {
        let mut leakage = [0.0; 4];
        for (b, l) in leakage.iter_mut().enumerate() {
            *l = (1.0 - u4.column(b).norm_squared()).max(0.0);
        }
        ComputationalGate { u4, leakage_per_state: leakage }
    }

    pub fn mean_leakage(&self) -> f64 {
        self.leakage_per_state.iter().sum::<f64>() / 4.0
    }
}

/// Projects evolved states onto the idle eigenstates in the idle rotating
/// frame: `u4[a][b] = ⟨eig_a|ψ_b(T)⟩·e^{+2πi·ω̃_a·T}`.
pub fn gate_from_states(states: &DMatrix<Complex64>, idle: &SpectrumResult, total_time: f64) -> Result<ComputationalGate> {
    let idx = idle.computational_indices()?;
    let mut u4 = Matrix4::<Complex64>::zeros();
    for (a, &ea) in idx.iter().enumerate() {
        let v = idle.eigenvectors.column(ea);
        let phase = Complex64::from_polar(1.0, std::f64::consts::TAU * idle.eigenvalues[ea] * total_time);
        for b in 0..4 {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..v.len() {
                acc += states[(i, b)] * v[i];
            }
            u4[(a, b)] = acc * phase;
        }
    }
    Ok(ComputationalGate::from_u4(u4))
}

/// Columns of the four computational idle eigenstates.
pub fn computational_states(idle: &SpectrumResult) -> Result<DMatrix<Complex64>> {
    let idx = idle.computational_indices()?;
    let n = idle.eigenvectors.nrows();
    Ok(DMatrix::from_fn(n, 4, |i, b| Complex64::new(idle.eigenvectors[(i, idx[b])], 0.0)))
}

/// `computational_gate(u, idle_spectrum)`.
pub fn computational_gate(u: &Propagator, idle: &SpectrumResult) -> Result<ComputationalGate> {
    let states = &u.matrix * computational_states(idle)?;
    gate_from_states(&states, idle, u.total_time)
}

/// Evolves only the four computational states; much cheaper than the
/// full propagator.
pub fn simulate_gate(sys: &System, schedule: &PulseSchedule, dt: f64, idle: &SpectrumResult) -> Result<ComputationalGate> {
    let mut psi = computational_states(idle)?;
    evolve(sys, schedule, dt, None, &mut psi, |_, _| {})?;
    gate_from_states(&psi, idle, schedule.total_time)
}

/// Result of the single-qubit phase correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualZ {
    pub corrected: Matrix4<Complex64>,
    pub phi1: f64,
    pub phi2: f64,
    pub fidelity: f64,
}

const VZ_GRID: usize = 64;

/// Maximizes the fidelity of `diag(1, e^{iφ2}, e^{iφ1}, e^{i(φ1+φ2)})·u4`
/// against `target`. The optimal φ1 is analytic for each φ2, so only φ2
/// is searched: a 64-point grid, then a root search on the derivative. The
/// returned matrix also carries the global phase that aligns it with the
/// target.
pub fn virtual_z_correct(u4: &Matrix4<Complex64>, target: &Matrix4<Complex64>) -> VirtualZ {
    let mut c = [Complex64::new(0.0, 0.0); 4];
    for (a, ca) in c.iter_mut().enumerate() {
        for b in 0..4 {
            *ca += target[(a, b)].conj() * u4[(a, b)];
        }
    }
    let score = |p2: f64| {
        let e = Complex64::from_polar(1.0, p2);
        (c[0] + e * c[1]).norm() + (c[2] + e * c[3]).norm()
    };
    let step = std::f64::consts::TAU / VZ_GRID as f64;
    let mut best = (0.0, f64::NEG_INFINITY);
    for k in 0..VZ_GRID {
        let p = k as f64 * step;
        let s = score(p);
        if s > best.1 + 1e-15 {
            best = (p, s);
        }
    }
    // Refine on the root of the analytic derivative; the score itself is
    // too flat at its peak to locate φ2 beyond √ε.
    let slope = |p2: f64| {
        let e = Complex64::from_polar(1.0, p2);
        let term = |a: Complex64, b: Complex64| {
            let x = a + e * b;
            let n = x.norm();
            if n > 0.0 {
                (x.conj() * Complex64::i() * e * b).re / n
            } else {
                0.0
            }
        };
        term(c[0], c[1]) + term(c[2], c[3])
    };
    let (mut lo, mut hi) = (best.0 - step, best.0 + step);
    let p2 = if slope(lo) > 0.0 && slope(hi) < 0.0 {
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if slope(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    } else {
        crate::spectrum::golden_min(|p| -score(p), lo, hi, 1e-12).0
    };
    let e2 = Complex64::from_polar(1.0, p2);
    let x = c[0] + e2 * c[1];
    let y = c[2] + e2 * c[3];
    let p1 = if y.norm() > 0.0 && x.norm() > 0.0 { x.arg() - y.arg() } else { 0.0 };
    let wrap = |p: f64| p.rem_euclid(std::f64::consts::TAU);
    let (p1, p2) = (wrap(p1), wrap(p2));
    let d = [0.0, p2, p1, p1 + p2];
    let mut m = *u4;
    for a in 0..4 {
        let ph = Complex64::from_polar(1.0, d[a]);
        for b in 0..4 {
            m[(a, b)] *= ph;
        }
    }
    let tr = (target.adjoint() * m).trace();
    if tr.norm() > 0.0 {
        m *= Complex64::from_polar(1.0, -tr.arg());
    }
    let fidelity = crate::gatemetrics::unitary_fidelity(&m, target);
    VirtualZ { corrected: m, phi1: p1, phi2: p2, fidelity }
}

/// Expected bare excitation numbers along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyTrace {
    pub initial_label: BareLabel,
    pub times: Vec<f64>,
    pub qubit_occupancy: [Vec<f64>; 2],
    pub mode_occupancy: Vec<Vec<f64>>,
}

impl OccupancyTrace {
    pub fn total_excitations(&self, k: usize) -> f64 {
        self.qubit_occupancy[0][k] + self.qubit_occupancy[1][k] + self.mode_occupancy.iter().map(|m| m[k]).sum::<f64>()
    }
}

/// Default spacing of occupancy samples on constant stretches (ns).
pub const DEFAULT_TRACE_DT: f64 = 0.5;

/// Evolves several idle eigenstates together, recording their occupancies.
pub fn occupancy_traces(
    sys: &System,
    schedule: &PulseSchedule,
    labels: &[BareLabel],
    dt: f64,
    trace_dt: f64,
) -> Result<Vec<OccupancyTrace>> {
    let (fi1, fi2) = schedule.idle_frequencies();
    let idle = crate::spectrum::diagonalize(sys, fi1, fi2, labels, crate::spectrum::DEFAULT_LABEL_THRESHOLD)?;
    if let Some(l) = idle.labeling.unassigned.first() {
        return Err(Error::LabelAmbiguity(l.to_string()));
    }
    let n = sys.dim();
    let mut psi = DMatrix::from_fn(n, labels.len(), |i, b| {
        Complex64::new(idle.eigenvectors[(i, idle.labeling.assignment[&labels[b]])], 0.0)
    });
    let basis = sys.basis();
    let n_modes = basis.n_modes();
    let mut traces: Vec<OccupancyTrace> = labels
        .iter()
        .map(|l| OccupancyTrace {
            initial_label: l.clone(),
            times: Vec::new(),
            qubit_occupancy: [Vec::new(), Vec::new()],
            mode_occupancy: vec![Vec::new(); n_modes],
        })
        .collect();
    evolve(sys, schedule, dt, Some(trace_dt), &mut psi, |t, psi| {
        for (b, tr) in traces.iter_mut().enumerate() {
            let mut q = [0.0; 2];
            let mut m = vec![0.0; n_modes];
            for i in 0..n {
                let p = psi[(i, b)].norm_sqr();
                if p == 0.0 {
                    continue;
                }
                let l = basis.label(i);
                q[0] += p * l.qubits[0] as f64;
                q[1] += p * l.qubits[1] as f64;
                for k in 0..n_modes {
                    m[k] += p * l.modes[k] as f64;
                }
            }
            tr.times.push(t);
            tr.qubit_occupancy[0].push(q[0]);
            tr.qubit_occupancy[1].push(q[1]);
            for k in 0..n_modes {
                tr.mode_occupancy[k].push(m[k]);
            }
        }
    })?;
    Ok(traces)
}

pub fn occupancy_trajectory(
    sys: &System,
    schedule: &PulseSchedule,
    initial_label: &BareLabel,
    dt: f64,
) -> Result<OccupancyTrace> {
    Ok(occupancy_traces(sys, schedule, std::slice::from_ref(initial_label), dt, DEFAULT_TRACE_DT)?.remove(0))
}

/// Idle spectrum of a schedule, with the computational states labeled.
pub fn idle_spectrum(sys: &System, schedule: &PulseSchedule) -> Result<SpectrumResult> {
    let (f1, f2) = schedule.idle_frequencies();
    computational_spectrum(sys, f1, f2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{CircuitParams, ModeSet};
    use crate::hilbert::TruncationSpec;
    use crate::pulses::{build_schedule, ScheduleConfig, ScheduleKind};

    fn sys() -> System {
        System::new(CircuitParams::default(), ModeSet::from_indices(0.44, [10, 11]).unwrap(), TruncationSpec::default())
            .unwrap()
    }

    #[test]
    fn zero_length_is_identity() {
        let s = sys();
        let sched = PulseSchedule::idle(4.684, 4.738, 0.0).unwrap();
        let u = propagate(&s, &sched, 0.05).unwrap();
        assert_eq!(u.matrix, DMatrix::identity(s.dim(), s.dim()));
    }

    #[test]
    fn idle_hold_is_identity_in_idle_frame() {
        let s = sys();
        let sched = PulseSchedule::idle(4.684, 4.738, 137.0).unwrap();
        let idle = idle_spectrum(&s, &sched).unwrap();
        let g = simulate_gate(&s, &sched, 0.05, &idle).unwrap();
        assert!((g.u4 - Matrix4::identity()).norm() < 1e-9);
    }

    #[test]
    fn slicing_respects_breakpoints() {
        let cfg = ScheduleConfig::square((4.684, 4.738), (4.708, 4.708), 10.0);
        let sched = build_schedule(ScheduleKind::SquareSquare, &cfg).unwrap();
        assert_eq!(slices(&sched, 0.05, None).len(), 1);
        let fine = slices(&sched, 0.05, Some(0.5));
        assert_eq!(fine.len(), 20);
        assert!((fine.iter().map(|s| s.dt).sum::<f64>() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn virtual_z_removes_pure_frames() {
        let (b, g) = (0.37, -1.21);
        let u = Matrix4::from_diagonal(&nalgebra::Vector4::new(
            Complex64::new(1.0, 0.0),
            Complex64::from_polar(1.0, b),
            Complex64::from_polar(1.0, g),
            Complex64::from_polar(1.0, b + g),
        ));
        let vz = virtual_z_correct(&u, &Matrix4::identity());
        assert!((vz.fidelity - 1.0).abs() < 1e-12);
        assert!((vz.corrected - Matrix4::identity()).norm() < 1e-9);
    }
}
