//! Diagonalization, diabatic labeling, and the spectral quantities built on
//! them: ξ_ZZ, avoided-crossing couplings, ZZ-free roots and ZZ maps.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{BareLabel, FockBasis};
use crate::par::{self, Execution};
use crate::system::System;

pub const DEFAULT_LABEL_THRESHOLD: f64 = 0.25;

/// Computational labels in the order |00⟩, |01⟩, |10⟩, |11⟩ (q1 first).
pub fn computational_labels(n_modes: usize) -> [BareLabel; 4] {
    [
        BareLabel::qubits_only(0, 0, n_modes),
        BareLabel::qubits_only(0, 1, n_modes),
        BareLabel::qubits_only(1, 0, n_modes),
        BareLabel::qubits_only(1, 1, n_modes),
    ]
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Labeling {
    pub assignment: BTreeMap<BareLabel, usize>,
    pub overlap_quality: BTreeMap<BareLabel, f64>,
    pub unassigned: Vec<BareLabel>,
}

/// Greedy unique assignment of bare labels to eigenvectors by descending
/// overlap². Labels whose best remaining overlap² is below `threshold`
/// are reported in `unassigned`.
pub fn label_eigenstates(
    eigvecs: &DMatrix<f64>,
    basis: &FockBasis,
    labels: &[BareLabel],
    threshold: f64,
) -> Result<Labeling> {
    let mut cands: Vec<(f64, usize, usize)> = Vec::new();
    for (li, l) in labels.iter().enumerate() {
        let r = basis.bare_index(l)?;
        for e in 0..eigvecs.ncols() {
            let ov = eigvecs[(r, e)].powi(2);
            if ov >= threshold {
                cands.push((ov, li, e));
            }
        }
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = Labeling::default();
    let mut taken_label = vec![false; labels.len()];
    let mut taken_eig = vec![false; eigvecs.ncols()];
    for (ov, li, e) in cands {
        if taken_label[li] || taken_eig[e] {
            continue;
        }
        taken_label[li] = true;
        taken_eig[e] = true;
        out.assignment.insert(labels[li].clone(), e);
        out.overlap_quality.insert(labels[li].clone(), ov);
    }
    for (li, l) in labels.iter().enumerate() {
        if !taken_label[li] {
            out.unassigned.push(l.clone());
        }
    }
    Ok(out)
}

/// Labels every basis state; cheaper than [`label_eigenstates`] on the
/// full label list because only overlaps above threshold are collected.
pub fn label_all(eigvecs: &DMatrix<f64>, basis: &FockBasis, threshold: f64) -> Labeling {
    let labels = basis.labels();
    let mut cands: Vec<(f64, usize, usize)> = Vec::new();
    for e in 0..eigvecs.ncols() {
        for r in 0..eigvecs.nrows() {
            let ov = eigvecs[(r, e)].powi(2);
            if ov >= threshold {
                cands.push((ov, r, e));
            }
        }
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = Labeling::default();
    let mut taken_label = vec![false; labels.len()];
    let mut taken_eig = vec![false; eigvecs.ncols()];
    for (ov, r, e) in cands {
        if taken_label[r] || taken_eig[e] {
            continue;
        }
        taken_label[r] = true;
        taken_eig[e] = true;
        out.assignment.insert(labels[r].clone(), e);
        out.overlap_quality.insert(labels[r].clone(), ov);
    }
    out.unassigned = labels.iter().zip(&taken_label).filter(|(_, &t)| !t).map(|(l, _)| l.clone()).collect();
    out
}

/// One labeled diagonalization.
#[derive(Debug, Clone)]
pub struct SpectrumResult {
    pub f1: f64,
    pub f2: f64,
    pub eigenvalues: DVector<f64>,
    /// Real because every Hamiltonian here is real symmetric.
    pub eigenvectors: DMatrix<f64>,
    pub labeling: Labeling,
}

impl SpectrumResult {
    pub fn energy(&self, label: &BareLabel) -> Result<f64> {
        self.labeling
            .assignment
            .get(label)
            .map(|&e| self.eigenvalues[e])
            .ok_or_else(|| Error::LabelAmbiguity(label.to_string()))
    }

    pub fn index(&self, label: &BareLabel) -> Result<usize> {
        self.labeling.assignment.get(label).copied().ok_or_else(|| Error::LabelAmbiguity(label.to_string()))
    }

    /// Eigenvector indices of |00⟩, |01⟩, |10⟩, |11⟩.
    pub fn computational_indices(&self) -> Result<[usize; 4]> {
        let n_modes = self.labeling.assignment.keys().next().map_or(0, |l| l.modes.len());
        let labels = computational_labels(n_modes);
        let mut out = [0; 4];
        for (k, l) in labels.iter().enumerate() {
            out[k] = self.index(l)?;
        }
        Ok(out)
    }
}

/// Diagonalizes `H(f1, f2)` and labels the requested states.
pub fn diagonalize(sys: &System, f1: f64, f2: f64, labels: &[BareLabel], threshold: f64) -> Result<SpectrumResult> {
    let es = sys.eigen(f1, f2)?;
    let labeling = label_eigenstates(&es.vectors, sys.basis(), labels, threshold)?;
    Ok(SpectrumResult { f1, f2, eigenvalues: es.values, eigenvectors: es.vectors, labeling })
}

/// Diagonalizes and labels the four computational states, failing if any
/// of them cannot be assigned.
pub fn computational_spectrum(sys: &System, f1: f64, f2: f64) -> Result<SpectrumResult> {
    let labels = computational_labels(sys.modes.len());
    let s = diagonalize(sys, f1, f2, &labels, DEFAULT_LABEL_THRESHOLD)?;
    if !s.labeling.unassigned.is_empty() {
        let names: Vec<String> = s.labeling.unassigned.iter().map(|l| l.to_string()).collect();
        return Err(Error::LabelAmbiguity(format!("{} at f1={f1}, f2={f2}", names.join(" "))));
    }
    Ok(s)
}

/// ξ_ZZ = E11 + E00 − E10 − E01 over labeled eigenfrequencies (GHz).
pub fn zz_strength(sys: &System, f1: f64, f2: f64) -> Result<f64> {
    let s = computational_spectrum(sys, f1, f2)?;
    let [i00, i01, i10, i11] = s.computational_indices()?;
    let e = &s.eigenvalues;
    Ok(e[i11] + e[i00] - e[i10] - e[i01])
}

/// Frequency axis along which a pair gap is scanned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanAxis {
    /// Scan q1 with q2 held at `f2`.
    Q1 { f2: f64 },
    /// Scan q2 with q1 held at `f1`.
    Q2 { f1: f64 },
    /// Scan the centre frequency with `f1 − f2` held fixed.
    Center { detuning: f64 },
    /// Scan q1 with `f1 + f2` held fixed.
    AntiDiagonal { sum: f64 },
}

impl ScanAxis {
    pub fn point(&self, x: f64) -> (f64, f64) {
        match *self {
            ScanAxis::Q1 { f2 } => (x, f2),
            ScanAxis::Q2 { f1 } => (f1, x),
            ScanAxis::Center { detuning } => (x + 0.5 * detuning, x - 0.5 * detuning),
            ScanAxis::AntiDiagonal { sum } => (x, sum - x),
        }
    }
}

/// Gap between the two eigenbranches carrying the most weight on
/// `a` and `b`.
fn pair_gap(sys: &System, a: usize, b: usize, f1: f64, f2: f64) -> Result<f64> {
    let sector = sys
        .sectors()
        .iter()
        .position(|s| s.binary_search(&a).is_ok())
        .expect("every index lies in a sector");
    if sys.sectors()[sector].binary_search(&b).is_err() {
        return Err(Error::Domain("labels lie in different symmetry sectors".into()));
    }
    let h = sys.real_hamiltonian(f1, f2)?;
    let blk = &crate::linalg::block_eigen(&h, &sys.sectors()[sector..=sector])[0];
    let ra = blk.indices.binary_search(&a).unwrap();
    let rb = blk.indices.binary_search(&b).unwrap();
    let mut w: Vec<(f64, usize)> = (0..blk.values.len())
        .map(|k| (blk.vectors[(ra, k)].powi(2) + blk.vectors[(rb, k)].powi(2), k))
        .collect();
    w.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    if w[1].0 < 0.5 {
        return Err(Error::BranchesNotSeparable(format!(
            "branch weight {:.3} at f1={f1}, f2={f2}",
            w[1].0
        )));
    }
    Ok((blk.values[w[0].1] - blk.values[w[1].1]).abs())
}

/// Golden-section minimization of `f` on `[lo, hi]`.
pub(crate) fn golden_min<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairCoupling {
    /// Half the minimum gap (GHz).
    pub j: f64,
    /// Scan coordinate of the minimum gap (GHz).
    pub location: f64,
    pub f1: f64,
    pub f2: f64,
}

const PAIR_SCAN_POINTS: usize = 41;
const PAIR_XTOL: f64 = 1e-9;
const EXACT_CROSSING_GAP: f64 = 1e-8;

/// Half the minimum gap between the eigenbranches tracking `a` and `b`
/// over `interval` along `axis`.
pub fn extract_pair_coupling(
    sys: &System,
    a: &BareLabel,
    b: &BareLabel,
    axis: ScanAxis,
    interval: (f64, f64),
) -> Result<PairCoupling> {
    let (lo, hi) = interval;
    if a == b {
        return Err(Error::Domain("pair labels must differ".into()));
    }
    if !(hi > lo) {
        return Err(Error::Domain(format!("empty scan interval [{lo}, {hi}]")));
    }
    let ia = sys.basis().bare_index(a)?;
    let ib = sys.basis().bare_index(b)?;
    let gap = |x: f64| {
        let (f1, f2) = axis.point(x);
        pair_gap(sys, ia, ib, f1, f2)
    };
    let step = (hi - lo) / (PAIR_SCAN_POINTS - 1) as f64;
    let xs: Vec<f64> = (0..PAIR_SCAN_POINTS).map(|k| lo + step * k as f64).collect();
    let gaps: Vec<Option<f64>> = xs.iter().map(|&x| gap(x).ok()).collect();
    let best = gaps
        .iter()
        .enumerate()
        .filter_map(|(k, g)| g.map(|g| (k, g)))
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .ok_or_else(|| Error::BranchesNotSeparable(format!("anywhere in [{lo}, {hi}]")))?;
    let k = best.0;
    if k == 0 || k == PAIR_SCAN_POINTS - 1 {
        return Err(Error::NoAvoidedCrossing { lo, hi });
    }
    let (x, g) = golden_min(|x| gap(x).unwrap_or(f64::INFINITY), xs[k - 1], xs[k + 1], PAIR_XTOL);
    if !g.is_finite() {
        return Err(Error::BranchesNotSeparable(format!("near {x}")));
    }
    if g < EXACT_CROSSING_GAP {
        return Err(Error::NoAvoidedCrossing { lo, hi });
    }
    let (f1, f2) = axis.point(x);
    Ok(PairCoupling { j: 0.5 * g, location: x, f1, f2 })
}

/// Half-width of the q1 scan used by [`xx_splitting`].
pub const XX_SCAN_HALF_WIDTH: f64 = 0.02;

/// Numeric XX coupling: half the minimum |10⟩/|01⟩ gap as q1 is scanned
/// through q2 held at `f_center`.
pub fn xx_splitting(sys: &System, f_center: f64) -> Result<f64> {
    if sys.params.c_c1 == 0.0 || sys.params.c_c2 == 0.0 {
        return Ok(0.0);
    }
    let n = sys.modes.len();
    let r = extract_pair_coupling(
        sys,
        &BareLabel::qubits_only(1, 0, n),
        &BareLabel::qubits_only(0, 1, n),
        ScanAxis::Q1 { f2: f_center },
        (f_center - XX_SCAN_HALF_WIDTH, f_center + XX_SCAN_HALF_WIDTH),
    )?;
    Ok(r.j)
}

const ROOT_XTOL: f64 = 1e-7;
/// A bisection limit whose |ξ| exceeds this is a pole, not a root (GHz).
const ROOT_RESIDUAL: f64 = 1e-4;

/// Bisection root of ξ_ZZ along `axis` inside `bracket`.
pub fn zz_free_along(sys: &System, axis: ScanAxis, bracket: (f64, f64)) -> Result<f64> {
    let (mut lo, mut hi) = bracket;
    let zz = |x: f64| {
        let (f1, f2) = axis.point(x);
        zz_strength(sys, f1, f2)
    };
    let mut zlo = zz(lo)?;
    let zhi = zz(hi)?;
    if zlo == 0.0 {
        return Ok(lo);
    }
    if zhi == 0.0 {
        return Ok(hi);
    }
    if zlo.signum() == zhi.signum() {
        return Err(Error::NoSignChange { lo, hi });
    }
    let mut zhi = zhi;
    while hi - lo > ROOT_XTOL {
        let mid = 0.5 * (lo + hi);
        let zm = zz(mid)?;
        if zm == 0.0 {
            return Ok(mid);
        }
        if zm.signum() == zlo.signum() {
            lo = mid;
            zlo = zm;
        } else {
            hi = mid;
            zhi = zm;
        }
    }
    let residual = zlo.abs().min(zhi.abs());
    if residual > ROOT_RESIDUAL {
        return Err(Error::Singularity { term: "xi_zz (pole inside bracket)".into(), value: residual });
    }
    Ok(0.5 * (lo + hi))
}

/// ZZ-free centre frequency at fixed `f1 − f2 = detuning`.
pub fn zz_free_point(sys: &System, detuning: f64, bracket: (f64, f64)) -> Result<f64> {
    zz_free_along(sys, ScanAxis::Center { detuning }, bracket)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellFlag {
    Ok,
    /// A computational label could not be assigned (on a resonance).
    LabelAmbiguity,
    Error,
}

impl CellFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            CellFlag::Ok => "ok",
            CellFlag::LabelAmbiguity => "label_ambiguity",
            CellFlag::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZzMap {
    pub f1_axis: Vec<f64>,
    pub f2_axis: Vec<f64>,
    /// Row-major with f1 as the slow index.
    pub zz: Vec<Option<f64>>,
    pub flags: Vec<CellFlag>,
}

impl ZzMap {
    pub fn at(&self, i1: usize, i2: usize) -> Option<f64> {
        self.zz[i1 * self.f2_axis.len() + i2]
    }

    pub fn flag(&self, i1: usize, i2: usize) -> CellFlag {
        self.flags[i1 * self.f2_axis.len() + i2]
    }

    /// Sign changes of ξ_ZZ between f1-neighbours, linearly interpolated.
    /// Pairs where either side exceeds `cap` in magnitude are poles and
    /// are skipped.
    pub fn zero_crossings(&self, cap: f64) -> Vec<(f64, f64)> {
        let mut pts = Vec::new();
        for i2 in 0..self.f2_axis.len() {
            for i1 in 0..self.f1_axis.len().saturating_sub(1) {
                if let (Some(a), Some(b)) = (self.at(i1, i2), self.at(i1 + 1, i2)) {
                    if a.signum() != b.signum() && a.abs() < cap && b.abs() < cap {
                        let (x0, x1) = (self.f1_axis[i1], self.f1_axis[i1 + 1]);
                        pts.push((x0 + (x1 - x0) * a / (a - b), self.f2_axis[i2]));
                    }
                }
            }
        }
        pts
    }
}

/// ξ_ZZ on the grid `f1_grid × f2_grid`; cells that cannot be labeled are
/// flagged and carry no value.
pub fn zz_map(sys: &System, f1_grid: &[f64], f2_grid: &[f64], exec: Execution) -> ZzMap {
    let cells: Vec<(f64, f64)> = f1_grid.iter().flat_map(|&a| f2_grid.iter().map(move |&b| (a, b))).collect();
    let vals = par::map(exec, &cells, |&(f1, f2)| zz_strength(sys, f1, f2));
    let mut zz = Vec::with_capacity(vals.len());
    let mut flags = Vec::with_capacity(vals.len());
    for v in vals {
        match v {
            Ok(z) => {
                zz.push(Some(z));
                flags.push(CellFlag::Ok);
            }
            Err(Error::LabelAmbiguity(_)) => {
                zz.push(None);
                flags.push(CellFlag::LabelAmbiguity);
            }
            Err(_) => {
                zz.push(None);
                flags.push(CellFlag::Error);
            }
        }
    }
    ZzMap { f1_axis: f1_grid.to_vec(), f2_axis: f2_grid.to_vec(), zz, flags }
}

/// Total-least-squares line through a point set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    /// Unit direction of the fitted line.
    pub direction: (f64, f64),
    /// Largest perpendicular distance of a point from the line (GHz).
    pub max_deviation: f64,
    /// Extent of the points along the line (GHz).
    pub chord: f64,
}

impl LineFit {
    /// Dimensionless bow of the curve: `max_deviation / chord`.
    pub fn curvature(&self) -> f64 {
        self.max_deviation / self.chord
    }
}

pub fn fit_line(points: &[(f64, f64)]) -> Option<LineFit> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let (dy, dx) = angle.sin_cos();
    let (mut tmin, mut tmax, mut dev) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for &(x, y) in points {
        let (u, v) = (x - mx, y - my);
        let t = u * dx + v * dy;
        tmin = tmin.min(t);
        tmax = tmax.max(t);
        dev = dev.max((v * dx - u * dy).abs());
    }
    Some(LineFit { direction: (dx, dy), max_deviation: dev, chord: tmax - tmin })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub index: usize,
    pub energy: f64,
    pub label: Option<BareLabel>,
    pub overlap2: f64,
}

impl Level {
    pub fn excitations(&self) -> Option<u32> {
        self.label.as_ref().map(BareLabel::excitations)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSample {
    pub f1: f64,
    pub f2: f64,
    pub levels: Vec<Level>,
}

/// Labeled levels versus q1 frequency at fixed q2.
pub fn energy_spectrum_scan(sys: &System, f1_values: &[f64], f2: f64, exec: Execution) -> Result<Vec<SpectrumSample>> {
    let out = par::map(exec, f1_values, |&f1| -> Result<SpectrumSample> {
        let es = sys.eigen(f1, f2)?;
        let lab = label_all(&es.vectors, sys.basis(), DEFAULT_LABEL_THRESHOLD);
        let mut by_eig: Vec<Option<(BareLabel, f64)>> = vec![None; es.values.len()];
        for (l, &e) in &lab.assignment {
            by_eig[e] = Some((l.clone(), lab.overlap_quality[l]));
        }
        let levels = by_eig
            .into_iter()
            .enumerate()
            .map(|(k, l)| Level {
                index: k,
                energy: es.values[k],
                overlap2: l.as_ref().map_or(0.0, |x| x.1),
                label: l.map(|x| x.0),
            })
            .collect();
        Ok(SpectrumSample { f1, f2, levels })
    });
    out.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{CircuitParams, ModeSet};
    use crate::hilbert::TruncationSpec;

    fn sys(p: CircuitParams) -> System {
        System::new(p, ModeSet::from_indices(0.44, [10, 11]).unwrap(), TruncationSpec::default()).unwrap()
    }

    #[test]
    fn decoupled_labels_are_exact() {
        let s = sys(CircuitParams::default().with_coupling_capacitance(0.0));
        let es = s.eigen(4.6, 4.75).unwrap();
        let lab = label_all(&es.vectors, s.basis(), DEFAULT_LABEL_THRESHOLD);
        assert!(lab.unassigned.is_empty());
        assert!(lab.overlap_quality.values().all(|&q| (q - 1.0).abs() < 1e-12));
        assert_eq!(zz_strength(&s, 4.6, 4.75).unwrap().abs() < 1e-12, true);
    }

    #[test]
    fn idle_point_labels_are_clean() {
        let s = sys(CircuitParams::default());
        let r = computational_spectrum(&s, 4.684, 4.738).unwrap();
        assert!(r.labeling.overlap_quality.values().all(|&q| q > 0.9));
    }

    #[test]
    fn resonance_hybridizes_below_strict_threshold() {
        let s = sys(CircuitParams::default());
        let labels = computational_labels(2);
        let r = diagonalize(&s, 4.70, 4.70, &labels[1..3], 0.6).unwrap();
        assert_eq!(r.labeling.unassigned.len(), 2);
        let r = diagonalize(&s, 4.70, 4.70, &labels[1..3], DEFAULT_LABEL_THRESHOLD).unwrap();
        for q in r.labeling.overlap_quality.values() {
            assert!((q - 0.5).abs() < 0.05, "{q}");
        }
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let (x, fx) = golden_min(|x| (x - 0.3).powi(2), 0.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-9);
        assert!(fx < 1e-18);
    }

    #[test]
    fn straight_points_have_zero_curvature() {
        let pts: Vec<(f64, f64)> = (0..10).map(|k| (k as f64, 9.4 - k as f64)).collect();
        let fit = fit_line(&pts).unwrap();
        assert!(fit.max_deviation < 1e-12);
        assert!((fit.chord - 9.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn exchange_gap_is_zero_without_coupling() {
        let s = sys(CircuitParams::default().with_coupling_capacitance(0.0));
        assert_eq!(xx_splitting(&s, 4.708).unwrap(), 0.0);
        let n = 2;
        let err = extract_pair_coupling(
            &s,
            &BareLabel::qubits_only(1, 0, n),
            &BareLabel::qubits_only(0, 1, n),
            ScanAxis::Q1 { f2: 4.708 },
            (4.69, 4.72),
        )
        .unwrap_err();
        assert_eq!(err.kind(), "no_avoided_crossing");
    }
}
