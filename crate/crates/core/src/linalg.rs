//! Hermitian eigensolvers.
//!
//! Every Hamiltonian in this crate is real symmetric and splits into
//! independent sectors, so the workhorse is a block-wise real solver; the
//! general complex path exists for arbitrary Hermitian input.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hilbert::HamiltonianMatrix;

/// Relative tolerance for accepting a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Eigenpairs with eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct Eigensystem {
    pub values: DVector<f64>,
    pub vectors: DMatrix<Complex64>,
}

/// Real eigenpairs with eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct RealEigensystem {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

/// Eigen-decomposition restricted to one invariant block.
#[derive(Debug, Clone)]
pub struct BlockEigen {
    pub indices: Vec<usize>,
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

/// Diagonalizes a Hermitian matrix.
pub fn eigensystem(h: &HamiltonianMatrix) -> Result<Eigensystem> {
    let dev = h.hermiticity_error();
    if dev > HERMITIAN_TOL {
        return Err(Error::NonHermitian(dev));
    }
    if let Some(re) = h.as_real() {
        let blocks = connected_blocks(&re);
        let es = assemble(&block_eigen(&re, &blocks), re.nrows());
        return Ok(Eigensystem { values: es.values, vectors: es.vectors.map(|x| Complex64::new(x, 0.0)) });
    }
    let n = h.dim();
    let eig = SymmetricEigen::new(h.entries.clone());
    let order = ascending(eig.eigenvalues.as_slice());
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(n, n);
    for (c, &k) in order.iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(k));
    }
    Ok(Eigensystem { values, vectors })
}

fn ascending(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order
}

/// Connected components of the nonzero pattern, each sorted ascending.
pub fn connected_blocks(m: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for j in 0..n {
        for i in (j + 1)..n {
            if m[(i, j)] != 0.0 || m[(j, i)] != 0.0 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

/// Diagonalizes each block of a real symmetric matrix.
pub fn block_eigen(m: &DMatrix<f64>, blocks: &[Vec<usize>]) -> Vec<BlockEigen> {
    blocks
        .iter()
        .map(|idx| {
            let k = idx.len();
            let sub = DMatrix::from_fn(k, k, |a, b| m[(idx[a], idx[b])]);
            let eig = SymmetricEigen::new(sub);
            BlockEigen { indices: idx.clone(), values: eig.eigenvalues, vectors: eig.eigenvectors }
        })
        .collect()
}

/// Scatters block eigenpairs into one dense, globally sorted system.
pub fn assemble(blocks: &[BlockEigen], n: usize) -> RealEigensystem {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n);
    for (b, blk) in blocks.iter().enumerate() {
        for k in 0..blk.values.len() {
            pairs.push((blk.values[k], b, k));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut values = DVector::zeros(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (c, &(e, b, k)) in pairs.iter().enumerate() {
        values[c] = e;
        let blk = &blocks[b];
        for (r, &i) in blk.indices.iter().enumerate() {
            vectors[(i, c)] = blk.vectors[(r, k)];
        }
    }
    RealEigensystem { values, vectors }
}

/// Applies `exp(−2πi·H·t)` to the columns of `psi` using block eigenpairs of `H`.
pub fn apply_evolution(blocks: &[BlockEigen], t: f64, psi: &mut DMatrix<Complex64>) {
    let cols = psi.ncols();
    for blk in blocks {
        let k = blk.indices.len();
        let re = DMatrix::from_fn(k, cols, |a, c| psi[(blk.indices[a], c)].re);
        let im = DMatrix::from_fn(k, cols, |a, c| psi[(blk.indices[a], c)].im);
        let vt = blk.vectors.transpose();
        let mut x = &vt * re;
        let mut y = &vt * im;
        for a in 0..k {
            let (s, c) = (-std::f64::consts::TAU * blk.values[a] * t).sin_cos();
            for col in 0..cols {
                let (xr, yi) = (x[(a, col)], y[(a, col)]);
                x[(a, col)] = c * xr - s * yi;
                y[(a, col)] = s * xr + c * yi;
            }
        }
        let nr = &blk.vectors * x;
        let ni = &blk.vectors * y;
        for (a, &i) in blk.indices.iter().enumerate() {
            for col in 0..cols {
                psi[(i, col)] = Complex64::new(nr[(a, col)], ni[(a, col)]);
            }
        }
    }
}

/// Dense `exp(−2πi·H·t)` for a real symmetric `H` given as blocks.
pub fn evolution_operator(blocks: &[BlockEigen], n: usize, t: f64) -> DMatrix<Complex64> {
    let mut u = DMatrix::identity(n, n);
    apply_evolution(blocks, t, &mut u);
    u
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_input() {
        let h = HamiltonianMatrix::from_real(&DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -1.0, 2.0])));
        let es = eigensystem(&h).unwrap();
        assert_eq!(es.values.as_slice(), &[-1.0, 2.0, 3.0]);
        assert_eq!(es.vectors[(1, 0)].norm(), 1.0);
        assert_eq!(es.vectors[(2, 1)].norm(), 1.0);
        assert_eq!(es.vectors[(0, 2)].norm(), 1.0);
    }

    #[test]
    fn two_by_two_exchange() {
        let g = 0.013;
        let h = HamiltonianMatrix::from_real(&DMatrix::from_row_slice(2, 2, &[0.0, g, g, 0.0]));
        let es = eigensystem(&h).unwrap();
        assert!((es.values[0] + g).abs() < 1e-15);
        assert!((es.values[1] - g).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = DMatrix::<Complex64>::zeros(2, 2);
        m[(0, 1)] = Complex64::new(1.0, 0.0);
        let err = eigensystem(&HamiltonianMatrix { entries: m }).unwrap_err();
        assert_eq!(err.kind(), "non_hermitian");
    }

    #[test]
    fn blocks_of_a_permuted_block_matrix() {
        let mut m = DMatrix::<f64>::zeros(4, 4);
        m[(0, 2)] = 1.0;
        m[(2, 0)] = 1.0;
        m[(1, 3)] = 2.0;
        m[(3, 1)] = 2.0;
        assert_eq!(connected_blocks(&m), vec![vec![0, 2], vec![1, 3]]);
    }

    #[test]
    fn complex_path_on_genuinely_complex_input() {
        let mut m = DMatrix::<Complex64>::zeros(2, 2);
        m[(0, 1)] = Complex64::new(0.0, 0.5);
        m[(1, 0)] = Complex64::new(0.0, -0.5);
        let es = eigensystem(&HamiltonianMatrix { entries: m.clone() }).unwrap();
        assert!((es.values[0] + 0.5).abs() < 1e-14 && (es.values[1] - 0.5).abs() < 1e-14);
        let v = es.vectors.column(1);
        let r = &m * v - v * Complex64::new(0.5, 0.0);
        assert!(r.norm() < 1e-14);
    }
}
