//! A circuit, a mode set and a truncation bundled with the derived basis.

use nalgebra::DMatrix;

use crate::circuit::{CircuitParams, ModeSet};
use crate::error::Result;
use crate::hilbert::{
    assemble_real, build_basis, check_qubit_frequency, CouplingUpdate, FockBasis, HamiltonianMatrix,
    TruncationSpec,
};
use crate::linalg::{assemble, block_eigen, BlockEigen, RealEigensystem};

#[derive(Debug, Clone)]
pub struct System {
    pub params: CircuitParams,
    pub modes: ModeSet,
    pub trunc: TruncationSpec,
    pub coupling_update: CouplingUpdate,
    basis: FockBasis,
    sectors: Vec<Vec<usize>>,
}

impl System {
    pub fn new(params: CircuitParams, modes: ModeSet, trunc: TruncationSpec) -> Result<Self> {
        params.validate()?;
        let basis = build_basis(&modes, &trunc)?;
        let sectors = basis.sectors(trunc.coupling_model);
        Ok(System { params, modes, trunc, coupling_update: CouplingUpdate::default(), basis, sectors })
    }

    pub fn with_coupling_update(mut self, update: CouplingUpdate) -> Self {
        self.coupling_update = update;
        self
    }

    pub fn basis(&self) -> &FockBasis {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn sectors(&self) -> &[Vec<usize>] {
        &self.sectors
    }

    pub fn real_hamiltonian(&self, f1: f64, f2: f64) -> Result<DMatrix<f64>> {
        check_qubit_frequency(f1)?;
        check_qubit_frequency(f2)?;
        Ok(assemble_real(
            &self.params,
            &self.modes,
            &self.basis,
            self.trunc.coupling_model,
            self.coupling_update,
            f1,
            f2,
        ))
    }

    pub fn hamiltonian(&self, f1: f64, f2: f64) -> Result<HamiltonianMatrix> {
        Ok(HamiltonianMatrix::from_real(&self.real_hamiltonian(f1, f2)?))
    }

    /// Per-sector eigenpairs of `H(f1, f2)`.
    pub fn block_eigen(&self, f1: f64, f2: f64) -> Result<Vec<BlockEigen>> {
        Ok(block_eigen(&self.real_hamiltonian(f1, f2)?, &self.sectors))
    }

    pub fn eigen(&self, f1: f64, f2: f64) -> Result<RealEigensystem> {
        Ok(assemble(&self.block_eigen(f1, f2)?, self.dim()))
    }
}
