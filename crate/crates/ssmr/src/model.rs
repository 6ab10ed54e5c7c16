//! Model file serialization.
//!
//! A learned model is one self-describing JSON document: dimensions, time
//! semantics, equilibria, explicit basis exponent lists, and every
//! coefficient matrix in row-major 15-significant-digit decimal text, plus
//! provenance hashes of the dataset manifest and the effective config.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::MultiIndexBasis;
use crate::control::SSMRModel;
use crate::data::EmbeddingSpec;
use crate::error::{Error, Result};
use crate::io::format_float;
use crate::ssm::{ReducedDynamics, SSMGeometry, TimeSemantics};

/// Row-major matrix as decimal text.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixRepr {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<String>,
}

impl MatrixRepr {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(format_float(m[(i, j)]));
            }
        }
        MatrixRepr {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        Self::from_matrix(&DMatrix::from_column_slice(v.len(), 1, v.as_slice()))
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::InvalidInput(format!(
                "matrix payload has {} entries for a {}x{} shape",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let s = &self.data[i * self.cols + j];
                m[(i, j)] = s.parse::<f64>().map_err(|_| {
                    Error::InvalidInput(format!("bad matrix entry '{s}'"))
                })?;
            }
        }
        Ok(m)
    }

    pub fn to_vector(&self) -> Result<DVector<f64>> {
        if self.cols != 1 {
            return Err(Error::InvalidInput(format!(
                "expected a column vector, got {}x{}",
                self.rows, self.cols
            )));
        }
        Ok(DVector::from_column_slice(self.to_matrix()?.as_slice()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub dataset_manifest_hash: String,
    pub config_hash: String,
}

/// On-disk model document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub reduced_dim: usize,
    pub observed_dim: usize,
    pub geometry_order: u32,
    pub dynamics_order: u32,
    pub time: TimeSemantics,
    pub sample_period: f64,
    pub training_amplitude: f64,
    pub embedding: EmbeddingSpec,
    pub equilibrium: MatrixRepr,
    pub performance_equilibrium: MatrixRepr,
    pub tangent_basis: MatrixRepr,
    pub linear_lift: MatrixRepr,
    pub nonlinear_lift: MatrixRepr,
    pub lift_exponents: Vec<Vec<u32>>,
    pub reduced_linear: MatrixRepr,
    pub reduced_nonlinear: MatrixRepr,
    pub dynamics_exponents: Vec<Vec<u32>>,
    pub control_matrix: MatrixRepr,
    pub performance_matrix: MatrixRepr,
    pub provenance: Provenance,
}

fn basis_from_exponents(n: usize, exponents: Vec<Vec<u32>>) -> Result<MultiIndexBasis> {
    if exponents.is_empty() {
        return Ok(MultiIndexBasis::empty(n));
    }
    let min_order = exponents
        .iter()
        .map(|e| e.iter().sum::<u32>())
        .min()
        .unwrap();
    let max_order = exponents
        .iter()
        .map(|e| e.iter().sum::<u32>())
        .max()
        .unwrap();
    let rebuilt = crate::basis::build_basis(n, min_order, max_order)?;
    if rebuilt.exponents() != exponents.as_slice() {
        return Err(Error::InvalidInput(
            "model basis exponents are not in canonical order".into(),
        ));
    }
    rebuilt.validate()?;
    Ok(rebuilt)
}

impl ModelFile {
    pub fn from_model(model: &SSMRModel, provenance: Provenance) -> Self {
        let geometry_order = if model.geometry.lift_basis.is_empty() {
            1
        } else {
            model.geometry.lift_basis.max_order()
        };
        let dynamics_order = if model.dynamics.basis.is_empty() {
            1
        } else {
            model.dynamics.basis.max_order()
        };
        ModelFile {
            reduced_dim: model.reduced_dim(),
            observed_dim: model.observed_dim(),
            geometry_order,
            dynamics_order,
            time: model.dynamics.time,
            sample_period: model.sample_period,
            training_amplitude: model.training_amplitude,
            embedding: model.embedding,
            equilibrium: MatrixRepr::from_vector(&model.geometry.equilibrium),
            performance_equilibrium: MatrixRepr::from_vector(&model.performance_equilibrium),
            tangent_basis: MatrixRepr::from_matrix(&model.geometry.tangent_basis),
            linear_lift: MatrixRepr::from_matrix(&model.geometry.linear_lift),
            nonlinear_lift: MatrixRepr::from_matrix(&model.geometry.nonlinear_lift),
            lift_exponents: model.geometry.lift_basis.exponents().to_vec(),
            reduced_linear: MatrixRepr::from_matrix(&model.dynamics.linear),
            reduced_nonlinear: MatrixRepr::from_matrix(&model.dynamics.nonlinear),
            dynamics_exponents: model.dynamics.basis.exponents().to_vec(),
            control_matrix: MatrixRepr::from_matrix(&model.control_matrix),
            performance_matrix: MatrixRepr::from_matrix(&model.performance_matrix),
            provenance,
        }
    }

    pub fn into_model(self) -> Result<SSMRModel> {
        let n = self.reduced_dim;
        let geometry = SSMGeometry {
            tangent_basis: self.tangent_basis.to_matrix()?,
            linear_lift: self.linear_lift.to_matrix()?,
            nonlinear_lift: self.nonlinear_lift.to_matrix()?,
            lift_basis: basis_from_exponents(n, self.lift_exponents)?,
            equilibrium: self.equilibrium.to_vector()?,
        };
        let dynamics = ReducedDynamics {
            linear: self.reduced_linear.to_matrix()?,
            nonlinear: self.reduced_nonlinear.to_matrix()?,
            basis: basis_from_exponents(n, self.dynamics_exponents)?,
            time: self.time,
        };
        let mut model = crate::control::assemble_model(
            geometry,
            dynamics,
            self.control_matrix.to_matrix()?,
            self.performance_matrix.to_matrix()?,
            self.performance_equilibrium.to_vector()?,
            self.embedding,
            self.sample_period,
        )?;
        model.training_amplitude = self.training_amplitude;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Saves a model with provenance stamps.
pub fn save_model(model: &SSMRModel, provenance: Provenance, path: &Path) -> Result<()> {
    ModelFile::from_model(model, provenance).save(path)
}

/// Loads and revalidates a model document.
pub fn load_model(path: &Path) -> Result<SSMRModel> {
    ModelFile::load(path)?.into_model()
}
