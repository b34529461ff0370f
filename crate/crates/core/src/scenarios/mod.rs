//! Case-study builders and the affine map from game decisions to
//! auxiliary state/input targets.

mod opf;
mod thermal;

pub use opf::{build_opf, BusParams, OpfParams, OpfScenario};
pub use thermal::{build_thermal, ThermalParams, ThermalScenario, ThermalSystem, ZoneParams};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// x̄ = S w + s, ū = U w + v.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxLift {
    state_map: DMatrix<f64>,
    state_offset: DVector<f64>,
    input_map: DMatrix<f64>,
    input_offset: DVector<f64>,
}

impl AuxLift {
    pub fn new(
        state_map: DMatrix<f64>,
        state_offset: DVector<f64>,
        input_map: DMatrix<f64>,
        input_offset: DVector<f64>,
    ) -> Result<Self> {
        if state_map.nrows() != state_offset.len()
            || input_map.nrows() != input_offset.len()
            || state_map.ncols() != input_map.ncols()
        {
            return Err(Error::InvalidParameter("lift maps have inconsistent dimensions".into()));
        }
        Ok(AuxLift { state_map, state_offset, input_map, input_offset })
    }

    /// w is the stacked (x, u) itself.
    pub fn identity(state_dim: usize, inputs: usize) -> Self {
        let r = state_dim + inputs;
        let mut s = DMatrix::zeros(state_dim, r);
        let mut u = DMatrix::zeros(inputs, r);
        for k in 0..state_dim {
            s[(k, k)] = 1.0;
        }
        for k in 0..inputs {
            u[(k, state_dim + k)] = 1.0;
        }
        AuxLift { state_map: s, state_offset: DVector::zeros(state_dim), input_map: u, input_offset: DVector::zeros(inputs) }
    }

    pub fn decision_dim(&self) -> usize {
        self.state_map.ncols()
    }

    pub fn apply(&self, w: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let wv = DVector::from_column_slice(w);
        let x = &self.state_map * &wv + &self.state_offset;
        let u = &self.input_map * &wv + &self.input_offset;
        (x.as_slice().to_vec(), u.as_slice().to_vec())
    }
}
