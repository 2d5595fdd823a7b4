//! Central-difference linearization of a model about a base point.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, StateVector};

/// `dR/dw` at a base point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianMatrix {
    pub entries: DMatrix<f64>,
    pub base_point: StateVector,
    /// Relative step: column `j` is probed with `fd_step * (1 + |w_j|)`.
    pub fd_step: f64,
}

/// Column-wise central differences of `R` in the state, with disturbance and
/// control inputs held at `u_d`, `u_c`.
pub fn fd_jacobian(
    model: &dyn Model,
    w: &[f64],
    u_d: &[f64],
    u_c: &[f64],
    rel_step: f64,
) -> Result<DMatrix<f64>> {
    model.descriptor().check_inputs(w.len(), u_d.len(), u_c.len())?;
    if !(rel_step > 0.0) {
        return Err(Error::contract("finite-difference step must be positive"));
    }
    let n = w.len();
    let mut jac = DMatrix::zeros(n, n);
    let mut probe = w.to_vec();
    let mut r_plus = vec![0.0; n];
    let mut r_minus = vec![0.0; n];
    for j in 0..n {
        let h = rel_step * (1.0 + w[j].abs());
        probe[j] = w[j] + h;
        model.residual_into(&probe, u_d, u_c, &mut r_plus);
        probe[j] = w[j] - h;
        model.residual_into(&probe, u_d, u_c, &mut r_minus);
        probe[j] = w[j];
        for i in 0..n {
            let d = (r_plus[i] - r_minus[i]) / (2.0 * h);
            if !d.is_finite() {
                return Err(Error::NonFinite {
                    index: j,
                    context: format!("Jacobian column {j}"),
                });
            }
            jac[(i, j)] = d;
        }
    }
    Ok(jac)
}

/// Jacobian at `w0` with zero disturbance and control inputs.
pub fn compute_jacobian(model: &dyn Model, w0: &StateVector, fd_step: f64) -> Result<JacobianMatrix> {
    let desc = model.descriptor();
    let entries = fd_jacobian(
        model,
        w0.as_slice(),
        &vec![0.0; desc.n_disturbance_inputs],
        &vec![0.0; desc.n_control_inputs],
        fd_step,
    )?;
    Ok(JacobianMatrix {
        entries,
        base_point: w0.clone(),
        fd_step,
    })
}

/// `dR/du_d` at `w0`, one column per disturbance channel.
pub fn compute_gust_input_matrix(model: &dyn Model, w0: &StateVector, fd_step: f64) -> Result<DMatrix<f64>> {
    let desc = model.descriptor();
    let n_d = desc.n_disturbance_inputs;
    let u_c = vec![0.0; desc.n_control_inputs];
    desc.check_inputs(w0.len(), n_d, u_c.len())?;
    if !(fd_step > 0.0) {
        return Err(Error::contract("finite-difference step must be positive"));
    }
    let n = w0.len();
    let mut b = DMatrix::zeros(n, n_d);
    let mut u = vec![0.0; n_d];
    let mut r_plus = vec![0.0; n];
    let mut r_minus = vec![0.0; n];
    for c in 0..n_d {
        u[c] = fd_step;
        model.residual_into(w0.as_slice(), &u, &u_c, &mut r_plus);
        u[c] = -fd_step;
        model.residual_into(w0.as_slice(), &u, &u_c, &mut r_minus);
        u[c] = 0.0;
        for i in 0..n {
            let d = (r_plus[i] - r_minus[i]) / (2.0 * fd_step);
            if !d.is_finite() {
                return Err(Error::NonFinite {
                    index: c,
                    context: format!("gust input column {c}"),
                });
            }
            b[(i, c)] = d;
        }
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_models::{DuffingModel, LinearModel};

    #[test]
    fn linear_model_recovered() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.5, -1.5]);
        let m = LinearModel::new(a.clone(), b.clone()).unwrap();
        let w0 = StateVector::new(vec![0.3, -0.7]).unwrap();
        let j = compute_jacobian(&m, &w0, 1e-6).unwrap();
        assert!((j.entries - a).amax() < 1e-8);
        let bg = compute_gust_input_matrix(&m, &w0, 1e-6).unwrap();
        assert!((bg - b).amax() < 1e-8);
    }

    #[test]
    fn duffing_at_origin() {
        let j = compute_jacobian(&DuffingModel::default(), &StateVector::zeros(2), 1e-6).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!((j.entries - want).amax() < 1e-10);
    }

    #[test]
    fn zero_sensitivity_channel() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let m = LinearModel::new(a, b).unwrap();
        let bg = compute_gust_input_matrix(&m, &StateVector::zeros(2), 1e-6).unwrap();
        assert_eq!(bg.column(1).amax(), 0.0);
    }

    #[test]
    fn non_finite_names_column() {
        struct Blowup(crate::model::ModelDescriptor);
        impl Model for Blowup {
            fn descriptor(&self) -> &crate::model::ModelDescriptor {
                &self.0
            }
            fn residual_into(&self, w: &[f64], _: &[f64], _: &[f64], out: &mut [f64]) {
                out[0] = w[0];
                out[1] = if w[1] > 0.0 { f64::INFINITY } else { 0.0 };
            }
        }
        let m = Blowup(crate::model::ModelDescriptor::unlabelled(2, 0).unwrap());
        let err = compute_jacobian(&m, &StateVector::zeros(2), 1e-6).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1, .. }), "{err}");
    }
}
