//! Generic nonlinear state-space model contract `dw/dt = R(w, u_c, u_d)` and
//! the Newton trim solver built on top of it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nmor::jacobian::fd_jacobian;

/// Dimensions and channel names of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub n_states: usize,
    pub n_disturbance_inputs: usize,
    pub n_control_inputs: usize,
    pub state_labels: Vec<String>,
    /// True when time is measured in semichords travelled, `tau = t U / b`.
    pub nondimensional_time: bool,
}

impl ModelDescriptor {
    pub fn new(
        state_labels: Vec<String>,
        n_disturbance_inputs: usize,
        n_control_inputs: usize,
        nondimensional_time: bool,
    ) -> Result<Self> {
        if state_labels.is_empty() {
            return Err(Error::contract("a model needs at least one state"));
        }
        Ok(ModelDescriptor {
            n_states: state_labels.len(),
            n_disturbance_inputs,
            n_control_inputs,
            state_labels,
            nondimensional_time,
        })
    }

    /// Descriptor with generated labels `w0, w1, ...`.
    pub fn unlabelled(n_states: usize, n_disturbance_inputs: usize) -> Result<Self> {
        let labels = (0..n_states).map(|i| format!("w{i}")).collect();
        Self::new(labels, n_disturbance_inputs, 0, false)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.state_labels.iter().position(|l| l == label)
    }

    pub fn channel_indices(&self, labels: &[String]) -> Result<Vec<usize>> {
        labels
            .iter()
            .map(|l| {
                self.index_of(l)
                    .ok_or_else(|| Error::contract(format!("unknown channel `{l}`")))
            })
            .collect()
    }

    pub(crate) fn check_inputs(&self, w: usize, u_d: usize, u_c: usize) -> Result<()> {
        if w != self.n_states || u_d != self.n_disturbance_inputs || u_c != self.n_control_inputs {
            return Err(Error::contract(format!(
                "dimension mismatch: got (w={w}, u_d={u_d}, u_c={u_c}), expected ({}, {}, {})",
                self.n_states, self.n_disturbance_inputs, self.n_control_inputs
            )));
        }
        Ok(())
    }
}

/// Full-order state. All entries are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                index,
                context: "state construction".into(),
            });
        }
        Ok(StateVector(values))
    }

    pub fn zeros(n: usize) -> Self {
        StateVector(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm_inf(&self) -> f64 {
        norm_inf(&self.0)
    }
}

impl std::ops::Index<usize> for StateVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub(crate) fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// A first-order system `dw/dt = R(w, u_c, u_d)`.
///
/// Implementations are immutable after construction and `residual_into` must be
/// reentrant: it is called concurrently from the coefficient probing and the
/// sweep workers.
pub trait Model: Send + Sync {
    fn descriptor(&self) -> &ModelDescriptor;

    /// Writes `R(w, u_c, u_d)` into `out`. Callers guarantee that every slice
    /// has the length declared by the descriptor.
    fn residual_into(&self, w: &[f64], u_d: &[f64], u_c: &[f64], out: &mut [f64]);
}

/// Checked residual evaluation.
pub fn evaluate_residual(
    model: &dyn Model,
    w: &StateVector,
    u_d: &[f64],
    u_c: &[f64],
) -> Result<StateVector> {
    model
        .descriptor()
        .check_inputs(w.len(), u_d.len(), u_c.len())?;
    let mut out = vec![0.0; w.len()];
    model.residual_into(w.as_slice(), u_d, u_c, &mut out);
    if let Some(index) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            index,
            context: "residual evaluation".into(),
        });
    }
    Ok(StateVector(out))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrimOptions {
    /// Convergence threshold on the residual infinity norm.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    /// Relative Jacobian step; column `j` uses `fd_step * (1 + |w_j|)`.
    pub fd_step: f64,
}

impl Default for TrimOptions {
    fn default() -> Self {
        TrimOptions {
            tolerance: 1e-10,
            max_iterations: 50,
            max_halvings: 10,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub w0: StateVector,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Residual infinity norm before the first step and after every accepted step.
    pub residual_history: Vec<f64>,
}

/// Damped Newton iteration on `R(w, u_c, 0) = 0`.
///
/// Returns the best iterate even when the iteration budget runs out; only a
/// singular Newton matrix is an error.
pub fn find_equilibrium(
    model: &dyn Model,
    w_guess: &StateVector,
    u_c: &[f64],
    opts: &TrimOptions,
) -> Result<Equilibrium> {
    let desc = model.descriptor();
    let u_d = vec![0.0; desc.n_disturbance_inputs];
    desc.check_inputs(w_guess.len(), u_d.len(), u_c.len())?;

    let mut w = w_guess.as_slice().to_vec();
    let mut r = evaluate_residual(model, &StateVector(w.clone()), &u_d, u_c)?.into_inner();
    let mut r_norm = norm_inf(&r);
    let mut history = vec![r_norm];
    let mut iterations = 0;

    while r_norm > opts.tolerance && iterations < opts.max_iterations {
        iterations += 1;
        let jac = fd_jacobian(model, &w, &u_d, u_c, opts.fd_step)?;
        let rhs = DVector::from_column_slice(&r);
        let step = solve_newton(jac, rhs).ok_or_else(|| Error::Solver {
            iteration: iterations,
            message: "singular Jacobian in Newton step".into(),
        })?;

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = w.iter().zip(step.iter()).map(|(x, d)| x - alpha * d).collect();
            if let Ok(rt) = evaluate_residual(model, &StateVector(trial.clone()), &u_d, u_c) {
                let n = rt.norm_inf();
                if n < r_norm {
                    accepted = Some((trial, rt.into_inner(), n));
                    break;
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((wt, rt, n)) => {
                w = wt;
                r = rt;
                r_norm = n;
                history.push(n);
            }
            // no descent along the Newton direction; keep the best iterate
            None => break,
        }
    }

    Ok(Equilibrium {
        w0: StateVector(w),
        residual_norm: r_norm,
        converged: r_norm <= opts.tolerance,
        iterations,
        residual_history: history,
    })
}

fn solve_newton(jac: DMatrix<f64>, rhs: DVector<f64>) -> Option<DVector<f64>> {
    let scale = jac.amax().max(f64::MIN_POSITIVE);
    let lu = jac.lu();
    let u = lu.u();
    let min_pivot = u.diagonal().iter().fold(f64::INFINITY, |m, p| m.min(p.abs()));
    if min_pivot <= 1e-14 * scale {
        return None;
    }
    lu.solve(&rhs)
}
