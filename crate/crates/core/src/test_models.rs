//! Small analytic models used as oracles for the reduction machinery.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{Model, ModelDescriptor};

/// `R(w, u) = A w + B u`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    desc: ModelDescriptor,
}

impl LinearModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || b.nrows() != a.nrows() {
            return Err(Error::contract("A must be square and B must have as many rows as A"));
        }
        let desc = ModelDescriptor::unlabelled(a.nrows(), b.ncols())?;
        Ok(LinearModel { a, b, desc })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
}

impl Model for LinearModel {
    fn descriptor(&self) -> &ModelDescriptor {
        &self.desc
    }

    fn residual_into(&self, w: &[f64], u_d: &[f64], _u_c: &[f64], out: &mut [f64]) {
        let n = self.a.nrows();
        for (i, o) in out.iter_mut().enumerate().take(n) {
            let mut acc = 0.0;
            for (j, wj) in w.iter().enumerate() {
                acc += self.a[(i, j)] * wj;
            }
            for (j, uj) in u_d.iter().enumerate() {
                acc += self.b[(i, j)] * uj;
            }
            *o = acc;
        }
    }
}

/// Undamped Duffing oscillator `x' = v, v' = -x - x^3 + u`.
#[derive(Debug, Clone)]
pub struct DuffingModel {
    desc: ModelDescriptor,
}

impl Default for DuffingModel {
    fn default() -> Self {
        DuffingModel {
            desc: ModelDescriptor::new(vec!["x".into(), "v".into()], 1, 0, false)
                .expect("static labels"),
        }
    }
}

impl Model for DuffingModel {
    fn descriptor(&self) -> &ModelDescriptor {
        &self.desc
    }

    fn residual_into(&self, w: &[f64], u_d: &[f64], _u_c: &[f64], out: &mut [f64]) {
        let (x, v) = (w[0], w[1]);
        out[0] = v;
        out[1] = -x - x * x * x + u_d.first().copied().unwrap_or(0.0);
    }
}

/// `R(w) = A w + (w_0^2, 0)` on two states.
#[derive(Debug, Clone)]
pub struct QuadraticModel {
    a: [[f64; 2]; 2],
    desc: ModelDescriptor,
}

impl QuadraticModel {
    pub fn new(a: [[f64; 2]; 2]) -> Self {
        QuadraticModel {
            a,
            desc: ModelDescriptor::unlabelled(2, 1).expect("two states"),
        }
    }
}

impl Model for QuadraticModel {
    fn descriptor(&self) -> &ModelDescriptor {
        &self.desc
    }

    fn residual_into(&self, w: &[f64], u_d: &[f64], _u_c: &[f64], out: &mut [f64]) {
        let a = &self.a;
        out[0] = a[0][0] * w[0] + a[0][1] * w[1] + w[0] * w[0] + u_d[0];
        out[1] = a[1][0] * w[0] + a[1][1] * w[1];
    }
}

/// Linear oscillator `x'' + c x' + k x = 0`, used as a flutter surrogate when
/// the damping is driven negative by a parameter.
#[derive(Debug, Clone)]
pub struct OscillatorModel {
    pub stiffness: f64,
    pub damping: f64,
    desc: ModelDescriptor,
}

impl OscillatorModel {
    pub fn new(stiffness: f64, damping: f64) -> Self {
        OscillatorModel {
            stiffness,
            damping,
            desc: ModelDescriptor::new(vec!["x".into(), "v".into()], 0, 0, false)
                .expect("static labels"),
        }
    }
}

impl Model for OscillatorModel {
    fn descriptor(&self) -> &ModelDescriptor {
        &self.desc
    }

    fn residual_into(&self, w: &[f64], _u_d: &[f64], _u_c: &[f64], out: &mut [f64]) {
        out[0] = w[1];
        out[1] = -self.stiffness * w[0] - self.damping * w[1];
    }
}
