//! Matrix-free finite-difference probing of the second and third derivatives
//! of the residual along the retained eigenvectors.
//!
//! Complex eigenvectors are split into real directions (`Re phi`, `Im phi`
//! of each representative, `phi` itself for real modes). Derivatives are
//! probed along those real directions and recombined by multilinearity.
//!
//! Bilinear terms use the central cross stencil
//!
//! `B(a, b) ~ [R(h(a+b)) - R(h(a-b)) - R(h(-a+b)) + R(-h(a+b))] / (4 h^2)`
//!
//! which cancels odd-order terms exactly, so cubic nonlinearities leave no
//! trace in the bilinear tensor. Trilinear terms use the eight-point
//! product-sign stencil `sum s1 s2 s3 R(h(s1 a + s2 b + s3 c)) / (8 h^3)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, StateVector};
use crate::nmor::eigen::EigenBasis;

/// Dense `m x m x m` complex tensor, `D[k][i][j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    m: usize,
    data: Vec<Complex64>,
}

impl Tensor3 {
    pub fn zeros(m: usize) -> Self {
        Tensor3 {
            m,
            data: vec![Complex64::new(0.0, 0.0); m * m * m],
        }
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> Complex64 {
        self.data[(k * self.m + i) * self.m + j]
    }

    #[inline]
    pub fn set(&mut self, k: usize, i: usize, j: usize, v: Complex64) {
        self.data[(k * self.m + i) * self.m + j] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }
}

/// Dense `m x m x m x m` complex tensor, `E[k][i][j][l]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor4 {
    m: usize,
    data: Vec<Complex64>,
}

impl Tensor4 {
    pub fn zeros(m: usize) -> Self {
        Tensor4 {
            m,
            data: vec![Complex64::new(0.0, 0.0); m * m * m * m],
        }
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize, l: usize) -> Complex64 {
        self.data[((k * self.m + i) * self.m + j) * self.m + l]
    }

    #[inline]
    pub fn set(&mut self, k: usize, i: usize, j: usize, l: usize, v: Complex64) {
        self.data[((k * self.m + i) * self.m + j) * self.m + l] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }
}

/// A coefficient tensor with its step-halving error estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Probed<T> {
    pub tensor: T,
    pub step: f64,
    /// `max |T(h) - T(h/2)|`.
    pub richardson: f64,
    pub evaluations: usize,
}

/// Real probing directions and the expansion of every mode over them.
struct Directions {
    vectors: Vec<Vec<f64>>,
    /// `phi_k = sum_(p, c) c * vectors[p]`
    expansion: Vec<Vec<(usize, Complex64)>>,
}

fn directions(basis: &EigenBasis) -> Directions {
    let m = basis.m();
    let mut vectors = Vec::with_capacity(m);
    let mut expansion = vec![Vec::new(); m];
    let one = Complex64::new(1.0, 0.0);
    let i_unit = Complex64::new(0.0, 1.0);
    for k in basis.representatives() {
        let col = basis.phi.column(k);
        let p = vectors.len();
        vectors.push(col.iter().map(|v| v.re).collect());
        if basis.is_real(k) {
            expansion[k] = vec![(p, one)];
        } else {
            vectors.push(col.iter().map(|v| v.im).collect());
            expansion[k] = vec![(p, one), (p + 1, i_unit)];
            expansion[basis.conj_index[k]] = vec![(p, one), (p + 1, -i_unit)];
        }
    }
    Directions { vectors, expansion }
}

struct Probe<'a> {
    model: &'a dyn Model,
    w0: &'a [f64],
    u_d: Vec<f64>,
    u_c: Vec<f64>,
}

impl Probe<'_> {
    /// Signed sum `sum_s weight(s) R(w0 + h sum_t s_t d_t)` over all sign
    /// patterns of the given directions, weighted by the product of signs.
    fn signed_sum(&self, dirs: &[&[f64]], h: f64) -> Result<Vec<f64>> {
        let n = self.w0.len();
        let mut acc = vec![0.0; n];
        let mut w = vec![0.0; n];
        let mut r = vec![0.0; n];
        for pattern in 0..(1u32 << dirs.len()) {
            let mut sign_product = 1.0;
            w.copy_from_slice(self.w0);
            for (t, d) in dirs.iter().enumerate() {
                let s = if pattern & (1 << t) == 0 { 1.0 } else { -1.0 };
                sign_product *= s;
                for (wi, di) in w.iter_mut().zip(d.iter()) {
                    *wi += s * h * di;
                }
            }
            self.model.residual_into(&w, &self.u_d, &self.u_c, &mut r);
            if let Some(index) = r.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    index,
                    context: "coefficient probing".into(),
                });
            }
            for (a, v) in acc.iter_mut().zip(&r) {
                *a += sign_product * v;
            }
        }
        Ok(acc)
    }
}

fn setup<'a>(model: &'a dyn Model, basis: &EigenBasis, w0: &'a StateVector, h: f64) -> Result<Probe<'a>> {
    let desc = model.descriptor();
    if w0.len() != desc.n_states || basis.n() != desc.n_states {
        return Err(Error::contract("basis and base point must match the model state count"));
    }
    if !(h > 0.0) {
        return Err(Error::contract("finite-difference step must be positive"));
    }
    Ok(Probe {
        model,
        w0: w0.as_slice(),
        u_d: vec![0.0; desc.n_disturbance_inputs],
        u_c: vec![0.0; desc.n_control_inputs],
    })
}

/// `psi_k^H v` for every representative `k`, indexed by mode.
fn project_reps(basis: &EigenBasis, v: &[f64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); basis.m()];
    for k in basis.representatives() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, vi) in v.iter().enumerate() {
            acc += basis.psi[(i, k)].conj() * vi;
        }
        out[k] = acc;
    }
    out
}

fn bilinear_at(probe: &Probe, basis: &EigenBasis, dirs: &Directions, h: f64) -> Result<Tensor3> {
    let nd = dirs.vectors.len();
    let pairs: Vec<(usize, usize)> = (0..nd).flat_map(|p| (p..nd).map(move |q| (p, q))).collect();
    let probed: Vec<Vec<Complex64>> = pairs
        .par_iter()
        .map(|&(p, q)| {
            let s = probe.signed_sum(&[&dirs.vectors[p], &dirs.vectors[q]], h)?;
            let b: Vec<f64> = s.iter().map(|v| v / (4.0 * h * h)).collect();
            Ok(project_reps(basis, &b))
        })
        .collect::<Result<_>>()?;

    let m = basis.m();
    // proj[(p, q)][k] = psi_k^H B(e_p, e_q)
    let mut proj = vec![vec![Complex64::new(0.0, 0.0); m]; nd * nd];
    for (&(p, q), v) in pairs.iter().zip(probed) {
        proj[q * nd + p] = v.clone();
        proj[p * nd + q] = v;
    }

    let mut d = Tensor3::zeros(m);
    for k in basis.representatives() {
        for i in 0..m {
            for j in i..m {
                let mut acc = Complex64::new(0.0, 0.0);
                for &(p, cp) in &dirs.expansion[i] {
                    for &(q, cq) in &dirs.expansion[j] {
                        acc += cp * cq * proj[p * nd + q][k];
                    }
                }
                let v = 0.5 * acc;
                d.set(k, i, j, v);
                d.set(k, j, i, v);
            }
        }
    }
    impose_conjugate_structure3(&mut d, basis);
    Ok(d)
}

fn impose_conjugate_structure3(d: &mut Tensor3, basis: &EigenBasis) {
    let m = basis.m();
    let c = &basis.conj_index;
    for k in basis.representatives() {
        if basis.is_real(k) {
            for i in 0..m {
                for j in i..m {
                    let v = 0.5 * (d.get(k, i, j) + d.get(k, c[i], c[j]).conj());
                    d.set(k, i, j, v);
                    d.set(k, j, i, v);
                    d.set(k, c[i], c[j], v.conj());
                    d.set(k, c[j], c[i], v.conj());
                }
            }
        } else {
            for i in 0..m {
                for j in 0..m {
                    let v = d.get(k, i, j).conj();
                    d.set(c[k], c[i], c[j], v);
                }
            }
        }
    }
}

/// Bilinear coefficients `D_kij = 1/2 psi_k^H B(phi_i, phi_j)`, with the
/// Taylor factor one half absorbed, so the reduced quadratic term reads
/// `sum_ij D_kij z_i z_j`.
pub fn compute_bilinear_coefficients(
    model: &dyn Model,
    basis: &EigenBasis,
    w0: &StateVector,
    fd_step: f64,
) -> Result<Probed<Tensor3>> {
    let probe = setup(model, basis, w0, fd_step)?;
    let dirs = directions(basis);
    let d = bilinear_at(&probe, basis, &dirs, fd_step)?;
    let d_half = bilinear_at(&probe, basis, &dirs, 0.5 * fd_step)?;
    let richardson = d
        .as_slice()
        .iter()
        .zip(d_half.as_slice())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let nd = dirs.vectors.len();
    Ok(Probed {
        tensor: d,
        step: fd_step,
        richardson,
        evaluations: 2 * 4 * nd * (nd + 1) / 2,
    })
}

fn trilinear_at(probe: &Probe, basis: &EigenBasis, dirs: &Directions, h: f64) -> Result<Tensor4> {
    let nd = dirs.vectors.len();
    let triples: Vec<(usize, usize, usize)> = (0..nd)
        .flat_map(|p| (p..nd).flat_map(move |q| (q..nd).map(move |r| (p, q, r))))
        .collect();
    let probed: Vec<Vec<Complex64>> = triples
        .par_iter()
        .map(|&(p, q, r)| {
            let s = probe.signed_sum(&[&dirs.vectors[p], &dirs.vectors[q], &dirs.vectors[r]], h)?;
            let c: Vec<f64> = s.iter().map(|v| v / (8.0 * h * h * h)).collect();
            Ok(project_reps(basis, &c))
        })
        .collect::<Result<_>>()?;

    let m = basis.m();
    let idx = |p: usize, q: usize, r: usize| (p * nd + q) * nd + r;
    let mut proj = vec![Vec::new(); nd * nd * nd];
    for (&(p, q, r), v) in triples.iter().zip(probed) {
        for (a, b, c) in permutations3(p, q, r) {
            proj[idx(a, b, c)] = v.clone();
        }
    }

    let mut e = Tensor4::zeros(m);
    for k in basis.representatives() {
        for i in 0..m {
            for j in i..m {
                for l in j..m {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for &(p, cp) in &dirs.expansion[i] {
                        for &(q, cq) in &dirs.expansion[j] {
                            for &(r, cr) in &dirs.expansion[l] {
                                acc += cp * cq * cr * proj[idx(p, q, r)][k];
                            }
                        }
                    }
                    let v = acc / 6.0;
                    for (a, b, c) in permutations3(i, j, l) {
                        e.set(k, a, b, c, v);
                    }
                }
            }
        }
    }
    impose_conjugate_structure4(&mut e, basis);
    Ok(e)
}

fn permutations3(a: usize, b: usize, c: usize) -> [(usize, usize, usize); 6] {
    [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
}

fn impose_conjugate_structure4(e: &mut Tensor4, basis: &EigenBasis) {
    let m = basis.m();
    let c = &basis.conj_index;
    for k in basis.representatives() {
        if basis.is_real(k) {
            for i in 0..m {
                for j in i..m {
                    for l in j..m {
                        let v = 0.5 * (e.get(k, i, j, l) + e.get(k, c[i], c[j], c[l]).conj());
                        for (a, b, d) in permutations3(i, j, l) {
                            e.set(k, a, b, d, v);
                            e.set(k, c[a], c[b], c[d], v.conj());
                        }
                    }
                }
            }
        } else {
            for i in 0..m {
                for j in 0..m {
                    for l in 0..m {
                        let v = e.get(k, i, j, l).conj();
                        e.set(c[k], c[i], c[j], c[l], v);
                    }
                }
            }
        }
    }
}

/// Trilinear coefficients `E_kijl = 1/6 psi_k^H C(phi_i, phi_j, phi_l)`,
/// symmetric under every permutation of `(i, j, l)`.
pub fn compute_trilinear_coefficients(
    model: &dyn Model,
    basis: &EigenBasis,
    w0: &StateVector,
    fd_step: f64,
) -> Result<Probed<Tensor4>> {
    let probe = setup(model, basis, w0, fd_step)?;
    let dirs = directions(basis);
    let e = trilinear_at(&probe, basis, &dirs, fd_step)?;
    let e_half = trilinear_at(&probe, basis, &dirs, 0.5 * fd_step)?;
    let richardson = e
        .as_slice()
        .iter()
        .zip(e_half.as_slice())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let nd = dirs.vectors.len();
    Ok(Probed {
        tensor: e,
        step: fd_step,
        richardson,
        evaluations: 2 * 8 * nd * (nd + 1) * (nd + 2) / 6,
    })
}

/// `psi^H B_g`, one column per disturbance channel.
pub fn reduce_input_matrix(basis: &EigenBasis, b_g: &DMatrix<f64>) -> DMatrix<Complex64> {
    let mut out = basis.psi.adjoint() * b_g.map(|v| Complex64::new(v, 0.0));
    for k in basis.representatives() {
        let c = basis.conj_index[k];
        if c != k {
            let row = out.row(k).map(|v| v.conj());
            out.set_row(c, &row);
        }
    }
    out
}
