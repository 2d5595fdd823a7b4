//! Reduced-order model assembly, projection and reconstruction, and the
//! compiled real-form evaluator used by the integrator.
//!
//! The reduced dynamics are
//!
//! `z_k' = lambda_k z_k + sum_ij D_kij z_i z_j + sum_ijl E_kijl z_i z_j z_l + (Psi^H B_g u)_k`
//!
//! in full-pair storage. For time marching the state is packed into `m`
//! reals: one entry per real mode and `(Re z, Im z)` per conjugate pair
//! representative. The conjugate member is never integrated; it is the
//! conjugate of its representative by construction.

use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{evaluate_residual, find_equilibrium, Equilibrium, Model, ModelDescriptor, StateVector, TrimOptions};
use crate::nmor::coeffs::{
    compute_bilinear_coefficients, compute_trilinear_coefficients, reduce_input_matrix, Tensor3, Tensor4,
};
use crate::nmor::eigen::{select_basis_with_inputs, EigenBasis, SelectionCriteria};
use crate::nmor::jacobian::{compute_gust_input_matrix, compute_jacobian, JacobianMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdMetadata {
    pub jacobian_step: f64,
    pub coefficient_step: f64,
    /// Step-halving change of the bilinear tensor, when computed.
    pub richardson_d: Option<f64>,
    /// Step-halving change of the trilinear tensor, when computed.
    pub richardson_e: Option<f64>,
    /// Residual evaluations spent on coefficient probing.
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RomModel {
    pub descriptor: ModelDescriptor,
    pub base_point: StateVector,
    pub order: u8,
    pub basis: EigenBasis,
    pub d: Option<Tensor3>,
    pub e: Option<Tensor4>,
    /// `psi_k^H B_g`, `m x n_disturbance_inputs`.
    pub bg_reduced: DMatrix<Complex64>,
    pub fd: FdMetadata,
}

impl RomModel {
    pub fn m(&self) -> usize {
        self.basis.m()
    }

    /// Reduced right-hand side in full-pair form.
    pub fn reduced_rhs(&self, z: &[Complex64], u_d: &[f64]) -> Vec<Complex64> {
        let m = self.m();
        let mut out: Vec<Complex64> = (0..m).map(|k| self.basis.lambdas[k] * z[k]).collect();
        for (k, o) in out.iter_mut().enumerate() {
            for (c, u) in u_d.iter().enumerate() {
                *o += self.bg_reduced[(k, c)] * u;
            }
            if let Some(d) = &self.d {
                for i in 0..m {
                    for j in 0..m {
                        *o += d.get(k, i, j) * z[i] * z[j];
                    }
                }
            }
            if let Some(e) = &self.e {
                for i in 0..m {
                    for j in 0..m {
                        for l in 0..m {
                            *o += e.get(k, i, j, l) * z[i] * z[j] * z[l];
                        }
                    }
                }
            }
        }
        out
    }
}

/// Combines a basis, optional coefficient tensors and the reduced input
/// matrix into a ROM of the given order.
#[allow(clippy::too_many_arguments)]
pub fn assemble_rom(
    descriptor: ModelDescriptor,
    base_point: StateVector,
    basis: EigenBasis,
    d: Option<Tensor3>,
    e: Option<Tensor4>,
    bg_reduced: DMatrix<Complex64>,
    order: u8,
    fd: FdMetadata,
) -> Result<RomModel> {
    let m = basis.m();
    match (order, d.is_some(), e.is_some()) {
        (1, false, false) | (2, true, false) | (3, true, true) => {}
        (1..=3, _, _) => {
            return Err(Error::contract(format!(
                "order {order} ROM needs {} (got D: {}, E: {})",
                ["no tensors", "D only", "D and E"][order as usize - 1],
                d.is_some(),
                e.is_some()
            )))
        }
        _ => return Err(Error::contract(format!("ROM order must be 1, 2 or 3, got {order}"))),
    }
    if d.as_ref().is_some_and(|t| t.dim() != m) || e.as_ref().is_some_and(|t| t.dim() != m) {
        return Err(Error::contract("coefficient tensors do not match the basis size"));
    }
    if bg_reduced.nrows() != m || bg_reduced.ncols() != descriptor.n_disturbance_inputs {
        return Err(Error::contract("reduced input matrix has the wrong shape"));
    }
    if base_point.len() != descriptor.n_states || basis.n() != descriptor.n_states {
        return Err(Error::contract("base point and basis must match the model state count"));
    }
    Ok(RomModel {
        descriptor,
        base_point,
        order,
        basis,
        d,
        e,
        bg_reduced,
        fd,
    })
}

/// `w0 + Phi z`, checked to be real.
pub fn reconstruct(rom: &RomModel, z: &[Complex64]) -> Result<StateVector> {
    let m = rom.m();
    if z.len() != m {
        return Err(Error::contract(format!("reduced state has {} entries, expected {m}", z.len())));
    }
    if let Some(k) = z.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NonFinite {
            index: k,
            context: "reconstruction input".into(),
        });
    }
    let n = rom.basis.n();
    let mut w = rom.base_point.as_slice().to_vec();
    let scale = 1.0 + z.iter().map(|v| v.norm()).sum::<f64>();
    for (i, wi) in w.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, zk) in z.iter().enumerate() {
            acc += rom.basis.phi[(i, k)] * zk;
        }
        if acc.im.abs() > 1e-12 * scale {
            return Err(Error::Consistency(format!(
                "reconstructed state entry {i} has imaginary part {:.3e}; the reduced state is not conjugate-consistent",
                acc.im
            )));
        }
        *wi += acc.re;
    }
    debug_assert_eq!(w.len(), n);
    StateVector::new(w)
}

/// `Psi^H (w - w0)`.
pub fn project(rom: &RomModel, w: &StateVector) -> Result<Vec<Complex64>> {
    if w.len() != rom.basis.n() {
        return Err(Error::contract("state length differs from the model"));
    }
    let dw: Vec<f64> = w
        .as_slice()
        .iter()
        .zip(rom.base_point.as_slice())
        .map(|(a, b)| a - b)
        .collect();
    Ok((0..rom.m())
        .map(|k| {
            dw.iter()
                .enumerate()
                .map(|(i, v)| rom.basis.psi[(i, k)].conj() * v)
                .sum()
        })
        .collect())
}

/// Packs a conjugate-consistent full-pair reduced state into `m` reals.
pub fn pack(basis: &EigenBasis, z: &[Complex64]) -> Vec<f64> {
    let mut y = Vec::with_capacity(basis.m());
    for k in basis.representatives() {
        y.push(z[k].re);
        if !basis.is_real(k) {
            y.push(z[k].im);
        }
    }
    y
}

/// Inverse of [`pack`].
pub fn unpack(basis: &EigenBasis, y: &[f64]) -> Vec<Complex64> {
    let mut z = vec![Complex64::new(0.0, 0.0); basis.m()];
    let mut p = 0;
    for k in basis.representatives() {
        if basis.is_real(k) {
            z[k] = Complex64::new(y[p], 0.0);
            p += 1;
        } else {
            z[k] = Complex64::new(y[p], y[p + 1]);
            z[basis.conj_index[k]] = z[k].conj();
            p += 2;
        }
    }
    z
}

/// Settings for [`build_rom`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RomBuildOptions {
    pub order: u8,
    pub selection: SelectionCriteria,
    /// Rank real modes by gust coupling (needs disturbance inputs).
    pub gust_coupling: bool,
    /// Step for the bilinear/trilinear stencils.
    pub fd_step: f64,
    /// Relative step for the Jacobian and gust input matrix.
    pub jacobian_step: f64,
    pub trim: TrimOptions,
}

impl Default for RomBuildOptions {
    fn default() -> Self {
        RomBuildOptions {
            order: 3,
            selection: SelectionCriteria::default(),
            gust_coupling: true,
            fd_step: 1e-3,
            jacobian_step: 1e-6,
            trim: TrimOptions::default(),
        }
    }
}

/// Output of the one-time ROM construction.
#[derive(Debug, Clone)]
pub struct RomBuild {
    pub rom: RomModel,
    pub equilibrium: Equilibrium,
    pub jacobian: JacobianMatrix,
    pub gust_input: DMatrix<f64>,
    /// Seconds spent on trim, linearization, selection and probing.
    pub build_time: f64,
}

/// Trim, linearize, select a basis, probe the coefficients and assemble.
pub fn build_rom(model: &dyn Model, opts: &RomBuildOptions) -> Result<RomBuild> {
    let start = Instant::now();
    let desc = model.descriptor().clone();
    if !(1..=3).contains(&opts.order) {
        return Err(Error::config("order", format!("ROM order must be 1, 2 or 3, got {}", opts.order)));
    }
    let equilibrium = find_equilibrium(
        model,
        &StateVector::zeros(desc.n_states),
        &vec![0.0; desc.n_control_inputs],
        &opts.trim,
    )?;
    if !equilibrium.converged {
        return Err(Error::Reduction(format!(
            "trim did not converge (residual {:.3e} after {} iterations)",
            equilibrium.residual_norm, equilibrium.iterations
        )));
    }
    let w0 = equilibrium.w0.clone();
    let jacobian = compute_jacobian(model, &w0, opts.jacobian_step)?;
    let gust_input = compute_gust_input_matrix(model, &w0, opts.jacobian_step)?;
    let coupling = (opts.gust_coupling && desc.n_disturbance_inputs > 0).then_some(&gust_input);
    let basis = select_basis_with_inputs(&jacobian, &opts.selection, coupling)?;

    let mut fd = FdMetadata {
        jacobian_step: opts.jacobian_step,
        coefficient_step: opts.fd_step,
        richardson_d: None,
        richardson_e: None,
        evaluations: 0,
    };
    let d = if opts.order >= 2 {
        let probed = compute_bilinear_coefficients(model, &basis, &w0, opts.fd_step)?;
        fd.richardson_d = Some(probed.richardson);
        fd.evaluations += probed.evaluations;
        Some(probed.tensor)
    } else {
        None
    };
    let e = if opts.order >= 3 {
        let probed = compute_trilinear_coefficients(model, &basis, &w0, opts.fd_step)?;
        fd.richardson_e = Some(probed.richardson);
        fd.evaluations += probed.evaluations;
        Some(probed.tensor)
    } else {
        None
    };
    let bg = reduce_input_matrix(&basis, &gust_input);
    let rom = assemble_rom(desc, w0, basis, d, e, bg, opts.order, fd)?;
    Ok(RomBuild {
        rom,
        equilibrium,
        jacobian,
        gust_input,
        build_time: start.elapsed().as_secs_f64(),
    })
}

/// Checks that `rom` was reduced from `model`: matching descriptor, a
/// base point that is still an equilibrium, and stored eigenpairs that
/// satisfy the model's Jacobian there.
pub fn check_rom_matches(model: &dyn Model, rom: &RomModel) -> Result<()> {
    if rom.descriptor != *model.descriptor() {
        return Err(Error::Consistency("ROM was built for a model with a different layout".into()));
    }
    let u_c = vec![0.0; rom.descriptor.n_control_inputs];
    let u_d = vec![0.0; rom.descriptor.n_disturbance_inputs];
    let r = evaluate_residual(model, &rom.base_point, &u_d, &u_c)?;
    let r_norm = r.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
    if r_norm > 1e-8 {
        return Err(Error::Consistency(format!(
            "ROM base point is not an equilibrium of this model (residual {r_norm:.3e})"
        )));
    }
    let jac = compute_jacobian(model, &rom.base_point, rom.fd.jacobian_step)?;
    let scale = rom.basis.lambdas.iter().map(|l| l.norm()).fold(1.0, f64::max);
    let res = rom.basis.eigen_residual(&jac.entries);
    if res > 1e-6 * scale {
        return Err(Error::Consistency(format!(
            "ROM modes are not eigenvectors of this model's Jacobian (residual {res:.3e})"
        )));
    }
    Ok(())
}

/// Real-form ROM compiled for fast evaluation.
///
/// Coefficients at or below ten times the step-halving change of their
/// tensor are indistinguishable from finite-difference noise and are
/// dropped; so are monomials left without any coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct RomSystem {
    dim: usize,
    n_inputs: usize,
    /// Quadratic monomials `y_p y_q`.
    quad: Vec<(usize, usize)>,
    /// Cubic monomials `y_p y_q y_r`.
    cubic: Vec<(usize, usize, usize)>,
    /// Row-major `rank x dim` projection `x = P y` of a factored cubic.
    proj: Vec<f64>,
    rank: usize,
    /// Cubic monomials `x_i x_j x_l` of a factored cubic.
    cubic_x: Vec<(usize, usize, usize)>,
    /// Column-major `dim x n_features` map from `[y, u, quad, cubic, cubic_x]`.
    matrix: Vec<f64>,
    base_point: Vec<f64>,
    recon: Vec<f64>,
    labels: Vec<String>,
}

/// [`RomSystem`] right-hand side with the packed dimension fixed at
/// compile time.
pub struct FixedRom<'a, const M: usize> {
    sys: &'a RomSystem,
    /// Linear part as `diag_r y_r + off_r y_{partner_r}`.
    diag: [f64; M],
    off: [f64; M],
    partner: [usize; M],
    /// Columns after the linear block.
    cols: &'a [[f64; M]],
    proj: &'a [[f64; M]],
    x: Vec<f64>,
    f: Vec<f64>,
}

impl<'a, const M: usize> FixedRom<'a, M> {
    /// `None` unless `sys.dim() == M`.
    pub fn new(sys: &'a RomSystem) -> Option<Self> {
        if sys.dim != M {
            return None;
        }
        let all = sys.matrix.as_chunks::<M>().0;
        let mut diag = [0.0; M];
        let mut off = [0.0; M];
        let mut partner = [0; M];
        for r in 0..M {
            diag[r] = all[r][r];
            partner[r] = r;
            for c in 0..M {
                if c != r && all[c][r] != 0.0 {
                    partner[r] = c;
                    off[r] = all[c][r];
                }
            }
        }
        Some(FixedRom {
            sys,
            diag,
            off,
            partner,
            cols: &all[M..],
            proj: sys.proj.as_chunks::<M>().0,
            x: vec![0.0; sys.rank],
            f: vec![0.0; all.len() - M],
        })
    }

    pub fn system(&self) -> &RomSystem {
        self.sys
    }

    #[inline]
    pub fn eval(&mut self, y: &[f64], u: &[f64], dy: &mut [f64]) {
        let y: &[f64; M] = y[..M].try_into().expect("state length");
        let sys = self.sys;
        let f = &mut self.f[..];
        let mut k = sys.n_inputs;
        f[..k].copy_from_slice(&u[..k]);
        for &(p, q) in &sys.quad {
            f[k] = y[p] * y[q];
            k += 1;
        }
        for &(p, q, r) in &sys.cubic {
            f[k] = y[p] * y[q] * y[r];
            k += 1;
        }
        if sys.rank > 0 {
            for (xi, row) in self.x.iter_mut().zip(self.proj) {
                let mut s = [0.0; 2];
                for a in 0..M {
                    s[a % 2] += row[a] * y[a];
                }
                *xi = s[0] + s[1];
            }
            let x = &self.x;
            for &(i, j, l) in &sys.cubic_x {
                f[k] = x[i] * x[j] * x[l];
                k += 1;
            }
        }
        // split accumulators keep the dependency chains short
        let mut lin = [0.0; M];
        for r in 0..M {
            lin[r] = self.diag[r] * y[r] + self.off[r] * y[self.partner[r]];
        }
        let (mut a0, mut a1) = ([0.0; M], [0.0; M]);
        let mut pairs = f.chunks_exact(2).zip(self.cols.chunks_exact(2));
        for (fk, col) in pairs.by_ref() {
            for r in 0..M {
                a0[r] += fk[0] * col[0][r];
                a1[r] += fk[1] * col[1][r];
            }
        }
        if f.len() % 2 == 1 {
            let (fk, col) = (f[f.len() - 1], &self.cols[f.len() - 1]);
            for r in 0..M {
                lin[r] += fk * col[r];
            }
        }
        let mut acc = [0.0; M];
        for r in 0..M {
            acc[r] = lin[r] + (a0[r] + a1[r]);
        }
        dy[..M].copy_from_slice(&acc);
    }
}

/// Cubic rewritten through a low-dimensional projection `x = P y`.
struct FactoredCubic {
    rank: usize,
    proj: Vec<f64>,
    terms: Vec<(usize, usize, usize)>,
    columns: Vec<Vec<f64>>,
}

/// Expansion of every full-pair mode over packed coordinates.
fn packed_expansion(basis: &EigenBasis) -> Vec<Vec<(usize, Complex64)>> {
    let mut ex = vec![Vec::new(); basis.m()];
    let one = Complex64::new(1.0, 0.0);
    let i_unit = Complex64::new(0.0, 1.0);
    let mut p = 0;
    for k in basis.representatives() {
        if basis.is_real(k) {
            ex[k] = vec![(p, one)];
            p += 1;
        } else {
            ex[k] = vec![(p, one), (p + 1, i_unit)];
            ex[basis.conj_index[k]] = vec![(p, one), (p + 1, -i_unit)];
            p += 2;
        }
    }
    ex
}

/// Packed output rows of a representative: `(row, take_imaginary)`.
fn output_rows(basis: &EigenBasis) -> Vec<(usize, Vec<(usize, bool)>)> {
    let mut rows = Vec::new();
    let mut p = 0;
    for k in basis.representatives() {
        if basis.is_real(k) {
            rows.push((k, vec![(p, false)]));
            p += 1;
        } else {
            rows.push((k, vec![(p, false), (p + 1, true)]));
            p += 2;
        }
    }
    rows
}

fn distinct_permutations(p: usize, q: usize, r: usize) -> Vec<(usize, usize, usize)> {
    let mut all = vec![(p, q, r), (p, r, q), (q, p, r), (q, r, p), (r, p, q), (r, q, p)];
    all.sort();
    all.dedup();
    all
}

impl RomSystem {
    pub fn compile(rom: &RomModel) -> Self {
        let basis = &rom.basis;
        let dim = basis.m();
        let ex = packed_expansion(basis);
        let rows = output_rows(basis);
        let pick = |v: Complex64, imag: bool| if imag { v.im } else { v.re };

        let pairs: Vec<(usize, usize)> = (0..dim).flat_map(|p| (p..dim).map(move |q| (p, q))).collect();

        // quadratic: Q_k[p][q] = sum_ij D_kij T_ip T_jq
        let mut quad = Vec::new();
        let mut quad_cols = Vec::new();
        if let Some(d) = &rom.d {
            let floor = 10.0 * rom.fd.richardson_d.unwrap_or(0.0);
            let mut q = vec![vec![Complex64::new(0.0, 0.0); dim * dim]; dim];
            for (k, _) in &rows {
                for i in 0..dim {
                    for j in 0..dim {
                        let c = d.get(*k, i, j);
                        if c == Complex64::new(0.0, 0.0) {
                            continue;
                        }
                        for &(p, cp) in &ex[i] {
                            for &(r, cr) in &ex[j] {
                                q[*k][p * dim + r] += c * cp * cr;
                            }
                        }
                    }
                }
            }
            for t in 0..pairs.len() {
                let (p, r) = pairs[t];
                let mut col = vec![0.0; dim];
                for (k, outs) in &rows {
                    let v = if p == r {
                        q[*k][p * dim + p]
                    } else {
                        q[*k][p * dim + r] + q[*k][r * dim + p]
                    };
                    for &(row, imag) in outs {
                        let x = pick(v, imag);
                        if x.abs() > floor {
                            col[row] = x;
                        }
                    }
                }
                if col.iter().any(|x| *x != 0.0) {
                    quad.push(pairs[t]);
                    quad_cols.push(col);
                }
            }
        }

        let mut cubic = Vec::new();
        let mut cubic_x = Vec::new();
        let mut proj = Vec::new();
        let mut rank = 0;
        let mut cubic_cols = Vec::new();
        if let Some(e) = &rom.e {
            let floor = 10.0 * rom.fd.richardson_e.unwrap_or(0.0);
            let idx = |p: usize, q: usize, r: usize| (p * dim + q) * dim + r;
            let mut w = vec![vec![Complex64::new(0.0, 0.0); dim * dim * dim]; dim];
            for (k, _) in &rows {
                for i in 0..dim {
                    for j in 0..dim {
                        for l in 0..dim {
                            let c = e.get(*k, i, j, l);
                            if c == Complex64::new(0.0, 0.0) {
                                continue;
                            }
                            for &(p, cp) in &ex[i] {
                                for &(q, cq) in &ex[j] {
                                    for &(r, cr) in &ex[l] {
                                        w[*k][idx(p, q, r)] += c * cp * cq * cr;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            let mut columns: Vec<((usize, usize, usize), Vec<f64>)> = Vec::new();
            for p in 0..dim {
                for q in p..dim {
                    for r in q..dim {
                        let mut col = vec![0.0; dim];
                        for (k, outs) in &rows {
                            let v: Complex64 = distinct_permutations(p, q, r)
                                .into_iter()
                                .map(|(a, b, c)| w[*k][idx(a, b, c)])
                                .sum();
                            for &(row, imag) in outs {
                                let x = pick(v, imag);
                                if x.abs() > floor {
                                    col[row] = x;
                                }
                            }
                        }
                        if col.iter().any(|x| *x != 0.0) {
                            columns.push(((p, q, r), col));
                        }
                    }
                }
            }
            if !columns.is_empty() {
                let direct_cost = columns.len() * (dim + 2);
                match factor_cubic(&columns, dim, floor) {
                    Some(f) if f.rank * dim + f.terms.len() * (dim + 2) < direct_cost => {
                        rank = f.rank;
                        proj = f.proj;
                        cubic_x = f.terms;
                        cubic_cols = f.columns;
                    }
                    _ => {
                        for (t, col) in columns {
                            cubic.push(t);
                            cubic_cols.push(col);
                        }
                    }
                }
            }
        }

        let n_inputs = rom.bg_reduced.ncols();
        let mut matrix = Vec::new();
        let mut linear = vec![vec![0.0; dim]; dim];
        for (k, outs) in &rows {
            let l = basis.lambdas[*k];
            let r = outs[0].0;
            linear[r][r] = l.re;
            if !basis.is_real(*k) {
                linear[r][r + 1] = l.im;
                linear[r + 1][r] = -l.im;
                linear[r + 1][r + 1] = l.re;
            }
        }
        for col in &linear {
            matrix.extend_from_slice(col);
        }
        for c in 0..n_inputs {
            let mut col = vec![0.0; dim];
            for (k, outs) in &rows {
                for &(row, imag) in outs {
                    col[row] = pick(rom.bg_reduced[(*k, c)], imag);
                }
            }
            matrix.extend_from_slice(&col);
        }
        for col in quad_cols.iter().chain(&cubic_cols) {
            matrix.extend_from_slice(col);
        }

        let n = basis.n();
        let mut recon = vec![0.0; n * dim];
        for (k, outs) in &rows {
            for i in 0..n {
                let phi = basis.phi[(i, *k)];
                if basis.is_real(*k) {
                    recon[i * dim + outs[0].0] = phi.re;
                } else {
                    recon[i * dim + outs[0].0] = 2.0 * phi.re;
                    recon[i * dim + outs[1].0] = -2.0 * phi.im;
                }
            }
        }

        RomSystem {
            dim,
            n_inputs,
            quad,
            cubic,
            proj,
            rank,
            cubic_x,
            matrix,
            base_point: rom.base_point.as_slice().to_vec(),
            recon,
            labels: rom.descriptor.state_labels.clone(),
        }
    }

    /// Packed state dimension, equal to the number of modes.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_states(&self) -> usize {
        self.base_point.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Number of retained quadratic and cubic monomials. Factored cubic
    /// monomials are counted in the projected coordinates.
    pub fn term_counts(&self) -> (usize, usize) {
        (self.quad.len(), self.cubic.len() + self.cubic_x.len())
    }

    /// Dimension of the subspace the cubic term acts through, when factored.
    pub fn cubic_rank(&self) -> Option<usize> {
        (self.rank > 0).then_some(self.rank)
    }

    /// Scratch space for [`RomSystem::eval`].
    pub fn workspace(&self) -> Vec<f64> {
        vec![0.0; self.matrix.len() / self.dim.max(1) + self.rank]
    }

    /// Packed right-hand side. `work` comes from [`RomSystem::workspace`].
    /// [`FixedRom`] is the faster form for repeated evaluation.
    pub fn eval(&self, y: &[f64], u: &[f64], dy: &mut [f64], work: &mut [f64]) {
        let m = self.dim;
        let ni = self.n_inputs;
        let (f, x) = work.split_at_mut(self.matrix.len() / m);
        f[..m].copy_from_slice(&y[..m]);
        f[m..m + ni].copy_from_slice(&u[..ni]);
        let mut o = m + ni;
        for &(p, q) in &self.quad {
            f[o] = y[p] * y[q];
            o += 1;
        }
        for &(p, q, r) in &self.cubic {
            f[o] = y[p] * y[q] * y[r];
            o += 1;
        }
        if self.rank > 0 {
            for (xi, row) in x.iter_mut().zip(self.proj.chunks_exact(m)) {
                *xi = row.iter().zip(y).map(|(a, b)| a * b).sum();
            }
            for &(i, j, l) in &self.cubic_x {
                f[o] = x[i] * x[j] * x[l];
                o += 1;
            }
        }
        let dy = &mut dy[..m];
        dy.fill(0.0);
        for (fc, col) in f.iter().zip(self.matrix.chunks_exact(m)) {
            for (d, c) in dy.iter_mut().zip(col) {
                *d += fc * c;
            }
        }
    }

    /// Physical value of state `index` for packed reduced state `y`.
    #[inline]
    pub fn reconstruct_entry(&self, index: usize, y: &[f64]) -> f64 {
        let row = &self.recon[index * self.dim..(index + 1) * self.dim];
        self.base_point[index] + row.iter().zip(y).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Full physical state for packed reduced state `y`.
    pub fn reconstruct_into(&self, y: &[f64], w: &mut [f64]) {
        for (i, wi) in w.iter_mut().enumerate() {
            *wi = self.reconstruct_entry(i, y);
        }
    }
}

/// Rewrites a dense cubic through the column space of its mode-1 unfolding.
/// Singular values at or below `floor` (coefficient noise) are discarded.
fn factor_cubic(columns: &[((usize, usize, usize), Vec<f64>)], dim: usize, floor: f64) -> Option<FactoredCubic> {
    let at = |row: usize, a: usize, b: usize, c: usize| ((row * dim + a) * dim + b) * dim + c;
    let mut s = vec![0.0; dim * dim * dim * dim];
    for ((p, q, r), col) in columns {
        let perms = distinct_permutations(*p, *q, *r);
        let np = perms.len() as f64;
        for (row, v) in col.iter().enumerate() {
            for &(a, b, c) in &perms {
                s[at(row, a, b, c)] = v / np;
            }
        }
    }
    let d2 = dim * dim;
    let unfold = DMatrix::from_fn(dim, dim * d2, |a, k| {
        let (row, bc) = (k / d2, k % d2);
        s[(row * dim + a) * d2 + bc]
    });
    let svd = unfold.svd(true, false);
    let u = svd.u?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    let top = sv[order[0]];
    if top == 0.0 {
        return None;
    }
    let tol = floor.max(1e-12 * top);
    let keep: Vec<usize> = order.into_iter().filter(|&i| sv[i] > tol).collect();
    let rank = keep.len();
    if rank >= dim {
        return None;
    }
    let a = DMatrix::from_fn(dim, rank, |i, k| u[(i, keep[k])]);

    // contract every slot with the retained basis
    let mut r = vec![0.0; dim * rank * rank * rank];
    for row in 0..dim {
        for i in 0..rank {
            for j in 0..rank {
                for l in 0..rank {
                    let mut acc = 0.0;
                    for p in 0..dim {
                        for q in 0..dim {
                            for t in 0..dim {
                                let v = s[at(row, p, q, t)];
                                if v != 0.0 {
                                    acc += v * a[(p, i)] * a[(q, j)] * a[(t, l)];
                                }
                            }
                        }
                    }
                    r[((row * rank + i) * rank + j) * rank + l] = acc;
                }
            }
        }
    }
    let mut terms = Vec::new();
    let mut cols = Vec::new();
    for i in 0..rank {
        for j in i..rank {
            for l in j..rank {
                let np = distinct_permutations(i, j, l).len() as f64;
                terms.push((i, j, l));
                cols.push((0..dim).map(|row| np * r[((row * rank + i) * rank + j) * rank + l]).collect());
            }
        }
    }
    let proj = (0..rank).flat_map(|k| (0..dim).map(move |i| (k, i))).map(|(k, i)| a[(i, k)]).collect();
    Some(FactoredCubic {
        rank,
        proj,
        terms,
        columns: cols,
    })
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_models::{DuffingModel, LinearModel, QuadraticModel};

    fn opts(order: u8, modes: usize) -> RomBuildOptions {
        RomBuildOptions {
            order,
            selection: SelectionCriteria {
                modes,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn order_tensor_mismatch() {
        let model = QuadraticModel::new([[-1.0, 0.5], [0.0, -2.0]]);
        let b = build_rom(&model, &opts(2, 2)).unwrap().rom;
        let r = assemble_rom(
            b.descriptor.clone(),
            b.base_point.clone(),
            b.basis.clone(),
            b.d.clone(),
            None,
            b.bg_reduced.clone(),
            1,
            b.fd.clone(),
        );
        assert!(matches!(r, Err(Error::Contract(_))));
        let r = assemble_rom(b.descriptor, b.base_point, b.basis, None, None, b.bg_reduced, 4, b.fd);
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn projector_properties() {
        let a = DMatrix::from_row_slice(3, 3, &[-0.1, 1.0, 0.0, -1.0, -0.1, 0.0, 0.3, 0.2, -2.0]);
        let model = LinearModel::new(a, DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 0.0])).unwrap();
        let rom = build_rom(&model, &opts(1, 2)).unwrap().rom;
        assert_eq!(rom.m(), 2);
        assert_eq!(reconstruct(&rom, &[Complex64::new(0.0, 0.0); 2]).unwrap(), rom.base_point);

        // a perturbation inside span(Phi)
        let z = [Complex64::new(0.3, -0.2), Complex64::new(0.3, 0.2)];
        let w = reconstruct(&rom, &z).unwrap();
        let back = reconstruct(&rom, &project(&rom, &w).unwrap()).unwrap();
        for i in 0..3 {
            assert!((w[i] - back[i]).abs() < 1e-10);
        }

        // the discarded mode's right eigenvector is annihilated by Psi^H
        let full = build_rom(&model, &opts(1, 3)).unwrap().rom;
        let k = (0..3).find(|&k| full.basis.is_real(k)).unwrap();
        let v: Vec<f64> = full.basis.phi.column(k).iter().map(|c| c.re).collect();
        let z = project(&rom, &StateVector::new(v).unwrap()).unwrap();
        assert!(z.iter().all(|c| c.norm() < 1e-10));
    }

    #[test]
    fn inconsistent_pair_rejected() {
        let model = DuffingModel::default();
        let rom = build_rom(&model, &opts(1, 2)).unwrap().rom;
        let z = [Complex64::new(0.1, 0.0), Complex64::new(0.5, 0.0)];
        assert!(matches!(reconstruct(&rom, &z), Err(Error::Consistency(_))));
    }

    #[test]
    fn compiled_matches_tensor_form() {
        let model = DuffingModel::default();
        let rom = build_rom(&model, &opts(3, 2)).unwrap().rom;
        let sys = RomSystem::compile(&rom);
        let y = [0.2, -0.4];
        let mut dy = [0.0; 2];
        let mut work = sys.workspace();
        sys.eval(&y, &[0.3], &mut dy, &mut work);
        let z = unpack(&rom.basis, &y);
        let want = pack(&rom.basis, &rom.reduced_rhs(&z, &[0.3]));
        for p in 0..2 {
            assert!((dy[p] - want[p]).abs() < 1e-12, "{dy:?} {want:?}");
        }
        // and with the full basis the ROM is the Duffing vector field itself
        let mut w = [0.0; 2];
        sys.reconstruct_into(&y, &mut w);
        let mut r = [0.0; 2];
        model.residual_into(&w, &[0.3], &[], &mut r);
        let mut dw = [0.0; 2];
        sys.reconstruct_into(&dy, &mut dw);
        for i in 0..2 {
            assert!((dw[i] - r[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn fixed_width_matches_dynamic() {
        let model = crate::aerofoil::AerofoilModel::new(crate::aerofoil::AerofoilParams::default()).unwrap();
        let mut o = crate::config::RomSection::default().build_options();
        o.order = 3;
        o.selection.modes = 4;
        let rom = build_rom(&model, &o).unwrap().rom;
        let sys = RomSystem::compile(&rom);
        let fixed = FixedRom::<4>::new(&sys).unwrap();
        let y = [0.01, -0.02, 0.015, 0.005];
        let mut a = [0.0; 4];
        let mut work = sys.workspace();
        sys.eval(&y, &[0.05], &mut a, &mut work);
        let mut fixed = fixed;
        let mut b = [0.0; 4];
        fixed.eval(&y, &[0.05], &mut b);
        for p in 0..4 {
            assert!((a[p] - b[p]).abs() < 1e-14 * (1.0 + a[p].abs()), "{a:?} {b:?}");
        }
    }

    #[test]
    fn pack_round_trip() {
        let model = DuffingModel::default();
        let rom = build_rom(&model, &opts(1, 2)).unwrap().rom;
        let y = [0.7, -0.25];
        assert_eq!(pack(&rom.basis, &unpack(&rom.basis, &y)), y);
    }
}
