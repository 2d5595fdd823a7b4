//! Eigendecomposition of the trim Jacobian and systematic selection of the
//! projection basis.
//!
//! Modes are kept in full-pair form: every complex eigenvalue is stored next
//! to its conjugate, and `conj_index` maps each mode to its partner (real
//! modes map to themselves). Conjugate members are exact conjugates of their
//! representative, so reduced trajectories started from a real perturbation
//! stay conjugate-consistent.

use std::fmt;

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nmor::jacobian::JacobianMatrix;

/// Eigenvalues of a real square matrix from its real Schur form.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if !a.is_square() {
        return Err(Error::contract("eigenvalues need a square matrix"));
    }
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Solver {
            iteration: 100_000,
            message: "Schur decomposition did not converge".into(),
        })?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Basis selection thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionCriteria {
    /// Requested number of modes, counting both members of a conjugate pair.
    pub modes: usize,
    /// Real eigenvalues with `|lambda|` at or below this radius are retained
    /// first. `None` uses `0.05 * max |lambda|`.
    pub origin_radius: Option<f64>,
    /// Complex pairs with damping ratio at or below this value are ranked as
    /// lightly damped structural modes.
    pub max_damping: f64,
    /// Optional ceiling on `|Im lambda|` for lightly damped pairs.
    pub max_frequency: Option<f64>,
    /// Real modes whose normalized gust coupling `|Psi^H B_g| / |B_g|`
    /// reaches this value are ranked as gust-coupled. Needs the gust input
    /// matrix.
    pub gust_coupling_min: f64,
    /// Eigenvalues closer than `cluster_tol * max(1, max |lambda|)` are
    /// treated as one repeated eigenvalue.
    pub cluster_tol: f64,
}

impl Default for SelectionCriteria {
    fn default() -> Self {
        SelectionCriteria {
            modes: 4,
            origin_radius: None,
            max_damping: 0.2,
            max_frequency: None,
            gust_coupling_min: 0.1,
            cluster_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeTag {
    /// Real eigenvalue: rigid-body, aerodynamic lag or gust-entry dynamics.
    RigidBodyOrGust,
    /// Oscillatory structural mode.
    Structural,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionReason {
    NearOrigin,
    LightlyDamped,
    GustCoupled,
    /// Added after the ranked groups ran out, slowest decay first.
    Fill,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRecord {
    pub lambda: Complex64,
    pub damping_ratio: f64,
    pub frequency: f64,
    pub tag: ModeTag,
    pub reason: SelectionReason,
    pub gust_coupling: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub requested: usize,
    pub retained: usize,
    pub origin_radius: f64,
    pub max_damping: f64,
    pub max_frequency: Option<f64>,
    pub modes: Vec<ModeRecord>,
    /// Full Jacobian spectrum, for diagnostics.
    pub spectrum: Vec<Complex64>,
    pub warnings: Vec<String>,
}

impl fmt::Display for SelectionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "modes requested {}, retained {} (origin radius {:.4e}, max damping {}, max frequency {})",
            self.requested,
            self.retained,
            self.origin_radius,
            self.max_damping,
            self.max_frequency.map_or("none".to_string(), |v| v.to_string()),
        )?;
        for (k, r) in self.modes.iter().enumerate() {
            write!(
                f,
                "  [{k}] lambda = {:+.6e} {:+.6e}i  zeta = {:.4}  {:?} / {:?}",
                r.lambda.re, r.lambda.im, r.damping_ratio, r.tag, r.reason
            )?;
            if let Some(c) = r.gust_coupling {
                write!(f, "  gust coupling {c:.3}")?;
            }
            writeln!(f)?;
        }
        for w in &self.warnings {
            writeln!(f, "  warning: {w}")?;
        }
        Ok(())
    }
}

/// Retained eigenvalues with biorthonormal right (`phi`) and left (`psi`)
/// eigenvectors, `psi^H phi = I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenBasis {
    pub lambdas: Vec<Complex64>,
    pub phi: DMatrix<Complex64>,
    pub psi: DMatrix<Complex64>,
    pub conj_index: Vec<usize>,
    pub report: SelectionReport,
}

impl EigenBasis {
    /// Validates pair structure (each complex mode followed by its exact
    /// conjugate) and derives `conj_index`.
    pub fn from_parts(
        lambdas: Vec<Complex64>,
        phi: DMatrix<Complex64>,
        psi: DMatrix<Complex64>,
        report: SelectionReport,
    ) -> Result<Self> {
        let m = lambdas.len();
        if phi.ncols() != m || psi.ncols() != m || phi.nrows() != psi.nrows() {
            return Err(Error::contract("basis matrices do not match the eigenvalue count"));
        }
        let mut conj_index = vec![0; m];
        let mut k = 0;
        while k < m {
            if lambdas[k].im == 0.0 {
                conj_index[k] = k;
                k += 1;
            } else {
                if lambdas[k].im < 0.0 || k + 1 >= m || lambdas[k + 1] != lambdas[k].conj() {
                    return Err(Error::Consistency(format!(
                        "mode {k} is complex but not followed by its conjugate"
                    )));
                }
                conj_index[k] = k + 1;
                conj_index[k + 1] = k;
                k += 2;
            }
        }
        Ok(EigenBasis {
            lambdas,
            phi,
            psi,
            conj_index,
            report,
        })
    }

    pub fn m(&self) -> usize {
        self.lambdas.len()
    }

    pub fn n(&self) -> usize {
        self.phi.nrows()
    }

    pub fn is_real(&self, k: usize) -> bool {
        self.conj_index[k] == k
    }

    /// Real modes and the first member of each pair, in basis order.
    pub fn representatives(&self) -> Vec<usize> {
        (0..self.m()).filter(|&k| self.conj_index[k] >= k).collect()
    }

    /// `max |psi^H phi - I|`.
    pub fn biorthonormality_error(&self) -> f64 {
        let g = self.psi.adjoint() * &self.phi;
        let mut err: f64 = 0.0;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((g[(i, j)] - target).norm());
            }
        }
        err
    }

    /// `max_k |A phi_k - lambda_k phi_k| / |phi_k|`.
    pub fn eigen_residual(&self, a: &DMatrix<f64>) -> f64 {
        let ac = a.map(|v| Complex64::new(v, 0.0));
        let mut worst: f64 = 0.0;
        for k in 0..self.m() {
            let p = self.phi.column(k);
            let r = &ac * p - p * self.lambdas[k];
            worst = worst.max(r.norm() / p.norm());
        }
        worst
    }
}

fn damping_ratio(l: Complex64) -> f64 {
    let mag = l.norm();
    if mag == 0.0 {
        0.0
    } else {
        -l.re / mag
    }
}

/// A selectable unit: a (possibly repeated) real eigenvalue, or a (possibly
/// repeated) conjugate pair represented by its upper half-plane member.
#[derive(Debug, Clone)]
struct Unit {
    lambda: Complex64,
    multiplicity: usize,
    vectors: std::result::Result<(DMatrix<Complex64>, DMatrix<Complex64>), String>,
}

impl Unit {
    fn is_real(&self) -> bool {
        self.lambda.im == 0.0
    }

    fn size(&self) -> usize {
        if self.is_real() {
            self.multiplicity
        } else {
            2 * self.multiplicity
        }
    }
}

/// Groups eigenvalues into repeated clusters and snaps near-real values to
/// the real axis.
fn cluster(spectrum: &[Complex64], tol: f64) -> Vec<(Complex64, usize)> {
    let snapped: Vec<Complex64> = spectrum
        .iter()
        .map(|l| if l.im.abs() <= tol { Complex64::new(l.re, 0.0) } else { *l })
        .collect();
    let n = snapped.len();
    let mut label: Vec<usize> = (0..n).collect();
    // single linkage by repeated relabelling; n is small
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..n {
            for j in (i + 1)..n {
                if (snapped[i] - snapped[j]).norm() <= tol && label[i] != label[j] {
                    let (lo, hi) = (label[i].min(label[j]), label[i].max(label[j]));
                    for l in label.iter_mut() {
                        if *l == hi {
                            *l = lo;
                        }
                    }
                    changed = true;
                }
            }
        }
    }
    let mut groups: Vec<(Complex64, usize)> = Vec::new();
    let mut seen: Vec<usize> = Vec::new();
    for i in 0..n {
        if seen.contains(&label[i]) {
            continue;
        }
        seen.push(label[i]);
        let members: Vec<Complex64> = (0..n).filter(|&j| label[j] == label[i]).map(|j| snapped[j]).collect();
        let k = members.len();
        let mean = members.iter().sum::<Complex64>() / k as f64;
        let mean = if members.iter().all(|l| l.im == 0.0) {
            Complex64::new(mean.re, 0.0)
        } else {
            mean
        };
        groups.push((mean, k));
    }
    groups.sort_by(|a, b| {
        a.0.re
            .total_cmp(&b.0.re)
            .then(a.0.im.total_cmp(&b.0.im))
    });
    groups
}

fn sorted_indices_ascending(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    idx
}

/// Unit-norm columns with the largest-magnitude entry made real and positive.
fn normalize_right(phi: &mut DMatrix<Complex64>) {
    for mut col in phi.column_iter_mut() {
        let norm = col.norm();
        let pivot = col
            .iter()
            .copied()
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .unwrap_or(Complex64::new(1.0, 0.0));
        let phase = if pivot.norm() > 0.0 { pivot.conj() / pivot.norm() } else { Complex64::new(1.0, 0.0) };
        for v in col.iter_mut() {
            *v = *v * phase / norm;
        }
    }
}

/// Null-space eigenvectors of `A - lambda I` for a cluster of the given
/// multiplicity, biorthonormalized.
fn cluster_vectors(
    a: &DMatrix<f64>,
    lambda: Complex64,
    multiplicity: usize,
    null_tol: f64,
) -> std::result::Result<(DMatrix<Complex64>, DMatrix<Complex64>), String> {
    let n = a.nrows();
    let k = multiplicity;
    let (mut phi, psi, sigmas) = if lambda.im == 0.0 {
        let shifted = a - DMatrix::<f64>::identity(n, n) * lambda.re;
        let svd = shifted.svd(true, true);
        let (u, v_t) = (svd.u.ok_or("SVD failed")?, svd.v_t.ok_or("SVD failed")?);
        let s: Vec<f64> = svd.singular_values.iter().copied().collect();
        let order = sorted_indices_ascending(&s);
        let phi = DMatrix::from_fn(n, k, |i, c| Complex64::new(v_t[(order[c], i)], 0.0));
        let psi = DMatrix::from_fn(n, k, |i, c| Complex64::new(u[(i, order[c])], 0.0));
        (phi, psi, order.iter().map(|&i| s[i]).collect::<Vec<_>>())
    } else {
        let shifted = a.map(|v| Complex64::new(v, 0.0)) - DMatrix::<Complex64>::identity(n, n) * lambda;
        let svd = shifted.svd(true, true);
        let (u, v_t) = (svd.u.ok_or("SVD failed")?, svd.v_t.ok_or("SVD failed")?);
        let s: Vec<f64> = svd.singular_values.iter().copied().collect();
        let order = sorted_indices_ascending(&s);
        let phi = DMatrix::from_fn(n, k, |i, c| v_t[(order[c], i)].conj());
        let psi = DMatrix::from_fn(n, k, |i, c| u[(i, order[c])]);
        (phi, psi, order.iter().map(|&i| s[i]).collect::<Vec<_>>())
    };
    if sigmas[k - 1] > null_tol {
        return Err(format!(
            "eigenvalue {lambda} of algebraic multiplicity {k} has geometric multiplicity {} (defective)",
            sigmas.iter().take_while(|&&s| s <= null_tol).count()
        ));
    }
    normalize_right(&mut phi);
    let g = psi.adjoint() * &phi;
    let g_svd = g.clone().svd(false, false);
    let g_min = g_svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    if g_min < 1e-8 {
        return Err(format!(
            "left and right eigenvectors of {lambda} are nearly orthogonal (defective)"
        ));
    }
    let g_inv_h = g
        .try_inverse()
        .ok_or_else(|| format!("cannot biorthonormalize eigenvectors of {lambda}"))?
        .adjoint();
    let psi = psi * g_inv_h;
    Ok((phi, psi))
}

/// Selection with no gust input information.
pub fn select_basis(jac: &JacobianMatrix, criteria: &SelectionCriteria) -> Result<EigenBasis> {
    select_basis_with_inputs(jac, criteria, None)
}

/// Full eigendecomposition of the Jacobian and selection of `criteria.modes`
/// modes, in priority order:
///
/// 1. real eigenvalues inside the origin radius, nearest first;
/// 2. complex pairs with damping ratio `<= max_damping` (and frequency
///    `<= max_frequency` when set), least damped first;
/// 3. real eigenvalues with gust coupling `>= gust_coupling_min`, ranked by
///    modal static gain `coupling / |lambda|`;
/// 4. anything left, slowest decay first.
///
/// Conjugate pairs and repeated clusters are atomic; when the last unit
/// overshoots the request the basis is rounded up and a warning recorded.
pub fn select_basis_with_inputs(
    jac: &JacobianMatrix,
    criteria: &SelectionCriteria,
    gust_input: Option<&DMatrix<f64>>,
) -> Result<EigenBasis> {
    let a = &jac.entries;
    let n = a.nrows();
    let m_req = criteria.modes;
    if m_req == 0 {
        return Err(Error::contract("at least one mode must be requested"));
    }
    if m_req > n {
        return Err(Error::contract(format!("requested {m_req} modes from a {n}-state model")));
    }
    if let Some(b) = gust_input {
        if b.nrows() != n {
            return Err(Error::contract("gust input matrix row count differs from the state count"));
        }
    }

    let spectrum = eigenvalues(a)?;
    let lambda_max = spectrum.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let scale = lambda_max.max(1.0);
    let tol = criteria.cluster_tol * scale;
    let null_tol = 1e-7 * a.amax().max(1.0);
    let origin_radius = criteria.origin_radius.unwrap_or(0.05 * lambda_max);

    let units: Vec<Unit> = cluster(&spectrum, tol)
        .into_iter()
        .filter(|(l, _)| l.im >= 0.0)
        .map(|(lambda, multiplicity)| Unit {
            lambda,
            multiplicity,
            vectors: cluster_vectors(a, lambda, multiplicity, null_tol),
        })
        .collect();

    let coupling: Vec<Option<f64>> = units
        .iter()
        .map(|u| {
            let b = gust_input?;
            let b_norm = b.norm();
            if b_norm == 0.0 {
                return Some(0.0);
            }
            let (_, psi) = u.vectors.as_ref().ok()?;
            let bc = b.map(|v| Complex64::new(v, 0.0));
            Some((psi.adjoint() * bc).norm() / b_norm)
        })
        .collect();

    let mut ranked: Vec<(usize, SelectionReason)> = Vec::new();
    let mut near: Vec<usize> = (0..units.len())
        .filter(|&i| units[i].is_real() && units[i].lambda.norm() <= origin_radius)
        .collect();
    near.sort_by(|&x, &y| units[x].lambda.norm().total_cmp(&units[y].lambda.norm()));
    ranked.extend(near.iter().map(|&i| (i, SelectionReason::NearOrigin)));

    let mut light: Vec<usize> = (0..units.len())
        .filter(|&i| {
            let u = &units[i];
            !u.is_real()
                && damping_ratio(u.lambda) <= criteria.max_damping
                && criteria.max_frequency.is_none_or(|f| u.lambda.im.abs() <= f)
        })
        .collect();
    light.sort_by(|&x, &y| damping_ratio(units[x].lambda).total_cmp(&damping_ratio(units[y].lambda)));
    ranked.extend(light.iter().map(|&i| (i, SelectionReason::LightlyDamped)));

    if gust_input.is_some() {
        let gain = |i: usize| coupling[i].unwrap_or(0.0) / units[i].lambda.norm().max(f64::MIN_POSITIVE);
        let mut gusty: Vec<usize> = (0..units.len())
            .filter(|&i| {
                units[i].is_real()
                    && !ranked.iter().any(|(j, _)| *j == i)
                    && coupling[i].is_some_and(|c| c >= criteria.gust_coupling_min)
            })
            .collect();
        gusty.sort_by(|&x, &y| gain(y).total_cmp(&gain(x)));
        ranked.extend(gusty.iter().map(|&i| (i, SelectionReason::GustCoupled)));
    }

    let mut rest: Vec<usize> = (0..units.len())
        .filter(|&i| !ranked.iter().any(|(j, _)| *j == i))
        .collect();
    rest.sort_by(|&x, &y| units[x].lambda.re.abs().total_cmp(&units[y].lambda.re.abs()));
    ranked.extend(rest.iter().map(|&i| (i, SelectionReason::Fill)));

    let mut chosen: Vec<(usize, SelectionReason)> = Vec::new();
    let mut count = 0;
    for (i, reason) in ranked {
        if count >= m_req {
            break;
        }
        chosen.push((i, reason));
        count += units[i].size();
    }

    let mut warnings = Vec::new();
    if count > m_req {
        let msg = format!(
            "requested {m_req} modes but conjugate pairs and repeated eigenvalues are kept whole; retaining {count}"
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let mut lambdas = Vec::with_capacity(count);
    let mut records = Vec::with_capacity(count);
    let mut phi = DMatrix::<Complex64>::zeros(n, count);
    let mut psi = DMatrix::<Complex64>::zeros(n, count);
    let mut col = 0;
    for (i, reason) in chosen {
        let u = &units[i];
        let (up, uq) = u.vectors.as_ref().map_err(|msg| {
            Error::Reduction(format!("{msg}; choose a different number of modes"))
        })?;
        let record = |lambda: Complex64| ModeRecord {
            lambda,
            damping_ratio: damping_ratio(lambda),
            frequency: lambda.im.abs(),
            tag: if u.is_real() { ModeTag::RigidBodyOrGust } else { ModeTag::Structural },
            reason,
            gust_coupling: coupling[i],
        };
        for c in 0..u.multiplicity {
            phi.set_column(col, &up.column(c));
            psi.set_column(col, &uq.column(c));
            lambdas.push(u.lambda);
            records.push(record(u.lambda));
            col += 1;
            if !u.is_real() {
                phi.set_column(col, &up.column(c).map(|v| v.conj()));
                psi.set_column(col, &uq.column(c).map(|v| v.conj()));
                lambdas.push(u.lambda.conj());
                records.push(record(u.lambda.conj()));
                col += 1;
            }
        }
    }

    let report = SelectionReport {
        requested: m_req,
        retained: count,
        origin_radius,
        max_damping: criteria.max_damping,
        max_frequency: criteria.max_frequency,
        modes: records,
        spectrum,
        warnings,
    };
    let mut basis = EigenBasis::from_parts(lambdas, phi, psi, report)?;
    biorthonormalize(&mut basis)?;
    let err = basis.biorthonormality_error();
    if err > 1e-10 {
        return Err(Error::Reduction(format!(
            "biorthonormality error {err:.3e} after selection; the retained modes are ill-conditioned"
        )));
    }
    Ok(basis)
}

/// `Psi <- Psi G^{-H}` with `G = Psi^H Phi`, then restores exact conjugate
/// and real structure.
fn biorthonormalize(basis: &mut EigenBasis) -> Result<()> {
    let g = basis.psi.adjoint() * &basis.phi;
    let g_inv_h = g
        .try_inverse()
        .ok_or_else(|| Error::Reduction("retained eigenvectors are linearly dependent".into()))?
        .adjoint();
    basis.psi = &basis.psi * g_inv_h;
    for k in 0..basis.m() {
        let c = basis.conj_index[k];
        if c == k {
            for v in basis.psi.column_mut(k).iter_mut() {
                v.im = 0.0;
            }
        } else if c > k {
            let conj = basis.psi.column(k).map(|v| v.conj());
            basis.psi.set_column(c, &conj);
        }
    }
    Ok(())
}
