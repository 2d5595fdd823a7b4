//! Pitch/plunge/flap typical section with cubic hardening springs and
//! indicial (Wagner/Küssner) strip aerodynamics, written in nondimensional
//! time `tau = U t / b`.
//!
//! State layout (14 entries):
//!
//! | index | state |
//! |-------|-------|
//! | 0..3  | `xi`, `alpha`, `delta` |
//! | 3..6  | their `tau`-derivatives |
//! | 6..12 | Wagner lag states, two per degree of freedom (alpha, xi, delta) |
//! | 12..14| Küssner lag states driven by `w_g / U` |
//!
//! Circulatory lift is the Duhamel integral of the Wagner function against
//! the three-quarter-chord downwash angle; each degree of freedom owns the
//! pair of exponential lag states fed by its own contribution to that angle.
//! Non-circulatory (apparent mass) terms follow the flapped-section
//! Theodorsen coefficients and are folded into the mass matrix.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{find_equilibrium, Model, ModelDescriptor, StateVector, TrimOptions};
use crate::nmor::eigen::eigenvalues;
use crate::nmor::jacobian::fd_jacobian;

pub const N_STATES: usize = 14;
pub const N_AERO_STATES: usize = 8;
pub const N_STRUCTURAL_STATES: usize = 6;

/// Two-term exponential Wagner approximation `1 - 0.165 e^{-0.0455 tau} - 0.335 e^{-0.3 tau}`.
pub const WAGNER: ExpKernel = ExpKernel {
    amplitudes: [0.165, 0.335],
    rates: [0.0455, 0.3],
};

/// Two-term exponential Küssner approximation `1 - 0.5792 e^{-0.1393 tau} - 0.4208 e^{-1.802 tau}`.
pub const KUSSNER: ExpKernel = ExpKernel {
    amplitudes: [0.5792, 0.4208],
    rates: [0.1393, 1.802],
};

/// Indicial kernel `1 - sum_i A_i exp(-b_i tau)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpKernel {
    pub amplitudes: [f64; 2],
    pub rates: [f64; 2],
}

impl ExpKernel {
    pub fn value(&self, tau: f64) -> f64 {
        1.0 - self.amplitudes[0] * (-self.rates[0] * tau).exp()
            - self.amplitudes[1] * (-self.rates[1] * tau).exp()
    }

    pub fn initial(&self) -> f64 {
        1.0 - self.amplitudes[0] - self.amplitudes[1]
    }
}

pub const STATE_LABELS: [&str; N_STATES] = [
    "xi",
    "alpha",
    "delta",
    "xi_dot",
    "alpha_dot",
    "delta_dot",
    "wagner_alpha_1",
    "wagner_alpha_2",
    "wagner_xi_1",
    "wagner_xi_2",
    "wagner_delta_1",
    "wagner_delta_2",
    "kussner_1",
    "kussner_2",
];

/// Nondimensional section constants.
///
/// Defaults are a placeholder set: a Lee-type pitch/plunge section
/// (`mu = 100`, `a = -0.5`, `x_alpha = 0.25`, `r_a = 0.5`, plunge/pitch
/// frequency ratio 0.2) with a mass-unbalanced flap hinged at mid-semichord,
/// plus the cubic coefficients `K_alpha3 = 3`, `K_xi3 = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AerofoilParams {
    pub a: f64,
    pub c_h: f64,
    pub x_alpha: f64,
    pub x_delta: f64,
    pub r_a: f64,
    pub r_delta: f64,
    pub mu: f64,
    pub omega_xi_bar: f64,
    pub omega_delta_bar: f64,
    pub k_xi3: f64,
    pub k_alpha3: f64,
    pub u_star: f64,
    pub zeta_xi: f64,
    pub zeta_alpha: f64,
    pub zeta_delta: f64,
}

impl Default for AerofoilParams {
    fn default() -> Self {
        AerofoilParams {
            a: -0.5,
            c_h: 0.5,
            x_alpha: 0.25,
            x_delta: 0.0125,
            r_a: 0.5,
            r_delta: 0.00625_f64.sqrt(),
            mu: 100.0,
            omega_xi_bar: 0.2,
            omega_delta_bar: 2.5,
            k_xi3: 1.0,
            k_alpha3: 3.0,
            u_star: 4.5,
            zeta_xi: 0.0,
            zeta_alpha: 0.0,
            zeta_delta: 0.0,
        }
    }
}

impl AerofoilParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("a", self.a),
            ("c_h", self.c_h),
            ("x_alpha", self.x_alpha),
            ("x_delta", self.x_delta),
            ("r_a", self.r_a),
            ("r_delta", self.r_delta),
            ("mu", self.mu),
            ("omega_xi_bar", self.omega_xi_bar),
            ("omega_delta_bar", self.omega_delta_bar),
            ("k_xi3", self.k_xi3),
            ("k_alpha3", self.k_alpha3),
            ("u_star", self.u_star),
            ("zeta_xi", self.zeta_xi),
            ("zeta_alpha", self.zeta_alpha),
            ("zeta_delta", self.zeta_delta),
        ];
        for (name, v) in all {
            if !v.is_finite() {
                return Err(Error::config(name, "must be finite"));
            }
        }
        for (name, v) in [("mu", self.mu), ("r_a", self.r_a), ("u_star", self.u_star), ("r_delta", self.r_delta)] {
            if v <= 0.0 {
                return Err(Error::config(name, format!("must be positive, got {v}")));
            }
        }
        if !(-1.0 < self.a && self.a < 1.0) {
            return Err(Error::config("a", "elastic axis must lie strictly inside the chord"));
        }
        if !(self.a < self.c_h && self.c_h < 1.0) {
            return Err(Error::config("c_h", "hinge must lie aft of the elastic axis and inside the chord"));
        }
        for (name, v) in [("omega_xi_bar", self.omega_xi_bar), ("omega_delta_bar", self.omega_delta_bar)] {
            if v <= 0.0 {
                return Err(Error::config(name, "frequency ratios must be positive"));
            }
        }
        Ok(())
    }

    pub fn with_u_star(&self, u_star: f64) -> Self {
        AerofoilParams {
            u_star,
            ..self.clone()
        }
    }
}

/// Theodorsen flap coefficients for hinge `c` and elastic axis `a`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FlapCoefficients {
    t1: f64,
    t3: f64,
    t4: f64,
    t5: f64,
    t7: f64,
    t8: f64,
    t9: f64,
    t10: f64,
    t11: f64,
    t12: f64,
    t13: f64,
}

impl FlapCoefficients {
    pub(crate) fn new(c: f64, a: f64) -> Self {
        let s = (1.0 - c * c).sqrt();
        let ac = c.acos();
        let t1 = -(2.0 + c * c) * s / 3.0 + c * ac;
        let t3 = -(0.125 + c * c) * ac * ac + 0.25 * c * s * ac * (7.0 + 2.0 * c * c)
            - 0.125 * (1.0 - c * c) * (5.0 * c * c + 4.0);
        let t4 = -ac + c * s;
        let t5 = -(1.0 - c * c) - ac * ac + 2.0 * c * s * ac;
        let t7 = -(0.125 + c * c) * ac + 0.125 * c * s * (7.0 + 2.0 * c * c);
        let t8 = -(2.0 * c * c + 1.0) * s / 3.0 + c * ac;
        let t9 = 0.5 * (s * s * s / 3.0 + a * t4);
        let t10 = s + ac;
        let t11 = ac * (1.0 - 2.0 * c) + s * (2.0 - c);
        let t12 = s * (2.0 + c) - ac * (2.0 * c + 1.0);
        let t13 = 0.5 * (-t7 - (c - a) * t1);
        FlapCoefficients {
            t1,
            t3,
            t4,
            t5,
            t7,
            t8,
            t9,
            t10,
            t11,
            t12,
            t13,
        }
    }
}

/// 14-state aerofoil model.
#[derive(Debug, Clone)]
pub struct AerofoilModel {
    params: AerofoilParams,
    desc: ModelDescriptor,
    mass_inv: Matrix3<f64>,
    // downwash angle = alpha + xi' + dw_alpha_dot * alpha' + dw_delta * delta + dw_delta_dot * delta'
    dw_alpha_dot: f64,
    dw_delta: f64,
    dw_delta_dot: f64,
    // generalized force rows: linear velocity/displacement terms outside the circulatory part
    f_lin: [[f64; 6]; 3],
    // weights of the circulatory term Gamma (lift, pitch, flap rows)
    f_circ: [f64; 3],
    // weights of the gust lift coefficient
    f_gust: [f64; 3],
    k_xi: f64,
    k_alpha: f64,
}

impl AerofoilModel {
    pub fn new(params: AerofoilParams) -> Result<Self> {
        params.validate()?;
        let p = &params;
        let (a, c, mu, u) = (p.a, p.c_h, p.mu, p.u_star);
        let t = FlapCoefficients::new(c, a);

        let ra2 = p.r_a * p.r_a;
        let rd2 = p.r_delta * p.r_delta;
        let static_cross = rd2 + (c - a) * p.x_delta;
        let mass = Matrix3::new(
            1.0 + 1.0 / mu,
            p.x_alpha - a / mu,
            p.x_delta - t.t1 / (PI * mu),
            p.x_alpha - a / mu,
            ra2 + (0.125 + a * a) / mu,
            static_cross - (t.t7 + (c - a) * t.t1) / (PI * mu),
            p.x_delta - t.t1 / (PI * mu),
            static_cross + 2.0 * t.t13 / (PI * mu),
            rd2 - t.t3 / (PI * PI * mu),
        );
        let mass_inv = mass
            .try_inverse()
            .ok_or_else(|| Error::config("mu", "structural plus apparent mass matrix is singular"))?;

        let q_lift = -1.0 / (mu * PI);
        let q_mom = 2.0 / (mu * PI);
        let wxi = p.omega_xi_bar / u;
        let wd = p.omega_delta_bar / u;

        // columns: xi, alpha, delta, xi', alpha', delta'
        let mut f_lin = [[0.0; 6]; 3];
        // plunge: -(1/(mu pi)) [pi alpha' - T4 delta'] - stiffness - damping
        f_lin[0][4] = q_lift * PI;
        f_lin[0][5] = q_lift * (-t.t4);
        f_lin[0][3] = -2.0 * p.zeta_xi * wxi;
        f_lin[0][0] = -wxi * wxi;
        // pitch
        f_lin[1][4] = q_mom * (PI / 2.0) * (-(0.5 - a)) - 2.0 * p.zeta_alpha * ra2 / u;
        f_lin[1][2] = q_mom * (PI / 2.0) * (-(t.t4 + t.t10) / PI);
        f_lin[1][5] = q_mom * (PI / 2.0) * ((-t.t1 + t.t8 + (c - a) * t.t4 - 0.5 * t.t11) / PI);
        f_lin[1][1] = -ra2 / (u * u);
        // flap
        f_lin[2][4] = q_mom * 0.5 * (2.0 * t.t9 + t.t1 - (a - 0.5) * t.t4);
        f_lin[2][2] = q_mom * 0.5 * (-(t.t5 - t.t4 * t.t10) / PI) - rd2 * wd * wd;
        f_lin[2][5] = q_mom * 0.5 * (t.t4 * t.t11 / (2.0 * PI)) - 2.0 * p.zeta_delta * rd2 * wd;

        let f_circ = [q_lift * 2.0 * PI, q_mom * PI * (a + 0.5), q_mom * (-t.t12 / 2.0)];
        let f_gust = [q_lift, q_mom * 0.5 * (a + 0.5), q_mom * (-t.t12 / (4.0 * PI))];

        let desc = ModelDescriptor::new(
            STATE_LABELS.iter().map(|s| s.to_string()).collect(),
            1,
            0,
            true,
        )?;
        Ok(AerofoilModel {
            k_xi: p.k_xi3,
            k_alpha: p.k_alpha3,
            params,
            desc,
            mass_inv,
            dw_alpha_dot: 0.5 - a,
            dw_delta: t.t10 / PI,
            dw_delta_dot: t.t11 / (2.0 * PI),
            f_lin,
            f_circ,
            f_gust,
        })
    }

    pub fn params(&self) -> &AerofoilParams {
        &self.params
    }
}

impl Model for AerofoilModel {
    fn descriptor(&self) -> &ModelDescriptor {
        &self.desc
    }

    fn residual_into(&self, w: &[f64], u_d: &[f64], _u_c: &[f64], out: &mut [f64]) {
        let (xi, alpha, delta) = (w[0], w[1], w[2]);
        let (xi_d, alpha_d, delta_d) = (w[3], w[4], w[5]);
        let wg = u_d[0];

        // per-DOF contributions to the three-quarter-chord downwash angle
        let in_alpha = alpha + self.dw_alpha_dot * alpha_d;
        let in_xi = xi_d;
        let in_delta = self.dw_delta * delta + self.dw_delta_dot * delta_d;
        let downwash = in_alpha + in_xi + in_delta;

        let [psi1, psi2] = WAGNER.amplitudes;
        let [eps1, eps2] = WAGNER.rates;
        let lag1 = w[6] + w[8] + w[10];
        let lag2 = w[7] + w[9] + w[11];
        let gamma = WAGNER.initial() * downwash + psi1 * eps1 * lag1 + psi2 * eps2 * lag2;

        let [ka1, ka2] = KUSSNER.amplitudes;
        let [kb1, kb2] = KUSSNER.rates;
        let cl_gust = 2.0 * PI * (ka1 * kb1 * w[12] + ka2 * kb2 * w[13]);

        let mut f = [0.0; 3];
        for (r, fr) in f.iter_mut().enumerate() {
            let row = &self.f_lin[r];
            *fr = row[0] * xi
                + row[1] * alpha
                + row[2] * delta
                + row[3] * xi_d
                + row[4] * alpha_d
                + row[5] * delta_d
                + self.f_circ[r] * gamma
                + self.f_gust[r] * cl_gust;
        }
        // cubic hardening: stiffness rows already carry the linear part
        f[0] += self.f_lin[0][0] * self.k_xi * xi * xi * xi;
        f[1] += self.f_lin[1][1] * self.k_alpha * alpha * alpha * alpha;

        let acc = self.mass_inv * Vector3::new(f[0], f[1], f[2]);

        out[0] = xi_d;
        out[1] = alpha_d;
        out[2] = delta_d;
        out[3] = acc[0];
        out[4] = acc[1];
        out[5] = acc[2];
        out[6] = in_alpha - eps1 * w[6];
        out[7] = in_alpha - eps2 * w[7];
        out[8] = in_xi - eps1 * w[8];
        out[9] = in_xi - eps2 * w[9];
        out[10] = in_delta - eps1 * w[10];
        out[11] = in_delta - eps2 * w[11];
        out[12] = wg - kb1 * w[12];
        out[13] = wg - kb2 * w[13];
    }
}

pub fn build_aerofoil_model(params: AerofoilParams) -> Result<AerofoilModel> {
    AerofoilModel::new(params)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlutterPoint {
    pub u_star: f64,
    pub max_real: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlutterTrace {
    pub points: Vec<FlutterPoint>,
    /// First stable-to-unstable crossing, refined by bisection. `None` means
    /// no flutter in the scanned range.
    pub crossing: Option<f64>,
    /// Width of the final bisection bracket.
    pub bracket_width: f64,
}

impl FlutterTrace {
    pub fn no_flutter_in_range(&self) -> bool {
        self.crossing.is_none()
    }
}

pub const FLUTTER_BISECTION_TOL: f64 = 1e-4;

/// Largest real part of the Jacobian spectrum at the trimmed equilibrium.
pub fn max_real_eigenvalue(model: &dyn Model) -> Result<f64> {
    let n = model.descriptor().n_states;
    let n_c = model.descriptor().n_control_inputs;
    let opts = TrimOptions::default();
    let eq = find_equilibrium(model, &StateVector::zeros(n), &vec![0.0; n_c], &opts)?;
    if !eq.converged {
        log::warn!("trim did not converge (residual {:.3e}); using best iterate", eq.residual_norm);
    }
    let jac = fd_jacobian(
        model,
        eq.w0.as_slice(),
        &vec![0.0; model.descriptor().n_disturbance_inputs],
        &vec![0.0; n_c],
        opts.fd_step,
    )?;
    Ok(eigenvalues(&jac)?
        .iter()
        .fold(f64::NEG_INFINITY, |m, l| m.max(l.re)))
}

/// Scans a parameter grid for the first sign change of the dominant
/// eigenvalue real part and bisects the bracketing interval.
pub fn flutter_trace_with<M, F>(build: F, grid: &[f64]) -> Result<FlutterTrace>
where
    M: Model,
    F: Fn(f64) -> Result<M>,
{
    if grid.is_empty() {
        return Err(Error::contract("flutter grid is empty"));
    }
    if grid.iter().any(|u| !(*u > 0.0)) || grid.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::contract("flutter grid must be positive and strictly increasing"));
    }
    let mut points = Vec::with_capacity(grid.len());
    for &u in grid {
        points.push(FlutterPoint {
            u_star: u,
            max_real: max_real_eigenvalue(&build(u)?)?,
        });
    }
    let bracket = points
        .windows(2)
        .find(|p| p[0].max_real < 0.0 && p[1].max_real >= 0.0)
        .map(|p| (p[0].u_star, p[1].u_star));

    let Some((mut lo, mut hi)) = bracket else {
        return Ok(FlutterTrace {
            points,
            crossing: None,
            bracket_width: 0.0,
        });
    };
    while hi - lo > FLUTTER_BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if max_real_eigenvalue(&build(mid)?)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(FlutterTrace {
        points,
        crossing: Some(0.5 * (lo + hi)),
        bracket_width: hi - lo,
    })
}

pub fn flutter_trace(params: &AerofoilParams, u_star_grid: &[f64]) -> Result<FlutterTrace> {
    flutter_trace_with(|u| AerofoilModel::new(params.with_u_star(u)), u_star_grid)
}
