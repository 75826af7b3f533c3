//! Compressible-flow state, equation of state, physical fluxes, and wave speeds.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Conservative/flux 4-vector (rho, rho u, rho v, rho E) order.
pub type Vec4 = [f64; 4];

pub fn add4(a: Vec4, b: Vec4) -> Vec4 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
}

pub fn sub4(a: Vec4, b: Vec4) -> Vec4 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]]
}

pub fn scale4(a: Vec4, s: f64) -> Vec4 {
    [a[0] * s, a[1] * s, a[2] * s, a[3] * s]
}

/// Ideal-gas model. Thermal conductivity is always derived as
/// k = mu * cp / Pr and never set independently.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GasModel {
    /// Ratio of specific heats, > 1.
    pub gamma: f64,
    /// Specific gas constant [J kg^-1 K^-1].
    pub gas_constant: f64,
    /// Dynamic viscosity [Pa s], constant (no Sutherland law).
    pub mu: f64,
    /// Prandtl number.
    pub prandtl: f64,
}

impl GasModel {
    pub fn new(gamma: f64, gas_constant: f64, mu: f64, prandtl: f64) -> Result<Self> {
        if gamma <= 1.0 {
            return Err(Error::Config(format!("gamma must be > 1, got {gamma}")));
        }
        if gas_constant <= 0.0 {
            return Err(Error::Config(format!(
                "gas constant must be > 0, got {gas_constant}"
            )));
        }
        if mu < 0.0 {
            return Err(Error::Config(format!("viscosity must be >= 0, got {mu}")));
        }
        if prandtl <= 0.0 {
            return Err(Error::Config(format!(
                "Prandtl number must be > 0, got {prandtl}"
            )));
        }
        Ok(GasModel {
            gamma,
            gas_constant,
            mu,
            prandtl,
        })
    }

    /// Air with gamma = 1.4, inviscid by default.
    pub fn air() -> Self {
        GasModel {
            gamma: 1.4,
            gas_constant: 287.87,
            mu: 0.0,
            prandtl: 0.72,
        }
    }

    pub fn cp(&self) -> f64 {
        self.gamma * self.gas_constant / (self.gamma - 1.0)
    }

    pub fn cv(&self) -> f64 {
        self.gas_constant / (self.gamma - 1.0)
    }

    /// Thermal conductivity k = mu cp / Pr.
    pub fn conductivity(&self) -> f64 {
        self.mu * self.cp() / self.prandtl
    }
}

/// Conserved 4-vector at a solution node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservativeState {
    pub rho: f64,
    pub rho_u: f64,
    pub rho_v: f64,
    pub rho_e: f64,
}

impl ConservativeState {
    pub fn new(rho: f64, rho_u: f64, rho_v: f64, rho_e: f64) -> Self {
        ConservativeState {
            rho,
            rho_u,
            rho_v,
            rho_e,
        }
    }

    pub fn from_vec4(v: Vec4) -> Self {
        ConservativeState::new(v[0], v[1], v[2], v[3])
    }

    pub fn as_vec4(&self) -> Vec4 {
        [self.rho, self.rho_u, self.rho_v, self.rho_e]
    }

    /// Pressure p = (gamma - 1)(rho E - 1/2 rho |u|^2); may be non-positive
    /// for an invalid state, callers check.
    pub fn pressure(&self, gas: &GasModel) -> f64 {
        let kinetic = 0.5 * (self.rho_u * self.rho_u + self.rho_v * self.rho_v) / self.rho;
        (gas.gamma - 1.0) * (self.rho_e - kinetic)
    }

    pub fn velocity(&self) -> (f64, f64) {
        (self.rho_u / self.rho, self.rho_v / self.rho)
    }

    pub fn validate(&self, gas: &GasModel, context: &str) -> Result<()> {
        if !(self.rho > 0.0) {
            return Err(Error::invalid_state("density", self.rho, context));
        }
        let p = self.pressure(gas);
        if !(p > 0.0) {
            return Err(Error::invalid_state("pressure", p, context));
        }
        Ok(())
    }
}

/// Primitive variables; p = rho R T holds exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveState {
    pub rho: f64,
    pub u: f64,
    pub v: f64,
    pub p: f64,
    pub t: f64,
}

/// Per-component spatial derivatives of the conservative 4-vector.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GradientState {
    pub d_dx: Vec4,
    pub d_dy: Vec4,
}

pub fn primitive_from_conservative(u: &ConservativeState, gas: &GasModel) -> Result<PrimitiveState> {
    if !(u.rho > 0.0) {
        return Err(Error::invalid_state(
            "density",
            u.rho,
            "primitive_from_conservative",
        ));
    }
    let (vx, vy) = u.velocity();
    let p = u.pressure(gas);
    if !(p > 0.0) {
        return Err(Error::invalid_state(
            "pressure",
            p,
            "primitive_from_conservative",
        ));
    }
    Ok(PrimitiveState {
        rho: u.rho,
        u: vx,
        v: vy,
        p,
        t: p / (u.rho * gas.gas_constant),
    })
}

pub fn conservative_from_primitive(w: &PrimitiveState, gas: &GasModel) -> Result<ConservativeState> {
    if !(w.rho > 0.0) {
        return Err(Error::invalid_state(
            "density",
            w.rho,
            "conservative_from_primitive",
        ));
    }
    if !(w.p > 0.0) {
        return Err(Error::invalid_state(
            "pressure",
            w.p,
            "conservative_from_primitive",
        ));
    }
    let rho_e = w.p / (gas.gamma - 1.0) + 0.5 * w.rho * (w.u * w.u + w.v * w.v);
    Ok(ConservativeState::new(
        w.rho,
        w.rho * w.u,
        w.rho * w.v,
        rho_e,
    ))
}

/// Builds a conservative state from (rho, u, v, p) without a temperature.
pub fn state_from_rho_u_v_p(rho: f64, u: f64, v: f64, p: f64, gas: &GasModel) -> ConservativeState {
    let rho_e = p / (gas.gamma - 1.0) + 0.5 * rho * (u * u + v * v);
    ConservativeState::new(rho, rho * u, rho * v, rho_e)
}

/// Inviscid convective flux vectors (F, G).
pub fn inviscid_flux(u: &ConservativeState, gas: &GasModel) -> (Vec4, Vec4) {
    let (vx, vy) = u.velocity();
    let p = u.pressure(gas);
    let f = [
        u.rho_u,
        u.rho_u * vx + p,
        u.rho_v * vx,
        vx * (u.rho_e + p),
    ];
    let g = [
        u.rho_v,
        u.rho_u * vy,
        u.rho_v * vy + p,
        vy * (u.rho_e + p),
    ];
    (f, g)
}

/// Viscous flux vectors (Fv, Gv) from the stress tensor with the 2/3
/// dilatation term and Fourier heat flux q = -k grad T.
pub fn viscous_flux(u: &ConservativeState, grad: &GradientState, gas: &GasModel) -> (Vec4, Vec4) {
    let rho = u.rho;
    let (vx, vy) = u.velocity();

    // Velocity gradients by chain rule on the conservative components:
    // d(u)/dx = (d(rho u)/dx - u d(rho)/dx) / rho.
    let du_dx = (grad.d_dx[1] - vx * grad.d_dx[0]) / rho;
    let du_dy = (grad.d_dy[1] - vx * grad.d_dy[0]) / rho;
    let dv_dx = (grad.d_dx[2] - vy * grad.d_dx[0]) / rho;
    let dv_dy = (grad.d_dy[2] - vy * grad.d_dy[0]) / rho;

    let mu = gas.mu;
    let div = du_dx + dv_dy;
    let tau_xx = mu * (2.0 * du_dx - (2.0 / 3.0) * div);
    let tau_yy = mu * (2.0 * dv_dy - (2.0 / 3.0) * div);
    let tau_xy = mu * (du_dy + dv_dx);

    // T = p/(rho R) with p = (gamma-1)(rho E - 1/2 rho |u|^2); chain rule on
    // the conservative gradient. Internal energy e = E - |u|^2/2, T = e/cv.
    let cv = gas.cv();
    let e_int = u.rho_e / rho - 0.5 * (vx * vx + vy * vy);
    let de_dx = (grad.d_dx[3] - (u.rho_e / rho) * grad.d_dx[0]) / rho - vx * du_dx - vy * dv_dx;
    let de_dy = (grad.d_dy[3] - (u.rho_e / rho) * grad.d_dy[0]) / rho - vx * du_dy - vy * dv_dy;
    let _ = e_int;
    let dt_dx = de_dx / cv;
    let dt_dy = de_dy / cv;

    let k = gas.conductivity();
    let qx = -k * dt_dx;
    let qy = -k * dt_dy;

    let fv = [
        0.0,
        tau_xx,
        tau_xy,
        vx * tau_xx + vy * tau_xy - qx,
    ];
    let gv = [
        0.0,
        tau_xy,
        tau_yy,
        vx * tau_xy + vy * tau_yy - qy,
    ];
    (fv, gv)
}

/// |u| + c with c = sqrt(gamma p / rho).
pub fn max_wave_speed(u: &ConservativeState, gas: &GasModel) -> f64 {
    let (vx, vy) = u.velocity();
    let p = u.pressure(gas);
    let c = (gas.gamma * p / u.rho).sqrt();
    (vx * vx + vy * vy).sqrt() + c
}

/// Normal projection of the inviscid flux, F n_x + G n_y.
pub fn normal_flux(u: &ConservativeState, normal: [f64; 2], gas: &GasModel) -> Vec4 {
    let (f, g) = inviscid_flux(u, gas);
    add4(scale4(f, normal[0]), scale4(g, normal[1]))
}

/// Rusanov (local Lax-Friedrichs) numerical flux across a face with unit
/// normal pointing from the minus to the plus side.
pub fn rusanov_flux(
    u_minus: &ConservativeState,
    u_plus: &ConservativeState,
    normal: [f64; 2],
    gas: &GasModel,
) -> Vec4 {
    let fn_minus = normal_flux(u_minus, normal, gas);
    let fn_plus = normal_flux(u_plus, normal, gas);
    let lambda = max_wave_speed(u_minus, gas).max(max_wave_speed(u_plus, gas));
    let jump = sub4(u_plus.as_vec4(), u_minus.as_vec4());
    sub4(
        scale4(add4(fn_minus, fn_plus), 0.5),
        scale4(jump, 0.5 * lambda),
    )
}
