//! Analytic verification cases: the isentropic vortex and its h-convergence
//! study, shared by the `convergence` command and the acceptance checks.

use crate::error::Result;
use crate::field::Field;
use crate::gas::{self, ConservativeState, GasModel};
use crate::mesh::ForestMesh;
use crate::residual::BcContext;
use crate::solver::{Simulation, SolverOptions};
use crate::timestepping::CflSettings;

pub const VORTEX_GAMMA: f64 = 1.4;

/// Gas with R = 1 so the vortex temperature field needs no unit juggling.
pub fn vortex_gas() -> GasModel {
    GasModel::new(VORTEX_GAMMA, 1.0, 0.0, 0.72).unwrap()
}

/// Isentropic vortex of strength `beta` advecting with (u0, v0) through a
/// periodic box of extent `l`. Exact solution of the Euler equations.
#[derive(Debug, Clone)]
pub struct Vortex {
    pub beta: f64,
    pub u0: f64,
    pub v0: f64,
    pub x0: f64,
    pub y0: f64,
    pub l: f64,
}

impl Vortex {
    pub fn standard() -> Self {
        // 20 x 20 box: the nearest-image Gaussian tails at the periodic
        // boundary are ~1e-21, so the single-vortex reference stays an
        // exact solution down to round-off (on a 10 x 10 box they floor
        // the L2 error near 1e-8)
        Vortex {
            beta: 5.0,
            u0: 1.0,
            v0: 1.0,
            x0: 10.0,
            y0: 10.0,
            l: 20.0,
        }
    }

    pub fn state(&self, x: f64, y: f64, t: f64, g: &GasModel) -> ConservativeState {
        let mut dx = x - self.x0 - self.u0 * t;
        let mut dy = y - self.y0 - self.v0 * t;
        // nearest periodic image
        dx -= self.l * (dx / self.l).round();
        dy -= self.l * (dy / self.l).round();
        let r2 = dx * dx + dy * dy;
        let e = ((1.0 - r2) / 2.0).exp();
        let du = -self.beta / (2.0 * std::f64::consts::PI) * dy * e;
        let dv = self.beta / (2.0 * std::f64::consts::PI) * dx * e;
        let dt_temp = -(VORTEX_GAMMA - 1.0) * self.beta * self.beta
            / (8.0 * VORTEX_GAMMA * std::f64::consts::PI * std::f64::consts::PI)
            * e
            * e;
        let temp = 1.0 + dt_temp;
        let rho = temp.powf(1.0 / (VORTEX_GAMMA - 1.0));
        let p = rho.powf(VORTEX_GAMMA);
        gas::state_from_rho_u_v_p(rho, self.u0 + du, self.v0 + dv, p, g)
    }

    pub fn density(&self, x: f64, y: f64, t: f64) -> f64 {
        self.state(x, y, t, &vortex_gas()).rho
    }
}

/// L2 density error of the vortex advected to `t_end` on an n x n periodic
/// mesh of the given polynomial order.
pub fn vortex_l2_error(order: usize, n: usize, t_end: f64) -> Result<f64> {
    let g = vortex_gas();
    let v = Vortex::standard();
    let mesh = ForestMesh::periodic_rect(order, 0.0, v.l, 0.0, v.l, n, n)?;
    let field = Field::from_fn(&mesh, |x, y| v.state(x, y, 0.0, &g));
    let ctx = BcContext::freestream_only(gas::state_from_rho_u_v_p(1.0, 1.0, 1.0, 1.0, &g));
    // cap dt so the O(dt^4) integrator error shrinks at the spatial rate
    // h^(p+1); otherwise it dominates the refinement study for p >= 3
    let h = v.l / n as f64;
    let dt_cap = 0.005 * h.powf((order as f64 + 1.0) / 4.0);
    let opts = SolverOptions {
        floors: None,
        blend: None,
        cfl: CflSettings {
            safety: 0.9,
            c_conv: 0.8,
            c_diff: 0.5,
        },
        max_dt: Some(dt_cap),
        ..SolverOptions::default()
    };
    let mut sim = Simulation::new(mesh, field, g, ctx, opts);
    sim.advance_to(t_end)?;
    Ok(sim
        .field
        .density_l2_error(&sim.mesh, |x, y| v.density(x, y, t_end)))
}

#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub n: usize,
    pub h: f64,
    pub error: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceSeries {
    pub order: usize,
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of log error vs log h.
    pub fitted_order: f64,
}

/// h-convergence of the vortex error for one polynomial order over the given
/// mesh sizes.
pub fn vortex_convergence(order: usize, ns: &[usize], t_end: f64) -> Result<ConvergenceSeries> {
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let error = vortex_l2_error(order, n, t_end)?;
        rows.push(ConvergenceRow {
            n,
            h: Vortex::standard().l / n as f64,
            error,
        });
    }
    Ok(ConvergenceSeries {
        order,
        fitted_order: fit_order(&rows),
        rows,
    })
}

/// Least-squares slope of log(error) against log(h).
pub fn fit_order(rows: &[ConvergenceRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.error > 0.0)
        .map(|r| (r.h.ln(), r.error.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}
