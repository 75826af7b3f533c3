#![allow(dead_code)]

//! Shared test fixtures: the isentropic-vortex exact solution and an exact
//! Riemann solver used as an independent oracle for shock-tube runs.

use inletctl::gas::{self, ConservativeState, GasModel};

pub const GAMMA: f64 = 1.4;

/// Gas with R = 1 so the vortex temperature field needs no unit juggling.
pub fn unit_gas() -> GasModel {
    GasModel::new(GAMMA, 1.0, 0.0, 0.72).unwrap()
}

/// Isentropic vortex of strength `beta` advecting with (u0, v0) through a
/// periodic box of extent `l`. Exact solution of the Euler equations.
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
        Vortex {
            beta: 5.0,
            u0: 1.0,
            v0: 1.0,
            x0: 5.0,
            y0: 5.0,
            l: 10.0,
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
        let dt_temp = -(GAMMA - 1.0) * self.beta * self.beta
            / (8.0 * GAMMA * std::f64::consts::PI * std::f64::consts::PI)
            * e
            * e;
        let temp = 1.0 + dt_temp;
        let rho = temp.powf(1.0 / (GAMMA - 1.0));
        let p = rho.powf(GAMMA);
        gas::state_from_rho_u_v_p(rho, self.u0 + du, self.v0 + dv, p, g)
    }

    pub fn density(&self, x: f64, y: f64, t: f64) -> f64 {
        self.state(x, y, t, &unit_gas()).rho
    }
}

/// Exact solution of the 1-D Riemann problem (ideal gas, no vacuum),
/// sampled at speed s = x/t. Newton iteration on the star pressure.
pub struct RiemannProblem {
    pub rho_l: f64,
    pub u_l: f64,
    pub p_l: f64,
    pub rho_r: f64,
    pub u_r: f64,
    pub p_r: f64,
}

impl RiemannProblem {
    pub fn sod() -> Self {
        RiemannProblem {
            rho_l: 1.0,
            u_l: 0.0,
            p_l: 1.0,
            rho_r: 0.125,
            u_r: 0.0,
            p_r: 0.1,
        }
    }

    fn f_side(p: f64, rho_k: f64, p_k: f64) -> (f64, f64) {
        let g = GAMMA;
        let a_k = (g * p_k / rho_k).sqrt();
        if p > p_k {
            // shock
            let a_cap = 2.0 / ((g + 1.0) * rho_k);
            let b_cap = (g - 1.0) / (g + 1.0) * p_k;
            let f = (p - p_k) * (a_cap / (p + b_cap)).sqrt();
            let df = (a_cap / (p + b_cap)).sqrt() * (1.0 - (p - p_k) / (2.0 * (p + b_cap)));
            (f, df)
        } else {
            // rarefaction
            let f = 2.0 * a_k / (g - 1.0) * ((p / p_k).powf((g - 1.0) / (2.0 * g)) - 1.0);
            let df = 1.0 / (rho_k * a_k) * (p / p_k).powf(-(g + 1.0) / (2.0 * g));
            (f, df)
        }
    }

    /// Star-region pressure and velocity.
    pub fn star(&self) -> (f64, f64) {
        let du = self.u_r - self.u_l;
        let mut p = 0.5 * (self.p_l + self.p_r);
        for _ in 0..60 {
            let (fl, dfl) = Self::f_side(p, self.rho_l, self.p_l);
            let (fr, dfr) = Self::f_side(p, self.rho_r, self.p_r);
            let f = fl + fr + du;
            let step = f / (dfl + dfr);
            p = (p - step).max(1e-12);
            if step.abs() < 1e-14 * p {
                break;
            }
        }
        let (fl, _) = Self::f_side(p, self.rho_l, self.p_l);
        let (fr, _) = Self::f_side(p, self.rho_r, self.p_r);
        let u = 0.5 * (self.u_l + self.u_r) + 0.5 * (fr - fl);
        (p, u)
    }

    /// Samples (rho, u, p) at similarity speed s = x/t.
    pub fn sample(&self, s: f64) -> (f64, f64, f64) {
        let g = GAMMA;
        let (p_star, u_star) = self.star();
        if s < u_star {
            // left of contact
            let a_l = (g * self.p_l / self.rho_l).sqrt();
            if p_star > self.p_l {
                // left shock
                let ratio = p_star / self.p_l;
                let s_l = self.u_l
                    - a_l * ((g + 1.0) / (2.0 * g) * ratio + (g - 1.0) / (2.0 * g)).sqrt();
                if s < s_l {
                    (self.rho_l, self.u_l, self.p_l)
                } else {
                    let rho = self.rho_l
                        * (ratio + (g - 1.0) / (g + 1.0))
                        / ((g - 1.0) / (g + 1.0) * ratio + 1.0);
                    (rho, u_star, p_star)
                }
            } else {
                // left rarefaction
                let rho_star = self.rho_l * (p_star / self.p_l).powf(1.0 / g);
                let a_star = (g * p_star / rho_star).sqrt();
                let head = self.u_l - a_l;
                let tail = u_star - a_star;
                if s < head {
                    (self.rho_l, self.u_l, self.p_l)
                } else if s > tail {
                    (rho_star, u_star, p_star)
                } else {
                    let u = 2.0 / (g + 1.0) * (a_l + (g - 1.0) / 2.0 * self.u_l + s);
                    let a = 2.0 / (g + 1.0) * (a_l + (g - 1.0) / 2.0 * (self.u_l - s));
                    let rho = self.rho_l * (a / a_l).powf(2.0 / (g - 1.0));
                    let p = self.p_l * (a / a_l).powf(2.0 * g / (g - 1.0));
                    (rho, u, p)
                }
            }
        } else {
            // right of contact
            let a_r = (g * self.p_r / self.rho_r).sqrt();
            if p_star > self.p_r {
                // right shock
                let ratio = p_star / self.p_r;
                let s_r = self.u_r
                    + a_r * ((g + 1.0) / (2.0 * g) * ratio + (g - 1.0) / (2.0 * g)).sqrt();
                if s > s_r {
                    (self.rho_r, self.u_r, self.p_r)
                } else {
                    let rho = self.rho_r
                        * (ratio + (g - 1.0) / (g + 1.0))
                        / ((g - 1.0) / (g + 1.0) * ratio + 1.0);
                    (rho, u_star, p_star)
                }
            } else {
                // right rarefaction
                let rho_star = self.rho_r * (p_star / self.p_r).powf(1.0 / g);
                let a_star = (g * p_star / rho_star).sqrt();
                let head = self.u_r + a_r;
                let tail = u_star + a_star;
                if s > head {
                    (self.rho_r, self.u_r, self.p_r)
                } else if s < tail {
                    (rho_star, u_star, p_star)
                } else {
                    let u = 2.0 / (g + 1.0) * (-a_r + (g - 1.0) / 2.0 * self.u_r + s);
                    let a = 2.0 / (g + 1.0) * (a_r - (g - 1.0) / 2.0 * (self.u_r - s));
                    let rho = self.rho_r * (a / a_r).powf(2.0 / (g - 1.0));
                    let p = self.p_r * (a / a_r).powf(2.0 * g / (g - 1.0));
                    (rho, u, p)
                }
            }
        }
    }
}

#[cfg(test)]
mod oracle_checks {
    use super::*;

    #[test]
    fn sod_star_state_matches_published_values() {
        let rp = RiemannProblem::sod();
        let (p, u) = rp.star();
        assert!((p - 0.30313).abs() < 1e-4, "p* = {p}");
        assert!((u - 0.92745).abs() < 1e-4, "u* = {u}");
    }

    #[test]
    fn vortex_background_far_from_core() {
        let v = Vortex::standard();
        let g = unit_gas();
        let s = v.state(0.1, 0.1, 0.0, &g);
        assert!((s.rho - 1.0).abs() < 1e-9);
        assert!((s.pressure(&g) - 1.0).abs() < 1e-9);
    }
}
