//! SSPRK(5,4) integration and CFL-based step-size selection.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::gas::{self, ConservativeState, GasModel};
use crate::mesh::ForestMesh;

/// Shu-Osher coefficients of the five-stage fourth-order SSP scheme.
/// Stage i forms u_i = sum_j alpha[i][j] u_j + dt sum_j beta[i][j] F(u_j).
pub struct SsprkTableau {
    pub alpha: [[f64; 5]; 5],
    pub beta: [[f64; 5]; 5],
    /// Stage abscissae; F(u_j) is evaluated at t + c[j] dt.
    pub c: [f64; 6],
}

impl SsprkTableau {
    pub fn ssprk54() -> Self {
        let alpha = [
            [1.0, 0.0, 0.0, 0.0, 0.0],
            [0.444370493651235, 0.555629506348765, 0.0, 0.0, 0.0],
            [0.620101851488403, 0.0, 0.379898148511597, 0.0, 0.0],
            [0.178079954393132, 0.0, 0.0, 0.821920045606868, 0.0],
            [
                0.0,
                0.0,
                0.517231671970585,
                0.096059710526147,
                0.386708617503269,
            ],
        ];
        let beta = [
            [0.391752226571890, 0.0, 0.0, 0.0, 0.0],
            [0.0, 0.368410593050371, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.251891774271694, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.544974750228521, 0.0],
            [0.0, 0.0, 0.0, 0.063692468666290, 0.226007483236906],
        ];
        // consistency and SSP coefficient checks
        let mut min_ratio = f64::INFINITY;
        for i in 0..5 {
            let row_sum: f64 = alpha[i].iter().sum();
            assert!((row_sum - 1.0).abs() < 1e-12, "stage {i} not consistent");
            for j in 0..5 {
                assert!(alpha[i][j] >= 0.0 && beta[i][j] >= 0.0);
                if beta[i][j] > 0.0 {
                    min_ratio = min_ratio.min(alpha[i][j] / beta[i][j]);
                }
            }
        }
        assert!(
            (min_ratio - 1.508).abs() < 1e-3,
            "SSP coefficient {min_ratio} drifted from 1.508"
        );
        let mut c = [0.0f64; 6];
        for i in 0..5 {
            let mut ci = 0.0;
            for j in 0..5 {
                ci += alpha[i][j] * c[j] + beta[i][j];
            }
            c[i + 1] = ci;
        }
        SsprkTableau { alpha, beta, c }
    }
}

/// Advances one SSPRK(5,4) step. `rhs(u, t)` returns du/dt; `limit` runs
/// after every stage (stagewise positivity limiting keeps intermediate
/// states admissible under the SSP property).
pub fn ssprk54_step<R, L>(
    u0: &Field,
    t: f64,
    dt: f64,
    mut rhs: R,
    mut limit: L,
) -> Result<Field>
where
    R: FnMut(&Field, f64) -> Result<Field>,
    L: FnMut(&mut Field) -> Result<()>,
{
    let tab = SsprkTableau::ssprk54();
    let mut stages: Vec<Field> = vec![u0.clone()];
    let mut rhs_cache: Vec<Option<Field>> = vec![None; 5];

    for i in 0..5 {
        let mut acc = Field {
            data: vec![
                vec![[0.0; 4]; u0.data.first().map_or(0, |e| e.len())];
                u0.data.len()
            ],
        };
        for j in 0..=i {
            let a = tab.alpha[i][j];
            if a != 0.0 {
                acc.axpy(a, &stages[j]);
            }
            let b = tab.beta[i][j];
            if b != 0.0 {
                if rhs_cache[j].is_none() {
                    let f = rhs(&stages[j], t + tab.c[j] * dt).map_err(|e| {
                        Error::StageFailure {
                            stage: i + 1,
                            source: Box::new(e),
                        }
                    })?;
                    rhs_cache[j] = Some(f);
                }
                acc.axpy(b * dt, rhs_cache[j].as_ref().unwrap());
            }
        }
        limit(&mut acc).map_err(|e| Error::StageFailure {
            stage: i + 1,
            source: Box::new(e),
        })?;
        stages.push(acc);
    }
    Ok(stages.pop().unwrap())
}

/// Step-size safety factors; the convective constant matches the SSP
/// coefficient of the integrator.
#[derive(Debug, Clone, Copy)]
pub struct CflSettings {
    pub safety: f64,
    pub c_conv: f64,
    pub c_diff: f64,
}

impl Default for CflSettings {
    fn default() -> Self {
        CflSettings {
            safety: 0.9,
            c_conv: 1.508,
            c_diff: 0.5,
        }
    }
}

/// Smallest stable step over the mesh:
/// dt_C = c dx / ((2p+1) lambda), dt_D = d dx^2 / ((2p+1)^2 nu).
pub fn compute_dt(field: &Field, mesh: &ForestMesh, gas: &GasModel, cfl: &CflSettings) -> f64 {
    let p = mesh.order() as f64;
    let mut dt = f64::INFINITY;
    for (e, elem) in mesh.elements.iter().enumerate() {
        let mut lambda = 0.0f64;
        let mut nu = 0.0f64;
        for v in &field.data[e] {
            let s = ConservativeState::from_vec4(*v);
            lambda = lambda.max(gas::max_wave_speed(&s, gas));
            if gas.mu > 0.0 {
                let visc = (4.0 / 3.0) * gas.mu / s.rho;
                let therm = gas.gamma * gas.mu / (s.rho * gas.prandtl);
                nu = nu.max(visc.max(therm));
            }
        }
        let dx = elem.dx_min;
        let dt_c = cfl.c_conv * dx / ((2.0 * p + 1.0) * lambda);
        let mut dte = dt_c;
        if nu > 0.0 {
            let dt_d = cfl.c_diff * dx * dx / ((2.0 * p + 1.0).powi(2) * nu);
            dte = dte.min(dt_d);
        }
        dt = dt.min(dte);
    }
    cfl.safety * dt
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gas::GasModel;

    #[test]
    fn tableau_invariants() {
        let tab = SsprkTableau::ssprk54();
        // final abscissa lands on t + dt
        assert!((tab.c[5] - 1.0).abs() < 1e-12, "c5 = {}", tab.c[5]);
    }

    #[test]
    fn fourth_order_on_linear_ode() {
        // du/dt = u on a single scalar carried in a 1x1 field
        let run = |steps: usize| -> f64 {
            let mut u = Field {
                data: vec![vec![[1.0, 0.0, 0.0, 0.0]]],
            };
            let dt = 1.0 / steps as f64;
            for s in 0..steps {
                u = ssprk54_step(
                    &u,
                    s as f64 * dt,
                    dt,
                    |f, _| Ok(f.clone()),
                    |_| Ok(()),
                )
                .unwrap();
            }
            (u.data[0][0][0] - std::f64::consts::E).abs()
        };
        let e1 = run(10);
        let e2 = run(20);
        let order = (e1 / e2).log2();
        assert!(order > 3.8, "observed order {order}");
    }

    #[test]
    fn nonautonomous_abscissae() {
        // du/dt = 2t has exact solution t^2; fourth order integrates it exactly,
        // which only holds if stage times are threaded correctly
        let mut u = Field {
            data: vec![vec![[0.0; 4]]],
        };
        let dt = 0.25;
        for s in 0..4 {
            u = ssprk54_step(
                &u,
                s as f64 * dt,
                dt,
                |_, t| {
                    Ok(Field {
                        data: vec![vec![[2.0 * t, 0.0, 0.0, 0.0]]],
                    })
                },
                |_| Ok(()),
            )
            .unwrap();
        }
        assert!((u.data[0][0][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dt_scales_with_mesh_spacing() {
        let g = GasModel::air();
        let mesh1 = ForestMesh::periodic_rect(3, 0.0, 1.0, 0.0, 1.0, 2, 2).unwrap();
        let mesh2 = ForestMesh::periodic_rect(3, 0.0, 1.0, 0.0, 1.0, 4, 4).unwrap();
        let s = crate::gas::state_from_rho_u_v_p(1.0, 1.0, 0.0, 1.0, &g);
        let f1 = Field::uniform(&mesh1, s);
        let f2 = Field::uniform(&mesh2, s);
        let cfl = CflSettings::default();
        let dt1 = compute_dt(&f1, &mesh1, &g, &cfl);
        let dt2 = compute_dt(&f2, &mesh2, &g, &cfl);
        assert!((dt1 / dt2 - 2.0).abs() < 1e-12);
        // hand check: dx = 0.5, lambda = 1 + sqrt(1.4), p = 3
        let expected = 0.9 * 1.508 * 0.5 / (7.0 * (1.0 + 1.4f64.sqrt()));
        assert!((dt1 - expected).abs() < 1e-14);
    }
}
