//! Per-element nodal solution storage and the vector-space operations the
//! time integrator needs.

use crate::gas::{ConservativeState, GasModel, Vec4};
use crate::mesh::ForestMesh;

/// Solution over all elements; `data[e][node]` is the conservative 4-vector
/// at node `node = j*(p+1)+i` of element `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub data: Vec<Vec<Vec4>>,
}

impl Field {
    pub fn zeros(mesh: &ForestMesh) -> Self {
        Field {
            data: vec![vec![[0.0; 4]; mesh.n_nodes_per_elem()]; mesh.n_elements()],
        }
    }

    pub fn uniform(mesh: &ForestMesh, state: ConservativeState) -> Self {
        Field {
            data: vec![vec![state.as_vec4(); mesh.n_nodes_per_elem()]; mesh.n_elements()],
        }
    }

    pub fn from_fn(mesh: &ForestMesh, f: impl Fn(f64, f64) -> ConservativeState) -> Self {
        let data = mesh
            .elements
            .iter()
            .map(|e| {
                e.coords
                    .iter()
                    .map(|&[x, y]| f(x, y).as_vec4())
                    .collect()
            })
            .collect();
        Field { data }
    }

    pub fn state(&self, elem: usize, node: usize) -> ConservativeState {
        ConservativeState::from_vec4(self.data[elem][node])
    }

    pub fn n_elements(&self) -> usize {
        self.data.len()
    }

    /// self = a*self + b*other (elementwise).
    pub fn combine(&mut self, a: f64, b: f64, other: &Field) {
        for (se, oe) in self.data.iter_mut().zip(&other.data) {
            for (sn, on) in se.iter_mut().zip(oe) {
                for c in 0..4 {
                    sn[c] = a * sn[c] + b * on[c];
                }
            }
        }
    }

    /// self += b*other.
    pub fn axpy(&mut self, b: f64, other: &Field) {
        self.combine(1.0, b, other);
    }

    pub fn max_abs(&self) -> f64 {
        self.data
            .iter()
            .flatten()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().flatten().flatten().all(|v| v.is_finite())
    }

    /// Domain integrals of the four conserved quantities (GLL quadrature).
    pub fn conserved_integrals(&self, mesh: &ForestMesh) -> Vec4 {
        let n = mesh.refel.n_nodes();
        let w = &mesh.refel.weights;
        let mut total = [0.0; 4];
        for (e, elem) in mesh.elements.iter().enumerate() {
            for j in 0..n {
                for i in 0..n {
                    let node = j * n + i;
                    let scale = w[i] * w[j] * elem.metric[node].jac;
                    for c in 0..4 {
                        total[c] += scale * self.data[e][node][c];
                    }
                }
            }
        }
        total
    }

    /// Volume-weighted element mean state.
    pub fn element_mean(&self, mesh: &ForestMesh, elem: usize) -> Vec4 {
        let n = mesh.refel.n_nodes();
        let w = &mesh.refel.weights;
        let mut sum = [0.0; 4];
        let mut vol = 0.0;
        for j in 0..n {
            for i in 0..n {
                let node = j * n + i;
                let scale = w[i] * w[j] * mesh.elements[elem].metric[node].jac;
                vol += scale;
                for c in 0..4 {
                    sum[c] += scale * self.data[elem][node][c];
                }
            }
        }
        [sum[0] / vol, sum[1] / vol, sum[2] / vol, sum[3] / vol]
    }

    /// Evaluates the element-local polynomial at reference coords (xi, eta).
    pub fn evaluate(&self, mesh: &ForestMesh, elem: usize, xi: f64, eta: f64) -> Vec4 {
        let n = mesh.refel.n_nodes();
        let bx = mesh.refel.basis_at(xi);
        let by = mesh.refel.basis_at(eta);
        let mut out = [0.0; 4];
        for j in 0..n {
            for i in 0..n {
                let c = bx[i] * by[j];
                let v = self.data[elem][j * n + i];
                for k in 0..4 {
                    out[k] += c * v[k];
                }
            }
        }
        out
    }

    /// Evaluates pressure at a physical point via element-local polynomial
    /// interpolation of the conservative state.
    pub fn pressure_at(&self, mesh: &ForestMesh, gas: &GasModel, x: f64, y: f64) -> Option<f64> {
        let (elem, r) = mesh.locate(x, y)?;
        let v = self.evaluate(mesh, elem, r[0], r[1]);
        Some(ConservativeState::from_vec4(v).pressure(gas))
    }

    /// Global L2 norm of the density error against a reference function,
    /// integrated on the dealiasing Gauss grid so the norm sees the full
    /// interpolant (a GLL-collocated norm would be blind to the nodal
    /// interpolation error).
    pub fn density_l2_error(&self, mesh: &ForestMesh, exact: impl Fn(f64, f64) -> f64) -> f64 {
        let n = mesh.refel.n_nodes();
        let qi = &mesh.refel.dealias_interp;
        let nq = qi.len();
        let qw = &mesh.refel.dealias_weights;
        let mut err2 = 0.0;
        for (e, elem) in mesh.elements.iter().enumerate() {
            for qj in 0..nq {
                for qi_x in 0..nq {
                    // tensor interpolation of density, coords, and Jacobian
                    let mut rho = 0.0;
                    let mut x = 0.0;
                    let mut y = 0.0;
                    let mut jac = 0.0;
                    for j in 0..n {
                        let cj = qi[qj][j];
                        for i in 0..n {
                            let c = cj * qi[qi_x][i];
                            let node = j * n + i;
                            rho += c * self.data[e][node][0];
                            x += c * elem.coords[node][0];
                            y += c * elem.coords[node][1];
                            jac += c * elem.metric[node].jac;
                        }
                    }
                    let d = rho - exact(x, y);
                    err2 += qw[qi_x] * qw[qj] * jac * d * d;
                }
            }
        }
        err2.sqrt()
    }
}
