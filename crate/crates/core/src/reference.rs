//! Reference-element machinery: GLL nodes and weights, nodal differentiation,
//! and the 1-D transfer operators used for h-refinement and mortar faces.

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 15;

/// 1-D nodal operators on [-1, 1] for polynomial degree `order`, collocated at
/// Gauss-Lobatto-Legendre nodes, plus the child-interval interpolation and L2
/// projection matrices (exact quadrature, not the lumped GLL mass).
#[derive(Debug, Clone)]
pub struct ReferenceElement {
    pub order: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// diff_matrix[i][j] = l_j'(x_i); applied as (Du)_i = sum_j D[i][j] u_j.
    pub diff_matrix: Vec<Vec<f64>>,
    /// interp_child[c][i][j]: parent coefficients -> child-c nodal values,
    /// child 0 covers [-1, 0], child 1 covers [0, 1].
    pub interp_child: [Vec<Vec<f64>>; 2],
    /// project_child[c][i][j]: child-c nodal values -> parent L2-projection
    /// contribution; summing both children restores degree-p data exactly.
    pub project_child: [Vec<Vec<f64>>; 2],
    /// dealias_interp[q][j] = l_j(xi_q) at the order+3 Gauss points used to
    /// integrate the nonlinear volume flux without collocation aliasing.
    pub dealias_interp: Vec<Vec<f64>>,
    /// dealias_dweight[i][q] = w_q l_i'(xi_q); column sums vanish and row
    /// sums telescope to the boundary, so conservation and free-stream
    /// preservation are identical to the collocated operator.
    pub dealias_dweight: Vec<Vec<f64>>,
    /// Gauss weights matching `dealias_interp`.
    pub dealias_weights: Vec<f64>,
}

/// Legendre polynomial P_n and derivative at x.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p_prev, mut p) = (1.0, x);
    for k in 1..n {
        let kf = k as f64;
        let p_next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
        p_prev = p;
        p = p_next;
    }
    let dp = n as f64 * (x * p - p_prev) / (x * x - 1.0);
    (p, dp)
}

/// GLL nodes: the roots of (1 - x^2) P_n'(x), n = order.
pub fn gll_nodes(order: usize) -> Vec<f64> {
    let n = order;
    let mut nodes = vec![0.0; n + 1];
    nodes[0] = -1.0;
    nodes[n] = 1.0;
    for i in 1..n {
        // Chebyshev-Gauss-Lobatto initial guess, refined by Newton on P_n'.
        let mut x = -(std::f64::consts::PI * i as f64 / n as f64).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            // q = P_n'(x); q' from the Legendre ODE:
            // (1-x^2) P_n'' - 2x P_n' + n(n+1) P_n = 0.
            let q = dp;
            let dq = (2.0 * x * dp - (n * (n + 1)) as f64 * p) / (1.0 - x * x);
            let dx = q / dq;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
    }
    // enforce exact symmetry
    for i in 0..=n / 2 {
        let s = 0.5 * (nodes[i] - nodes[n - i]);
        nodes[i] = s;
        nodes[n - i] = -s;
    }
    if (n + 1) % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    nodes
}

pub fn gll_weights(order: usize, nodes: &[f64]) -> Vec<f64> {
    let n = order;
    nodes
        .iter()
        .map(|&x| {
            let (p, _) = legendre(n, x);
            2.0 / ((n * (n + 1)) as f64 * p * p)
        })
        .collect()
}

/// Gauss-Legendre nodes and weights (interior points, exact to degree 2n-1).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x =
            (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (nodes, weights)
}

/// Barycentric weights for the given interpolation nodes.
fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![1.0; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                w[i] /= nodes[i] - nodes[j];
            }
        }
    }
    w
}

/// Evaluate all Lagrange basis polynomials at x.
pub fn lagrange_basis_at(nodes: &[f64], bary: &[f64], x: f64) -> Vec<f64> {
    let n = nodes.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        if (x - nodes[i]).abs() < 1e-14 {
            out[i] = 1.0;
            return out;
        }
    }
    let mut denom = 0.0;
    for i in 0..n {
        let t = bary[i] / (x - nodes[i]);
        out[i] = t;
        denom += t;
    }
    for v in out.iter_mut() {
        *v /= denom;
    }
    out
}

fn diff_matrix(nodes: &[f64], bary: &[f64]) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                d[i][j] = (bary[j] / bary[i]) / (nodes[i] - nodes[j]);
                diag -= d[i][j];
            }
        }
        d[i][i] = diag;
    }
    d
}

fn solve_dense(a: &mut [Vec<f64>], b: &mut [Vec<f64>]) {
    // Gaussian elimination with partial pivoting; b holds multiple RHS columns
    // as rows of the second index.
    let n = a.len();
    let m = b[0].len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        for j in 0..n {
            a[col][j] /= d;
        }
        for j in 0..m {
            b[col][j] /= d;
        }
        for row in 0..n {
            if row != col {
                let f = a[row][col];
                if f != 0.0 {
                    for j in 0..n {
                        a[row][j] -= f * a[col][j];
                    }
                    for j in 0..m {
                        b[row][j] -= f * b[col][j];
                    }
                }
            }
        }
    }
}

impl ReferenceElement {
    pub fn new(order: usize) -> Result<Self> {
        if order < 1 || order > MAX_ORDER {
            return Err(Error::Config(format!(
                "polynomial order must be in 1..={MAX_ORDER}, got {order}"
            )));
        }
        let nodes = gll_nodes(order);
        let weights = gll_weights(order, &nodes);
        let bary = barycentric_weights(&nodes);
        let diff = diff_matrix(&nodes, &bary);

        let n = order + 1;
        // Child maps: child c covers [c-1, c] in parent coordinates; a child
        // reference point z maps to parent coordinate (z + 2c - 1)/2.
        let child_to_parent = |c: usize, z: f64| 0.5 * z + (c as f64 - 0.5);

        let mut interp_child = [vec![vec![0.0; n]; n], vec![vec![0.0; n]; n]];
        for c in 0..2 {
            for (i, &z) in nodes.iter().enumerate() {
                let basis = lagrange_basis_at(&nodes, &bary, child_to_parent(c, z));
                interp_child[c][i].copy_from_slice(&basis);
            }
        }

        // Exact L2 projection from the two-child piecewise space back to the
        // parent space: M_p^{-1} * (1/2) B_c with all integrals by Gauss
        // quadrature exact for degree 2p.
        let (gq, gw) = gauss_legendre(order + 2);
        let mut mass = vec![vec![0.0; n]; n];
        for (q, &x) in gq.iter().enumerate() {
            let basis = lagrange_basis_at(&nodes, &bary, x);
            for i in 0..n {
                for j in 0..n {
                    mass[i][j] += gw[q] * basis[i] * basis[j];
                }
            }
        }
        let mut project_child = [vec![vec![0.0; n]; n], vec![vec![0.0; n]; n]];
        for c in 0..2 {
            // B_c[i][j] = integral over the child interval of
            // l_i^parent(x) l_j^child(z(x)) dx, dx = dz/2.
            let mut b = vec![vec![0.0; n]; n];
            for (q, &z) in gq.iter().enumerate() {
                let x = child_to_parent(c, z);
                let parent_basis = lagrange_basis_at(&nodes, &bary, x);
                let child_basis = lagrange_basis_at(&nodes, &bary, z);
                for i in 0..n {
                    for j in 0..n {
                        b[i][j] += 0.5 * gw[q] * parent_basis[i] * child_basis[j];
                    }
                }
            }
            let mut m = mass.clone();
            solve_dense(&mut m, &mut b);
            project_child[c] = b;
        }

        // Dealiasing quadrature: l_i' is degree p - 1, so its values at the
        // Gauss points interpolate exactly from its GLL nodal values D[m][i].
        let (dq, dw) = gauss_legendre(order + 3);
        let m = dq.len();
        let dealias_interp: Vec<Vec<f64>> = dq
            .iter()
            .map(|&x| lagrange_basis_at(&nodes, &bary, x))
            .collect();
        let mut dealias_dweight = vec![vec![0.0; m]; n];
        for i in 0..n {
            for q in 0..m {
                let lp: f64 = (0..n).map(|mm| dealias_interp[q][mm] * diff[mm][i]).sum();
                dealias_dweight[i][q] = dw[q] * lp;
            }
        }

        Ok(ReferenceElement {
            order,
            nodes,
            weights,
            diff_matrix: diff,
            interp_child,
            project_child,
            dealias_interp,
            dealias_dweight,
            dealias_weights: dw,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.order + 1
    }

    /// Barycentric evaluation helper for probe sampling.
    pub fn basis_at(&self, x: f64) -> Vec<f64> {
        let bary = barycentric_weights(&self.nodes);
        lagrange_basis_at(&self.nodes, &bary, x)
    }
}
