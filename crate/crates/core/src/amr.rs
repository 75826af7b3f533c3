//! Adaptive refinement: Loehner smoothness indicator, 2:1 balance, and
//! conservative solution transfer between forests.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::mesh::{neighbor_key, ElemKey, ForestMesh, SIDES};

/// Thresholds and level bounds driving refinement decisions.
#[derive(Debug, Clone, Copy)]
pub struct RefinementControl {
    pub refine_threshold: f64,
    pub coarsen_threshold: f64,
    pub min_level: u8,
    pub max_level: u8,
    /// Indicator regularization; `None` rescales to the domain gradient
    /// maximum on every call.
    pub epsilon: Option<f64>,
}

impl Default for RefinementControl {
    fn default() -> Self {
        RefinementControl {
            refine_threshold: 0.5,
            coarsen_threshold: 0.1,
            min_level: 0,
            max_level: 4,
            epsilon: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flag {
    Refine,
    Keep,
    Coarsen,
}

/// Loehner-type smoothness indicator per element with a caller-supplied
/// regularization: eta_e = max |lap rho| / (max |grad rho| + epsilon),
/// from reference-space density derivatives.
pub fn lohner_indicator(field: &Field, mesh: &ForestMesh, epsilon: f64) -> Result<Vec<f64>> {
    if epsilon <= 0.0 {
        return Err(Error::Config(format!(
            "indicator regularization must be > 0, got {epsilon}"
        )));
    }
    Ok(lohner_indicator_raw(field, mesh, epsilon))
}

/// Indicator with epsilon rescaled to 1e-3 of the largest density gradient
/// in the domain, refreshed on every call.
pub fn lohner_indicator_auto(field: &Field, mesh: &ForestMesh) -> Vec<f64> {
    let (grad_max, _) = density_derivative_maxima(field, mesh);
    let domain_grad = grad_max.iter().fold(0.0f64, |a, &b| a.max(b));
    lohner_indicator_raw(field, mesh, 1e-3 * domain_grad + f64::MIN_POSITIVE)
}

/// Core formula; epsilon = 0 is admitted here so the scale-invariance
/// property can be exercised directly.
pub fn lohner_indicator_raw(field: &Field, mesh: &ForestMesh, epsilon: f64) -> Vec<f64> {
    let (grad_max, lap_max) = density_derivative_maxima(field, mesh);
    (0..mesh.n_elements())
        .map(|e| {
            if lap_max[e] == 0.0 {
                0.0
            } else {
                lap_max[e] / (grad_max[e] + epsilon)
            }
        })
        .collect()
}

fn density_derivative_maxima(field: &Field, mesh: &ForestMesh) -> (Vec<f64>, Vec<f64>) {
    let n = mesh.refel.n_nodes();
    let d = &mesh.refel.diff_matrix;

    let dxi = |v: &[f64], i: usize, j: usize| -> f64 {
        (0..n).map(|m| d[i][m] * v[j * n + m]).sum()
    };
    let deta = |v: &[f64], i: usize, j: usize| -> f64 {
        (0..n).map(|m| d[j][m] * v[m * n + i]).sum()
    };

    let mut grad_max = vec![0.0f64; mesh.n_elements()];
    let mut lap_max = vec![0.0f64; mesh.n_elements()];
    for e in 0..mesh.n_elements() {
        let rho: Vec<f64> = field.data[e].iter().map(|v| v[0]).collect();
        let mut rx = vec![0.0; n * n];
        let mut ry = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                rx[j * n + i] = dxi(&rho, i, j);
                ry[j * n + i] = deta(&rho, i, j);
            }
        }
        for j in 0..n {
            for i in 0..n {
                let g = (rx[j * n + i].powi(2) + ry[j * n + i].powi(2)).sqrt();
                let lap = dxi(&rx, i, j) + deta(&ry, i, j);
                grad_max[e] = grad_max[e].max(g);
                lap_max[e] = lap_max[e].max(lap.abs());
            }
        }
    }
    (grad_max, lap_max)
}

/// Maps indicator values to refinement flags under the level bounds.
pub fn flag_elements(
    indicator: &[f64],
    mesh: &ForestMesh,
    ctrl: &RefinementControl,
) -> Vec<Flag> {
    indicator
        .iter()
        .zip(&mesh.elements)
        .map(|(&eta, elem)| {
            if eta > ctrl.refine_threshold && elem.key.level < ctrl.max_level {
                Flag::Refine
            } else if eta < ctrl.coarsen_threshold && elem.key.level > ctrl.min_level {
                Flag::Coarsen
            } else {
                Flag::Keep
            }
        })
        .collect()
}

/// Enforces the 2:1 face-level constraint by refining only, in place.
/// Idempotent: a balanced leaf set passes through unchanged.
pub fn balance_2to1(mesh: &ForestMesh, leaves: &mut BTreeSet<ElemKey>) {
    loop {
        let mut to_refine: BTreeSet<ElemKey> = BTreeSet::new();
        for key in leaves.iter() {
            if key.level < 2 {
                continue;
            }
            for side in SIDES {
                let Some(nk) = neighbor_key(&mesh.grid, key, side) else {
                    continue;
                };
                // walk up from the equal-level neighbor; a covering leaf more
                // than one level coarser violates the constraint
                let mut anc = nk;
                while let Some(p) = anc.parent() {
                    anc = p;
                    if leaves.contains(&anc) {
                        if anc.level + 1 < key.level {
                            to_refine.insert(anc);
                        }
                        break;
                    }
                }
            }
        }
        if to_refine.is_empty() {
            return;
        }
        for key in to_refine {
            leaves.remove(&key);
            for c in key.children() {
                leaves.insert(c);
            }
        }
    }
}

/// Applies refinement flags, rebalances, and transfers the solution onto the
/// new forest. Refinement interpolates (exact on the polynomial space);
/// coarsening applies the L2 projection, so conserved integrals are
/// preserved to roundoff.
pub fn adapt(
    mesh: &ForestMesh,
    field: &Field,
    flags: &[Flag],
) -> Result<(ForestMesh, Field)> {
    let mut leaves: BTreeSet<ElemKey> = BTreeSet::new();
    let mut coarsen_votes: BTreeSet<ElemKey> = BTreeSet::new();
    for (key, &idx) in &mesh.leaf_index {
        match flags[idx] {
            Flag::Refine => {
                for c in key.children() {
                    leaves.insert(c);
                }
            }
            Flag::Keep => {
                leaves.insert(*key);
            }
            Flag::Coarsen => {
                coarsen_votes.insert(*key);
                leaves.insert(*key);
            }
        }
    }
    // merge sibling groups where all four voted to coarsen
    let parents: BTreeSet<ElemKey> = coarsen_votes
        .iter()
        .filter_map(|k| k.parent())
        .collect();
    for p in parents {
        let kids = p.children();
        if kids.iter().all(|k| coarsen_votes.contains(k)) {
            for k in &kids {
                leaves.remove(k);
            }
            leaves.insert(p);
        }
    }
    balance_2to1(mesh, &mut leaves);

    let new_mesh = ForestMesh::from_leaves(
        mesh.grid.clone(),
        mesh.order(),
        mesh.rules.clone(),
        &leaves,
    )?;
    let new_field = transfer(mesh, field, &new_mesh)?;
    Ok((new_mesh, new_field))
}

/// Transfers a solution between forests over the same tree grid and order.
pub fn transfer(old: &ForestMesh, field: &Field, new: &ForestMesh) -> Result<Field> {
    let n = old.refel.n_nodes();
    let mut out = Field::zeros(new);
    for (key, &idx) in &new.leaf_index {
        if let Some(&src) = old.leaf_index.get(key) {
            out.data[idx] = field.data[src].clone();
            continue;
        }
        // refined region: find the old ancestor and interpolate down
        let mut chain = vec![*key];
        let mut anc = *key;
        let mut found = None;
        while let Some(p) = anc.parent() {
            anc = p;
            if let Some(&src) = old.leaf_index.get(&anc) {
                found = Some(src);
                break;
            }
            chain.push(anc);
        }
        if let Some(src) = found {
            let mut vals = field.data[src].clone();
            for k in chain.iter().rev() {
                let (cx, cy) = k.child_position();
                vals = tensor_apply(
                    &old.refel.interp_child[cx as usize],
                    &old.refel.interp_child[cy as usize],
                    &vals,
                    n,
                );
            }
            out.data[idx] = vals;
            continue;
        }
        // coarsened region: project the four old children
        let kids = key.children();
        let mut sum = vec![[0.0f64; 4]; n * n];
        for k in &kids {
            let Some(&src) = old.leaf_index.get(k) else {
                return Err(Error::Topology(format!(
                    "solution transfer target {key:?} has no source in the old forest"
                )));
            };
            let (cx, cy) = k.child_position();
            let contrib = tensor_apply(
                &old.refel.project_child[cx as usize],
                &old.refel.project_child[cy as usize],
                &field.data[src],
                n,
            );
            for node in 0..n * n {
                for c in 0..4 {
                    sum[node][c] += contrib[node][c];
                }
            }
        }
        out.data[idx] = sum;
    }
    Ok(out)
}

/// out[j*n+i] = sum_{a,b} mx[i][a] my[j][b] vals[b*n+a].
fn tensor_apply(
    mx: &[Vec<f64>],
    my: &[Vec<f64>],
    vals: &[crate::gas::Vec4],
    n: usize,
) -> Vec<crate::gas::Vec4> {
    let mut tmp = vec![[0.0f64; 4]; n * n];
    for b in 0..n {
        for i in 0..n {
            let mut acc = [0.0; 4];
            for a in 0..n {
                let c = mx[i][a];
                for k in 0..4 {
                    acc[k] += c * vals[b * n + a][k];
                }
            }
            tmp[b * n + i] = acc;
        }
    }
    let mut out = vec![[0.0f64; 4]; n * n];
    for j in 0..n {
        for i in 0..n {
            let mut acc = [0.0; 4];
            for b in 0..n {
                let c = my[j][b];
                for k in 0..4 {
                    acc[k] += c * tmp[b * n + i][k];
                }
            }
            out[j * n + i] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gas::{self, GasModel};
    use crate::mesh::ForestMesh;

    fn gas() -> GasModel {
        GasModel::air()
    }

    fn smooth_field(mesh: &ForestMesh) -> Field {
        let g = gas();
        Field::from_fn(mesh, |x, y| {
            let rho = 1.0 + 0.2 * (x * std::f64::consts::PI).sin() * (y * 2.0).cos();
            gas::state_from_rho_u_v_p(rho, 0.3, -0.1, 1.0 + 0.1 * x * y, &g)
        })
    }

    #[test]
    fn indicator_low_for_smooth_high_for_kink() {
        let mesh = ForestMesh::periodic_rect(4, 0.0, 2.0, 0.0, 2.0, 4, 4).unwrap();
        let g = gas();
        let smooth = Field::from_fn(&mesh, |x, _| {
            gas::state_from_rho_u_v_p(1.0 + 0.1 * x, 1.0, 0.0, 1.0, &g)
        });
        let eta_s = lohner_indicator_auto(&smooth, &mesh);
        // linear density: second derivative vanishes
        assert!(eta_s.iter().all(|&e| e < 1e-8), "max {:?}", eta_s.iter().cloned().fold(0.0f64, f64::max));

        let kink = Field::from_fn(&mesh, |x, _| {
            // slope break interior to an element column
            let rho = if x < 0.8 { 1.0 } else { 1.0 + 2.0 * (x - 0.8) };
            gas::state_from_rho_u_v_p(rho, 1.0, 0.0, 1.0, &g)
        });
        let eta_k = lohner_indicator_auto(&kink, &mesh);
        let max_k = eta_k.iter().cloned().fold(0.0f64, f64::max);
        assert!(max_k > 0.5, "kink indicator {max_k}");
    }

    #[test]
    fn balance_is_refine_only_and_idempotent() {
        let mesh = ForestMesh::periodic_rect(3, 0.0, 1.0, 0.0, 1.0, 2, 2).unwrap();
        // refine tree 0 twice in one corner; its neighbors must follow
        let mut leaves: BTreeSet<ElemKey> = mesh.leaf_index.keys().cloned().collect();
        let root = ElemKey { tree: 0, level: 0, ix: 0, iy: 0 };
        leaves.remove(&root);
        let kids = root.children();
        for (i, k) in kids.iter().enumerate() {
            if i == 0 {
                for g in k.children() {
                    leaves.insert(g);
                }
            } else {
                leaves.insert(*k);
            }
        }
        let before = leaves.len();
        balance_2to1(&mesh, &mut leaves);
        assert!(leaves.len() >= before);
        let snapshot = leaves.clone();
        balance_2to1(&mesh, &mut leaves);
        assert_eq!(leaves, snapshot);
        // every face-neighbor pair is within one level
        ForestMesh::from_leaves(mesh.grid.clone(), 3, Vec::new(), &leaves).unwrap();
    }

    #[test]
    fn adapt_preserves_integrals_and_refine_is_exact() {
        let mesh = ForestMesh::periodic_rect(4, 0.0, 2.0, 0.0, 2.0, 2, 2).unwrap();
        let field = smooth_field(&mesh);
        let before = field.conserved_integrals(&mesh);

        let flags: Vec<Flag> = (0..mesh.n_elements())
            .map(|e| if e % 3 == 0 { Flag::Refine } else { Flag::Keep })
            .collect();
        let (m2, f2) = adapt(&mesh, &field, &flags).unwrap();
        assert!(m2.n_elements() > mesh.n_elements());
        let after = f2.conserved_integrals(&m2);
        for c in 0..4 {
            assert!((after[c] - before[c]).abs() <= 1e-12 * before[c].abs().max(1.0));
        }

        // coarsen everything back; projection keeps integrals
        let flags2 = vec![Flag::Coarsen; m2.n_elements()];
        let (m3, f3) = adapt(&m2, &f2, &flags2).unwrap();
        assert_eq!(m3.n_elements(), mesh.n_elements());
        let back = f3.conserved_integrals(&m3);
        for c in 0..4 {
            assert!((back[c] - before[c]).abs() <= 1e-12 * before[c].abs().max(1.0));
        }
    }

    #[test]
    fn refine_then_coarsen_restores_polynomial_data() {
        let mesh = ForestMesh::periodic_rect(3, 0.0, 1.0, 0.0, 1.0, 2, 2).unwrap();
        let g = gas();
        // degree-3 in each variable: representable exactly at p=3
        let field = Field::from_fn(&mesh, |x, y| {
            gas::state_from_rho_u_v_p(
                1.0 + 0.1 * x * x * x + 0.2 * y * y,
                x * y,
                0.5 * y,
                1.0 + 0.05 * x * y * y,
                &g,
            )
        });
        let flags = vec![Flag::Refine; mesh.n_elements()];
        let (m2, f2) = adapt(&mesh, &field, &flags).unwrap();
        let flags2 = vec![Flag::Coarsen; m2.n_elements()];
        let (m3, f3) = adapt(&m2, &f2, &flags2).unwrap();
        assert_eq!(m3.n_elements(), mesh.n_elements());
        for e in 0..mesh.n_elements() {
            for node in 0..mesh.n_nodes_per_elem() {
                for c in 0..4 {
                    assert!(
                        (f3.data[e][node][c] - field.data[e][node][c]).abs() < 1e-11,
                        "elem {e} node {node} comp {c}"
                    );
                }
            }
        }
    }
}
