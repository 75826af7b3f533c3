//! Weak-form residual assembly for the nodal spectral DG scheme: group-flux
//! volume terms, Rusanov interface fluxes with L2 mortars at 2:1 faces, BR1
//! viscous fluxes, and boundary ghost states.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::gas::{
    self, ConservativeState, GasModel, GradientState, Vec4,
};
use crate::mesh::{BcTag, Face, ForestMesh, Side, SIDES};
use rayon::prelude::*;

/// Jet-wall prescription resolved for the current control step. `density`
/// is `Some` for blowing jets (from the mass-balance rule) and `None` for
/// suction jets (density extrapolated from the interior).
#[derive(Debug, Clone)]
pub struct JetSpec {
    pub x_start: f64,
    pub x_end: f64,
    /// Unit direction of the prescribed jet velocity in the global frame.
    pub direction: [f64; 2],
    /// Peak speed lambda * u_inf at the segment midpoint.
    pub peak_speed: f64,
    /// Flattening exponent of the sinusoidal profile.
    pub phi: f64,
    pub density: Option<f64>,
}

impl JetSpec {
    /// Flattened-sine speed magnitude at arc position x within the segment.
    pub fn speed_at(&self, x: f64) -> f64 {
        let s = (x - self.x_start) / (self.x_end - self.x_start);
        // exact zero at the edges: sin(pi) rounds to ~1e-16 and the
        // fractional power would inflate it to a few percent of peak
        if s <= 0.0 || s >= 1.0 {
            return 0.0;
        }
        self.peak_speed * (std::f64::consts::PI * s).sin().powf(self.phi)
    }
}

/// Boundary-condition context for one residual evaluation.
#[derive(Debug, Clone)]
pub struct BcContext {
    pub freestream: ConservativeState,
    pub jets: Vec<JetSpec>,
    /// Open height of the throttle plane: `Throttle` faces behave as outflow
    /// below this y and as a wall above, giving the plug sub-face resolution.
    pub throttle_y_open: f64,
    /// Throttle plug wall kind (mirrors `InletGeometry::inviscid_walls`).
    pub slip_walls: bool,
}

impl BcContext {
    pub fn freestream_only(freestream: ConservativeState) -> Self {
        BcContext {
            freestream,
            jets: Vec::new(),
            throttle_y_open: f64::INFINITY,
            slip_walls: false,
        }
    }
}

/// Exterior ghost state for a boundary face node. `normal` is the outward
/// unit face normal (only slip walls use it).
pub fn ghost_state(
    tag: BcTag,
    ctx: &BcContext,
    interior: &ConservativeState,
    pos: [f64; 2],
    normal: [f64; 2],
    _t: f64,
    gas: &GasModel,
) -> Result<ConservativeState> {
    match tag {
        BcTag::SupersonicInflow => Ok(ctx.freestream),
        BcTag::SupersonicOutflow => Ok(*interior),
        BcTag::NoSlipWall => Ok(ConservativeState::new(
            interior.rho,
            -interior.rho_u,
            -interior.rho_v,
            interior.rho_e,
        )),
        BcTag::Throttle => {
            if pos[1] < ctx.throttle_y_open {
                return Ok(*interior);
            }
            if ctx.slip_walls {
                let mn = interior.rho_u * normal[0] + interior.rho_v * normal[1];
                return Ok(ConservativeState::new(
                    interior.rho,
                    interior.rho_u - 2.0 * mn * normal[0],
                    interior.rho_v - 2.0 * mn * normal[1],
                    interior.rho_e,
                ));
            }
            Ok(ConservativeState::new(
                interior.rho,
                -interior.rho_u,
                -interior.rho_v,
                interior.rho_e,
            ))
        }
        BcTag::SlipWall => {
            // mirror the normal momentum, keep the tangential component
            let mn = interior.rho_u * normal[0] + interior.rho_v * normal[1];
            Ok(ConservativeState::new(
                interior.rho,
                interior.rho_u - 2.0 * mn * normal[0],
                interior.rho_v - 2.0 * mn * normal[1],
                interior.rho_e,
            ))
        }
        BcTag::JetWall(id) => {
            let jet = ctx.jets.get(id).ok_or_else(|| {
                Error::Config(format!("jet segment {id} not resolvable in BC context"))
            })?;
            let speed = jet.speed_at(pos[0]);
            if speed == 0.0 {
                // inactive segment behaves exactly like a plain no-slip wall
                return Ok(ConservativeState::new(
                    interior.rho,
                    -interior.rho_u,
                    -interior.rho_v,
                    interior.rho_e,
                ));
            }
            let (u, v) = (speed * jet.direction[0], speed * jet.direction[1]);
            let p_int = interior.pressure(gas);
            let rho = jet.density.unwrap_or(interior.rho);
            if !(rho > 0.0) || !(p_int > 0.0) {
                return Err(Error::invalid_state(
                    "density",
                    rho,
                    format!("jet ghost at ({}, {})", pos[0], pos[1]),
                ));
            }
            Ok(gas::state_from_rho_u_v_p(rho, u, v, p_int, gas))
        }
    }
}

pub type GradientField = Vec<Vec<GradientState>>;

struct Traces {
    /// vals[elem][side][k]: state at face node k (ordered by increasing
    /// tangential coordinate).
    vals: Vec<[Vec<Vec4>; 4]>,
}

fn extract_traces(field: &Field, mesh: &ForestMesh) -> Traces {
    let n = mesh.refel.n_nodes();
    let idx: Vec<Vec<usize>> = SIDES
        .iter()
        .map(|&s| mesh.face_node_indices(s))
        .collect();
    let vals = (0..mesh.n_elements())
        .map(|e| {
            std::array::from_fn(|s| {
                (0..n).map(|k| field.data[e][idx[s][k]]).collect::<Vec<_>>()
            })
        })
        .collect();
    Traces { vals }
}

fn apply_matrix(m: &[Vec<f64>], v: &[Vec4]) -> Vec<Vec4> {
    let n = m.len();
    (0..n)
        .map(|i| {
            let mut out = [0.0; 4];
            for j in 0..v.len() {
                let c = m[i][j];
                for k in 0..4 {
                    out[k] += c * v[j][k];
                }
            }
            out
        })
        .collect()
}

fn avg4(a: Vec4, b: Vec4) -> Vec4 {
    [
        0.5 * (a[0] + b[0]),
        0.5 * (a[1] + b[1]),
        0.5 * (a[2] + b[2]),
        0.5 * (a[3] + b[3]),
    ]
}

/// Face-node physical positions for an element side.
fn face_positions(mesh: &ForestMesh, elem: usize, side: Side) -> Vec<[f64; 2]> {
    mesh.face_node_indices(side)
        .iter()
        .map(|&i| mesh.elements[elem].coords[i])
        .collect()
}

/// Validate all nodal states, returning a located error.
fn validate_field(field: &Field, mesh: &ForestMesh, gas: &GasModel) -> Result<()> {
    for (e, elem) in field.data.iter().enumerate() {
        for (node, v) in elem.iter().enumerate() {
            let u = ConservativeState::from_vec4(*v);
            if !(u.rho > 0.0) || !u.rho.is_finite() {
                return Err(Error::invalid_state(
                    "density",
                    u.rho,
                    format!("element {:?} node {node}", mesh.elements[e].key),
                ));
            }
            let p = u.pressure(gas);
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::invalid_state(
                    "pressure",
                    p,
                    format!("element {:?} node {node}", mesh.elements[e].key),
                ));
            }
        }
    }
    Ok(())
}

/// BR1 local gradients with arithmetic-mean traces.
pub fn compute_gradients_br1(
    field: &Field,
    mesh: &ForestMesh,
    gas: &GasModel,
    ctx: &BcContext,
    t: f64,
) -> Result<GradientField> {
    let n = mesh.refel.n_nodes();
    let traces = extract_traces(field, mesh);

    // uhat[elem][side][k]: numerical trace (average) at face nodes
    let mut uhat: Vec<[Vec<Vec4>; 4]> = (0..mesh.n_elements())
        .map(|e| std::array::from_fn(|s| traces.vals[e][s].clone()))
        .collect();

    for face in &mesh.faces {
        match face {
            Face::Interior {
                left,
                left_side,
                right,
                right_side,
            } => {
                for k in 0..n {
                    let a = traces.vals[*left][left_side.index()][k];
                    let b = traces.vals[*right][right_side.index()][k];
                    let m = avg4(a, b);
                    uhat[*left][left_side.index()][k] = m;
                    uhat[*right][right_side.index()][k] = m;
                }
            }
            Face::Mortar {
                coarse,
                coarse_side,
                fine,
                fine_side,
            } => {
                let ctrace = &traces.vals[*coarse][coarse_side.index()];
                let mut fine_hats: [Vec<Vec4>; 2] = [Vec::new(), Vec::new()];
                for c in 0..2 {
                    let interp = apply_matrix(&mesh.refel.interp_child[c], ctrace);
                    let f = &traces.vals[fine[c]][fine_side.index()];
                    let hat: Vec<Vec4> =
                        (0..n).map(|k| avg4(f[k], interp[k])).collect();
                    uhat[fine[c]][fine_side.index()] = hat.clone();
                    fine_hats[c] = hat;
                }
                // coarse side receives the projection of the fine-side traces
                let p0 = apply_matrix(&mesh.refel.project_child[0], &fine_hats[0]);
                let p1 = apply_matrix(&mesh.refel.project_child[1], &fine_hats[1]);
                uhat[*coarse][coarse_side.index()] =
                    (0..n).map(|k| gas::add4(p0[k], p1[k])).collect();
            }
            Face::Boundary { elem, side, tag } => {
                let pos = face_positions(mesh, *elem, *side);
                let nvec = mesh.elements[*elem].face_normal[side.index()];
                for k in 0..n {
                    let interior =
                        ConservativeState::from_vec4(traces.vals[*elem][side.index()][k]);
                    let ghost = ghost_state(*tag, ctx, &interior, pos[k], nvec, t, gas)?;
                    uhat[*elem][side.index()][k] = avg4(interior.as_vec4(), ghost.as_vec4());
                }
            }
        }
    }

    let refel = &mesh.refel;
    let d = &refel.diff_matrix;
    let w = &refel.weights;
    let grads: Vec<Vec<GradientState>> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| {
            let elem = &mesh.elements[e];
            let u = &field.data[e];
            let mut out = vec![GradientState::default(); n * n];
            // weak divergence of (U, 0) gives d/dx, of (0, U) gives d/dy
            for comp in 0..2 {
                let mut acc = vec![[0.0f64; 4]; n * n];
                // volume terms
                for j in 0..n {
                    for i in 0..n {
                        let node = j * n + i;
                        // sum over m of D[m][i] w[m] Ft[m][j] etc.
                        let mut sx = [0.0f64; 4];
                        for m in 0..n {
                            let mn = j * n + m;
                            let met = &elem.metric[mn];
                            // contravariant flux of (U, 0) or (0, U)
                            let ft = if comp == 0 { met.y_eta } else { -met.x_eta };
                            let c = d[m][i] * w[m] * ft;
                            for kk in 0..4 {
                                sx[kk] += c * u[mn][kk];
                            }
                        }
                        let mut sy = [0.0f64; 4];
                        for m in 0..n {
                            let mn = m * n + i;
                            let met = &elem.metric[mn];
                            let gt = if comp == 0 { -met.y_xi } else { met.x_xi };
                            let c = d[m][j] * w[m] * gt;
                            for kk in 0..4 {
                                sy[kk] += c * u[mn][kk];
                            }
                        }
                        for kk in 0..4 {
                            acc[node][kk] = -(sx[kk] / w[i] + sy[kk] / w[j]);
                        }
                    }
                }
                // face lifts: + uhat * n_comp * sJ / w_normal
                for side in SIDES {
                    let s = side.index();
                    let nvec = elem.face_normal[s];
                    let ncomp = nvec[comp];
                    let sj = elem.face_sjac[s];
                    let idx = mesh.face_node_indices(side);
                    let wedge = match side {
                        Side::West | Side::South => w[0],
                        Side::East | Side::North => w[n - 1],
                    };
                    for k in 0..n {
                        let hat = uhat[e][s][k];
                        let node = idx[k];
                        let scale = ncomp * sj / wedge;
                        for kk in 0..4 {
                            acc[node][kk] += hat[kk] * scale;
                        }
                    }
                }
                for node in 0..n * n {
                    let jac = elem.metric[node].jac;
                    let val = [
                        acc[node][0] / jac,
                        acc[node][1] / jac,
                        acc[node][2] / jac,
                        acc[node][3] / jac,
                    ];
                    if comp == 0 {
                        out[node].d_dx = val;
                    } else {
                        out[node].d_dy = val;
                    }
                }
            }
            out
        })
        .collect();
    Ok(grads)
}

/// Semi-discrete right-hand side dU/dt.
pub fn residual(
    field: &Field,
    mesh: &ForestMesh,
    gas: &GasModel,
    ctx: &BcContext,
    t: f64,
) -> Result<Field> {
    residual_with_blending(field, mesh, gas, ctx, t, None)
}

/// Residual with optional per-element blending toward a first-order
/// finite-volume update on the GLL subcells; `blend[e]` in [0, 1].
pub fn residual_with_blending(
    field: &Field,
    mesh: &ForestMesh,
    gas: &GasModel,
    ctx: &BcContext,
    t: f64,
    blend: Option<&[f64]>,
) -> Result<Field> {
    validate_field(field, mesh, gas)?;
    let n = mesh.refel.n_nodes();
    let traces = extract_traces(field, mesh);
    let viscous = gas.mu > 0.0;
    let grads = if viscous {
        Some(compute_gradients_br1(field, mesh, gas, ctx, t)?)
    } else {
        None
    };

    // gradient traces per element/side (only when viscous)
    let grad_traces: Option<Vec<[Vec<GradientState>; 4]>> = grads.as_ref().map(|g| {
        (0..mesh.n_elements())
            .map(|e| {
                std::array::from_fn(|s| {
                    mesh.face_node_indices(SIDES[s])
                        .iter()
                        .map(|&i| g[e][i])
                        .collect::<Vec<_>>()
                })
            })
            .collect()
    });

    // phi[elem][side][k]: outward-normal numerical flux per unit arc length
    let mut phi: Vec<[Vec<Vec4>; 4]> = (0..mesh.n_elements())
        .map(|_| std::array::from_fn(|_| vec![[0.0; 4]; n]))
        .collect();

    let visc_normal = |u_m: &ConservativeState,
                       g_m: &GradientState,
                       u_p: &ConservativeState,
                       g_p: &GradientState,
                       nvec: [f64; 2],
                       adiabatic: bool|
     -> Vec4 {
        let mut gg = *gas;
        if adiabatic {
            // zero heat flux through walls: drop conductivity in the face flux
            gg.prandtl = f64::INFINITY;
        }
        let (fm, gm) = gas::viscous_flux(u_m, g_m, &gg);
        let (fp, gp) = gas::viscous_flux(u_p, g_p, &gg);
        let fv = avg4(fm, fp);
        let gv = avg4(gm, gp);
        gas::add4(gas::scale4(fv, nvec[0]), gas::scale4(gv, nvec[1]))
    };

    for face in &mesh.faces {
        match face {
            Face::Interior {
                left,
                left_side,
                right,
                right_side,
            } => {
                let ls = left_side.index();
                let rs = right_side.index();
                let nvec = mesh.elements[*left].face_normal[ls];
                for k in 0..n {
                    let um = ConservativeState::from_vec4(traces.vals[*left][ls][k]);
                    let up = ConservativeState::from_vec4(traces.vals[*right][rs][k]);
                    let mut f = gas::rusanov_flux(&um, &up, nvec, gas);
                    if let Some(gt) = &grad_traces {
                        let fv = visc_normal(
                            &um,
                            &gt[*left][ls][k],
                            &up,
                            &gt[*right][rs][k],
                            nvec,
                            false,
                        );
                        f = gas::sub4(f, fv);
                    }
                    phi[*left][ls][k] = f;
                    phi[*right][rs][k] = gas::scale4(f, -1.0);
                }
            }
            Face::Mortar {
                coarse,
                coarse_side,
                fine,
                fine_side,
            } => {
                let cs = coarse_side.index();
                let fs = fine_side.index();
                let ctrace = &traces.vals[*coarse][cs];
                let cgrad = grad_traces.as_ref().map(|gt| gt[*coarse][cs].clone());
                let mut fine_phis: [Vec<Vec4>; 2] =
                    [vec![[0.0; 4]; n], vec![[0.0; 4]; n]];
                for c in 0..2 {
                    let fe = fine[c];
                    let nvec = mesh.elements[fe].face_normal[fs];
                    let cinterp = apply_matrix(&mesh.refel.interp_child[c], ctrace);
                    let ginterp = cgrad.as_ref().map(|gv| {
                        let dx: Vec<Vec4> = gv.iter().map(|g| g.d_dx).collect();
                        let dy: Vec<Vec4> = gv.iter().map(|g| g.d_dy).collect();
                        (
                            apply_matrix(&mesh.refel.interp_child[c], &dx),
                            apply_matrix(&mesh.refel.interp_child[c], &dy),
                        )
                    });
                    for k in 0..n {
                        let um = ConservativeState::from_vec4(
                            traces.vals[fe][fs][k],
                        );
                        let up = ConservativeState::from_vec4(cinterp[k]);
                        let mut f = gas::rusanov_flux(&um, &up, nvec, gas);
                        if let (Some(gt), Some((gx, gy))) = (&grad_traces, &ginterp) {
                            let gp = GradientState {
                                d_dx: gx[k],
                                d_dy: gy[k],
                            };
                            let fv =
                                visc_normal(&um, &gt[fe][fs][k], &up, &gp, nvec, false);
                            f = gas::sub4(f, fv);
                        }
                        fine_phis[c][k] = f;
                    }
                    phi[fe][fs] = fine_phis[c].clone();
                }
                // coarse side: minus the L2 projection of the fine fluxes
                let p0 = apply_matrix(&mesh.refel.project_child[0], &fine_phis[0]);
                let p1 = apply_matrix(&mesh.refel.project_child[1], &fine_phis[1]);
                for k in 0..n {
                    phi[*coarse][cs][k] = gas::scale4(gas::add4(p0[k], p1[k]), -1.0);
                }
            }
            Face::Boundary { elem, side, tag } => {
                let s = side.index();
                let nvec = mesh.elements[*elem].face_normal[s];
                let pos = face_positions(mesh, *elem, *side);
                let adiabatic = matches!(tag, BcTag::NoSlipWall | BcTag::JetWall(_));
                for k in 0..n {
                    let um = ConservativeState::from_vec4(traces.vals[*elem][s][k]);
                    let ghost = ghost_state(*tag, ctx, &um, pos[k], nvec, t, gas)?;
                    let mut f = gas::rusanov_flux(&um, &ghost, nvec, gas);
                    if let Some(gt) = &grad_traces {
                        let gm = gt[*elem][s][k];
                        let fv = visc_normal(&um, &gm, &ghost, &gm, nvec, adiabatic);
                        f = gas::sub4(f, fv);
                    }
                    phi[*elem][s][k] = f;
                }
            }
        }
    }

    let refel = &mesh.refel;
    let d = &refel.diff_matrix;
    let w = &refel.weights;
    let qi = &refel.dealias_interp;
    let qd = &refel.dealias_dweight;
    let nq = qi.len();
    let out: Vec<Vec<Vec4>> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| {
            let elem = &mesh.elements[e];
            let a_blend = blend.map(|b| b[e]).unwrap_or(0.0);
            let u = &field.data[e];
            // sxa: xi-direction weak derivative terms, sya: eta-direction
            let mut sxa = vec![[0.0f64; 4]; n * n];
            let mut sya = vec![[0.0f64; 4]; n * n];

            // inviscid volume terms, dealiased: evaluate the flux of the
            // interpolated state on the Gauss points, falling back to plain
            // collocation if interpolation leaves the admissible set (which
            // can happen next to limited shocks)
            let mut dealias_ok = true;
            'dealias: {
                for j in 0..n {
                    for q in 0..nq {
                        let mut uq = [0.0f64; 4];
                        let (mut ye, mut xe) = (0.0, 0.0);
                        for m in 0..n {
                            let mn = j * n + m;
                            let c = qi[q][m];
                            for kk in 0..4 {
                                uq[kk] += c * u[mn][kk];
                            }
                            ye += c * elem.metric[mn].y_eta;
                            xe += c * elem.metric[mn].x_eta;
                        }
                        let s = ConservativeState::from_vec4(uq);
                        if !(s.rho > 0.0) || !(s.pressure(gas) > 0.0) {
                            dealias_ok = false;
                            break 'dealias;
                        }
                        let (f, g) = gas::inviscid_flux(&s, gas);
                        for i in 0..n {
                            let c = qd[i][q];
                            let node = j * n + i;
                            for kk in 0..4 {
                                sxa[node][kk] += c * (ye * f[kk] - xe * g[kk]);
                            }
                        }
                    }
                }
                for i in 0..n {
                    for q in 0..nq {
                        let mut uq = [0.0f64; 4];
                        let (mut yx, mut xx) = (0.0, 0.0);
                        for m in 0..n {
                            let mn = m * n + i;
                            let c = qi[q][m];
                            for kk in 0..4 {
                                uq[kk] += c * u[mn][kk];
                            }
                            yx += c * elem.metric[mn].y_xi;
                            xx += c * elem.metric[mn].x_xi;
                        }
                        let s = ConservativeState::from_vec4(uq);
                        if !(s.rho > 0.0) || !(s.pressure(gas) > 0.0) {
                            dealias_ok = false;
                            break 'dealias;
                        }
                        let (f, g) = gas::inviscid_flux(&s, gas);
                        for j in 0..n {
                            let c = qd[j][q];
                            let node = j * n + i;
                            for kk in 0..4 {
                                sya[node][kk] += c * (-yx * f[kk] + xx * g[kk]);
                            }
                        }
                    }
                }
            }

            // nodal fluxes for the collocated sweeps: inviscid only on
            // fallback, viscous always
            let mut fx = vec![[0.0f64; 4]; n * n];
            let mut fy = vec![[0.0f64; 4]; n * n];
            let mut collocate = false;
            if !dealias_ok {
                for v in sxa.iter_mut().chain(sya.iter_mut()) {
                    *v = [0.0; 4];
                }
                for node in 0..n * n {
                    let s = ConservativeState::from_vec4(u[node]);
                    let (f, g) = gas::inviscid_flux(&s, gas);
                    fx[node] = f;
                    fy[node] = g;
                }
                collocate = true;
            }
            if let Some(gr) = &grads {
                for node in 0..n * n {
                    let s = ConservativeState::from_vec4(u[node]);
                    let (fv, gv) = gas::viscous_flux(&s, &gr[e][node], gas);
                    fx[node] = gas::sub4(fx[node], fv);
                    fy[node] = gas::sub4(fy[node], gv);
                }
                collocate = true;
            }
            if collocate {
                for j in 0..n {
                    for i in 0..n {
                        let node = j * n + i;
                        for m in 0..n {
                            let mn = j * n + m;
                            let met = &elem.metric[mn];
                            let c = d[m][i] * w[m];
                            for kk in 0..4 {
                                let ft = met.y_eta * fx[mn][kk] - met.x_eta * fy[mn][kk];
                                sxa[node][kk] += c * ft;
                            }
                        }
                        for m in 0..n {
                            let mn = m * n + i;
                            let met = &elem.metric[mn];
                            let c = d[m][j] * w[m];
                            for kk in 0..4 {
                                let gt = -met.y_xi * fx[mn][kk] + met.x_xi * fy[mn][kk];
                                sya[node][kk] += c * gt;
                            }
                        }
                    }
                }
            }
            let mut acc = vec![[0.0f64; 4]; n * n];
            for j in 0..n {
                for i in 0..n {
                    let node = j * n + i;
                    for kk in 0..4 {
                        acc[node][kk] = -(sxa[node][kk] / w[i] + sya[node][kk] / w[j]);
                    }
                }
            }
            for side in SIDES {
                let s = side.index();
                let sj = elem.face_sjac[s];
                let idx = mesh.face_node_indices(side);
                let wedge = match side {
                    Side::West | Side::South => w[0],
                    Side::East | Side::North => w[n - 1],
                };
                for k in 0..n {
                    let node = idx[k];
                    let scale = sj / wedge;
                    for kk in 0..4 {
                        acc[node][kk] += phi[e][s][k][kk] * scale;
                    }
                }
            }
            let mut dg_rhs = vec![[0.0f64; 4]; n * n];
            for node in 0..n * n {
                let jac = elem.metric[node].jac;
                for kk in 0..4 {
                    dg_rhs[node][kk] = -acc[node][kk] / jac;
                }
            }
            if a_blend <= 0.0 {
                return dg_rhs;
            }
            // first-order FV update on the GLL subcells, sharing the DG
            // face fluxes at the element boundary
            let fv_rhs = subcell_fv_rhs(field, mesh, gas, e, &phi[e]);
            for node in 0..n * n {
                for kk in 0..4 {
                    dg_rhs[node][kk] =
                        (1.0 - a_blend) * dg_rhs[node][kk] + a_blend * fv_rhs[node][kk];
                }
            }
            dg_rhs
        })
        .collect();

    Ok(Field { data: out })
}

/// First-order Rusanov finite-volume right-hand side on the GLL subcell grid
/// of one element. Element-boundary fluxes reuse the DG face fluxes, so the
/// blended scheme keeps discrete conservation exactly.
fn subcell_fv_rhs(
    field: &Field,
    mesh: &ForestMesh,
    gas: &GasModel,
    e: usize,
    phi_e: &[Vec<Vec4>; 4],
) -> Vec<Vec4> {
    let n = mesh.refel.n_nodes();
    let w = &mesh.refel.weights;
    let elem = &mesh.elements[e];
    let u = &field.data[e];
    let mut rhs = vec![[0.0f64; 4]; n * n];

    // xi-direction sweeps
    for j in 0..n {
        // flux at interface i-1/2 for i = 0..=n, oriented in +xi
        let mut fhat = vec![[0.0f64; 4]; n + 1];
        fhat[0] = gas::scale4(phi_e[Side::West.index()][j], -elem.face_sjac[0]);
        fhat[n] = gas::scale4(phi_e[Side::East.index()][j], elem.face_sjac[1]);
        for i in 1..n {
            let a = j * n + (i - 1);
            let b = j * n + i;
            let (ma, mb) = (&elem.metric[a], &elem.metric[b]);
            let nt = [
                0.5 * (ma.y_eta + mb.y_eta),
                -0.5 * (ma.x_eta + mb.x_eta),
            ];
            let len = (nt[0] * nt[0] + nt[1] * nt[1]).sqrt();
            let nu = [nt[0] / len, nt[1] / len];
            let ua = ConservativeState::from_vec4(u[a]);
            let ub = ConservativeState::from_vec4(u[b]);
            fhat[i] = gas::scale4(gas::rusanov_flux(&ua, &ub, nu, gas), len);
        }
        for i in 0..n {
            let node = j * n + i;
            for kk in 0..4 {
                rhs[node][kk] -= (fhat[i + 1][kk] - fhat[i][kk]) / w[i];
            }
        }
    }
    // eta-direction sweeps
    for i in 0..n {
        let mut ghat = vec![[0.0f64; 4]; n + 1];
        ghat[0] = gas::scale4(phi_e[Side::South.index()][i], -elem.face_sjac[2]);
        ghat[n] = gas::scale4(phi_e[Side::North.index()][i], elem.face_sjac[3]);
        for j in 1..n {
            let a = (j - 1) * n + i;
            let b = j * n + i;
            let (ma, mb) = (&elem.metric[a], &elem.metric[b]);
            let nt = [
                -0.5 * (ma.y_xi + mb.y_xi),
                0.5 * (ma.x_xi + mb.x_xi),
            ];
            let len = (nt[0] * nt[0] + nt[1] * nt[1]).sqrt();
            let nu = [nt[0] / len, nt[1] / len];
            let ua = ConservativeState::from_vec4(u[a]);
            let ub = ConservativeState::from_vec4(u[b]);
            ghat[j] = gas::scale4(gas::rusanov_flux(&ua, &ub, nu, gas), len);
        }
        for j in 0..n {
            let node = j * n + i;
            for kk in 0..4 {
                rhs[node][kk] -= (ghat[j + 1][kk] - ghat[j][kk]) / w[j];
            }
        }
    }
    for j in 0..n {
        for i in 0..n {
            let node = j * n + i;
            let jac = elem.metric[node].jac;
            for kk in 0..4 {
                rhs[node][kk] /= jac;
            }
        }
    }
    rhs
}
