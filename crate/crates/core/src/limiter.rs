//! Mean-preserving positivity limiting and shock-indicator blending factors.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::gas::{ConservativeState, GasModel};
use crate::mesh::ForestMesh;

/// Floors below which nodal density and pressure are squeezed toward the
/// element mean.
#[derive(Debug, Clone, Copy)]
pub struct PositivityFloors {
    pub rho_floor: f64,
    pub p_floor: f64,
}

impl Default for PositivityFloors {
    fn default() -> Self {
        PositivityFloors {
            rho_floor: 1e-8,
            p_floor: 1e-8,
        }
    }
}

/// Squeezes nodal values toward the element mean until density and pressure
/// sit above the floors. The element mean is untouched, so the operation is
/// conservative; it is also idempotent. Fails if an element mean itself is
/// below a floor, which no amount of squeezing can repair.
pub fn positivity_limit(
    field: &mut Field,
    mesh: &ForestMesh,
    gas: &GasModel,
    floors: &PositivityFloors,
) -> Result<()> {
    let nn = mesh.n_nodes_per_elem();
    for e in 0..mesh.n_elements() {
        let mean = field.element_mean(mesh, e);
        let mean_state = ConservativeState::from_vec4(mean);
        let p_mean = mean_state.pressure(gas);
        if !(mean_state.rho > floors.rho_floor) || !mean_state.rho.is_finite() {
            return Err(Error::invalid_state(
                "mean density",
                mean_state.rho,
                format!("element {:?} during positivity limiting", mesh.elements[e].key),
            ));
        }
        if !(p_mean > floors.p_floor) || !p_mean.is_finite() {
            return Err(Error::invalid_state(
                "mean pressure",
                p_mean,
                format!("element {:?} during positivity limiting", mesh.elements[e].key),
            ));
        }

        // density squeeze
        let rho_min = (0..nn)
            .map(|i| field.data[e][i][0])
            .fold(f64::INFINITY, f64::min);
        if rho_min < floors.rho_floor {
            let theta = (mean_state.rho - floors.rho_floor) / (mean_state.rho - rho_min);
            let theta = theta.clamp(0.0, 1.0);
            for i in 0..nn {
                field.data[e][i][0] = mean_state.rho + theta * (field.data[e][i][0] - mean_state.rho);
            }
        }

        // pressure squeeze on the full state; pressure is concave in U, so
        // the convex combination with the mean cannot undershoot the floor
        let mut theta = 1.0f64;
        for i in 0..nn {
            let p = ConservativeState::from_vec4(field.data[e][i]).pressure(gas);
            if p < floors.p_floor {
                theta = theta.min((p_mean - floors.p_floor) / (p_mean - p));
            }
        }
        if theta < 1.0 {
            let theta = theta.clamp(0.0, 1.0);
            for i in 0..nn {
                for c in 0..4 {
                    field.data[e][i][c] = mean[c] + theta * (field.data[e][i][c] - mean[c]);
                }
            }
        }
    }
    Ok(())
}

/// Maps the smoothness indicator onto per-element blending factors in [0, 1].
#[derive(Debug, Clone, Copy)]
pub struct BlendControl {
    /// Indicator value at which blending switches on.
    pub onset: f64,
    /// Indicator value at which blending saturates.
    pub full_at: f64,
    /// Upper bound on the subcell FV fraction.
    pub max_blend: f64,
}

impl Default for BlendControl {
    fn default() -> Self {
        BlendControl {
            onset: 0.5,
            full_at: 1.0,
            max_blend: 1.0,
        }
    }
}

pub fn blending_factors(indicator: &[f64], ctrl: &BlendControl) -> Vec<f64> {
    indicator
        .iter()
        .map(|&eta| {
            let a = (eta - ctrl.onset) / (ctrl.full_at - ctrl.onset);
            ctrl.max_blend * a.clamp(0.0, 1.0)
        })
        .collect()
}
