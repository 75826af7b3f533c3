//! Solver correctness on analytic cases: free-stream preservation on
//! distorted and locally refined meshes, discrete conservation, and vortex
//! transport accuracy including adaptation mid-run.

mod support;

use inletctl::amr::{self, Flag};
use inletctl::field::Field;
use inletctl::gas::{self, GasModel};
use inletctl::limiter::BlendControl;
use inletctl::mesh::{BcTag, BoundaryRule, ForestMesh, Side, TreeGrid};
use inletctl::residual::{self, BcContext};
use inletctl::solver::{Simulation, SolverOptions};
use inletctl::timestepping::CflSettings;
use support::{unit_gas, Vortex};

fn refine_block(mesh: &ForestMesh, field: &Field, lo: usize, hi: usize) -> (ForestMesh, Field) {
    let flags: Vec<Flag> = (0..mesh.n_elements())
        .map(|e| if e >= lo && e < hi { Flag::Refine } else { Flag::Keep })
        .collect();
    amr::adapt(mesh, field, &flags).unwrap()
}

#[test]
fn freestream_preserved_on_refined_periodic_mesh() {
    let gas = GasModel::new(1.4, 287.87, 1e-3, 0.72).unwrap();
    let mesh = ForestMesh::periodic_rect(4, 0.0, 2.0, 0.0, 1.0, 4, 2).unwrap();
    let fs = gas::state_from_rho_u_v_p(1.0, 0.8, 0.3, 1.0, &gas);
    let field = Field::uniform(&mesh, fs);
    // introduce mortar faces
    let (mesh, _) = refine_block(&mesh, &field, 2, 5);
    assert!(mesh.faces.iter().any(|f| matches!(f, inletctl::mesh::Face::Mortar { .. })));
    let field = Field::uniform(&mesh, fs);
    let ctx = BcContext::freestream_only(fs);
    let r = residual::residual(&field, &mesh, &gas, &ctx, 0.0).unwrap();
    assert!(r.max_abs() < 1e-11, "residual {}", r.max_abs());
}

#[test]
fn freestream_preserved_on_sheared_channel_with_boundaries() {
    // curved channel between a ramped floor and a slanted roof, so element
    // Jacobians vary in space; inflow/outflow/wall-free boundary mix
    let gas = GasModel::new(1.4, 287.87, 0.0, 0.72).unwrap();
    let xs: Vec<f64> = (0..=6).map(|i| i as f64 * 0.5).collect();
    let y_low: Vec<f64> = xs.iter().map(|&x| if x < 1.0 { 0.0 } else { 0.15 * (x - 1.0) }).collect();
    let y_up: Vec<f64> = xs.iter().map(|&x| 1.0 + 0.05 * x).collect();
    let grid = TreeGrid::channel(&xs, &y_low, &y_up, 2).unwrap();
    let rules = vec![
        BoundaryRule { side: Side::West.index(), lo: f64::NEG_INFINITY, hi: f64::INFINITY, tag: BcTag::SupersonicInflow },
        BoundaryRule { side: Side::East.index(), lo: f64::NEG_INFINITY, hi: f64::INFINITY, tag: BcTag::SupersonicOutflow },
        BoundaryRule { side: Side::South.index(), lo: f64::NEG_INFINITY, hi: f64::INFINITY, tag: BcTag::SupersonicOutflow },
        BoundaryRule { side: Side::North.index(), lo: f64::NEG_INFINITY, hi: f64::INFINITY, tag: BcTag::SupersonicOutflow },
    ];
    let mesh = ForestMesh::from_tree_grid(grid, 5, rules, 0).unwrap();
    let fs = gas::state_from_rho_u_v_p(0.0303, 870.0, 25.0, 900.0, &gas);
    let field = Field::uniform(&mesh, fs);
    let ctx = BcContext::freestream_only(fs);
    let r = residual::residual(&field, &mesh, &gas, &ctx, 0.0).unwrap();
    // scale tolerance by the flux magnitude over the smallest element
    let scale = fs.rho_e * 900.0 / mesh.dx_min();
    assert!(r.max_abs() < 1e-11 * scale, "residual {} scale {}", r.max_abs(), scale);
}

#[test]
fn conservation_under_blended_stepping() {
    let g = unit_gas();
    let v = Vortex { l: 10.0, x0: 5.0, y0: 5.0, ..Vortex::standard() };
    let mesh = ForestMesh::periodic_rect(4, 0.0, 10.0, 0.0, 10.0, 4, 4).unwrap();
    let field = Field::from_fn(&mesh, |x, y| v.state(x, y, 0.0, &g));
    let before = field.conserved_integrals(&mesh);
    let ctx = BcContext::freestream_only(gas::state_from_rho_u_v_p(1.0, 1.0, 1.0, 1.0, &g));
    let opts = SolverOptions {
        // force some blending activity by lowering the onset
        blend: Some(BlendControl { onset: 0.05, full_at: 0.2, max_blend: 0.7 }),
        ..SolverOptions::default()
    };
    let mut sim = Simulation::new(mesh, field, g, ctx, opts);
    for _ in 0..10 {
        sim.step(None).unwrap();
    }
    let after = sim.field.conserved_integrals(&sim.mesh);
    for c in 0..4 {
        let scale = before[c].abs().max(1.0);
        assert!(
            (after[c] - before[c]).abs() < 1e-12 * scale,
            "component {c}: {} vs {}",
            after[c],
            before[c]
        );
    }
}

#[test]
fn vortex_transport_accuracy() {
    let g = unit_gas();
    let v = Vortex { l: 10.0, x0: 5.0, y0: 5.0, ..Vortex::standard() };
    let mesh = ForestMesh::periodic_rect(5, 0.0, 10.0, 0.0, 10.0, 5, 5).unwrap();
    let field = Field::from_fn(&mesh, |x, y| v.state(x, y, 0.0, &g));
    let ctx = BcContext::freestream_only(gas::state_from_rho_u_v_p(1.0, 1.0, 1.0, 1.0, &g));
    let opts = SolverOptions {
        floors: None,
        blend: None,
        cfl: CflSettings { safety: 0.9, c_conv: 0.8, c_diff: 0.5 },
        ..SolverOptions::default()
    };
    let mut sim = Simulation::new(mesh, field, g, ctx, opts);
    sim.advance_to(0.5).unwrap();
    let err = sim
        .field
        .density_l2_error(&sim.mesh, |x, y| v.density(x, y, 0.5));
    assert!(err < 1e-2, "L2 density error {err}");
}

#[test]
fn vortex_with_adaptation_stays_conservative_and_accurate() {
    let g = unit_gas();
    let v = Vortex { l: 10.0, x0: 5.0, y0: 5.0, ..Vortex::standard() };
    let mesh = ForestMesh::periodic_rect(4, 0.0, 10.0, 0.0, 10.0, 4, 4).unwrap();
    let field = Field::from_fn(&mesh, |x, y| v.state(x, y, 0.0, &g));
    let before = field.conserved_integrals(&mesh);
    let ctx = BcContext::freestream_only(gas::state_from_rho_u_v_p(1.0, 1.0, 1.0, 1.0, &g));
    let opts = SolverOptions {
        floors: None,
        blend: None,
        cfl: CflSettings { safety: 0.9, c_conv: 0.8, c_diff: 0.5 },
        adapt_every: Some((
            2,
            amr::RefinementControl {
                max_level: 1,
                ..amr::RefinementControl::default()
            },
        )),
        ..SolverOptions::default()
    };
    let mut sim = Simulation::new(mesh, field, g, ctx, opts);
    let n0 = sim.mesh.n_elements();
    sim.advance_to(0.3).unwrap();
    assert!(sim.mesh.n_elements() > n0, "expected refinement near the core");
    let after = sim.field.conserved_integrals(&sim.mesh);
    for c in 0..4 {
        let scale = before[c].abs().max(1.0);
        assert!((after[c] - before[c]).abs() < 1e-11 * scale, "component {c}");
    }
    let err = sim
        .field
        .density_l2_error(&sim.mesh, |x, y| v.density(x, y, sim.t));
    assert!(err < 5e-2, "L2 density error {err}");
}
