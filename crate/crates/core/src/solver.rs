//! Time-marching driver combining the DG residual, shock capturing,
//! positivity limiting, and adaptive refinement.

use crate::amr::{self, RefinementControl};
use crate::error::Result;
use crate::field::Field;
use crate::gas::GasModel;
use crate::limiter::{self, BlendControl, PositivityFloors};
use crate::mesh::ForestMesh;
use crate::residual::{self, BcContext};
use crate::timestepping::{self, CflSettings};

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub cfl: CflSettings,
    /// Stagewise positivity limiting; `None` disables it (smooth test cases).
    pub floors: Option<PositivityFloors>,
    /// Indicator-driven subcell FV blending; `None` runs pure DG.
    pub blend: Option<BlendControl>,
    /// Re-adapt the forest every this many steps.
    pub adapt_every: Option<(usize, RefinementControl)>,
    /// Hard cap on dt on top of the CFL bound (e.g. control substeps).
    pub max_dt: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            cfl: CflSettings::default(),
            floors: Some(PositivityFloors::default()),
            blend: Some(BlendControl::default()),
            adapt_every: None,
            max_dt: None,
        }
    }
}

pub struct Simulation {
    pub mesh: ForestMesh,
    pub field: Field,
    pub gas: GasModel,
    pub ctx: BcContext,
    pub t: f64,
    pub opts: SolverOptions,
    steps_since_adapt: usize,
}

impl Simulation {
    pub fn new(
        mesh: ForestMesh,
        field: Field,
        gas: GasModel,
        ctx: BcContext,
        opts: SolverOptions,
    ) -> Self {
        Simulation {
            mesh,
            field,
            gas,
            ctx,
            t: 0.0,
            opts,
            steps_since_adapt: 0,
        }
    }

    /// Advances one step; returns the dt taken. `dt_cap` additionally limits
    /// the step (used to land exactly on an end time).
    pub fn step(&mut self, dt_cap: Option<f64>) -> Result<f64> {
        let blend_factors = self.opts.blend.as_ref().map(|ctrl| {
            let eta = amr::lohner_indicator_auto(&self.field, &self.mesh);
            limiter::blending_factors(&eta, ctrl)
        });
        let mut dt = timestepping::compute_dt(&self.field, &self.mesh, &self.gas, &self.opts.cfl);
        if let Some(cap) = self.opts.max_dt {
            dt = dt.min(cap);
        }
        if let Some(cap) = dt_cap {
            dt = dt.min(cap);
        }
        let mesh = &self.mesh;
        let gas = &self.gas;
        let ctx = &self.ctx;
        let floors = self.opts.floors;
        let next = timestepping::ssprk54_step(
            &self.field,
            self.t,
            dt,
            |u, t| {
                residual::residual_with_blending(
                    u,
                    mesh,
                    gas,
                    ctx,
                    t,
                    blend_factors.as_deref(),
                )
            },
            |u| match &floors {
                Some(fl) => limiter::positivity_limit(u, mesh, gas, fl),
                None => Ok(()),
            },
        )?;
        self.field = next;
        self.t += dt;
        self.steps_since_adapt += 1;

        if let Some((every, ctrl)) = &self.opts.adapt_every {
            if self.steps_since_adapt >= *every {
                self.adapt(&ctrl.clone())?;
                self.steps_since_adapt = 0;
            }
        }
        Ok(dt)
    }

    /// Re-grids now using the smoothness indicator.
    pub fn adapt(&mut self, ctrl: &RefinementControl) -> Result<()> {
        let eta = match ctrl.epsilon {
            Some(eps) => amr::lohner_indicator(&self.field, &self.mesh, eps)?,
            None => amr::lohner_indicator_auto(&self.field, &self.mesh),
        };
        let flags = amr::flag_elements(&eta, &self.mesh, ctrl);
        let (mesh, field) = amr::adapt(&self.mesh, &self.field, &flags)?;
        self.mesh = mesh;
        self.field = field;
        Ok(())
    }

    /// Advances to `t_end`, shortening the last step to land on it exactly.
    /// Returns the number of steps taken.
    pub fn advance_to(&mut self, t_end: f64) -> Result<usize> {
        let mut steps = 0;
        while self.t < t_end - 1e-14 * t_end.abs().max(1.0) {
            self.step(Some(t_end - self.t))?;
            steps += 1;
        }
        Ok(steps)
    }
}
