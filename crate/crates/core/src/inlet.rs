//! Hypersonic-inlet case definition: ramp/cowl geometry and boundary
//! tagging, throttle blockage, microjet actuation, wall probes and sensors,
//! exit mass flow, Q-criterion diagnostics, and baseline-run production.
//!
//! Geometry coordinates are configured in millimetres and converted to
//! metres when the mesh is built. The shipped default polyline is read off
//! a schematic and is approximate; everything is overridable from the case
//! config file.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::gas::{self, ConservativeState, GasModel};
use crate::mesh::{BcTag, BoundaryRule, Face, ForestMesh, Side, TreeGrid};
use crate::residual::{BcContext, JetSpec};
use crate::solver::{Simulation, SolverOptions};

/// Millimetres-to-metres scale for configured geometry.
pub const MM: f64 = 1e-3;

/// Flattening exponent of the jet velocity profile.
pub const PHI_EXPONENT: f64 = 0.1;

/// Freestream definition: Mach 5 at 900 Pa / 101 K with a unit-length
/// Reynolds number that fixes the (constant) dynamic viscosity.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Freestream {
    pub mach: f64,
    pub pressure: f64,
    pub temperature: f64,
    pub gas_constant: f64,
    pub gamma: f64,
    pub prandtl: f64,
    pub re_unit: f64,
}

impl Default for Freestream {
    fn default() -> Self {
        Freestream {
            mach: 5.0,
            pressure: 900.0,
            temperature: 101.0,
            gas_constant: 287.87,
            gamma: 1.4,
            prandtl: 0.72,
            re_unit: 5.0e6,
        }
    }
}

impl Freestream {
    pub fn density(&self) -> f64 {
        self.pressure / (self.gas_constant * self.temperature)
    }

    pub fn sound_speed(&self) -> f64 {
        (self.gamma * self.gas_constant * self.temperature).sqrt()
    }

    pub fn speed(&self) -> f64 {
        self.mach * self.sound_speed()
    }

    /// mu = rho_inf u_inf / Re_unit.
    pub fn viscosity(&self) -> f64 {
        self.density() * self.speed() / self.re_unit
    }

    pub fn gas_model(&self) -> Result<GasModel> {
        GasModel::new(self.gamma, self.gas_constant, self.viscosity(), self.prandtl)
    }

    pub fn state(&self, gas: &GasModel) -> ConservativeState {
        gas::state_from_rho_u_v_p(self.density(), self.speed(), 0.0, self.pressure, gas)
    }
}

/// Which wall a jet segment actuates and in which sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JetKind {
    /// Blowing off the second ramp at angle ramp2 + beta from horizontal.
    Blowing,
    /// Suction into the isolator floor.
    SuctionFloor,
    /// Suction into the cowl interior surface.
    SuctionCowl,
}

/// Wall-aligned jet segment, arc positions in mm along x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JetSegment {
    pub x_start: f64,
    pub x_end: f64,
    #[serde(default)]
    pub kind: Option<JetKind>,
}

impl JetSegment {
    pub fn width(&self) -> f64 {
        self.x_end - self.x_start
    }
}

/// Inlet geometry per the schematic: two compression ramps, a cowl, a
/// constant-height isolator, and three groups of microjet segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InletGeometry {
    pub ramp1_angle_deg: f64,
    pub ramp2_angle_deg: f64,
    /// Body-side polyline (mm), strictly increasing in x; last span is the
    /// horizontal isolator floor ending at the exit.
    pub body: Vec<[f64; 2]>,
    /// x position of the cowl lip (mm); upstream of it the top boundary is
    /// freestream inflow, downstream it is the cowl interior wall.
    pub cowl_lip_x: f64,
    /// Isolator height A_i proxy (mm); the cowl sits this far above the floor.
    pub isolator_height: f64,
    /// Throttling ratio TR in percent, 0 <= TR < 100.
    pub throttle_ratio: f64,
    /// Blowing jets on the second ramp (Gamma_1).
    pub blowing: Vec<JetSegment>,
    /// Suction jets on the isolator floor (Gamma_2).
    pub suction_floor: Vec<JetSegment>,
    /// Suction jets on the cowl interior (Gamma_3).
    pub suction_cowl: Vec<JetSegment>,
    /// Treat body/cowl/plug as slip walls. Desk-scale meshes cannot resolve
    /// wall boundary layers; the numerical layers a no-slip wall produces at
    /// grid thickness choke the duct regardless of contraction, so the
    /// qualitative unstart configuration runs inviscid walls.
    pub inviscid_walls: bool,
}

impl Default for InletGeometry {
    fn default() -> Self {
        let a1: f64 = 9.0;
        let a2: f64 = 21.0;
        let y1 = 200.0 * a1.to_radians().tan();
        let y2 = y1 + 160.0 * a2.to_radians().tan();
        // blowing width chosen so the ramp arc length is 8 mm, matching the
        // 8 mm suction widths; counts 3/6/3 then give A_s1 = 2 A_b, A_s2 = A_b
        let wb = 8.0 * a2.to_radians().cos();
        let seg = |x0: f64, w: f64, kind| JetSegment {
            x_start: x0,
            x_end: x0 + w,
            kind: Some(kind),
        };
        InletGeometry {
            ramp1_angle_deg: a1,
            ramp2_angle_deg: a2,
            body: vec![[0.0, 0.0], [200.0, y1], [360.0, y2], [700.0, y2]],
            cowl_lip_x: 340.0,
            isolator_height: 40.0,
            throttle_ratio: 0.0,
            blowing: vec![
                seg(240.0, wb, JetKind::Blowing),
                seg(270.0, wb, JetKind::Blowing),
                seg(300.0, wb, JetKind::Blowing),
            ],
            suction_floor: (0..6)
                .map(|i| seg(380.0 + 30.0 * i as f64, 8.0, JetKind::SuctionFloor))
                .collect(),
            suction_cowl: (0..3)
                .map(|i| seg(380.0 + 40.0 * i as f64, 8.0, JetKind::SuctionCowl))
                .collect(),
            inviscid_walls: false,
        }
    }
}

impl InletGeometry {
    pub fn exit_x(&self) -> f64 {
        self.body.last().map(|p| p[0]).unwrap_or(0.0)
    }

    /// y of the isolator floor (mm).
    pub fn floor_y(&self) -> f64 {
        self.body.last().map(|p| p[1]).unwrap_or(0.0)
    }

    /// y of the cowl interior surface (mm).
    pub fn cowl_y(&self) -> f64 {
        self.floor_y() + self.isolator_height
    }

    /// Open exit height A_t = A_i (1 - TR/100), in mm.
    pub fn exit_height(&self) -> f64 {
        self.isolator_height * (1.0 - self.throttle_ratio / 100.0)
    }

    /// Total blowing area per unit depth (mm): arc length on the ramp.
    pub fn area_blowing(&self) -> f64 {
        let c = self.ramp2_angle_deg.to_radians().cos();
        self.blowing.iter().map(|s| s.width() / c).sum()
    }

    /// Total floor-suction area per unit depth (mm).
    pub fn area_suction_floor(&self) -> f64 {
        self.suction_floor.iter().map(|s| s.width()).sum()
    }

    /// Total cowl-suction area per unit depth (mm).
    pub fn area_suction_cowl(&self) -> f64 {
        self.suction_cowl.iter().map(|s| s.width()).sum()
    }

    /// x spans of body segments whose slope matches `angle_deg` within tol.
    fn body_spans_with_slope(&self, angle_deg: f64) -> Vec<[f64; 2]> {
        let target = angle_deg.to_radians().tan();
        let mut spans = Vec::new();
        for w in self.body.windows(2) {
            let dx = w[1][0] - w[0][0];
            if dx <= 0.0 {
                continue;
            }
            let slope = (w[1][1] - w[0][1]) / dx;
            if (slope - target).abs() <= 1e-9 * (1.0 + target.abs()) {
                spans.push([w[0][0], w[1][0]]);
            }
        }
        spans
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..100.0).contains(&self.throttle_ratio) {
            return Err(Error::Config(format!(
                "throttle ratio {} outside [0, 100)",
                self.throttle_ratio
            )));
        }
        if self.body.len() < 2 {
            return Err(Error::Geometry("body polyline needs >= 2 points".into()));
        }
        for w in self.body.windows(2) {
            if w[1][0] <= w[0][0] {
                return Err(Error::Geometry(format!(
                    "body polyline x not strictly increasing at {}",
                    w[1][0]
                )));
            }
        }
        if self.isolator_height <= 0.0 {
            return Err(Error::Geometry("isolator height must be positive".into()));
        }
        // upper boundary above the body everywhere => no self-intersection
        let cy = self.cowl_y();
        for p in &self.body {
            if p[1] >= cy {
                return Err(Error::Geometry(format!(
                    "body reaches the cowl surface at x = {}",
                    p[0]
                )));
            }
        }
        if !(self.body[0][0]..self.exit_x()).contains(&self.cowl_lip_x) {
            return Err(Error::Geometry("cowl lip outside the body x range".into()));
        }
        let in_spans = |seg: &JetSegment, spans: &[[f64; 2]]| {
            spans
                .iter()
                .any(|s| seg.x_start >= s[0] - 1e-9 && seg.x_end <= s[1] + 1e-9)
        };
        let ramp2 = self.body_spans_with_slope(self.ramp2_angle_deg);
        let floor = self.body_spans_with_slope(0.0);
        for (list, spans, name) in [
            (&self.blowing, &ramp2, "blowing"),
            (&self.suction_floor, &floor, "floor suction"),
        ] {
            for seg in list.iter() {
                if seg.width() <= 0.0 {
                    return Err(Error::Geometry(format!("{name} jet has non-positive width")));
                }
                if !in_spans(seg, spans) {
                    return Err(Error::Geometry(format!(
                        "{name} jet [{}, {}] does not lie on its wall",
                        seg.x_start, seg.x_end
                    )));
                }
            }
        }
        for seg in &self.suction_cowl {
            if seg.width() <= 0.0 {
                return Err(Error::Geometry("cowl jet has non-positive width".into()));
            }
            if seg.x_start < self.cowl_lip_x - 1e-9 || seg.x_end > self.exit_x() + 1e-9 {
                return Err(Error::Geometry(format!(
                    "cowl suction jet [{}, {}] does not lie on the cowl",
                    seg.x_start, seg.x_end
                )));
            }
        }
        // per-wall non-overlap
        for list in [&self.blowing, &self.suction_floor, &self.suction_cowl] {
            let mut spans: Vec<_> = list.iter().map(|s| (s.x_start, s.x_end)).collect();
            spans.sort_by(|a, b| a.0.total_cmp(&b.0));
            for w in spans.windows(2) {
                if w[1].0 < w[0].1 - 1e-12 {
                    return Err(Error::Geometry(format!(
                        "jet segments overlap near x = {}",
                        w[1].0
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Jet actuation command: velocity factors (each jet speed is lambda * u_inf)
/// plus the blowing angle beta relative to the ramp tangent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JetCommand {
    pub lambda_b: f64,
    pub lambda_s1: f64,
    pub lambda_s2: f64,
    /// Blowing angle above the ramp surface tangent, radians.
    pub beta: f64,
}

impl JetCommand {
    pub fn zero() -> Self {
        JetCommand {
            lambda_b: 0.0,
            lambda_s1: 0.0,
            lambda_s2: 0.0,
            beta: 0.0,
        }
    }

    /// Clamps all components into the actuator bounds.
    pub fn clamped(&self, limits: &ActuatorLimits) -> Self {
        JetCommand {
            lambda_b: self.lambda_b.clamp(0.0, limits.lambda_max),
            lambda_s1: self.lambda_s1.clamp(0.0, limits.lambda_max),
            lambda_s2: self.lambda_s2.clamp(0.0, limits.lambda_max),
            beta: self.beta.clamp(limits.beta_min, limits.beta_max),
        }
    }

    pub fn validate(&self, limits: &ActuatorLimits) -> Result<()> {
        for (name, v) in [
            ("lambda_b", self.lambda_b),
            ("lambda_s1", self.lambda_s1),
            ("lambda_s2", self.lambda_s2),
        ] {
            if !(0.0..=limits.lambda_max).contains(&v) {
                return Err(Error::Config(format!(
                    "{name} = {v} outside [0, {}]",
                    limits.lambda_max
                )));
            }
        }
        if !(limits.beta_min..=limits.beta_max).contains(&self.beta) {
            return Err(Error::Config(format!(
                "beta = {} outside [{}, {}]",
                self.beta, limits.beta_min, limits.beta_max
            )));
        }
        Ok(())
    }
}

/// Bounds on the actuation command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorLimits {
    pub lambda_max: f64,
    /// Blowing-angle bounds, radians.
    pub beta_min: f64,
    pub beta_max: f64,
}

impl Default for ActuatorLimits {
    fn default() -> Self {
        ActuatorLimits {
            lambda_max: 1.0,
            beta_min: 0.0,
            beta_max: 45f64.to_radians(),
        }
    }
}

/// Flattened-sine jet speed at arc position `x` inside `segment`.
pub fn jet_velocity_profile(
    x: f64,
    segment: &JetSegment,
    lambda: f64,
    u_inf: f64,
    phi: f64,
) -> Result<f64> {
    if x < segment.x_start || x > segment.x_end {
        return Err(Error::invalid_state(
            "arc position",
            x,
            format!("outside jet segment [{}, {}]", segment.x_start, segment.x_end),
        ));
    }
    let s = (x - segment.x_start) / (segment.x_end - segment.x_start);
    if s <= 0.0 || s >= 1.0 {
        // exact zero at the edges; sin(pi) rounds to ~1e-16 and the
        // fractional power would inflate it
        return Ok(0.0);
    }
    Ok(lambda * u_inf * (std::f64::consts::PI * s).sin().powf(phi))
}

/// Unit jet velocity direction in the global frame. Blowing leaves the ramp
/// at ramp2 + beta from horizontal; suction points into its wall.
pub fn jet_direction(segment: &JetSegment, ramp2_angle_deg: f64, beta: f64) -> Result<[f64; 2]> {
    match segment.kind {
        Some(JetKind::Blowing) => {
            let theta = ramp2_angle_deg.to_radians() + beta;
            Ok([theta.cos(), theta.sin()])
        }
        Some(JetKind::SuctionFloor) => Ok([0.0, -1.0]),
        Some(JetKind::SuctionCowl) => Ok([0.0, 1.0]),
        None => Err(Error::Config(format!(
            "jet segment [{}, {}] has no blowing/suction tag",
            segment.x_start, segment.x_end
        ))),
    }
}

/// Blowing density closing the discrete mass balance
/// rho_b A_b v_b = rho_s1 A_s1 v_s1 + rho_s2 A_s2 v_s2
/// with A_s1 = 2 A_b and A_s2 = A_b.
pub fn blowing_density_from_balance(
    rho_s1: f64,
    rho_s2: f64,
    v_b: f64,
    v_s1: f64,
    v_s2: f64,
) -> Result<f64> {
    if v_b <= 0.0 {
        if v_s1 > 0.0 || v_s2 > 0.0 {
            return Err(Error::BalanceInfeasible(
                "suction active with zero blowing speed; zero the suction too".into(),
            ));
        }
        return Err(Error::BalanceInfeasible("blowing speed must be positive".into()));
    }
    let rho_b = (2.0 * rho_s1 * v_s1 + rho_s2 * v_s2) / v_b;
    if rho_b <= 0.0 {
        return Err(Error::BalanceInfeasible(
            "zero suction mass flux gives rho_b = 0; blowing requires rho_b > 0".into(),
        ));
    }
    Ok(rho_b)
}

/// Built case: immutable after construction; diagnostics are read-only.
pub struct InletCase {
    pub geometry: InletGeometry,
    pub freestream: Freestream,
    pub gas: GasModel,
    pub mesh: ForestMesh,
    /// Uniform-freestream initial condition.
    pub field: Field,
}

/// Tree grid and boundary rules for the geometry (SI units). Jet walls get
/// one `JetWall(id)` rule each, ids ordered blowing, floor suction, cowl
/// suction; the throttle plug is a no-slip band at the top of the exit face.
pub fn inlet_grid(geom: &InletGeometry, nty: usize, max_dx_mm: f64) -> Result<(TreeGrid, Vec<BoundaryRule>)> {
    geom.validate()?;
    let mut stations: Vec<f64> = geom.body.iter().map(|p| p[0]).collect();
    stations.push(geom.cowl_lip_x);
    for seg in geom
        .blowing
        .iter()
        .chain(&geom.suction_floor)
        .chain(&geom.suction_cowl)
    {
        stations.push(seg.x_start);
        stations.push(seg.x_end);
    }
    stations.sort_by(f64::total_cmp);
    stations.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    // cap column width so the forest has workable aspect ratios
    let mut xs = Vec::new();
    for w in stations.windows(2) {
        xs.push(w[0]);
        let parts = ((w[1] - w[0]) / max_dx_mm).ceil() as usize;
        for k in 1..parts {
            xs.push(w[0] + (w[1] - w[0]) * k as f64 / parts as f64);
        }
    }
    xs.push(*stations.last().unwrap());

    let interp = |x: f64| -> f64 {
        for w in geom.body.windows(2) {
            if x <= w[1][0] + 1e-12 {
                let s = (x - w[0][0]) / (w[1][0] - w[0][0]);
                return w[0][1] + s * (w[1][1] - w[0][1]);
            }
        }
        geom.floor_y()
    };
    let y_low: Vec<f64> = xs.iter().map(|&x| interp(x) * MM).collect();
    let y_up: Vec<f64> = xs.iter().map(|_| geom.cowl_y() * MM).collect();
    let xs_m: Vec<f64> = xs.iter().map(|&x| x * MM).collect();
    let grid = TreeGrid::channel(&xs_m, &y_low, &y_up, nty)?;

    let mut rules = Vec::new();
    let mut id = 0usize;
    for seg in &geom.blowing {
        rules.push(BoundaryRule {
            side: Side::South.index(),
            lo: seg.x_start * MM,
            hi: seg.x_end * MM,
            tag: BcTag::JetWall(id),
        });
        id += 1;
    }
    for seg in &geom.suction_floor {
        rules.push(BoundaryRule {
            side: Side::South.index(),
            lo: seg.x_start * MM,
            hi: seg.x_end * MM,
            tag: BcTag::JetWall(id),
        });
        id += 1;
    }
    for seg in &geom.suction_cowl {
        rules.push(BoundaryRule {
            side: Side::North.index(),
            lo: seg.x_start * MM,
            hi: seg.x_end * MM,
            tag: BcTag::JetWall(id),
        });
        id += 1;
    }
    let wall = if geom.inviscid_walls {
        BcTag::SlipWall
    } else {
        BcTag::NoSlipWall
    };
    rules.push(BoundaryRule {
        side: Side::South.index(),
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
        tag: wall,
    });
    rules.push(BoundaryRule {
        side: Side::North.index(),
        lo: geom.cowl_lip_x * MM,
        hi: f64::INFINITY,
        tag: wall,
    });
    rules.push(BoundaryRule {
        side: Side::North.index(),
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
        tag: BcTag::SupersonicInflow,
    });
    rules.push(BoundaryRule {
        side: Side::West.index(),
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
        tag: BcTag::SupersonicInflow,
    });
    // exit: the throttle plane decides outflow-vs-plug per face node from
    // the context's open height, so TR is not quantized to whole faces
    rules.push(BoundaryRule {
        side: Side::East.index(),
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
        tag: BcTag::Throttle,
    });
    Ok((grid, rules))
}

/// Builds the case mesh and the uniform freestream initial condition.
pub fn build_inlet_case(
    geom: &InletGeometry,
    freestream: &Freestream,
    order: usize,
    base_level: u8,
) -> Result<InletCase> {
    let (grid, rules) = inlet_grid(geom, 3, 30.0)?;
    let mesh = ForestMesh::from_tree_grid(grid, order, rules, base_level)?;
    let gas = freestream.gas_model()?;
    let field = Field::uniform(&mesh, freestream.state(&gas));
    Ok(InletCase {
        geometry: geom.clone(),
        freestream: *freestream,
        gas,
        mesh,
        field,
    })
}

impl InletCase {
    /// All-jets-off boundary context (identical to plain no-slip walls).
    pub fn unactuated_context(&self) -> BcContext {
        BcContext {
            freestream: self.freestream.state(&self.gas),
            jets: self.jet_specs(&JetCommand::zero(), 0.0, None),
            throttle_y_open: self.throttle_y_open(),
            slip_walls: self.geometry.inviscid_walls,
        }
    }

    /// y of the top of the open exit span [m].
    fn throttle_y_open(&self) -> f64 {
        (self.geometry.floor_y() + self.geometry.exit_height()) * MM
    }

    fn jet_specs(&self, cmd: &JetCommand, u_inf: f64, rho_b: Option<f64>) -> Vec<JetSpec> {
        let g = &self.geometry;
        let mut jets = Vec::new();
        let mut push = |seg: &JetSegment, lambda: f64, density: Option<f64>| {
            jets.push(JetSpec {
                x_start: seg.x_start * MM,
                x_end: seg.x_end * MM,
                direction: jet_direction(seg, g.ramp2_angle_deg, cmd.beta)
                    .unwrap_or([0.0, 1.0]),
                peak_speed: lambda * u_inf,
                phi: PHI_EXPONENT,
                density,
            });
        };
        for seg in &g.blowing {
            push(seg, cmd.lambda_b, rho_b);
        }
        for seg in &g.suction_floor {
            push(seg, cmd.lambda_s1, None);
        }
        for seg in &g.suction_cowl {
            push(seg, cmd.lambda_s2, None);
        }
        jets
    }

    /// Boundary context for a command, closing the blowing density against
    /// the suction densities sampled from `field` at the segment midpoints.
    pub fn jet_context(&self, field: &Field, mesh: &ForestMesh, cmd: &JetCommand) -> Result<BcContext> {
        let freestream = self.freestream.state(&self.gas);
        if cmd.lambda_b == 0.0 && cmd.lambda_s1 == 0.0 && cmd.lambda_s2 == 0.0 {
            return Ok(BcContext {
                freestream,
                jets: self.jet_specs(cmd, 0.0, None),
                throttle_y_open: self.throttle_y_open(),
                slip_walls: self.geometry.inviscid_walls,
            });
        }
        let u_inf = self.freestream.speed();
        let (v_b, v_s1, v_s2) = (cmd.lambda_b * u_inf, cmd.lambda_s1 * u_inf, cmd.lambda_s2 * u_inf);
        let rho_b = if v_b > 0.0 || v_s1 > 0.0 || v_s2 > 0.0 {
            let rho_s1 = self.mean_wall_density(field, mesh, &self.geometry.suction_floor, self.geometry.floor_y())?;
            let rho_s2 = self.mean_wall_density(field, mesh, &self.geometry.suction_cowl, self.geometry.cowl_y())?;
            Some(blowing_density_from_balance(rho_s1, rho_s2, v_b, v_s1, v_s2)?)
        } else {
            None
        };
        Ok(BcContext {
            freestream,
            jets: self.jet_specs(cmd, u_inf, rho_b),
            throttle_y_open: self.throttle_y_open(),
            slip_walls: self.geometry.inviscid_walls,
        })
    }

    fn mean_wall_density(
        &self,
        field: &Field,
        mesh: &ForestMesh,
        segs: &[JetSegment],
        wall_y_mm: f64,
    ) -> Result<f64> {
        let mut sum = 0.0;
        for seg in segs {
            let x = 0.5 * (seg.x_start + seg.x_end) * MM;
            let y = wall_y_mm * MM;
            let (e, r) = mesh
                .locate(x, y)
                .ok_or(Error::ProbeOutsideMesh { x, y })?;
            sum += field.evaluate(mesh, e, r[0], r[1])[0];
        }
        Ok(sum / segs.len() as f64)
    }

    /// Per-group mass fluxes Q_i = rho_i A_i v_i (blowing, floor suction,
    /// cowl suction; kg s^-1 per unit depth) and the total jet kinetic power
    /// P = sum 1/2 Q_i^3 / (rho_i^2 A_i^2) for a command, with suction
    /// densities sampled from `field`.
    pub fn actuation_quantities(
        &self,
        field: &Field,
        mesh: &ForestMesh,
        cmd: &JetCommand,
    ) -> Result<([f64; 3], f64)> {
        if cmd.lambda_b == 0.0 && cmd.lambda_s1 == 0.0 && cmd.lambda_s2 == 0.0 {
            return Ok(([0.0; 3], 0.0));
        }
        let g = &self.geometry;
        let u_inf = self.freestream.speed();
        let v = [cmd.lambda_b * u_inf, cmd.lambda_s1 * u_inf, cmd.lambda_s2 * u_inf];
        let rho_s1 = self.mean_wall_density(field, mesh, &g.suction_floor, g.floor_y())?;
        let rho_s2 = self.mean_wall_density(field, mesh, &g.suction_cowl, g.cowl_y())?;
        let rho_b = blowing_density_from_balance(rho_s1, rho_s2, v[0], v[1], v[2])?;
        let rho = [rho_b, rho_s1, rho_s2];
        let area = [
            g.area_blowing() * MM,
            g.area_suction_floor() * MM,
            g.area_suction_cowl() * MM,
        ];
        let mut q = [0.0; 3];
        let mut power = 0.0;
        for i in 0..3 {
            q[i] = rho[i] * area[i] * v[i];
            power += 0.5 * rho[i] * area[i] * v[i].powi(3);
        }
        Ok((q, power))
    }

    /// Prescribed blowing and suction mass fluxes (per unit depth) for a
    /// context built by `jet_context`; equal by construction.
    pub fn prescribed_mass_fluxes(&self, ctx: &BcContext, field: &Field, mesh: &ForestMesh) -> Result<(f64, f64)> {
        let g = &self.geometry;
        let nb = g.blowing.len();
        let ns1 = g.suction_floor.len();
        let jet = |i: usize| -> &JetSpec { &ctx.jets[i] };
        let mut m_blow = 0.0;
        let c = g.ramp2_angle_deg.to_radians().cos();
        for (i, seg) in g.blowing.iter().enumerate() {
            let rho = jet(i).density.unwrap_or(0.0);
            m_blow += rho * (seg.width() / c * MM) * jet(i).peak_speed;
        }
        let rho_s1 = self.mean_wall_density(field, mesh, &g.suction_floor, g.floor_y())?;
        let rho_s2 = self.mean_wall_density(field, mesh, &g.suction_cowl, g.cowl_y())?;
        let mut m_suck = 0.0;
        for (i, seg) in g.suction_floor.iter().enumerate() {
            m_suck += rho_s1 * (seg.width() * MM) * jet(nb + i).peak_speed;
        }
        for (i, seg) in g.suction_cowl.iter().enumerate() {
            m_suck += rho_s2 * (seg.width() * MM) * jet(nb + ns1 + i).peak_speed;
        }
        Ok((m_blow, m_suck))
    }
}

/// Wall pressure probes: p1/p2 point probes plus N arc sensors split across
/// the isolator top and bottom walls. Coordinates in metres.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeSet {
    pub p1: [f64; 2],
    pub p2: [f64; 2],
    pub sensors: Vec<[f64; 2]>,
}

impl ProbeSet {
    /// Default layout: p1 at the cowl-lip region, p2 at the mid-isolator
    /// lower wall (both approximate), sensors split evenly between the
    /// isolator floor and the cowl.
    pub fn for_geometry(geom: &InletGeometry, n_sensors: usize) -> Self {
        let floor_y = geom.floor_y() * MM;
        let cowl_y = geom.cowl_y() * MM;
        let shoulder_x = geom.body[geom.body.len().saturating_sub(2)][0];
        let exit_x = geom.exit_x();
        let p1 = [(geom.cowl_lip_x + 5.0) * MM, cowl_y - 5.0 * MM];
        let p2 = [(0.5 * (shoulder_x + exit_x)) * MM, floor_y];
        let n_bot = n_sensors / 2;
        let n_top = n_sensors - n_bot;
        let mut sensors = Vec::with_capacity(n_sensors);
        let span = |x0: f64, x1: f64, k: usize, n: usize| {
            x0 + (x1 - x0) * (k as f64 + 0.5) / n as f64
        };
        for k in 0..n_bot {
            sensors.push([span(shoulder_x + 2.0, exit_x - 2.0, k, n_bot) * MM, floor_y]);
        }
        for k in 0..n_top {
            sensors.push([span(geom.cowl_lip_x + 2.0, exit_x - 2.0, k, n_top) * MM, cowl_y]);
        }
        ProbeSet { p1, p2, sensors }
    }

    pub fn validate(&self, mesh: &ForestMesh) -> Result<()> {
        for &[x, y] in [self.p1, self.p2].iter().chain(self.sensors.iter()) {
            mesh.locate(x, y).ok_or(Error::ProbeOutsideMesh { x, y })?;
        }
        Ok(())
    }
}

/// Pressure at each sensor via element-local polynomial evaluation.
pub fn sample_wall_pressures(
    field: &Field,
    mesh: &ForestMesh,
    gas: &GasModel,
    probes: &ProbeSet,
) -> Result<Vec<f64>> {
    probes
        .sensors
        .iter()
        .map(|&[x, y]| {
            field
                .pressure_at(mesh, gas, x, y)
                .ok_or(Error::ProbeOutsideMesh { x, y })
        })
        .collect()
}

/// Mass flow through the open part of the exit face, kg s^-1 per unit
/// depth: face-quadrature integral of rho u . n over A_t. Restricting the
/// quadrature to the open interval keeps the TR area scaling exact even
/// when the plug edge falls inside an element face.
pub fn exit_mass_flow(field: &Field, mesh: &ForestMesh, geom: &InletGeometry) -> f64 {
    let n = mesh.refel.n_nodes();
    let lo_open = geom.floor_y() * MM;
    let hi_open = (geom.floor_y() + geom.exit_height()) * MM;
    let exit_x = geom.exit_x() * MM;
    let mut mdot = 0.0;
    for face in &mesh.faces {
        if let Face::Boundary { elem, side: Side::East, .. } = face {
            let el = &mesh.elements[*elem];
            // exit faces are vertical; skip East faces elsewhere (none here)
            if (el.coords[n - 1][0] - exit_x).abs() > 1e-9 {
                continue;
            }
            let y0 = el.coords[n - 1][1];
            let y1 = el.coords[n * n - 1][1];
            let lo = y0.max(lo_open);
            let hi = y1.min(hi_open);
            if hi <= lo {
                continue;
            }
            let nvec = el.face_normal[Side::East.index()];
            for k in 0..n {
                let y = 0.5 * (lo + hi) + 0.5 * (hi - lo) * mesh.refel.nodes[k];
                let eta = 2.0 * (y - y0) / (y1 - y0) - 1.0;
                let v = field.evaluate(mesh, *elem, 1.0, eta);
                mdot += mesh.refel.weights[k] * 0.5 * (hi - lo) * (v[1] * nvec[0] + v[2] * nvec[1]);
            }
        }
    }
    mdot
}

/// Q-criterion Q = 1/2 (|Omega|^2 - |S|^2) per node, from element-local
/// polynomial velocity gradients.
pub fn q_criterion(field: &Field, mesh: &ForestMesh) -> Vec<Vec<f64>> {
    let n = mesh.refel.n_nodes();
    let d = &mesh.refel.diff_matrix;
    mesh.elements
        .iter()
        .enumerate()
        .map(|(e, el)| {
            let vel: Vec<[f64; 2]> = (0..n * n)
                .map(|k| {
                    let v = field.data[e][k];
                    [v[1] / v[0], v[2] / v[0]]
                })
                .collect();
            (0..n * n)
                .map(|node| {
                    let (i, j) = (node % n, node / n);
                    let mut dxi = [0.0; 2];
                    let mut deta = [0.0; 2];
                    for m in 0..n {
                        for c in 0..2 {
                            dxi[c] += d[i][m] * vel[j * n + m][c];
                            deta[c] += d[j][m] * vel[m * n + i][c];
                        }
                    }
                    let mt = &el.metric[node];
                    let inv_j = 1.0 / mt.jac;
                    let ddx = |c: usize| (mt.y_eta * dxi[c] - mt.y_xi * deta[c]) * inv_j;
                    let ddy = |c: usize| (-mt.x_eta * dxi[c] + mt.x_xi * deta[c]) * inv_j;
                    let (ux, uy) = (ddx(0), ddy(0));
                    let (vx, vy) = (ddx(1), ddy(1));
                    let omega = 0.5 * (uy - vx);
                    let s12 = 0.5 * (uy + vx);
                    let omega2 = 2.0 * omega * omega;
                    let s2 = ux * ux + vy * vy + 2.0 * s12 * s12;
                    0.5 * (omega2 - s2)
                })
                .collect()
        })
        .collect()
}

/// Mach number per node.
pub fn mach_field(field: &Field, mesh: &ForestMesh, gas: &GasModel) -> Vec<Vec<f64>> {
    let n = mesh.refel.n_nodes();
    mesh.elements
        .iter()
        .enumerate()
        .map(|(e, _)| {
            (0..n * n)
                .map(|k| {
                    let u = ConservativeState::from_vec4(field.data[e][k]);
                    let (vx, vy) = u.velocity();
                    let a = (gas.gamma * u.pressure(gas) / u.rho).sqrt();
                    (vx * vx + vy * vy).sqrt() / a
                })
                .collect()
        })
        .collect()
}

/// Point-cloud table "x y value" for external plotting.
pub fn export_point_cloud(mesh: &ForestMesh, values: &[Vec<f64>], name: &str) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(out, "# x y {name}");
    for (e, el) in mesh.elements.iter().enumerate() {
        for (k, v) in values[e].iter().enumerate() {
            let _ = writeln!(out, "{:.9e} {:.9e} {:.9e}", el.coords[k][0], el.coords[k][1], v);
        }
    }
    out
}

/// Baseline (TR = 0, jets off) run settings.
#[derive(Debug, Clone)]
pub struct BaselineOptions {
    /// Physical run duration [s].
    pub duration: f64,
    /// Number of trailing samples averaged into the baseline.
    pub avg_samples: usize,
    /// Sampling cadence in steps.
    pub sample_every: usize,
    pub solver: SolverOptions,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        BaselineOptions {
            duration: 2e-3,
            avg_samples: 50,
            sample_every: 10,
            solver: SolverOptions::default(),
        }
    }
}

/// Time-averaged baseline produced by `run_baseline`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineResult {
    pub sensor_pressures: Vec<f64>,
    pub p1: f64,
    pub p2: f64,
    pub n_steps: usize,
    pub t_end: f64,
}

/// Runs the unactuated no-throttling case and averages the sensor pressures
/// over the trailing window.
pub fn run_baseline(case: &InletCase, probes: &ProbeSet, opts: &BaselineOptions) -> Result<BaselineResult> {
    if case.geometry.throttle_ratio != 0.0 {
        return Err(Error::Config(format!(
            "baseline requires TR = 0, got {}",
            case.geometry.throttle_ratio
        )));
    }
    if opts.avg_samples == 0 || opts.sample_every == 0 {
        return Err(Error::Config("averaging window must be non-empty".into()));
    }
    probes.validate(&case.mesh)?;
    let ctx = case.unactuated_context();
    let mut sim = Simulation::new(
        case.mesh.clone(),
        case.field.clone(),
        case.gas,
        ctx,
        opts.solver.clone(),
    );
    let mut samples: Vec<(Vec<f64>, f64, f64)> = Vec::new();
    let take = |sim: &Simulation, samples: &mut Vec<(Vec<f64>, f64, f64)>| -> Result<()> {
        let s = sample_wall_pressures(&sim.field, &sim.mesh, &sim.gas, probes)?;
        let p = |pt: [f64; 2]| {
            sim.field
                .pressure_at(&sim.mesh, &sim.gas, pt[0], pt[1])
                .ok_or(Error::ProbeOutsideMesh { x: pt[0], y: pt[1] })
        };
        let (p1, p2) = (p(probes.p1)?, p(probes.p2)?);
        samples.push((s, p1, p2));
        if samples.len() > opts.avg_samples {
            samples.remove(0);
        }
        Ok(())
    };
    take(&sim, &mut samples)?;
    let mut steps = 0usize;
    while sim.t < opts.duration * (1.0 - 1e-14) {
        match sim.step(Some(opts.duration - sim.t)) {
            Ok(_) => {}
            Err(e) => {
                return Err(Error::SolverAbort {
                    time: sim.t,
                    detail: e.to_string(),
                })
            }
        }
        steps += 1;
        if steps % opts.sample_every == 0 || sim.t >= opts.duration * (1.0 - 1e-14) {
            take(&sim, &mut samples)?;
        }
    }
    let m = samples.len() as f64;
    let nsens = probes.sensors.len();
    let mut avg = vec![0.0; nsens];
    let (mut p1, mut p2) = (0.0, 0.0);
    for (s, a, b) in &samples {
        for (dst, v) in avg.iter_mut().zip(s) {
            *dst += v / m;
        }
        p1 += a / m;
        p2 += b / m;
    }
    Ok(BaselineResult {
        sensor_pressures: avg,
        p1,
        p2,
        n_steps: steps,
        t_end: sim.t,
    })
}
