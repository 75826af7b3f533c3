//! Quadtree-forest mesh of quadrilateral elements with 2:1-balanced
//! nonconforming faces.
//!
//! Root trees come from a structured grid of straight-sided quads (a
//! "tree grid"); leaves are addressed by (tree, level, ix, iy). All trees
//! share one orientation, so face traces on the two sides of an interior face
//! align index-by-index.

use crate::error::{Error, Result};
use crate::reference::ReferenceElement;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ElemKey {
    pub tree: u32,
    pub level: u8,
    pub ix: u32,
    pub iy: u32,
}

impl ElemKey {
    pub fn root(tree: u32) -> Self {
        ElemKey {
            tree,
            level: 0,
            ix: 0,
            iy: 0,
        }
    }

    pub fn parent(&self) -> Option<ElemKey> {
        if self.level == 0 {
            return None;
        }
        Some(ElemKey {
            tree: self.tree,
            level: self.level - 1,
            ix: self.ix / 2,
            iy: self.iy / 2,
        })
    }

    /// Children in (ix, iy) order: (0,0), (1,0), (0,1), (1,1).
    pub fn children(&self) -> [ElemKey; 4] {
        let (t, l) = (self.tree, self.level + 1);
        let (x, y) = (self.ix * 2, self.iy * 2);
        [
            ElemKey { tree: t, level: l, ix: x, iy: y },
            ElemKey { tree: t, level: l, ix: x + 1, iy: y },
            ElemKey { tree: t, level: l, ix: x, iy: y + 1 },
            ElemKey { tree: t, level: l, ix: x + 1, iy: y + 1 },
        ]
    }

    pub fn child_position(&self) -> (u32, u32) {
        (self.ix % 2, self.iy % 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    West,
    East,
    South,
    North,
}

pub const SIDES: [Side; 4] = [Side::West, Side::East, Side::South, Side::North];

impl Side {
    pub fn index(&self) -> usize {
        match self {
            Side::West => 0,
            Side::East => 1,
            Side::South => 2,
            Side::North => 3,
        }
    }

    pub fn opposite(&self) -> Side {
        match self {
            Side::West => Side::East,
            Side::East => Side::West,
            Side::South => Side::North,
            Side::North => Side::South,
        }
    }
}

/// Boundary condition tag carried by boundary faces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BcTag {
    SupersonicInflow,
    SupersonicOutflow,
    NoSlipWall,
    /// Inviscid wall: mirrors the normal velocity, keeps the tangential.
    SlipWall,
    /// Exit throttle plane: outflow below the context's open height, wall
    /// above, decided per face node so the plug is not face-quantized.
    Throttle,
    /// Wall segment owned by the jet with this index.
    JetWall(usize),
}

use serde::{Deserialize, Serialize};

/// Assigns tags to domain-boundary faces: on South/North sides the interval is
/// in x, on West/East in y; first matching rule wins.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryRule {
    pub side: usize, // Side::index()
    pub lo: f64,
    pub hi: f64,
    pub tag: BcTag,
}

#[derive(Debug, Clone)]
pub enum Face {
    /// Conforming interior face; trace index j on the left side matches trace
    /// index j on the right side.
    Interior {
        left: usize,
        left_side: Side,
        right: usize,
        right_side: Side,
    },
    /// 2:1 nonconforming face: `fine[0]` covers the lower half of the coarse
    /// face in the tangential coordinate.
    Mortar {
        coarse: usize,
        coarse_side: Side,
        fine: [usize; 2],
        fine_side: Side,
    },
    Boundary {
        elem: usize,
        side: Side,
        tag: BcTag,
    },
}

/// Structured grid of root quads; point (i, j) at index j*(ntx+1)+i.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeGrid {
    pub ntx: usize,
    pub nty: usize,
    pub points: Vec<[f64; 2]>,
    pub periodic_x: bool,
    pub periodic_y: bool,
}

impl TreeGrid {
    pub fn rect(x0: f64, x1: f64, y0: f64, y1: f64, ntx: usize, nty: usize) -> Self {
        let mut points = Vec::with_capacity((ntx + 1) * (nty + 1));
        for j in 0..=nty {
            for i in 0..=ntx {
                points.push([
                    x0 + (x1 - x0) * i as f64 / ntx as f64,
                    y0 + (y1 - y0) * j as f64 / nty as f64,
                ]);
            }
        }
        TreeGrid {
            ntx,
            nty,
            points,
            periodic_x: false,
            periodic_y: false,
        }
    }

    /// Sheared grid between a lower and an upper boundary polyline sampled at
    /// shared x stations: column i spans y_low[i]..y_up[i].
    pub fn channel(xs: &[f64], y_low: &[f64], y_up: &[f64], nty: usize) -> Result<Self> {
        let ntx = xs.len() - 1;
        if y_low.len() != xs.len() || y_up.len() != xs.len() {
            return Err(Error::Geometry(
                "boundary polylines must share the x stations".into(),
            ));
        }
        for i in 0..=ntx {
            if y_up[i] <= y_low[i] {
                return Err(Error::Geometry(format!(
                    "upper boundary below lower boundary at x = {}",
                    xs[i]
                )));
            }
        }
        let mut points = Vec::with_capacity((ntx + 1) * (nty + 1));
        for j in 0..=nty {
            let f = j as f64 / nty as f64;
            for i in 0..=ntx {
                points.push([xs[i], y_low[i] + f * (y_up[i] - y_low[i])]);
            }
        }
        Ok(TreeGrid {
            ntx,
            nty,
            points,
            periodic_x: false,
            periodic_y: false,
        })
    }

    pub fn n_trees(&self) -> usize {
        self.ntx * self.nty
    }

    pub fn tree_corners(&self, tree: u32) -> [[f64; 2]; 4] {
        let ti = tree as usize % self.ntx;
        let tj = tree as usize / self.ntx;
        let p = |i: usize, j: usize| self.points[j * (self.ntx + 1) + i];
        // order: (0,0), (1,0), (0,1), (1,1)
        [p(ti, tj), p(ti + 1, tj), p(ti, tj + 1), p(ti + 1, tj + 1)]
    }

    /// Neighboring tree across `side`, honoring periodicity.
    pub fn tree_neighbor(&self, tree: u32, side: Side) -> Option<u32> {
        let ti = tree as usize % self.ntx;
        let tj = tree as usize / self.ntx;
        let (ni, nj) = match side {
            Side::West => {
                if ti == 0 {
                    if !self.periodic_x {
                        return None;
                    }
                    (self.ntx - 1, tj)
                } else {
                    (ti - 1, tj)
                }
            }
            Side::East => {
                if ti + 1 == self.ntx {
                    if !self.periodic_x {
                        return None;
                    }
                    (0, tj)
                } else {
                    (ti + 1, tj)
                }
            }
            Side::South => {
                if tj == 0 {
                    if !self.periodic_y {
                        return None;
                    }
                    (ti, self.nty - 1)
                } else {
                    (ti, tj - 1)
                }
            }
            Side::North => {
                if tj + 1 == self.nty {
                    if !self.periodic_y {
                        return None;
                    }
                    (ti, 0)
                } else {
                    (ti, tj + 1)
                }
            }
        };
        Some((nj * self.ntx + ni) as u32)
    }
}

/// Key of the equal-level neighbor across `side`, possibly in another tree.
pub fn neighbor_key(grid: &TreeGrid, key: &ElemKey, side: Side) -> Option<ElemKey> {
    let n = 1u32 << key.level;
    let (mut ix, mut iy, mut tree) = (key.ix, key.iy, key.tree);
    match side {
        Side::West => {
            if ix == 0 {
                tree = grid.tree_neighbor(tree, side)?;
                ix = n - 1;
            } else {
                ix -= 1;
            }
        }
        Side::East => {
            if ix + 1 == n {
                tree = grid.tree_neighbor(tree, side)?;
                ix = 0;
            } else {
                ix += 1;
            }
        }
        Side::South => {
            if iy == 0 {
                tree = grid.tree_neighbor(tree, side)?;
                iy = n - 1;
            } else {
                iy -= 1;
            }
        }
        Side::North => {
            if iy + 1 == n {
                tree = grid.tree_neighbor(tree, side)?;
                iy = 0;
            } else {
                iy += 1;
            }
        }
    }
    Some(ElemKey {
        tree,
        level: key.level,
        ix,
        iy,
    })
}

/// Per-node mapping metrics of the bilinear element map.
#[derive(Debug, Clone, Copy)]
pub struct Metric {
    pub x_xi: f64,
    pub x_eta: f64,
    pub y_xi: f64,
    pub y_eta: f64,
    pub jac: f64,
}

#[derive(Debug, Clone)]
pub struct Element {
    pub key: ElemKey,
    /// Physical node coordinates, node (i, j) at index j*(p+1)+i.
    pub coords: Vec<[f64; 2]>,
    pub metric: Vec<Metric>,
    /// Outward unit normal per side (constant: faces are straight).
    pub face_normal: [[f64; 2]; 4],
    /// Surface Jacobian per side (constant along the straight face).
    pub face_sjac: [f64; 4],
    /// Minimum edge length, used by the CFL bound.
    pub dx_min: f64,
}

#[derive(Debug, Clone)]
pub struct ForestMesh {
    pub grid: TreeGrid,
    pub refel: Arc<ReferenceElement>,
    pub rules: Vec<BoundaryRule>,
    pub elements: Vec<Element>,
    pub leaf_index: BTreeMap<ElemKey, usize>,
    pub faces: Vec<Face>,
    pub max_level_present: u8,
}

impl ForestMesh {
    /// Builds a mesh whose leaves are all at `base_level`.
    pub fn from_tree_grid(
        grid: TreeGrid,
        order: usize,
        rules: Vec<BoundaryRule>,
        base_level: u8,
    ) -> Result<Self> {
        let mut leaves = BTreeSet::new();
        for tree in 0..grid.n_trees() as u32 {
            let n = 1u32 << base_level;
            for iy in 0..n {
                for ix in 0..n {
                    leaves.insert(ElemKey {
                        tree,
                        level: base_level,
                        ix,
                        iy,
                    });
                }
            }
        }
        Self::from_leaves(grid, order, rules, &leaves)
    }

    /// Builds a mesh from an explicit, balanced leaf set.
    pub fn from_leaves(
        grid: TreeGrid,
        order: usize,
        rules: Vec<BoundaryRule>,
        leaves: &BTreeSet<ElemKey>,
    ) -> Result<Self> {
        let refel = Arc::new(ReferenceElement::new(order)?);
        let mut elements = Vec::with_capacity(leaves.len());
        let mut leaf_index = BTreeMap::new();
        let mut max_level = 0;
        for key in leaves {
            let idx = elements.len();
            elements.push(build_element(&grid, &refel, *key)?);
            leaf_index.insert(*key, idx);
            max_level = max_level.max(key.level);
        }
        let faces = build_faces(&grid, &leaf_index, &rules)?;
        Ok(ForestMesh {
            grid,
            refel,
            rules,
            elements,
            leaf_index,
            faces,
            max_level_present: max_level,
        })
    }

    pub fn periodic_rect(
        order: usize,
        x0: f64,
        x1: f64,
        y0: f64,
        y1: f64,
        ntx: usize,
        nty: usize,
    ) -> Result<Self> {
        let mut grid = TreeGrid::rect(x0, x1, y0, y1, ntx, nty);
        grid.periodic_x = true;
        grid.periodic_y = true;
        Self::from_tree_grid(grid, order, Vec::new(), 0)
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_nodes_per_elem(&self) -> usize {
        let n = self.refel.n_nodes();
        n * n
    }

    pub fn order(&self) -> usize {
        self.refel.order
    }

    /// Minimum element edge length over the mesh.
    pub fn dx_min(&self) -> f64 {
        self.elements
            .iter()
            .map(|e| e.dx_min)
            .fold(f64::INFINITY, f64::min)
    }

    /// Node indices of the face trace on `side`, ordered by increasing
    /// tangential reference coordinate.
    pub fn face_node_indices(&self, side: Side) -> Vec<usize> {
        let n = self.refel.n_nodes();
        match side {
            Side::West => (0..n).map(|j| j * n).collect(),
            Side::East => (0..n).map(|j| j * n + (n - 1)).collect(),
            Side::South => (0..n).collect(),
            Side::North => (0..n).map(|i| (n - 1) * n + i).collect(),
        }
    }

    /// Locates the element containing a physical point and returns
    /// (element index, reference coords).
    pub fn locate(&self, x: f64, y: f64) -> Option<(usize, [f64; 2])> {
        let tol = 1e-9;
        for (idx, elem) in self.elements.iter().enumerate() {
            let (lo, hi) = elem_bbox(elem);
            if x < lo[0] - tol || x > hi[0] + tol || y < lo[1] - tol || y > hi[1] + tol {
                continue;
            }
            if let Some(r) = invert_bilinear(&self.grid, elem.key, x, y) {
                if r[0] >= -1.0 - 1e-8 && r[0] <= 1.0 + 1e-8 && r[1] >= -1.0 - 1e-8 && r[1] <= 1.0 + 1e-8 {
                    return Some((idx, r));
                }
            }
        }
        None
    }

    /// Self-describing structured text snapshot for debugging and plotting.
    pub fn export_snapshot(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# forest mesh snapshot");
        let _ = writeln!(out, "# columns: elem tree level ix iy x0 y0 x1 y1 x2 y2 x3 y3 bc_w bc_e bc_s bc_n");
        let mut tags: Vec<[String; 4]> =
            vec![std::array::from_fn(|_| "interior".to_string()); self.elements.len()];
        for face in &self.faces {
            if let Face::Boundary { elem, side, tag } = face {
                tags[*elem][side.index()] = format!("{tag:?}");
            }
        }
        for (idx, e) in self.elements.iter().enumerate() {
            let c = elem_corners(&self.grid, e.key);
            let _ = write!(
                out,
                "{} {} {} {} {}",
                idx, e.key.tree, e.key.level, e.key.ix, e.key.iy
            );
            for p in c {
                let _ = write!(out, " {} {}", p[0], p[1]);
            }
            for t in &tags[idx] {
                let _ = write!(out, " {t}");
            }
            let _ = writeln!(out);
        }
        out
    }
}

fn elem_bbox(elem: &Element) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for c in &elem.coords {
        for d in 0..2 {
            lo[d] = lo[d].min(c[d]);
            hi[d] = hi[d].max(c[d]);
        }
    }
    (lo, hi)
}

/// Physical corners of a leaf, in (0,0), (1,0), (0,1), (1,1) reference order.
pub fn elem_corners(grid: &TreeGrid, key: ElemKey) -> [[f64; 2]; 4] {
    let tc = grid.tree_corners(key.tree);
    let n = (1u32 << key.level) as f64;
    let map = |u: f64, v: f64| -> [f64; 2] {
        [
            (1.0 - u) * (1.0 - v) * tc[0][0]
                + u * (1.0 - v) * tc[1][0]
                + (1.0 - u) * v * tc[2][0]
                + u * v * tc[3][0],
            (1.0 - u) * (1.0 - v) * tc[0][1]
                + u * (1.0 - v) * tc[1][1]
                + (1.0 - u) * v * tc[2][1]
                + u * v * tc[3][1],
        ]
    };
    let u0 = key.ix as f64 / n;
    let u1 = (key.ix + 1) as f64 / n;
    let v0 = key.iy as f64 / n;
    let v1 = (key.iy + 1) as f64 / n;
    [map(u0, v0), map(u1, v0), map(u0, v1), map(u1, v1)]
}

fn build_element(grid: &TreeGrid, refel: &ReferenceElement, key: ElemKey) -> Result<Element> {
    let c = elem_corners(grid, key);
    let n = refel.n_nodes();
    let mut coords = Vec::with_capacity(n * n);
    let mut metric = Vec::with_capacity(n * n);
    // bilinear map over the element corners in reference coords [-1,1]^2
    let map = |xi: f64, eta: f64| -> ([f64; 2], Metric) {
        let a = 0.25 * (1.0 - xi) * (1.0 - eta);
        let b = 0.25 * (1.0 + xi) * (1.0 - eta);
        let d = 0.25 * (1.0 - xi) * (1.0 + eta);
        let e = 0.25 * (1.0 + xi) * (1.0 + eta);
        let x = a * c[0][0] + b * c[1][0] + d * c[2][0] + e * c[3][0];
        let y = a * c[0][1] + b * c[1][1] + d * c[2][1] + e * c[3][1];
        let x_xi = 0.25
            * ((c[1][0] - c[0][0]) * (1.0 - eta) + (c[3][0] - c[2][0]) * (1.0 + eta));
        let y_xi = 0.25
            * ((c[1][1] - c[0][1]) * (1.0 - eta) + (c[3][1] - c[2][1]) * (1.0 + eta));
        let x_eta = 0.25
            * ((c[2][0] - c[0][0]) * (1.0 - xi) + (c[3][0] - c[1][0]) * (1.0 + xi));
        let y_eta = 0.25
            * ((c[2][1] - c[0][1]) * (1.0 - xi) + (c[3][1] - c[1][1]) * (1.0 + xi));
        let jac = x_xi * y_eta - x_eta * y_xi;
        (
            [x, y],
            Metric {
                x_xi,
                x_eta,
                y_xi,
                y_eta,
                jac,
            },
        )
    };
    for j in 0..n {
        for i in 0..n {
            let (p, m) = map(refel.nodes[i], refel.nodes[j]);
            if m.jac <= 0.0 {
                return Err(Error::Geometry(format!(
                    "non-positive Jacobian {} in element {:?}",
                    m.jac, key
                )));
            }
            coords.push(p);
            metric.push(m);
        }
    }

    // straight faces: normals and surface Jacobians from the edge vectors
    let edge = |a: [f64; 2], b: [f64; 2]| [b[0] - a[0], b[1] - a[1]];
    let w = edge(c[0], c[2]); // west edge, increasing eta
    let e = edge(c[1], c[3]);
    let s = edge(c[0], c[1]); // south edge, increasing xi
    let nn = edge(c[2], c[3]);
    let len = |v: [f64; 2]| (v[0] * v[0] + v[1] * v[1]).sqrt();
    // face reference length is 2, so sJ = |edge| / 2
    let face_sjac = [len(w) / 2.0, len(e) / 2.0, len(s) / 2.0, len(nn) / 2.0];
    let unit = |v: [f64; 2]| {
        let l = len(v);
        [v[0] / l, v[1] / l]
    };
    let wt = unit(w);
    let et = unit(e);
    let st = unit(s);
    let nt = unit(nn);
    // outward normals: rotate the tangent; J > 0 fixes the orientation
    let face_normal = [
        [-wt[1], wt[0]],  // west: outward = -grad xi direction
        [et[1], -et[0]],  // east
        [st[1], -st[0]],  // south
        [-nt[1], nt[0]],  // north
    ];
    let dx_min = [len(w), len(e), len(s), len(nn)]
        .into_iter()
        .fold(f64::INFINITY, f64::min);

    Ok(Element {
        key,
        coords,
        metric,
        face_normal,
        face_sjac,
        dx_min,
    })
}

fn boundary_tag(rules: &[BoundaryRule], side: Side, midpoint: [f64; 2]) -> Result<BcTag> {
    let coord = match side {
        Side::South | Side::North => midpoint[0],
        Side::West | Side::East => midpoint[1],
    };
    for rule in rules {
        if rule.side == side.index() && coord >= rule.lo - 1e-12 && coord <= rule.hi + 1e-12 {
            return Ok(rule.tag);
        }
    }
    if rules.is_empty() {
        // meshes without rules (fully periodic tests) should never get here
        return Err(Error::Topology(format!(
            "unmatched boundary face on {side:?} at {midpoint:?}"
        )));
    }
    Err(Error::Topology(format!(
        "no boundary rule covers {side:?} at {midpoint:?}"
    )))
}

/// Which domain-grid side a boundary face lies on (the face side of the
/// element is the domain side, since trees share orientation).
fn build_faces(
    grid: &TreeGrid,
    leaf_index: &BTreeMap<ElemKey, usize>,
    rules: &[BoundaryRule],
) -> Result<Vec<Face>> {
    let mut faces = Vec::new();
    for (key, &idx) in leaf_index {
        for side in SIDES {
            match neighbor_key(grid, key, side) {
                None => {
                    let corners = elem_corners(grid, *key);
                    let (a, b) = match side {
                        Side::West => (corners[0], corners[2]),
                        Side::East => (corners[1], corners[3]),
                        Side::South => (corners[0], corners[1]),
                        Side::North => (corners[2], corners[3]),
                    };
                    let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
                    faces.push(Face::Boundary {
                        elem: idx,
                        side,
                        tag: boundary_tag(rules, side, mid)?,
                    });
                }
                Some(nk) => {
                    if let Some(&nidx) = leaf_index.get(&nk) {
                        // conforming: add once, from the West/South side owner
                        if matches!(side, Side::East | Side::North) {
                            faces.push(Face::Interior {
                                left: idx,
                                left_side: side,
                                right: nidx,
                                right_side: side.opposite(),
                            });
                        }
                        continue;
                    }
                    // finer neighbors: this element is the coarse mortar side
                    let fine_keys = fine_neighbors(&nk, side);
                    if let (Some(&f0), Some(&f1)) = (
                        leaf_index.get(&fine_keys[0]),
                        leaf_index.get(&fine_keys[1]),
                    ) {
                        faces.push(Face::Mortar {
                            coarse: idx,
                            coarse_side: side,
                            fine: [f0, f1],
                            fine_side: side.opposite(),
                        });
                        continue;
                    }
                    // coarser neighbor: handled when visiting the coarse side
                    if key
                        .parent()
                        .map(|p| {
                            neighbor_key(grid, &p, side)
                                .map(|pk| leaf_index.contains_key(&pk))
                                .unwrap_or(false)
                        })
                        .unwrap_or(false)
                    {
                        continue;
                    }
                    return Err(Error::Topology(format!(
                        "no neighbor found for {key:?} side {side:?} (mesh not 2:1 balanced?)"
                    )));
                }
            }
        }
    }
    Ok(faces)
}

/// Children of the (absent) equal-level neighbor that touch the shared face,
/// ordered by increasing tangential coordinate.
fn fine_neighbors(neighbor: &ElemKey, my_side: Side) -> [ElemKey; 2] {
    let kids = neighbor.children();
    match my_side {
        // my east face touches the neighbor's west children: (0,0) and (0,1)
        Side::East => [kids[0], kids[2]],
        Side::West => [kids[1], kids[3]],
        Side::North => [kids[0], kids[1]],
        Side::South => [kids[2], kids[3]],
    }
}

fn invert_bilinear(grid: &TreeGrid, key: ElemKey, x: f64, y: f64) -> Option<[f64; 2]> {
    let c = elem_corners(grid, key);
    let mut xi = 0.0f64;
    let mut eta = 0.0f64;
    for _ in 0..50 {
        let a = 0.25 * (1.0 - xi) * (1.0 - eta);
        let b = 0.25 * (1.0 + xi) * (1.0 - eta);
        let d = 0.25 * (1.0 - xi) * (1.0 + eta);
        let e = 0.25 * (1.0 + xi) * (1.0 + eta);
        let fx = a * c[0][0] + b * c[1][0] + d * c[2][0] + e * c[3][0] - x;
        let fy = a * c[0][1] + b * c[1][1] + d * c[2][1] + e * c[3][1] - y;
        let x_xi =
            0.25 * ((c[1][0] - c[0][0]) * (1.0 - eta) + (c[3][0] - c[2][0]) * (1.0 + eta));
        let y_xi =
            0.25 * ((c[1][1] - c[0][1]) * (1.0 - eta) + (c[3][1] - c[2][1]) * (1.0 + eta));
        let x_eta =
            0.25 * ((c[2][0] - c[0][0]) * (1.0 - xi) + (c[3][0] - c[1][0]) * (1.0 + xi));
        let y_eta =
            0.25 * ((c[2][1] - c[0][1]) * (1.0 - xi) + (c[3][1] - c[1][1]) * (1.0 + xi));
        let det = x_xi * y_eta - x_eta * y_xi;
        if det.abs() < 1e-300 {
            return None;
        }
        let dxi = (y_eta * fx - x_eta * fy) / det;
        let deta = (-y_xi * fx + x_xi * fy) / det;
        xi -= dxi;
        eta -= deta;
        if dxi.abs() < 1e-13 && deta.abs() < 1e-13 {
            return Some([xi, eta]);
        }
    }
    Some([xi, eta])
}
