//! Nested coarse/fine rectangular partition of the unit square.
//!
//! The unit square is split into `nc_x x nc_y` coarse blocks, each refined
//! into `nf x nf` fine Q1 cells. Blocks, cells, nodes and edges are numbered
//! row-major from the lower-left corner; every downstream matrix inherits
//! this order, so two meshes built with equal arguments index identically.
//!
//! Within a coarse block the discrete space is continuous bilinear on the
//! fine cells; across coarse edges nodes are duplicated (one copy per
//! adjacent block). Physical fine-grid positions are addressed by integer
//! grid coordinates `(gx, gy)` with `gx in 0..=nc_x*nf`.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Orientation of a coarse edge via its reference normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeAxis {
    /// Vertical edge segment; reference normal +x.
    X,
    /// Horizontal edge segment; reference normal +y.
    Y,
}

/// One coarse edge with its (up to two) adjacent blocks.
///
/// `neg` is the block on the negative side of the reference normal (left of
/// a vertical edge, below a horizontal one); `pos` the other side. Boundary
/// edges have exactly one side present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoarseEdge {
    pub axis: EdgeAxis,
    pub ex: usize,
    pub ey: usize,
    pub neg: Option<usize>,
    pub pos: Option<usize>,
}

impl CoarseEdge {
    pub fn is_interior(&self) -> bool {
        self.neg.is_some() && self.pos.is_some()
    }

    pub fn reference_normal(&self) -> [f64; 2] {
        match self.axis {
            EdgeAxis::X => [1.0, 0.0],
            EdgeAxis::Y => [0.0, 1.0],
        }
    }

    /// Outward domain normal for a boundary edge.
    pub fn outward_normal(&self) -> Option<[f64; 2]> {
        match (self.neg, self.pos) {
            (Some(_), None) => Some(self.reference_normal()),
            (None, Some(_)) => {
                let [nx, ny] = self.reference_normal();
                Some([-nx, -ny])
            }
            _ => None,
        }
    }
}

/// Coarse/fine nested mesh of the unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedMesh {
    nc_x: usize,
    nc_y: usize,
    nf: usize,
    edges: Vec<CoarseEdge>,
}

/// Build the nested mesh. All counts must be at least one.
pub fn build_nested_mesh(nc_x: usize, nc_y: usize, nf: usize) -> Result<NestedMesh> {
    if nc_x == 0 || nc_y == 0 || nf == 0 {
        return Err(Error::invalid(format!(
            "mesh counts must be positive, got ({nc_x}, {nc_y}, {nf})"
        )));
    }
    let block = |bx: usize, by: usize| by * nc_x + bx;
    let mut edges = Vec::with_capacity(nc_x * (nc_y + 1) + nc_y * (nc_x + 1));
    // Vertical edges first, row-major.
    for ey in 0..nc_y {
        for ex in 0..=nc_x {
            edges.push(CoarseEdge {
                axis: EdgeAxis::X,
                ex,
                ey,
                neg: (ex > 0).then(|| block(ex - 1, ey)),
                pos: (ex < nc_x).then(|| block(ex, ey)),
            });
        }
    }
    for ey in 0..=nc_y {
        for ex in 0..nc_x {
            edges.push(CoarseEdge {
                axis: EdgeAxis::Y,
                ex,
                ey,
                neg: (ey > 0).then(|| block(ex, ey - 1)),
                pos: (ey < nc_y).then(|| block(ex, ey)),
            });
        }
    }
    Ok(NestedMesh { nc_x, nc_y, nf, edges })
}

impl NestedMesh {
    pub fn coarse_counts(&self) -> (usize, usize) {
        (self.nc_x, self.nc_y)
    }

    pub fn fine_per_block(&self) -> usize {
        self.nf
    }

    pub fn n_blocks(&self) -> usize {
        self.nc_x * self.nc_y
    }

    /// Fine Q1 nodes carried by one coarse block: `(nf + 1)^2`.
    pub fn nodes_per_block(&self) -> usize {
        (self.nf + 1) * (self.nf + 1)
    }

    pub fn cells_per_block(&self) -> usize {
        self.nf * self.nf
    }

    pub fn n_fine_cells(&self) -> usize {
        self.n_blocks() * self.cells_per_block()
    }

    /// Coarse block widths.
    pub fn coarse_hx(&self) -> f64 {
        1.0 / self.nc_x as f64
    }

    pub fn coarse_hy(&self) -> f64 {
        1.0 / self.nc_y as f64
    }

    /// Penalty length scale `H = 1/nc_x`.
    pub fn coarse_h(&self) -> f64 {
        self.coarse_hx()
    }

    /// Fine cell widths.
    pub fn fine_hx(&self) -> f64 {
        self.coarse_hx() / self.nf as f64
    }

    pub fn fine_hy(&self) -> f64 {
        self.coarse_hy() / self.nf as f64
    }

    pub fn block_id(&self, bx: usize, by: usize) -> usize {
        debug_assert!(bx < self.nc_x && by < self.nc_y);
        by * self.nc_x + bx
    }

    pub fn block_coords(&self, id: usize) -> (usize, usize) {
        (id % self.nc_x, id / self.nc_x)
    }

    /// Lower-left corner of a block.
    pub fn block_origin(&self, id: usize) -> (f64, f64) {
        let (bx, by) = self.block_coords(id);
        (bx as f64 * self.coarse_hx(), by as f64 * self.coarse_hy())
    }

    /// Local node index within a block, row-major from the lower-left.
    pub fn local_node(&self, ix: usize, iy: usize) -> usize {
        iy * (self.nf + 1) + ix
    }

    pub fn local_node_coords(&self, node: usize) -> (usize, usize) {
        (node % (self.nf + 1), node / (self.nf + 1))
    }

    /// Physical coordinates of a block-local node.
    pub fn node_position(&self, block: usize, node: usize) -> (f64, f64) {
        let (x0, y0) = self.block_origin(block);
        let (ix, iy) = self.local_node_coords(node);
        (x0 + ix as f64 * self.fine_hx(), y0 + iy as f64 * self.fine_hy())
    }

    /// Global integer grid coordinates of a block-local node.
    pub fn node_grid(&self, block: usize, node: usize) -> (usize, usize) {
        let (bx, by) = self.block_coords(block);
        let (ix, iy) = self.local_node_coords(node);
        (bx * self.nf + ix, by * self.nf + iy)
    }

    /// All coarse edges, vertical set first, each set row-major.
    pub fn coarse_edges(&self) -> &[CoarseEdge] {
        &self.edges
    }

    pub fn n_coarse_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_interior_coarse_edges(&self) -> usize {
        self.edges.iter().filter(|e| e.is_interior()).count()
    }

    /// Physical length of one coarse edge.
    pub fn edge_length(&self, edge: &CoarseEdge) -> f64 {
        match edge.axis {
            EdgeAxis::X => self.coarse_hy(),
            EdgeAxis::Y => self.coarse_hx(),
        }
    }

    /// Length of one fine sub-edge of a coarse edge.
    pub fn sub_edge_length(&self, edge: &CoarseEdge) -> f64 {
        self.edge_length(edge) / self.nf as f64
    }

    /// Block-local node index of trace position `t in 0..=nf` along an edge,
    /// seen from the given side (`true` = negative side).
    pub fn trace_node(&self, edge: &CoarseEdge, neg_side: bool, t: usize) -> usize {
        match (edge.axis, neg_side) {
            (EdgeAxis::X, true) => self.local_node(self.nf, t),
            (EdgeAxis::X, false) => self.local_node(0, t),
            (EdgeAxis::Y, true) => self.local_node(t, self.nf),
            (EdgeAxis::Y, false) => self.local_node(t, 0),
        }
    }

    /// Global grid coordinates of trace position `t` along an edge.
    pub fn edge_grid_node(&self, edge: &CoarseEdge, t: usize) -> (usize, usize) {
        match edge.axis {
            EdgeAxis::X => (edge.ex * self.nf, edge.ey * self.nf + t),
            EdgeAxis::Y => (edge.ex * self.nf + t, edge.ey * self.nf),
        }
    }

    /// Physical coordinates of the point at parameter `s + u` sub-edges from
    /// the edge start, where `s` is the sub-edge index and `u in [0,1]`.
    pub fn edge_point(&self, edge: &CoarseEdge, s: usize, u: f64) -> (f64, f64) {
        let t = (s as f64 + u) * self.sub_edge_length(edge);
        match edge.axis {
            EdgeAxis::X => (edge.ex as f64 * self.coarse_hx(), edge.ey as f64 * self.coarse_hy() + t),
            EdgeAxis::Y => (edge.ex as f64 * self.coarse_hx() + t, edge.ey as f64 * self.coarse_hy()),
        }
    }

    /// Coarse edges on the boundary of a block set, each with the outward
    /// normal sign (`+1` if the region lies on the negative side of the
    /// reference normal) and the adjacent inside block.
    pub fn region_boundary_edges(&self, blocks: &[usize]) -> Vec<RegionBoundaryEdge> {
        let inside: BTreeSet<usize> = blocks.iter().copied().collect();
        let mut out = Vec::new();
        for (id, edge) in self.edges.iter().enumerate() {
            let neg_in = edge.neg.is_some_and(|b| inside.contains(&b));
            let pos_in = edge.pos.is_some_and(|b| inside.contains(&b));
            if neg_in != pos_in {
                out.push(RegionBoundaryEdge {
                    edge: id,
                    inside_block: if neg_in { edge.neg.unwrap() } else { edge.pos.unwrap() },
                    inside_is_neg: neg_in,
                });
            }
        }
        out
    }

    /// Coarse edges interior to a block set (both sides inside).
    pub fn region_interior_edges(&self, blocks: &[usize]) -> Vec<usize> {
        let inside: BTreeSet<usize> = blocks.iter().copied().collect();
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, e)| {
                e.neg.is_some_and(|b| inside.contains(&b)) && e.pos.is_some_and(|b| inside.contains(&b))
            })
            .map(|(id, _)| id)
            .collect()
    }
}

/// One coarse edge on the boundary of a block region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionBoundaryEdge {
    /// Index into `NestedMesh::coarse_edges`.
    pub edge: usize,
    /// The region block adjacent to this edge.
    pub inside_block: usize,
    /// Whether the inside block sits on the negative side of the reference
    /// normal; the outward normal is `+ref` in that case, `-ref` otherwise.
    pub inside_is_neg: bool,
}

impl RegionBoundaryEdge {
    pub fn outward_normal(&self, mesh: &NestedMesh) -> [f64; 2] {
        let [nx, ny] = mesh.coarse_edges()[self.edge].reference_normal();
        if self.inside_is_neg {
            [nx, ny]
        } else {
            [-nx, -ny]
        }
    }
}

/// A coarse block together with its oversampling neighborhood.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OversampleRegion {
    pub center: usize,
    /// Region blocks, ascending block id; always contains `center`.
    pub blocks: Vec<usize>,
}

impl OversampleRegion {
    /// Position of a block inside `blocks`, if present.
    pub fn position(&self, block: usize) -> Option<usize> {
        self.blocks.binary_search(&block).ok()
    }
}

/// Enlarge block `j` by `layers` coarse layers (Chebyshev ball in block
/// indices, clipped to the domain).
pub fn oversample(mesh: &NestedMesh, j: usize, layers: usize) -> Result<OversampleRegion> {
    if j >= mesh.n_blocks() {
        return Err(Error::invalid(format!("block id {j} out of range")));
    }
    let (nc_x, nc_y) = mesh.coarse_counts();
    let (bx, by) = mesh.block_coords(j);
    let x0 = bx.saturating_sub(layers);
    let x1 = (bx + layers).min(nc_x - 1);
    let y0 = by.saturating_sub(layers);
    let y1 = (by + layers).min(nc_y - 1);
    let mut blocks = Vec::with_capacity((x1 - x0 + 1) * (y1 - y0 + 1));
    for y in y0..=y1 {
        for x in x0..=x1 {
            blocks.push(mesh.block_id(x, y));
        }
    }
    blocks.sort_unstable();
    Ok(OversampleRegion { center: j, blocks })
}

/// Boundary-face classification of a region for one transport direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceFlow {
    Inflow,
    Outflow,
    Tangential,
}

pub fn classify_face(v: [f64; 2], outward: [f64; 2]) -> FaceFlow {
    let s = v[0] * outward[0] + v[1] * outward[1];
    if s < 0.0 {
        FaceFlow::Inflow
    } else if s > 0.0 {
        FaceFlow::Outflow
    } else {
        FaceFlow::Tangential
    }
}

/// Fine nodes on the inflow part of a region boundary for direction `v`,
/// as sorted global grid coordinates: every node lying on a closed face
/// with `v . n < 0`. Faces with `v . n = 0` contribute nothing; nodes
/// shared by two inflow faces appear once.
pub fn upwind_nodes(mesh: &NestedMesh, blocks: &[usize], v: [f64; 2]) -> Vec<(usize, usize)> {
    boundary_nodes_with_flow(mesh, blocks, v, FaceFlow::Inflow)
}

/// Fine nodes on the region boundary by flow class. A node touching both an
/// inflow and an outflow face counts as inflow (it carries prescribed data
/// in every use of these sets), so the three classes partition the boundary
/// nodes: outflow excludes inflow nodes, tangential excludes both.
pub fn boundary_nodes_with_flow(
    mesh: &NestedMesh,
    blocks: &[usize],
    v: [f64; 2],
    flow: FaceFlow,
) -> Vec<(usize, usize)> {
    let norm = (v[0] * v[0] + v[1] * v[1]).sqrt();
    assert!(norm > 0.0, "direction must be nonzero");
    let v = [v[0] / norm, v[1] / norm];
    let mut inflow = BTreeSet::new();
    let mut outflow = BTreeSet::new();
    let mut tangential = BTreeSet::new();
    for be in mesh.region_boundary_edges(blocks) {
        let set = match classify_face(v, be.outward_normal(mesh)) {
            FaceFlow::Inflow => &mut inflow,
            FaceFlow::Outflow => &mut outflow,
            FaceFlow::Tangential => &mut tangential,
        };
        let edge = &mesh.coarse_edges()[be.edge];
        for t in 0..=mesh.fine_per_block() {
            set.insert(mesh.edge_grid_node(edge, t));
        }
    }
    match flow {
        FaceFlow::Inflow => inflow.into_iter().collect(),
        FaceFlow::Outflow => outflow.difference(&inflow).copied().collect(),
        FaceFlow::Tangential => {
            let used: BTreeSet<_> = inflow.union(&outflow).copied().collect();
            tangential.difference(&used).copied().collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn paper_scale_counts() {
        let mesh = build_nested_mesh(10, 10, 10).unwrap();
        assert_eq!(mesh.n_blocks(), 100);
        assert_eq!(mesh.n_fine_cells(), 10_000);
        assert_eq!(mesh.n_coarse_edges(), 10 * 11 + 10 * 11);
        assert_eq!(mesh.n_interior_coarse_edges(), 220 - 2 * (10 + 10));
        assert_eq!(mesh.nodes_per_block(), 121);
        assert!((mesh.coarse_h() - 0.1).abs() < 1e-15);
        assert!((mesh.fine_hx() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn degenerate_single_cell_mesh() {
        let mesh = build_nested_mesh(1, 1, 1).unwrap();
        assert_eq!(mesh.n_blocks(), 1);
        assert_eq!(mesh.n_fine_cells(), 1);
        assert_eq!(mesh.n_interior_coarse_edges(), 0);
        assert_eq!(mesh.n_coarse_edges(), 4);
    }

    #[test]
    fn two_by_two_counts_match_hand_enumeration() {
        // 2x2 blocks of 2x2 cells: 4 blocks, 16 cells; interior coarse
        // edges: one vertical + one horizontal per row/column = 4.
        let mesh = build_nested_mesh(2, 2, 2).unwrap();
        assert_eq!(mesh.n_blocks(), 4);
        assert_eq!(mesh.n_fine_cells(), 16);
        assert_eq!(mesh.n_interior_coarse_edges(), 4);
        assert_eq!(mesh.n_coarse_edges(), 2 * 3 + 2 * 3);
    }

    #[test]
    fn rejects_zero_counts() {
        assert!(build_nested_mesh(0, 1, 1).is_err());
        assert!(build_nested_mesh(1, 0, 1).is_err());
        assert!(build_nested_mesh(1, 1, 0).is_err());
    }

    #[test]
    fn construction_is_deterministic() {
        let a = build_nested_mesh(4, 3, 5).unwrap();
        let b = build_nested_mesh(4, 3, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn oversample_block_counts() {
        let mesh = build_nested_mesh(10, 10, 10).unwrap();
        let center = mesh.block_id(5, 5);
        assert_eq!(oversample(&mesh, center, 1).unwrap().blocks.len(), 9);
        let corner = mesh.block_id(0, 0);
        assert_eq!(oversample(&mesh, corner, 1).unwrap().blocks.len(), 4);
        let edge = mesh.block_id(0, 5);
        assert_eq!(oversample(&mesh, edge, 1).unwrap().blocks.len(), 6);
        let zero = oversample(&mesh, center, 0).unwrap();
        assert_eq!(zero.blocks, vec![center]);
        assert!(oversample(&mesh, 100, 1).is_err());
    }

    #[test]
    fn oversample_region_is_contiguous_and_contains_center() {
        let mesh = build_nested_mesh(7, 4, 2).unwrap();
        for j in 0..mesh.n_blocks() {
            for layers in 0..3 {
                let r = oversample(&mesh, j, layers).unwrap();
                assert!(r.blocks.contains(&j));
                let (bx, by) = mesh.block_coords(j);
                for &b in &r.blocks {
                    let (x, y) = mesh.block_coords(b);
                    let d = bx.abs_diff(x).max(by.abs_diff(y));
                    assert!(d <= layers);
                }
            }
        }
    }

    #[test]
    fn upwind_nodes_single_block_diagonal() {
        let mesh = build_nested_mesh(1, 1, 10).unwrap();
        let nodes = upwind_nodes(&mesh, &[0], [0.6, 0.8]);
        // left edge (11) + bottom edge (11) minus the shared corner
        assert_eq!(nodes.len(), 21);
        for &(gx, gy) in &nodes {
            assert!(gx == 0 || gy == 0);
        }
    }

    #[test]
    fn upwind_nodes_axis_aligned_direction_skips_tangential_faces() {
        let mesh = build_nested_mesh(1, 1, 10).unwrap();
        let nodes = upwind_nodes(&mesh, &[0], [1.0, 0.0]);
        assert_eq!(nodes.len(), 11);
        for &(gx, _) in &nodes {
            assert_eq!(gx, 0);
        }
    }

    #[test]
    fn upwind_nodes_of_region_lie_on_outer_boundary_only() {
        let mesh = build_nested_mesh(10, 10, 10).unwrap();
        let region = oversample(&mesh, mesh.block_id(5, 5), 1).unwrap();
        let nodes = upwind_nodes(&mesh, &region.blocks, [-0.6, 0.8]);
        // inflow faces: right (gx = 7*10) and bottom (gy = 4*10)
        assert_eq!(nodes.len(), 31 + 31 - 1);
        for &(gx, gy) in &nodes {
            assert!(gx == 70 || gy == 40);
        }
    }

    #[test]
    fn boundary_nodes_partition_by_flow() {
        let mesh = build_nested_mesh(5, 4, 3).unwrap();
        let region = oversample(&mesh, mesh.block_id(2, 2), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let v = [theta.cos(), theta.sin()];
            let inflow = upwind_nodes(&mesh, &region.blocks, v);
            let outflow = boundary_nodes_with_flow(&mesh, &region.blocks, v, FaceFlow::Outflow);
            let tang = boundary_nodes_with_flow(&mesh, &region.blocks, v, FaceFlow::Tangential);

            // all boundary nodes, independent enumeration
            let mut all = BTreeSet::new();
            for be in mesh.region_boundary_edges(&region.blocks) {
                let edge = &mesh.coarse_edges()[be.edge];
                for t in 0..=mesh.fine_per_block() {
                    all.insert(mesh.edge_grid_node(edge, t));
                }
            }
            let union: BTreeSet<_> =
                inflow.iter().chain(outflow.iter()).chain(tang.iter()).copied().collect();
            assert_eq!(union, all);
            assert_eq!(inflow.len() + outflow.len() + tang.len(), all.len());
            let inflow_set: BTreeSet<_> = inflow.iter().copied().collect();
            assert!(outflow.iter().all(|n| !inflow_set.contains(n)));
            assert!(tang.iter().all(|n| !inflow_set.contains(n)));
        }
    }

    #[test]
    fn upwind_nodes_invariant_under_scaling_and_flip() {
        let mesh = build_nested_mesh(3, 3, 4).unwrap();
        let blocks = vec![mesh.block_id(1, 1)];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let v = [theta.cos(), theta.sin()];
            let scaled = [3.7 * v[0], 3.7 * v[1]];
            assert_eq!(upwind_nodes(&mesh, &blocks, v), upwind_nodes(&mesh, &blocks, scaled));
            if v[0].abs() > 1e-9 && v[1].abs() > 1e-9 {
                // Inflow of -v is the closed set of v-outflow faces.
                let flipped = upwind_nodes(&mesh, &blocks, [-v[0], -v[1]]);
                let mut closed_outflow = BTreeSet::new();
                for be in mesh.region_boundary_edges(&blocks) {
                    if classify_face(v, be.outward_normal(&mesh)) == FaceFlow::Outflow {
                        let edge = &mesh.coarse_edges()[be.edge];
                        for t in 0..=mesh.fine_per_block() {
                            closed_outflow.insert(mesh.edge_grid_node(edge, t));
                        }
                    }
                }
                let closed_outflow: Vec<_> = closed_outflow.into_iter().collect();
                assert_eq!(flipped, closed_outflow);
            }
        }
    }
}
