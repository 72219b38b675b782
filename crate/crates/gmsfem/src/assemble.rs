//! Sparse assembly of the upwind DG discrete-ordinates operator.
//!
//! The assembled bilinear form is the weight-summed transport form plus the
//! collision/absorption form: volume transport, upwind flux on coarse edges
//! interior to the region, outflow boundary flux, scaled mass, and the
//! scattering coupling with cell-centered media sampling.
//!
//! Solver vectors are interleaved (block, node, ordinate) so the per-node
//! collision blocks stay contiguous for the sparse factorization; public
//! fields use the ordinate-major layout of [`KineticField`] and are
//! converted at the boundary of this module.

use std::collections::BTreeMap;

use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::elements::{edge_gauss, edge_mass, CellMatrices};
use crate::error::{Error, Result};
use crate::field::KineticField;
use crate::inflow::BoundaryData;
use crate::linalg::SparseLu;
use crate::mesh::{classify_face, FaceFlow, NestedMesh};
use crate::ordinates::{OrdinateSet, ScatteringMatrix};

/// Everything the assembly needs, bundled to keep signatures short.
pub(crate) struct ProblemData<'a> {
    pub mesh: &'a NestedMesh,
    pub ords: &'a OrdinateSet,
    pub scatter: &'a ScatteringMatrix,
    /// Media at fine-cell centers, indexed `block * cells_per_block + cell`.
    pub media_cells: &'a [f64],
    pub epsilon: f64,
}

impl<'a> ProblemData<'a> {
    pub fn new(
        mesh: &'a NestedMesh,
        ords: &'a OrdinateSet,
        scatter: &'a ScatteringMatrix,
        media_cells: &'a [f64],
        epsilon: f64,
    ) -> Result<Self> {
        if epsilon <= 0.0 {
            return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        if media_cells.len() != mesh.n_fine_cells() {
            return Err(Error::invalid("media sample count does not match mesh"));
        }
        Ok(ProblemData { mesh, ords, scatter, media_cells, epsilon })
    }

    pub fn m(&self) -> usize {
        self.ords.len()
    }

    pub fn media_at(&self, block: usize, cell: usize) -> f64 {
        self.media_cells[block * self.mesh.cells_per_block() + cell]
    }
}

/// Interleaved solver index of (block position, local node, ordinate).
#[inline]
pub(crate) fn sdof(m: usize, nodes_per_block: usize, bpos: usize, node: usize, ord: usize) -> usize {
    (bpos * nodes_per_block + node) * m + ord
}

/// Convert a solver-ordered vector into a `KineticField` over `blocks`.
pub(crate) fn field_from_solver(
    mesh: &NestedMesh,
    m: usize,
    blocks: &[usize],
    solver: &[f64],
) -> KineticField {
    let p = mesh.nodes_per_block();
    let mut field = KineticField::zeros(mesh, m, blocks);
    for bpos in 0..blocks.len() {
        for node in 0..p {
            for ord in 0..m {
                let v = solver[sdof(m, p, bpos, node, ord)];
                field.set(ord, bpos, node, v);
            }
        }
    }
    field
}

/// Assemble the full operator triplets over the region's solver dofs.
pub(crate) fn operator_triplets(
    data: &ProblemData,
    blocks: &[usize],
) -> Vec<Triplet<usize, usize, f64>> {
    let mesh = data.mesh;
    let m = data.m();
    let nf = mesh.fine_per_block();
    let p = mesh.nodes_per_block();
    let cells = mesh.cells_per_block();
    let cm = CellMatrices::new(mesh.fine_hx(), mesh.fine_hy());

    let mut trips =
        Vec::with_capacity(blocks.len() * cells * 16 * (m + m * m) + blocks.len() * 4 * nf * 4 * m);

    // Per-ordinate volume coefficient matrices (uniform cells).
    let mut vol = vec![[[0.0; 4]; 4]; m];
    for ord in 0..m {
        let [vx, vy] = data.ords.direction(ord);
        let alpha = data.ords.weight(ord);
        for k in 0..4 {
            for l in 0..4 {
                vol[ord][k][l] = alpha
                    * (-(vx * cm.cx[k][l] + vy * cm.cy[k][l]) + data.epsilon * cm.mass[k][l]);
            }
        }
    }

    let pos_of: BTreeMap<usize, usize> = blocks.iter().enumerate().map(|(i, &b)| (b, i)).collect();

    for (bpos, &block) in blocks.iter().enumerate() {
        for cy in 0..nf {
            for cx in 0..nf {
                let cell = cy * nf + cx;
                let nodes = [
                    cy * (nf + 1) + cx,
                    cy * (nf + 1) + cx + 1,
                    (cy + 1) * (nf + 1) + cx,
                    (cy + 1) * (nf + 1) + cx + 1,
                ];
                // transport + scaled mass, diagonal in the ordinate index
                for ord in 0..m {
                    for k in 0..4 {
                        let row = sdof(m, p, bpos, nodes[k], ord);
                        for l in 0..4 {
                            let col = sdof(m, p, bpos, nodes[l], ord);
                            trips.push(Triplet::new(row, col, vol[ord][k][l]));
                        }
                    }
                }
                // collision coupling, dense in the ordinate pair
                let c = 1.0 / (data.epsilon * data.media_at(block, cell));
                for i in 0..m {
                    for j in 0..m {
                        let aij = c * data.scatter.entry(i, j);
                        if aij == 0.0 {
                            continue;
                        }
                        for k in 0..4 {
                            let row = sdof(m, p, bpos, nodes[k], i);
                            for l in 0..4 {
                                let col = sdof(m, p, bpos, nodes[l], j);
                                trips.push(Triplet::new(row, col, aij * cm.mass[k][l]));
                            }
                        }
                    }
                }
            }
        }
    }

    // Upwind flux on coarse edges interior to the region.
    for edge_id in mesh.region_interior_edges(blocks) {
        let edge = &mesh.coarse_edges()[edge_id];
        let me = edge_mass(mesh.sub_edge_length(edge));
        let [nx, ny] = edge.reference_normal();
        let (neg, pos) = (edge.neg.unwrap(), edge.pos.unwrap());
        for ord in 0..m {
            let [vx, vy] = data.ords.direction(ord);
            let s = vx * nx + vy * ny;
            if s == 0.0 {
                continue;
            }
            let alpha = data.ords.weight(ord);
            let upwind_is_neg = s > 0.0;
            let coef = alpha * s.abs();
            let (up, down) = if upwind_is_neg { (neg, pos) } else { (pos, neg) };
            let (up_pos, down_pos) = (pos_of[&up], pos_of[&down]);
            for t in 0..nf {
                for a in 0..2 {
                    let up_row = sdof(m, p, up_pos, mesh.trace_node(edge, upwind_is_neg, t + a), ord);
                    let down_row =
                        sdof(m, p, down_pos, mesh.trace_node(edge, !upwind_is_neg, t + a), ord);
                    for b in 0..2 {
                        let up_col =
                            sdof(m, p, up_pos, mesh.trace_node(edge, upwind_is_neg, t + b), ord);
                        trips.push(Triplet::new(up_row, up_col, coef * me[a][b]));
                        trips.push(Triplet::new(down_row, up_col, -coef * me[a][b]));
                    }
                }
            }
        }
    }

    // Outflow flux on the region boundary.
    for be in mesh.region_boundary_edges(blocks) {
        let edge = &mesh.coarse_edges()[be.edge];
        let me = edge_mass(mesh.sub_edge_length(edge));
        let outward = be.outward_normal(mesh);
        let bpos = pos_of[&be.inside_block];
        for ord in 0..m {
            let v = data.ords.direction(ord);
            if classify_face(v, outward) != FaceFlow::Outflow {
                continue;
            }
            let s = (v[0] * outward[0] + v[1] * outward[1]).abs();
            let coef = data.ords.weight(ord) * s;
            for t in 0..nf {
                for a in 0..2 {
                    let row = sdof(m, p, bpos, mesh.trace_node(edge, be.inside_is_neg, t + a), ord);
                    for b in 0..2 {
                        let col =
                            sdof(m, p, bpos, mesh.trace_node(edge, be.inside_is_neg, t + b), ord);
                        trips.push(Triplet::new(row, col, coef * me[a][b]));
                    }
                }
            }
        }
    }

    trips
}

/// Inflow right-hand side for weak data imposition over a region.
pub(crate) fn inflow_rhs(data: &ProblemData, blocks: &[usize], g: &BoundaryData) -> Vec<f64> {
    let mesh = data.mesh;
    let m = data.m();
    let p = mesh.nodes_per_block();
    let nf = mesh.fine_per_block();
    let pos_of: BTreeMap<usize, usize> = blocks.iter().enumerate().map(|(i, &b)| (b, i)).collect();
    let mut rhs = vec![0.0; blocks.len() * p * m];
    for be in mesh.region_boundary_edges(blocks) {
        let edge = &mesh.coarse_edges()[be.edge];
        let (shape, w) = edge_gauss(mesh.sub_edge_length(edge));
        let outward = be.outward_normal(mesh);
        let bpos = pos_of[&be.inside_block];
        for ord in 0..m {
            let v = data.ords.direction(ord);
            if classify_face(v, outward) != FaceFlow::Inflow {
                continue;
            }
            let s = (v[0] * outward[0] + v[1] * outward[1]).abs();
            let coef = data.ords.weight(ord) * s;
            for t in 0..nf {
                for q in 0..2 {
                    let (x, y) = mesh.edge_point(edge, t, crate::elements::GAUSS2.0[q]);
                    let gv = g.eval(x, y, ord);
                    for a in 0..2 {
                        let row =
                            sdof(m, p, bpos, mesh.trace_node(edge, be.inside_is_neg, t + a), ord);
                        rhs[row] += coef * w[q] * gv * shape[q][a];
                    }
                }
            }
        }
    }
    rhs
}

/// Fully assembled weak-form operator over a region (inflow enters through
/// the right-hand side only). Used for the global fine solve.
pub(crate) struct WeakOperator {
    pub blocks: Vec<usize>,
    pub n_sdofs: usize,
    pub matrix: SparseColMat<usize, f64>,
    lu: SparseLu,
}

impl WeakOperator {
    pub fn new(data: &ProblemData, blocks: &[usize]) -> Result<Self> {
        let mut blocks = blocks.to_vec();
        blocks.sort_unstable();
        blocks.dedup();
        let n = blocks.len() * data.mesh.nodes_per_block() * data.m();
        let trips = operator_triplets(data, &blocks);
        let matrix = SparseColMat::try_new_from_triplets(n, n, &trips)
            .map_err(|e| Error::numerical(format!("assembly failed: {e:?}")))?;
        let lu = SparseLu::new(&matrix)?;
        Ok(WeakOperator { blocks, n_sdofs: n, matrix, lu })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.lu.solve_vec(rhs)
    }

    /// Relative residual `|A x - b| / |b|` (2-norms).
    pub fn relative_residual(&self, x: &[f64], rhs: &[f64]) -> f64 {
        let n = self.n_sdofs;
        let xm = Mat::from_fn(n, 1, |i, _| x[i]);
        let ax = &self.matrix * &xm;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            num += (ax[(i, 0)] - rhs[i]).powi(2);
            den += rhs[i].powi(2);
        }
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }
}

/// One pinned solver dof of a strong-data local problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct PinnedDof {
    pub sdof: usize,
    pub ord: usize,
    /// Global fine-grid coordinates of the node.
    pub grid: (usize, usize),
}

/// Local operator with inflow data imposed strongly at upwind boundary
/// nodes, per ordinate. Factorized once; solved for many data vectors.
pub(crate) struct RegionOperator {
    pub n_sdofs: usize,
    /// Free solver dofs, ascending.
    pub free: Vec<usize>,
    /// Pinned dofs, ascending by solver index.
    pub pinned: Vec<PinnedDof>,
    mat_ff: SparseColMat<usize, f64>,
    mat_fp: SparseColMat<usize, f64>,
    lu: SparseLu,
}

impl RegionOperator {
    pub fn new(data: &ProblemData, region_blocks: &[usize]) -> Result<Self> {
        let mesh = data.mesh;
        let m = data.m();
        let p = mesh.nodes_per_block();
        let mut blocks = region_blocks.to_vec();
        blocks.sort_unstable();
        blocks.dedup();
        let n = blocks.len() * p * m;
        let pos_of: BTreeMap<usize, usize> =
            blocks.iter().enumerate().map(|(i, &b)| (b, i)).collect();

        // Pinned dofs: per ordinate, all nodes on closed inflow faces.
        let mut pinned_map: BTreeMap<usize, PinnedDof> = BTreeMap::new();
        for be in mesh.region_boundary_edges(&blocks) {
            let edge = &mesh.coarse_edges()[be.edge];
            let outward = be.outward_normal(mesh);
            let bpos = pos_of[&be.inside_block];
            for ord in 0..m {
                if classify_face(data.ords.direction(ord), outward) != FaceFlow::Inflow {
                    continue;
                }
                for t in 0..=mesh.fine_per_block() {
                    let node = mesh.trace_node(edge, be.inside_is_neg, t);
                    let dof = sdof(m, p, bpos, node, ord);
                    pinned_map.entry(dof).or_insert(PinnedDof {
                        sdof: dof,
                        ord,
                        grid: mesh.edge_grid_node(edge, t),
                    });
                }
            }
        }
        let pinned: Vec<PinnedDof> = pinned_map.into_values().collect();

        let mut kind = vec![usize::MAX; n]; // free index or MAX
        let mut pin_index = vec![usize::MAX; n];
        for (k, pd) in pinned.iter().enumerate() {
            pin_index[pd.sdof] = k;
        }
        let mut free = Vec::with_capacity(n - pinned.len());
        for dof in 0..n {
            if pin_index[dof] == usize::MAX {
                kind[dof] = free.len();
                free.push(dof);
            }
        }

        let trips = operator_triplets(data, &blocks);
        let mut ff = Vec::new();
        let mut fp = Vec::new();
        for t in &trips {
            let (r, c, v) = (t.row, t.col, t.val);
            if kind[r] == usize::MAX {
                continue; // pinned row: replaced by the data constraint
            }
            if kind[c] != usize::MAX {
                ff.push(Triplet::new(kind[r], kind[c], v));
            } else {
                fp.push(Triplet::new(kind[r], pin_index[c], v));
            }
        }
        let mat_ff = SparseColMat::try_new_from_triplets(free.len(), free.len(), &ff)
            .map_err(|e| Error::numerical(format!("local assembly failed: {e:?}")))?;
        let mat_fp = SparseColMat::try_new_from_triplets(free.len(), pinned.len(), &fp)
            .map_err(|e| Error::numerical(format!("local assembly failed: {e:?}")))?;
        let lu = SparseLu::new(&mat_ff)?;
        Ok(RegionOperator { n_sdofs: n, free, pinned, mat_ff, mat_fp, lu })
    }

    pub fn n_pinned(&self) -> usize {
        self.pinned.len()
    }

    /// Solve for several boundary data vectors at once. `data` has one
    /// column per problem, rows aligned with `self.pinned`. Returns full
    /// solver-ordered solutions, one column per problem.
    pub fn solve_many(&self, data: &Mat<f64>) -> Mat<f64> {
        assert_eq!(data.nrows(), self.pinned.len());
        let k = data.ncols();
        let rhs = &self.mat_fp * data; // free x k
        let neg: Mat<f64> = Mat::from_fn(rhs.nrows(), k, |i, j| -rhs[(i, j)]);
        let xf = self.lu.solve_mat(&neg);
        let mut full = Mat::zeros(self.n_sdofs, k);
        for (fi, &dof) in self.free.iter().enumerate() {
            for j in 0..k {
                full[(dof, j)] = xf[(fi, j)];
            }
        }
        for (pi, pd) in self.pinned.iter().enumerate() {
            for j in 0..k {
                full[(pd.sdof, j)] = data[(pi, j)];
            }
        }
        full
    }

    /// Residual of the free equations for one solved column (2-norm,
    /// relative to the data magnitude).
    pub fn free_residual(&self, full: &[f64]) -> f64 {
        let xf = Mat::from_fn(self.free.len(), 1, |i, _| full[self.free[i]]);
        let xp = Mat::from_fn(self.pinned.len(), 1, |i, _| full[self.pinned[i].sdof]);
        let r = &self.mat_ff * &xf + &self.mat_fp * &xp;
        let num = (0..r.nrows()).map(|i| r[(i, 0)].powi(2)).sum::<f64>().sqrt();
        let den = (0..full.len()).map(|i| full[i].powi(2)).sum::<f64>().sqrt();
        if den == 0.0 {
            num
        } else {
            num / den
        }
    }
}
