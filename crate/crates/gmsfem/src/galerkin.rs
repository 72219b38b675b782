//! Reduced Galerkin assembly over block-supported basis fields.
//!
//! Both the global snapshot solve and the online multiscale solve are
//! Galerkin problems in a space spanned by fields that each live on one
//! coarse block. This module assembles the transport form `a`, the
//! collision form `l` and the inflow functional against such bases as
//! dense block pieces, then solves the combined system either densely or
//! through a sparse factorization depending on size.

use faer::prelude::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::assemble::ProblemData;
use crate::elements::{edge_gauss, edge_mass, CellMatrices, GAUSS2};
use crate::error::{Error, Result};
use crate::field::KineticField;
use crate::fine::cell_nodes;
use crate::inflow::BoundaryData;
use crate::linalg::SparseLu;
use crate::mesh::{classify_face, FaceFlow, NestedMesh};

/// Dense block pieces of the reduced system.
pub(crate) struct ReducedGalerkin {
    /// Column offset of each block's basis in the global coefficient vector.
    pub offsets: Vec<usize>,
    pub dim: usize,
    /// `(row block, col block, piece)` contributions to the transport form.
    pub a_pieces: Vec<(usize, usize, Mat<f64>)>,
    /// Diagonal contributions to the collision/absorption form.
    pub l_pieces: Vec<(usize, Mat<f64>)>,
    pub rhs: Vec<f64>,
}

/// Full edge-trace mass matrix over the `nf+1` trace nodes of one coarse
/// edge, assembled from the per-sub-edge P1 masses.
pub(crate) fn edge_trace_mass(nf: usize, sub_len: f64) -> Mat<f64> {
    let me = edge_mass(sub_len);
    let mut full = Mat::zeros(nf + 1, nf + 1);
    for t in 0..nf {
        for a in 0..2 {
            for b in 0..2 {
                full[(t + a, t + b)] += me[a][b];
            }
        }
    }
    full
}

/// Trace of the basis columns for one ordinate along one side of an edge:
/// `(nf+1) x L` values.
pub(crate) fn basis_trace(
    mesh: &NestedMesh,
    basis: &Mat<f64>,
    ord: usize,
    edge: &crate::mesh::CoarseEdge,
    neg_side: bool,
) -> Mat<f64> {
    let nf = mesh.fine_per_block();
    let p = mesh.nodes_per_block();
    Mat::from_fn(nf + 1, basis.ncols(), |t, col| {
        basis[(ord * p + mesh.trace_node(edge, neg_side, t), col)]
    })
}

/// Scattering part of `l` applied to the basis: `(1/(eps a)) sum_j a_ij`
/// against the cell mass, as a dense `mP x L` product.
pub(crate) fn collision_apply(data: &ProblemData, block: usize, basis: &Mat<f64>) -> Mat<f64> {
    let mesh = data.mesh;
    let m = data.m();
    let nf = mesh.fine_per_block();
    let p = mesh.nodes_per_block();
    let cm = CellMatrices::new(mesh.fine_hx(), mesh.fine_hy());
    let cols = basis.ncols();
    let mut out = Mat::zeros(m * p, cols);
    for cy in 0..nf {
        for cx in 0..nf {
            let cell = cy * nf + cx;
            let nodes = cell_nodes(nf, cx, cy);
            let c = 1.0 / (data.epsilon * data.media_at(block, cell));
            for i in 0..m {
                for k in 0..4 {
                    let row = i * p + nodes[k];
                    for l in 0..4 {
                        let mkl = cm.mass[k][l];
                        for j in 0..m {
                            let aij = data.scatter.entry(i, j);
                            if aij == 0.0 {
                                continue;
                            }
                            let src = j * p + nodes[l];
                            let w = c * aij * mkl;
                            for col in 0..cols {
                                out[(row, col)] += w * basis[(src, col)];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Absorption part of `l` applied to the basis: `alpha_i eps` against the
/// cell mass per ordinate.
pub(crate) fn scaled_mass_apply(data: &ProblemData, basis: &Mat<f64>) -> Mat<f64> {
    let mesh = data.mesh;
    let m = data.m();
    let nf = mesh.fine_per_block();
    let p = mesh.nodes_per_block();
    let cm = CellMatrices::new(mesh.fine_hx(), mesh.fine_hy());
    let cols = basis.ncols();
    let mut out = Mat::zeros(m * p, cols);
    for cy in 0..nf {
        for cx in 0..nf {
            let nodes = cell_nodes(nf, cx, cy);
            for i in 0..m {
                let coef = data.ords.weight(i) * data.epsilon;
                for k in 0..4 {
                    let row = i * p + nodes[k];
                    for l in 0..4 {
                        let w = coef * cm.mass[k][l];
                        let src = i * p + nodes[l];
                        for col in 0..cols {
                            out[(row, col)] += w * basis[(src, col)];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Full `l` operator applied to the basis.
fn l_apply(data: &ProblemData, block: usize, basis: &Mat<f64>) -> Mat<f64> {
    let coll = collision_apply(data, block, basis);
    let mass = scaled_mass_apply(data, basis);
    &coll + &mass
}

/// Weighted gradient operator applied to the basis:
/// `sum_i alpha_i int grad u_i . grad w_i` tested rows.
pub(crate) fn stiffness_apply(data: &ProblemData, basis: &Mat<f64>) -> Mat<f64> {
    let mesh = data.mesh;
    let m = data.m();
    let nf = mesh.fine_per_block();
    let p = mesh.nodes_per_block();
    let cm = CellMatrices::new(mesh.fine_hx(), mesh.fine_hy());
    let cols = basis.ncols();
    let mut out = Mat::zeros(m * p, cols);
    for cy in 0..nf {
        for cx in 0..nf {
            let nodes = cell_nodes(nf, cx, cy);
            for ord in 0..m {
                let alpha = data.ords.weight(ord);
                for k in 0..4 {
                    let row = ord * p + nodes[k];
                    for l in 0..4 {
                        let w = alpha * cm.stiff[k][l];
                        let src = ord * p + nodes[l];
                        for col in 0..cols {
                            out[(row, col)] += w * basis[(src, col)];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Volume transport applied to the basis: `sum_i alpha_i (-v_i . grad w)`
/// tested rows, as a dense `mP x L` product.
fn transport_apply(data: &ProblemData, basis: &Mat<f64>) -> Mat<f64> {
    let mesh = data.mesh;
    let m = data.m();
    let nf = mesh.fine_per_block();
    let p = mesh.nodes_per_block();
    let cm = CellMatrices::new(mesh.fine_hx(), mesh.fine_hy());
    let cols = basis.ncols();
    let mut out = Mat::zeros(m * p, cols);
    for cy in 0..nf {
        for cx in 0..nf {
            let nodes = cell_nodes(nf, cx, cy);
            for ord in 0..m {
                let [vx, vy] = data.ords.direction(ord);
                let alpha = data.ords.weight(ord);
                for k in 0..4 {
                    let row = ord * p + nodes[k];
                    for l in 0..4 {
                        let coef = -alpha * (vx * cm.cx[k][l] + vy * cm.cy[k][l]);
                        if coef == 0.0 {
                            continue;
                        }
                        let src = ord * p + nodes[l];
                        for col in 0..cols {
                            out[(row, col)] += coef * basis[(src, col)];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Assemble the reduced system for block bases over the whole domain.
/// `bases[b]` is the `mP x L_b` nodal basis of block `b`.
pub(crate) fn assemble_reduced(
    data: &ProblemData,
    bases: &[Mat<f64>],
    g: &BoundaryData,
) -> Result<ReducedGalerkin> {
    let mesh = data.mesh;
    let nb = mesh.n_blocks();
    if bases.len() != nb {
        return Err(Error::invalid("need one basis per coarse block"));
    }
    let m = data.m();
    let p = mesh.nodes_per_block();
    let nf = mesh.fine_per_block();
    for (b, basis) in bases.iter().enumerate() {
        if basis.nrows() != m * p || basis.ncols() == 0 {
            return Err(Error::invalid(format!("basis of block {b} has wrong shape")));
        }
    }
    let mut offsets = Vec::with_capacity(nb);
    let mut dim = 0;
    for basis in bases {
        offsets.push(dim);
        dim += basis.ncols();
    }

    let mut a_pieces: Vec<(usize, usize, Mat<f64>)> = Vec::new();
    let mut l_pieces: Vec<(usize, Mat<f64>)> = Vec::new();

    for (b, basis) in bases.iter().enumerate() {
        let ta = transport_apply(data, basis);
        a_pieces.push((b, b, basis.transpose() * &ta));
        let la = l_apply(data, b, basis);
        l_pieces.push((b, basis.transpose() * &la));
    }

    let all_blocks: Vec<usize> = (0..nb).collect();
    // Upwind flux on interior coarse edges.
    for edge_id in mesh.region_interior_edges(&all_blocks) {
        let edge = &mesh.coarse_edges()[edge_id];
        let me = edge_trace_mass(nf, mesh.sub_edge_length(edge));
        let [nx, ny] = edge.reference_normal();
        let (neg, pos) = (edge.neg.unwrap(), edge.pos.unwrap());
        for ord in 0..m {
            let [vx, vy] = data.ords.direction(ord);
            let s = vx * nx + vy * ny;
            if s == 0.0 {
                continue;
            }
            let coef = data.ords.weight(ord) * s.abs();
            let upwind_is_neg = s > 0.0;
            let (up, down) = if upwind_is_neg { (neg, pos) } else { (pos, neg) };
            let t_up = basis_trace(mesh, &bases[up], ord, edge, upwind_is_neg);
            let t_down = basis_trace(mesh, &bases[down], ord, edge, !upwind_is_neg);
            let me_up = &me * &t_up;
            let mut up_up = t_up.transpose() * &me_up;
            let mut down_up = t_down.transpose() * &me_up;
            for v in up_up.col_iter_mut().flat_map(|c| c.iter_mut()) {
                *v *= coef;
            }
            for v in down_up.col_iter_mut().flat_map(|c| c.iter_mut()) {
                *v *= -coef;
            }
            a_pieces.push((up, up, up_up));
            a_pieces.push((down, up, down_up));
        }
    }

    // Outflow boundary flux and the inflow functional.
    let mut rhs = vec![0.0; dim];
    for be in mesh.region_boundary_edges(&all_blocks) {
        let edge = &mesh.coarse_edges()[be.edge];
        let me = edge_trace_mass(nf, mesh.sub_edge_length(edge));
        let outward = be.outward_normal(mesh);
        let block = be.inside_block;
        for ord in 0..m {
            let v = data.ords.direction(ord);
            let s = v[0] * outward[0] + v[1] * outward[1];
            match classify_face(v, outward) {
                FaceFlow::Outflow => {
                    let coef = data.ords.weight(ord) * s;
                    let tr = basis_trace(mesh, &bases[block], ord, edge, be.inside_is_neg);
                    let mut piece = tr.transpose() * (&me * &tr);
                    for v in piece.col_iter_mut().flat_map(|c| c.iter_mut()) {
                        *v *= coef;
                    }
                    a_pieces.push((block, block, piece));
                }
                FaceFlow::Inflow => {
                    let coef = data.ords.weight(ord) * s.abs();
                    let (shape, wq) = edge_gauss(mesh.sub_edge_length(edge));
                    let tr = basis_trace(mesh, &bases[block], ord, edge, be.inside_is_neg);
                    for t in 0..nf {
                        for q in 0..2 {
                            let (x, y) = mesh.edge_point(edge, t, GAUSS2.0[q]);
                            let gv = g.eval(x, y, ord);
                            if gv == 0.0 {
                                continue;
                            }
                            for col in 0..tr.ncols() {
                                let wt = shape[q][0] * tr[(t, col)] + shape[q][1] * tr[(t + 1, col)];
                                rhs[offsets[block] + col] += coef * wq[q] * gv * wt;
                            }
                        }
                    }
                }
                FaceFlow::Tangential => {}
            }
        }
    }

    Ok(ReducedGalerkin { offsets, dim, a_pieces, l_pieces, rhs })
}

impl ReducedGalerkin {
    /// Dense transport and collision matrices (for the coarse system type).
    pub fn dense_parts(&self) -> (Mat<f64>, Mat<f64>) {
        let mut a = Mat::zeros(self.dim, self.dim);
        for (rb, cb, piece) in &self.a_pieces {
            let (r0, c0) = (self.offsets[*rb], self.offsets[*cb]);
            for i in 0..piece.nrows() {
                for j in 0..piece.ncols() {
                    a[(r0 + i, c0 + j)] += piece[(i, j)];
                }
            }
        }
        let mut l = Mat::zeros(self.dim, self.dim);
        for (b, piece) in &self.l_pieces {
            let o = self.offsets[*b];
            for i in 0..piece.nrows() {
                for j in 0..piece.ncols() {
                    l[(o + i, o + j)] += piece[(i, j)];
                }
            }
        }
        (a, l)
    }

    /// Solve `(A + L) U = rhs`; dense below the size threshold, sparse LU
    /// above it. Returns the coefficient vector.
    pub fn solve(&self) -> Result<Vec<f64>> {
        crate::linalg::ensure_sequential_kernels();
        if self.dim <= 3500 {
            let (a, l) = self.dense_parts();
            let sys = &a + &l;
            let lu = sys.partial_piv_lu();
            let b = Mat::from_fn(self.dim, 1, |i, _| self.rhs[i]);
            let x = lu.solve(&b);
            let sol: Vec<f64> = (0..self.dim).map(|i| x[(i, 0)]).collect();
            self.check_residual(&sys, &sol)?;
            Ok(sol)
        } else {
            let mut trips: Vec<Triplet<usize, usize, f64>> = Vec::new();
            for (rb, cb, piece) in &self.a_pieces {
                let (r0, c0) = (self.offsets[*rb], self.offsets[*cb]);
                for j in 0..piece.ncols() {
                    for i in 0..piece.nrows() {
                        trips.push(Triplet::new(r0 + i, c0 + j, piece[(i, j)]));
                    }
                }
            }
            for (b, piece) in &self.l_pieces {
                let o = self.offsets[*b];
                for j in 0..piece.ncols() {
                    for i in 0..piece.nrows() {
                        trips.push(Triplet::new(o + i, o + j, piece[(i, j)]));
                    }
                }
            }
            let sp = SparseColMat::try_new_from_triplets(self.dim, self.dim, &trips)
                .map_err(|e| Error::numerical(format!("reduced assembly failed: {e:?}")))?;
            let lu = SparseLu::new(&sp)?;
            let sol = lu.solve_vec(&self.rhs);
            // residual via the sparse operator
            let x = Mat::from_fn(self.dim, 1, |i, _| sol[i]);
            let ax = &sp * &x;
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..self.dim {
                num += (ax[(i, 0)] - self.rhs[i]).powi(2);
                den += self.rhs[i].powi(2);
            }
            if den > 0.0 && (num / den).sqrt() > 1e-9 {
                return Err(Error::numerical(format!(
                    "reduced solve residual {:.3e} above tolerance",
                    (num / den).sqrt()
                )));
            }
            Ok(sol)
        }
    }

    fn check_residual(&self, sys: &Mat<f64>, sol: &[f64]) -> Result<()> {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..self.dim {
            let mut ax = 0.0;
            for j in 0..self.dim {
                ax += sys[(i, j)] * sol[j];
            }
            num += (ax - self.rhs[i]).powi(2);
            den += self.rhs[i].powi(2);
        }
        if den > 0.0 && (num / den).sqrt() > 1e-9 {
            return Err(Error::numerical(format!(
                "reduced solve residual {:.3e} above tolerance",
                (num / den).sqrt()
            )));
        }
        Ok(())
    }
}

/// Reconstruct the fine-grid field `sum_p U_p phi_p` from block bases.
pub(crate) fn reconstruct_field(
    mesh: &NestedMesh,
    m: usize,
    bases: &[Mat<f64>],
    offsets: &[usize],
    coeffs: &[f64],
) -> KineticField {
    let p = mesh.nodes_per_block();
    let blocks: Vec<usize> = (0..mesh.n_blocks()).collect();
    let mut field = KineticField::zeros(mesh, m, &blocks);
    for (b, basis) in bases.iter().enumerate() {
        let o = offsets[b];
        let mut nodal = vec![0.0; m * p];
        for col in 0..basis.ncols() {
            let c = coeffs[o + col];
            if c == 0.0 {
                continue;
            }
            for row in 0..m * p {
                nodal[row] += c * basis[(row, col)];
            }
        }
        field.set_block_values(b, &nodal);
    }
    field
}
