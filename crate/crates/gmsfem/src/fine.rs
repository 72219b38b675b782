//! Fine-scale reference solver and the transport weak-form operators.
//!
//! `bilinear_a`, `bilinear_l` and `functional_f` evaluate the summed
//! weak-form operators for arbitrary field pairs by direct quadrature;
//! `FineSystem` assembles and factorizes the full upwind DG system and
//! solves it for inflow data. Both share the same quadrature rules, so
//! algebraic identities between them hold to roundoff.

use std::io::Write;

use crate::assemble::{field_from_solver, inflow_rhs, ProblemData, WeakOperator};
use crate::elements::{edge_gauss, edge_mass, CellMatrices, GAUSS2};
use crate::error::{Error, Result};
use crate::field::KineticField;
use crate::inflow::BoundaryData;
use crate::media::{sample_cell_values, MediaSpec};
use crate::mesh::{classify_face, FaceFlow, NestedMesh};
use crate::ordinates::{OrdinateSet, ScatteringMatrix};

/// Corner nodes of cell (cx, cy), row-major local numbering.
#[inline]
pub(crate) fn cell_nodes(nf: usize, cx: usize, cy: usize) -> [usize; 4] {
    [
        cy * (nf + 1) + cx,
        cy * (nf + 1) + cx + 1,
        (cy + 1) * (nf + 1) + cx,
        (cy + 1) * (nf + 1) + cx + 1,
    ]
}

fn check_pair(u: &KineticField, w: &KineticField, ords: &OrdinateSet) -> Result<()> {
    if !u.layout_matches(w) {
        return Err(Error::invalid("fields have mismatched layouts"));
    }
    if u.m() != ords.len() {
        return Err(Error::invalid("field ordinate count does not match quadrature"));
    }
    Ok(())
}

/// Transport form `a(u, w)` over the fields' region: volume transport,
/// upwind flux on interior coarse edges, outflow boundary flux.
pub fn bilinear_a(
    u: &KineticField,
    w: &KineticField,
    mesh: &NestedMesh,
    ords: &OrdinateSet,
) -> Result<f64> {
    check_pair(u, w, ords)?;
    let m = ords.len();
    let nf = mesh.fine_per_block();
    let cm = CellMatrices::new(mesh.fine_hx(), mesh.fine_hy());
    let blocks = u.blocks();
    let mut acc = 0.0;

    for bpos in 0..blocks.len() {
        for ord in 0..m {
            let [vx, vy] = ords.direction(ord);
            let alpha = ords.weight(ord);
            let mut block_acc = 0.0;
            for cy in 0..nf {
                for cx in 0..nf {
                    let nodes = cell_nodes(nf, cx, cy);
                    for (k, &nk) in nodes.iter().enumerate() {
                        let wk = w.get(ord, bpos, nk);
                        if wk == 0.0 {
                            continue;
                        }
                        let mut s = 0.0;
                        for (l, &nl) in nodes.iter().enumerate() {
                            s += u.get(ord, bpos, nl) * (vx * cm.cx[k][l] + vy * cm.cy[k][l]);
                        }
                        block_acc -= wk * s;
                    }
                }
            }
            acc += alpha * block_acc;
        }
    }

    // Upwind flux over coarse edges interior to the region.
    for edge_id in mesh.region_interior_edges(blocks) {
        let edge = &mesh.coarse_edges()[edge_id];
        let me = edge_mass(mesh.sub_edge_length(edge));
        let [nx, ny] = edge.reference_normal();
        let neg_pos = u.block_position(edge.neg.unwrap()).unwrap();
        let pos_pos = u.block_position(edge.pos.unwrap()).unwrap();
        for ord in 0..m {
            let [vx, vy] = ords.direction(ord);
            let s = vx * nx + vy * ny;
            if s == 0.0 {
                continue;
            }
            let upwind_is_neg = s > 0.0;
            let (up, down) = if upwind_is_neg { (neg_pos, pos_pos) } else { (pos_pos, neg_pos) };
            let coef = ords.weight(ord) * s.abs();
            for t in 0..nf {
                let mut up_u = [0.0; 2];
                let mut jump_w = [0.0; 2];
                for a in 0..2 {
                    let n_up = mesh.trace_node(edge, upwind_is_neg, t + a);
                    let n_down = mesh.trace_node(edge, !upwind_is_neg, t + a);
                    up_u[a] = u.get(ord, up, n_up);
                    jump_w[a] = w.get(ord, up, n_up) - w.get(ord, down, n_down);
                }
                for a in 0..2 {
                    for b in 0..2 {
                        acc += coef * jump_w[a] * me[a][b] * up_u[b];
                    }
                }
            }
        }
    }

    // Outflow part of the region boundary.
    for be in mesh.region_boundary_edges(blocks) {
        let edge = &mesh.coarse_edges()[be.edge];
        let me = edge_mass(mesh.sub_edge_length(edge));
        let outward = be.outward_normal(mesh);
        let bpos = u.block_position(be.inside_block).unwrap();
        for ord in 0..m {
            let v = ords.direction(ord);
            if classify_face(v, outward) != FaceFlow::Outflow {
                continue;
            }
            let coef = ords.weight(ord) * (v[0] * outward[0] + v[1] * outward[1]);
            for t in 0..nf {
                let mut uu = [0.0; 2];
                let mut ww = [0.0; 2];
                for a in 0..2 {
                    let node = mesh.trace_node(edge, be.inside_is_neg, t + a);
                    uu[a] = u.get(ord, bpos, node);
                    ww[a] = w.get(ord, bpos, node);
                }
                for a in 0..2 {
                    for b in 0..2 {
                        acc += coef * ww[a] * me[a][b] * uu[b];
                    }
                }
            }
        }
    }

    Ok(acc)
}

/// Collision + absorption form `l(u, w)` with cell-centered media sampling.
pub fn bilinear_l(
    u: &KineticField,
    w: &KineticField,
    mesh: &NestedMesh,
    ords: &OrdinateSet,
    media: &MediaSpec,
    epsilon: f64,
) -> Result<f64> {
    check_pair(u, w, ords)?;
    if epsilon <= 0.0 {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    let scatter = ScatteringMatrix::new(ords);
    let media_cells = sample_cell_values(mesh, media);
    Ok(bilinear_l_sampled(u, w, mesh, ords, &scatter, &media_cells, epsilon))
}

/// `l(u, w)` with precomputed media samples (shared with metrics).
pub(crate) fn bilinear_l_sampled(
    u: &KineticField,
    w: &KineticField,
    mesh: &NestedMesh,
    ords: &OrdinateSet,
    scatter: &ScatteringMatrix,
    media_cells: &[f64],
    epsilon: f64,
) -> f64 {
    let m = ords.len();
    let nf = mesh.fine_per_block();
    let cm = CellMatrices::new(mesh.fine_hx(), mesh.fine_hy());
    let blocks = u.blocks();
    let cells = mesh.cells_per_block();
    let mut acc = 0.0;
    for (bpos, &block) in blocks.iter().enumerate() {
        for cy in 0..nf {
            for cx in 0..nf {
                let cell = cy * nf + cx;
                let nodes = cell_nodes(nf, cx, cy);
                // pairwise mass products per ordinate pair
                let c = 1.0 / (epsilon * media_cells[block * cells + cell]);
                for i in 0..m {
                    // absorption: alpha_i * epsilon * int u_i w_i
                    let mut mass_ii = 0.0;
                    for (k, &nk) in nodes.iter().enumerate() {
                        let wk = w.get(i, bpos, nk);
                        if wk == 0.0 {
                            continue;
                        }
                        let mut s = 0.0;
                        for (l, &nl) in nodes.iter().enumerate() {
                            s += cm.mass[k][l] * u.get(i, bpos, nl);
                        }
                        mass_ii += wk * s;
                    }
                    acc += ords.weight(i) * epsilon * mass_ii;
                    for j in 0..m {
                        let aij = scatter.entry(i, j);
                        if aij == 0.0 {
                            continue;
                        }
                        let mut mass_ij = 0.0;
                        for (k, &nk) in nodes.iter().enumerate() {
                            let wk = w.get(i, bpos, nk);
                            if wk == 0.0 {
                                continue;
                            }
                            let mut s = 0.0;
                            for (l, &nl) in nodes.iter().enumerate() {
                                s += cm.mass[k][l] * u.get(j, bpos, nl);
                            }
                            mass_ij += wk * s;
                        }
                        acc += c * aij * mass_ij;
                    }
                }
            }
        }
    }
    acc
}

/// Inflow functional `F(w) = -sum_i alpha_i int_{Gamma^-} g_i w_i v_i . n`,
/// evaluated with pointwise data at the edge Gauss nodes.
pub fn functional_f(
    w: &KineticField,
    g: &BoundaryData,
    mesh: &NestedMesh,
    ords: &OrdinateSet,
) -> Result<f64> {
    if w.m() != ords.len() {
        return Err(Error::invalid("field ordinate count does not match quadrature"));
    }
    let nf = mesh.fine_per_block();
    let mut acc = 0.0;
    for be in mesh.region_boundary_edges(w.blocks()) {
        let edge = &mesh.coarse_edges()[be.edge];
        let (shape, wq) = edge_gauss(mesh.sub_edge_length(edge));
        let outward = be.outward_normal(mesh);
        let bpos = w.block_position(be.inside_block).unwrap();
        for ord in 0..ords.len() {
            let v = ords.direction(ord);
            if classify_face(v, outward) != FaceFlow::Inflow {
                continue;
            }
            let coef = ords.weight(ord) * (v[0] * outward[0] + v[1] * outward[1]).abs();
            for t in 0..nf {
                for q in 0..2 {
                    let (x, y) = mesh.edge_point(edge, t, GAUSS2.0[q]);
                    let gv = g.eval(x, y, ord);
                    let mut wt = 0.0;
                    for a in 0..2 {
                        let node = mesh.trace_node(edge, be.inside_is_neg, t + a);
                        wt += shape[q][a] * w.get(ord, bpos, node);
                    }
                    acc += coef * wq[q] * gv * wt;
                }
            }
        }
    }
    Ok(acc)
}

/// Assembled and factorized fine-scale system over the whole domain.
pub struct FineSystem {
    mesh: NestedMesh,
    ords: OrdinateSet,
    scatter: ScatteringMatrix,
    media_cells: Vec<f64>,
    epsilon: f64,
    op: WeakOperator,
}

impl FineSystem {
    pub fn new(
        mesh: &NestedMesh,
        ords: &OrdinateSet,
        media: &MediaSpec,
        epsilon: f64,
    ) -> Result<Self> {
        let scatter = ScatteringMatrix::new(ords);
        let media_cells = sample_cell_values(mesh, media);
        let data = ProblemData::new(mesh, ords, &scatter, &media_cells, epsilon)?;
        let blocks: Vec<usize> = (0..mesh.n_blocks()).collect();
        let op = WeakOperator::new(&data, &blocks)?;
        Ok(FineSystem {
            mesh: mesh.clone(),
            ords: ords.clone(),
            scatter,
            media_cells,
            epsilon,
            op,
        })
    }

    /// Total unknown count `m * blocks * (nf+1)^2`.
    pub fn n_dofs(&self) -> usize {
        self.op.n_sdofs
    }

    /// Solve for the given inflow data; the relative residual is checked
    /// against the solver tolerance.
    pub fn solve(&self, g: &BoundaryData) -> Result<KineticField> {
        let data = ProblemData::new(
            &self.mesh,
            &self.ords,
            &self.scatter,
            &self.media_cells,
            self.epsilon,
        )?;
        let rhs = inflow_rhs(&data, &self.op.blocks, g);
        let x = self.op.solve(&rhs);
        let res = self.op.relative_residual(&x, &rhs);
        if !(res < 1e-10) && rhs.iter().any(|&b| b != 0.0) {
            return Err(Error::numerical(format!(
                "fine solve residual {res:.3e} above tolerance"
            )));
        }
        Ok(field_from_solver(&self.mesh, self.ords.len(), &self.op.blocks, &x))
    }
}

/// One-shot fine reference solve.
pub fn solve_fine(
    mesh: &NestedMesh,
    ords: &OrdinateSet,
    media: &MediaSpec,
    epsilon: f64,
    g: &BoundaryData,
) -> Result<KineticField> {
    FineSystem::new(mesh, ords, media, epsilon)?.solve(g)
}

/// Write a solution as CSV: node coordinates, per-ordinate values, and the
/// angular average. One row per (block, node); nodes duplicated on coarse
/// edges appear once per adjacent block.
pub fn dump_solution_csv(
    out: &mut dyn Write,
    field: &KineticField,
    mesh: &NestedMesh,
    ords: &OrdinateSet,
) -> Result<()> {
    let m = field.m();
    write!(out, "x,y,block,node")?;
    for i in 0..m {
        write!(out, ",u{i}")?;
    }
    writeln!(out, ",ubar")?;
    let avg = field.angular_average(ords);
    for (bpos, &block) in field.blocks().iter().enumerate() {
        for node in 0..field.nodes_per_block() {
            let (x, y) = mesh.node_position(block, node);
            write!(out, "{x},{y},{block},{node}")?;
            for ord in 0..m {
                write!(out, ",{}", field.get(ord, bpos, node))?;
            }
            writeln!(out, ",{}", avg[bpos * field.nodes_per_block() + node])?;
        }
    }
    Ok(())
}
