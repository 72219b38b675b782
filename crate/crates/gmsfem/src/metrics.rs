//! Norms and error quantities for kinetic fields.
//!
//! The V-norm collects |v.n|-weighted squared jumps over all coarse edges
//! (one-sided traces on the boundary); the W-norm collects per-block
//! boundary traces; the tilde variants add the collision form; the energy
//! combines gradients, 1/H-weighted interior jumps and collision. All
//! integrals use the same exact-for-Q1 rules as the assembly.

use crate::elements::{edge_gauss, edge_mass, CellMatrices, GAUSS2};
use crate::error::{Error, Result};
use crate::field::KineticField;
use crate::fine::{bilinear_l_sampled, cell_nodes};
use crate::inflow::BoundaryData;
use crate::media::{sample_cell_values, MediaSpec};
use crate::mesh::{classify_face, FaceFlow, NestedMesh};
use crate::offline::MultiscaleSpace;
use crate::ordinates::{OrdinateSet, ScatteringMatrix};
use crate::snapshot::SnapshotSpace;

/// All norm values for one field (or field difference).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormReport {
    pub v: f64,
    pub w: f64,
    pub tilde_v: f64,
    pub tilde_w: f64,
    pub energy: f64,
}

impl NormReport {
    pub fn csv_header() -> &'static str {
        "norm_v,norm_w,norm_tilde_v,norm_tilde_w,norm_energy"
    }

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.v, self.w, self.tilde_v, self.tilde_w, self.energy)
    }
}

/// Squared jump energy `sum_i alpha_i sum_{e in E_H} int |v_i.n| [u_i]^2`
/// over the field's region (interior jumps plus one-sided boundary traces).
fn jump_energy_weighted(u: &KineticField, mesh: &NestedMesh, ords: &OrdinateSet) -> f64 {
    let m = ords.len();
    let nf = mesh.fine_per_block();
    let blocks = u.blocks();
    let mut acc = 0.0;
    for edge_id in mesh.region_interior_edges(blocks) {
        let edge = &mesh.coarse_edges()[edge_id];
        let me = edge_mass(mesh.sub_edge_length(edge));
        let [nx, ny] = edge.reference_normal();
        let neg_pos = u.block_position(edge.neg.unwrap()).unwrap();
        let pos_pos = u.block_position(edge.pos.unwrap()).unwrap();
        for ord in 0..m {
            let [vx, vy] = ords.direction(ord);
            let s = (vx * nx + vy * ny).abs();
            if s == 0.0 {
                continue;
            }
            let coef = ords.weight(ord) * s;
            for t in 0..nf {
                let mut jump = [0.0; 2];
                for a in 0..2 {
                    jump[a] = u.get(ord, neg_pos, mesh.trace_node(edge, true, t + a))
                        - u.get(ord, pos_pos, mesh.trace_node(edge, false, t + a));
                }
                for a in 0..2 {
                    for b in 0..2 {
                        acc += coef * jump[a] * me[a][b] * jump[b];
                    }
                }
            }
        }
    }
    for be in mesh.region_boundary_edges(blocks) {
        let edge = &mesh.coarse_edges()[be.edge];
        let me = edge_mass(mesh.sub_edge_length(edge));
        let outward = be.outward_normal(mesh);
        let bpos = u.block_position(be.inside_block).unwrap();
        for ord in 0..m {
            let [vx, vy] = ords.direction(ord);
            let s = (vx * outward[0] + vy * outward[1]).abs();
            if s == 0.0 {
                continue;
            }
            let coef = ords.weight(ord) * s;
            for t in 0..nf {
                let mut tr = [0.0; 2];
                for a in 0..2 {
                    tr[a] = u.get(ord, bpos, mesh.trace_node(edge, be.inside_is_neg, t + a));
                }
                for a in 0..2 {
                    for b in 0..2 {
                        acc += coef * tr[a] * me[a][b] * tr[b];
                    }
                }
            }
        }
    }
    acc
}

/// `||u||_V`.
pub fn norm_v(u: &KineticField, mesh: &NestedMesh, ords: &OrdinateSet) -> f64 {
    (0.5 * jump_energy_weighted(u, mesh, ords)).max(0.0).sqrt()
}

/// `||u||_W`: per-block boundary traces, both sides of interior edges.
pub fn norm_w(u: &KineticField, mesh: &NestedMesh, ords: &OrdinateSet) -> f64 {
    let m = ords.len();
    let nf = mesh.fine_per_block();
    let blocks = u.blocks();
    let mut acc = 0.0;
    let mut add_side = |edge_id: usize, neg_side: bool, block: usize| {
        let edge = &mesh.coarse_edges()[edge_id];
        let me = edge_mass(mesh.sub_edge_length(edge));
        let [nx, ny] = edge.reference_normal();
        let Some(bpos) = u.block_position(block) else { return };
        for ord in 0..m {
            let [vx, vy] = ords.direction(ord);
            let s = (vx * nx + vy * ny).abs();
            if s == 0.0 {
                continue;
            }
            let coef = ords.weight(ord) * s;
            for t in 0..nf {
                let mut tr = [0.0; 2];
                for a in 0..2 {
                    tr[a] = u.get(ord, bpos, mesh.trace_node(edge, neg_side, t + a));
                }
                for a in 0..2 {
                    for b in 0..2 {
                        acc += coef * tr[a] * me[a][b] * tr[b];
                    }
                }
            }
        }
    };
    let region: std::collections::BTreeSet<usize> = blocks.iter().copied().collect();
    for (edge_id, edge) in mesh.coarse_edges().iter().enumerate() {
        if let Some(b) = edge.neg {
            if region.contains(&b) {
                add_side(edge_id, true, b);
            }
        }
        if let Some(b) = edge.pos {
            if region.contains(&b) {
                add_side(edge_id, false, b);
            }
        }
    }
    (0.5 * acc).max(0.0).sqrt()
}

/// `||u||_Vtilde^2 = ||u||_V^2 + l(u, u)` and its W counterpart.
pub fn norm_tilde_v(
    u: &KineticField,
    mesh: &NestedMesh,
    ords: &OrdinateSet,
    media: &MediaSpec,
    epsilon: f64,
) -> Result<f64> {
    let scatter = ScatteringMatrix::new(ords);
    let cells = sample_cell_values(mesh, media);
    Ok(norm_tilde_v_sampled(u, mesh, ords, &scatter, &cells, epsilon))
}

pub(crate) fn norm_tilde_v_sampled(
    u: &KineticField,
    mesh: &NestedMesh,
    ords: &OrdinateSet,
    scatter: &ScatteringMatrix,
    media_cells: &[f64],
    epsilon: f64,
) -> f64 {
    let l = bilinear_l_sampled(u, u, mesh, ords, scatter, media_cells, epsilon);
    (norm_v(u, mesh, ords).powi(2) + l).max(0.0).sqrt()
}

pub fn norm_tilde_w(
    u: &KineticField,
    mesh: &NestedMesh,
    ords: &OrdinateSet,
    media: &MediaSpec,
    epsilon: f64,
) -> Result<f64> {
    let scatter = ScatteringMatrix::new(ords);
    let cells = sample_cell_values(mesh, media);
    Ok(norm_tilde_w_sampled(u, mesh, ords, &scatter, &cells, epsilon))
}

pub(crate) fn norm_tilde_w_sampled(
    u: &KineticField,
    mesh: &NestedMesh,
    ords: &OrdinateSet,
    scatter: &ScatteringMatrix,
    media_cells: &[f64],
    epsilon: f64,
) -> f64 {
    let l = bilinear_l_sampled(u, u, mesh, ords, scatter, media_cells, epsilon);
    (norm_w(u, mesh, ords).powi(2) + l).max(0.0).sqrt()
}

/// Total energy: gradients, 1/H interior jumps, collision.
pub fn norm_energy(
    u: &KineticField,
    mesh: &NestedMesh,
    ords: &OrdinateSet,
    media: &MediaSpec,
    epsilon: f64,
) -> Result<f64> {
    let scatter = ScatteringMatrix::new(ords);
    let cells = sample_cell_values(mesh, media);
    Ok(norm_energy_sampled(u, mesh, ords, &scatter, &cells, epsilon))
}

pub(crate) fn norm_energy_sampled(
    u: &KineticField,
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
    let mut acc = 0.0;
    // gradient energy
    for bpos in 0..blocks.len() {
        for ord in 0..m {
            let mut g = 0.0;
            for cy in 0..nf {
                for cx in 0..nf {
                    let nodes = cell_nodes(nf, cx, cy);
                    for (k, &nk) in nodes.iter().enumerate() {
                        let uk = u.get(ord, bpos, nk);
                        if uk == 0.0 {
                            continue;
                        }
                        for (l, &nl) in nodes.iter().enumerate() {
                            g += uk * cm.stiff[k][l] * u.get(ord, bpos, nl);
                        }
                    }
                }
            }
            acc += ords.weight(ord) * g;
        }
    }
    // interior coarse jumps, 1/H weight, no |v.n|
    let inv_h = 1.0 / mesh.coarse_h();
    for edge_id in mesh.region_interior_edges(blocks) {
        let edge = &mesh.coarse_edges()[edge_id];
        let me = edge_mass(mesh.sub_edge_length(edge));
        let neg_pos = u.block_position(edge.neg.unwrap()).unwrap();
        let pos_pos = u.block_position(edge.pos.unwrap()).unwrap();
        for ord in 0..m {
            let coef = ords.weight(ord) * inv_h;
            for t in 0..nf {
                let mut jump = [0.0; 2];
                for a in 0..2 {
                    jump[a] = u.get(ord, neg_pos, mesh.trace_node(edge, true, t + a))
                        - u.get(ord, pos_pos, mesh.trace_node(edge, false, t + a));
                }
                for a in 0..2 {
                    for b in 0..2 {
                        acc += coef * jump[a] * me[a][b] * jump[b];
                    }
                }
            }
        }
    }
    // collision energy (the 1/(eps a) part of l only)
    let cells = mesh.cells_per_block();
    for (bpos, &block) in blocks.iter().enumerate() {
        for cy in 0..nf {
            for cx in 0..nf {
                let cell = cy * nf + cx;
                let c = 1.0 / (epsilon * media_cells[block * cells + cell]);
                let nodes = cell_nodes(nf, cx, cy);
                for i in 0..m {
                    for j in 0..m {
                        let aij = scatter.entry(i, j);
                        if aij == 0.0 {
                            continue;
                        }
                        let mut s = 0.0;
                        for (k, &nk) in nodes.iter().enumerate() {
                            let ui = u.get(i, bpos, nk);
                            if ui == 0.0 {
                                continue;
                            }
                            for (l, &nl) in nodes.iter().enumerate() {
                                s += ui * cm.mass[k][l] * u.get(j, bpos, nl);
                            }
                        }
                        acc += c * aij * s;
                    }
                }
            }
        }
    }
    acc.max(0.0).sqrt()
}

/// All five norms at once.
pub fn norm_report(
    u: &KineticField,
    mesh: &NestedMesh,
    ords: &OrdinateSet,
    media: &MediaSpec,
    epsilon: f64,
) -> Result<NormReport> {
    let scatter = ScatteringMatrix::new(ords);
    let cells = sample_cell_values(mesh, media);
    let v = norm_v(u, mesh, ords);
    let w = norm_w(u, mesh, ords);
    let l = bilinear_l_sampled(u, u, mesh, ords, &scatter, &cells, epsilon);
    Ok(NormReport {
        v,
        w,
        tilde_v: (v * v + l).max(0.0).sqrt(),
        tilde_w: (w * w + l).max(0.0).sqrt(),
        energy: norm_energy_sampled(u, mesh, ords, &scatter, &cells, epsilon),
    })
}

/// Relative kinetic and angular-average L2 errors `(e1, e2)`.
pub fn errors_e1_e2(
    u_h: &KineticField,
    u_coarse: &KineticField,
    mesh: &NestedMesh,
    ords: &OrdinateSet,
) -> Result<(f64, f64)> {
    if !u_h.layout_matches(u_coarse) {
        return Err(Error::invalid("fields have mismatched layouts"));
    }
    let m = ords.len();
    let nf = mesh.fine_per_block();
    let cm = CellMatrices::new(mesh.fine_hx(), mesh.fine_hy());
    let blocks = u_h.blocks();
    let p = u_h.nodes_per_block();

    let mass_quad = |a: &[f64], b: &[f64]| -> f64 {
        // both length nodes_per_block, one block, one component
        let mut acc = 0.0;
        for cy in 0..nf {
            for cx in 0..nf {
                let nodes = cell_nodes(nf, cx, cy);
                for (k, &nk) in nodes.iter().enumerate() {
                    let ak = a[nk];
                    if ak == 0.0 {
                        continue;
                    }
                    for (l, &nl) in nodes.iter().enumerate() {
                        acc += ak * cm.mass[k][l] * b[nl];
                    }
                }
            }
        }
        acc
    };

    let mut num1 = 0.0;
    let mut den1 = 0.0;
    let mut num2 = 0.0;
    let mut den2 = 0.0;
    let avg_h = u_h.angular_average(ords);
    let avg_c = u_coarse.angular_average(ords);
    for bpos in 0..blocks.len() {
        for ord in 0..m {
            let alpha = ords.weight(ord);
            let mut diff = vec![0.0; p];
            let mut refv = vec![0.0; p];
            for node in 0..p {
                refv[node] = u_h.get(ord, bpos, node);
                diff[node] = refv[node] - u_coarse.get(ord, bpos, node);
            }
            num1 += alpha * mass_quad(&diff, &diff);
            den1 += alpha * mass_quad(&refv, &refv);
        }
        let mut dbar = vec![0.0; p];
        let mut rbar = vec![0.0; p];
        for node in 0..p {
            rbar[node] = avg_h[bpos * p + node];
            dbar[node] = rbar[node] - avg_c[bpos * p + node];
        }
        num2 += mass_quad(&dbar, &dbar);
        den2 += mass_quad(&rbar, &rbar);
    }
    if den1 <= 0.0 || den2 <= 0.0 {
        return Err(Error::invalid("reference solution is identically zero"));
    }
    Ok(((num1 / den1).sqrt(), (num2 / den2).sqrt()))
}

/// `dim(V_H) / dim(V_snap)`.
pub fn snapshot_ratio(space: &MultiscaleSpace, snapshots: &[SnapshotSpace]) -> f64 {
    let selected: usize = space.selected_counts().iter().sum();
    let total: usize = snapshots.iter().map(|s| s.dim()).sum();
    selected as f64 / total as f64
}

/// Left- and right-hand sides of the well-posedness stability inequality:
/// quarter-weighted jump energy + scaled mass + collision energy on the
/// left, weighted inflow data energy on the right.
pub fn stability_sides(
    u: &KineticField,
    g: &BoundaryData,
    mesh: &NestedMesh,
    ords: &OrdinateSet,
    media: &MediaSpec,
    epsilon: f64,
) -> Result<(f64, f64)> {
    let scatter = ScatteringMatrix::new(ords);
    let media_cells = sample_cell_values(mesh, media);
    let m = ords.len();
    let nf = mesh.fine_per_block();
    let cm = CellMatrices::new(mesh.fine_hx(), mesh.fine_hy());
    let cells = mesh.cells_per_block();
    let blocks = u.blocks();

    let jump = jump_energy_weighted(u, mesh, ords);
    let mut mass = 0.0;
    let mut coll = 0.0;
    for (bpos, &block) in blocks.iter().enumerate() {
        for cy in 0..nf {
            for cx in 0..nf {
                let cell = cy * nf + cx;
                let nodes = cell_nodes(nf, cx, cy);
                let c = 1.0 / (epsilon * media_cells[block * cells + cell]);
                for i in 0..m {
                    let mut mii = 0.0;
                    for (k, &nk) in nodes.iter().enumerate() {
                        let ui = u.get(i, bpos, nk);
                        if ui == 0.0 {
                            continue;
                        }
                        for (l, &nl) in nodes.iter().enumerate() {
                            mii += ui * cm.mass[k][l] * u.get(i, bpos, nl);
                        }
                    }
                    mass += ords.weight(i) * epsilon * mii;
                    for j in 0..m {
                        let aij = scatter.entry(i, j);
                        if aij == 0.0 {
                            continue;
                        }
                        let mut mij = 0.0;
                        for (k, &nk) in nodes.iter().enumerate() {
                            let ui = u.get(i, bpos, nk);
                            if ui == 0.0 {
                                continue;
                            }
                            for (l, &nl) in nodes.iter().enumerate() {
                                mij += ui * cm.mass[k][l] * u.get(j, bpos, nl);
                            }
                        }
                        coll += c * aij * mij;
                    }
                }
            }
        }
    }
    let lhs = 0.25 * jump + mass + coll;

    // data energy: sum_i alpha_i int_{Gamma^-} |v.n| g^2 with the same rule
    let mut rhs = 0.0;
    for be in mesh.region_boundary_edges(blocks) {
        let edge = &mesh.coarse_edges()[be.edge];
        let (_, wq) = edge_gauss(mesh.sub_edge_length(edge));
        let outward = be.outward_normal(mesh);
        for ord in 0..m {
            let v = ords.direction(ord);
            if classify_face(v, outward) != FaceFlow::Inflow {
                continue;
            }
            let coef = ords.weight(ord) * (v[0] * outward[0] + v[1] * outward[1]).abs();
            for t in 0..nf {
                for q in 0..2 {
                    let (x, y) = mesh.edge_point(edge, t, GAUSS2.0[q]);
                    let gv = g.eval(x, y, ord);
                    rhs += coef * wq[q] * gv * gv;
                }
            }
        }
    }
    Ok((lhs, rhs))
}
