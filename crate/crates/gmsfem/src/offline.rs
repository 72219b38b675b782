//! Offline reduction: energy-minimizing extension of per-block snapshots
//! onto oversampled regions, local spectral pencils, the generalized
//! eigenvalue problem, and mode selection for the multiscale space.
//!
//! The extension of a center-block snapshot is sought in the direct sum of
//! the region blocks' snapshot spaces; the center coefficients are pinned
//! and the free neighbors solve a symmetric positive definite normal
//! system (coefficient elimination, no multipliers). Both pencil forms are
//! evaluated on the extended fields.

use std::collections::BTreeMap;

use faer::prelude::Solve;
use faer::Mat;
use rayon::prelude::*;

use crate::assemble::ProblemData;
use crate::elements::CellMatrices;
use crate::error::{Error, Result};
use crate::fine::cell_nodes;
use crate::galerkin::{
    basis_trace, collision_apply, edge_trace_mass, scaled_mass_apply, stiffness_apply,
};
use crate::linalg::{ensure_sequential_kernels, ridge_size, solve_spsd_gep, sym_eigen_ascending};
use crate::media::{sample_cell_values, MediaSpec};
use crate::mesh::{oversample, NestedMesh, OversampleRegion};
use crate::ordinates::{OrdinateSet, ScatteringMatrix};
use crate::snapshot::{det_local_ctx, ran_local_ctx, SnapshotSpace};

/// Snapshot construction method for pipeline-level entry points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SnapshotMethod {
    Det,
    Ran { k: usize, seed: u64 },
}

impl SnapshotMethod {
    pub(crate) fn build(
        &self,
        data: &ProblemData,
        block: usize,
        layers: usize,
    ) -> Result<SnapshotSpace> {
        match self {
            SnapshotMethod::Det => det_local_ctx(data, block),
            SnapshotMethod::Ran { k, seed } => {
                ran_local_ctx(data, block, *k, *seed, layers, false)
            }
        }
    }
}

/// Energy-minimizing extension of one block's snapshot basis.
#[derive(Debug, Clone)]
pub struct ExtensionOperator {
    pub block: usize,
    pub region: OversampleRegion,
    /// Row offset of each region block's snapshot coefficients in the
    /// oversampled index (aligned with `region.blocks`).
    pub offsets: Vec<usize>,
    /// `D x d_j` coefficients; the center block rows are the identity.
    pub coefficients: Mat<f64>,
    /// Stationarity residual of the eliminated normal system.
    pub kkt_residual: f64,
    /// Ridge added to the free-block normal system (zero if none).
    pub ridge: f64,
}

/// The two local bilinear-form matrices of the spectral problem.
#[derive(Debug, Clone)]
pub struct SpectralPencil {
    pub block: usize,
    pub a: Mat<f64>,
    pub s: Mat<f64>,
}

/// Eigenpairs of one block's pencil, ascending, S-orthonormal vectors.
#[derive(Debug, Clone)]
pub struct BlockModes {
    pub block: usize,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Mat<f64>,
    /// Ridge applied to `S` inside the eigensolve (zero if none).
    pub ridge: f64,
}

/// Selected modes of one block.
#[derive(Debug, Clone)]
pub struct BlockSelection {
    pub block: usize,
    pub count: usize,
    /// All eigenvalues of the block pencil, ascending.
    pub eigenvalues: Vec<f64>,
    /// `d_j x count` mode coefficients in the snapshot basis.
    pub coefficients: Mat<f64>,
}

/// The multiscale space: selected modes per block plus the spectral gap.
#[derive(Debug, Clone)]
pub struct MultiscaleSpace {
    selections: Vec<BlockSelection>,
    lambda_star: f64,
}

/// Per-block mode count request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModeCount {
    Uniform(usize),
    PerBlock(Vec<usize>),
    Full,
}

impl MultiscaleSpace {
    pub fn selections(&self) -> &[BlockSelection] {
        &self.selections
    }

    pub fn selected_counts(&self) -> Vec<usize> {
        self.selections.iter().map(|s| s.count).collect()
    }

    pub fn dim(&self) -> usize {
        self.selections.iter().map(|s| s.count).sum()
    }

    /// `min_j lambda_{j, L_j + 1}`; infinite when every block keeps all.
    pub fn lambda_star(&self) -> f64 {
        self.lambda_star
    }

    /// Nodal mode bases per block for the online assembly.
    pub fn mode_bases(&self, snapshots: &[SnapshotSpace]) -> Result<Vec<Mat<f64>>> {
        if snapshots.len() != self.selections.len() {
            return Err(Error::invalid("snapshot spaces do not match the selection"));
        }
        let mut out = Vec::with_capacity(self.selections.len());
        for (sel, snap) in self.selections.iter().zip(snapshots) {
            if snap.block() != sel.block || snap.dim() != sel.coefficients.nrows() {
                return Err(Error::invalid("snapshot spaces do not match the selection"));
            }
            out.push(snap.basis() * &sel.coefficients);
        }
        Ok(out)
    }
}

/// Gram pieces of the extension/pencil forms over snapshot bases.
pub(crate) struct GramCache {
    /// Per block: gradient + collision Gram (the volume part of `a^j`).
    pub a_vol: BTreeMap<usize, Mat<f64>>,
    /// Per block: boundary-trace + scaled-mass + collision Gram (`s^j` diagonal).
    pub s_diag: BTreeMap<usize, Mat<f64>>,
    /// Per interior coarse edge: weighted jump Grams (neg-neg, neg-pos, pos-pos).
    pub edge_jumps: BTreeMap<usize, (Mat<f64>, Mat<f64>, Mat<f64>)>,
}

/// Build the Gram pieces for the given blocks (and the interior edges with
/// both sides among them).
pub(crate) fn build_gram_cache(
    data: &ProblemData,
    snaps: &BTreeMap<usize, &SnapshotSpace>,
) -> Result<GramCache> {
    ensure_sequential_kernels();
    let mesh = data.mesh;
    let m = data.m();
    let nf = mesh.fine_per_block();

    let blocks: Vec<usize> = snaps.keys().copied().collect();
    let mut a_vol = BTreeMap::new();
    let mut s_diag = BTreeMap::new();

    // Edges adjacent to each block, for the s^j boundary term.
    let mut adjacent: BTreeMap<usize, Vec<(usize, bool)>> = BTreeMap::new();
    for (edge_id, edge) in mesh.coarse_edges().iter().enumerate() {
        if let Some(b) = edge.neg {
            adjacent.entry(b).or_default().push((edge_id, true));
        }
        if let Some(b) = edge.pos {
            adjacent.entry(b).or_default().push((edge_id, false));
        }
    }

    for &b in &blocks {
        let snap = snaps[&b];
        let basis = snap.basis();
        let grad = stiffness_apply(data, basis);
        let coll = collision_apply(data, b, basis);
        let av = basis.transpose() * (&grad + &coll);

        let mass = scaled_mass_apply(data, basis);
        let mut sd = basis.transpose() * (&mass + &coll);
        for &(edge_id, neg_side) in &adjacent[&b] {
            let edge = &mesh.coarse_edges()[edge_id];
            let me = edge_trace_mass(nf, mesh.sub_edge_length(edge));
            let [nx, ny] = edge.reference_normal();
            for ord in 0..m {
                let [vx, vy] = data.ords.direction(ord);
                let s = (vx * nx + vy * ny).abs();
                if s == 0.0 {
                    continue;
                }
                let coef = 0.5 * data.ords.weight(ord) * s;
                let tr = basis_trace(mesh, basis, ord, edge, neg_side);
                let piece = tr.transpose() * (&me * &tr);
                for i in 0..sd.nrows() {
                    for j in 0..sd.ncols() {
                        sd[(i, j)] += coef * piece[(i, j)];
                    }
                }
            }
        }
        a_vol.insert(b, symmetrized(&av));
        s_diag.insert(b, symmetrized(&sd));
    }

    let mut edge_jumps = BTreeMap::new();
    for edge_id in mesh.region_interior_edges(&blocks) {
        let edge = &mesh.coarse_edges()[edge_id];
        let (neg, pos) = (edge.neg.unwrap(), edge.pos.unwrap());
        let me = edge_trace_mass(nf, mesh.sub_edge_length(edge));
        let (bn, bp) = (snaps[&neg].basis(), snaps[&pos].basis());
        let mut nn = Mat::zeros(bn.ncols(), bn.ncols());
        let mut np = Mat::zeros(bn.ncols(), bp.ncols());
        let mut pp = Mat::zeros(bp.ncols(), bp.ncols());
        for ord in 0..m {
            let alpha = data.ords.weight(ord);
            let tn = basis_trace(mesh, bn, ord, edge, true);
            let tp = basis_trace(mesh, bp, ord, edge, false);
            let me_tn = &me * &tn;
            let me_tp = &me * &tp;
            accumulate_scaled(&mut nn, &(tn.transpose() * &me_tn), alpha);
            accumulate_scaled(&mut np, &(tn.transpose() * &me_tp), alpha);
            accumulate_scaled(&mut pp, &(tp.transpose() * &me_tp), alpha);
        }
        edge_jumps.insert(edge_id, (nn, np, pp));
    }

    Ok(GramCache { a_vol, s_diag, edge_jumps })
}

fn accumulate_scaled(dst: &mut Mat<f64>, src: &Mat<f64>, scale: f64) {
    for i in 0..dst.nrows() {
        for j in 0..dst.ncols() {
            dst[(i, j)] += scale * src[(i, j)];
        }
    }
}

fn symmetrized(a: &Mat<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

/// Assemble the two oversampled-region Gram matrices (`a^j`-form and
/// `s^j`-form) over the concatenated snapshot bases of the region blocks.
pub(crate) fn region_grams(
    cache: &GramCache,
    mesh: &NestedMesh,
    region: &OversampleRegion,
) -> (Mat<f64>, Mat<f64>, Vec<usize>) {
    let dims: Vec<usize> = region.blocks.iter().map(|b| cache.a_vol[b].nrows()).collect();
    let mut offsets = Vec::with_capacity(dims.len());
    let mut total = 0;
    for &d in &dims {
        offsets.push(total);
        total += d;
    }
    let mut ea = Mat::zeros(total, total);
    let mut es = Mat::zeros(total, total);
    for (pos, &b) in region.blocks.iter().enumerate() {
        let o = offsets[pos];
        let av = &cache.a_vol[&b];
        let sd = &cache.s_diag[&b];
        for i in 0..av.nrows() {
            for j in 0..av.ncols() {
                ea[(o + i, o + j)] += av[(i, j)];
                es[(o + i, o + j)] += sd[(i, j)];
            }
        }
    }
    let inv_h = 1.0 / mesh.coarse_h();
    for edge_id in mesh.region_interior_edges(&region.blocks) {
        let edge = &mesh.coarse_edges()[edge_id];
        let (neg, pos) = (edge.neg.unwrap(), edge.pos.unwrap());
        let (npos, ppos) = (region.position(neg).unwrap(), region.position(pos).unwrap());
        let (no, po) = (offsets[npos], offsets[ppos]);
        let (nn, np, pp) = &cache.edge_jumps[&edge_id];
        for i in 0..nn.nrows() {
            for j in 0..nn.ncols() {
                ea[(no + i, no + j)] += inv_h * nn[(i, j)];
            }
        }
        for i in 0..pp.nrows() {
            for j in 0..pp.ncols() {
                ea[(po + i, po + j)] += inv_h * pp[(i, j)];
            }
        }
        for i in 0..np.nrows() {
            for j in 0..np.ncols() {
                ea[(no + i, po + j)] -= inv_h * np[(i, j)];
                ea[(po + j, no + i)] -= inv_h * np[(i, j)];
            }
        }
    }
    (ea, es, offsets)
}

/// Solve the constrained minimization for the center block of a region.
pub(crate) fn extend_from_grams(
    ea: &Mat<f64>,
    region: &OversampleRegion,
    offsets: &[usize],
    center_dim: usize,
) -> Result<ExtensionOperator> {
    ensure_sequential_kernels();
    let total = ea.nrows();
    let cpos = region.position(region.center).unwrap();
    let c0 = offsets[cpos];
    let c1 = c0 + center_dim;
    let free: Vec<usize> = (0..total).filter(|&i| i < c0 || i >= c1).collect();
    let nf = free.len();

    let mut coefficients = Mat::zeros(total, center_dim);
    for p in 0..center_dim {
        coefficients[(c0 + p, p)] = 1.0;
    }
    let mut kkt = 0.0;
    let mut ridge = 0.0;

    if nf > 0 {
        let eff = Mat::from_fn(nf, nf, |i, j| ea[(free[i], free[j])]);
        let efc = Mat::from_fn(nf, center_dim, |i, p| ea[(free[i], c0 + p)]);
        let tau = ridge_size(&eff);
        let llt = match eff.llt(faer::Side::Lower) {
            Ok(f) => f,
            Err(_) => {
                ridge = tau;
                let mut reg = eff.clone();
                for i in 0..nf {
                    reg[(i, i)] += tau;
                }
                reg.llt(faer::Side::Lower).map_err(|_| {
                    Error::numerical(format!(
                        "extension system singular for block {} even with ridge",
                        region.center
                    ))
                })?
            }
        };
        let xf = llt.solve(&efc);
        // stationarity: E_ff x + E_fc = 0 (with x = -solve(E_fc))
        let mut res = 0.0;
        let mut scale = 0.0;
        let check = &eff * &xf;
        for i in 0..nf {
            for p in 0..center_dim {
                res += (check[(i, p)] - efc[(i, p)]).powi(2);
                scale += efc[(i, p)].powi(2);
            }
        }
        kkt = if scale > 0.0 { (res / scale).sqrt() } else { res.sqrt() };
        for (fi, &row) in free.iter().enumerate() {
            for p in 0..center_dim {
                coefficients[(row, p)] = -xf[(fi, p)];
            }
        }
    }

    Ok(ExtensionOperator {
        block: region.center,
        region: region.clone(),
        offsets: offsets.to_vec(),
        coefficients,
        kkt_residual: kkt,
        ridge,
    })
}

/// Energy-minimizing extension of block `j`'s snapshots over its
/// oversampled region. `snapshots` must contain a space for every region
/// block (outside blocks are ignored).
pub fn energy_extend(
    snapshots: &[SnapshotSpace],
    mesh: &NestedMesh,
    ords: &OrdinateSet,
    media: &MediaSpec,
    epsilon: f64,
    block: usize,
    layers: usize,
) -> Result<ExtensionOperator> {
    let scatter = ScatteringMatrix::new(ords);
    let media_cells = sample_cell_values(mesh, media);
    let data = ProblemData::new(mesh, ords, &scatter, &media_cells, epsilon)?;
    let region = oversample(mesh, block, layers)?;
    let snaps = region_snapshot_map(snapshots, &region)?;
    let cache = build_gram_cache(&data, &snaps)?;
    let (ea, _es, offsets) = region_grams(&cache, mesh, &region);
    extend_from_grams(&ea, &region, &offsets, snaps[&block].dim())
}

fn region_snapshot_map<'a>(
    snapshots: &'a [SnapshotSpace],
    region: &OversampleRegion,
) -> Result<BTreeMap<usize, &'a SnapshotSpace>> {
    let mut map = BTreeMap::new();
    for &b in &region.blocks {
        let snap = snapshots
            .iter()
            .find(|s| s.block() == b)
            .ok_or_else(|| Error::invalid(format!("missing snapshot space for block {b}")))?;
        map.insert(b, snap);
    }
    Ok(map)
}

/// Pencil matrices on the extended fields: `A^j = X^T E_A X`, `S^j = X^T E_S X`.
pub(crate) fn pencil_from_grams(
    block: usize,
    ea: &Mat<f64>,
    es: &Mat<f64>,
    extension: &Mat<f64>,
) -> SpectralPencil {
    let a = extension.transpose() * (ea * extension);
    let s = extension.transpose() * (es * extension);
    SpectralPencil { block, a: symmetrized(&a), s: symmetrized(&s) }
}

/// Assemble the local spectral pencil for one block.
pub fn assemble_pencil(
    ext: &ExtensionOperator,
    snapshots: &[SnapshotSpace],
    mesh: &NestedMesh,
    ords: &OrdinateSet,
    media: &MediaSpec,
    epsilon: f64,
) -> Result<SpectralPencil> {
    let scatter = ScatteringMatrix::new(ords);
    let media_cells = sample_cell_values(mesh, media);
    let data = ProblemData::new(mesh, ords, &scatter, &media_cells, epsilon)?;
    let snaps = region_snapshot_map(snapshots, &ext.region)?;
    let cache = build_gram_cache(&data, &snaps)?;
    let (ea, es, _offsets) = region_grams(&cache, mesh, &ext.region);
    Ok(pencil_from_grams(ext.block, &ea, &es, &ext.coefficients))
}

/// Solve the pencil; eigenvalues ascending, eigenvectors S-orthonormal,
/// residuals checked against `1e-8 (|A| + lambda |S|)`.
pub fn solve_gep(pencil: &SpectralPencil) -> Result<BlockModes> {
    let sol = solve_spsd_gep(&pencil.a, &pencil.s)?;
    let n = pencil.a.nrows();
    let norm_a = frob(&pencil.a);
    let norm_s = frob(&pencil.s);
    for k in 0..n {
        let lambda = sol.values[k];
        let mut res = 0.0;
        for i in 0..n {
            let mut ac = 0.0;
            let mut sc = 0.0;
            for j in 0..n {
                ac += pencil.a[(i, j)] * sol.vectors[(j, k)];
                sc += (pencil.s[(i, j)] + if i == j { sol.ridge } else { 0.0 })
                    * sol.vectors[(j, k)];
            }
            res += (ac - lambda * sc).powi(2);
        }
        let tol = 1e-8 * (norm_a + lambda.abs() * (norm_s + sol.ridge));
        if res.sqrt() > tol.max(1e-300) {
            return Err(Error::numerical(format!(
                "eigen residual {:.3e} above tolerance for mode {k} of block {}",
                res.sqrt(),
                pencil.block
            )));
        }
    }
    Ok(BlockModes {
        block: pencil.block,
        eigenvalues: sol.values,
        eigenvectors: sol.vectors,
        ridge: sol.ridge,
    })
}

fn frob(a: &Mat<f64>) -> f64 {
    let mut s = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            s += a[(i, j)] * a[(i, j)];
        }
    }
    s.sqrt()
}

/// Keep the first `L_j` modes per block and record the spectral gap.
pub fn select_space(modes: &[BlockModes], count: &ModeCount) -> Result<MultiscaleSpace> {
    let counts: Vec<usize> = match count {
        ModeCount::Uniform(l) => vec![*l; modes.len()],
        ModeCount::Full => modes.iter().map(|m| m.eigenvalues.len()).collect(),
        ModeCount::PerBlock(v) => {
            if v.len() != modes.len() {
                return Err(Error::invalid("per-block mode counts have wrong length"));
            }
            v.clone()
        }
    };
    let mut lambda_star = f64::INFINITY;
    let mut selections = Vec::with_capacity(modes.len());
    for (mode, &l) in modes.iter().zip(&counts) {
        let d = mode.eigenvalues.len();
        if l == 0 || l > d {
            return Err(Error::invalid(format!(
                "mode count {l} out of range for block {} (dim {d})",
                mode.block
            )));
        }
        if l < d {
            lambda_star = lambda_star.min(mode.eigenvalues[l]);
        }
        selections.push(BlockSelection {
            block: mode.block,
            count: l,
            eigenvalues: mode.eigenvalues.clone(),
            coefficients: Mat::from_fn(d, l, |i, j| mode.eigenvectors[(i, j)]),
        });
    }
    Ok(MultiscaleSpace { selections, lambda_star })
}

/// Full offline build: snapshot spaces, extensions, pencils and eigenpairs
/// for every coarse block, parallel over blocks.
pub struct OfflineBuild {
    pub snapshots: Vec<SnapshotSpace>,
    pub modes: Vec<BlockModes>,
}

pub fn build_offline(
    mesh: &NestedMesh,
    ords: &OrdinateSet,
    media: &MediaSpec,
    epsilon: f64,
    method: &SnapshotMethod,
    layers: usize,
) -> Result<OfflineBuild> {
    let scatter = ScatteringMatrix::new(ords);
    let media_cells = sample_cell_values(mesh, media);
    let data = ProblemData::new(mesh, ords, &scatter, &media_cells, epsilon)?;
    let nb = mesh.n_blocks();

    let snapshots: Vec<SnapshotSpace> = (0..nb)
        .into_par_iter()
        .map(|b| method.build(&data, b, layers))
        .collect::<Result<Vec<_>>>()?;

    let snap_map: BTreeMap<usize, &SnapshotSpace> =
        snapshots.iter().map(|s| (s.block(), s)).collect();
    let cache = build_gram_cache(&data, &snap_map)?;

    let modes: Vec<BlockModes> = (0..nb)
        .into_par_iter()
        .map(|b| {
            let region = oversample(mesh, b, layers)?;
            let (ea, es, offsets) = region_grams(&cache, mesh, &region);
            let ext = extend_from_grams(&ea, &region, &offsets, snap_map[&b].dim())?;
            let pencil = pencil_from_grams(b, &ea, &es, &ext.coefficients);
            solve_gep(&pencil)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(OfflineBuild { snapshots, modes })
}

/// Overlap constant `M` of the oversampled covering: the larger of the
/// block multiplicity (regions containing a block) and the edge
/// multiplicity (regions whose interior edges contain an edge).
pub fn overlap_constant(mesh: &NestedMesh, layers: usize) -> usize {
    let nb = mesh.n_blocks();
    let mut block_count = vec![0usize; nb];
    let mut edge_count: BTreeMap<usize, usize> = BTreeMap::new();
    for j in 0..nb {
        let region = oversample(mesh, j, layers).expect("valid block");
        for &b in &region.blocks {
            block_count[b] += 1;
        }
        for e in mesh.region_interior_edges(&region.blocks) {
            *edge_count.entry(e).or_insert(0) += 1;
        }
    }
    let mk = block_count.into_iter().max().unwrap_or(0);
    let me = edge_count.into_values().max().unwrap_or(0);
    mk.max(me)
}

/// Eigenvalue table of one block's pencil across a descending epsilon list.
pub struct EpsLimitStudy {
    pub block: usize,
    pub epsilons: Vec<f64>,
    /// Ascending eigenvalues per epsilon.
    pub eigenvalues: Vec<Vec<f64>>,
    /// Isotropy defect of the first mode per epsilon:
    /// `sum_i alpha_i ||phi_i - phibar||^2 / ||phibar||^2` on the block.
    pub mode1_isotropy: Vec<f64>,
}

impl EpsLimitStudy {
    /// `|lambda_k(eps_i) - lambda_k(eps_{i+1})|` per mode index, per step.
    pub fn successive_differences(&self, mode: usize) -> Vec<f64> {
        (0..self.epsilons.len() - 1)
            .map(|i| (self.eigenvalues[i][mode] - self.eigenvalues[i + 1][mode]).abs())
            .collect()
    }
}

/// Recompute snapshots, extension, pencil and spectrum of one block for
/// each epsilon in a descending list.
pub fn eps_limit_study(
    mesh: &NestedMesh,
    ords: &OrdinateSet,
    media: &MediaSpec,
    method: &SnapshotMethod,
    layers: usize,
    block: usize,
    epsilons: &[f64],
) -> Result<EpsLimitStudy> {
    if epsilons.len() < 2 {
        return Err(Error::invalid("need at least two epsilon values"));
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::invalid("epsilon list must be strictly descending"));
    }
    let scatter = ScatteringMatrix::new(ords);
    let media_cells = sample_cell_values(mesh, media);
    let region = oversample(mesh, block, layers)?;

    let mut eigenvalues = Vec::with_capacity(epsilons.len());
    let mut isotropy = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let data = ProblemData::new(mesh, ords, &scatter, &media_cells, eps)?;
        let snaps: Vec<SnapshotSpace> = region
            .blocks
            .par_iter()
            .map(|&b| method.build(&data, b, layers))
            .collect::<Result<Vec<_>>>()?;
        let snap_map: BTreeMap<usize, &SnapshotSpace> =
            snaps.iter().map(|s| (s.block(), s)).collect();
        let cache = build_gram_cache(&data, &snap_map)?;
        let (ea, es, offsets) = region_grams(&cache, mesh, &region);
        let ext = extend_from_grams(&ea, &region, &offsets, snap_map[&block].dim())?;
        let pencil = pencil_from_grams(block, &ea, &es, &ext.coefficients);
        let modes = solve_gep(&pencil)?;

        // isotropy of the first mode on the center block
        let center = snap_map[&block];
        let c1: Vec<f64> = (0..center.dim()).map(|i| modes.eigenvectors[(i, 0)]).collect();
        let field = center.combine(mesh, &c1);
        isotropy.push(isotropy_defect(&field, mesh, ords));
        eigenvalues.push(modes.eigenvalues);
    }
    Ok(EpsLimitStudy { block, epsilons: epsilons.to_vec(), eigenvalues, mode1_isotropy: isotropy })
}

/// `sum_i alpha_i ||phi_i - phibar||_L2^2 / ||phibar||_L2^2` on the field's region.
pub fn isotropy_defect(field: &crate::field::KineticField, mesh: &NestedMesh, ords: &OrdinateSet) -> f64 {
    let m = ords.len();
    let nf = mesh.fine_per_block();
    let p = mesh.nodes_per_block();
    let cm = CellMatrices::new(mesh.fine_hx(), mesh.fine_hy());
    let avg = field.angular_average(ords);
    let mut num = 0.0;
    let mut den = 0.0;
    for bpos in 0..field.blocks().len() {
        for cy in 0..nf {
            for cx in 0..nf {
                let nodes = cell_nodes(nf, cx, cy);
                for (k, &nk) in nodes.iter().enumerate() {
                    for (l, &nl) in nodes.iter().enumerate() {
                        let mkl = cm.mass[k][l];
                        den += mkl * avg[bpos * p + nk] * avg[bpos * p + nl];
                        for ord in 0..m {
                            let dk = field.get(ord, bpos, nk) - avg[bpos * p + nk];
                            let dl = field.get(ord, bpos, nl) - avg[bpos * p + nl];
                            num += ords.weight(ord) * mkl * dk * dl;
                        }
                    }
                }
            }
        }
    }
    if den <= 0.0 {
        return f64::INFINITY;
    }
    num.max(0.0) / den
}

/// Eigen-decomposition diagnostics used by tests: spectra of `A` and `S`.
pub fn pencil_spectra(pencil: &SpectralPencil) -> Result<(Vec<f64>, Vec<f64>)> {
    let (ea, _) = sym_eigen_ascending(&pencil.a)?;
    let (es, _) = sym_eigen_ascending(&pencil.s)?;
    Ok((ea, es))
}
