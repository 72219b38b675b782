//! Per-block snapshot spaces from local transport solves.
//!
//! `det_local` solves the block-local problem once per (ordinate, upwind
//! node) pair with a nodal delta as inflow data. `ran_local` solves on the
//! oversampled region with i.i.d. Gaussian inflow data streams keyed by
//! (seed, block, ordinate, sample), restricts to the center block, and
//! drops numerically dependent columns. Both impose inflow data strongly at
//! the upwind nodes of each ordinate and leave outflow free.

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::assemble::{sdof, ProblemData, RegionOperator};
use crate::error::{Error, Result};
use crate::field::KineticField;
use crate::galerkin::{assemble_reduced, reconstruct_field};
use crate::inflow::BoundaryData;
use crate::media::{sample_cell_values, MediaSpec};
use crate::mesh::{oversample, NestedMesh};
use crate::ordinates::{OrdinateSet, ScatteringMatrix};

/// How a snapshot space was produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    Det,
    Ran { k: usize, seed: u64 },
}

/// Randomized snapshot fields on the oversampled region, before restriction.
#[derive(Debug, Clone)]
pub struct ExtendedFields {
    /// Region blocks, ascending.
    pub region: Vec<usize>,
    /// One column per snapshot, rows in field layout over the region.
    pub fields: Mat<f64>,
}

/// Snapshot basis of one coarse block.
#[derive(Debug, Clone)]
pub struct SnapshotSpace {
    block: usize,
    m: usize,
    nodes_per_block: usize,
    /// `(m * nodes_per_block) x dim` nodal basis, ordinate-major rows.
    basis: Mat<f64>,
    provenance: Provenance,
    extended: Option<ExtendedFields>,
}

impl SnapshotSpace {
    /// Rebuild a space from stored parts (cache loading).
    pub(crate) fn from_parts(
        block: usize,
        m: usize,
        nodes_per_block: usize,
        basis: Mat<f64>,
        provenance: Provenance,
    ) -> Self {
        SnapshotSpace { block, m, nodes_per_block, basis, provenance, extended: None }
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn basis(&self) -> &Mat<f64> {
        &self.basis
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn extended(&self) -> Option<&ExtendedFields> {
        self.extended.as_ref()
    }

    /// One snapshot as a field on its block.
    pub fn snapshot_field(&self, mesh: &NestedMesh, p: usize) -> KineticField {
        let mut field = KineticField::zeros(mesh, self.m, &[self.block]);
        for ord in 0..self.m {
            for node in 0..self.nodes_per_block {
                field.set(ord, 0, node, self.basis[(ord * self.nodes_per_block + node, p)]);
            }
        }
        field
    }

    /// Field on the block from coefficients in this snapshot basis.
    pub fn combine(&self, mesh: &NestedMesh, coeffs: &[f64]) -> KineticField {
        assert_eq!(coeffs.len(), self.dim());
        let mut field = KineticField::zeros(mesh, self.m, &[self.block]);
        for ord in 0..self.m {
            for node in 0..self.nodes_per_block {
                let row = ord * self.nodes_per_block + node;
                let mut v = 0.0;
                for (p, &c) in coeffs.iter().enumerate() {
                    v += c * self.basis[(row, p)];
                }
                field.set(ord, 0, node, v);
            }
        }
        field
    }
}

/// Gaussian data stream keyed by (seed, block, ordinate, sample); values
/// are drawn in sorted grid-node order, independent of thread schedule.
pub(crate) fn gaussian_stream(seed: u64, block: u64, ord: u64, sample: u64, count: usize) -> Vec<f64> {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&block.to_le_bytes());
    key[16..24].copy_from_slice(&ord.to_le_bytes());
    key[24..32].copy_from_slice(&sample.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    (0..count).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Pinned-dof bookkeeping for one ordinate of a region operator: unique
/// grid nodes in sorted order, each with the pinned rows that carry it.
fn pinned_by_ordinate(op: &RegionOperator, m: usize) -> Vec<Vec<((usize, usize), Vec<usize>)>> {
    let mut per_ord: Vec<std::collections::BTreeMap<(usize, usize), Vec<usize>>> =
        vec![Default::default(); m];
    for (idx, pd) in op.pinned.iter().enumerate() {
        per_ord[pd.ord].entry(pd.grid).or_default().push(idx);
    }
    per_ord.into_iter().map(|map| map.into_iter().collect()).collect()
}

fn basis_from_solutions(
    mesh: &NestedMesh,
    m: usize,
    region: &[usize],
    center: usize,
    solutions: &Mat<f64>,
) -> Mat<f64> {
    let p = mesh.nodes_per_block();
    let cpos = region.binary_search(&center).expect("center in region");
    Mat::from_fn(m * p, solutions.ncols(), |row, col| {
        let (ord, node) = (row / p, row % p);
        solutions[(sdof(m, p, cpos, node, ord), col)]
    })
}

fn extended_from_solutions(m: usize, p: usize, region: &[usize], solutions: &Mat<f64>) -> Mat<f64> {
    let nb = region.len();
    Mat::from_fn(m * nb * p, solutions.ncols(), |row, col| {
        let node = row % p;
        let bpos = (row / p) % nb;
        let ord = row / (p * nb);
        solutions[(sdof(m, p, bpos, node, ord), col)]
    })
}

/// Deterministic snapshot space: one local solve per (ordinate n, upwind
/// node of ordinate n), with the nodal indicator as inflow data.
pub fn det_local(
    mesh: &NestedMesh,
    ords: &OrdinateSet,
    media: &MediaSpec,
    epsilon: f64,
    block: usize,
) -> Result<SnapshotSpace> {
    let scatter = ScatteringMatrix::new(ords);
    let media_cells = sample_cell_values(mesh, media);
    let data = ProblemData::new(mesh, ords, &scatter, &media_cells, epsilon)?;
    det_local_ctx(&data, block)
}

pub(crate) fn det_local_ctx(data: &ProblemData, block: usize) -> Result<SnapshotSpace> {
    let mesh = data.mesh;
    if block >= mesh.n_blocks() {
        return Err(Error::invalid(format!("block id {block} out of range")));
    }
    let m = data.m();
    let op = RegionOperator::new(data, &[block])?;
    let per_ord = pinned_by_ordinate(&op, m);
    let dim: usize = per_ord.iter().map(|v| v.len()).sum();
    let mut boundary = Mat::zeros(op.n_pinned(), dim);
    let mut col = 0;
    for slots in per_ord.iter() {
        for (_, rows) in slots {
            for &r in rows {
                boundary[(r, col)] = 1.0;
            }
            col += 1;
        }
    }
    let solutions = op.solve_many(&boundary);
    let basis = basis_from_solutions(mesh, m, &[block], block, &solutions);
    Ok(SnapshotSpace {
        block,
        m,
        nodes_per_block: mesh.nodes_per_block(),
        basis,
        provenance: Provenance::Det,
        extended: None,
    })
}

/// Randomized oversampled snapshot space: `k` Gaussian inflow samples per
/// ordinate on the region boundary, restricted to the center block.
/// Numerically dependent restrictions are dropped (relative singular value
/// below 1e-10).
pub fn ran_local(
    mesh: &NestedMesh,
    ords: &OrdinateSet,
    media: &MediaSpec,
    epsilon: f64,
    block: usize,
    k: usize,
    seed: u64,
    layers: usize,
) -> Result<SnapshotSpace> {
    let scatter = ScatteringMatrix::new(ords);
    let media_cells = sample_cell_values(mesh, media);
    let data = ProblemData::new(mesh, ords, &scatter, &media_cells, epsilon)?;
    ran_local_ctx(&data, block, k, seed, layers, true)
}

pub(crate) fn ran_local_ctx(
    data: &ProblemData,
    block: usize,
    k: usize,
    seed: u64,
    layers: usize,
    keep_extended: bool,
) -> Result<SnapshotSpace> {
    if k == 0 {
        return Err(Error::invalid("need at least one randomized sample per ordinate"));
    }
    let mesh = data.mesh;
    let m = data.m();
    let region = oversample(mesh, block, layers)?;
    let op = RegionOperator::new(data, &region.blocks)?;
    let per_ord = pinned_by_ordinate(&op, m);
    let dim = m * k;
    let mut boundary = Mat::zeros(op.n_pinned(), dim);
    for n in 0..m {
        let slots = &per_ord[n];
        for l in 0..k {
            let col = n * k + l;
            let values = gaussian_stream(seed, block as u64, n as u64, l as u64, slots.len());
            for ((_, rows), &v) in slots.iter().zip(values.iter()) {
                for &r in rows {
                    boundary[(r, col)] = v;
                }
            }
        }
    }
    let solutions = op.solve_many(&boundary);
    let basis = basis_from_solutions(mesh, m, &region.blocks, block, &solutions);
    let basis = filter_dependent_columns(basis)?;
    let extended = keep_extended.then(|| ExtendedFields {
        region: region.blocks.clone(),
        fields: extended_from_solutions(m, mesh.nodes_per_block(), &region.blocks, &solutions),
    });
    Ok(SnapshotSpace {
        block,
        m,
        nodes_per_block: mesh.nodes_per_block(),
        basis,
        provenance: Provenance::Ran { k, seed },
        extended,
    })
}

/// Randomized variant with caller-supplied boundary data per (ordinate,
/// sample, sorted grid slot); used to cross-check against `det_local`.
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) fn ran_local_with_data(
    data: &ProblemData,
    block: usize,
    k: usize,
    layers: usize,
    mut value_at: impl FnMut(usize, usize, usize, (usize, usize)) -> f64,
) -> Result<SnapshotSpace> {
    let mesh = data.mesh;
    let m = data.m();
    let region = oversample(mesh, block, layers)?;
    let op = RegionOperator::new(data, &region.blocks)?;
    let per_ord = pinned_by_ordinate(&op, m);
    let mut boundary = Mat::zeros(op.n_pinned(), m * k);
    for n in 0..m {
        for l in 0..k {
            let col = n * k + l;
            for (slot, (grid, rows)) in per_ord[n].iter().enumerate() {
                let v = value_at(n, l, slot, *grid);
                for &r in rows {
                    boundary[(r, col)] = v;
                }
            }
        }
    }
    let solutions = op.solve_many(&boundary);
    let basis = basis_from_solutions(mesh, m, &region.blocks, block, &solutions);
    Ok(SnapshotSpace {
        block,
        m,
        nodes_per_block: mesh.nodes_per_block(),
        basis,
        provenance: Provenance::Ran { k, seed: 0 },
        extended: None,
    })
}

/// Orthogonalize the restricted snapshots, dropping directions whose
/// singular value falls below `1e-10` of the largest. Restriction to the
/// center block is strongly smoothing, so the raw columns can carry
/// condition numbers far beyond what the downstream Gram matrices
/// tolerate; the returned orthonormal basis spans the same fields.
fn filter_dependent_columns(basis: Mat<f64>) -> Result<Mat<f64>> {
    let d = basis.ncols();
    if d == 0 {
        return Ok(basis);
    }
    crate::linalg::ensure_sequential_kernels();
    let svd = basis
        .thin_svd()
        .map_err(|e| Error::numerical(format!("snapshot orthogonalization failed: {e:?}")))?;
    let k = basis.nrows().min(d);
    let smax = svd.S()[0];
    if smax == 0.0 {
        return Err(Error::numerical("randomized snapshots are identically zero"));
    }
    let rank = (0..k).filter(|&i| svd.S()[i] >= 1e-10 * smax).count();
    let u = svd.U();
    Ok(Mat::from_fn(basis.nrows(), rank, |i, j| u[(i, j)]))
}

/// Residual of the local solve equations for every snapshot in the space
/// (max over snapshots, relative two-norm). Rebuilds the local operator.
pub fn local_residual(
    space: &SnapshotSpace,
    mesh: &NestedMesh,
    ords: &OrdinateSet,
    media: &MediaSpec,
    epsilon: f64,
) -> Result<f64> {
    let scatter = ScatteringMatrix::new(ords);
    let media_cells = sample_cell_values(mesh, media);
    let data = ProblemData::new(mesh, ords, &scatter, &media_cells, epsilon)?;
    let op = RegionOperator::new(&data, &[space.block])?;
    let m = space.m;
    let p = space.nodes_per_block;
    let mut worst = 0.0_f64;
    for col in 0..space.dim() {
        let mut full = vec![0.0; op.n_sdofs];
        for ord in 0..m {
            for node in 0..p {
                full[sdof(m, p, 0, node, ord)] = space.basis[(ord * p + node, col)];
            }
        }
        worst = worst.max(op.free_residual(&full));
    }
    Ok(worst)
}


/// Galerkin solution in the global snapshot space.
pub fn solve_snapshot(
    spaces: &[SnapshotSpace],
    mesh: &NestedMesh,
    ords: &OrdinateSet,
    media: &MediaSpec,
    epsilon: f64,
    g: &BoundaryData,
) -> Result<KineticField> {
    let nb = mesh.n_blocks();
    if spaces.len() != nb {
        return Err(Error::invalid("need one snapshot space per coarse block"));
    }
    let mut bases: Vec<Mat<f64>> = Vec::with_capacity(nb);
    for (b, space) in spaces.iter().enumerate() {
        if space.block != b {
            return Err(Error::invalid("snapshot spaces must be ordered by block id"));
        }
        if space.dim() == 0 {
            return Err(Error::invalid(format!("snapshot space of block {b} is empty")));
        }
        bases.push(space.basis.clone());
    }
    let scatter = ScatteringMatrix::new(ords);
    let media_cells = sample_cell_values(mesh, media);
    let data = ProblemData::new(mesh, ords, &scatter, &media_cells, epsilon)?;
    let red = assemble_reduced(&data, &bases, g)?;
    let coeffs = red.solve()?;
    Ok(reconstruct_field(mesh, ords.len(), &bases, &red.offsets, &coeffs))
}
