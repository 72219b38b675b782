//! Online stage: coarse Galerkin system in the multiscale space.

use faer::prelude::Solve;
use faer::Mat;

use crate::assemble::ProblemData;
use crate::error::{Error, Result};
use crate::field::KineticField;
use crate::galerkin::{assemble_reduced, reconstruct_field};
use crate::inflow::BoundaryData;
use crate::linalg::{condition_number, ensure_sequential_kernels};
use crate::media::{sample_cell_values, MediaSpec};
use crate::mesh::NestedMesh;
use crate::offline::MultiscaleSpace;
use crate::ordinates::{OrdinateSet, ScatteringMatrix};
use crate::snapshot::SnapshotSpace;

/// Dense coarse system over the global multiscale basis.
pub struct CoarseSystem {
    m: usize,
    offsets: Vec<usize>,
    bases: Vec<Mat<f64>>,
    /// Transport form matrix `A_pq = a(phi_q, phi_p)`.
    pub a: Mat<f64>,
    /// Collision/absorption form matrix `L_pq = l(phi_q, phi_p)`.
    pub l: Mat<f64>,
    /// Load vector `b_p = F(phi_p)`.
    pub b: Vec<f64>,
}

impl CoarseSystem {
    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// Column offset of each block's modes in the coefficient vector.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// 2-norm condition number of `A + L`.
    pub fn condition(&self) -> Result<f64> {
        condition_number(&(&self.a + &self.l))
    }
}

/// Assemble `A`, `L` and `b` for the selected multiscale space.
pub fn assemble_coarse(
    space: &MultiscaleSpace,
    snapshots: &[SnapshotSpace],
    mesh: &NestedMesh,
    ords: &OrdinateSet,
    media: &MediaSpec,
    epsilon: f64,
    g: &BoundaryData,
) -> Result<CoarseSystem> {
    let scatter = ScatteringMatrix::new(ords);
    let media_cells = sample_cell_values(mesh, media);
    let data = ProblemData::new(mesh, ords, &scatter, &media_cells, epsilon)?;
    let bases = space.mode_bases(snapshots)?;
    let red = assemble_reduced(&data, &bases, g)?;
    let (a, l) = red.dense_parts();
    Ok(CoarseSystem { m: ords.len(), offsets: red.offsets, bases, a, l, b: red.rhs })
}

/// Solve `(A + L) U = b` and reconstruct the multiscale solution on the
/// fine grid. The relative residual must stay below 1e-12.
pub fn solve_online(sys: &CoarseSystem, mesh: &NestedMesh) -> Result<(Vec<f64>, KineticField)> {
    ensure_sequential_kernels();
    let n = sys.dim();
    let full = &sys.a + &sys.l;
    let lu = full.partial_piv_lu();
    let rhs = Mat::from_fn(n, 1, |i, _| sys.b[i]);
    let x = lu.solve(&rhs);
    let coeffs: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();

    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        let mut ax = 0.0;
        for j in 0..n {
            ax += full[(i, j)] * coeffs[j];
        }
        num += (ax - sys.b[i]).powi(2);
        den += sys.b[i].powi(2);
    }
    let rel = if den > 0.0 { (num / den).sqrt() } else { num.sqrt() };
    if !(rel < 1e-12) && den > 0.0 {
        return Err(Error::numerical(format!(
            "online solve residual {rel:.3e} above tolerance (basis degeneracy upstream?)"
        )));
    }

    let field = reconstruct_field(mesh, sys.m, &sys.bases, &sys.offsets, &coeffs);
    Ok((coeffs, field))
}
