//! Heterogeneous media coefficient `a(x)` evaluated on the fine grid.
//!
//! Two variants: the closed-form oscillatory coefficient and a piecewise
//! constant high-contrast field `kappa(x)^p` built from axis-aligned
//! rectangular inclusions that span whole fine cells. The collision term
//! samples the media once per fine cell at the cell center, so piecewise
//! constant inclusions are represented exactly.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::NestedMesh;

/// Axis-aligned rectangle in physical coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// Media coefficient specification.
#[derive(Debug, Clone, PartialEq)]
pub enum MediaSpec {
    /// `a(x) = (2 + 1.8 sin(10 pi x1)) / (2 + 1.8 cos(10 pi x2))
    ///        + (2 + sin(10 pi x2)) / (2 + 1.8 sin(10 pi x1))`.
    Oscillatory,
    /// `a(x) = kappa(x)^power` with `kappa` piecewise constant: `contrast`
    /// inside the inclusions, `background` outside.
    Contrast {
        inclusions: Vec<Rect>,
        background: f64,
        contrast: f64,
        power: u32,
    },
}

/// Evaluate the media coefficient at a point of the unit square.
pub fn eval_media(spec: &MediaSpec, x: f64, y: f64) -> f64 {
    match spec {
        MediaSpec::Oscillatory => {
            let s1 = (10.0 * std::f64::consts::PI * x).sin();
            let c2 = (10.0 * std::f64::consts::PI * y).cos();
            let s2 = (10.0 * std::f64::consts::PI * y).sin();
            (2.0 + 1.8 * s1) / (2.0 + 1.8 * c2) + (2.0 + s2) / (2.0 + 1.8 * s1)
        }
        MediaSpec::Contrast { inclusions, background, contrast, power } => {
            let kappa = if inclusions.iter().any(|r| r.contains(x, y)) {
                *contrast
            } else {
                *background
            };
            kappa.powi(*power as i32)
        }
    }
}

impl MediaSpec {
    /// Same geometry with a different exponent (contrast variant only).
    pub fn with_power(&self, power: u32) -> MediaSpec {
        match self {
            MediaSpec::Oscillatory => MediaSpec::Oscillatory,
            MediaSpec::Contrast { inclusions, background, contrast, .. } => MediaSpec::Contrast {
                inclusions: inclusions.clone(),
                background: *background,
                contrast: *contrast,
                power,
            },
        }
    }
}

/// Media values at fine-cell centers, indexed `block * cells_per_block +
/// cell` in mesh order. This is the only media sampling the assembly uses.
pub fn sample_cell_values(mesh: &NestedMesh, spec: &MediaSpec) -> Vec<f64> {
    let nf = mesh.fine_per_block();
    let (hx, hy) = (mesh.fine_hx(), mesh.fine_hy());
    let mut values = Vec::with_capacity(mesh.n_fine_cells());
    for block in 0..mesh.n_blocks() {
        let (x0, y0) = mesh.block_origin(block);
        for cy in 0..nf {
            for cx in 0..nf {
                let x = x0 + (cx as f64 + 0.5) * hx;
                let y = y0 + (cy as f64 + 0.5) * hy;
                values.push(eval_media(spec, x, y));
            }
        }
    }
    values
}

/// Deterministic surrogate high-contrast field: a horizontal channel that
/// crosses several coarse blocks plus scattered rectangular inclusions, all
/// aligned to fine cells, non-overlapping, with total coverage between
/// roughly 10% and 20% of the domain.
pub fn default_contrast_field(mesh: &NestedMesh, contrast: f64, seed: u64) -> Result<MediaSpec> {
    if !(contrast >= 1.0) {
        return Err(Error::invalid(format!("contrast must be >= 1, got {contrast}")));
    }
    let (nc_x, nc_y) = mesh.coarse_counts();
    let nf = mesh.fine_per_block();
    let (nx, ny) = (nc_x * nf, nc_y * nf);
    let (hx, hy) = (mesh.fine_hx(), mesh.fine_hy());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut occupied = vec![false; nx * ny];
    let mut inclusions = Vec::new();

    let try_place = |occupied: &mut Vec<bool>,
                         inclusions: &mut Vec<Rect>,
                         cx0: usize,
                         cy0: usize,
                         w: usize,
                         h: usize|
     -> bool {
        if cx0 + w > nx || cy0 + h > ny {
            return false;
        }
        for cy in cy0..cy0 + h {
            for cx in cx0..cx0 + w {
                if occupied[cy * nx + cx] {
                    return false;
                }
            }
        }
        for cy in cy0..cy0 + h {
            for cx in cx0..cx0 + w {
                occupied[cy * nx + cx] = true;
            }
        }
        inclusions.push(Rect {
            x0: cx0 as f64 * hx,
            x1: (cx0 + w) as f64 * hx,
            y0: cy0 as f64 * hy,
            y1: (cy0 + h) as f64 * hy,
        });
        true
    };

    // Channel spanning most of the width, at a seeded height.
    let ch_h = (ny / 50).max(1);
    let ch_y = rng.random_range(ny / 5..(4 * ny) / 5);
    let ch_w = nx - 2 * (nx / 10).max(1);
    let ch_x = (nx - ch_w) / 2;
    try_place(&mut occupied, &mut inclusions, ch_x, ch_y, ch_w, ch_h);

    // Scattered inclusions until the target coverage band is reached.
    let total = (nx * ny) as f64;
    let target = 0.15;
    let mut attempts = 0;
    while attempts < 10_000 {
        let covered = occupied.iter().filter(|&&o| o).count() as f64 / total;
        if covered >= target {
            break;
        }
        attempts += 1;
        let w = rng.random_range(1..=(nf / 2).max(1) + 1);
        let h = rng.random_range(1..=(nf / 2).max(1) + 1);
        let cx0 = rng.random_range(0..nx);
        let cy0 = rng.random_range(0..ny);
        try_place(&mut occupied, &mut inclusions, cx0, cy0, w, h);
    }

    Ok(MediaSpec::Contrast { inclusions, background: 1.0, contrast, power: 4 })
}
