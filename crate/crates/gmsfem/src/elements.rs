//! Local Q1 element matrices on axis-aligned rectangular cells.
//!
//! Local node numbering on a cell `[0,hx] x [0,hy]` is row-major from the
//! lower-left corner: `n = 2*dy + dx` for corner `(dx, dy)`, i.e.
//! `0 -> (0,0)`, `1 -> (hx,0)`, `2 -> (0,hy)`, `3 -> (hx,hy)`.
//!
//! All entries are closed-form integrals of bilinear shape functions, exact
//! for the polynomial degrees that appear in the weak form (equivalent to
//! 2x2 Gauss volume quadrature and 2-point Gauss edge quadrature).

/// Gauss-Legendre 2-point rule on [0,1]: (points, weights).
pub const GAUSS2: ([f64; 2], [f64; 2]) = (
    [
        0.5 - 0.288_675_134_594_812_87, // 0.5 - 1/(2*sqrt(3))
        0.5 + 0.288_675_134_594_812_87,
    ],
    [0.5, 0.5],
);

/// Element matrices for one rectangular Q1 cell.
#[derive(Debug, Clone)]
pub struct CellMatrices {
    /// Mass: `mass[k][l] = int N_k N_l`.
    pub mass: [[f64; 4]; 4],
    /// x-convection: `cx[k][l] = int N_l d/dx N_k`.
    pub cx: [[f64; 4]; 4],
    /// y-convection: `cy[k][l] = int N_l d/dy N_k`.
    pub cy: [[f64; 4]; 4],
    /// Stiffness: `stiff[k][l] = int grad N_k . grad N_l`.
    pub stiff: [[f64; 4]; 4],
}

impl CellMatrices {
    pub fn new(hx: f64, hy: f64) -> Self {
        // 1d pieces on [0,h]: hat0 = 1 - t/h, hat1 = t/h.
        let m1 = |h: f64| [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]];
        // c1[a][b] = int hat_b * hat_a' dt
        let c1 = [[-0.5, -0.5], [0.5, 0.5]];
        let k1 = |h: f64| [[1.0 / h, -1.0 / h], [-1.0 / h, 1.0 / h]];

        let (mx, my) = (m1(hx), m1(hy));
        let (kx, ky) = (k1(hx), k1(hy));

        let mut mass = [[0.0; 4]; 4];
        let mut cx = [[0.0; 4]; 4];
        let mut cy = [[0.0; 4]; 4];
        let mut stiff = [[0.0; 4]; 4];
        for k in 0..4 {
            let (kxd, kyd) = (k % 2, k / 2);
            for l in 0..4 {
                let (lxd, lyd) = (l % 2, l / 2);
                mass[k][l] = mx[kxd][lxd] * my[kyd][lyd];
                cx[k][l] = c1[kxd][lxd] * my[kyd][lyd];
                cy[k][l] = mx[kxd][lxd] * c1[kyd][lyd];
                stiff[k][l] = kx[kxd][lxd] * my[kyd][lyd] + mx[kxd][lxd] * ky[kyd][lyd];
            }
        }
        CellMatrices { mass, cx, cy, stiff }
    }
}

/// 1d P1 mass matrix on a sub-edge of length `h`: `me[a][b] = int p_a p_b`.
pub fn edge_mass(h: f64) -> [[f64; 2]; 2] {
    [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]]
}

/// Shape function values of the two P1 edge hats at the 2-point Gauss nodes
/// of a sub-edge, paired with quadrature weights scaled by `h`.
///
/// Returns `(shape[q][a], weight[q])` with `q` the quadrature index.
pub fn edge_gauss(h: f64) -> ([[f64; 2]; 2], [f64; 2]) {
    let (pts, wts) = GAUSS2;
    let mut shape = [[0.0; 2]; 2];
    let mut w = [0.0; 2];
    for q in 0..2 {
        shape[q][0] = 1.0 - pts[q];
        shape[q][1] = pts[q];
        w[q] = wts[q] * h;
    }
    (shape, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent oracle: dense Gauss-Legendre quadrature of the shape
    // function products, written directly from the definitions.
    fn oracle(hx: f64, hy: f64) -> CellMatrices {
        let n = |k: usize, x: f64, y: f64| -> f64 {
            let xi = x / hx;
            let eta = y / hy;
            let fx = if k % 2 == 0 { 1.0 - xi } else { xi };
            let fy = if k / 2 == 0 { 1.0 - eta } else { eta };
            fx * fy
        };
        let dnx = |k: usize, _x: f64, y: f64| -> f64 {
            let eta = y / hy;
            let fy = if k / 2 == 0 { 1.0 - eta } else { eta };
            (if k % 2 == 0 { -1.0 } else { 1.0 }) / hx * fy
        };
        let dny = |k: usize, x: f64, _y: f64| -> f64 {
            let xi = x / hx;
            let fx = if k % 2 == 0 { 1.0 - xi } else { xi };
            (if k / 2 == 0 { -1.0 } else { 1.0 }) / hy * fx
        };
        // 4-point Gauss per axis; well beyond the exactness we need.
        let gp = [
            0.069431844202973714,
            0.33000947820757187,
            0.66999052179242813,
            0.93056815579702623,
        ];
        let gw = [
            0.17392742256872693,
            0.32607257743127305,
            0.32607257743127305,
            0.17392742256872693,
        ];
        let mut m = CellMatrices::new(hx, hy);
        for k in 0..4 {
            for l in 0..4 {
                let mut mass = 0.0;
                let mut cx = 0.0;
                let mut cy = 0.0;
                let mut st = 0.0;
                for (i, &px) in gp.iter().enumerate() {
                    for (j, &py) in gp.iter().enumerate() {
                        let (x, y) = (px * hx, py * hy);
                        let w = gw[i] * gw[j] * hx * hy;
                        mass += w * n(k, x, y) * n(l, x, y);
                        cx += w * n(l, x, y) * dnx(k, x, y);
                        cy += w * n(l, x, y) * dny(k, x, y);
                        st += w * (dnx(k, x, y) * dnx(l, x, y) + dny(k, x, y) * dny(l, x, y));
                    }
                }
                m.mass[k][l] = mass;
                m.cx[k][l] = cx;
                m.cy[k][l] = cy;
                m.stiff[k][l] = st;
            }
        }
        m
    }

    #[test]
    fn closed_forms_match_quadrature_oracle() {
        for &(hx, hy) in &[(1.0, 1.0), (0.1, 0.1), (0.25, 0.05)] {
            let a = CellMatrices::new(hx, hy);
            let b = oracle(hx, hy);
            for k in 0..4 {
                for l in 0..4 {
                    assert!((a.mass[k][l] - b.mass[k][l]).abs() < 1e-14);
                    assert!((a.cx[k][l] - b.cx[k][l]).abs() < 1e-14);
                    assert!((a.cy[k][l] - b.cy[k][l]).abs() < 1e-14);
                    assert!((a.stiff[k][l] - b.stiff[k][l]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn mass_row_sums_give_cell_area() {
        let m = CellMatrices::new(0.2, 0.3);
        let total: f64 = (0..4).map(|k| (0..4).map(|l| m.mass[k][l]).sum::<f64>()).sum();
        assert!((total - 0.06).abs() < 1e-15);
    }

    #[test]
    fn convection_against_constant_telescopes_to_boundary() {
        // int 1 * dN_k/dx over the cell = hy * (N_k at x=hx minus at x=0) edge avg.
        let m = CellMatrices::new(0.5, 0.25);
        for k in 0..4 {
            let row: f64 = (0..4).map(|l| m.cx[k][l]).sum();
            let expect = if k % 2 == 0 { -0.125 } else { 0.125 };
            assert!((row - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn edge_gauss_integrates_linear_exactly() {
        let h = 0.37;
        let (shape, w) = edge_gauss(h);
        // int over the edge of p0(t) * (2 + 3t/h) dt, oracle closed form.
        let mut val = 0.0;
        for q in 0..2 {
            let t = GAUSS2.0[q];
            val += w[q] * shape[q][0] * (2.0 + 3.0 * t);
        }
        // int (1-s)(2+3s) h ds over s in [0,1] = h*(2 - 2*1/2 + 3*(1/2 - 1/3)) = h*1.5
        assert!((val - 1.5 * h).abs() < 1e-15);
        let me = edge_mass(h);
        assert!((me[0][0] + me[0][1] + me[1][0] + me[1][1] - h).abs() < 1e-15);
    }
}
