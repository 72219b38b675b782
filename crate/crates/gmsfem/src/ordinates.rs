//! Discrete-ordinates quadrature on the unit circle and the scattering matrix.
//!
//! The default layout places `m` equispaced directions with equal weights
//! `1/m`, offset by half a step: `theta_i = 2 pi (i - 1/2) / m`. Equispaced
//! rules integrate the circular harmonics `e^{ik t}` exactly for
//! `0 < |k| < m` regardless of the offset. For `m` divisible by four no
//! direction is axis-aligned; for `m = 2 mod 4` (including the common
//! `m = 6`) two directions point along the y axis, and the grid faces with
//! `v . n = 0` simply carry no flux anywhere in the scheme.

use faer::Mat;

use crate::error::{Error, Result};

/// Quadrature directions and weights on the unit circle.
#[derive(Debug, Clone)]
pub struct OrdinateSet {
    directions: Vec<[f64; 2]>,
    weights: Vec<f64>,
}

impl OrdinateSet {
    /// Default layout: `theta_i = 2 pi (i - 1/2) / m` for `i = 1..=m`, equal
    /// weights summing to one exactly.
    pub fn equispaced(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::invalid(format!("need at least 2 ordinates, got {m}")));
        }
        let directions = (0..m)
            .map(|i| {
                let theta = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / m as f64;
                [theta.cos(), theta.sin()]
            })
            .collect();
        let weights = vec![1.0 / m as f64; m];
        let mut set = OrdinateSet { directions, weights };
        set.pin_weight_sum();
        Ok(set)
    }

    /// Register a custom layout. Directions are normalized to unit length;
    /// weights must be positive and are rescaled so they sum to one exactly.
    pub fn from_parts(directions: Vec<[f64; 2]>, weights: Vec<f64>) -> Result<Self> {
        if directions.len() < 2 || directions.len() != weights.len() {
            return Err(Error::invalid("need matching direction/weight lists of length >= 2"));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::invalid("ordinate weights must be positive"));
        }
        let directions = directions
            .into_iter()
            .map(|[x, y]| {
                let n = (x * x + y * y).sqrt();
                if n == 0.0 {
                    return Err(Error::invalid("zero ordinate direction"));
                }
                Ok([x / n, y / n])
            })
            .collect::<Result<Vec<_>>>()?;
        let total: f64 = weights.iter().sum();
        let weights = weights.into_iter().map(|w| w / total).collect();
        let mut set = OrdinateSet { directions, weights };
        set.pin_weight_sum();
        Ok(set)
    }

    /// Nudge the last weight so the floating-point sum is exactly one.
    fn pin_weight_sum(&mut self) {
        for _ in 0..4 {
            let s: f64 = self.weights.iter().sum();
            if s == 1.0 {
                return;
            }
            let last = self.weights.len() - 1;
            self.weights[last] += 1.0 - s;
        }
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn direction(&self, i: usize) -> [f64; 2] {
        self.directions[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn directions(&self) -> &[[f64; 2]] {
        &self.directions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Discrete angular average `sum_i alpha_i u_i` of per-ordinate samples.
    pub fn average(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, u)| w * u).sum()
    }
}

/// The collision coupling matrix `a_ij`: `alpha_i - alpha_i^2` on the
/// diagonal and `-alpha_i alpha_j` off it. Symmetric positive semi-definite
/// with the isotropic vector spanning the kernel.
#[derive(Debug, Clone)]
pub struct ScatteringMatrix {
    entries: Mat<f64>,
}

impl ScatteringMatrix {
    pub fn new(ords: &OrdinateSet) -> Self {
        let m = ords.len();
        let entries = Mat::from_fn(m, m, |i, j| {
            let (ai, aj) = (ords.weight(i), ords.weight(j));
            if i == j {
                ai - ai * ai
            } else {
                -ai * aj
            }
        });
        ScatteringMatrix { entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.entries
    }

    /// Quadratic form `u^T A u`.
    pub fn quadratic(&self, u: &[f64]) -> f64 {
        let m = self.dim();
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                acc += u[i] * self.entries[(i, j)] * u[j];
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn weights_sum_to_one_exactly() {
        for m in 2..=12 {
            let ords = OrdinateSet::equispaced(m).unwrap();
            let s: f64 = ords.weights().iter().sum();
            assert_eq!(s, 1.0, "m={m}");
            for i in 0..m {
                let [x, y] = ords.direction(i);
                assert!((x * x + y * y - 1.0).abs() < 1e-15);
                assert!((ords.weight(i) - 1.0 / m as f64).abs() <= f64::EPSILON);
            }
        }
    }

    #[test]
    fn rejects_degenerate_count() {
        assert!(OrdinateSet::equispaced(0).is_err());
        assert!(OrdinateSet::equispaced(1).is_err());
    }

    #[test]
    fn six_ordinates_sit_at_half_step_angles() {
        let ords = OrdinateSet::equispaced(6).unwrap();
        let deg = |i: usize| {
            let [x, y] = ords.direction(i);
            y.atan2(x).to_degrees().rem_euclid(360.0)
        };
        for k in 0..6 {
            assert!((deg(k) - (30.0 + 60.0 * k as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn counts_divisible_by_four_avoid_axis_alignment() {
        for m in [4usize, 8, 12, 16] {
            let ords = OrdinateSet::equispaced(m).unwrap();
            for i in 0..m {
                let [x, y] = ords.direction(i);
                assert!(x.abs() > 1e-12 && y.abs() > 1e-12, "m={m} i={i}");
            }
        }
    }

    #[test]
    fn two_ordinates_form_vertical_antipodal_pair() {
        let ords = OrdinateSet::equispaced(2).unwrap();
        let [x0, y0] = ords.direction(0);
        let [x1, y1] = ords.direction(1);
        assert!((x0 + x1).abs() < 1e-15 && (y0 + y1).abs() < 1e-15);
        assert!(x0.abs() < 1e-15 && (y0 - 1.0).abs() < 1e-15);
        assert_eq!(ords.weight(0), 0.5);
        assert_eq!(ords.weight(1), 0.5);
    }

    #[test]
    fn four_ordinates_integrate_vx_squared() {
        // (1/2pi) int cos^2 = 1/2; the rule must reproduce it exactly.
        let ords = OrdinateSet::equispaced(4).unwrap();
        let val: f64 = (0..4).map(|i| ords.weight(i) * ords.direction(i)[0].powi(2)).sum();
        assert!((val - 0.5).abs() < 1e-15);
    }

    #[test]
    fn harmonics_below_order_m_integrate_to_zero() {
        for m in [3usize, 6, 8] {
            let ords = OrdinateSet::equispaced(m).unwrap();
            for k in 1..3.min(m) {
                let (mut re, mut im) = (0.0, 0.0);
                for i in 0..m {
                    let [x, y] = ords.direction(i);
                    let t = k as f64 * y.atan2(x);
                    re += ords.weight(i) * t.cos();
                    im += ords.weight(i) * t.sin();
                }
                assert!(re.abs() < 1e-14 && im.abs() < 1e-14, "m={m} k={k}");
            }
        }
    }

    #[test]
    fn scattering_matrix_m2_matches_hand_values() {
        let ords = OrdinateSet::equispaced(2).unwrap();
        let a = ScatteringMatrix::new(&ords);
        assert!((a.entry(0, 0) - 0.25).abs() < 1e-15);
        assert!((a.entry(0, 1) + 0.25).abs() < 1e-15);
        assert!((a.entry(1, 0) + 0.25).abs() < 1e-15);
        assert!((a.entry(1, 1) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn isotropic_vector_spans_kernel_and_row_sums_vanish() {
        for m in [2usize, 5, 6] {
            let ords = OrdinateSet::equispaced(m).unwrap();
            let a = ScatteringMatrix::new(&ords);
            for i in 0..m {
                let row: f64 = (0..m).map(|j| a.entry(i, j)).sum();
                assert!(row.abs() < 1e-16, "m={m} row {i}");
            }
            let ones = vec![1.0; m];
            assert!(a.quadratic(&ones).abs() < 1e-15);
        }
    }

    #[test]
    fn quadratic_form_matches_pairwise_identity() {
        // u^T A u = sum_{i<j} alpha_i alpha_j (u_i - u_j)^2, checked on
        // random vectors by a direct double loop.
        let ords = OrdinateSet::equispaced(6).unwrap();
        let a = ScatteringMatrix::new(&ords);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let u: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
            let lhs = a.quadratic(&u);
            let mut rhs = 0.0;
            for i in 0..6 {
                for j in (i + 1)..6 {
                    rhs += ords.weight(i) * ords.weight(j) * (u[i] - u[j]).powi(2);
                }
            }
            let scale = lhs.abs().max(rhs.abs()).max(1e-300);
            assert!((lhs - rhs).abs() / scale < 1e-12);
            assert!(lhs >= -1e-15);
        }
    }

    #[test]
    fn equal_weight_spectrum_is_zero_plus_one_over_m() {
        let m = 6;
        let ords = OrdinateSet::equispaced(m).unwrap();
        let a = ScatteringMatrix::new(&ords);
        let evd = a.matrix().self_adjoint_eigen(faer::Side::Lower).unwrap();
        let eigs: Vec<f64> = (0..m).map(|i| evd.S()[i]).collect();
        assert!(eigs[0].abs() < 1e-14);
        for &l in &eigs[1..] {
            assert!((l - 1.0 / m as f64).abs() < 1e-14);
        }
    }
}
