//! Inflow boundary data evaluated pointwise at edge quadrature nodes.

use std::sync::Arc;

/// Inflow data `g(x, v_i)` for the transport problem.
#[derive(Clone)]
pub enum BoundaryData {
    Zero,
    One,
    /// `g(x, v) = cos(2 pi (x1 + x2)) + 1`, independent of direction.
    CosineRidge,
    /// Arbitrary user data, (x, y, ordinate index) -> value.
    Custom(Arc<dyn Fn(f64, f64, usize) -> f64 + Send + Sync>),
}

impl BoundaryData {
    pub fn eval(&self, x: f64, y: f64, ord: usize) -> f64 {
        match self {
            BoundaryData::Zero => 0.0,
            BoundaryData::One => 1.0,
            BoundaryData::CosineRidge => (2.0 * std::f64::consts::PI * (x + y)).cos() + 1.0,
            BoundaryData::Custom(f) => f(x, y, ord),
        }
    }

    /// Identifier used in config files and cache keys.
    pub fn id(&self) -> &'static str {
        match self {
            BoundaryData::Zero => "zero",
            BoundaryData::One => "one",
            BoundaryData::CosineRidge => "cosine-ridge",
            BoundaryData::Custom(_) => "custom",
        }
    }
}

impl std::fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}
