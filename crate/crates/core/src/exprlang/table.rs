//! Sampled one-variable functions usable as expression nodes.
//!
//! Generated specs (gauge coefficients, non-closed-form family integrals)
//! carry functions known only on a uniform grid. Each knot stores the value
//! and the first two derivatives; between knots the function is the quintic
//! Hermite interpolant, which is C² across knots.

/// A function of one variable sampled on a uniform grid over `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteTable {
    name: String,
    lo: f64,
    hi: f64,
    /// Per knot: value, first derivative, second derivative.
    knots: Vec<[f64; 3]>,
}

impl HermiteTable {
    /// Returns `None` when the grid is degenerate (fewer than two knots,
    /// `lo >= hi`, or non-finite data).
    pub fn new(name: impl Into<String>, lo: f64, hi: f64, knots: Vec<[f64; 3]>) -> Option<Self> {
        let finite = knots.iter().flatten().all(|v| v.is_finite());
        if knots.len() < 2 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() || !finite {
            return None;
        }
        Some(HermiteTable { name: name.into(), lo, hi, knots })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn knots(&self) -> &[[f64; 3]] {
        &self.knots
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.knots.len() - 1) as f64
    }

    pub fn with_name(&self, name: impl Into<String>) -> Self {
        HermiteTable { name: name.into(), ..self.clone() }
    }

    /// The `order`-th derivative of the interpolant at `x`. Outside `[lo, hi]`
    /// the end segments are extrapolated.
    pub fn derivative(&self, x: f64, order: usize) -> f64 {
        if order > 5 {
            return 0.0;
        }
        let dx = self.spacing();
        let segments = self.knots.len() - 1;
        let pos = (x - self.lo) / dx;
        let k = (pos.floor().max(0.0) as usize).min(segments - 1);
        let t = pos - k as f64;

        let [y0, d0, s0] = self.knots[k];
        let [y1, d1, s1] = self.knots[k + 1];
        // Derivatives rescaled to the unit parameter t.
        let (d0, d1) = (d0 * dx, d1 * dx);
        let (s0, s1) = (s0 * dx * dx, s1 * dx * dx);
        let dy = y1 - y0;
        let c = [
            y0,
            d0,
            0.5 * s0,
            10.0 * dy - 6.0 * d0 - 4.0 * d1 - 0.5 * (3.0 * s0 - s1),
            -15.0 * dy + 8.0 * d0 + 7.0 * d1 + 0.5 * (3.0 * s0 - 2.0 * s1),
            6.0 * dy - 3.0 * (d0 + d1) - 0.5 * (s0 - s1),
        ];

        // order-th derivative of sum c_j t^j, by Horner on the reduced coefficients.
        let mut acc = 0.0;
        for j in (order..6).rev() {
            let falling: f64 = ((j - order + 1)..=j).map(|q| q as f64).product();
            acc = acc * t + c[j] * falling;
        }
        acc / dx.powi(order as i32)
    }

    pub fn value(&self, x: f64) -> f64 {
        self.derivative(x, 0)
    }
}
