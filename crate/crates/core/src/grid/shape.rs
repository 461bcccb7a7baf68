use serde::{Deserialize, Serialize};

/// Analytic regions in ℝ²ⁿ described by a level function: negative in the
/// open region, zero on its boundary, positive outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Ball { center: Vec<f64>, radius: f64 },
    Rect { lo: Vec<f64>, hi: Vec<f64> },
    /// `inner < |x - center| < outer`.
    Shell { center: Vec<f64>, inner: f64, outer: f64 },
    /// Thin spherical layer `| |x - center| - radius | < half_width`.
    Sphere {
        center: Vec<f64>,
        radius: f64,
        half_width: f64,
    },
    Union { parts: Vec<Shape> },
}

fn dist(x: &[f64], c: &[f64]) -> f64 {
    x.iter()
        .zip(c)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

impl Shape {
    pub fn ball(center: &[f64], radius: f64) -> Self {
        Shape::Ball {
            center: center.to_vec(),
            radius,
        }
    }

    pub fn origin_ball(dim: usize, radius: f64) -> Self {
        Self::ball(&vec![0.0; dim], radius)
    }

    pub fn level(&self, x: &[f64]) -> f64 {
        match self {
            Shape::Ball { center, radius } => dist(x, center) - radius,
            Shape::Rect { lo, hi } => lo
                .iter()
                .zip(hi)
                .zip(x)
                .map(|((l, h), v)| (l - v).max(v - h))
                .fold(f64::NEG_INFINITY, f64::max),
            Shape::Shell {
                center,
                inner,
                outer,
            } => {
                let r = dist(x, center);
                (inner - r).max(r - outer)
            }
            Shape::Sphere {
                center,
                radius,
                half_width,
            } => (dist(x, center) - radius).abs() - half_width,
            Shape::Union { parts } => parts
                .iter()
                .map(|p| p.level(x))
                .fold(f64::INFINITY, f64::min),
        }
    }

    pub fn contains_open(&self, x: &[f64]) -> bool {
        self.level(x) < 0.0
    }

    pub fn contains_closed(&self, x: &[f64]) -> bool {
        self.level(x) <= 0.0
    }

    /// [`Shape::contains_open`] for a lattice node of spacing `h`.
    pub fn contains_node_open(&self, x: &[f64], h: f64) -> bool {
        self.level(x) < -super::LEVEL_SNAP * h
    }

    /// [`Shape::contains_closed`] for a lattice node of spacing `h`.
    pub fn contains_node_closed(&self, x: &[f64], h: f64) -> bool {
        self.level(x) <= super::LEVEL_SNAP * h
    }

    /// Shapes with nonempty interior near every boundary point. Only these
    /// get fractional boundary arms in the discretization.
    pub fn is_fat(&self) -> bool {
        match self {
            Shape::Ball { radius, .. } => *radius > 0.0,
            Shape::Rect { .. } => true,
            Shape::Shell { inner, outer, .. } => outer > inner,
            Shape::Sphere { .. } => false,
            Shape::Union { parts } => !parts.is_empty() && parts.iter().all(Shape::is_fat),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            Shape::Ball { center, .. } | Shape::Shell { center, .. } | Shape::Sphere { center, .. } => {
                Some(center.len())
            }
            Shape::Rect { lo, .. } => Some(lo.len()),
            Shape::Union { parts } => parts.first().and_then(Shape::dim),
        }
    }

    /// Fraction `t ∈ (0, 1]` along the segment `a → b` where the level
    /// function changes sign. `a` and `b` must lie on opposite sides
    /// (`level(a) < 0 <= level(b)` or `level(a) > 0 >= level(b)`).
    pub fn crossing(&self, a: &[f64], b: &[f64]) -> f64 {
        let la = self.level(a);
        let mut lo = 0.0_f64;
        let mut hi = 1.0_f64;
        let mut p = [0.0; super::MAX_DIM];
        let dim = a.len();
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            for k in 0..dim {
                p[k] = a[k] + mid * (b[k] - a[k]);
            }
            let lm = self.level(&p[..dim]);
            let same_side = if la < 0.0 { lm < 0.0 } else { lm > 0.0 };
            if same_side {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-16 {
                break;
            }
        }
        hi
    }
}
