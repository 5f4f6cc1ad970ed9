//! Symmetric quadrature rules on the reference triangle.
//!
//! Points are barycentric coordinates; weights sum to one, so an integral
//! over a triangle `T` is `|T| * sum_q w_q f(x_q)`.

#[derive(Debug, Clone, Copy)]
pub struct Rule {
    pub points: &'static [[f64; 3]],
    pub weights: &'static [f64],
}

impl Rule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

const D2_A: f64 = 2.0 / 3.0;
const D2_B: f64 = 1.0 / 6.0;

/// Three interior points, exact for polynomials of degree 2.
pub const DEGREE_2: Rule = Rule {
    points: &[[D2_A, D2_B, D2_B], [D2_B, D2_A, D2_B], [D2_B, D2_B, D2_A]],
    weights: &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
};

const D4_A1: f64 = 0.445_948_490_915_964_9;
const D4_B1: f64 = 0.108_103_018_168_070_2;
const D4_W1: f64 = 0.223_381_589_678_011_5;
const D4_A2: f64 = 0.091_576_213_509_770_74;
const D4_B2: f64 = 0.816_847_572_980_458_5;
const D4_W2: f64 = 0.109_951_743_655_321_9;

/// Six-point Dunavant rule, exact for polynomials of degree 4.
pub const DEGREE_4: Rule = Rule {
    points: &[
        [D4_B1, D4_A1, D4_A1],
        [D4_A1, D4_B1, D4_A1],
        [D4_A1, D4_A1, D4_B1],
        [D4_B2, D4_A2, D4_A2],
        [D4_A2, D4_B2, D4_A2],
        [D4_A2, D4_A2, D4_B2],
    ],
    weights: &[D4_W1, D4_W1, D4_W1, D4_W2, D4_W2, D4_W2],
};

/// Two-point Gauss-Legendre rule on `[0, 1]`, exact for cubics.
pub const EDGE_GAUSS_2: ([f64; 2], [f64; 2]) = (
    [0.211_324_865_405_187_1, 0.788_675_134_594_812_9],
    [0.5, 0.5],
);

/// Three-point Gauss-Legendre rule on `[0, 1]`, exact for quintics.
pub const EDGE_GAUSS_3: ([f64; 3], [f64; 3]) = (
    [0.112_701_665_379_258_3, 0.5, 0.887_298_334_620_741_7],
    [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0],
);
