//! Quadrature on the reference simplex.
//!
//! Points are stored in barycentric coordinates so a rule maps to any cell by
//! `x = Σ λ_i p_i`. Weights sum to the reference volume (1/2 for the triangle,
//! 1/6 for the tetrahedron).

/// A positive-weight quadrature rule on the reference simplex.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    dim: usize,
    degree: usize,
    points: Vec<[f64; 4]>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Highest total polynomial degree integrated exactly.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Barycentric coordinates; entries beyond `dim + 1` are zero.
    pub fn points(&self) -> &[[f64; 4]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn reference_volume(&self) -> f64 {
        reference_volume(self.dim)
    }

    /// Integrate `f` over the reference simplex; `f` receives barycentric coordinates.
    pub fn integrate(&self, f: impl Fn(&[f64; 4]) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p))
            .sum()
    }

    /// Six-point rule on the triangle, exact for degree 4.
    pub fn triangle_degree4() -> Self {
        const A1: f64 = 0.445_948_490_915_964_886_32;
        const W1: f64 = 0.223_381_589_678_011_465_70;
        const A2: f64 = 0.091_576_213_509_770_743_46;
        const W2: f64 = 0.109_951_743_655_321_867_64;
        let mut points = Vec::with_capacity(6);
        let mut weights = Vec::with_capacity(6);
        for (a, w) in [(A1, W1), (A2, W2)] {
            let b = 1.0 - 2.0 * a;
            for p in [[a, a, b, 0.0], [a, b, a, 0.0], [b, a, a, 0.0]] {
                points.push(p);
                weights.push(0.5 * w);
            }
        }
        QuadratureRule {
            dim: 2,
            degree: 4,
            points,
            weights,
        }
    }

    /// Collapsed-coordinate Gauss product rule exact for total degree
    /// `degree`, with strictly positive weights.
    ///
    /// The reference simplex is mapped from the unit cube by
    /// `x = u, y = (1-u) v [, z = (1-u)(1-v) w]`. The Jacobian adds
    /// `dim - 1` to the polynomial degree in `u` and `dim - 2` in `v`, and
    /// each direction gets enough Gauss–Legendre points for its degree.
    pub fn collapsed(dim: usize, degree: usize) -> Self {
        assert!(dim == 2 || dim == 3, "simplex dimension must be 2 or 3");
        let points_for = |deg: usize| deg / 2 + 1;
        let gu = gauss_legendre_unit(points_for(degree + dim - 1));
        let gv = gauss_legendre_unit(points_for(degree + dim - 2));
        let mut points = Vec::new();
        let mut weights = Vec::new();
        if dim == 2 {
            for &(u, wu) in &gu {
                for &(v, wv) in &gv {
                    let (x, y) = (u, (1.0 - u) * v);
                    points.push([1.0 - x - y, x, y, 0.0]);
                    weights.push(wu * wv * (1.0 - u));
                }
            }
        } else {
            let gw = gauss_legendre_unit(points_for(degree));
            for &(u, wu) in &gu {
                for &(v, wv) in &gv {
                    for &(w, ww) in &gw {
                        let x = u;
                        let y = (1.0 - u) * v;
                        let z = (1.0 - u) * (1.0 - v) * w;
                        points.push([1.0 - x - y - z, x, y, z]);
                        weights.push(wu * wv * ww * (1.0 - u) * (1.0 - u) * (1.0 - v));
                    }
                }
            }
        }
        QuadratureRule {
            dim,
            degree,
            points,
            weights,
        }
    }

    /// The default degree-4 rule used for assembly in `dim` dimensions.
    pub fn assembly(dim: usize) -> Self {
        match dim {
            2 => Self::triangle_degree4(),
            _ => Self::collapsed(3, 4),
        }
    }
}

pub fn reference_volume(dim: usize) -> f64 {
    match dim {
        2 => 0.5,
        3 => 1.0 / 6.0,
        _ => panic!("unsupported simplex dimension {dim}"),
    }
}

/// Gauss–Legendre nodes and weights mapped to `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev-like initial guess, refined by Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { p0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    /// ∫ x^a y^b z^c over the reference simplex = a! b! c! / (a+b+c+dim)!.
    fn monomial_exact(dim: usize, e: [usize; 3]) -> f64 {
        factorial(e[0]) * factorial(e[1]) * factorial(e[2]) / factorial(e[0] + e[1] + e[2] + dim)
    }

    fn check_monomials(rule: &QuadratureRule) {
        let dim = rule.dim();
        let deg = rule.degree();
        for a in 0..=deg {
            for b in 0..=deg - a {
                let cmax = if dim == 3 { deg - a - b } else { 0 };
                for c in 0..=cmax {
                    let exact = monomial_exact(dim, [a, b, c]);
                    let q = rule.integrate(|l| {
                        l[1].powi(a as i32) * l[2].powi(b as i32) * l[3].powi(c as i32)
                    });
                    assert!(
                        (q - exact).abs() < 1e-14,
                        "dim {dim} degree {deg}: x^{a} y^{b} z^{c}: {q} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn triangle_rule_is_exact_to_degree_4() {
        let r = QuadratureRule::triangle_degree4();
        assert!(r.weights().iter().all(|&w| w > 0.0));
        assert!((r.weights().iter().sum::<f64>() - 0.5).abs() < 1e-15);
        check_monomials(&r);
    }

    #[test]
    fn collapsed_rules_are_exact() {
        for dim in [2, 3] {
            for deg in [1, 4, 8, 12] {
                let r = QuadratureRule::collapsed(dim, deg);
                assert!(r.weights().iter().all(|&w| w > 0.0));
                assert!((r.weights().iter().sum::<f64>() - reference_volume(dim)).abs() < 1e-15);
                check_monomials(&r);
            }
        }
    }

    #[test]
    fn gauss_legendre_three_points() {
        let g = gauss_legendre_unit(3);
        let s = (0.6f64).sqrt();
        assert!((g[0].0 - 0.5 * (1.0 - s)).abs() < 1e-15);
        assert!((g[1].0 - 0.5).abs() < 1e-15);
        assert!((g[1].1 - 4.0 / 9.0).abs() < 1e-15);
    }
}
