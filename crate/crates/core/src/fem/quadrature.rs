//! Quadrature rules in barycentric coordinates, weights normalised to sum to one.

pub struct Rule<const P: usize> {
    pub points: [[f64; 3]; P],
    pub weights: [f64; P],
}

/// Degree-3 four-point rule (one negative weight).
pub const TRI4: Rule<4> = Rule {
    points: [
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        [0.6, 0.2, 0.2],
        [0.2, 0.6, 0.2],
        [0.2, 0.2, 0.6],
    ],
    weights: [-27.0 / 48.0, 25.0 / 48.0, 25.0 / 48.0, 25.0 / 48.0],
};

const A1: f64 = 0.059_715_871_789_769_82;
const B1: f64 = 0.470_142_064_105_115_1;
const A2: f64 = 0.797_426_985_353_087_3;
const B2: f64 = 0.101_286_507_323_456_3;
const W1: f64 = 0.132_394_152_788_506_2;
const W2: f64 = 0.125_939_180_544_827_1;

/// Degree-5 seven-point rule, used for error norms.
pub const TRI7: Rule<7> = Rule {
    points: [
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        [A1, B1, B1],
        [B1, A1, B1],
        [B1, B1, A1],
        [A2, B2, B2],
        [B2, A2, B2],
        [B2, B2, A2],
    ],
    weights: [0.225, W1, W1, W1, W2, W2, W2],
};

/// Two-point Gauss rule on a facet, as parameters `s` in `[0, 1]`.
pub const LINE2: ([f64; 2], [f64; 2]) = {
    let d = 0.288_675_134_594_812_9; // 1 / (2 sqrt 3)
    ([0.5 - d, 0.5 + d], [0.5, 0.5])
};

/// Three-point Gauss rule on a facet (degree 5).
pub const LINE3: ([f64; 3], [f64; 3]) = {
    let d = 0.387_298_334_620_741_7; // sqrt(3/5) / 2
    ([0.5 - d, 0.5, 0.5 + d], [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])
};

#[cfg(test)]
mod tests {
    use super::*;

    fn integrate<const P: usize>(r: &Rule<P>, f: impl Fn(f64, f64) -> f64) -> f64 {
        // reference triangle (0,0), (1,0), (0,1), area 1/2
        (0..P).map(|q| r.weights[q] * f(r.points[q][1], r.points[q][2])).sum::<f64>() * 0.5
    }

    fn monomial(i: i32, j: i32) -> f64 {
        // int x^i y^j over the reference triangle = i! j! / (i + j + 2)!
        let fact = |n: i32| (1..=n).map(|k| k as f64).product::<f64>();
        fact(i) * fact(j) / fact(i + j + 2)
    }

    #[test]
    fn rules_integrate_polynomials_exactly() {
        for i in 0..=5 {
            for j in 0..=(5 - i) {
                let exact = monomial(i, j);
                let r7 = integrate(&TRI7, |x, y| x.powi(i) * y.powi(j));
                assert!((r7 - exact).abs() < 1e-15, "tri7 {i} {j}");
                if i + j <= 3 {
                    let r4 = integrate(&TRI4, |x, y| x.powi(i) * y.powi(j));
                    assert!((r4 - exact).abs() < 1e-15, "tri4 {i} {j}");
                }
            }
        }
        let (s, w) = LINE2;
        for k in 0..=3 {
            let v: f64 = (0..2).map(|q| w[q] * s[q].powi(k)).sum();
            assert!((v - 1.0 / (k + 1) as f64).abs() < 1e-15);
        }
        let (s, w) = LINE3;
        for k in 0..=5 {
            let v: f64 = (0..3).map(|q| w[q] * s[q].powi(k)).sum();
            assert!((v - 1.0 / (k + 1) as f64).abs() < 1e-15);
        }
    }
}
