//! Symmetric Gauss quadrature rules on the reference triangle.
//!
//! Points are stored in barycentric coordinates; weights sum to 1/2 (the
//! reference triangle area), so integrating over a physical triangle means
//! scaling by `2 * area`.

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub exactness_degree: u32,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Integrates `f` (given in barycentric coordinates) over the reference triangle.
    pub fn integrate_reference<F: Fn([f64; 3]) -> f64>(&self, f: F) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&p, &w)| w * f(p))
            .sum()
    }
}

fn orbit1(points: &mut Vec<[f64; 3]>, weights: &mut Vec<f64>, w: f64) {
    points.push([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
    weights.push(w);
}

/// Orbit of a point with barycentric pattern (a, b, b): three permutations.
fn orbit3(points: &mut Vec<[f64; 3]>, weights: &mut Vec<f64>, a: f64, w: f64) {
    let b = 0.5 * (1.0 - a);
    points.push([a, b, b]);
    points.push([b, a, b]);
    points.push([b, b, a]);
    weights.extend_from_slice(&[w, w, w]);
}

/// Orbit of a point with three distinct barycentric coordinates: six permutations.
fn orbit6(points: &mut Vec<[f64; 3]>, weights: &mut Vec<f64>, a: f64, b: f64, w: f64) {
    let c = 1.0 - a - b;
    for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
        points.push(p);
        weights.push(w);
    }
}

/// Symmetric rule exact for polynomials up to `degree` (1 to 6). The degree-3
/// request returns the positive-weight degree-4 rule; the textbook degree-3
/// rule has a negative centroid weight.
pub fn triangle_rule(degree: u32) -> Result<QuadratureRule> {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let exactness_degree;
    match degree {
        0 | 1 => {
            orbit1(&mut points, &mut weights, 1.0);
            exactness_degree = 1;
        }
        2 => {
            orbit3(&mut points, &mut weights, 2.0 / 3.0, 1.0 / 3.0);
            exactness_degree = 2;
        }
        3 | 4 => {
            orbit3(&mut points, &mut weights, 0.108103018168070, 0.223381589678011);
            orbit3(&mut points, &mut weights, 0.816847572980459, 0.109951743655322);
            exactness_degree = 4;
        }
        5 => {
            orbit1(&mut points, &mut weights, 0.225);
            orbit3(&mut points, &mut weights, 0.059715871789770, 0.132394152788506);
            orbit3(&mut points, &mut weights, 0.797426985353087, 0.125939180544827);
            exactness_degree = 5;
        }
        6 => {
            orbit3(&mut points, &mut weights, 0.501426509658179, 0.116786275726379);
            orbit3(&mut points, &mut weights, 0.873821971016996, 0.050844906370207);
            orbit6(
                &mut points,
                &mut weights,
                0.053145049844817,
                0.310352451033784,
                0.082851075618374,
            );
            exactness_degree = 6;
        }
        d => {
            return Err(Error::Assembly(format!(
                "no triangle quadrature rule for degree {d} (supported: 1 to 6)"
            )))
        }
    }
    // stored weights sum to the reference area 1/2
    for w in &mut weights {
        *w *= 0.5;
    }
    Ok(QuadratureRule {
        points,
        weights,
        exactness_degree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exact value of the monomial integral over the reference triangle:
    /// int x^p y^q dx dy = p! q! / (p + q + 2)!.
    fn monomial_exact(p: u32, q: u32) -> f64 {
        let fact = |n: u32| (1..=n).map(|k| k as f64).product::<f64>().max(1.0);
        fact(p) * fact(q) / fact(p + q + 2)
    }

    fn integrate_monomial(rule: &QuadratureRule, p: u32, q: u32) -> f64 {
        // reference triangle (0,0), (1,0), (0,1): x = lambda_1, y = lambda_2
        rule.integrate_reference(|b| b[1].powi(p as i32) * b[2].powi(q as i32))
    }

    #[test]
    fn weights_sum_to_reference_area() {
        for d in 1..=6 {
            let rule = triangle_rule(d).unwrap();
            let sum: f64 = rule.weights.iter().sum();
            assert!((sum - 0.5).abs() < 1e-14, "degree {d}: weight sum {sum}");
        }
    }

    #[test]
    fn points_inside_and_positive_weights() {
        for d in 1..=6 {
            let rule = triangle_rule(d).unwrap();
            for (p, w) in rule.points.iter().zip(&rule.weights) {
                assert!(*w > 0.0);
                assert!((p[0] + p[1] + p[2] - 1.0).abs() < 1e-14);
                assert!(p.iter().all(|&l| (0.0..=1.0).contains(&l)));
            }
        }
    }

    #[test]
    fn monomial_exactness() {
        for d in 1..=6u32 {
            let rule = triangle_rule(d).unwrap();
            for p in 0..=rule.exactness_degree {
                for q in 0..=(rule.exactness_degree - p) {
                    let got = integrate_monomial(&rule, p, q);
                    let want = monomial_exact(p, q);
                    assert!(
                        (got - want).abs() < 1e-15,
                        "degree {d} rule, x^{p} y^{q}: got {got}, want {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn frozen_spot_values() {
        // int x^2 = 1/12 with the degree-2 rule, int x^2 y^2 = 1/180 with degree 5
        let d2 = triangle_rule(2).unwrap();
        assert!((integrate_monomial(&d2, 2, 0) - 1.0 / 12.0).abs() < 1e-15);
        let d5 = triangle_rule(5).unwrap();
        assert!((integrate_monomial(&d5, 2, 2) - 1.0 / 180.0).abs() < 1e-15);
    }

    #[test]
    fn degree_3_rounds_up_to_positive_rule() {
        let r = triangle_rule(3).unwrap();
        assert_eq!(r.exactness_degree, 4);
        assert!(r.weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn unsupported_degree_rejected() {
        assert!(triangle_rule(7).is_err());
    }
}
