//! Gauss-Hermite rules for the standard normal weight.
//!
//! Golub-Welsch eigenvalues give the nodes, which are then polished by Newton
//! iteration on the orthonormal Hermite recurrence. Weights are taken from the
//! recurrence rather than from eigenvectors, which keeps tail weights accurate
//! for a few hundred nodes.

use std::f64::consts::PI;

use nalgebra::DMatrix;

/// One-dimensional rule: `E[f(Z)] ≈ Σ w_i f(x_i)` for `Z ~ N(0, 1)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Builds an `n`-point rule. Panics if `n == 0`.
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "Gauss-Hermite rule needs at least one node");
        let (t, w) = physicists(n);
        let nodes = t.iter().map(|t| t * std::f64::consts::SQRT_2).collect();
        let weights = w.iter().map(|w| w / PI.sqrt()).collect();
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Nodes and weights for `∫ e^{-t²} f(t) dt`, ascending.
///
/// Roots of the Jacobi matrix seed a Newton polish on the orthonormal
/// recurrence; weights come from the polished derivative.
fn physicists(n: usize) -> (Vec<f64>, Vec<f64>) {
    const EPS: f64 = 1e-15;
    const MAX_ITER: usize = 50;
    let pim4 = PI.powf(-0.25);
    let nf = n as f64;
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        let b = (i as f64 / 2.0).sqrt();
        jacobi[(i, i - 1)] = b;
        jacobi[(i - 1, i)] = b;
    }
    let mut roots: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
    roots.sort_by(f64::total_cmp);
    let mut x = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for mut z in roots {
        let mut pp = 0.0;
        for _ in 0..MAX_ITER {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= EPS * z.abs().max(1.0) {
                break;
            }
        }
        x.push(z);
        w.push(2.0 / (pp * pp));
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moment(rule: &GaussHermite, p: i32) -> f64 {
        rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * x.powi(p)).sum()
    }

    #[test]
    fn weights_sum_to_one() {
        for n in [1, 2, 5, 16, 64, 128, 256] {
            let rule = GaussHermite::new(n);
            let s: f64 = rule.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-13, "n={n}: {s}");
        }
    }

    #[test]
    fn normal_moments_are_exact() {
        let rule = GaussHermite::new(10);
        // E[Z^{2j}] = (2j-1)!!
        let expected = [1.0, 1.0, 3.0, 15.0, 105.0, 945.0];
        for (j, e) in expected.iter().enumerate() {
            let m = moment(&rule, 2 * j as i32);
            assert!((m - e).abs() < 1e-10 * e, "moment {}: {m}", 2 * j);
        }
        assert!(moment(&rule, 3).abs() < 1e-13);
    }

    #[test]
    fn nodes_ascending_and_symmetric() {
        let rule = GaussHermite::new(33);
        assert!(rule.nodes.windows(2).all(|p| p[0] < p[1]));
        assert!(rule.nodes[16].abs() < 1e-14);
        for i in 0..33 {
            assert!((rule.nodes[i] + rule.nodes[32 - i]).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_damping_integral() {
        // E[exp(-Z²/2)] = 1/√2
        let rule = GaussHermite::new(64);
        let v: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * (-0.5 * x * x).exp()).sum();
        assert!((v - 0.5f64.sqrt()).abs() < 1e-14);
    }
}
