//! Gauss–Hermite quadrature against the standard Gaussian probability
//! measure `dμ_G(ζ) = (2π)^{−d/2} e^{−|ζ|²/2} dζ`.

use crate::{CoreError, Result};

/// Nodes/weights such that `Σ w_i f(x_i) ≈ ∫ f dμ_G` in one dimension,
/// exact for polynomials of degree `≤ 2q − 1`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Compute the `q`-point rule by Newton iteration on the physicists'
    /// Hermite recurrence, then rescale to the probability measure
    /// (`x ← √2·x`, `w ← w/√π`).
    pub fn new(q: usize) -> Result<Self> {
        if q == 0 || q > 64 {
            return Err(CoreError::InvalidParameter(format!(
                "gauss-hermite order {q} outside 1..=64"
            )));
        }
        let mut nodes = vec![0.0f64; q];
        let mut weights = vec![0.0f64; q];
        let qf = q as f64;
        // roots come in ± pairs; find the non-negative half
        for i in 0..(q + 1) / 2 {
            // Stroud-Secrest style initial guesses, refined by Newton
            let mut x = match i {
                0 => (2.0 * qf + 1.0).sqrt() - 1.85575 * (2.0 * qf + 1.0).powf(-1.0 / 6.0),
                1 => nodes[q - 1] - 1.14 * qf.powf(0.426) / nodes[q - 1],
                2 => 1.86 * nodes[q - 2] - 0.86 * nodes[q - 1],
                3 => 1.91 * nodes[q - 3] - 0.91 * nodes[q - 2],
                _ => 2.0 * nodes[q - i] - nodes[q - i + 1],
            };
            let mut dp = 0.0;
            for _ in 0..200 {
                // orthonormal Hermite recurrence: stable evaluation
                let mut p0 = std::f64::consts::PI.powf(-0.25);
                let mut p1 = 0.0f64;
                for j in 0..q {
                    let p2 = p1;
                    p1 = p0;
                    p0 = x * (2.0 / (j as f64 + 1.0)).sqrt() * p1
                        - (j as f64 / (j as f64 + 1.0)).sqrt() * p2;
                }
                dp = (2.0 * qf).sqrt() * p1;
                let dx = p0 / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            nodes[q - 1 - i] = x;
            nodes[i] = -x;
            let w = 2.0 / (dp * dp);
            weights[q - 1 - i] = w;
            weights[i] = w;
        }
        // rescale from e^{-x^2} weight to the standard Gaussian measure
        let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
        for i in 0..q {
            nodes[i] *= std::f64::consts::SQRT_2;
            weights[i] *= inv_sqrt_pi;
        }
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Iterate the full tensor-product rule over `naxes` axes, calling
/// `f(node_coords, weight)` for each multi-node.
pub fn tensor_iter<F: FnMut(&[f64], f64)>(rule: &GaussHermite, naxes: usize, mut f: F) {
    let q = rule.len();
    let total = q.pow(naxes as u32);
    let mut coords = vec![0.0f64; naxes];
    for c in 0..total {
        let mut cc = c;
        let mut w = 1.0;
        for m in 0..naxes {
            let i = cc % q;
            cc /= q;
            coords[m] = rule.nodes[i];
            w *= rule.weights[i];
        }
        f(&coords, w);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gaussian_moments() {
        let rule = GaussHermite::new(8).unwrap();
        let m = |p: u32| -> f64 {
            rule.nodes
                .iter()
                .zip(&rule.weights)
                .map(|(x, w)| w * x.powi(p as i32))
                .sum()
        };
        assert_abs_diff_eq!(m(0), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m(1), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m(2), 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(m(4), 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m(6), 15.0, epsilon = 1e-11);
        // degree 2q-1 = 15 still exact (odd -> 0), degree 14 exact: 13!! = 135135
        assert_abs_diff_eq!(m(14), 135135.0, epsilon = 1e-6);
    }

    #[test]
    fn exponential_integrand_converges() {
        // E[e^X] = e^{1/2} for X ~ N(0,1)
        let rule = GaussHermite::new(12).unwrap();
        let v: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(x, w)| w * x.exp())
            .sum();
        assert_abs_diff_eq!(v, 0.5f64.exp(), epsilon = 1e-10);
    }

    #[test]
    fn tensor_rule_2d() {
        // E[x^2 y^2] = 1 for independent standard normals
        let rule = GaussHermite::new(6).unwrap();
        let mut acc = 0.0;
        tensor_iter(&rule, 2, |c, w| acc += w * c[0] * c[0] * c[1] * c[1]);
        assert_abs_diff_eq!(acc, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_order() {
        assert!(GaussHermite::new(0).is_err());
        assert!(GaussHermite::new(65).is_err());
    }
}
