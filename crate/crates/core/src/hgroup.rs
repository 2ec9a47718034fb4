//! Exact arithmetic and geometry of the Heisenberg group `H^d`.
//!
//! A point is `(z, s)` with `z = (x¹..x^d, y¹..y^d) ∈ R^{2d}` and center
//! coordinate `s ∈ R`. The group law twists the center by the symplectic
//! form `z ·σ z' = x'·y − x·y'`.

use crate::{CoreError, Result};

/// A point `(z, s)` of `H^d`. `z` is laid out `(x¹..x^d, y¹..y^d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HPoint {
    pub z: Vec<f64>,
    pub s: f64,
}

/// Coefficients of a horizontal tangent vector in the frame
/// `{X₁..X_d, Y₁..Y_d}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HVelocity {
    pub xi: Vec<f64>,
}

/// Value of the Korányi gauge; nonnegative, zero only at the identity.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct GaugeValue(pub f64);

impl HPoint {
    pub fn new(z: Vec<f64>, s: f64) -> Result<Self> {
        if z.is_empty() || z.len() % 2 != 0 {
            return Err(CoreError::InvalidParameter(format!(
                "horizontal coordinate length {} is not 2d with d >= 1",
                z.len()
            )));
        }
        if !z.iter().all(|v| v.is_finite()) || !s.is_finite() {
            return Err(CoreError::InvalidParameter("non-finite coordinate".into()));
        }
        Ok(Self { z, s })
    }

    pub fn identity(d: usize) -> Self {
        Self { z: vec![0.0; 2 * d], s: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.z.len() / 2
    }

    /// Anisotropic dilation `δ_λ(z, s) = (λ z, λ² s)`.
    pub fn dilate(&self, lambda: f64) -> Self {
        Self {
            z: self.z.iter().map(|v| lambda * v).collect(),
            s: lambda * lambda * self.s,
        }
    }
}

/// Symplectic form `z ·σ ζ = x'·y − x·y'` with `z = (x, y)`, `ζ = (x', y')`.
pub fn sigma_form(z: &[f64], zeta: &[f64]) -> Result<f64> {
    if z.len() != zeta.len() {
        return Err(CoreError::DimensionMismatch(z.len(), zeta.len()));
    }
    let d = z.len() / 2;
    let mut acc = 0.0;
    for i in 0..d {
        acc += zeta[i] * z[d + i] - z[i] * zeta[d + i];
    }
    Ok(acc)
}

/// `z̃ = (z₂, −z₁)` for `z = (z₁, z₂)`; satisfies `η·z̃ = z ·σ η` and `|z̃| = |z|`.
pub fn ztilde(z: &[f64]) -> Vec<f64> {
    let d = z.len() / 2;
    let mut out = Vec::with_capacity(z.len());
    out.extend_from_slice(&z[d..]);
    out.extend(z[..d].iter().map(|v| -v));
    out
}

/// Group law `(x,y,s)·(x',y',s') = (x+x', y+y', s+s'+x'·y−x·y')`.
pub fn group_mul(p: &HPoint, q: &HPoint) -> Result<HPoint> {
    if p.z.len() != q.z.len() {
        return Err(CoreError::DimensionMismatch(p.z.len(), q.z.len()));
    }
    let z: Vec<f64> = p.z.iter().zip(&q.z).map(|(a, b)| a + b).collect();
    let s = p.s + q.s + sigma_form(&p.z, &q.z)?;
    Ok(HPoint { z, s })
}

/// Group inverse `(−x, −y, −s)`.
pub fn group_inv(p: &HPoint) -> HPoint {
    HPoint {
        z: p.z.iter().map(|v| -v).collect(),
        s: -p.s,
    }
}

/// Korányi gauge `(|z|⁴ + s²)^{1/4}`, homogeneous of degree 1 under `δ_λ`.
pub fn koranyi_gauge(p: &HPoint) -> GaugeValue {
    let z2: f64 = p.z.iter().map(|v| v * v).sum();
    GaugeValue((z2 * z2 + p.s * p.s).powf(0.25))
}

/// Gauge quasi-distance `‖p⁻¹ q‖_K`; vanishes iff `p = q`.
pub fn koranyi_dist(p: &HPoint, q: &HPoint) -> Result<GaugeValue> {
    Ok(koranyi_gauge(&group_mul(&group_inv(p), q)?))
}

/// Point reached after time `r` along the horizontal segment from `start`
/// with constant frame coefficients `xi`:
/// `(z + r·ξ, s + r·(z ·σ ξ))`.
pub fn horizontal_segment(start: &HPoint, xi: &HVelocity, r: f64) -> Result<HPoint> {
    if start.z.len() != xi.xi.len() {
        return Err(CoreError::DimensionMismatch(start.z.len(), xi.xi.len()));
    }
    let z: Vec<f64> = start.z.iter().zip(&xi.xi).map(|(a, b)| a + r * b).collect();
    let s = start.s + r * sigma_form(&start.z, &xi.xi)?;
    Ok(HPoint { z, s })
}
