//! Monte-Carlo machinery: Brownian motion with Lévy area, Feynman–Kac
//! estimates, jump processes and their geodesic interpolation, and
//! weak-convergence / tightness diagnostics.
//!
//! All estimators draw through [`RngStream`]: the same `(seed, stream)`
//! reproduces bit-identical paths and estimates, and per-path derived
//! streams keep results independent of evaluation order. Reductions use
//! pairwise summation so the estimate is deterministic.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_distr::StandardNormal;

use crate::field::{Field, Repr};
use crate::hgroup::{horizontal_segment, koranyi_dist, sigma_form, HPoint, HVelocity};
use crate::{CoreError, Result};

/// Reproducible RNG handle: same `(seed, stream)` gives bit-identical
/// draws; distinct streams are statistically independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Derived stream for a parallel sub-task.
    pub fn derive(&self, offset: u64) -> Self {
        Self { seed: self.seed, stream: self.stream.wrapping_add(offset) }
    }

    pub fn rng(&self) -> rand_chacha::ChaCha12Rng {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Planar (2d-component) Brownian path with its Lévy-area accumulator.
///
/// `b[k]` is the Brownian position at `times[k]`; `levy[k]` is the Itô
/// (left-endpoint) accumulator of `Σⱼ ∫ B²ⱼ dB¹ⱼ − B¹ⱼ dB²ⱼ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BMPath {
    pub times: Vec<f64>,
    pub b: Vec<Vec<f64>>,
    pub levy: Vec<f64>,
}

impl BMPath {
    pub fn endpoint(&self) -> (&[f64], f64) {
        (self.b.last().unwrap(), *self.levy.last().unwrap())
    }

    /// Midpoint-rule re-accumulation of the area from the stored path
    /// (the Stratonovich-style variant; on our divergence-free form it
    /// converges to the same limit as the Itô accumulator).
    pub fn levy_midpoint(&self) -> f64 {
        let mut acc = 0.0;
        for k in 1..self.b.len() {
            let prev = &self.b[k - 1];
            let cur = &self.b[k];
            let mid: Vec<f64> = prev.iter().zip(cur).map(|(a, b)| 0.5 * (a + b)).collect();
            let db: Vec<f64> = cur.iter().zip(prev).map(|(a, b)| a - b).collect();
            acc += sigma_form(&mid, &db).expect("matched dims");
        }
        acc
    }
}

/// Euler–Maruyama Brownian path on `R^{2d}` with the Itô left-endpoint
/// Lévy-area accumulator `Sₖ₊₁ = Sₖ + σ(Bₖ, ΔBₖ)`.
pub fn sample_bm_levy(d: usize, t: f64, steps: usize, stream: RngStream) -> Result<BMPath> {
    if d == 0 || steps == 0 {
        return Err(CoreError::InvalidParameter(format!(
            "need d >= 1 and steps >= 1, got d = {d}, steps = {steps}"
        )));
    }
    if t < 0.0 {
        return Err(CoreError::NegativeTau(t));
    }
    let mut rng = stream.rng();
    let h = t / steps as f64;
    let sqh = h.sqrt();
    let mut b = vec![0.0f64; 2 * d];
    let mut s = 0.0f64;
    let mut times = Vec::with_capacity(steps + 1);
    let mut bs = Vec::with_capacity(steps + 1);
    let mut levy = Vec::with_capacity(steps + 1);
    times.push(0.0);
    bs.push(b.clone());
    levy.push(0.0);
    let mut db = vec![0.0f64; 2 * d];
    for k in 1..=steps {
        for v in db.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *v = sqh * g;
        }
        s += sigma_form(&b, &db).expect("matched dims");
        for (bi, dv) in b.iter_mut().zip(&db) {
            *bi += dv;
        }
        times.push(k as f64 * h);
        bs.push(b.clone());
        levy.push(s);
    }
    Ok(BMPath { times, b: bs, levy })
}

/// Endpoint `(B(t), S(t))` of a Brownian path with Lévy area, without
/// storing the trajectory. Draws in the same order as [`sample_bm_levy`],
/// so the endpoint is bit-identical to that of the stored path.
pub fn bm_levy_endpoint(
    d: usize,
    t: f64,
    steps: usize,
    stream: RngStream,
) -> Result<(Vec<f64>, f64)> {
    if d == 0 || steps == 0 {
        return Err(CoreError::InvalidParameter(format!(
            "need d >= 1 and steps >= 1, got d = {d}, steps = {steps}"
        )));
    }
    if t < 0.0 {
        return Err(CoreError::NegativeTau(t));
    }
    let mut rng = stream.rng();
    let sqh = (t / steps as f64).sqrt();
    let mut b = vec![0.0f64; 2 * d];
    let mut s = 0.0f64;
    let mut db = vec![0.0f64; 2 * d];
    for _ in 0..steps {
        for v in db.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *v = sqh * g;
        }
        s += sigma_form(&b, &db).expect("matched dims");
        for (bi, dv) in b.iter_mut().zip(&db) {
            *bi += dv;
        }
    }
    Ok((b, s))
}

/// Deterministic pairwise reduction (balanced-tree summation).
fn pairwise_sum(v: &mut Vec<Complex64>) -> Complex64 {
    while v.len() > 1 {
        let half = v.len() / 2;
        for i in 0..half {
            let hi = v[v.len() - 1 - i];
            v[i] += hi;
        }
        v.truncate(v.len() - half);
    }
    v.first().copied().unwrap_or_default()
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: Complex64,
    pub se: f64,
    pub paths: usize,
}

/// Feynman–Kac estimate of the heat flow at the point `p = (z, s)`:
///
/// ```text
/// u(t, z, s) = E[ ψ₀(z + B(t), s + σ(z, B(t)) + S(t)) ]
/// ```
///
/// with `S` the Lévy area. `f0` must be physical; off-grid reads use the
/// cubic interpolant (zero outside the hull).
pub fn fk_estimate(
    f0: &Field,
    p: &HPoint,
    t: f64,
    paths: usize,
    steps: usize,
    stream: RngStream,
) -> Result<McEstimate> {
    f0.require_repr(Repr::Physical)?;
    let d = f0.grid.dim();
    if p.dim() != d {
        return Err(CoreError::DimensionMismatch(p.z.len(), 2 * d));
    }
    if paths == 0 {
        return Err(CoreError::InvalidParameter("need paths >= 1".into()));
    }
    let mut coords = Vec::with_capacity(2 * d + 1);
    if t == 0.0 {
        coords.extend_from_slice(&p.z);
        coords.push(p.s);
        return Ok(McEstimate { mean: f0.interpolate(&coords), se: 0.0, paths });
    }
    let mut samples = Vec::with_capacity(paths);
    for i in 0..paths {
        let (bt, area) = bm_levy_endpoint(d, t, steps, stream.derive(i as u64))?;
        coords.clear();
        for (zi, bi) in p.z.iter().zip(&bt) {
            coords.push(zi + bi);
        }
        coords.push(p.s + sigma_form(&p.z, &bt).expect("matched dims") + area);
        samples.push(f0.interpolate(&coords));
    }
    let mean = pairwise_sum(&mut samples.clone()) / paths as f64;
    let var: f64 = samples.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>()
        / (paths.saturating_sub(1).max(1)) as f64;
    Ok(McEstimate { mean, se: (var / paths as f64).sqrt(), paths })
}

/// Sample-path kind: càdlàg jump chain or its continuous interpolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathKind {
    Jump,
    Interpolated,
}

/// A sampled `H^d`-valued path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub kind: PathKind,
    pub times: Vec<f64>,
    pub points: Vec<HPoint>,
}

impl PathSample {
    /// Largest gauge distance between consecutive samples.
    pub fn max_consecutive_gap(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| koranyi_dist(&w[0], &w[1]).expect("matched dims").0)
            .fold(0.0, f64::max)
    }
}

/// Jump chain `Yₖ₊₁ = (zₖ + √(1/n) ζ, sₖ + σ(zₖ, √(1/n) ζ))` with
/// `ζ ~ N(0, I)`, sampled at the grid times `k/n` up to the horizon.
pub fn sample_jump_path(
    start: &HPoint,
    n: usize,
    horizon: f64,
    stream: RngStream,
) -> Result<PathSample> {
    if n == 0 {
        return Err(CoreError::InvalidParameter("need n >= 1".into()));
    }
    if horizon < 0.0 {
        return Err(CoreError::NegativeTau(horizon));
    }
    let steps = (horizon * n as f64).floor() as usize;
    let mut rng = stream.rng();
    let sq = (1.0 / n as f64).sqrt();
    let mut times = Vec::with_capacity(steps + 1);
    let mut points = Vec::with_capacity(steps + 1);
    times.push(0.0);
    points.push(start.clone());
    let mut cur = start.clone();
    let mut dz = vec![0.0f64; start.z.len()];
    for k in 1..=steps {
        for v in dz.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *v = sq * g;
        }
        let s = cur.s + sigma_form(&cur.z, &dz).expect("matched dims");
        let z: Vec<f64> = cur.z.iter().zip(&dz).map(|(a, b)| a + b).collect();
        cur = HPoint { z, s };
        times.push(k as f64 / n as f64);
        points.push(cur.clone());
    }
    Ok(PathSample { kind: PathKind::Jump, times, points })
}

/// Continuous piecewise-horizontal interpolation of a jump chain: each
/// increment is realized by the horizontal segment with the jump's own
/// frame velocity `ξₖ₊₁ = (zₖ₊₁ − zₖ)·n`, subdivided into `refine`
/// sub-samples. At the original grid times the result equals the chain
/// exactly.
pub fn interpolate_geodesic(jump: &PathSample, refine: usize) -> Result<PathSample> {
    if jump.kind != PathKind::Jump {
        return Err(CoreError::InvalidParameter(
            "geodesic interpolation expects a jump path".into(),
        ));
    }
    if refine == 0 {
        return Err(CoreError::InvalidParameter("need refine >= 1".into()));
    }
    let mut times = Vec::with_capacity(jump.points.len() * refine);
    let mut points = Vec::with_capacity(jump.points.len() * refine);
    times.push(jump.times[0]);
    points.push(jump.points[0].clone());
    for k in 1..jump.points.len() {
        let t0 = jump.times[k - 1];
        let dt = jump.times[k] - t0;
        let a = &jump.points[k - 1];
        let xi = HVelocity {
            xi: jump.points[k]
                .z
                .iter()
                .zip(&a.z)
                .map(|(b, c)| (b - c) / dt)
                .collect(),
        };
        for j in 1..=refine {
            let r = dt * j as f64 / refine as f64;
            times.push(t0 + r);
            if j == refine {
                // land on the chain point exactly (same formula; avoids
                // accumulating rounding in the comparison at grid times)
                points.push(jump.points[k].clone());
            } else {
                points.push(horizontal_segment(a, &xi, r)?);
            }
        }
    }
    Ok(PathSample { kind: PathKind::Interpolated, times, points })
}

/// `w_T(γ, δ) = max` gauge distance over sampled pairs with `|tᵢ − tⱼ| < δ`
/// and both times in `[0, T]`.
pub fn modulus_of_continuity(path: &PathSample, horizon: f64, delta: f64) -> Result<f64> {
    if delta <= 0.0 {
        return Err(CoreError::InvalidParameter(format!(
            "modulus of continuity needs delta > 0, got {delta}"
        )));
    }
    let m = path.times.len();
    let mut w = 0.0f64;
    for i in 0..m {
        if path.times[i] > horizon {
            break;
        }
        for j in (i + 1)..m {
            if path.times[j] > horizon || path.times[j] - path.times[i] >= delta {
                break;
            }
            w = w.max(koranyi_dist(&path.points[i], &path.points[j])?.0);
        }
    }
    Ok(w)
}

/// One row of the tightness table: `P̂(w_T(Zₙ, δ) ≥ ε)` with its binomial
/// standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TightnessRow {
    pub n: usize,
    pub delta: f64,
    pub eps: f64,
    pub p_hat: f64,
    pub se: f64,
}

/// Empirical tightness table over `(n, δ)`. For each `n` the same sampled
/// paths are reused across all `δ`, so the estimates are exactly
/// nonincreasing in `δ` path-by-path.
pub fn tightness_diagnostic(
    n_list: &[usize],
    delta_list: &[f64],
    eps: f64,
    horizon: f64,
    d: usize,
    paths: usize,
    stream: RngStream,
) -> Result<Vec<TightnessRow>> {
    if paths == 0 || eps <= 0.0 {
        return Err(CoreError::InvalidParameter(
            "tightness diagnostic needs paths >= 1 and eps > 0".into(),
        ));
    }
    let start = HPoint::identity(d);
    let mut rows = Vec::with_capacity(n_list.len() * delta_list.len());
    for (ni, &n) in n_list.iter().enumerate() {
        // per-path moduli, one column per delta
        let mut exceed = vec![0usize; delta_list.len()];
        for i in 0..paths {
            let jump = sample_jump_path(
                &start,
                n,
                horizon,
                stream.derive((ni * paths + i) as u64),
            )?;
            let z = interpolate_geodesic(&jump, 4)?;
            for (j, &delta) in delta_list.iter().enumerate() {
                if modulus_of_continuity(&z, horizon, delta)? >= eps {
                    exceed[j] += 1;
                }
            }
        }
        for (j, &delta) in delta_list.iter().enumerate() {
            let p_hat = exceed[j] as f64 / paths as f64;
            rows.push(TightnessRow {
                n,
                delta,
                eps,
                p_hat,
                se: (p_hat * (1.0 - p_hat) / paths as f64).sqrt(),
            });
        }
    }
    Ok(rows)
}

/// An isotropic Gaussian bump on `H^d`, used as a weak-convergence test
/// function.
#[derive(Debug, Clone, PartialEq)]
pub struct TestBump {
    pub center: HPoint,
    pub width: f64,
}

impl TestBump {
    pub fn eval(&self, p: &HPoint) -> f64 {
        let mut q = 0.0;
        for (a, b) in p.z.iter().zip(&self.center.z) {
            q += (a - b) * (a - b);
        }
        q += (p.s - self.center.s) * (p.s - self.center.s);
        (-q / (2.0 * self.width * self.width)).exp()
    }
}

/// The standard panel: 5 centers × 2 widths.
pub fn standard_test_bumps(d: usize) -> Vec<TestBump> {
    let mut centers = vec![HPoint::identity(d)];
    let mut c = HPoint::identity(d);
    c.z[0] = 0.6;
    centers.push(c);
    let mut c = HPoint::identity(d);
    c.z[d] = -0.6;
    centers.push(c);
    let mut c = HPoint::identity(d);
    c.s = 0.5;
    centers.push(c);
    let mut c = HPoint::identity(d);
    c.z[0] = -0.4;
    c.s = -0.4;
    centers.push(c);
    let mut bumps = Vec::with_capacity(10);
    for w in [0.8, 1.2] {
        for c in &centers {
            bumps.push(TestBump { center: c.clone(), width: w });
        }
    }
    bumps
}

/// One row of the weak-convergence table: MC means of a test bump over
/// the interpolated walk `Zₙ(t)` and the jump chain `Xₙ(t)`, against a
/// reference value of the heat flow `V(t)f(start)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakConvergenceRow {
    pub bump: usize,
    pub mean_z: f64,
    pub mean_x: f64,
    pub se: f64,
    pub reference: f64,
    pub err_z: f64,
    pub err_x: f64,
}

/// Weak-convergence statistics `|E f(Zₙ(t)) − V(t)f|` and the same for
/// `Xₙ`. Reference values are supplied by the caller (heat-oracle
/// evolution of each bump, evaluated at the start point), so the same
/// stream can be reused across `n` for common-random-number coupling.
pub fn weak_convergence_stat(
    n: usize,
    t: f64,
    bumps: &[TestBump],
    start: &HPoint,
    reference: &[f64],
    paths: usize,
    stream: RngStream,
) -> Result<Vec<WeakConvergenceRow>> {
    if bumps.len() != reference.len() {
        return Err(CoreError::DimensionMismatch(bumps.len(), reference.len()));
    }
    if paths == 0 {
        return Err(CoreError::InvalidParameter("need paths >= 1".into()));
    }
    let mut sums_z = vec![Vec::with_capacity(paths); bumps.len()];
    let mut sums_x = vec![Vec::with_capacity(paths); bumps.len()];
    for i in 0..paths {
        let jump = sample_jump_path(start, n, t, stream.derive(i as u64))?;
        let z = interpolate_geodesic(&jump, 2)?;
        let end_x = jump.points.last().unwrap();
        let end_z = z.points.last().unwrap();
        for (j, b) in bumps.iter().enumerate() {
            sums_x[j].push(Complex64::new(b.eval(end_x), 0.0));
            sums_z[j].push(Complex64::new(b.eval(end_z), 0.0));
        }
    }
    let mut rows = Vec::with_capacity(bumps.len());
    for j in 0..bumps.len() {
        let mean_z = pairwise_sum(&mut sums_z[j].clone()).re / paths as f64;
        let mean_x = pairwise_sum(&mut sums_x[j].clone()).re / paths as f64;
        let var: f64 = sums_z[j]
            .iter()
            .map(|v| (v.re - mean_z) * (v.re - mean_z))
            .sum::<f64>()
            / (paths - 1).max(1) as f64;
        rows.push(WeakConvergenceRow {
            bump: j,
            mean_z,
            mean_x,
            se: (var / paths as f64).sqrt(),
            reference: reference[j],
            err_z: (mean_z - reference[j]).abs(),
            err_x: (mean_x - reference[j]).abs(),
        });
    }
    Ok(rows)
}

/// Heat-flow reference values `V(t)f(start)` for each bump, via the exact
/// per-slice magnetic evolution (`d = 1` only) of the bump sampled on the
/// given grid.
pub fn bump_reference_values(
    bumps: &[TestBump],
    start: &HPoint,
    t: f64,
    grid: &crate::field::GridSpec,
) -> Result<Vec<f64>> {
    let nz = grid.nz_total();
    let mut coords = Vec::with_capacity(2 * grid.dim() + 1);
    coords.extend_from_slice(&start.z);
    coords.push(start.s);
    let mut out = Vec::with_capacity(bumps.len());
    for b in bumps {
        let mut f = Field::zeros(grid.clone(), Repr::Physical);
        for idx in 0..f.values.len() {
            let z = grid.z_coords(idx % nz);
            let s = grid.s_axis.node(idx / nz);
            let p = HPoint { z, s };
            f.values[idx] = Complex64::new(b.eval(&p), 0.0);
        }
        let evolved = crate::magnetic::oracle_evolve(&f, t, crate::magnetic::KernelFlavor::Heat)?;
        out.push(evolved.interpolate(&coords).re);
    }
    Ok(out)
}

/// CSV dump of a sampled path: `time, z..., s`.
pub fn export_path_csv(path: &PathSample, w: &mut impl std::io::Write) -> Result<()> {
    let d = path.points[0].dim();
    write!(w, "time")?;
    for i in 0..d {
        write!(w, ",x{}", i + 1)?;
    }
    for i in 0..d {
        write!(w, ",y{}", i + 1)?;
    }
    writeln!(w, ",s")?;
    for (t, p) in path.times.iter().zip(&path.points) {
        write!(w, "{t:.12e}")?;
        for v in &p.z {
            write!(w, ",{v:.12e}")?;
        }
        writeln!(w, ",{:.12e}", p.s)?;
    }
    Ok(())
}

/// CSV dump of a tightness table: `n, delta, eps, p_hat, se`.
pub fn export_tightness_csv(rows: &[TightnessRow], w: &mut impl std::io::Write) -> Result<()> {
    writeln!(w, "n,delta,eps,p_hat,se")?;
    for r in rows {
        writeln!(
            w,
            "{},{:.6e},{:.6e},{:.6e},{:.6e}",
            r.n, r.delta, r.eps, r.p_hat, r.se
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{AxisSpec, GaussianPacketSpec, GridSpec};

    fn collect_areas(d: usize, t: f64, steps: usize, paths: usize, seed: u64) -> Vec<f64> {
        (0..paths)
            .map(|i| {
                *sample_bm_levy(d, t, steps, RngStream::new(seed, i as u64))
                    .unwrap()
                    .levy
                    .last()
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn levy_area_mean_zero() {
        let t = 1.0;
        let paths = 30_000;
        let areas = collect_areas(1, t, 200, paths, 7);
        let mean: f64 = areas.iter().sum::<f64>() / paths as f64;
        // Var[S(t)] = t², so SE of the mean is t/√paths
        let se = t / (paths as f64).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean} vs 3se {}", 3.0 * se);
    }

    #[test]
    fn levy_area_variance_and_char_function() {
        // d = 1: Var[S(t)] = t² and E[e^{iλS(t)}] = sech(λt); the discrete
        // left-endpoint accumulator has an O(1/steps) bias, included in the
        // budget below
        let t = 0.8;
        let paths = 30_000;
        let steps = 400;
        let areas = collect_areas(1, t, steps, paths, 11);
        let var: f64 = areas.iter().map(|a| a * a).sum::<f64>() / paths as f64;
        let se_var = var * (8.0 / paths as f64).sqrt();
        let bias = t * t / steps as f64;
        assert!(
            (var - t * t).abs() < 3.0 * se_var + bias,
            "var {var} vs t² {}",
            t * t
        );
        for lam in [0.5, 1.0, 2.0] {
            let (mut cr, mut ci) = (0.0f64, 0.0f64);
            for a in &areas {
                cr += (lam * a).cos();
                ci += (lam * a).sin();
            }
            cr /= paths as f64;
            ci /= paths as f64;
            let exact = 1.0 / (lam * t).cosh();
            let se = 1.0 / (paths as f64).sqrt();
            assert!(
                (cr - exact).abs() < 3.0 * se + 2.0 * lam * bias,
                "char re {cr} vs sech {exact} at lambda {lam}"
            );
            assert!(ci.abs() < 3.0 * se, "char im {ci} at lambda {lam}");
        }
    }

    #[test]
    fn levy_area_scaling_law() {
        // S(t) equals t·S(1) in law: two-sample Kolmogorov–Smirnov
        let paths = 20_000;
        let t = 0.25;
        let mut a: Vec<f64> = collect_areas(1, t, 200, paths, 13);
        let mut b: Vec<f64> = collect_areas(1, 1.0, 200, paths, 14)
            .into_iter()
            .map(|v| v * t)
            .collect();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut ks = 0.0f64;
        let (mut i, mut j) = (0usize, 0usize);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            ks = ks.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        assert!(ks <= 0.02, "KS distance {ks}");
    }

    #[test]
    fn ito_and_midpoint_accumulators_coincide() {
        // the Itô/Stratonovich correction is ∝ σ(ΔB, ΔB)/2 per step, and σ
        // is antisymmetric — so the two accumulators agree pathwise to
        // rounding, not just in the h → 0 limit
        for steps in [64usize, 256] {
            for i in 0..500 {
                let p = sample_bm_levy(1, 1.0, steps, RngStream::new(21, i as u64)).unwrap();
                let gap = (p.levy.last().unwrap() - p.levy_midpoint()).abs();
                assert!(gap < 1e-12, "gap {gap} at steps {steps}");
            }
        }
    }

    #[test]
    fn reproducibility_is_bit_exact() {
        let a = sample_bm_levy(2, 0.7, 100, RngStream::new(5, 9)).unwrap();
        let b = sample_bm_levy(2, 0.7, 100, RngStream::new(5, 9)).unwrap();
        assert_eq!(a, b);
        let c = sample_bm_levy(2, 0.7, 100, RngStream::new(5, 10)).unwrap();
        assert_ne!(a, c);
        let j1 = sample_jump_path(&HPoint::identity(1), 8, 1.0, RngStream::new(3, 4)).unwrap();
        let j2 = sample_jump_path(&HPoint::identity(1), 8, 1.0, RngStream::new(3, 4)).unwrap();
        assert_eq!(j1, j2);
    }

    #[test]
    fn jump_chain_marginals() {
        // one step from the identity: s stays exactly 0 since σ(0, ζ) = 0
        for i in 0..50 {
            let p = sample_jump_path(&HPoint::identity(2), 4, 0.25, RngStream::new(31, i))
                .unwrap();
            assert_eq!(p.points.len(), 2);
            assert_eq!(p.points[1].s, 0.0);
        }
        // z-marginal at t = k/n is exactly N(0, (k/n)·I): moment check
        let paths = 20_000;
        let n = 8;
        let horizon = 1.0;
        let (mut m1, mut m2) = (0.0f64, 0.0f64);
        for i in 0..paths {
            let p = sample_jump_path(&HPoint::identity(1), n, horizon, RngStream::new(37, i))
                .unwrap();
            let z = &p.points.last().unwrap().z;
            m1 += z[0];
            m2 += z[0] * z[0];
        }
        m1 /= paths as f64;
        m2 /= paths as f64;
        let var = horizon;
        assert!(m1.abs() < 3.0 * (var / paths as f64).sqrt(), "mean {m1}");
        let se_var = var * (2.0f64 / paths as f64).sqrt();
        assert!((m2 - var).abs() < 3.0 * se_var, "second moment {m2}");
    }

    #[test]
    fn geodesic_interpolation_properties() {
        let jump = sample_jump_path(&HPoint::identity(1), 4, 1.0, RngStream::new(41, 0)).unwrap();
        let z = interpolate_geodesic(&jump, 4).unwrap();
        assert_eq!(z.kind, PathKind::Interpolated);
        // grid times: exact equality with the chain
        for (k, p) in jump.points.iter().enumerate() {
            assert_eq!(&z.points[k * 4], p);
        }
        // mid-segment s-value follows the horizontal-segment formula
        let a = &jump.points[1];
        let b = &jump.points[2];
        let dt = jump.times[2] - jump.times[1];
        let xi: Vec<f64> = b.z.iter().zip(&a.z).map(|(u, v)| (u - v) / dt).collect();
        let mid = &z.points[4 + 2]; // halfway through segment 2
        let r = dt / 2.0;
        assert!((mid.s - (a.s + r * sigma_form(&a.z, &xi).unwrap())).abs() < 1e-12);
        // continuity: max consecutive gap shrinks under refinement
        let gaps: Vec<f64> = [2usize, 8, 32]
            .iter()
            .map(|&r| interpolate_geodesic(&jump, r).unwrap().max_consecutive_gap())
            .collect();
        assert!(gaps[1] < gaps[0] && gaps[2] < gaps[1], "gaps {gaps:?}");
        assert!(interpolate_geodesic(&z, 2).is_err());
    }

    #[test]
    fn modulus_of_continuity_properties() {
        let constant = PathSample {
            kind: PathKind::Jump,
            times: vec![0.0, 0.5, 1.0],
            points: vec![HPoint::identity(1); 3],
        };
        assert_eq!(modulus_of_continuity(&constant, 1.0, 0.3).unwrap(), 0.0);
        let jump = sample_jump_path(&HPoint::identity(1), 16, 1.0, RngStream::new(43, 1)).unwrap();
        // δ ≥ T: full-path diameter
        let w_full = modulus_of_continuity(&jump, 1.0, 2.0).unwrap();
        let mut diam = 0.0f64;
        for i in 0..jump.points.len() {
            for j in (i + 1)..jump.points.len() {
                diam = diam.max(koranyi_dist(&jump.points[i], &jump.points[j]).unwrap().0);
            }
        }
        assert!((w_full - diam).abs() < 1e-12);
        // monotone nondecreasing in δ
        let mut prev = 0.0;
        for delta in [0.1, 0.2, 0.4, 0.8] {
            let w = modulus_of_continuity(&jump, 1.0, delta).unwrap();
            assert!(w >= prev);
            prev = w;
        }
        assert!(modulus_of_continuity(&jump, 1.0, 0.0).is_err());
    }

    #[test]
    fn tightness_table_trends() {
        let rows = tightness_diagnostic(
            &[4, 16],
            &[0.2, 0.1, 0.05],
            1.2,
            1.0,
            1,
            300,
            RngStream::new(47, 0),
        )
        .unwrap();
        assert_eq!(rows.len(), 6);
        // shared paths make P̂ exactly nonincreasing as δ decreases
        for c in rows.chunks(3) {
            assert!(c[0].p_hat >= c[1].p_hat && c[1].p_hat >= c[2].p_hat);
        }
        // ε larger than any path diameter → P̂ = 0
        let huge = tightness_diagnostic(&[4], &[0.5], 50.0, 1.0, 1, 50, RngStream::new(47, 1))
            .unwrap();
        assert_eq!(huge[0].p_hat, 0.0);
    }

    fn fk_grid_and_packet() -> (GridSpec, Field) {
        let grid = GridSpec::new(
            vec![AxisSpec { l: 6.0, n: 32 }; 2],
            AxisSpec { l: 12.0, n: 32 },
        )
        .unwrap();
        let f = Field::make_packet(
            &GaussianPacketSpec {
                center: HPoint::identity(1),
                widths: vec![0.9, 0.9, 1.8],
                momentum: vec![0.0; 3],
            },
            &grid,
        )
        .unwrap();
        (grid, f)
    }

    #[test]
    fn fk_estimate_t_zero_is_exact() {
        let (_, f) = fk_grid_and_packet();
        let p = HPoint::new(vec![0.3, -0.2], 0.4).unwrap();
        let est = fk_estimate(&f, &p, 0.0, 100, 10, RngStream::new(51, 0)).unwrap();
        assert_eq!(est.se, 0.0);
        let direct = f.interpolate(&[0.3, -0.2, 0.4]);
        assert_eq!(est.mean, direct);
    }

    #[test]
    fn fk_estimate_matches_heat_oracle_at_probes() {
        let (_, f) = fk_grid_and_packet();
        let t = 0.25;
        let oracle =
            crate::magnetic::oracle_evolve(&f, t, crate::magnetic::KernelFlavor::Heat).unwrap();
        let paths = 4_000;
        for (i, probe) in [
            HPoint::identity(1),
            HPoint::new(vec![0.5, 0.0], 0.0).unwrap(),
            HPoint::new(vec![-0.3, 0.4], 0.6).unwrap(),
        ]
        .iter()
        .enumerate()
        {
            let est =
                fk_estimate(&f, probe, t, paths, 250, RngStream::new(53, i as u64)).unwrap();
            let mut coords = probe.z.clone();
            coords.push(probe.s);
            let truth = oracle.interpolate(&coords);
            let gap = (est.mean - truth).norm();
            // 3·SE plus interpolation/time-discretization budget
            assert!(
                gap < 3.0 * est.se + 2e-3,
                "probe {i}: gap {gap}, se {}",
                est.se
            );
        }
    }

    #[test]
    fn weak_convergence_decreases_in_n() {
        let grid = GridSpec::new(
            vec![AxisSpec { l: 6.0, n: 32 }; 2],
            AxisSpec { l: 12.0, n: 32 },
        )
        .unwrap();
        let bumps = standard_test_bumps(1);
        assert_eq!(bumps.len(), 10);
        let start = HPoint::identity(1);
        let t = 0.25;
        let reference = bump_reference_values(&bumps, &start, t, &grid).unwrap();
        let paths = 4_000;
        // common random numbers across n: same stream
        let stream = RngStream::new(59, 0);
        let rows4 = weak_convergence_stat(4, t, &bumps, &start, &reference, paths, stream)
            .unwrap();
        let rows64 = weak_convergence_stat(64, t, &bumps, &start, &reference, paths, stream)
            .unwrap();
        let worse: usize = rows4
            .iter()
            .zip(&rows64)
            .filter(|(a, b)| b.err_z > a.err_z + 2.0 * a.se)
            .count();
        assert!(worse <= 1, "n=64 worse than n=4 on {worse} bumps");
        let mean4: f64 = rows4.iter().map(|r| r.err_z).sum::<f64>() / 10.0;
        let mean64: f64 = rows64.iter().map(|r| r.err_z).sum::<f64>() / 10.0;
        assert!(mean64 < mean4, "mean errors: n=4 {mean4}, n=64 {mean64}");
        // at grid times (t multiple of 1/n) the chain and its interpolation
        // share endpoints, so the statistics coincide exactly
        for r in &rows4 {
            assert_eq!(r.mean_z, r.mean_x);
        }
    }

    #[test]
    fn far_bump_is_near_zero_on_both_sides() {
        let grid = GridSpec::new(
            vec![AxisSpec { l: 6.0, n: 32 }; 2],
            AxisSpec { l: 12.0, n: 32 },
        )
        .unwrap();
        let far = vec![TestBump {
            center: HPoint::new(vec![4.5, 0.0], 0.0).unwrap(),
            width: 0.5,
        }];
        let start = HPoint::identity(1);
        let reference = bump_reference_values(&far, &start, 0.25, &grid).unwrap();
        assert!(reference[0].abs() < 1e-6, "reference {}", reference[0]);
        let rows =
            weak_convergence_stat(8, 0.25, &far, &start, &reference, 500, RngStream::new(61, 0))
                .unwrap();
        assert!(rows[0].mean_z < 1e-4, "walk mean {}", rows[0].mean_z);
    }

    #[test]
    fn csv_exports() {
        let jump = sample_jump_path(&HPoint::identity(1), 4, 1.0, RngStream::new(67, 0)).unwrap();
        let mut buf = Vec::new();
        export_path_csv(&jump, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,x1,y1,s\n"));
        assert_eq!(text.lines().count(), 1 + jump.points.len());
        let rows = tightness_diagnostic(&[4], &[0.2], 1.0, 1.0, 1, 20, RngStream::new(67, 1))
            .unwrap();
        let mut buf = Vec::new();
        export_tightness_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("n,delta,eps,p_hat,se\n"));
    }
}
