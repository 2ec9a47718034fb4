//! Sampled complex fields on rectangular grids over `H^d` coordinates.
//!
//! A field lives on a periodic box `[−L, L)` per axis and carries one of
//! three representations:
//!
//! * `Physical` — values of `ψ(z, s)` on the nodes,
//! * `Partial` — values of the partial Fourier transform
//!   `ψ̃(z, α) = (1/2π) ∫ e^{−iαs} ψ(z, s) ds`,
//! * `Spectral` — values of `ψ̂(η, α)`, the additional z-Fourier transform
//!   with kernel `e^{−iη·z}/(2π)^{2d}`.
//!
//! Discrete transforms carry the continuum weights so that inversion
//! formulas and Parseval identities hold verbatim with the cell weights
//! reported by [`Field::cell_weight`]. Frequency axes are stored in FFT
//! order (`0, 1, .., N/2−1, −N/2, .., −1` times the spacing).

use std::io::{Read as IoRead, Write as IoWrite};
use std::sync::atomic::{AtomicU64, Ordering};

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::hgroup::HPoint;
use crate::{CoreError, Result};

/// One grid axis: domain `[−L, L)` sampled at `N` nodes with spacing `2L/N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSpec {
    pub l: f64,
    pub n: usize,
}

impl AxisSpec {
    pub fn spacing(&self) -> f64 {
        2.0 * self.l / self.n as f64
    }

    /// Node coordinate `−L + j·h`.
    pub fn node(&self, j: usize) -> f64 {
        -self.l + j as f64 * self.spacing()
    }

    /// Frequency spacing `π/L` of the dual axis.
    pub fn freq_spacing(&self) -> f64 {
        std::f64::consts::PI / self.l
    }

    /// Signed frequency of FFT bin `k`.
    pub fn freq(&self, k: usize) -> f64 {
        let ks = if k < self.n / 2 { k as i64 } else { k as i64 - self.n as i64 };
        ks as f64 * self.freq_spacing()
    }
}

/// Representation tag of a sampled field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Repr {
    /// `ψ(z, s)` on physical nodes.
    Physical,
    /// `ψ̃(z, α)`: Fourier transform in the center variable only.
    Partial,
    /// `ψ̂(η, α)`: full Fourier transform.
    Spectral,
}

/// Rectangular grid over `(z, s)`: `2d` spatial axes plus the center axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub z_axes: Vec<AxisSpec>,
    pub s_axis: AxisSpec,
}

impl GridSpec {
    pub fn new(z_axes: Vec<AxisSpec>, s_axis: AxisSpec) -> Result<Self> {
        if z_axes.is_empty() || z_axes.len() % 2 != 0 {
            return Err(CoreError::InvalidGrid(format!(
                "need 2d spatial axes with d >= 1, got {}",
                z_axes.len()
            )));
        }
        for ax in z_axes.iter() {
            if ax.n < 4 || !ax.n.is_power_of_two() {
                return Err(CoreError::InvalidGrid(format!(
                    "spatial axis N = {} must be a power of two >= 4",
                    ax.n
                )));
            }
            if !(ax.l > 0.0) {
                return Err(CoreError::InvalidGrid("axis extent must be positive".into()));
            }
        }
        if s_axis.n < 4 {
            return Err(CoreError::InvalidGrid(format!("s-axis N = {} must be >= 4", s_axis.n)));
        }
        if !(s_axis.l > 0.0) {
            return Err(CoreError::InvalidGrid("s-axis extent must be positive".into()));
        }
        Ok(Self { z_axes, s_axis })
    }

    /// Isotropic helper: all `2d` spatial axes share `(lz, nz)`.
    pub fn isotropic(d: usize, lz: f64, nz: usize, ls: f64, ns: usize) -> Result<Self> {
        Self::new(vec![AxisSpec { l: lz, n: nz }; 2 * d], AxisSpec { l: ls, n: ns })
    }

    pub fn dim(&self) -> usize {
        self.z_axes.len() / 2
    }

    /// Number of nodes in one `α`-slice (product over spatial axes).
    pub fn nz_total(&self) -> usize {
        self.z_axes.iter().map(|a| a.n).product()
    }

    pub fn total_len(&self) -> usize {
        self.nz_total() * self.s_axis.n
    }

    /// Spatial flat index: axis 0 fastest.
    pub fn z_index(&self, iz: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (m, &i) in iz.iter().enumerate() {
            idx += i * stride;
            stride *= self.z_axes[m].n;
        }
        idx
    }

    /// Spatial node coordinates of flat index `iz`.
    pub fn z_coords(&self, mut iz: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.z_axes.len());
        for ax in &self.z_axes {
            out.push(ax.node(iz % ax.n));
            iz /= ax.n;
        }
        out
    }
}

/// A modulated Gaussian packet: concrete Schwartz-class initial datum.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPacketSpec {
    pub center: HPoint,
    /// Per-axis widths, `2d` spatial then one for `s`.
    pub widths: Vec<f64>,
    /// Plane-wave modulation wavevector, `2d` spatial components then `s`.
    pub momentum: Vec<f64>,
}

/// A complex field sampled on a [`GridSpec`], with the `s`/`α` axis slowest
/// so each `α`-slice is a contiguous block of `nz_total` values.
#[derive(Debug)]
pub struct Field {
    pub grid: GridSpec,
    pub values: Vec<Complex64>,
    pub repr: Repr,
    clipped: AtomicU64,
    evals: AtomicU64,
}

impl Clone for Field {
    fn clone(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.clone(),
            repr: self.repr,
            clipped: AtomicU64::new(self.clipped.load(Ordering::Relaxed)),
            evals: AtomicU64::new(self.evals.load(Ordering::Relaxed)),
        }
    }
}

fn fft_axis(values: &mut [Complex64], axis_len: usize, axis_stride: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(axis_len)
    } else {
        planner.plan_fft_forward(axis_len)
    };
    let total = values.len();
    let lines = total / axis_len;
    let mut buf = vec![Complex64::default(); axis_len];
    for line in 0..lines {
        // decompose line index into (outer, inner) around the axis
        let inner = line % axis_stride;
        let outer = line / axis_stride;
        let base = outer * axis_stride * axis_len + inner;
        for j in 0..axis_len {
            buf[j] = values[base + j * axis_stride];
        }
        fft.process(&mut buf);
        for j in 0..axis_len {
            values[base + j * axis_stride] = buf[j];
        }
    }
}

impl Field {
    pub fn zeros(grid: GridSpec, repr: Repr) -> Self {
        let len = grid.total_len();
        Self {
            grid,
            values: vec![Complex64::default(); len],
            repr,
            clipped: AtomicU64::new(0),
            evals: AtomicU64::new(0),
        }
    }

    pub fn from_values(grid: GridSpec, repr: Repr, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.total_len() {
            return Err(CoreError::InvalidGrid(format!(
                "value count {} does not match grid product {}",
                values.len(),
                grid.total_len()
            )));
        }
        Ok(Self {
            grid,
            values,
            repr,
            clipped: AtomicU64::new(0),
            evals: AtomicU64::new(0),
        })
    }

    pub fn require_repr(&self, expected: Repr) -> Result<()> {
        if self.repr != expected {
            return Err(CoreError::WrongRepresentation { expected, found: self.repr });
        }
        Ok(())
    }

    /// Integration weight of one cell in the current representation.
    pub fn cell_weight(&self) -> f64 {
        let hz: f64 = self.grid.z_axes.iter().map(|a| a.spacing()).product();
        let hs = self.grid.s_axis.spacing();
        let dz_freq: f64 = self.grid.z_axes.iter().map(|a| a.freq_spacing()).product();
        let da = self.grid.s_axis.freq_spacing();
        let two_pi = 2.0 * std::f64::consts::PI;
        match self.repr {
            Repr::Physical => hz * hs,
            Repr::Partial => two_pi * hz * da,
            Repr::Spectral => two_pi.powi(self.grid.z_axes.len() as i32 + 1) * dz_freq * da,
        }
    }

    /// Discrete `L²` norm with cell-volume weights.
    pub fn l2_norm(&self) -> f64 {
        let sum: f64 = self.values.iter().map(|v| v.norm_sqr()).sum();
        (sum * self.cell_weight()).sqrt()
    }

    pub fn inner(&self, other: &Field) -> Complex64 {
        let sum: Complex64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.conj() * b)
            .sum();
        sum * self.cell_weight()
    }

    /// Max modulus over grid nodes (sampled sup-norm surrogate).
    pub fn sup_norm_sampled(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Relative `L²` distance `‖a − b‖ / ‖b‖`.
    pub fn rel_l2_distance(&self, other: &Field) -> f64 {
        assert_eq!(self.repr, other.repr, "distance requires matching representations");
        let num: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        let den: f64 = other.values.iter().map(|v| v.norm_sqr()).sum();
        if den == 0.0 {
            (num * self.cell_weight()).sqrt()
        } else {
            (num / den).sqrt()
        }
    }

    /// Fraction of `L²` mass in the outermost node shell (physical repr).
    pub fn boundary_mass(&self) -> f64 {
        assert_eq!(self.repr, Repr::Physical);
        let nz = self.grid.nz_total();
        let naxes = self.grid.z_axes.len();
        let mut boundary = 0.0;
        let mut total = 0.0;
        for (idx, v) in self.values.iter().enumerate() {
            let m = v.norm_sqr();
            total += m;
            let is = idx / nz;
            let mut iz = idx % nz;
            let mut edge = is == 0 || is == self.grid.s_axis.n - 1;
            for m_ax in 0..naxes {
                let n = self.grid.z_axes[m_ax].n;
                let i = iz % n;
                iz /= n;
                edge = edge || i == 0 || i == n - 1;
            }
            if edge {
                boundary += m;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            boundary / total
        }
    }

    /// `α`-slice as a contiguous block.
    pub fn slice(&self, k: usize) -> &[Complex64] {
        let nz = self.grid.nz_total();
        &self.values[k * nz..(k + 1) * nz]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [Complex64] {
        let nz = self.grid.nz_total();
        &mut self.values[k * nz..(k + 1) * nz]
    }

    // ---- transforms -------------------------------------------------------

    /// Partial Fourier transform in the center variable,
    /// `ψ̃(z, α) = (1/2π) ∫ e^{−iαs} ψ(z, s) ds`.
    pub fn partial_ft(&self) -> Result<Field> {
        self.require_repr(Repr::Physical)?;
        let mut out = self.clone();
        let nz = self.grid.nz_total();
        let ns = self.grid.s_axis.n;
        fft_axis(&mut out.values, ns, nz, false);
        let w = self.grid.s_axis.spacing() / (2.0 * std::f64::consts::PI);
        for k in 0..ns {
            let sign = if k % 2 == 0 { w } else { -w };
            for v in out.slice_mut(k) {
                *v *= sign;
            }
        }
        out.repr = Repr::Partial;
        Ok(out)
    }

    /// Inverse of [`Field::partial_ft`]: `ψ(z, s) = ∫ e^{iαs} ψ̃(z, α) dα`.
    pub fn partial_ift(&self) -> Result<Field> {
        self.require_repr(Repr::Partial)?;
        let mut out = self.clone();
        let nz = self.grid.nz_total();
        let ns = self.grid.s_axis.n;
        let da = self.grid.s_axis.freq_spacing();
        for k in 0..ns {
            let sign = if k % 2 == 0 { da } else { -da };
            for v in out.slice_mut(k) {
                *v *= sign;
            }
        }
        fft_axis(&mut out.values, ns, nz, true);
        out.repr = Repr::Physical;
        Ok(out)
    }

    /// Spatial Fourier transform per `α`-slice,
    /// `ψ̂(η, α) = (1/(2π)^{2d}) ∫ e^{−iη·z} ψ̃(z, α) d^{2d}z`.
    pub fn fft_z(&self) -> Result<Field> {
        self.require_repr(Repr::Partial)?;
        let mut out = self.clone();
        let mut stride = 1;
        for ax in self.grid.z_axes.clone() {
            fft_axis(&mut out.values, ax.n, stride, false);
            stride *= ax.n;
        }
        let naxes = self.grid.z_axes.len();
        let hz: f64 = self.grid.z_axes.iter().map(|a| a.spacing()).product();
        let w = hz / (2.0 * std::f64::consts::PI).powi(naxes as i32);
        let nz = self.grid.nz_total();
        for idx in 0..out.values.len() {
            let mut iz = idx % nz;
            let mut parity = 0usize;
            for ax in &self.grid.z_axes {
                parity += iz % ax.n;
                iz /= ax.n;
            }
            out.values[idx] *= if parity % 2 == 0 { w } else { -w };
        }
        out.repr = Repr::Spectral;
        Ok(out)
    }

    /// Inverse of [`Field::fft_z`]: `ψ̃(z, α) = ∫ e^{iη·z} ψ̂(η, α) d^{2d}η`.
    pub fn ifft_z(&self) -> Result<Field> {
        self.require_repr(Repr::Spectral)?;
        let mut out = self.clone();
        let deta: f64 = self.grid.z_axes.iter().map(|a| a.freq_spacing()).product();
        let nz = self.grid.nz_total();
        for idx in 0..out.values.len() {
            let mut iz = idx % nz;
            let mut parity = 0usize;
            for ax in &self.grid.z_axes {
                parity += iz % ax.n;
                iz /= ax.n;
            }
            out.values[idx] *= if parity % 2 == 0 { deta } else { -deta };
        }
        let mut stride = 1;
        for ax in self.grid.z_axes.clone() {
            fft_axis(&mut out.values, ax.n, stride, true);
            stride *= ax.n;
        }
        out.repr = Repr::Partial;
        Ok(out)
    }

    pub fn to_physical(&self) -> Result<Field> {
        match self.repr {
            Repr::Physical => Ok(self.clone()),
            Repr::Partial => self.partial_ift(),
            Repr::Spectral => self.ifft_z()?.partial_ift(),
        }
    }

    pub fn to_partial(&self) -> Result<Field> {
        match self.repr {
            Repr::Physical => self.partial_ft(),
            Repr::Partial => Ok(self.clone()),
            Repr::Spectral => self.ifft_z(),
        }
    }

    // ---- interpolation ----------------------------------------------------

    /// Separable Catmull–Rom interpolation at an off-grid point
    /// `(z.., s)` in physical representation. Points outside the grid hull
    /// evaluate to 0 and are counted (decaying-field convention).
    pub fn interpolate(&self, point: &[f64]) -> Complex64 {
        debug_assert_eq!(self.repr, Repr::Physical);
        debug_assert_eq!(point.len(), self.grid.z_axes.len() + 1);
        self.evals.fetch_add(1, Ordering::Relaxed);
        let naxes = self.grid.z_axes.len() + 1;
        let mut base = [0isize; 8];
        let mut wts = [[0.0f64; 4]; 8];
        for m in 0..naxes {
            let ax = if m < naxes - 1 { self.grid.z_axes[m] } else { self.grid.s_axis };
            let h = ax.spacing();
            let x = (point[m] + ax.l) / h;
            if x < 0.0 || x > (ax.n - 1) as f64 {
                self.clipped.fetch_add(1, Ordering::Relaxed);
                return Complex64::default();
            }
            let i0 = x.floor() as isize;
            let u = x - i0 as f64;
            base[m] = i0 - 1;
            wts[m] = catmull_rom_weights(u);
        }
        // tensor-product accumulation over the 4^naxes stencil
        let mut acc = Complex64::default();
        let count = 1usize << (2 * naxes); // 4^naxes
        let nz = self.grid.nz_total();
        'outer: for c in 0..count {
            let mut w = 1.0;
            let mut idx_z = 0usize;
            let mut stride = 1usize;
            let mut cc = c;
            for m in 0..naxes {
                let t = cc & 3;
                cc >>= 2;
                let ax_n = if m < naxes - 1 { self.grid.z_axes[m].n } else { self.grid.s_axis.n };
                let i = base[m] + t as isize;
                if i < 0 || i >= ax_n as isize {
                    continue 'outer; // zero-extension tap
                }
                w *= wts[m][t as usize];
                if m < naxes - 1 {
                    idx_z += (i as usize) * stride;
                    stride *= ax_n;
                } else {
                    idx_z += (i as usize) * nz;
                }
            }
            acc += self.values[idx_z] * w;
        }
        acc
    }

    /// Catmull–Rom interpolation of one `α`-slice at an off-grid spatial
    /// point (partial representation).
    pub fn interpolate_slice(&self, k: usize, z: &[f64]) -> Complex64 {
        debug_assert_eq!(self.repr, Repr::Partial);
        interpolate_plane(self.slice(k), &self.grid.z_axes, z, &self.clipped, &self.evals)
    }

    /// Band-limited (FFT zero-padding) upsampling of every spatial axis by
    /// `factor`; the `s`/`α` axis is untouched. Original node values are
    /// reproduced exactly; between nodes the result is the trigonometric
    /// interpolant, so cubic reads on the upsampled field carry far less
    /// error than on the original.
    pub fn upsample_z(&self, factor: usize) -> Result<Field> {
        if self.repr == Repr::Spectral {
            return Err(CoreError::WrongRepresentation {
                expected: Repr::Partial,
                found: Repr::Spectral,
            });
        }
        if factor == 0 || !factor.is_power_of_two() {
            return Err(CoreError::InvalidParameter(format!(
                "upsample factor must be a power of two, got {factor}"
            )));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let mut dims: Vec<usize> = self.grid.z_axes.iter().map(|a| a.n).collect();
        dims.push(self.grid.s_axis.n);
        let mut values = self.values.clone();
        for axis in 0..self.grid.z_axes.len() {
            values = upsample_axis(&values, &dims, axis, factor);
            dims[axis] *= factor;
        }
        let z_axes: Vec<AxisSpec> = self
            .grid
            .z_axes
            .iter()
            .map(|a| AxisSpec { l: a.l, n: a.n * factor })
            .collect();
        let grid = GridSpec::new(z_axes, self.grid.s_axis)?;
        let mut out = Field::zeros(grid, self.repr);
        out.values = values;
        Ok(out)
    }

    /// `(clipped, total)` counts of out-of-hull interpolation evaluations.
    pub fn clip_stats(&self) -> (u64, u64) {
        (self.clipped.load(Ordering::Relaxed), self.evals.load(Ordering::Relaxed))
    }

    pub fn reset_clip_stats(&self) {
        self.clipped.store(0, Ordering::Relaxed);
        self.evals.store(0, Ordering::Relaxed);
    }

    // ---- initial data ------------------------------------------------------

    /// Build an `L²`-normalized modulated Gaussian packet.
    ///
    /// Rejects packets closer than 6 widths to any boundary or narrower
    /// than the grid spacing.
    pub fn make_packet(spec: &GaussianPacketSpec, grid: &GridSpec) -> Result<Field> {
        let naxes = grid.z_axes.len() + 1;
        if spec.widths.len() != naxes || spec.momentum.len() != naxes {
            return Err(CoreError::InvalidParameter(format!(
                "packet needs {naxes} widths/momenta"
            )));
        }
        if spec.center.z.len() != grid.z_axes.len() {
            return Err(CoreError::DimensionMismatch(spec.center.z.len(), grid.z_axes.len()));
        }
        for m in 0..naxes {
            let (ax, c) = if m < naxes - 1 {
                (grid.z_axes[m], spec.center.z[m])
            } else {
                (grid.s_axis, spec.center.s)
            };
            let w = spec.widths[m];
            if !(w > 0.0) {
                return Err(CoreError::InvalidParameter("packet width must be positive".into()));
            }
            let margin = ax.l - c.abs();
            if margin < 6.0 * w {
                return Err(CoreError::SupportViolation(format!(
                    "axis {m}: margin {margin:.3} < 6 widths ({:.3})",
                    6.0 * w
                )));
            }
            if w < ax.spacing() {
                return Err(CoreError::SupportViolation(format!(
                    "axis {m}: width {w:.3} under grid spacing {:.3}",
                    ax.spacing()
                )));
            }
        }
        let mut f = Field::zeros(grid.clone(), Repr::Physical);
        let nz = grid.nz_total();
        for idx in 0..f.values.len() {
            let is = idx / nz;
            let z = grid.z_coords(idx % nz);
            let s = grid.s_axis.node(is);
            let mut expo = 0.0;
            let mut phase = 0.0;
            for m in 0..naxes - 1 {
                let u = z[m] - spec.center.z[m];
                expo -= u * u / (2.0 * spec.widths[m] * spec.widths[m]);
                phase += spec.momentum[m] * z[m];
            }
            let us = s - spec.center.s;
            expo -= us * us / (2.0 * spec.widths[naxes - 1] * spec.widths[naxes - 1]);
            phase += spec.momentum[naxes - 1] * s;
            f.values[idx] = Complex64::from_polar(expo.exp(), phase);
        }
        let norm = f.l2_norm();
        let inv = 1.0 / norm;
        for v in &mut f.values {
            *v *= inv;
        }
        Ok(f)
    }

    /// Seeded random packet-class field: random spectral coefficients with
    /// Gaussian decay, returned in physical representation and normalized.
    pub fn random_packet_class(grid: &GridSpec, seed: u64, decay: f64) -> Field {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let mut f = Field::zeros(grid.clone(), Repr::Spectral);
        let nz = grid.nz_total();
        for idx in 0..f.values.len() {
            let k = idx / nz;
            let mut iz = idx % nz;
            let mut q2 = 0.0;
            for ax in &grid.z_axes {
                let e = ax.freq(iz % ax.n);
                iz /= ax.n;
                q2 += e * e;
            }
            let a = grid.s_axis.freq(k);
            q2 += a * a;
            let amp = (-q2 / (2.0 * decay * decay)).exp();
            let re: f64 = rng.gen_range(-1.0..1.0);
            let im: f64 = rng.gen_range(-1.0..1.0);
            f.values[idx] = Complex64::new(re, im) * amp;
        }
        let mut phys = f.to_physical().expect("spectral -> physical");
        // Gaussian envelope keeps the sample localized away from the box
        // boundary (width L/5 per axis)
        for idx in 0..phys.values.len() {
            let k = idx / nz;
            let z = grid.z_coords(idx % nz);
            let s = grid.s_axis.node(k);
            let mut expo = 0.0;
            for (m, ax) in grid.z_axes.iter().enumerate() {
                let w = ax.l / 5.0;
                expo -= z[m] * z[m] / (2.0 * w * w);
            }
            let ws = grid.s_axis.l / 5.0;
            expo -= s * s / (2.0 * ws * ws);
            phys.values[idx] *= expo.exp();
        }
        let inv = 1.0 / phys.l2_norm();
        for v in &mut phys.values {
            *v *= inv;
        }
        phys
    }

    // ---- I/O ---------------------------------------------------------------

    /// Binary dump: magic `HFLD1`, dims, extents, repr tag, little-endian
    /// raw re/im `f64` pairs.
    pub fn dump<W: IoWrite>(&self, mut w: W) -> Result<()> {
        w.write_all(b"HFLD1")?;
        let naxes = self.grid.z_axes.len() + 1;
        w.write_all(&(naxes as u32).to_le_bytes())?;
        for ax in self.grid.z_axes.iter().chain(std::iter::once(&self.grid.s_axis)) {
            w.write_all(&ax.l.to_le_bytes())?;
            w.write_all(&(ax.n as u64).to_le_bytes())?;
        }
        let tag: u8 = match self.repr {
            Repr::Physical => 0,
            Repr::Partial => 1,
            Repr::Spectral => 2,
        };
        w.write_all(&[tag])?;
        for v in &self.values {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load<R: IoRead>(mut r: R) -> Result<Field> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != b"HFLD1" {
            return Err(CoreError::MalformedDump("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let naxes = u32::from_le_bytes(b4) as usize;
        if naxes < 3 || naxes % 2 == 0 {
            return Err(CoreError::MalformedDump(format!("bad axis count {naxes}")));
        }
        let mut axes = Vec::with_capacity(naxes);
        for _ in 0..naxes {
            let mut b8 = [0u8; 8];
            r.read_exact(&mut b8)?;
            let l = f64::from_le_bytes(b8);
            r.read_exact(&mut b8)?;
            let n = u64::from_le_bytes(b8) as usize;
            axes.push(AxisSpec { l, n });
        }
        let s_axis = axes.pop().unwrap();
        let grid = GridSpec::new(axes, s_axis).map_err(|e| CoreError::MalformedDump(e.to_string()))?;
        let mut b1 = [0u8; 1];
        r.read_exact(&mut b1)?;
        let repr = match b1[0] {
            0 => Repr::Physical,
            1 => Repr::Partial,
            2 => Repr::Spectral,
            t => return Err(CoreError::MalformedDump(format!("bad repr tag {t}"))),
        };
        let mut values = Vec::with_capacity(grid.total_len());
        for _ in 0..grid.total_len() {
            let mut b8 = [0u8; 8];
            r.read_exact(&mut b8)?;
            let re = f64::from_le_bytes(b8);
            r.read_exact(&mut b8)?;
            let im = f64::from_le_bytes(b8);
            values.push(Complex64::new(re, im));
        }
        Field::from_values(grid, repr, values)
    }

    /// CSV export of the axis-aligned plane `(axis_a, axis_b)` with the
    /// remaining axes fixed at the given node indices. Axis index
    /// `2d` refers to the `s`/`α` axis.
    pub fn export_csv_slice<W: IoWrite>(
        &self,
        axis_a: usize,
        axis_b: usize,
        fixed: &[usize],
        mut w: W,
    ) -> Result<()> {
        let naxes = self.grid.z_axes.len() + 1;
        if axis_a >= naxes || axis_b >= naxes || axis_a == axis_b {
            return Err(CoreError::InvalidParameter("bad slice axes".into()));
        }
        if fixed.len() != naxes - 2 {
            return Err(CoreError::InvalidParameter(format!(
                "need {} fixed indices",
                naxes - 2
            )));
        }
        let ax = |m: usize| -> AxisSpec {
            if m < naxes - 1 { self.grid.z_axes[m] } else { self.grid.s_axis }
        };
        writeln!(w, "coord_a,coord_b,re,im")?;
        let nz = self.grid.nz_total();
        let mut indices = vec![0usize; naxes];
        let mut fi = 0;
        for m in 0..naxes {
            if m != axis_a && m != axis_b {
                indices[m] = fixed[fi];
                fi += 1;
            }
        }
        for ia in 0..ax(axis_a).n {
            for ib in 0..ax(axis_b).n {
                indices[axis_a] = ia;
                indices[axis_b] = ib;
                let idx = self.grid.z_index(&indices[..naxes - 1]) + indices[naxes - 1] * nz;
                let v = self.values[idx];
                writeln!(w, "{},{},{:e},{:e}", ax(axis_a).node(ia), ax(axis_b).node(ib), v.re, v.im)?;
            }
        }
        Ok(())
    }
}

/// Zero-pad the FFT spectrum of one axis (Nyquist bin split symmetrically)
/// and transform back: exact trigonometric upsampling by `factor`.
fn upsample_axis(values: &[Complex64], dims: &[usize], axis: usize, factor: usize) -> Vec<Complex64> {
    let n = dims[axis];
    let nf = n * factor;
    let stride: usize = dims[..axis].iter().product();
    let mut spec = values.to_vec();
    fft_axis(&mut spec, n, stride, false);
    let mut out = vec![Complex64::default(); values.len() * factor];
    let lines = values.len() / n;
    let half = n / 2;
    for line in 0..lines {
        let inner = line % stride;
        let outer = line / stride;
        let base_in = outer * stride * n + inner;
        let base_out = outer * stride * nf + inner;
        for k in 0..n {
            let v = spec[base_in + k * stride];
            if k < half {
                out[base_out + k * stride] = v;
            } else if k > half {
                out[base_out + (k + nf - n) * stride] = v;
            } else {
                // split the Nyquist bin so real inputs stay real
                out[base_out + half * stride] = v * 0.5;
                out[base_out + (nf - half) * stride] = v * 0.5;
            }
        }
    }
    fft_axis(&mut out, nf, stride, true);
    let inv = 1.0 / n as f64;
    for v in &mut out {
        *v *= inv;
    }
    out
}

fn catmull_rom_weights(u: f64) -> [f64; 4] {
    let u2 = u * u;
    let u3 = u2 * u;
    [
        0.5 * (-u3 + 2.0 * u2 - u),
        0.5 * (3.0 * u3 - 5.0 * u2 + 2.0),
        0.5 * (-3.0 * u3 + 4.0 * u2 + u),
        0.5 * (u3 - u2),
    ]
}

/// Catmull–Rom interpolation on a flat spatial block (one `α`-slice).
pub(crate) fn interpolate_plane(
    slice: &[Complex64],
    axes: &[AxisSpec],
    point: &[f64],
    clipped: &AtomicU64,
    evals: &AtomicU64,
) -> Complex64 {
    evals.fetch_add(1, Ordering::Relaxed);
    let naxes = axes.len();
    let mut base = [0isize; 6];
    let mut wts = [[0.0f64; 4]; 6];
    for m in 0..naxes {
        let h = axes[m].spacing();
        let x = (point[m] + axes[m].l) / h;
        if x < 0.0 || x > (axes[m].n - 1) as f64 {
            clipped.fetch_add(1, Ordering::Relaxed);
            return Complex64::default();
        }
        let i0 = x.floor() as isize;
        base[m] = i0 - 1;
        wts[m] = catmull_rom_weights(x - i0 as f64);
    }
    let mut acc = Complex64::default();
    let count = 1usize << (2 * naxes);
    'outer: for c in 0..count {
        let mut w = 1.0;
        let mut idx = 0usize;
        let mut stride = 1usize;
        let mut cc = c;
        for m in 0..naxes {
            let t = cc & 3;
            cc >>= 2;
            let i = base[m] + t as isize;
            if i < 0 || i >= axes[m].n as isize {
                continue 'outer;
            }
            w *= wts[m][t as usize];
            idx += (i as usize) * stride;
            stride *= axes[m].n;
        }
        acc += slice[idx] * w;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small_grid() -> GridSpec {
        GridSpec::isotropic(1, 5.0, 16, 5.0, 16).unwrap()
    }

    fn centered_packet(grid: &GridSpec) -> Field {
        let spec = GaussianPacketSpec {
            center: HPoint::identity(1),
            widths: vec![0.7, 0.7, 0.7],
            momentum: vec![0.0, 0.0, 0.0],
        };
        Field::make_packet(&spec, grid).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::isotropic(1, 5.0, 3, 5.0, 8).is_err());
        assert!(GridSpec::isotropic(1, 5.0, 12, 5.0, 8).is_err()); // not power of two
        assert!(GridSpec::isotropic(1, -1.0, 16, 5.0, 8).is_err());
    }

    #[test]
    fn packet_normalized_and_margins() {
        let grid = small_grid();
        let f = centered_packet(&grid);
        assert_abs_diff_eq!(f.l2_norm(), 1.0, epsilon = 1e-8);
        // margin violation
        let bad = GaussianPacketSpec {
            center: HPoint::identity(1),
            widths: vec![1.0, 1.0, 1.0],
            momentum: vec![0.0; 3],
        };
        assert!(Field::make_packet(&bad, &grid).is_err());
        // width below grid spacing
        let thin = GaussianPacketSpec {
            center: HPoint::identity(1),
            widths: vec![0.1, 0.7, 0.7],
            momentum: vec![0.0; 3],
        };
        assert!(Field::make_packet(&thin, &grid).is_err());
    }

    #[test]
    fn transform_round_trips() {
        let grid = small_grid();
        let f = Field::random_packet_class(&grid, 7, 2.0);
        let back = f.partial_ft().unwrap().partial_ift().unwrap();
        assert!(f.rel_l2_distance(&back) < 1e-10);
        let g = f.partial_ft().unwrap();
        let back2 = g.fft_z().unwrap().ifft_z().unwrap();
        assert!(g.rel_l2_distance(&back2) < 1e-10);
    }

    #[test]
    fn parseval_across_representations() {
        let grid = small_grid();
        let f = Field::random_packet_class(&grid, 11, 2.0);
        let n0 = f.l2_norm();
        let n1 = f.partial_ft().unwrap().l2_norm();
        let n2 = f.partial_ft().unwrap().fft_z().unwrap().l2_norm();
        assert_abs_diff_eq!(n0, n1, epsilon = 1e-10);
        assert_abs_diff_eq!(n0, n2, epsilon = 1e-10);
    }

    #[test]
    fn gaussian_transform_pair() {
        // packet separable in s -> partial transform Gaussian in alpha,
        // width 1/w_s, amplitude profile |psi~|(alpha) = C exp(-alpha^2 w_s^2/2)
        let grid = small_grid();
        let f = centered_packet(&grid);
        let g = f.partial_ft().unwrap();
        // compare ratio at two alpha nodes against the analytic ratio
        let nz = grid.nz_total();
        let mid = grid.z_index(&[8, 8]);
        let a1 = grid.s_axis.freq(1);
        let a2 = grid.s_axis.freq(2);
        let v1 = g.values[nz + mid].norm();
        let v2 = g.values[2 * nz + mid].norm();
        let w = 0.7f64;
        let expect = ((a2 * a2 - a1 * a1) * w * w / 2.0).exp();
        assert_abs_diff_eq!(v1 / v2, expect, epsilon = 1e-6);
    }

    #[test]
    fn spectral_peak_tracks_momentum() {
        let grid = small_grid();
        let spec = GaussianPacketSpec {
            center: HPoint::identity(1),
            widths: vec![0.7, 0.7, 0.7],
            momentum: vec![grid.z_axes[0].freq_spacing() * 3.0, 0.0, 0.0],
        };
        let f = Field::make_packet(&spec, &grid).unwrap();
        let s = f.partial_ft().unwrap().fft_z().unwrap();
        let (imax, _) = s
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
            .unwrap();
        let iz = imax % grid.nz_total();
        let kx = iz % 16;
        assert_eq!(kx, 3);
    }

    #[test]
    fn interpolation_exact_on_nodes_and_linears() {
        let grid = small_grid();
        let f = centered_packet(&grid);
        let p = [grid.z_axes[0].node(5), grid.z_axes[1].node(9), grid.s_axis.node(4)];
        let idx = grid.z_index(&[5, 9]) + 4 * grid.nz_total();
        let v = f.interpolate(&p);
        assert_abs_diff_eq!((v - f.values[idx]).norm(), 0.0, epsilon = 1e-14);

        // linear field reproduced exactly off-node (interior)
        let mut lin = Field::zeros(grid.clone(), Repr::Physical);
        for idx in 0..lin.values.len() {
            let z = grid.z_coords(idx % grid.nz_total());
            let s = grid.s_axis.node(idx / grid.nz_total());
            lin.values[idx] = Complex64::new(0.3 * z[0] - 0.2 * z[1] + 0.1 * s, 0.0);
        }
        let q = [0.123, -0.456, 0.789];
        let expect = 0.3 * q[0] - 0.2 * q[1] + 0.1 * q[2];
        assert_abs_diff_eq!(lin.interpolate(&q).re, expect, epsilon = 1e-12);
    }

    #[test]
    fn interpolation_third_order() {
        // halving h cuts the off-node error by ~8x on an analytic Gaussian
        let mut errs = Vec::new();
        for n in [32usize, 64] {
            let grid = GridSpec::isotropic(1, 5.0, n, 5.0, 8).unwrap();
            let mut f = Field::zeros(grid.clone(), Repr::Physical);
            for idx in 0..f.values.len() {
                let z = grid.z_coords(idx % grid.nz_total());
                f.values[idx] = Complex64::new((-(z[0] * z[0] + z[1] * z[1]) / 2.0).exp(), 0.0);
            }
            let mut max_err = 0.0f64;
            for i in 0..40 {
                let x = -2.0 + 0.1 * i as f64 + 0.037;
                let y = 0.51;
                let v = f.interpolate(&[x, y, grid.s_axis.node(4)]);
                let truth = (-(x * x + y * y) / 2.0).exp();
                max_err = max_err.max((v.re - truth).abs());
            }
            errs.push(max_err);
        }
        let rate = errs[0] / errs[1];
        assert!(rate > 5.0, "refinement rate {rate} below 3rd order expectation");
    }

    #[test]
    fn out_of_hull_clipped() {
        let grid = small_grid();
        let f = centered_packet(&grid);
        f.reset_clip_stats();
        let v = f.interpolate(&[100.0, 0.0, 0.0]);
        assert_eq!(v, Complex64::default());
        let (c, e) = f.clip_stats();
        assert_eq!((c, e), (1, 1));
    }

    #[test]
    fn upsample_preserves_nodes_and_sharpens_reads() {
        let grid = small_grid();
        let f = centered_packet(&grid);
        let up = f.upsample_z(4).unwrap();
        assert_eq!(up.grid.z_axes[0].n, 64);
        assert_eq!(up.grid.s_axis.n, 16);
        // original nodes reproduced exactly (every 4th upsampled node)
        let nz = grid.nz_total();
        let nzu = up.grid.nz_total();
        for k in 0..grid.s_axis.n {
            for iy in 0..16 {
                for jx in 0..16 {
                    let a = f.values[k * nz + iy * 16 + jx];
                    let b = up.values[k * nzu + (4 * iy) * 64 + 4 * jx];
                    assert!((a - b).norm() < 1e-12);
                }
            }
        }
        // off-node cubic reads get much closer to the analytic packet
        let norm = f.values[8 * nz + 8 * 16 + 8].re; // scale at the center
        let p: [f64; 3] = [0.31, -0.22, 0.0];
        let exact = norm * (-(p[0] * p[0] + p[1] * p[1]) / (2.0 * 0.49)).exp();
        let coarse = (f.interpolate(&p) - exact).norm();
        let fine = (up.interpolate(&p) - exact).norm();
        assert!(fine < coarse / 10.0, "coarse {coarse} fine {fine}");
    }

    #[test]
    fn dump_load_round_trip() {
        let grid = small_grid();
        let f = centered_packet(&grid);
        let mut buf = Vec::new();
        f.dump(&mut buf).unwrap();
        let g = Field::load(&buf[..]).unwrap();
        assert_eq!(f.repr, g.repr);
        assert_eq!(f.values, g.values);
        assert_eq!(f.grid, g.grid);
    }

    #[test]
    fn csv_slice_export() {
        let grid = small_grid();
        let f = centered_packet(&grid);
        let mut buf = Vec::new();
        f.export_csv_slice(0, 1, &[8], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("coord_a,coord_b,re,im"));
        assert_eq!(text.lines().count(), 1 + 16 * 16);
    }

    #[test]
    fn zero_field_norms() {
        let grid = small_grid();
        let f = Field::zeros(grid, Repr::Physical);
        assert_eq!(f.l2_norm(), 0.0);
        assert_eq!(f.sup_norm_sampled(), 0.0);
    }
}
