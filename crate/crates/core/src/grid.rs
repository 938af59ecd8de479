//! Periodic grid on the torus `[0, L)^d` and spectral Fourier multipliers.
//!
//! Conventions:
//! - nodes are laid out row-major over the axes (axis 0 slowest);
//! - the frequency of FFT index `j` on an axis is `k = 2π m / L` with
//!   `m = j` for `j <= n/2` and `m = j - n` otherwise, so `m ∈ (-n/2, n/2]`;
//! - `-Δ` has symbol `|k|²` and the Sobolev weight `M = √(1 - Δ)` has symbol
//!   `√(1 + |k|²)`;
//! - the transform pair exposed by [`TorusGrid::forward_transform`] is
//!   `f̂(k) = w Σ_i f(x_i) e^{-ik·x_i}` and `f(x_i) = L^{-d} Σ_k f̂(k) e^{ik·x_i}`,
//!   which gives Parseval in the form `w Σ_i |f(x_i)|² = L^{-d} Σ_k |f̂(k)|²`.
//!
//! Kernels act on fields by `(Kf)(x_i) = w Σ_j K[i][j] f(x_j)`, so the
//! operator matrix of a kernel is `w K` and the identity operator has kernel `I / w`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::error::{HfbError, Result};
use crate::linalg::{c, CMat, RMat, C64};

#[derive(Clone)]
pub struct TorusGrid {
    dim: usize,
    length: f64,
    points: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid")
            .field("dim", &self.dim)
            .field("length", &self.length)
            .field("points", &self.points)
            .finish()
    }
}

impl PartialEq for TorusGrid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.length == other.length && self.points == other.points
    }
}

impl TorusGrid {
    /// `make_grid`: `d ∈ {1,2,3}`, `L > 0`, `n ≥ 4` a power of two.
    pub fn new(dim: usize, length: f64, points: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(HfbError::InvalidGrid(format!("dimension {dim} not in 1..=3")));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(HfbError::InvalidGrid(format!("side length {length} must be positive")));
        }
        if points < 4 || !points.is_power_of_two() {
            return Err(HfbError::InvalidGrid(format!(
                "points per axis {points} must be a power of two >= 4"
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            dim,
            length,
            points,
            forward: planner.plan_fft_forward(points),
            inverse: planner.plan_fft_inverse(points),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn points_per_axis(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.points as f64
    }

    /// Quadrature weight `w = h^d`.
    pub fn weight(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn volume(&self) -> f64 {
        self.length.powi(self.dim as i32)
    }

    /// Total node count `N = n^d`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn multi_index(&self, mut i: usize) -> [usize; 3] {
        let mut idx = [0; 3];
        for a in (0..self.dim).rev() {
            idx[a] = i % self.points;
            i /= self.points;
        }
        idx
    }

    pub fn linear_index(&self, idx: [usize; 3]) -> usize {
        (0..self.dim).fold(0, |acc, a| acc * self.points + idx[a] % self.points)
    }

    /// Node coordinates `x_i ∈ [0, L)^d`; unused axes are zero.
    pub fn node(&self, i: usize) -> [f64; 3] {
        let idx = self.multi_index(i);
        let h = self.spacing();
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = idx[a] as f64 * h;
        }
        x
    }

    /// Integer frequency `m ∈ (-n/2, n/2]` of FFT index `j`.
    pub fn mode(&self, j: usize) -> i64 {
        let n = self.points as i64;
        let j = j as i64;
        if j <= n / 2 {
            j
        } else {
            j - n
        }
    }

    pub fn modes(&self, i: usize) -> [i64; 3] {
        let idx = self.multi_index(i);
        let mut m = [0; 3];
        for a in 0..self.dim {
            m[a] = self.mode(idx[a]);
        }
        m
    }

    /// Wave vector `k = 2π m / L` of spectral index `i`.
    pub fn wavevector(&self, i: usize) -> [f64; 3] {
        let m = self.modes(i);
        let mut k = [0.0; 3];
        for a in 0..self.dim {
            k[a] = 2.0 * PI * m[a] as f64 / self.length;
        }
        k
    }

    pub fn k_squared(&self, i: usize) -> f64 {
        self.wavevector(i).iter().map(|k| k * k).sum()
    }

    /// Index of the node at `-x_i` (mod L).
    pub fn negated(&self, i: usize) -> usize {
        let idx = self.multi_index(i);
        let mut neg = [0; 3];
        for a in 0..self.dim {
            neg[a] = (self.points - idx[a]) % self.points;
        }
        self.linear_index(neg)
    }

    /// Index of the node at `x_i - x_j` (mod L).
    pub fn difference(&self, i: usize, j: usize) -> usize {
        let (a, b) = (self.multi_index(i), self.multi_index(j));
        let mut d = [0; 3];
        for ax in 0..self.dim {
            d[ax] = (a[ax] + self.points - b[ax]) % self.points;
        }
        self.linear_index(d)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(HfbError::SizeMismatch { expected: self.len(), actual: len });
        }
        Ok(())
    }

    fn transform_axes(&self, data: &mut [C64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.points;
        let mut line = vec![C64::default(); n];
        for axis in 0..self.dim {
            let stride = n.pow((self.dim - 1 - axis) as u32);
            let block = stride * n;
            for base in (0..data.len()).step_by(block) {
                for offset in 0..stride {
                    let start = base + offset;
                    for (j, z) in line.iter_mut().enumerate() {
                        *z = data[start + j * stride];
                    }
                    fft.process(&mut line);
                    for (j, z) in line.iter().enumerate() {
                        data[start + j * stride] = *z;
                    }
                }
            }
        }
    }

    /// Unnormalised DFT `Σ_i f_i e^{-ik·x_i}` in place.
    pub fn fft_in_place(&self, data: &mut [C64]) {
        self.transform_axes(data, &self.forward);
    }

    /// Normalised inverse DFT `N^{-1} Σ_k F_k e^{ik·x}` in place.
    pub fn ifft_in_place(&self, data: &mut [C64]) {
        self.transform_axes(data, &self.inverse);
        let scale = 1.0 / data.len() as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }

    /// `f̂(k) = w Σ_i f(x_i) e^{-ik·x_i}`.
    pub fn forward_transform(&self, f: &[C64]) -> Result<Vec<C64>> {
        self.check_len(f.len())?;
        let mut out = f.to_vec();
        self.fft_in_place(&mut out);
        let w = self.weight();
        out.iter_mut().for_each(|z| *z *= w);
        Ok(out)
    }

    /// `f(x_i) = L^{-d} Σ_k f̂(k) e^{ik·x_i}`.
    pub fn inverse_transform(&self, coeffs: &[C64]) -> Result<Vec<C64>> {
        self.check_len(coeffs.len())?;
        let mut out = coeffs.to_vec();
        self.ifft_in_place(&mut out);
        let scale = 1.0 / self.weight();
        out.iter_mut().for_each(|z| *z *= scale);
        Ok(out)
    }

    /// Weighted inner product `⟨f, g⟩ = w Σ_i conj(f_i) g_i`.
    pub fn inner(&self, f: &[C64], g: &[C64]) -> C64 {
        let s: C64 = f.iter().zip(g).map(|(a, b)| a.conj() * b).sum();
        s * self.weight()
    }

    pub fn norm(&self, f: &[C64]) -> f64 {
        self.inner(f, f).re.max(0.0).sqrt()
    }
}

/// Fourier multiplier `f ↦ F^{-1} (s · F f)` on a grid.
#[derive(Debug, Clone)]
pub struct MultiplierOperator {
    grid: TorusGrid,
    symbol: Vec<C64>,
}

impl MultiplierOperator {
    pub fn new(grid: &TorusGrid, symbol: Vec<C64>) -> Result<Self> {
        grid.check_len(symbol.len())?;
        Ok(Self { grid: grid.clone(), symbol })
    }

    pub fn from_fn(grid: &TorusGrid, f: impl Fn([f64; 3]) -> C64) -> Self {
        let symbol = (0..grid.len()).map(|i| f(grid.wavevector(i))).collect();
        Self { grid: grid.clone(), symbol }
    }

    pub fn identity(grid: &TorusGrid) -> Self {
        Self::from_fn(grid, |_| c(1.0, 0.0))
    }

    /// Laplacian `Δ`, symbol `-|k|²`.
    pub fn laplacian(grid: &TorusGrid) -> Self {
        Self::from_fn(grid, |k| c(-(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]), 0.0))
    }

    /// `M^s = (1 - Δ)^{s/2}`, symbol `(1 + |k|²)^{s/2}`.
    pub fn sobolev(grid: &TorusGrid, power: f64) -> Self {
        Self::from_fn(grid, |k| {
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            c((1.0 + k2).powf(0.5 * power), 0.0)
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn symbol(&self) -> &[C64] {
        &self.symbol
    }

    pub fn apply(&self, f: &[C64]) -> Result<Vec<C64>> {
        self.grid.check_len(f.len())?;
        let mut out = f.to_vec();
        self.grid.fft_in_place(&mut out);
        for (z, s) in out.iter_mut().zip(&self.symbol) {
            *z *= s;
        }
        self.grid.ifft_in_place(&mut out);
        Ok(out)
    }

    /// Multiplier with the product symbol.
    pub fn compose(&self, other: &MultiplierOperator) -> Result<Self> {
        if self.grid != other.grid {
            return Err(HfbError::InvalidArgument("multipliers live on different grids".into()));
        }
        let symbol = self.symbol.iter().zip(&other.symbol).map(|(a, b)| a * b).collect();
        Ok(Self { grid: self.grid.clone(), symbol })
    }

    /// Dense operator matrix (not a kernel: no `1/w`).
    pub fn to_matrix(&self) -> CMat {
        let n = self.grid.len();
        let mut m = CMat::zeros(n, n);
        let mut e = vec![C64::default(); n];
        for j in 0..n {
            e.iter_mut().for_each(|z| *z = C64::default());
            e[j] = c(1.0, 0.0);
            let col = self.apply(&e).expect("length checked");
            for (i, z) in col.into_iter().enumerate() {
                m[(i, j)] = z;
            }
        }
        m
    }
}

/// Closed-form fields sampled on grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldSpec {
    Constant { value: f64 },
    /// `a cos(2π m·x / L)`
    Cosine { amplitude: f64, mode: [i64; 3] },
    /// `a exp(-|x - c|² / (2 s²))`, periodized by image sums.
    Gaussian { amplitude: f64, width: f64, center: [f64; 3] },
    /// `a e^{2πi m·x / L}`
    PlaneWave { amplitude: f64, mode: [i64; 3] },
    /// Explicit node values.
    Table { values: Vec<C64> },
}

impl FieldSpec {
    pub const NAMES: [&'static str; 5] = ["constant", "cosine", "gaussian", "plane_wave", "table"];

    pub fn kind(&self) -> &'static str {
        match self {
            FieldSpec::Constant { .. } => "constant",
            FieldSpec::Cosine { .. } => "cosine",
            FieldSpec::Gaussian { .. } => "gaussian",
            FieldSpec::PlaneWave { .. } => "plane_wave",
            FieldSpec::Table { .. } => "table",
        }
    }

    pub fn check_name(name: &str) -> Result<()> {
        if Self::NAMES.contains(&name) {
            Ok(())
        } else {
            Err(HfbError::UnknownSpec(name.to_string()))
        }
    }
}

const IMAGE_TAIL: f64 = 1e-14;

/// `Σ_p exp(-(δ + pL)² / (2 s²))`, truncated once a shell adds less than
/// `1e-14` relative to the running sum.
pub fn periodized_gaussian_1d(delta: f64, width: f64, length: f64) -> f64 {
    let g = |x: f64| (-(x * x) / (2.0 * width * width)).exp();
    let mut sum = g(delta);
    let mut p = 1.0;
    loop {
        let shell = g(delta + p * length) + g(delta - p * length);
        sum += shell;
        if shell <= IMAGE_TAIL * sum || p > 1e6 {
            break;
        }
        p += 1.0;
    }
    sum
}

fn wrap(x: f64, length: f64) -> f64 {
    let y = x.rem_euclid(length);
    if y >= 0.5 * length {
        y - length
    } else {
        y
    }
}

/// `sample_field`
pub fn sample_field(grid: &TorusGrid, spec: &FieldSpec) -> Result<Vec<C64>> {
    let l = grid.length();
    let n = grid.len();
    let out = match spec {
        FieldSpec::Constant { value } => vec![c(*value, 0.0); n],
        FieldSpec::Cosine { amplitude, mode } => (0..n)
            .map(|i| c(amplitude * phase(grid, i, mode).cos(), 0.0))
            .collect(),
        FieldSpec::PlaneWave { amplitude, mode } => (0..n)
            .map(|i| C64::from_polar(*amplitude, phase(grid, i, mode)))
            .collect(),
        FieldSpec::Gaussian { amplitude, width, center } => {
            if !(*width > 0.0) {
                return Err(HfbError::InvalidArgument(format!("gaussian width {width}")));
            }
            (0..n)
                .map(|i| {
                    let x = grid.node(i);
                    let v = (0..grid.dim())
                        .map(|a| periodized_gaussian_1d(wrap(x[a] - center[a], l), *width, l))
                        .product::<f64>();
                    c(amplitude * v, 0.0)
                })
                .collect()
        }
        FieldSpec::Table { values } => {
            grid.check_len(values.len())?;
            values.clone()
        }
    };
    Ok(out)
}

fn phase(grid: &TorusGrid, i: usize, mode: &[i64; 3]) -> f64 {
    let x = grid.node(i);
    (0..grid.dim()).map(|a| 2.0 * PI * mode[a] as f64 * x[a] / grid.length()).sum()
}

/// Samples a field that must be real; imaginary parts above `1e-12` are rejected.
pub fn sample_real_field(grid: &TorusGrid, spec: &FieldSpec) -> Result<Vec<f64>> {
    let f = sample_field(grid, spec)?;
    let worst = f.iter().fold(0.0_f64, |m, z| m.max(z.im.abs()));
    if worst > 1e-12 {
        return Err(HfbError::NotReal(worst));
    }
    Ok(f.into_iter().map(|z| z.re).collect())
}

pub const ODD_PART_TOLERANCE: f64 = 1e-12;

/// Periodized pair potential on node displacements with its dense kernel.
#[derive(Debug, Clone)]
pub struct PairKernel {
    grid: TorusGrid,
    samples: Vec<f64>,
    spectrum: Vec<C64>,
    matrix: RMat,
}

impl PairKernel {
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// `V_pair[i][j] = v_per(x_i - x_j)`
    pub fn matrix(&self) -> &RMat {
        &self.matrix
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn is_zero(&self) -> bool {
        self.samples.iter().all(|&v| v == 0.0)
    }

    /// `(v * f)(x_i) = w Σ_j v_per(x_i - x_j) f(x_j)` by FFT.
    pub fn convolve(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.grid.check_len(f.len())?;
        let mut data: Vec<C64> = f.iter().map(|&x| c(x, 0.0)).collect();
        self.grid.fft_in_place(&mut data);
        for (z, s) in data.iter_mut().zip(&self.spectrum) {
            *z *= s;
        }
        self.grid.ifft_in_place(&mut data);
        let w = self.grid.weight();
        Ok(data.into_iter().map(|z| w * z.re).collect())
    }
}

/// `pair_kernel`: samples `v`, rejects a non-even potential, and builds the
/// symmetric circulant matrix `v_per(x_i - x_j)`.
pub fn pair_kernel(grid: &TorusGrid, spec: &FieldSpec) -> Result<PairKernel> {
    let samples = sample_real_field(grid, spec)?;
    let odd_part = (0..grid.len())
        .map(|i| 0.5 * (samples[i] - samples[grid.negated(i)]).abs())
        .fold(0.0, f64::max);
    if odd_part > ODD_PART_TOLERANCE {
        return Err(HfbError::OddPairPotential { odd_part, tolerance: ODD_PART_TOLERANCE });
    }
    let n = grid.len();
    let matrix = RMat::from_fn(n, n, |i, j| samples[grid.difference(i, j)]);
    let mut spectrum: Vec<C64> = samples.iter().map(|&x| c(x, 0.0)).collect();
    grid.fft_in_place(&mut spectrum);
    Ok(PairKernel { grid: grid.clone(), samples, spectrum, matrix })
}
