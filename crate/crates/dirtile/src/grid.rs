//! Periodic n×n grid on the torus [0, L)², spectral transforms and indicator sets.
//!
//! Samples are stored row-major: `samples[j * n + i]` is the value at
//! `(x₁, x₂) = (i·dx, j·dx)`. Spectra use the same layout in FFT order, so
//! bin `a` along an axis carries frequency `signed(a)/L`.
//!
//! Normalization: `f̂ = (L/n²)·FFT(f)` and `f = (1/L)·IFFT(f̂)`. With this
//! choice `Σ|f̂|² = Σ|f|²·dx²`, and inner products agree on both sides.

use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static P: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    P.get_or_init(|| Mutex::new(FftPlanner::new()))
}

/// Cached 1-D plan of length `n`.
pub fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut p = planner().lock().expect("fft planner poisoned");
    if inverse {
        p.plan_fft_inverse(n)
    } else {
        p.plan_fft_forward(n)
    }
}

fn transpose(buf: &mut [Complex64], n: usize) {
    for j in 0..n {
        for i in (j + 1)..n {
            buf.swap(j * n + i, i * n + j);
        }
    }
}

/// Unnormalized 2-D FFT in place.
pub fn fft2(buf: &mut [Complex64], n: usize, inverse: bool) {
    debug_assert_eq!(buf.len(), n * n);
    let p = plan(n, inverse);
    p.process(buf);
    transpose(buf, n);
    p.process(buf);
    transpose(buf, n);
}

/// Signed frequency index of FFT bin `a`.
#[inline]
pub fn signed_index(a: usize, n: usize) -> i64 {
    if a < n / 2 {
        a as i64
    } else {
        a as i64 - n as i64
    }
}

/// FFT bin of signed index `k` (taken mod n).
#[inline]
pub fn bin_of(k: i64, n: usize) -> usize {
    k.rem_euclid(n as i64) as usize
}

/// Unnormalized 1-D FFT of every column (fixed `x₁`, running over `x₂`).
/// Output layout is `out[i * n + b]` for column `i` and η-bin `b`.
pub fn column_fft(f: &GridFunction) -> Vec<Complex64> {
    let n = f.spec.n;
    let mut buf = f.samples.clone();
    transpose(&mut buf, n);
    plan(n, false).process(&mut buf);
    buf
}

/// Inverse of the layout produced by [`column_fft`], including the
/// `1/L` synthesis factor: `f(x₁, x₂) = (1/L)·Σ_b G(x₁, b)·e^{2πiη_b x₂}` when the
/// column data holds `G` scaled so that `Σ_b` runs over η bins.
pub fn columns_to_function(spec: GridSpec, mut cols: Vec<Complex64>, scale: f64) -> GridFunction {
    let n = spec.n;
    plan(n, true).process(&mut cols);
    transpose(&mut cols, n);
    for z in cols.iter_mut() {
        *z *= scale;
    }
    GridFunction { spec, samples: cols }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    n: usize,
    side_length: f64,
}

impl GridSpec {
    pub fn new(n: usize, side_length: f64) -> Result<Self> {
        if n < 32 || !n.is_power_of_two() {
            return Err(Error::config("grid.n", format!("{n} is not a power of two ≥ 32")));
        }
        if !(side_length.is_finite() && side_length > 0.0) {
            return Err(Error::config("grid.L", format!("{side_length} is not a positive length")));
        }
        Ok(GridSpec { n, side_length })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn side_length(&self) -> f64 {
        self.side_length
    }

    pub fn spacing(&self) -> f64 {
        self.side_length / self.n as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.spacing() * self.spacing()
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    /// Frequency carried by FFT bin `a`.
    pub fn freq(&self, a: usize) -> f64 {
        signed_index(a, self.n) as f64 / self.side_length
    }

    /// Largest representable |frequency| (the Nyquist value n/(2L)).
    pub fn nyquist(&self) -> f64 {
        self.n as f64 / (2.0 * self.side_length)
    }

    pub fn coord(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    fn check(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::Dimension(format!(
                "grid n={} L={} vs n={} L={}",
                self.n, self.side_length, other.n, other.side_length
            )));
        }
        Ok(())
    }
}

/// Complex samples on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    spec: GridSpec,
    samples: Vec<Complex64>,
}

impl GridFunction {
    pub fn zeros(spec: GridSpec) -> Self {
        GridFunction {
            spec,
            samples: vec![Complex64::new(0.0, 0.0); spec.len()],
        }
    }

    pub fn from_samples(spec: GridSpec, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != spec.len() {
            return Err(Error::Dimension(format!(
                "{} samples for an {}×{} grid",
                samples.len(),
                spec.n,
                spec.n
            )));
        }
        Ok(GridFunction { spec, samples })
    }

    pub fn from_real(spec: GridSpec, values: &[f64]) -> Result<Self> {
        Self::from_samples(spec, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    /// Samples `f(x₁, x₂)` at the grid points.
    pub fn from_fn(spec: GridSpec, f: impl Fn(f64, f64) -> Complex64) -> Self {
        let n = spec.n;
        let dx = spec.spacing();
        let mut samples = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                samples.push(f(i as f64 * dx, j as f64 * dx));
            }
        }
        GridFunction { spec, samples }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.samples[j * self.spec.n + i]
    }

    pub fn forward(&self) -> Spectrum {
        let n = self.spec.n;
        let mut buf = self.samples.clone();
        fft2(&mut buf, n, false);
        let scale = self.spec.side_length / (n * n) as f64;
        for z in buf.iter_mut() {
            *z *= scale;
        }
        Spectrum {
            spec: self.spec,
            coeffs: buf,
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.spec.cell_area()
    }

    pub fn l2_norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `(Σ|f|^p dx²)^{1/p}`.
    pub fn lp_norm(&self, p: f64) -> f64 {
        self.lp_norms(&[p])[0]
    }

    /// [`lp_norm`](Self::lp_norm) for several exponents in one pass.
    pub fn lp_norms(&self, ps: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0f64; ps.len()];
        for z in &self.samples {
            let a = z.norm_sqr();
            if a == 0.0 {
                continue;
            }
            for (s, &p) in acc.iter_mut().zip(ps) {
                *s += if p == 2.0 { a } else { a.powf(0.5 * p) };
            }
        }
        acc.iter().zip(ps).map(|(s, &p)| (s * self.spec.cell_area()).powf(1.0 / p)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `⟨f, g⟩ = Σ f·conj(g)·dx²`.
    pub fn inner_product(&self, other: &GridFunction) -> Result<Complex64> {
        self.spec.check(&other.spec)?;
        let s: Complex64 = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a * b.conj())
            .sum();
        Ok(s * self.spec.cell_area())
    }

    pub fn add_scaled(&mut self, other: &GridFunction, c: Complex64) -> Result<()> {
        self.spec.check(&other.spec)?;
        for (a, b) in self.samples.iter_mut().zip(&other.samples) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        let mut out = self.clone();
        out.add_scaled(other, Complex64::new(-1.0, 0.0))?;
        Ok(out)
    }

    pub fn scale(&mut self, c: Complex64) {
        for a in self.samples.iter_mut() {
            *a *= c;
        }
    }

    /// Pointwise product.
    pub fn mul(&self, other: &GridFunction) -> Result<GridFunction> {
        self.spec.check(&other.spec)?;
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a * b)
            .collect();
        Ok(GridFunction {
            spec: self.spec,
            samples,
        })
    }

    /// `g(x) = f(x − (a·dx, b·dx))` for integer grid shifts.
    pub fn translate(&self, a: i64, b: i64) -> GridFunction {
        let n = self.spec.n;
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for j in 0..n {
            let sj = bin_of(j as i64 - b, n);
            for i in 0..n {
                let si = bin_of(i as i64 - a, n);
                out[j * n + i] = self.samples[sj * n + si];
            }
        }
        GridFunction {
            spec: self.spec,
            samples: out,
        }
    }
}

/// Frequency-side samples in FFT order (`coeffs[b * n + a]`, a ↦ ξ, b ↦ η).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    spec: GridSpec,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn zeros(spec: GridSpec) -> Self {
        Spectrum {
            spec,
            coeffs: vec![Complex64::new(0.0, 0.0); spec.len()],
        }
    }

    pub fn from_coeffs(spec: GridSpec, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != spec.len() {
            return Err(Error::Dimension(format!("{} coefficients", coeffs.len())));
        }
        Ok(Spectrum { spec, coeffs })
    }

    /// Samples `g(ξ, η)` on the frequency lattice.
    pub fn from_fn(spec: GridSpec, g: impl Fn(f64, f64) -> Complex64) -> Self {
        let n = spec.n;
        let mut coeffs = Vec::with_capacity(n * n);
        for b in 0..n {
            let eta = spec.freq(b);
            for a in 0..n {
                coeffs.push(g(spec.freq(a), eta));
            }
        }
        Spectrum { spec, coeffs }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Coefficient at centered indices `(kξ, kη)`.
    pub fn at_centered(&self, kx: i64, ky: i64) -> Complex64 {
        let n = self.spec.n;
        self.coeffs[bin_of(ky, n) * n + bin_of(kx, n)]
    }

    pub fn inverse(&self) -> GridFunction {
        let n = self.spec.n;
        let mut buf = self.coeffs.clone();
        fft2(&mut buf, n, true);
        let scale = 1.0 / self.spec.side_length;
        for z in buf.iter_mut() {
            *z *= scale;
        }
        GridFunction {
            spec: self.spec,
            samples: buf,
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn inner_product(&self, other: &Spectrum) -> Result<Complex64> {
        self.spec.check(&other.spec)?;
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a * b.conj())
            .sum())
    }

    /// Pointwise multiplication by a frequency-side multiplier `m(ξ, η)`.
    pub fn apply(&self, m: impl Fn(f64, f64) -> Complex64) -> Spectrum {
        let n = self.spec.n;
        let mut out = self.coeffs.clone();
        for b in 0..n {
            let eta = self.spec.freq(b);
            for a in 0..n {
                out[b * n + a] *= m(self.spec.freq(a), eta);
            }
        }
        Spectrum {
            spec: self.spec,
            coeffs: out,
        }
    }

    pub fn mul(&self, other: &Spectrum) -> Result<Spectrum> {
        self.spec.check(&other.spec)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a * b)
            .collect();
        Ok(Spectrum {
            spec: self.spec,
            coeffs,
        })
    }
}

/// Boolean mask on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorSet {
    spec: GridSpec,
    mask: Vec<bool>,
}

impl IndicatorSet {
    pub fn empty(spec: GridSpec) -> Self {
        IndicatorSet {
            spec,
            mask: vec![false; spec.len()],
        }
    }

    pub fn full(spec: GridSpec) -> Self {
        IndicatorSet {
            spec,
            mask: vec![true; spec.len()],
        }
    }

    pub fn from_mask(spec: GridSpec, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != spec.len() {
            return Err(Error::Dimension(format!("{} mask cells", mask.len())));
        }
        Ok(IndicatorSet { spec, mask })
    }

    pub fn from_fn(spec: GridSpec, pred: impl Fn(f64, f64) -> bool) -> Self {
        let n = spec.n;
        let dx = spec.spacing();
        let mut mask = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                mask.push(pred(i as f64 * dx, j as f64 * dx));
            }
        }
        IndicatorSet { spec, mask }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.mask[j * self.spec.n + i]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&b| b)
    }

    pub fn measure(&self) -> f64 {
        self.count() as f64 * self.spec.cell_area()
    }

    /// `Σ_{cells in set} w·dx²`, using the real part of `w`.
    pub fn weighted_measure(&self, w: &GridFunction) -> Result<f64> {
        self.spec.check(w.spec())?;
        let s: f64 = self
            .mask
            .iter()
            .zip(w.samples())
            .filter(|(m, _)| **m)
            .map(|(_, z)| z.re)
            .sum();
        Ok(s * self.spec.cell_area())
    }

    pub fn to_function(&self) -> GridFunction {
        let samples = self
            .mask
            .iter()
            .map(|&b| Complex64::new(if b { 1.0 } else { 0.0 }, 0.0))
            .collect();
        GridFunction {
            spec: self.spec,
            samples,
        }
    }

    pub fn union(&self, other: &IndicatorSet) -> Result<IndicatorSet> {
        self.spec.check(&other.spec)?;
        let mask = self.mask.iter().zip(&other.mask).map(|(a, b)| *a || *b).collect();
        Ok(IndicatorSet { spec: self.spec, mask })
    }

    pub fn intersection(&self, other: &IndicatorSet) -> Result<IndicatorSet> {
        self.spec.check(&other.spec)?;
        let mask = self.mask.iter().zip(&other.mask).map(|(a, b)| *a && *b).collect();
        Ok(IndicatorSet { spec: self.spec, mask })
    }

    pub fn is_subset(&self, other: &IndicatorSet) -> bool {
        self.mask.iter().zip(&other.mask).all(|(a, b)| !*a || *b)
    }
}
