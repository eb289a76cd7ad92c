//! Coefficients `⟨f, φ_s⟩`, the model operator, the bilinear form, the
//! periodization identity and the constant-field oracle.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{FrequencyInterval, Lattice, Tile, TileSet, VectorField};
use crate::grid::{bin_of, column_fft, columns_to_function, GridFunction, IndicatorSet, Spectrum};
use crate::wavepackets::{gamma_l, in_tau, beta_tilde, plateau_const, psi0, slope_coordinate, PacketBank};

/// Tiles per parallel work unit. Partial sums are combined pairwise in index
/// order, so results do not depend on the thread count.
const CHUNK: usize = 64;

/// Sums in a fixed binary tree over the slice order.
pub fn pairwise_sum<T: Clone>(items: &[T], zero: T, add: &impl Fn(&T, &T) -> T) -> T {
    match items.len() {
        0 => zero,
        1 => items[0].clone(),
        n => {
            let (a, b) = items.split_at(n / 2);
            add(&pairwise_sum(a, zero.clone(), add), &pairwise_sum(b, zero, add))
        }
    }
}

fn sum_f64(v: &[f64]) -> f64 {
    pairwise_sum(v, 0.0, &|a, b| a + b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Source {
    E,
    F,
    Other,
}

/// `⟨f, φ_s⟩` for a set of tiles, stored densely by lattice id.
#[derive(Debug, Clone)]
pub struct CoefficientTable {
    pub present: TileSet,
    pub values: Vec<Complex64>,
    pub source: Source,
}

impl CoefficientTable {
    pub fn get(&self, id: usize) -> Option<Complex64> {
        self.present.contains(id).then(|| self.values[id])
    }

    /// Value for a tile known to be present.
    pub fn at(&self, id: usize) -> Complex64 {
        self.values[id]
    }

    pub fn abs_sq(&self, id: usize) -> f64 {
        self.values[id].norm_sqr()
    }

    /// Largest `Σ_{s: ω_s = ω} |⟨f, φ_s⟩|² / ‖f‖²` over slope intervals.
    pub fn bessel_constant(&self, lat: &Lattice, f_norm_sq: f64) -> f64 {
        let mut per_omega = std::collections::BTreeMap::<FrequencyInterval, f64>::new();
        for id in self.present.iter() {
            *per_omega.entry(lat.tile(id).omega()).or_default() += self.abs_sq(id);
        }
        per_omega.values().cloned().fold(0.0, f64::max) / f_norm_sq
    }
}

pub fn coefficients(bank: &PacketBank, f: &GridFunction, tiles: &[Tile], source: Source) -> Result<CoefficientTable> {
    let lat = bank.lattice();
    if f.spec() != lat.spec() {
        return Err(Error::Dimension("function and lattice grids differ".into()));
    }
    let fh = f.forward();
    let vals: Vec<Complex64> = tiles.par_iter().map(|s| bank.coefficient(&fh, s)).collect();
    let mut values = vec![Complex64::new(0.0, 0.0); lat.tile_count()];
    let mut present = TileSet::new(lat.tile_count());
    for (s, v) in tiles.iter().zip(vals) {
        let id = lat.id(s);
        values[id] = v;
        present.insert(id);
    }
    Ok(CoefficientTable { present, values, source })
}

/// `⟨1_E, h_s⟩` for the curved packets.
pub fn curved_pairings(bank: &PacketBank, e: &GridFunction, tiles: &[Tile], v: &VectorField) -> Result<CoefficientTable> {
    let lat = bank.lattice();
    if e.spec() != lat.spec() || v.values().len() != lat.spec().n() {
        return Err(Error::Dimension("function, field and lattice grids differ".into()));
    }
    let ecol = column_fft(e);
    let vals: Vec<Complex64> = tiles.par_iter().map(|s| bank.curved_pairing(&ecol, s, v)).collect();
    let mut values = vec![Complex64::new(0.0, 0.0); lat.tile_count()];
    let mut present = TileSet::new(lat.tile_count());
    for (s, val) in tiles.iter().zip(vals) {
        let id = lat.id(s);
        values[id] = val;
        present.insert(id);
    }
    Ok(CoefficientTable {
        present,
        values,
        source: Source::E,
    })
}

/// `Σ_s ⟨f, φ_s⟩·h_s`.
pub fn model_apply(bank: &PacketBank, f: &GridFunction, tiles: &[Tile], v: &VectorField) -> Result<GridFunction> {
    let lat = bank.lattice();
    let spec = *lat.spec();
    let coeffs = coefficients(bank, f, tiles, Source::Other)?;
    if v.values().len() != spec.n() {
        return Err(Error::Dimension("vector field length".into()));
    }
    let partials: Vec<Vec<Complex64>> = tiles
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut cols = vec![Complex64::new(0.0, 0.0); spec.len()];
            for s in chunk {
                bank.accumulate_curved(s, v, coeffs.at(lat.id(s)), &mut cols);
            }
            cols
        })
        .collect();
    let cols = pairwise_sum(&partials, vec![Complex64::new(0.0, 0.0); spec.len()], &|a, b| {
        a.iter().zip(b).map(|(x, y)| x + y).collect()
    });
    Ok(columns_to_function(spec, cols, 1.0 / spec.side_length()))
}

/// Per-tile products `|⟨1_F, φ_s⟩|·|⟨1_E, h_s⟩|` and their sum.
#[derive(Debug, Clone)]
pub struct BilinearTerms {
    pub tiles: Vec<Tile>,
    pub terms: Vec<f64>,
    pub total: f64,
}

pub fn bilinear_terms(coeff_f: &CoefficientTable, pair_e: &CoefficientTable, lat: &Lattice, tiles: &[Tile]) -> BilinearTerms {
    let terms: Vec<f64> = tiles
        .iter()
        .map(|s| {
            let id = lat.id(s);
            coeff_f.at(id).norm() * pair_e.at(id).norm()
        })
        .collect();
    // canonical order so the total does not depend on the caller's ordering
    let mut sorted: Vec<(Tile, f64)> = tiles.iter().cloned().zip(terms.iter().cloned()).collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let ordered: Vec<f64> = sorted.iter().map(|p| p.1).collect();
    BilinearTerms {
        tiles: tiles.to_vec(),
        total: sum_f64(&ordered),
        terms,
    }
}

/// `Σ_s |⟨1_F, φ_s⟩|·|⟨1_E, h_s⟩|`.
pub fn bilinear_form(bank: &PacketBank, e: &IndicatorSet, f: &IndicatorSet, tiles: &[Tile], v: &VectorField) -> Result<f64> {
    if e.is_empty() || f.is_empty() || tiles.is_empty() {
        return Ok(0.0);
    }
    let lat = bank.lattice();
    let cf = coefficients(bank, &f.to_function(), tiles, Source::F)?;
    let pe = curved_pairings(bank, &e.to_function(), tiles, v)?;
    Ok(bilinear_terms(&cf, &pe, lat, tiles).total)
}

/// Max pointwise deviation between `L²·(f ∗ m_ω)/Λ_ω` and the explicit
/// average over translations `p` of one tile cell of
/// `Σ_s ⟨f, φ_s(p + ·)⟩·φ_s(p + ·)`. The `L²` is the torus normalization.
pub fn periodization_check(bank: &PacketBank, f: &GridFunction, omega: &FrequencyInterval) -> Result<f64> {
    let lat = bank.lattice();
    let spec = *lat.spec();
    if f.spec() != &spec {
        return Err(Error::Dimension("function and lattice grids differ".into()));
    }
    if omega.level > lat.l_max() {
        return Err(Error::config("omega", "level above l_max"));
    }
    let n = spec.n();
    let dx = spec.spacing();
    let l = spec.side_length();
    let fh = f.forward();
    let tiles: Vec<Tile> = (0..lat.x_cells(omega.level))
        .flat_map(|i| (0..lat.cells()).map(move |j| (i, j)))
        .map(|(i, j)| Tile {
            l: omega.level,
            k: omega.index,
            i,
            j,
        })
        .collect();
    // translations p with c(s₀) − p ∈ s₀ for the reference tile s₀
    let s0 = tiles[0];
    let (c0x, c0y) = bank.center_index(&s0);
    let mut shifts = Vec::new();
    for b in 0..n as i64 {
        for a in 0..n as i64 {
            let (qx, qy) = ((c0x - a) as f64 * dx, (c0y - b) as f64 * dx);
            // half-open cell membership via the tile index map
            if lat.tile_at(*omega, qx, qy) == s0 {
                shifts.push((a, b));
            }
        }
    }
    let expect = (lat.area(&s0) / spec.cell_area()).round() as usize;
    if shifts.len() != expect {
        return Err(Error::Internal(format!("{} shifts, expected {expect}", shifts.len())));
    }
    let twiddle = |m: i64| Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * (m.rem_euclid(n as i64)) as f64 / n as f64);
    // frequency-side accumulation over p and s
    let partials: Vec<Vec<Complex64>> = shifts
        .par_chunks(16)
        .map(|chunk| {
            let mut acc = vec![Complex64::new(0.0, 0.0); spec.len()];
            for &(pa, pb) in chunk {
                for s in &tiles {
                    // φ_s(p + ·) has transform φ̂_s(ζ)·e^{2πiζ·p}
                    let mut c = Complex64::new(0.0, 0.0);
                    bank.for_each_phi_hat(s, |ka, kb, z| {
                        let shifted = z * twiddle(ka * pa + kb * pb).conj();
                        c += fh.coeffs()[bin_of(kb, n) * n + bin_of(ka, n)] * shifted.conj();
                    });
                    bank.for_each_phi_hat(s, |ka, kb, z| {
                        let shifted = z * twiddle(ka * pa + kb * pb).conj();
                        acc[bin_of(kb, n) * n + bin_of(ka, n)] += c * shifted;
                    });
                }
            }
            acc
        })
        .collect();
    let mut avg = pairwise_sum(&partials, vec![Complex64::new(0.0, 0.0); spec.len()], &|a, b| {
        a.iter().zip(b).map(|(x, y)| x + y).collect()
    });
    let inv = 1.0 / shifts.len() as f64;
    for z in avg.iter_mut() {
        *z *= inv;
    }
    let lambda = bank.mother(omega).lambda(lat);
    let w = lat.w();
    let lhs = fh.apply(|xi, eta| Complex64::new(l * l * crate::wavepackets::m_omega_value(omega, w, xi, eta) / lambda, 0.0));
    let rhs = Spectrum::from_coeffs(spec, avg)?;
    let d = lhs.inverse().sub(&rhs.inverse())?;
    Ok(d.max_abs())
}

/// `H_v Π_τ f` for the constant field `u0`: multiplier `−iπ·sign(ξ + u0·η)` on `τ`.
pub fn constant_field_oracle(f: &GridFunction, u0: f64, lat: &Lattice) -> Result<GridFunction> {
    if !(u0.abs() <= 1.0) {
        return Err(Error::config("u0", format!("{u0} outside [−1, 1]")));
    }
    let w = lat.w();
    Ok(f.forward()
        .apply(|xi, eta| {
            if !in_tau(w, xi, eta) {
                return Complex64::new(0.0, 0.0);
            }
            let z = xi + u0 * eta;
            let sg = if z > 0.0 {
                1.0
            } else if z < 0.0 {
                -1.0
            } else {
                0.0
            };
            Complex64::new(0.0, -std::f64::consts::PI * sg)
        })
        .inverse())
}

/// Pieces per octave in the kernel partition of unity.
pub const PIECES_PER_OCTAVE: usize = 100;

/// `Σ_{m ∈ ℤ} Σ_{i < K} ψ₀(t / 2^{m + i/K})` for `t > 0`.
pub fn kernel_normalizer(t: f64, k: usize) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let lt = t.log2();
    let mut s = 0.0;
    for i in 0..k {
        let off = i as f64 / k as f64;
        // ψ₀ lives on [0.98, 1.02], so only m near log₂t − off contributes
        let m0 = (lt - off).round() as i64;
        for m in (m0 - 1)..=(m0 + 1) {
            s += psi0(t / (m as f64 + off).exp2());
        }
    }
    s
}

/// Kernel piece `(m, i)` of the partition: `ψ₀(t/2^{m+i/K}) / normalizer(t)` for `t > 0`.
pub fn kernel_partition_piece(t: f64, m: i64, i: usize, k: usize) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let v = psi0(t / (m as f64 + i as f64 / k as f64).exp2());
    if v == 0.0 {
        0.0
    } else {
        v / kernel_normalizer(t, k)
    }
}

/// Octaves `m` needed so that the partition covers every nonzero grid value of
/// `|ξ + u0·η|` on `τ`, given that `u0 = p/q` has denominator `q`.
pub fn octave_range(lat: &Lattice, u0: f64, q: u32) -> (i64, i64) {
    let l = lat.side();
    let lo = (1.0 / (q as f64 * l) / 1.02).log2().floor() as i64 - 1;
    let hi = ((1.0 + u0.abs()) * 2.0 / lat.w() / 0.98).log2().ceil() as i64 + 1;
    (lo, hi)
}

/// Averaged model reconstruction for a constant field: the periodizing
/// multipliers `𝔪_l/plateau_const` times the antisymmetric combination of all
/// kernel pieces, `−iπ(Σψ(ζ) − Σψ(−ζ))` with `ζ = ξ + u0·η`, applied to `Π_τ f`.
/// Kernel scale `2^m` pairs with level `l = clamp(log₂(|κ|/(w·2^m)), 0, 8)`.
pub fn averaged_model_reconstruction(f: &GridFunction, u0: f64, q: u32, lat: &Lattice) -> Result<GridFunction> {
    if !(u0.abs() <= 1.0) {
        return Err(Error::config("u0", format!("{u0} outside [−1, 1]")));
    }
    let w = lat.w();
    let pc = plateau_const();
    let (mlo, mhi) = octave_range(lat, u0, q);
    let k = PIECES_PER_OCTAVE;
    let kappa = crate::wavepackets::KAPPA.abs();
    Ok(f.forward()
        .apply(|xi, eta| {
            if !in_tau(w, xi, eta) {
                return Complex64::new(0.0, 0.0);
            }
            let z = xi + u0 * eta;
            let rho = slope_coordinate(xi, eta);
            let mut acc = 0.0;
            for m in mlo..=mhi {
                let l = ((kappa / (w * (m as f64).exp2())).log2().round()).clamp(0.0, 8.0) as u32;
                let mm = beta_tilde(w * eta) * gamma_l(l, rho) / pc;
                for i in 0..k {
                    let d = kernel_partition_piece(z, m, i, k) - kernel_partition_piece(-z, m, i, k);
                    acc += mm * d;
                }
            }
            Complex64::new(0.0, -std::f64::consts::PI * acc)
        })
        .inverse())
}

/// Least-squares scalar `c` minimizing `‖c·recon − oracle‖₂`, and the relative
/// residual `‖c·recon − oracle‖₂ / ‖oracle‖₂`.
pub fn fit_scalar(recon: &GridFunction, oracle: &GridFunction) -> Result<(f64, f64)> {
    let num = oracle.inner_product(recon)?.re;
    let den = recon.norm_sq();
    if den == 0.0 || oracle.norm_sq() == 0.0 {
        return Ok((0.0, 0.0));
    }
    let c = num / den;
    let mut r = recon.clone();
    r.scale(Complex64::new(c, 0.0));
    Ok((c, r.sub(oracle)?.l2_norm() / oracle.l2_norm()))
}
