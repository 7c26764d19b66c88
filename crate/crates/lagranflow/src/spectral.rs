//! Divergence-free Fourier fields on the 2-torus `[0, 2π)²`.
//!
//! Velocity fields are stored as real coefficients against the L²-normalised
//! trigonometric basis
//!
//! ```text
//! e_j(x) = E_j⁻¹ j⊥ · { cos⟨j,x⟩   if j₁ > 0, or j₁ = 0 and j₂ > 0,
//!                      { sin⟨j,x⟩   if j₁ < 0, or j₁ = 0 and j₂ < 0,
//! ```
//!
//! with `j⊥ = (−j₂, j₁)` and `E_j = √2·π·|j|`, so `‖e_j‖_{L²} = 1`. Every
//! represented field is automatically divergence-free with zero mean, and
//! `‖u‖²ₛ = Σ u_j² |j|^{2s}` because the basis diagonalises `−Δ`.
//!
//! The nonlinear term is computed by exact convolution over mode pairs (no
//! grid, no aliasing); a pseudo-spectral grid evaluation exists only as a
//! test oracle.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use nalgebra::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpectralError {
    #[error("spectral cutoff must be at least 1, got {0}")]
    InvalidCutoff(i32),
}

/// A nonzero integer wavevector `j ∈ Z²∖{0}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mode {
    pub j: [i32; 2],
}

impl Mode {
    pub fn new(j1: i32, j2: i32) -> Self {
        assert!(j1 != 0 || j2 != 0, "mode (0,0) is excluded");
        Mode { j: [j1, j2] }
    }

    /// `|j|₁ = |j₁| + |j₂|`.
    pub fn l1(&self) -> i32 {
        self.j[0].abs() + self.j[1].abs()
    }

    /// `|j|∞`.
    pub fn linf(&self) -> i32 {
        self.j[0].abs().max(self.j[1].abs())
    }

    /// `|j|²`.
    pub fn norm_sq(&self) -> i32 {
        self.j[0] * self.j[0] + self.j[1] * self.j[1]
    }

    pub fn norm(&self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    /// `j⊥ = (−j₂, j₁)`.
    pub fn perp(&self) -> [f64; 2] {
        [-self.j[1] as f64, self.j[0] as f64]
    }

    /// Whether `e_j` carries the cosine branch (`j₁ > 0`, or `j₁ = 0, j₂ > 0`).
    pub fn is_cos(&self) -> bool {
        self.j[0] > 0 || (self.j[0] == 0 && self.j[1] > 0)
    }

    /// Canonical ordering key `(|j|₁, j₁, j₂)`.
    fn order_key(&self) -> (i32, i32, i32) {
        (self.l1(), self.j[0], self.j[1])
    }
}

/// All modes with `|j|∞ ≤ N` in canonical `(|j|₁, j₁, j₂)` order.
///
/// The ordering is total and deterministic; it fixes coefficient layout,
/// file column order and RNG consumption order everywhere in the crate.
pub fn enumerate_modes(cutoff: i32) -> Result<Vec<Mode>, SpectralError> {
    if cutoff < 1 {
        return Err(SpectralError::InvalidCutoff(cutoff));
    }
    let mut modes = Vec::with_capacity(((2 * cutoff + 1) * (2 * cutoff + 1) - 1) as usize);
    for j1 in -cutoff..=cutoff {
        for j2 in -cutoff..=cutoff {
            if j1 != 0 || j2 != 0 {
                modes.push(Mode::new(j1, j2));
            }
        }
    }
    modes.sort_by_key(Mode::order_key);
    Ok(modes)
}

/// Cached per-cutoff mode bookkeeping: canonical order, index lookup and
/// precomputed basis factors.
#[derive(Debug)]
pub struct ModeTable {
    pub cutoff: i32,
    pub modes: Vec<Mode>,
    index: HashMap<[i32; 2], usize>,
    /// `E_j⁻¹ = 1/(√2·π·|j|)` per mode.
    pub inv_e: Vec<f64>,
    /// `|j|²` per mode.
    pub norm_sq: Vec<f64>,
    /// Index of the paired mode `−j`.
    pub paired: Vec<usize>,
}

impl ModeTable {
    fn build(cutoff: i32) -> Result<ModeTable, SpectralError> {
        let modes = enumerate_modes(cutoff)?;
        let index: HashMap<[i32; 2], usize> =
            modes.iter().enumerate().map(|(i, m)| (m.j, i)).collect();
        let inv_e = modes.iter().map(|m| 1.0 / (SQRT_2_PI * m.norm())).collect();
        let norm_sq = modes.iter().map(|m| m.norm_sq() as f64).collect();
        let paired = modes
            .iter()
            .map(|m| index[&[-m.j[0], -m.j[1]]])
            .collect();
        Ok(ModeTable {
            cutoff,
            modes,
            index,
            inv_e,
            norm_sq,
            paired,
        })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn position(&self, j: [i32; 2]) -> Option<usize> {
        self.index.get(&j).copied()
    }
}

const SQRT_2_PI: f64 = std::f64::consts::SQRT_2 * PI;

/// Global table cache; cutoffs in use are few and tables are immutable.
pub fn mode_table(cutoff: i32) -> &'static ModeTable {
    static CACHE: OnceLock<Mutex<HashMap<i32, &'static ModeTable>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard.entry(cutoff).or_insert_with(|| {
        Box::leak(Box::new(
            ModeTable::build(cutoff).expect("cutoff must be >= 1"),
        ))
    })
}

/// A truncated divergence-free velocity field: real coefficients `u_j` for
/// all modes with `|j|∞ ≤ cutoff`, in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierField {
    cutoff: i32,
    coeffs: Vec<f64>,
}

impl FourierField {
    pub fn zero(cutoff: i32) -> FourierField {
        let table = mode_table(cutoff);
        FourierField {
            cutoff,
            coeffs: vec![0.0; table.len()],
        }
    }

    pub fn from_coeffs(cutoff: i32, coeffs: Vec<f64>) -> FourierField {
        assert_eq!(coeffs.len(), mode_table(cutoff).len());
        FourierField { cutoff, coeffs }
    }

    /// Field with a single unit coefficient at mode `j`.
    pub fn unit(cutoff: i32, j: [i32; 2]) -> FourierField {
        let mut f = FourierField::zero(cutoff);
        f.set(j, 1.0);
        f
    }

    pub fn cutoff(&self) -> i32 {
        self.cutoff
    }

    pub fn table(&self) -> &'static ModeTable {
        mode_table(self.cutoff)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// Coefficient at mode `j`; exactly 0 outside the cutoff.
    pub fn get(&self, j: [i32; 2]) -> f64 {
        match self.table().position(j) {
            Some(i) => self.coeffs[i],
            None => 0.0,
        }
    }

    pub fn set(&mut self, j: [i32; 2], value: f64) {
        let i = self
            .table()
            .position(j)
            .expect("mode outside the field cutoff");
        self.coeffs[i] = value;
    }

    pub fn scale(&mut self, a: f64) {
        for c in &mut self.coeffs {
            *c *= a;
        }
    }

    pub fn axpy(&mut self, a: f64, other: &FourierField) {
        assert_eq!(self.cutoff, other.cutoff);
        for (c, o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *c += a * o;
        }
    }

    /// Re-expresses the field under a larger (or equal) cutoff.
    pub fn embed(&self, cutoff: i32) -> FourierField {
        assert!(cutoff >= self.cutoff);
        let mut out = FourierField::zero(cutoff);
        for (i, m) in self.table().modes.iter().enumerate() {
            out.set(m.j, self.coeffs[i]);
        }
        out
    }

    /// `‖u‖ₛ = (Σ u_j² |j|^{2s})^{1/2}` for integer `s ≥ 0`.
    pub fn sobolev_norm(&self, s: u32) -> f64 {
        let table = self.table();
        let mut sum = 0.0;
        for (i, &c) in self.coeffs.iter().enumerate() {
            sum += c * c * table.norm_sq[i].powi(s as i32);
        }
        sum.sqrt()
    }

    /// `‖u‖²` (kinetic energy up to a factor).
    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    /// `‖u‖₁²`.
    pub fn enstrophy(&self) -> f64 {
        let table = self.table();
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * c * table.norm_sq[i])
            .sum()
    }

    /// Point evaluation: velocity and its exact spatial Jacobian
    /// `grad[i][m] = ∂u_i/∂x_m`. The argument is wrapped mod 2π.
    pub fn eval(&self, x: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
        let table = self.table();
        let mut vel = [0.0; 2];
        let mut grad = [[0.0; 2]; 2];
        for (i, m) in table.modes.iter().enumerate() {
            let c = self.coeffs[i];
            if c == 0.0 {
                continue;
            }
            let phase = m.j[0] as f64 * x[0] + m.j[1] as f64 * x[1];
            let (sin, cos) = phase.sin_cos();
            let amp = c * table.inv_e[i];
            let perp = m.perp();
            let (val, dval) = if m.is_cos() { (cos, -sin) } else { (sin, cos) };
            vel[0] += amp * perp[0] * val;
            vel[1] += amp * perp[1] * val;
            for (axis, &jm) in m.j.iter().enumerate() {
                let d = amp * dval * jm as f64;
                grad[0][axis] += d * perp[0];
                grad[1][axis] += d * perp[1];
            }
        }
        (vel, grad)
    }

    pub fn velocity(&self, x: [f64; 2]) -> [f64; 2] {
        self.eval(x).0
    }

    /// Exact translation `u(·) ↦ u(· − shift)`; coefficient pairs at `±k`
    /// rotate by the angle `⟨k, shift⟩`.
    pub fn translate(&self, shift: [f64; 2]) -> FourierField {
        FourierField {
            cutoff: self.cutoff,
            coeffs: translate_coeffs(self.cutoff, &self.coeffs, shift),
        }
    }

    /// Complex coefficients on the full lattice, indexed like the table:
    /// `û(k) = E_k⁻¹ k⊥ (c_k − i s_k)/2` at the cosine representative,
    /// with `û(−k) = conj û(k)`.
    fn complex_coeffs(&self) -> Vec<[Complex<f64>; 2]> {
        let table = self.table();
        let mut out = vec![[Complex::new(0.0, 0.0); 2]; table.len()];
        for (i, m) in table.modes.iter().enumerate() {
            if !m.is_cos() {
                continue;
            }
            let pair = table.paired[i];
            let c = self.coeffs[i];
            let s = self.coeffs[pair];
            let amp = 0.5 * table.inv_e[i];
            let perp = m.perp();
            let z = Complex::new(c * amp, -s * amp);
            out[i] = [z * perp[0], z * perp[1]];
            out[pair] = [z.conj() * perp[0], z.conj() * perp[1]];
        }
        out
    }
}

/// Galerkin-truncated advection `P_N Π(⟨u,∇⟩v)`, by exact convolution over
/// mode pairs. `nonlinear_term(u) = advect(u, u)`; the linearised advection
/// is `advect(u, v) + advect(v, u)`.
pub fn advect(u: &FourierField, v: &FourierField) -> FourierField {
    assert_eq!(u.cutoff, v.cutoff);
    let table = u.table();
    let n = table.cutoff;
    let uc = u.complex_coeffs();
    let vc = v.complex_coeffs();

    // ŵ(m+n) += (û(m)·in) v̂(n), accumulated on the full lattice.
    let mut w = vec![[Complex::new(0.0, 0.0); 2]; table.len()];
    for (im, mm) in table.modes.iter().enumerate() {
        let um = uc[im];
        if um[0].norm_sqr() + um[1].norm_sqr() == 0.0 {
            continue;
        }
        for (iv, mv) in table.modes.iter().enumerate() {
            let vn = vc[iv];
            if vn[0].norm_sqr() + vn[1].norm_sqr() == 0.0 {
                continue;
            }
            let k = [mm.j[0] + mv.j[0], mm.j[1] + mv.j[1]];
            if (k[0] == 0 && k[1] == 0) || k[0].abs() > n || k[1].abs() > n {
                continue;
            }
            let ik = table.position(k).unwrap();
            // (û(m)·n), times i, times v̂(n)
            let dot = um[0] * mv.j[0] as f64 + um[1] * mv.j[1] as f64;
            let factor = Complex::new(0.0, 1.0) * dot;
            w[ik][0] += factor * vn[0];
            w[ik][1] += factor * vn[1];
        }
    }

    // Leray projection and return to the real basis.
    let mut out = FourierField::zero(u.cutoff);
    for (i, m) in table.modes.iter().enumerate() {
        if !m.is_cos() {
            continue;
        }
        let k = [m.j[0] as f64, m.j[1] as f64];
        let ksq = table.norm_sq[i];
        let wk = w[i];
        let kdot = wk[0] * k[0] + wk[1] * k[1];
        let proj = [wk[0] - kdot * k[0] / ksq, wk[1] - kdot * k[1] / ksq];
        let perp = m.perp();
        // proj = p·k⊥ with p = ⟨proj, k⊥⟩/|k|²
        let p = (proj[0] * perp[0] + proj[1] * perp[1]) / ksq;
        let e = SQRT_2_PI * m.norm();
        out.coeffs[i] = 2.0 * e * p.re;
        out.coeffs[table.paired[i]] = -2.0 * e * p.im;
    }
    out
}

/// `B_N(u) = P_N Π(⟨u,∇⟩u)`.
pub fn nonlinear_term(u: &FourierField) -> FourierField {
    advect(u, u)
}

/// Rotates a raw coefficient vector (canonical layout for `cutoff`) the way
/// translation by `shift` acts on the basis pairs at `±k`. Valid for any
/// coefficient vector whose per-mode scaling is symmetric under `j ↦ −j`.
pub fn translate_coeffs(cutoff: i32, coeffs: &[f64], shift: [f64; 2]) -> Vec<f64> {
    let table = mode_table(cutoff);
    assert_eq!(coeffs.len(), table.len());
    let mut out = vec![0.0; coeffs.len()];
    for (i, m) in table.modes.iter().enumerate() {
        if !m.is_cos() {
            continue;
        }
        let pair = table.paired[i];
        let c = coeffs[i];
        let s = coeffs[pair];
        let phi = m.j[0] as f64 * shift[0] + m.j[1] as f64 * shift[1];
        let (sin, cos) = phi.sin_cos();
        out[i] = c * cos - s * sin;
        out[pair] = c * sin + s * cos;
    }
    out
}

/// A general (not necessarily divergence-free) vector trigonometric
/// expansion: per-wavevector cosine/sine 2-vector amplitudes plus a
/// constant part. This is the natural domain of the Leray projection.
#[derive(Debug, Clone, Default)]
pub struct VectorTrigExpansion {
    /// Keyed by the cosine-branch representative wavevector.
    terms: HashMap<[i32; 2], TrigTerm>,
    pub constant: [f64; 2],
}

#[derive(Debug, Clone, Copy, Default)]
struct TrigTerm {
    cos: [f64; 2],
    sin: [f64; 2],
}

fn canonical_rep(k: [i32; 2]) -> ([i32; 2], bool) {
    if k[0] > 0 || (k[0] == 0 && k[1] > 0) {
        (k, true)
    } else {
        ([-k[0], -k[1]], false)
    }
}

impl VectorTrigExpansion {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `amp · cos⟨k,x⟩` to the expansion.
    pub fn add_cos(&mut self, k: [i32; 2], amp: [f64; 2]) {
        assert!(k != [0, 0], "use `add_const` for the zero wavevector");
        let (rep, same) = canonical_rep(k);
        let term = self.terms.entry(rep).or_default();
        // cos is even: cos⟨k,x⟩ = cos⟨−k,x⟩
        let _ = same;
        term.cos[0] += amp[0];
        term.cos[1] += amp[1];
    }

    /// Adds `amp · sin⟨k,x⟩` to the expansion.
    pub fn add_sin(&mut self, k: [i32; 2], amp: [f64; 2]) {
        assert!(k != [0, 0], "a constant has no sine part");
        let (rep, same) = canonical_rep(k);
        let sign = if same { 1.0 } else { -1.0 };
        let term = self.terms.entry(rep).or_default();
        term.sin[0] += sign * amp[0];
        term.sin[1] += sign * amp[1];
    }

    pub fn add_const(&mut self, amp: [f64; 2]) {
        self.constant[0] += amp[0];
        self.constant[1] += amp[1];
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        for t in out.terms.values_mut() {
            for v in [&mut t.cos, &mut t.sin] {
                v[0] *= a;
                v[1] *= a;
            }
        }
        out.constant[0] *= a;
        out.constant[1] *= a;
        out
    }

    pub fn add(&mut self, other: &Self) {
        for (k, t) in &other.terms {
            let e = self.terms.entry(*k).or_default();
            for i in 0..2 {
                e.cos[i] += t.cos[i];
                e.sin[i] += t.sin[i];
            }
        }
        self.constant[0] += other.constant[0];
        self.constant[1] += other.constant[1];
    }

    /// Embeds a divergence-free field into the general expansion.
    pub fn from_field(u: &FourierField) -> Self {
        let table = u.table();
        let mut out = Self::new();
        for (i, m) in table.modes.iter().enumerate() {
            let c = u.coeffs()[i];
            if c == 0.0 {
                continue;
            }
            let perp = m.perp();
            let amp = [c * table.inv_e[i] * perp[0], c * table.inv_e[i] * perp[1]];
            if m.is_cos() {
                out.add_cos(m.j, amp);
            } else {
                out.add_sin(m.j, amp);
            }
        }
        out
    }

    pub fn max_linf(&self) -> i32 {
        self.terms
            .keys()
            .map(|k| k[0].abs().max(k[1].abs()))
            .max()
            .unwrap_or(0)
    }

    /// Pointwise evaluation (used by tests and by control synthesis checks).
    pub fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        let mut out = self.constant;
        for (k, t) in &self.terms {
            let phase = k[0] as f64 * x[0] + k[1] as f64 * x[1];
            let (sin, cos) = phase.sin_cos();
            out[0] += t.cos[0] * cos + t.sin[0] * sin;
            out[1] += t.cos[1] * cos + t.sin[1] * sin;
        }
        out
    }
}

/// Leray projection onto divergence-free, mean-zero fields, expressed in
/// the `e_j` basis. Per wavevector the 2-vector amplitude is orthogonally
/// projected onto `span(k⊥)`; the constant part is discarded.
pub fn leray_project(f: &VectorTrigExpansion) -> FourierField {
    let cutoff = f.max_linf().max(1);
    let table = mode_table(cutoff);
    let mut out = FourierField::zero(cutoff);
    for (k, t) in &f.terms {
        let i = table.position(*k).expect("canonical rep within cutoff");
        let m = table.modes[i];
        let ksq = table.norm_sq[i];
        let perp = m.perp();
        // ⟨amp, k⊥⟩/|k|² picks the solenoidal component; e_k = E⁻¹ k⊥ cos,
        // e_{−k} = E⁻¹ k⊥ sin at the cosine representative k.
        let e = SQRT_2_PI * m.norm();
        let ccoef = (t.cos[0] * perp[0] + t.cos[1] * perp[1]) / ksq * e;
        let scoef = (t.sin[0] * perp[0] + t.sin[1] * perp[1]) / ksq * e;
        out.coeffs[i] += ccoef;
        out.coeffs[table.paired[i]] += scoef;
    }
    out
}

/// Wraps a point to `[0, 2π)²` componentwise.
pub fn wrap_point(x: [f64; 2]) -> [f64; 2] {
    let two_pi = 2.0 * PI;
    [x[0].rem_euclid(two_pi), x[1].rem_euclid(two_pi)]
}

/// Minimal (geodesic) displacement `b − a` on the torus, componentwise in
/// `(−π, π]`. Ties at distance π break toward the positive direction.
pub fn torus_displacement(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let two_pi = 2.0 * PI;
    let mut d = [0.0; 2];
    for i in 0..2 {
        let mut diff = (b[i] - a[i]).rem_euclid(two_pi);
        if diff > PI {
            diff -= two_pi;
        }
        d[i] = diff;
    }
    d
}

/// Geodesic distance on the torus.
pub fn torus_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = torus_displacement(a, b);
    (d[0] * d[0] + d[1] * d[1]).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    /// L² inner product by trapezoid quadrature on a `g × g` uniform grid;
    /// exact for trigonometric polynomials of degree `< g/2` per axis.
    fn grid_inner(u: &FourierField, v: &FourierField, g: usize) -> f64 {
        let h = 2.0 * PI / g as f64;
        let mut sum = 0.0;
        for a in 0..g {
            for b in 0..g {
                let x = [a as f64 * h, b as f64 * h];
                let (uu, _) = u.eval(x);
                let (vv, _) = v.eval(x);
                sum += uu[0] * vv[0] + uu[1] * vv[1];
            }
        }
        sum * h * h
    }

    fn random_field(cutoff: i32, rng: &mut impl Rng) -> FourierField {
        let table = mode_table(cutoff);
        let coeffs = (0..table.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        FourierField::from_coeffs(cutoff, coeffs)
    }

    #[test]
    fn mode_counts() {
        assert_eq!(enumerate_modes(1).unwrap().len(), 8);
        let l1_two: Vec<_> = enumerate_modes(2)
            .unwrap()
            .into_iter()
            .filter(|m| m.l1() <= 2)
            .collect();
        assert_eq!(l1_two.len(), 12);
        assert_eq!(enumerate_modes(1).unwrap(), enumerate_modes(1).unwrap());
        assert_eq!(
            enumerate_modes(0).unwrap_err(),
            SpectralError::InvalidCutoff(0)
        );
    }

    #[test]
    fn mode_order_is_canonical() {
        let modes = enumerate_modes(2).unwrap();
        let mut sorted = modes.clone();
        sorted.sort_by_key(Mode::order_key);
        assert_eq!(modes, sorted);
        // first shell in lexicographic (j1, j2) order
        assert_eq!(modes[0], Mode::new(-1, 0));
        assert_eq!(modes[1], Mode::new(0, -1));
        assert_eq!(modes[2], Mode::new(0, 1));
        assert_eq!(modes[3], Mode::new(1, 0));
    }

    #[test]
    fn eval_single_mode_value() {
        let u = FourierField::unit(1, [1, 0]);
        let (vel, _) = u.eval([0.0, 0.0]);
        assert_abs_diff_eq!(vel[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(vel[1], 1.0 / (std::f64::consts::SQRT_2 * PI), epsilon = 1e-15);
        assert_abs_diff_eq!(vel[1], 0.225_079_079_039_276_5, epsilon = 1e-15);
    }

    #[test]
    fn eval_zero_field() {
        let u = FourierField::zero(2);
        let (vel, grad) = u.eval([1.0, 2.0]);
        assert_eq!(vel, [0.0, 0.0]);
        assert_eq!(grad, [[0.0, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let u = random_field(3, &mut rng);
        let h = 1e-6;
        for _ in 0..20 {
            let x = [rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI)];
            let (_, grad) = u.eval(x);
            for axis in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[axis] += h;
                xm[axis] -= h;
                let vp = u.eval(xp).0;
                let vm = u.eval(xm).0;
                for i in 0..2 {
                    let fd = (vp[i] - vm[i]) / (2.0 * h);
                    let scale = grad[i][axis].abs().max(1.0);
                    assert!(
                        (fd - grad[i][axis]).abs() / scale <= 1e-8,
                        "grad[{i}][{axis}] = {} vs fd {}",
                        grad[i][axis],
                        fd
                    );
                }
            }
        }
    }

    #[test]
    fn sobolev_norm_examples() {
        let u = FourierField::unit(3, [2, 1]);
        assert_abs_diff_eq!(u.sobolev_norm(0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(u.sobolev_norm(1), 5f64.sqrt(), epsilon = 1e-15);
        assert_eq!(FourierField::zero(2).sobolev_norm(4), 0.0);
    }

    #[test]
    fn sobolev_norm_matches_grid_quadrature() {
        // (u, (−Δ)^s u) by quadrature: apply |j|^{2s} to coefficients and
        // integrate pointwise, an independent route through `eval`.
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let u = random_field(4, &mut rng);
        let table = u.table();
        for s in 0..=3u32 {
            let mut lap = u.clone();
            for (i, c) in lap.coeffs_mut().iter_mut().enumerate() {
                *c *= table.norm_sq[i].powi(s as i32);
            }
            let quad = grid_inner(&u, &lap, 64);
            let direct = u.sobolev_norm(s).powi(2);
            assert!(
                (quad - direct).abs() <= 1e-8 * direct.max(1.0),
                "s={s}: {quad} vs {direct}"
            );
        }
    }

    #[test]
    fn basis_orthonormality_on_grid() {
        let table = mode_table(4);
        for a in 0..table.len() {
            let ua = FourierField::unit(4, table.modes[a].j);
            for b in a..table.len() {
                let ub = FourierField::unit(4, table.modes[b].j);
                let ip = grid_inner(&ua, &ub, 64);
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!(
                    (ip - expect).abs() <= 1e-12,
                    "⟨e_{:?}, e_{:?}⟩ = {ip}",
                    table.modes[a].j,
                    table.modes[b].j
                );
            }
        }
    }

    #[test]
    fn leray_identity_on_divergence_free() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let u = random_field(3, &mut rng);
        let back = leray_project(&VectorTrigExpansion::from_field(&u));
        for m in u.table().modes.iter() {
            assert_abs_diff_eq!(back.get(m.j), u.get(m.j), epsilon = 1e-14);
        }
    }

    #[test]
    fn leray_annihilates_gradients() {
        // ∇(sin⟨k,x⟩) = k cos⟨k,x⟩ and ∇(cos⟨k,x⟩) = −k sin⟨k,x⟩
        let mut f = VectorTrigExpansion::new();
        for (k, w) in [([1, 2], 0.7), ([2, -1], -1.3), ([0, 3], 2.0)] {
            let kv = [k[0] as f64 * w, k[1] as f64 * w];
            f.add_cos(k, kv);
            f.add_sin(k, [-kv[0] * 0.5, -kv[1] * 0.5]);
        }
        let projected = leray_project(&f);
        assert!(projected.energy() <= 1e-28);
    }

    #[test]
    fn leray_output_divergence_free_and_idempotent() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut f = VectorTrigExpansion::new();
        for _ in 0..12 {
            let k = [rng.gen_range(-3..=3), rng.gen_range(-3..=3)];
            if k == [0, 0] {
                continue;
            }
            f.add_cos(k, [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
            f.add_sin(k, [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
        }
        f.add_const([0.4, -0.2]);
        let p = leray_project(&f);
        // Fourier divergence condition ⟨k, coeff⟩ = 0 holds structurally:
        // reprojecting reproduces the coefficients to roundoff.
        let pp = leray_project(&VectorTrigExpansion::from_field(&p));
        for (a, b) in p.coeffs().iter().zip(pp.coeffs()) {
            assert!((a - b).abs() <= 1e-13 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    /// Pseudo-spectral oracle for the advection term: evaluate `(u·∇)u`
    /// pointwise on a dealiased grid and project on each basis function by
    /// quadrature. Exact for trig polynomials below the grid Nyquist.
    fn grid_nonlinear_oracle(u: &FourierField) -> FourierField {
        let n = u.cutoff();
        let g = (4 * n + 4) as usize;
        let h = 2.0 * PI / g as f64;
        let table = u.table();
        let mut w = vec![[0.0f64; 2]; g * g];
        for a in 0..g {
            for b in 0..g {
                let x = [a as f64 * h, b as f64 * h];
                let (vel, grad) = u.eval(x);
                w[a * g + b] = [
                    vel[0] * grad[0][0] + vel[1] * grad[0][1],
                    vel[0] * grad[1][0] + vel[1] * grad[1][1],
                ];
            }
        }
        let mut out = FourierField::zero(n);
        for (i, m) in table.modes.iter().enumerate() {
            let e = FourierField::unit(n, m.j);
            let mut ip = 0.0;
            for a in 0..g {
                for b in 0..g {
                    let x = [a as f64 * h, b as f64 * h];
                    let (ev, _) = e.eval(x);
                    let wv = w[a * g + b];
                    ip += ev[0] * wv[0] + ev[1] * wv[1];
                }
            }
            out.coeffs_mut()[i] = ip * h * h;
        }
        out
    }

    #[test]
    fn single_shear_mode_advects_to_zero() {
        let u = FourierField::unit(2, [1, 0]);
        let b = nonlinear_term(&u);
        assert!(b.energy() <= 1e-30);
    }

    #[test]
    fn nonlinear_term_matches_grid_oracle() {
        let mut two = FourierField::zero(2);
        two.set([1, 0], 0.8);
        two.set([0, -1], -0.5);
        let b = nonlinear_term(&two);
        let oracle = grid_nonlinear_oracle(&two);
        for (x, y) in b.coeffs().iter().zip(oracle.coeffs()) {
            assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
        }

        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for _ in 0..3 {
            let u = random_field(3, &mut rng);
            let b = nonlinear_term(&u);
            let oracle = grid_nonlinear_oracle(&u);
            for (x, y) in b.coeffs().iter().zip(oracle.coeffs()) {
                assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn energy_flux_vanishes() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        for _ in 0..100 {
            let u = random_field(3, &mut rng);
            let b = nonlinear_term(&u);
            let ip: f64 = b.coeffs().iter().zip(u.coeffs()).map(|(a, c)| a * c).sum();
            assert!(ip.abs() <= 1e-12, "flux = {ip}");
        }
    }

    #[test]
    fn translation_is_exact() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let u = random_field(3, &mut rng);
        let c = [0.7, -1.9];
        let t = u.translate(c);
        for _ in 0..10 {
            let x = [rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI)];
            let shifted = t.velocity(x);
            let orig = u.velocity([x[0] - c[0], x[1] - c[1]]);
            assert_abs_diff_eq!(shifted[0], orig[0], epsilon = 1e-13);
            assert_abs_diff_eq!(shifted[1], orig[1], epsilon = 1e-13);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn coefficient_access_outside_cutoff_is_zero(j1 in 3i32..10, j2 in -10i32..10) {
                let u = FourierField::unit(2, [1, 1]);
                prop_assert_eq!(u.get([j1, j2]), 0.0);
            }

            #[test]
            fn torus_displacement_within_pi(a1 in 0.0..(2.0*PI), a2 in 0.0..(2.0*PI),
                                            b1 in 0.0..(2.0*PI), b2 in 0.0..(2.0*PI)) {
                let d = torus_displacement([a1, a2], [b1, b2]);
                prop_assert!(d[0] > -PI - 1e-12 && d[0] <= PI + 1e-12);
                prop_assert!(d[1] > -PI - 1e-12 && d[1] <= PI + 1e-12);
                // moving by d lands on b modulo 2π
                let w = wrap_point([a1 + d[0], a2 + d[1]]);
                prop_assert!(torus_distance(w, [b1, b2]) <= 1e-9);
            }
        }
    }
}
