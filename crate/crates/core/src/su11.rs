//! SL(2,ℝ) as Möbius isometries of the unit disk, the multiplicative cocycle τ
//! and the additive cocycle δ obtained by lifting (1/2πi)·log τ along paths.
//!
//! Coordinates: a real vector (x, y) is sent to (x + iy, x − iy), so the direction
//! θ corresponds to the boundary point e^{2iθ} and a rotation by δ has u = e^{iδ}.
//! The disk point of a vector pair (w₁, w₂) is z = w₁/w₂.

use crate::base::{BasePoint, InvariantMeasure};
use crate::error::{Error, Result};
use crate::linalg::{Mat, TAU};
use crate::path::CocyclePath;
use crate::rotation::{cycle_of, path_rotation_number, RotationOptions};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const INVARIANT_TOL: f64 = 1e-10;
/// Disk orbits are pulled back to this radius.
pub const DISK_RADIUS: f64 = 1.0 - 1e-12;
const MAX_BISECT: usize = 48;
const INITIAL_STEPS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SU11Matrix {
    pub u: Complex64,
    pub v: Complex64,
}

impl SU11Matrix {
    pub const IDENTITY: SU11Matrix = SU11Matrix { u: Complex64::new(1.0, 0.0), v: Complex64::new(0.0, 0.0) };

    /// |u|² − |v|², which is 1 on SU(1,1).
    pub fn form(&self) -> f64 {
        self.u.norm_sqr() - self.v.norm_sqr()
    }

    /// Product in the (u, v̄; v, ū) packing.
    pub fn mul(&self, o: &SU11Matrix) -> SU11Matrix {
        SU11Matrix { u: self.u * o.u + self.v.conj() * o.v, v: self.v * o.u + self.u.conj() * o.v }
    }

    /// z ↦ (uz + v̄)/(vz + ū).
    pub fn mobius(&self, z: Complex64) -> Complex64 {
        (self.u * z + self.v.conj()) / tau(self, z)
    }

    /// Rows of the complex matrix.
    pub fn rows(&self) -> [[Complex64; 2]; 2] {
        [[self.u, self.v.conj()], [self.v, self.u.conj()]]
    }
}

fn pack(a: f64, b: f64, c: f64, d: f64) -> SU11Matrix {
    SU11Matrix { u: Complex64::new(0.5 * (a + d), 0.5 * (c - b)), v: Complex64::new(0.5 * (a - d), -0.5 * (b + c)) }
}

/// The SU(1,1) image of an SL(2,ℝ) matrix.
pub fn to_su11(m: &Mat) -> Result<SU11Matrix> {
    if m.nrows() != 2 || m.ncols() != 2 {
        return Err(Error::invalid("matrix", "need a 2×2 matrix"));
    }
    let det = m.determinant();
    if (det - 1.0).abs() > INVARIANT_TOL {
        return Err(Error::NotUnimodular(det));
    }
    Ok(pack(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]))
}

/// Image of M/√det M for det M > 0.
fn to_su11_normalized(m: &Mat) -> Result<SU11Matrix> {
    let det = m.determinant();
    if !(det > 0.0) {
        return Err(Error::Orientation(format!("det = {det:e} ≤ 0 has no SU(1,1) image")));
    }
    let s = det.sqrt().recip();
    Ok(pack(m[(0, 0)] * s, m[(0, 1)] * s, m[(1, 0)] * s, m[(1, 1)] * s))
}

/// τ_A(z) = vz + ū.
pub fn tau(a: &SU11Matrix, z: Complex64) -> Complex64 {
    a.v * z + a.u.conj()
}

/// Running lift of (1/2πi)·log τ, summed over the paths pushed so far.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DeltaAccumulator {
    pub lift: Complex64,
    pub n: usize,
}

impl DeltaAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Lifts (1/2πi)·log f(s) over s ∈ [0, 1], adds the increment, and returns it.
    pub fn push(&mut self, f: impl Fn(f64) -> Complex64) -> Complex64 {
        let d = lift_increment(&f);
        self.lift += d;
        self.n += 1;
        d
    }

    pub fn average(&self) -> Complex64 {
        if self.n == 0 {
            Complex64::new(0.0, 0.0)
        } else {
            self.lift / self.n as f64
        }
    }
}

/// Σ principal logs of consecutive ratios, each with |ratio − 1| < ½.
pub fn lift_increment(f: &impl Fn(f64) -> Complex64) -> Complex64 {
    fn seg(f: &impl Fn(f64) -> Complex64, s0: f64, s1: f64, f0: Complex64, f1: Complex64, depth: usize) -> Complex64 {
        let r = f1 / f0;
        if (r - 1.0).norm() < 0.5 || depth >= MAX_BISECT {
            return r.ln();
        }
        let sm = 0.5 * (s0 + s1);
        let fm = f(sm);
        seg(f, s0, sm, f0, fm, depth + 1) + seg(f, sm, s1, fm, f1, depth + 1)
    }
    let mut acc = Complex64::new(0.0, 0.0);
    let mut prev = f(0.0);
    for i in 1..=INITIAL_STEPS {
        let s1 = i as f64 / INITIAL_STEPS as f64;
        let cur = f(s1);
        acc += seg(f, (i - 1) as f64 / INITIAL_STEPS as f64, s1, prev, cur, 0);
        prev = cur;
    }
    acc / Complex64::new(0.0, TAU)
}

fn pull_in(z: Complex64, count: &mut usize) -> Complex64 {
    let r = z.norm();
    if r > DISK_RADIUS {
        *count += 1;
        z * (DISK_RADIUS / r)
    } else {
        z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AkRotation {
    /// Birkhoff average (1/n)Σδ: real part and imaginary part
    pub re: f64,
    pub im: f64,
    pub n: usize,
    /// how many disk points had to be pulled back inside the disk
    pub renormalizations: usize,
}

impl AkRotation {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

/// Feeds δ(T^k x), k < n, to `sink`; returns the renormalization count.
fn walk_deltas(
    path: &CocyclePath,
    x: &BasePoint,
    z0: Complex64,
    z1: Complex64,
    n: usize,
    mut sink: impl FnMut(Complex64),
) -> Result<usize> {
    if path.dim() != 2 {
        return Err(Error::invalid("path", "SU(1,1) needs d = 2"));
    }
    if n == 0 {
        return Err(Error::invalid("n", "need n ≥ 1"));
    }
    if z0.norm() > 1.0 || z1.norm() > 1.0 {
        return Err(Error::invalid("z", "disk points must lie in the closed unit disk"));
    }
    let sys = path.system();
    let [ta, tb] = path.t_range;
    let period = x.period(sys).max(1);
    // fibers repeat along the orbit; cache one period
    let mut fibers = Vec::with_capacity(period.min(n));
    let mut y = x.clone();
    for _ in 0..period.min(n) {
        fibers.push(path.fiber(&y));
        y = y.next(sys);
    }
    let mut renorm = 0usize;
    let (mut za, mut zb) = (pull_in(z0, &mut renorm), pull_in(z1, &mut renorm));
    for k in 0..n {
        let fib = &fibers[k % fibers.len()];
        let at = |t: f64| to_su11_normalized(&path.fiber_at(fib, t));
        let (ea, eb) = (at(ta)?, at(tb)?);
        // the determinant sign is checked once per fiber
        if k < fibers.len() {
            for i in 0..=16 {
                at(ta + (tb - ta) * i as f64 / 16.0)?;
            }
        }
        let (za0, zb0) = (za, zb);
        sink(lift_increment(&|s| {
            let t = ta + s * (tb - ta);
            let m = at(t).unwrap_or(SU11Matrix::IDENTITY);
            tau(&m, za0 + (zb0 - za0) * s)
        }));
        za = pull_in(ea.mobius(za), &mut renorm);
        zb = pull_in(eb.mobius(zb), &mut renorm);
    }
    Ok(renorm)
}

/// (1/n)·Σ_{k<n} δ(T^k x), δ being the lift of τ along the path between the
/// disk points z₀ and z₁ transported by the end cocycles.
pub fn ak_rotation_number(path: &CocyclePath, x: &BasePoint, z0: Complex64, z1: Complex64, n: usize) -> Result<AkRotation> {
    let mut acc = DeltaAccumulator::new();
    let renormalizations = walk_deltas(path, x, z0, z1, n, |d| {
        acc.lift += d;
        acc.n += 1;
    })?;
    let avg = acc.average();
    Ok(AkRotation { re: avg.re, im: avg.im, n, renormalizations })
}

/// The individual δ(T^k x), k < n.
pub fn ak_delta_trace(path: &CocyclePath, x: &BasePoint, z0: Complex64, z1: Complex64, n: usize) -> Result<Vec<Complex64>> {
    let mut out = Vec::with_capacity(n);
    walk_deltas(path, x, z0, z1, n, |d| out.push(d))?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AkConsistency {
    /// projective-convention rotation number, 2 × enclosure midpoint
    pub rho_p: f64,
    /// μ-average of Re δ
    pub delta_rho: f64,
    /// |ρ_P + 2·δρ|
    pub residual: f64,
    /// 2·enclosure width + 3/n
    pub uncertainty: f64,
    pub enclosure: (f64, f64),
    pub n: usize,
    pub renormalizations: usize,
}

impl AkConsistency {
    pub fn consistent(&self) -> bool {
        self.residual <= self.uncertainty
    }
}

/// Compares the enclosure of the rotation module with −2·δρ.
///
/// Along one path, Re Σ_{k<n} δ_k equals minus the polar-angle variation of the
/// n-fold product, which differs from any direction winding by less than ½ turn,
/// and the winding differs from n·ρ by at most 1; hence the 3/n tail term.
pub fn ak_consistency_check(path: &CocyclePath, mu: &InvariantMeasure, n: usize, opts: &RotationOptions) -> Result<AkConsistency> {
    if path.dim() != 2 {
        return Err(Error::invalid("path", "SU(1,1) needs d = 2"));
    }
    let enc = path_rotation_number(path, mu, None, opts)?;
    let sys = path.system();
    mu.validate(sys)?;
    // every node measure here is uniform along whole cycles, so one start per cycle suffices
    let mut cycles: Vec<(Vec<BasePoint>, f64)> = Vec::new();
    for (x, w) in mu.nodes(sys) {
        match cycles.iter_mut().find(|(c, _)| c.contains(&x)) {
            Some(c) => c.1 += w,
            None => cycles.push((cycle_of(path, &x), w)),
        }
    }
    let zero = Complex64::new(0.0, 0.0);
    let parts: Vec<(f64, usize)> = cycles
        .par_iter()
        .map(|(c, w)| ak_rotation_number(path, &c[0], zero, zero, n).map(|r| (w * r.re, r.renormalizations)))
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = cycles.iter().map(|c| c.1).sum();
    let delta_rho = parts.iter().map(|p| p.0).sum::<f64>() / total;
    let renormalizations = parts.iter().map(|p| p.1).sum();
    let rho_p = 2.0 * enc.midpoint();
    Ok(AkConsistency {
        rho_p,
        delta_rho,
        residual: (rho_p + 2.0 * delta_rho).abs(),
        uncertainty: 2.0 * enc.width() + 3.0 / n as f64,
        enclosure: (enc.lower, enc.upper),
        n,
        renormalizations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::{PeriodicOrbit, SymbolicSystem};
    use crate::cocycle::MatrixCocycle;
    use crate::linalg::{diag, rot2};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_sl2(rng: &mut ChaCha8Rng) -> Mat {
        loop {
            let m = Mat::from_fn(2, 2, |_, _| rng.gen_range(-2.0..2.0));
            let d: f64 = m.determinant();
            if d > 0.1 {
                return m / d.sqrt();
            }
            if d < -0.1 {
                let mut m = m;
                m.swap_rows(0, 1);
                return m / (-d).sqrt();
            }
        }
    }

    /// Explicit conjugation (x, y) ↦ (x + iy, x − iy).
    fn conj_oracle(m: &Mat) -> [[Complex64; 2]; 2] {
        let p = [[c(1.0, 0.0), c(0.0, 1.0)], [c(1.0, 0.0), c(0.0, -1.0)]];
        let pinv = [[c(0.5, 0.0), c(0.5, 0.0)], [c(0.0, -0.5), c(0.0, 0.5)]];
        let mm = [[c(m[(0, 0)], 0.0), c(m[(0, 1)], 0.0)], [c(m[(1, 0)], 0.0), c(m[(1, 1)], 0.0)]];
        let mul = |a: [[Complex64; 2]; 2], b: [[Complex64; 2]; 2]| {
            let mut r = [[c(0.0, 0.0); 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
                }
            }
            r
        };
        mul(mul(p, mm), pinv)
    }

    #[test]
    fn images_of_simple_matrices() {
        let id = to_su11(&Mat::identity(2, 2)).unwrap();
        assert_eq!(id, SU11Matrix::IDENTITY);
        let r = to_su11(&rot2(0.7)).unwrap();
        assert!((r.u - c(0.0, 0.7).exp()).norm() < 1e-15 && r.v.norm() < 1e-15);
        assert!((tau(&r, c(0.0, 0.0)) - c(0.0, -0.7).exp()).norm() < 1e-15);
        let s = 0.8f64;
        let h = to_su11(&diag(&[s.exp(), (-s).exp()])).unwrap();
        assert_relative_eq!(h.u.norm(), s.cosh(), epsilon = 1e-14);
        assert_relative_eq!(h.v.norm(), s.sinh(), epsilon = 1e-14);
        assert!(matches!(to_su11(&diag(&[2.0, 1.0])), Err(Error::NotUnimodular(_))));
    }

    #[test]
    fn matches_explicit_conjugation_and_keeps_the_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let m = random_sl2(&mut rng);
            let a = to_su11(&m).unwrap();
            assert!((a.form() - 1.0).abs() <= 1e-10);
            let o = conj_oracle(&m);
            let rows = a.rows();
            for i in 0..2 {
                for j in 0..2 {
                    assert!((rows[i][j] - o[i][j]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn tau_is_a_cocycle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let (ma, mb) = (random_sl2(&mut rng), random_sl2(&mut rng));
            let (a, b) = (to_su11(&ma).unwrap(), to_su11(&mb).unwrap());
            let ab = to_su11(&(&ma * &mb)).unwrap();
            assert!((ab.u - a.mul(&b).u).norm() < 1e-12);
            let r: f64 = rng.gen_range(0.0..1.0);
            let z = Complex64::from_polar(r, rng.gen_range(0.0..TAU));
            let lhs = tau(&ab, z);
            let rhs = tau(&a, b.mobius(z)) * tau(&b, z);
            assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm().max(1.0));
        }
    }

    #[test]
    fn lift_reproduces_ratios() {
        let f = |s: f64| Complex64::from_polar(1.0 + s, 5.0 * TAU * s);
        let d = lift_increment(&f);
        assert_relative_eq!(d.re, 5.0, epsilon = 1e-12);
        let back = (c(0.0, TAU) * d).exp();
        assert!((back - f(1.0) / f(0.0)).norm() < 1e-9);
    }

    fn fixed_point_path(m: Mat, delta: f64) -> CocyclePath {
        let a = MatrixCocycle::constant(SymbolicSystem::full_shift(2), m).unwrap();
        CocyclePath::plane_rotation(a, delta).unwrap()
    }

    #[test]
    fn rotation_path_closed_form() {
        let delta = 0.6;
        let p = fixed_point_path(Mat::identity(2, 2), delta);
        let x = BasePoint::shift(&[0], 0);
        let r = ak_rotation_number(&p, &x, c(0.0, 0.0), c(0.3, 0.1), 50).unwrap();
        assert_relative_eq!(r.re, -delta / TAU, epsilon = 1e-9);
        let mu = InvariantMeasure::orbit(PeriodicOrbit::from_str_word("0").unwrap());
        let k = ak_consistency_check(&p, &mu, 100, &RotationOptions::default()).unwrap();
        assert_relative_eq!(k.rho_p, delta / std::f64::consts::PI, epsilon = 1e-9);
        assert_relative_eq!(k.delta_rho, -delta / TAU, epsilon = 1e-12);
        assert!(k.residual <= 1e-9, "{}", k.residual);
    }

    #[test]
    fn constant_path_has_no_real_part() {
        let p = fixed_point_path(diag(&[2.0, 0.5]), 0.0);
        let r = ak_rotation_number(&p, &BasePoint::shift(&[0], 0), c(0.2, 0.0), c(0.2, 0.0), 100).unwrap();
        assert_eq!(r.re, 0.0);
        let mu = InvariantMeasure::orbit(PeriodicOrbit::from_str_word("0").unwrap());
        let k = ak_consistency_check(&p, &mu, 100, &RotationOptions::default()).unwrap();
        assert!(k.consistent());
    }

    #[test]
    fn concatenated_paths_add() {
        let a = MatrixCocycle::constant(SymbolicSystem::full_shift(2), diag(&[1.5, 1.0 / 1.5])).unwrap();
        let p1 = CocyclePath::plane_rotation(a.clone(), 0.4).unwrap();
        let mid = MatrixCocycle::constant(SymbolicSystem::full_shift(2), rot2(0.4) * diag(&[1.5, 1.0 / 1.5])).unwrap();
        let p2 = CocyclePath::plane_rotation(mid, 0.9).unwrap();
        let whole = CocyclePath::concat(vec![p1.clone(), p2.clone()]).unwrap();
        let x = BasePoint::shift(&[0], 0);
        let z = c(0.1, -0.2);
        let r1 = ak_rotation_number(&p1, &x, z, z, 1).unwrap();
        let r2 = ak_rotation_number(&p2, &x, z, z, 1).unwrap();
        let r = ak_rotation_number(&whole, &x, z, z, 1).unwrap();
        assert!((r.value() - r1.value() - r2.value()).norm() <= 1e-10);
    }
}
