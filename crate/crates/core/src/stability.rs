//! Fibered conjugacy between the projective actions of two dominated d = 2
//! cocycles, built orbit by orbit from fundamental domains.
//!
//! On a periodic orbit the return map acts on the direction circle with four
//! fixed directions (±repelling, ±attracting). Each of the two half-turn arcs is
//! a fundamental-domain problem: an affine map between the domains [c, f(c)) of
//! 𝒜 and ℬ extends uniquely to a conjugacy on the arc. Antipodal symmetry gives
//! the other half, and the dynamics transports h to the rest of the orbit.

use crate::base::BasePoint;
use crate::cocycle::MatrixCocycle;
use crate::domination::{domination_report, Verdict, DEFAULT_MARGIN, DEFAULT_N_MAX};
use crate::error::{Error, Result};
use crate::linalg::{rep_from, TAU};
use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use std::io::Write;

pub const DEFAULT_KNOT_COUNT: usize = 256;
pub const CONJUGACY_TOL: f64 = 1e-6;
const DYADIC_LEVELS: i32 = 24;
const MAX_ITER: usize = 4000;

fn ang(v: Vector2<f64>) -> f64 {
    v.y.atan2(v.x) / TAU
}

fn dir(theta: f64) -> Vector2<f64> {
    let (s, c) = (TAU * theta).sin_cos();
    Vector2::new(c, s)
}

/// Image direction of θ under m, as a number mod 1 in [0, 1).
fn act(m: &Matrix2<f64>, theta: f64) -> f64 {
    ang(m * dir(theta)).rem_euclid(1.0)
}

fn circle_dist(a: f64, b: f64) -> f64 {
    let r = (a - b).rem_euclid(1.0);
    r.min(1.0 - r)
}

fn m2(m: &crate::linalg::Mat) -> Matrix2<f64> {
    Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
}

/// Repelling and attracting directions (turns) of a hyperbolic map with positive eigenvalues.
fn fixed_directions(m: &Matrix2<f64>) -> Result<(f64, f64)> {
    let tr = m.trace();
    let det = m.determinant();
    let disc = tr * tr - 4.0 * det;
    if !(disc > 0.0) || !(det > 0.0) || !(tr > 0.0) {
        return Err(Error::NotDominated { index: 1 });
    }
    let eig = |lam: f64| -> f64 {
        let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
        let v = if (lam - a).abs() + b.abs() >= (lam - d).abs() + c.abs() {
            Vector2::new(b, lam - a)
        } else {
            Vector2::new(lam - d, c)
        };
        ang(v).rem_euclid(1.0)
    };
    let big = 0.5 * (tr + disc.sqrt());
    let small = det / big;
    Ok((eig(small), eig(big)))
}

/// One arc between a repelling and an attracting fixed direction, normalized so
/// that position 0 is the repeller and 1 the attractor.
#[derive(Debug, Clone)]
struct Arc {
    rep: f64,
    att: f64,
}

impl Arc {
    fn pos(&self, theta: f64) -> f64 {
        (theta - self.rep) / (self.att - self.rep)
    }

    fn at(&self, p: f64) -> f64 {
        self.rep + p * (self.att - self.rep)
    }

    /// Representative of a direction inside the arc (lifts differ by ½ turns).
    fn lift(&self, theta: f64) -> f64 {
        let (lo, hi) = if self.rep < self.att { (self.rep, self.att) } else { (self.att, self.rep) };
        let t = rep_from(theta, lo);
        // nearest half-turn representative; images can land an ulp outside
        let gap = |u: f64| (lo - u).max(u - hi).max(0.0);
        [t, t - 0.5, t - 1.0].into_iter().min_by(|u, v| gap(*u).total_cmp(&gap(*v))).expect("candidates")
    }
}

/// Return-map data on one arc for one cocycle.
#[derive(Debug, Clone)]
struct ArcMap {
    arc: Arc,
    m: Matrix2<f64>,
    minv: Matrix2<f64>,
}

impl ArcMap {
    fn f(&self, p: f64) -> f64 {
        self.arc.pos(self.arc.lift(act(&self.m, self.arc.at(p))))
    }

    fn finv(&self, p: f64) -> f64 {
        self.arc.pos(self.arc.lift(act(&self.minv, self.arc.at(p))))
    }
}

/// h on one arc: affine between fundamental domains [½, f(½)) of both maps.
#[derive(Debug, Clone)]
struct ArcConjugacy {
    a: ArcMap,
    b: ArcMap,
    fa_c: f64,
    fb_c: f64,
}

impl ArcConjugacy {
    fn new(a: ArcMap, b: ArcMap) -> Self {
        let fa_c = a.f(0.5);
        let fb_c = b.f(0.5);
        ArcConjugacy { a, b, fa_c, fb_c }
    }

    /// h in arc positions.
    fn eval(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        if p >= 1.0 {
            return 1.0;
        }
        let mut q = p;
        let mut k: i64 = 0;
        for _ in 0..MAX_ITER {
            // a step that jumps over the whole domain only happens at its
            // boundary, through rounding; snap to ½
            if q < 0.5 {
                let n = self.a.f(q);
                if n <= q {
                    break;
                }
                if n >= self.fa_c {
                    q = 0.5;
                    break;
                }
                q = n;
                k += 1;
            } else if q >= self.fa_c {
                let n = self.a.finv(q);
                if n >= q {
                    break;
                }
                if n < 0.5 {
                    q = 0.5;
                    k -= 1;
                    break;
                }
                q = n;
                k -= 1;
            } else {
                break;
            }
        }
        if q < 0.5 && k > 0 && q <= 0.0 {
            return 0.0;
        }
        // q stuck outside the domain only at the fixed directions, up to rounding
        if !(0.5..self.fa_c).contains(&q) {
            return if q < 0.5 { 0.0 } else { 1.0 };
        }
        let mut r = 0.5 + (q - 0.5) * (self.fb_c - 0.5) / (self.fa_c - 0.5);
        if k > 0 {
            for _ in 0..k {
                r = self.b.finv(r);
            }
        } else {
            for _ in 0..(-k) {
                r = self.b.f(r);
            }
        }
        r
    }
}

/// The conjugacy on the fiber of the first point of one orbit.
#[derive(Debug, Clone)]
struct OrbitConjugacy {
    points: Vec<BasePoint>,
    a_steps: Vec<Matrix2<f64>>,
    b_steps: Vec<Matrix2<f64>>,
    arcs: [ArcConjugacy; 2],
    /// repelling directions of 𝒜 and ℬ at the first point, matched lifts
    rep_a: f64,
}

impl OrbitConjugacy {
    fn build(a: &MatrixCocycle, b: &MatrixCocycle, x: &BasePoint) -> Result<Self> {
        let sys = &a.base;
        let p = x.period(sys);
        let mut points = Vec::with_capacity(p);
        let mut y = x.clone();
        for _ in 0..p {
            points.push(y.clone());
            y = y.next(sys);
        }
        let a_steps: Vec<Matrix2<f64>> = points.iter().map(|y| m2(&a.eval(y))).collect();
        let b_steps: Vec<Matrix2<f64>> = points.iter().map(|y| m2(&b.eval(y))).collect();
        let ra = a_steps.iter().fold(Matrix2::identity(), |m, s| s * m);
        let rb = b_steps.iter().fold(Matrix2::identity(), |m, s| s * m);
        if !(ra.determinant() > 0.0 && rb.determinant() > 0.0) {
            return Err(Error::Orientation(format!("return map at {} reverses orientation", x.label())));
        }
        if ra.trace().signum() != rb.trace().signum() {
            return Err(Error::invalid("b", format!("return eigenvalue signs differ from 𝒜 at {}", x.label())));
        }
        // −M acts like M on lines; its positive eigenvalues fix each arc
        let s = ra.trace().signum();
        let (ma, mb) = (ra * s, rb * s);
        let (ra_dir, aa_dir) = fixed_directions(&ma)?;
        let (rb_dir, ab_dir) = fixed_directions(&mb)?;
        // B's repeller lift nearest to A's; attractor lifts inside the first half-turn
        let rb_l = [rb_dir, rb_dir + 0.5, rb_dir - 0.5, rb_dir + 1.0, rb_dir - 1.0]
            .into_iter()
            .min_by(|u, v| (u - ra_dir).abs().total_cmp(&(v - ra_dir).abs()))
            .expect("candidates");
        let aa_l = rep_from(aa_dir, ra_dir);
        let aa_l = if aa_l > ra_dir + 0.5 { aa_l - 0.5 } else { aa_l };
        let ab_l = rep_from(ab_dir, rb_l);
        let ab_l = if ab_l > rb_l + 0.5 { ab_l - 0.5 } else { ab_l };
        let inv = |m: Matrix2<f64>| m.try_inverse().expect("invertible return map");
        let arc_pair = |rep_a: f64, att_a: f64, rep_b: f64, att_b: f64| {
            ArcConjugacy::new(
                ArcMap { arc: Arc { rep: rep_a, att: att_a }, m: ma, minv: inv(ma) },
                ArcMap { arc: Arc { rep: rep_b, att: att_b }, m: mb, minv: inv(mb) },
            )
        };
        let arcs = [arc_pair(ra_dir, aa_l, rb_l, ab_l), arc_pair(ra_dir + 0.5, aa_l, rb_l + 0.5, ab_l)];
        Ok(OrbitConjugacy { points, a_steps, b_steps, arcs, rep_a: ra_dir })
    }

    /// h at the first point, θ in turns, value mod 1.
    fn h0(&self, theta: f64) -> f64 {
        let t = rep_from(theta, self.rep_a);
        // fold the antipodal half back
        let (t, shift) = if t >= self.rep_a + 0.5 { (t - 0.5, 0.5) } else { (t, 0.0) };
        let c = &self.arcs[0];
        let c2 = &self.arcs[1];
        let att = c.a.arc.att;
        let v = if t <= att {
            let p = c.a.arc.pos(t);
            c.b.arc.at(c.eval(p))
        } else {
            let p = c2.a.arc.pos(t);
            c2.b.arc.at(c2.eval(p))
        };
        (v + shift).rem_euclid(1.0)
    }

    fn partial(steps: &[Matrix2<f64>], j: usize) -> Matrix2<f64> {
        steps[..j].iter().fold(Matrix2::identity(), |m, s| s * m)
    }

    /// h at the j-th orbit point: B^{(j)} ∘ h_0 ∘ (A^{(j)})⁻¹.
    fn h(&self, j: usize, theta: f64) -> f64 {
        if j == 0 {
            return self.h0(theta);
        }
        let pa = Self::partial(&self.a_steps, j).try_inverse().expect("invertible");
        let pb = Self::partial(&self.b_steps, j);
        act(&pb, self.h0(act(&pa, theta)))
    }

    /// Repelling and attracting directions of 𝒜's return map at phase j.
    fn invariant_dirs(steps: &[Matrix2<f64>], j: usize) -> Result<(f64, f64)> {
        let p = steps.len();
        let m = (0..p).fold(Matrix2::identity(), |m, k| steps[(j + k) % p] * m);
        let m = m * m.trace().signum();
        fixed_directions(&m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberConjugacy {
    pub point: BasePoint,
    /// knots in [0, 1) (turns), ascending
    pub knots: Vec<f64>,
    /// strictly increasing lift of h at the knots
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiberedConjugacy {
    pub fibers: Vec<FiberConjugacy>,
    /// sup over fibers and knots of dist(h(ℙ𝒜·u), ℙℬ·h(u)), in turns
    pub defect: f64,
    pub within_tolerance: bool,
    /// sup |h(θ) − θ| over the knots, in turns
    pub distance_to_identity: f64,
    /// largest angle (turns) between ℬ's and 𝒜's invariant directions
    pub bundle_tilt: f64,
    /// sup over fixed directions of dist(h(e_𝒜), e_ℬ)
    pub alignment_error: f64,
    #[serde(skip)]
    orbits: Vec<OrbitConjugacy>,
}

impl FiberedConjugacy {
    /// h above a sampled point, θ in turns; value mod 1.
    pub fn eval(&self, x: &BasePoint, theta: f64) -> Option<f64> {
        self.orbits.iter().find_map(|o| o.points.iter().position(|p| p == x).map(|j| o.h(j, theta)))
    }

    /// Columns: sample, knot, value.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(e.to_string());
        wr.write_record(["sample", "knot", "value"]).map_err(io)?;
        for (i, f) in self.fibers.iter().enumerate() {
            for (k, v) in f.knots.iter().zip(&f.values) {
                wr.write_record([i.to_string(), format!("{k:e}"), format!("{v:e}")]).map_err(io)?;
            }
        }
        wr.flush().map_err(|e| Error::Io(e.to_string()))
    }
}

/// Uniform knots plus dyadic clusters around the repelling directions.
fn knot_grid(count: usize, repellers: &[f64]) -> Vec<f64> {
    let mut k: Vec<f64> = (0..count).map(|i| i as f64 / count as f64).collect();
    for &r in repellers {
        for base in [r, r + 0.5] {
            k.push(base.rem_euclid(1.0));
            for l in 3..DYADIC_LEVELS {
                let e = 2f64.powi(-l);
                k.push((base + e).rem_euclid(1.0));
                k.push((base - e).rem_euclid(1.0));
            }
        }
    }
    k.sort_by(f64::total_cmp);
    k.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    k
}

/// Increasing lift of sampled values mod 1 (consecutive knots move by less than a turn).
fn lift_values(knots: &[f64], vals: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(vals.len());
    let first = knots[0] + crate::linalg::wrap_half(vals[0] - knots[0]);
    out.push(first);
    for &v in &vals[1..] {
        let prev = *out.last().expect("nonempty");
        out.push(rep_from(v, prev));
    }
    out
}

fn check_dominated(c: &MatrixCocycle, points: &[BasePoint]) -> Result<()> {
    let rep = domination_report(c, points, DEFAULT_N_MAX, DEFAULT_MARGIN)?;
    if rep.verdict(1) != Verdict::Dominated {
        return Err(Error::NotDominated { index: 1 });
    }
    Ok(())
}

/// Builds h with h∘ℙ𝒜 = ℙℬ∘h above the orbits of the samples.
pub fn conjugate_projective_pair(
    a: &MatrixCocycle,
    b: &MatrixCocycle,
    samples: &[BasePoint],
    knot_count: usize,
) -> Result<FiberedConjugacy> {
    if a.dim != 2 || b.dim != 2 {
        return Err(Error::invalid("cocycle.dim", "projective conjugacies are built for d = 2 only"));
    }
    if a.base != b.base {
        return Err(Error::invalid("b.base", "both cocycles need the same base"));
    }
    if samples.is_empty() || knot_count < 4 {
        return Err(Error::invalid("samples", "need samples and at least 4 knots"));
    }
    let mut orbits: Vec<OrbitConjugacy> = Vec::new();
    let mut all: Vec<BasePoint> = Vec::new();
    for x in samples {
        if all.contains(x) {
            continue;
        }
        let o = OrbitConjugacy::build(a, b, x)?;
        all.extend(o.points.iter().cloned());
        orbits.push(o);
    }
    check_dominated(a, &all)?;
    check_dominated(b, &all)?;
    let mut fibers = Vec::new();
    let (mut defect, mut dist_id, mut tilt, mut align): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for o in &orbits {
        let p = o.points.len();
        for j in 0..p {
            let (ra, aa) = OrbitConjugacy::invariant_dirs(&o.a_steps, j)?;
            let (rb, ab) = OrbitConjugacy::invariant_dirs(&o.b_steps, j)?;
            for (ea, eb) in [(ra, rb), (aa, ab)] {
                tilt = tilt.max(circle_dist(ea, eb).min(circle_dist(ea + 0.5, eb)));
                for s in [0.0, 0.5] {
                    let img = o.h(j, ea + s);
                    align = align.max(circle_dist(img, eb).min(circle_dist(img, eb + 0.5)));
                }
            }
            let knots = knot_grid(knot_count, &[ra]);
            let vals: Vec<f64> = knots.iter().map(|&t| o.h(j, t)).collect();
            let values = lift_values(&knots, &vals);
            let next = (j + 1) % p;
            for (&u, &hu) in knots.iter().zip(&vals) {
                let lhs = o.h(next, act(&o.a_steps[j], u));
                let rhs = act(&o.b_steps[j], hu);
                defect = defect.max(circle_dist(lhs, rhs));
                dist_id = dist_id.max(circle_dist(hu, u));
            }
            fibers.push(FiberConjugacy { point: o.points[j].clone(), knots, values });
        }
    }
    Ok(FiberedConjugacy {
        fibers,
        defect,
        within_tolerance: defect <= CONJUGACY_TOL,
        distance_to_identity: dist_id,
        bundle_tilt: tilt,
        alignment_error: align,
        orbits,
    })
}

/// Fiber-wise lift checks: strictly increasing, and one turn in one turn.
pub fn lift_is_degree_one(f: &FiberConjugacy) -> bool {
    let inc = f.values.windows(2).all(|w| w[1] > w[0]);
    let span = f.values.last().copied().unwrap_or(0.0) - f.values[0];
    inc && span < 1.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::SymbolicSystem;
    use crate::linalg::{diag, rot2};
    use approx::assert_relative_eq;

    fn constant(m: crate::linalg::Mat) -> MatrixCocycle {
        MatrixCocycle::constant(SymbolicSystem::full_shift(2), m).unwrap()
    }

    fn pts() -> Vec<BasePoint> {
        vec![BasePoint::shift(&[0], 0), BasePoint::shift(&[0, 1], 0)]
    }

    #[test]
    fn self_conjugacy_is_identity() {
        let a = constant(diag(&[2.0, 0.5]));
        let h = conjugate_projective_pair(&a, &a, &pts(), 64).unwrap();
        assert!(h.defect <= 1e-12, "{}", h.defect);
        assert!(h.distance_to_identity <= 1e-12, "{}", h.distance_to_identity);
        assert!(h.fibers.iter().all(lift_is_degree_one));
    }

    #[test]
    fn north_south_pair() {
        let a = constant(diag(&[2.0, 0.5]));
        let b = constant(diag(&[2.1, 1.0 / 2.1]));
        let h = conjugate_projective_pair(&a, &b, &pts(), DEFAULT_KNOT_COUNT).unwrap();
        assert!(h.defect <= 1e-6, "{}", h.defect);
        assert!(h.distance_to_identity <= 0.05, "{}", h.distance_to_identity);
        // invariant directions are fixed
        let x = &pts()[0];
        for t in [0.0, 0.25, 0.5, 0.75] {
            assert_relative_eq!(h.eval(x, t).unwrap(), t, epsilon = 1e-12);
        }
    }

    #[test]
    fn tilted_bundles_are_aligned() {
        let a = constant(diag(&[2.0, 0.5]));
        let b = constant(rot2(0.01) * diag(&[2.0, 0.5]));
        let h = conjugate_projective_pair(&a, &b, &pts(), DEFAULT_KNOT_COUNT).unwrap();
        assert!(h.bundle_tilt > 1e-4);
        assert!(h.alignment_error <= 1e-8, "{}", h.alignment_error);
        assert!(h.defect <= 1e-6, "{}", h.defect);
    }

    #[test]
    fn locally_constant_pair_over_longer_orbits() {
        let sys = SymbolicSystem::full_shift(2);
        let a = MatrixCocycle::locally_constant(sys.clone(), vec![diag(&[2.0, 0.5]), rot2(0.1) * diag(&[3.0, 1.0 / 3.0])]).unwrap();
        let b = MatrixCocycle::locally_constant(sys, vec![rot2(0.02) * diag(&[2.2, 1.0 / 2.2]), rot2(0.1) * diag(&[3.0, 1.0 / 3.0])]).unwrap();
        let samples = vec![BasePoint::shift(&[0, 1], 0), BasePoint::shift(&[0, 0, 1], 1)];
        let h = conjugate_projective_pair(&a, &b, &samples, DEFAULT_KNOT_COUNT).unwrap();
        assert_eq!(h.fibers.len(), 5);
        assert!(h.within_tolerance, "{}", h.defect);
        assert!(h.alignment_error <= 1e-8);
        assert!(h.fibers.iter().all(lift_is_degree_one));
    }

    // fixed directions of the return map land within rounding of the arc ends
    // and of the fundamental domain boundary here
    #[test]
    fn boundary_rounding_cases() {
        let sys = SymbolicSystem::full_shift(2);
        let samples: Vec<BasePoint> = [&[0u8][..], &[1], &[0, 0, 1], &[0, 1, 1]].iter().map(|w| BasePoint::shift(w, 0)).collect();
        for (r0, r1) in [(0.05 - 0.2, 0.1 - 0.03), (0.4, 0.0)] {
            let a = MatrixCocycle::locally_constant(sys.clone(), vec![rot2(r0) * diag(&[2.0, 0.5]), rot2(r1) * diag(&[3.0, 1.0 / 3.0])])
                .unwrap();
            let h = conjugate_projective_pair(&a, &a, &samples, DEFAULT_KNOT_COUNT).unwrap();
            assert!(h.defect <= 1e-12, "{r0} {r1}: {}", h.defect);
            assert!(h.distance_to_identity <= 1e-12);
        }
    }

    #[test]
    fn rotation_is_rejected() {
        let a = constant(rot2(0.4));
        assert!(conjugate_projective_pair(&a, &a, &pts(), 64).is_err());
    }
}
