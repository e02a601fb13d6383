//! One-parameter families of cocycles.
//!
//! A path is evaluated lazily: `fiber(x)` caches whatever is needed above one
//! base point so that t ↦ A_t(x) is cheap, which is what the winding engine
//! hammers on.

use crate::base::{word_to_string, BasePoint, SymbolicSystem};
use crate::cocycle::{mat_serde, Fibered, Generator, MatrixCocycle};
use crate::error::{Error, Result};
use crate::linalg::{op_norm, orthonormalize, rot2, Mat};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const DEFAULT_STEP_CAP: f64 = 0.05;

/// An orthonormal d×k frame (serialized as rows).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame(#[serde(with = "mat_serde")] pub Mat);

/// Oriented planes rotated by a rotation family; identity on their orthogonal complement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RotationField {
    /// d = 2, the whole fiber.
    WholePlane,
    /// The same planes above every point.
    Constant { planes: Vec<Frame> },
    /// Planes frozen on depth-k cylinders; the rotation acting on the fiber over
    /// y uses the planes of y's depth-k word.
    Cylinder { depth: usize, planes: BTreeMap<String, Vec<Frame>> },
}

impl RotationField {
    /// Orthogonalizes the planes against each other, in order, keeping orientations.
    pub fn constant(planes: Vec<Mat>) -> Self {
        RotationField::Constant { planes: orthogonalize_planes(&planes).into_iter().map(Frame).collect() }
    }

    pub fn cylinder(depth: usize, planes: BTreeMap<Vec<u8>, Vec<Mat>>) -> Self {
        let planes = planes
            .into_iter()
            .map(|(w, ps)| (word_to_string(&w), orthogonalize_planes(&ps).into_iter().map(Frame).collect()))
            .collect();
        RotationField::Cylinder { depth, planes }
    }

    pub fn plane_count(&self) -> usize {
        match self {
            RotationField::WholePlane => 1,
            RotationField::Constant { planes } => planes.len(),
            RotationField::Cylinder { planes, .. } => planes.values().next().map(|p| p.len()).unwrap_or(0),
        }
    }

    /// Planes above the point y.
    pub fn planes_at(&self, y: &BasePoint) -> Vec<Mat> {
        match self {
            RotationField::WholePlane => vec![Mat::identity(2, 2)],
            RotationField::Constant { planes } => planes.iter().map(|f| f.0.clone()).collect(),
            RotationField::Cylinder { depth, planes } => {
                let w = word_to_string(&y.forward_symbols(*depth));
                planes.get(&w).map(|p| p.iter().map(|f| f.0.clone()).collect()).unwrap_or_default()
            }
        }
    }

    /// The orthogonal map rotating plane i by angles[i].
    pub fn rotation(planes: &[Mat], angles: &[f64], d: usize) -> Mat {
        let mut r = Mat::identity(d, d);
        for (p, &a) in planes.iter().zip(angles) {
            r = plane_rotation(p, a) * r;
        }
        r
    }
}

fn orthogonalize_planes(planes: &[Mat]) -> Vec<Mat> {
    if planes.is_empty() {
        return Vec::new();
    }
    let all = Mat::from_columns(&planes.iter().flat_map(|p| p.column_iter().map(|c| c.clone_owned())).collect::<Vec<_>>());
    let q = orthonormalize(&all);
    (0..planes.len()).map(|i| q.columns(2 * i, 2).into_owned()).collect()
}

/// Rotation by `angle` on the oriented plane spanned by the two orthonormal columns of `p`.
pub fn plane_rotation(p: &Mat, angle: f64) -> Mat {
    let d = p.nrows();
    if d == 2 && p.ncols() == 2 && (p - Mat::identity(2, 2)).norm() == 0.0 {
        return rot2(angle);
    }
    let (s, c) = angle.sin_cos();
    let e1 = p.column(0);
    let e2 = p.column(1);
    let mut r = Mat::identity(d, d);
    r += (e1 * e1.transpose() + e2 * e2.transpose()) * (c - 1.0);
    r += (e2 * e1.transpose() - e1 * e2.transpose()) * s;
    r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PathKind {
    /// A_t(x) = R_{rates·t}(Tx)·A(x)
    RotationFamily { cocycle: MatrixCocycle, field: RotationField, rates: Vec<f64> },
    /// A_s = (1 − s)·A + s·B with s the normalized parameter
    LinearInterpolation { from: MatrixCocycle, to: MatrixCocycle },
    /// Piecewise linear through cocycles at the given knots
    Sampled { cocycles: Vec<MatrixCocycle>, knots: Vec<f64> },
    /// Part i runs over [i, i+1]
    Concat { parts: Vec<CocyclePath> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocyclePath {
    pub family: PathKind,
    pub t_range: [f64; 2],
    #[serde(default)]
    pub reversed: bool,
}

/// Cached data above one base point for fast t-evaluation.
#[derive(Debug, Clone)]
pub enum FiberFamily {
    Rotation { a: Mat, planes: Vec<Mat>, rates: Vec<f64> },
    Interp { a: Mat, b: Mat },
    Sampled { mats: Vec<Mat>, knots: Vec<f64> },
    Concat { parts: Vec<(FiberFamily, [f64; 2], bool)> },
}

impl FiberFamily {
    fn eval(&self, t: f64, range: [f64; 2]) -> Mat {
        match self {
            FiberFamily::Rotation { a, planes, rates } => {
                let angles: Vec<f64> = rates.iter().map(|r| r * t).collect();
                RotationField::rotation(planes, &angles, a.nrows()) * a
            }
            FiberFamily::Interp { a, b } => {
                let s = normalized(t, range);
                a * (1.0 - s) + b * s
            }
            FiberFamily::Sampled { mats, knots } => {
                let k = segment(knots, t);
                let s = (t - knots[k]) / (knots[k + 1] - knots[k]);
                &mats[k] * (1.0 - s) + &mats[k + 1] * s
            }
            FiberFamily::Concat { parts } => {
                let i = (t.floor().max(0.0) as usize).min(parts.len() - 1);
                let (f, r, rev) = &parts[i];
                let s = t - i as f64;
                let s = if *rev { 1.0 - s } else { s };
                f.eval(r[0] + s * (r[1] - r[0]), *r)
            }
        }
    }
}

fn normalized(t: f64, range: [f64; 2]) -> f64 {
    if range[1] == range[0] {
        0.0
    } else {
        (t - range[0]) / (range[1] - range[0])
    }
}

fn segment(knots: &[f64], t: f64) -> usize {
    let n = knots.len();
    match knots.iter().position(|&k| k > t) {
        None => n - 2,
        Some(0) => 0,
        Some(i) => (i - 1).min(n - 2),
    }
}

/// A single cocycle of a path, usable wherever a cocycle is.
pub struct PathSlice<'a> {
    pub path: &'a CocyclePath,
    pub t: f64,
}

impl Fibered for PathSlice<'_> {
    fn system(&self) -> &SymbolicSystem {
        self.path.system()
    }

    fn dim(&self) -> usize {
        self.path.dim()
    }

    fn matrix_at(&self, x: &BasePoint) -> Mat {
        self.path.matrix(self.t, x)
    }
}

impl CocyclePath {
    pub fn rotation_family(cocycle: MatrixCocycle, field: RotationField, rates: Vec<f64>, t_range: [f64; 2]) -> Result<Self> {
        let p = CocyclePath { family: PathKind::RotationFamily { cocycle, field, rates }, t_range, reversed: false };
        p.validate()?;
        Ok(p)
    }

    /// t ↦ R_{δt}∘𝒜 on the whole plane, t ∈ [0, 1].
    pub fn plane_rotation(cocycle: MatrixCocycle, delta: f64) -> Result<Self> {
        Self::rotation_family(cocycle, RotationField::WholePlane, vec![delta], [0.0, 1.0])
    }

    pub fn interpolation(from: MatrixCocycle, to: MatrixCocycle) -> Result<Self> {
        let p = CocyclePath { family: PathKind::LinearInterpolation { from, to }, t_range: [0.0, 1.0], reversed: false };
        p.validate()?;
        Ok(p)
    }

    pub fn sampled(cocycles: Vec<MatrixCocycle>, knots: Vec<f64>) -> Result<Self> {
        let t_range = [knots.first().copied().unwrap_or(0.0), knots.last().copied().unwrap_or(0.0)];
        let p = CocyclePath { family: PathKind::Sampled { cocycles, knots }, t_range, reversed: false };
        p.validate()?;
        Ok(p)
    }

    pub fn constant(cocycle: MatrixCocycle) -> Result<Self> {
        Self::interpolation(cocycle.clone(), cocycle)
    }

    /// φ * ψ * …; consecutive endpoints must agree.
    pub fn concat(parts: Vec<CocyclePath>) -> Result<Self> {
        let n = parts.len();
        let p = CocyclePath { family: PathKind::Concat { parts }, t_range: [0.0, n as f64], reversed: false };
        p.validate()?;
        Ok(p)
    }

    pub fn reverse(&self) -> Self {
        let mut p = self.clone();
        p.reversed = !p.reversed;
        p
    }

    pub fn start_cocycle(&self) -> &MatrixCocycle {
        match &self.family {
            PathKind::RotationFamily { cocycle, .. } => cocycle,
            PathKind::LinearInterpolation { from, .. } => from,
            PathKind::Sampled { cocycles, .. } => &cocycles[0],
            PathKind::Concat { parts } => parts[0].start_cocycle(),
        }
    }

    pub fn system(&self) -> &SymbolicSystem {
        &self.start_cocycle().base
    }

    pub fn dim(&self) -> usize {
        self.start_cocycle().dim
    }

    pub fn validate(&self) -> Result<()> {
        let [t0, t1] = self.t_range;
        if !(t0 <= t1) || !t0.is_finite() || !t1.is_finite() {
            return Err(Error::invalid("path.t_range", "need finite t0 ≤ t1"));
        }
        match &self.family {
            PathKind::RotationFamily { cocycle, field, rates } => {
                cocycle.validate()?;
                if rates.len() != field.plane_count() {
                    return Err(Error::invalid("path.rates", "one rate per rotated plane"));
                }
                if matches!(field, RotationField::WholePlane) && cocycle.dim != 2 {
                    return Err(Error::invalid("path.field", "whole-plane rotation needs d = 2"));
                }
                if let RotationField::Cylinder { .. } = field {
                    if !cocycle.base.is_shift() {
                        return Err(Error::invalid("path.field", "cylinder fields need a shift base"));
                    }
                }
            }
            PathKind::LinearInterpolation { from, to } => {
                from.validate()?;
                to.validate()?;
                if from.base != to.base || from.dim != to.dim {
                    return Err(Error::invalid("path.to", "endpoints differ in base or dimension"));
                }
            }
            PathKind::Sampled { cocycles, knots } => {
                if cocycles.len() < 2 || cocycles.len() != knots.len() {
                    return Err(Error::invalid("path.knots", "need ≥ 2 cocycles and one knot each"));
                }
                if knots.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::invalid("path.knots", "knots must increase"));
                }
                for (i, c) in cocycles.iter().enumerate() {
                    c.validate().map_err(|e| Error::invalid(format!("path.cocycles[{i}]"), e.to_string()))?;
                    if c.base != cocycles[0].base || c.dim != cocycles[0].dim {
                        return Err(Error::invalid(format!("path.cocycles[{i}]"), "base or dimension differs"));
                    }
                }
            }
            PathKind::Concat { parts } => {
                if parts.is_empty() {
                    return Err(Error::invalid("path.parts", "empty concatenation"));
                }
                for p in parts {
                    p.validate()?;
                }
                for (i, w) in parts.windows(2).enumerate() {
                    let pts = sample_points(w[0].start_cocycle());
                    let gap = pts
                        .iter()
                        .map(|x| op_norm(&(w[0].matrix(w[0].t_range[1], x) - w[1].matrix(w[1].t_range[0], x))))
                        .fold(0.0, f64::max);
                    if gap > 1e-12 {
                        return Err(Error::invalid(format!("path.parts[{}]", i + 1), "does not start where the previous part ends"));
                    }
                }
            }
        }
        self.check_det_floor()
    }

    fn check_det_floor(&self) -> Result<()> {
        if let PathKind::RotationFamily { .. } = self.family {
            return Ok(());
        }
        let c = self.start_cocycle();
        let pts = sample_points(c);
        let [t0, t1] = self.t_range;
        for k in 0..=32 {
            let t = t0 + (t1 - t0) * k as f64 / 32.0;
            for x in &pts {
                let det = self.matrix(t, x).determinant();
                if !(det.abs() >= c.det_floor) {
                    return Err(Error::DetFloor { det, floor: c.det_floor, location: format!("t = {t}, {}", x.label()) });
                }
            }
        }
        Ok(())
    }

    pub fn slice(&self, t: f64) -> PathSlice<'_> {
        PathSlice { path: self, t }
    }

    fn effective_t(&self, t: f64) -> f64 {
        if self.reversed {
            self.t_range[0] + self.t_range[1] - t
        } else {
            t
        }
    }

    pub fn matrix(&self, t: f64, x: &BasePoint) -> Mat {
        self.fiber(x).eval(self.effective_t(t), self.t_range)
    }

    /// Cached data above x; evaluate with [`CocyclePath::fiber_at`].
    pub fn fiber(&self, x: &BasePoint) -> FiberFamily {
        match &self.family {
            PathKind::RotationFamily { cocycle, field, rates } => {
                let planes = field.planes_at(&x.next(&cocycle.base));
                FiberFamily::Rotation { a: cocycle.eval(x), planes, rates: rates.clone() }
            }
            PathKind::LinearInterpolation { from, to } => FiberFamily::Interp { a: from.eval(x), b: to.eval(x) },
            PathKind::Sampled { cocycles, knots } => {
                FiberFamily::Sampled { mats: cocycles.iter().map(|c| c.eval(x)).collect(), knots: knots.clone() }
            }
            PathKind::Concat { parts } => FiberFamily::Concat {
                parts: parts.iter().map(|p| (p.fiber(x), p.t_range, p.reversed)).collect(),
            },
        }
    }

    pub fn fiber_at(&self, fiber: &FiberFamily, t: f64) -> Mat {
        fiber.eval(self.effective_t(t), self.t_range)
    }

    /// Knots t_0 < … < t_K covering t_range with adjacent slices within
    /// `step_cap` in sup norm (checked on the sample points of the base).
    pub fn knots(&self, step_cap: f64) -> Vec<f64> {
        let [t0, t1] = self.t_range;
        if t1 == t0 {
            return vec![t0];
        }
        let pts = sample_points(self.start_cocycle());
        let fibers: Vec<FiberFamily> = pts.iter().map(|x| self.fiber(x)).collect();
        let dist = |a: f64, b: f64| {
            fibers.iter().map(|f| op_norm(&(self.fiber_at(f, a) - self.fiber_at(f, b)))).fold(0.0, f64::max)
        };
        let mut out = vec![t0];
        let mut t = t0;
        let mut h = (t1 - t0) / 8.0;
        while t < t1 {
            let mut next = (t + h).min(t1);
            while dist(t, next) > step_cap && next - t > 1e-12 * (t1 - t0) {
                h *= 0.5;
                next = (t + h).min(t1);
            }
            out.push(next);
            t = next;
            h *= 2.0;
        }
        out
    }
}

/// Points at which a cocycle takes all of its values (one per cell over a shift).
pub fn sample_points(c: &MatrixCocycle) -> Vec<BasePoint> {
    match &c.generator {
        Generator::LocallyConstant { .. } => {
            c.cells().into_iter().filter_map(|w| periodic_extension(&c.base, &w)).map(|w| BasePoint::shift(&w, 0)).collect()
        }
        _ => c.sample_grid(64),
    }
}

/// Shortest admissible cycle whose word starts with `w` (breadth-first over continuations).
pub fn periodic_extension(sys: &SymbolicSystem, w: &[u8]) -> Option<Vec<u8>> {
    if w.is_empty() {
        return (0..sys.alphabet_size as u8).map(|s| vec![s]).find(|c| sys.admissible_cycle(c));
    }
    if !sys.admissible_word(w) {
        return None;
    }
    let mut frontier = vec![w.to_vec()];
    for _ in 0..=sys.alphabet_size {
        let mut next = Vec::new();
        for u in frontier {
            if sys.admissible_cycle(&u) {
                return Some(u);
            }
            for s in 0..sys.alphabet_size as u8 {
                let mut v = u.clone();
                v.push(s);
                if sys.admissible_word(&v) {
                    next.push(v);
                }
            }
        }
        frontier = next;
    }
    None
}
