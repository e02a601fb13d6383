//! Explicit perturbations: rotation families on frozen bundles, singular-value
//! redistribution, moduli equalization, and the elliptic / simple-spectrum searches.

use crate::base::{enumerate_periodic_orbits, homoclinic_periodic_approximations, BasePoint, InvariantMeasure, PeriodicOrbit};
use crate::cocycle::{sup_distance, Fibered, MatrixCocycle, PatchMode};
use crate::domination::{bundle_continuation, orientation_check, Bundle};
use crate::error::{Error, Result};
use crate::linalg::{
    complement, eigenvalues_by_modulus, invariant_subspace, jacobi_svd, null_space, op_norm, orthonormalize, rot2,
    subspace_gap, Complex64, Mat, TAU,
};
use crate::path::{plane_rotation, CocyclePath, RotationField, DEFAULT_STEP_CAP};
use crate::rotation::{eigenvalue_argument, path_rotation_number, RotationEnclosure, RotationOptions};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;

pub const DEFAULT_SMOOTHING_DEPTH: usize = 6;
pub const DEFAULT_EPS_SPLIT: f64 = 1e-2;
/// Adjacent moduli closer than this ratio count as tied.
pub const GAP_THRESHOLD: f64 = 1.0 + 1e-3;

const DERIV_STEP: f64 = 1e-5;
/// Frozen-bundle tolerance used by the sweeps, whose cylinders are deep enough
/// to freeze the bundle exactly at the swept orbits.
const SEARCH_EPS_BUNDLE: f64 = 0.5;
const THETA_GRID: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Increasing,
    Decreasing,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Increasing => 1.0,
            Direction::Decreasing => -1.0,
        }
    }
}

fn default_depth() -> usize {
    DEFAULT_SMOOTHING_DEPTH
}

/// Target 2-plane bundles, frozen on depth-k cylinders, with the angle cube radius
/// and the tolerated angle between frozen and true bundles (radians).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationFamilySpec {
    pub bundles: Vec<Bundle>,
    #[serde(default = "default_depth")]
    pub depth: usize,
    pub eta: f64,
    pub eps_bundle: f64,
}

impl RotationFamilySpec {
    pub fn new(bundles: Vec<Bundle>, eta: f64, eps_bundle: f64) -> Self {
        RotationFamilySpec { bundles, depth: DEFAULT_SMOOTHING_DEPTH, eta, eps_bundle }
    }
}

/// Frozen field plus the points where it was checked.
struct Frozen {
    field: RotationField,
    points: Vec<BasePoint>,
    deviation: f64,
}

fn push_orbit(sys: &crate::base::SymbolicSystem, x: &BasePoint, out: &mut Vec<BasePoint>) {
    let mut y = x.clone();
    for _ in 0..x.period(sys) {
        if !out.contains(&y) {
            out.push(y.clone());
        }
        y = y.next(sys);
    }
}

fn is_whole_plane(a: &MatrixCocycle, spec: &RotationFamilySpec) -> bool {
    a.dim == 2 && spec.bundles.len() == 1 && spec.bundles[0].band == (0, 2)
}

fn freeze(a: &MatrixCocycle, spec: &RotationFamilySpec, extra: &[BasePoint]) -> Result<Frozen> {
    if spec.bundles.is_empty() {
        return Err(Error::invalid("spec.bundles", "need at least one bundle"));
    }
    if let Some(i) = spec.bundles.iter().position(|b| b.dimension != 2) {
        return Err(Error::invalid(format!("spec.bundles[{i}]"), "target bundles must be 2-dimensional"));
    }
    if !(spec.eps_bundle > 0.0) {
        return Err(Error::invalid("spec.eps_bundle", "must be positive"));
    }
    if spec.eps_bundle >= std::f64::consts::FRAC_PI_2 {
        return Err(Error::SpecTooCoarse(format!(
            "eps_bundle = {} rad allows bundles orthogonal to the frozen plane; the projection is undefined",
            spec.eps_bundle
        )));
    }
    let sys = &a.base;
    let mut points = Vec::new();
    for x in spec.bundles.iter().flat_map(|b| b.points.iter()).chain(extra) {
        push_orbit(sys, x, &mut points);
    }
    if is_whole_plane(a, spec) {
        return Ok(Frozen { field: RotationField::WholePlane, points, deviation: 0.0 });
    }
    if !sys.is_shift() {
        return Err(Error::UnsupportedBase("frozen bundles live on cylinders of a shift".into()));
    }
    if spec.depth == 0 {
        return Err(Error::invalid("spec.depth", "must be ≥ 1"));
    }
    let truth: Vec<Vec<Mat>> = points.iter().map(|x| spec.bundles.iter().map(|b| b.frame_or_build(a, x)).collect()).collect();
    let mut planes: BTreeMap<Vec<u8>, Vec<Mat>> = BTreeMap::new();
    for (x, fr) in points.iter().zip(&truth) {
        planes.entry(x.forward_symbols(spec.depth)).or_insert_with(|| fr.clone());
    }
    let field = RotationField::cylinder(spec.depth, planes);
    let mut deviation: f64 = 0.0;
    for (x, fr) in points.iter().zip(&truth) {
        for (p, e) in field.planes_at(x).iter().zip(fr) {
            deviation = deviation.max(subspace_gap(e, p).min(1.0).asin());
        }
    }
    if deviation > spec.eps_bundle {
        return Err(Error::SpecTooCoarse(format!(
            "frozen bundle deviates by {deviation:.3e} rad > eps_bundle = {:.3e}; increase the depth",
            spec.eps_bundle
        )));
    }
    Ok(Frozen { field, points, deviation })
}

fn frozen_planes(field: &RotationField, x: &BasePoint, k: usize, d: usize) -> Vec<Mat> {
    match field {
        RotationField::WholePlane => vec![Mat::identity(d, d)],
        _ => {
            let p = field.planes_at(x);
            if p.len() == k {
                p
            } else {
                Vec::new()
            }
        }
    }
}

/// A bundle extended (same band, frames built on demand) to extra points.
fn extend_bundle(a: &MatrixCocycle, e: &Bundle, points: &[BasePoint]) -> Bundle {
    let mut out = e.clone();
    for x in points {
        if out.frame_at(x).is_none() {
            let f = e.frame_or_build(a, x);
            out.points.push(x.clone());
            out.frames.push(crate::path::Frame(f));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneCertificate {
    /// min over bundles, sampled fibers, knots and directions of the signed
    /// angular derivative (radians per unit t)
    pub margin: f64,
    pub per_bundle: Vec<f64>,
    pub certified: bool,
    /// largest angle between frozen and true (or continued) bundles
    pub frozen_deviation: f64,
    pub knots: Vec<f64>,
    pub samples: usize,
    pub orientation_preserved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneFamily {
    pub path: CocyclePath,
    pub certificate: MonotoneCertificate,
}

/// Angle (radians) of π_{Tx}(B·v) in the frozen frame at Tx, where v ∈ E_t(x)
/// projects to the direction θ of the frozen frame at x.
fn projected_angle(px: &Mat, ptx: &Mat, e: &Mat, b: &Mat, theta: f64) -> Option<f64> {
    let m = px.transpose() * e;
    let c = m.try_inverse()? * Mat::from_column_slice(2, 1, &[theta.cos(), theta.sin()]);
    let w = ptx.transpose() * (b * (e * c));
    Some(w[(1, 0)].atan2(w[(0, 0)]))
}

fn wrap_pi(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r > std::f64::consts::PI {
        r - TAU
    } else {
        r
    }
}

/// t ↦ R_{t·direction}∘𝒜 on the frozen planes, t ∈ [0, η], with its monotonicity certificate.
pub fn monotone_rotation_family(a: &MatrixCocycle, spec: &RotationFamilySpec, direction: Direction) -> Result<MonotoneFamily> {
    if !(spec.eta > 0.0) {
        return Err(Error::invalid("spec.eta", "must be positive"));
    }
    let frozen = freeze(a, spec, &[])?;
    let l = spec.bundles.len();
    let d = a.dim;
    let rates = vec![direction.sign(); l];
    let path = CocyclePath::rotation_family(a.clone(), frozen.field.clone(), rates, [0.0, spec.eta])?;
    let knots = path.knots(DEFAULT_STEP_CAP);
    let h = DERIV_STEP * spec.eta.max(1e-3);
    // evaluation times: each knot with its two neighbours, clipped to the range
    let mut times: Vec<f64> = Vec::new();
    for &t in &knots {
        for s in [t - h, t, t + h] {
            if (0.0..=spec.eta).contains(&s) && !times.contains(&s) {
                times.push(s);
            }
        }
    }
    times.sort_by(f64::total_cmp);
    let sys = &a.base;
    let mut per_bundle = Vec::with_capacity(l);
    let mut deviation = frozen.deviation;
    let mut preserved = true;
    for (i, b) in spec.bundles.iter().enumerate() {
        let e = extend_bundle(a, b, &frozen.points);
        preserved &= orientation_check(a, &e, &frozen.points)?.orientation_preserved;
        let cont = bundle_continuation(&path, &e, &times)?;
        let frame = |k: usize, x: &BasePoint| -> Mat { cont[k].frame_at(x).expect("continued point").clone() };
        for bk in &cont {
            for x in &frozen.points {
                let p = frozen_planes(&frozen.field, x, l, d);
                if p.is_empty() {
                    continue;
                }
                deviation = deviation.max(subspace_gap(bk.frame_at(x).expect("point"), &p[i]).min(1.0).asin());
            }
        }
        if deviation >= std::f64::consts::FRAC_PI_2 - 1e-9 || deviation > spec.eps_bundle {
            return Err(Error::SpecTooCoarse(format!(
                "continued bundle {i} leaves the eps_bundle cone around the frozen plane ({deviation:.3e} rad)"
            )));
        }
        let idx = |t: f64| times.iter().position(|&s| s == t);
        let mut margin = f64::INFINITY;
        for &t in &knots {
            let (lo, hi) = (idx(t - h).unwrap_or_else(|| idx(t).expect("knot")), idx(t + h).unwrap_or_else(|| idx(t).expect("knot")));
            let dt = times[hi] - times[lo];
            for x in &frozen.points {
                let tx = x.next(sys);
                let (px, ptx) = (frozen_planes(&frozen.field, x, l, d), frozen_planes(&frozen.field, &tx, l, d));
                if px.is_empty() || ptx.is_empty() {
                    continue;
                }
                let (blo, bhi) = (path.matrix(times[lo], x), path.matrix(times[hi], x));
                for j in 0..THETA_GRID {
                    let th = TAU * j as f64 / THETA_GRID as f64;
                    let a0 = projected_angle(&px[i], &ptx[i], &frame(lo, x), &blo, th);
                    let a1 = projected_angle(&px[i], &ptx[i], &frame(hi, x), &bhi, th);
                    let (Some(a0), Some(a1)) = (a0, a1) else {
                        return Err(Error::SpecTooCoarse(format!("projection onto frozen plane {i} undefined at {}", x.label())));
                    };
                    margin = margin.min(direction.sign() * wrap_pi(a1 - a0) / dt);
                }
            }
        }
        per_bundle.push(margin);
    }
    let margin = per_bundle.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(MonotoneFamily {
        path,
        certificate: MonotoneCertificate {
            margin,
            per_bundle,
            certified: margin > 0.0,
            frozen_deviation: deviation,
            knots,
            samples: frozen.points.len(),
            orientation_preserved: preserved,
        },
    })
}

// ---------------------------------------------------------------------------
// singular values and moduli

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvRedistribution {
    #[serde(with = "mat_vec_serde")]
    pub factors: Vec<Mat>,
    /// ‖A_i⁻¹B_i − I‖ (operator norm)
    pub distances: Vec<f64>,
    /// ‖log(A_i⁻¹B_i)‖_F; for a single factor this is √Σ ln²(σ_i/τ_i)
    pub log_distances: Vec<f64>,
    /// √Σ ln²(σ_i/τ_i)
    pub metric_distance: f64,
    /// max |σ_i(B_n⋯B_1) − τ_i| / max τ
    pub max_error: f64,
}

pub(crate) mod mat_vec_serde {
    use crate::linalg::{from_rows, to_rows, Mat};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Mat], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(to_rows))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Mat>, D::Error> {
        let rows: Vec<Vec<Vec<f64>>> = Vec::deserialize(d)?;
        rows.iter().map(|r| from_rows(r).ok_or_else(|| serde::de::Error::custom("ragged matrix"))).collect()
    }
}

fn product(seq: &[Mat]) -> Mat {
    let d = seq[0].nrows();
    seq.iter().fold(Mat::identity(d, d), |p, a| a * p)
}

fn check_sequence(seq: &[Mat]) -> Result<usize> {
    let Some(first) = seq.first() else { return Err(Error::invalid("sequence", "empty")) };
    let d = first.nrows();
    if d == 0 || seq.iter().any(|a| a.nrows() != d || a.ncols() != d) {
        return Err(Error::invalid("sequence", "need square matrices of one size"));
    }
    if let Some(i) = seq.iter().position(|a| a.clone().try_inverse().is_none()) {
        return Err(Error::invalid(format!("sequence[{i}]"), "not invertible"));
    }
    Ok(d)
}

/// Singular values ascending, with the matching U and V columns.
fn svd_ascending(p: &Mat) -> (Vec<f64>, Mat, Mat) {
    let svd = jacobi_svd(p);
    let d = p.nrows();
    let idx: Vec<usize> = (0..d).rev().collect();
    let s = idx.iter().map(|&i| svd.s[i]).collect();
    let u = Mat::from_columns(&idx.iter().map(|&i| svd.u.column(i).into_owned()).collect::<Vec<_>>());
    let v = Mat::from_columns(&idx.iter().map(|&i| svd.v.column(i).into_owned()).collect::<Vec<_>>());
    (s, u, v)
}

/// Spreads the change P → U·diag(τ)·Vᵀ evenly (in the log) over the factors.
/// A_1 is applied first; targets are ascending.
pub fn perturb_to_singular_values(seq: &[Mat], targets: &[f64]) -> Result<SvRedistribution> {
    let d = check_sequence(seq)?;
    if targets.len() != d || targets.iter().any(|t| !(*t > 0.0)) || targets.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("targets", "need d positive ascending values"));
    }
    let n = seq.len();
    let p = product(seq);
    let det = p.determinant().abs();
    let tprod: f64 = targets.iter().product();
    if (tprod - det).abs() > 1e-9 * det.max(1.0) {
        return Err(Error::DetMismatch { product: det, targets: tprod });
    }
    let (sigma, _, v) = svd_ascending(&p);
    let logs: Vec<f64> = targets.iter().zip(&sigma).map(|(t, s)| (t / s).ln()).collect();
    let metric_distance = logs.iter().map(|l| l * l).sum::<f64>().sqrt();
    if targets.iter().zip(&sigma).all(|(t, s)| (t / s - 1.0).abs() <= 1e-14) {
        return Ok(SvRedistribution {
            factors: seq.to_vec(),
            distances: vec![0.0; n],
            log_distances: vec![0.0; n],
            metric_distance,
            max_error: 0.0,
        });
    }
    let diag_of = |f: &dyn Fn(f64) -> f64| -> Mat { &v * Mat::from_diagonal(&nalgebra::DVector::from_iterator(d, logs.iter().map(|l| f(*l)))) * v.transpose() };
    let step = diag_of(&|l| (l / n as f64).exp());
    let x_over_n = diag_of(&|l| l / n as f64);
    let mut g = Mat::identity(d, d);
    let mut factors = Vec::with_capacity(n);
    let mut distances = Vec::with_capacity(n);
    let mut log_distances = Vec::with_capacity(n);
    for a in seq {
        let gi = g.clone().try_inverse().ok_or_else(|| Error::invalid("sequence", "partial product not invertible"))?;
        let conj = &g * &step * &gi;
        distances.push(op_norm(&(&conj - Mat::identity(d, d))));
        log_distances.push((&g * &x_over_n * &gi).norm());
        factors.push(a * conj);
        g = a * g;
    }
    let (got, _, _) = svd_ascending(&product(&factors));
    let top = targets[d - 1];
    let max_error = got.iter().zip(targets).map(|(g, t)| (g - t).abs() / top).fold(0.0, f64::max);
    Ok(SvRedistribution { factors, distances, log_distances, metric_distance, max_error })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equalization {
    #[serde(with = "mat_vec_serde")]
    pub factors: Vec<Mat>,
    #[serde(with = "crate::cocycle::mat_serde")]
    pub d: Mat,
    /// ‖D − I‖
    pub perturbation: f64,
    /// eigenvalue moduli of the product, ascending, before and after
    pub moduli_before: Vec<f64>,
    pub moduli_after: Vec<f64>,
    /// (max − min)/max of the new moduli
    pub spread: f64,
    /// Same, read off the diagonal blocks of Qᵀ·P'·Q in the triangularizing
    /// basis. These are exact moduli of a matrix within rounding of P', so this
    /// stays small even when P' is defective and `spread` is of order √ε.
    pub structured_spread: f64,
}

/// Groups of eigenvalue indices (ascending modulus) that must stay together:
/// conjugate pairs.
fn conjugate_groups(eigs: &[Complex64]) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < eigs.len() {
        let len = if eigs[i].im.abs() > 1e-12 * eigs[i].norm() && i + 1 < eigs.len() { 2 } else { 1 };
        out.push(i..i + len);
        i += len;
    }
    out
}

/// Orthonormal basis whose leading columns span the invariant subspaces of the
/// smallest moduli, so that Qᵀ·P·Q is block upper triangular in ascending order.
fn triangularizing_basis(p: &Mat, eigs: &[Complex64]) -> Mat {
    let d = p.nrows();
    let mut cols: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(d);
    for g in conjugate_groups(eigs) {
        let w = invariant_subspace(p, &eigs[..g.end]);
        let q = if cols.is_empty() { Mat::zeros(d, 0) } else { Mat::from_columns(&cols) };
        let rest = if cols.is_empty() { w } else { &w - &q * (q.transpose() * &w) };
        // the new directions: dominant left singular vectors of the projected block
        let svd = jacobi_svd(&rest);
        for k in 0..g.len() {
            cols.push(svd.u.column(k).into_owned());
        }
        let q = orthonormalize(&Mat::from_columns(&cols));
        cols = q.column_iter().map(|c| c.into_owned()).collect();
    }
    Mat::from_columns(&cols)
}

/// B_1 = A_1·D with D equalizing the eigenvalue moduli of B_p⋯B_1.
pub fn equalize_moduli(seq: &[Mat]) -> Result<Equalization> {
    let d = check_sequence(seq)?;
    let p = product(seq);
    let eigs = eigenvalues_by_modulus(&p);
    let moduli_before: Vec<f64> = eigs.iter().map(|z| z.norm()).collect();
    let top = moduli_before[d - 1];
    let scale: Vec<f64> = moduli_before.iter().map(|m| top / m).collect();
    let unchanged = scale.iter().all(|s| (s - 1.0).abs() <= 1e-14);
    let q = if unchanged { Mat::identity(d, d) } else { triangularizing_basis(&p, &eigs) };
    let (factors, dm) = if unchanged {
        (seq.to_vec(), Mat::identity(d, d))
    } else {
        let dm = &q * Mat::from_diagonal(&nalgebra::DVector::from_vec(scale.clone())) * q.transpose();
        let mut f = seq.to_vec();
        f[0] = &seq[0] * &dm;
        (f, dm)
    };
    let p_new = product(&factors);
    let moduli_after: Vec<f64> = eigenvalues_by_modulus(&p_new).iter().map(|z| z.norm()).collect();
    let (lo, hi) = (moduli_after[0], moduli_after[d - 1]);
    let structured_spread = if unchanged {
        (hi - lo) / hi
    } else {
        let t = q.transpose() * &p_new * &q;
        let block: Vec<f64> = conjugate_groups(&eigs)
            .into_iter()
            .map(|g| match g.len() {
                1 => t[(g.start, g.start)].abs(),
                _ => t.view((g.start, g.start), (2, 2)).determinant().abs().sqrt(),
            })
            .collect();
        let (bl, bh) = block.iter().fold((f64::INFINITY, 0f64), |(l, h), &m| (l.min(m), h.max(m)));
        (bh - bl) / bh
    };
    let perturbation = op_norm(&(&dm - Mat::identity(d, d)));
    Ok(Equalization { factors, d: dm, perturbation, moduli_before, moduli_after, spread: (hi - lo) / hi, structured_spread })
}

// ---------------------------------------------------------------------------
// elliptic searches

/// Restricted return map of the plane field `frame` along the orbit of x.
fn restricted_return(f: &(impl Fibered + ?Sized), frame: &dyn Fn(&BasePoint) -> Mat, x: &BasePoint) -> Mat {
    let sys = f.system();
    let e0 = frame(x);
    let k = e0.ncols();
    let mut m = Mat::identity(k, k);
    let mut y = x.clone();
    let mut ey = e0;
    for _ in 0..x.period(sys) {
        let ny = y.next(sys);
        let en = frame(&ny);
        m = en.transpose() * f.matrix_at(&y) * &ey * m;
        y = ny;
        ey = en;
    }
    m
}

fn discriminant(m: &Mat) -> f64 {
    let tr = m.trace();
    tr * tr - 4.0 * m.determinant()
}

fn is_complex(m: &Mat) -> bool {
    discriminant(m) < -1e-12 * m.determinant().abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub t_index: usize,
    pub t: f64,
    pub orbit_index: usize,
    pub orbit: String,
    pub discriminant: f64,
    pub det: f64,
    /// continuous lift of the eigenvalue argument along t (NaN when det ≤ 0)
    pub theta_lift: f64,
    pub complex: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticHit {
    pub t: f64,
    pub t_index: usize,
    pub orbit: String,
    pub orbit_index: usize,
    pub discriminant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticSearch {
    pub hit: Option<EllipticHit>,
    pub log: Vec<SweepRecord>,
    pub monotone_margin: f64,
}

impl EllipticSearch {
    /// One JSON record per (t, orbit) probe.
    pub fn write_log<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.log {
            let line = serde_json::to_string(r).map_err(|e| Error::Io(e.to_string()))?;
            writeln!(w, "{line}").map_err(|e| Error::Io(e.to_string()))?;
        }
        Ok(())
    }
}

/// Frames of E continued along `path` to each time in `ts`, anchored at t = 0
/// (which must lie in the path's range). Returned in the order of `ts`.
fn continue_to(path: &CocyclePath, e: &Bundle, ts: &[f64]) -> Result<Vec<Bundle>> {
    let mut pos: Vec<(usize, f64)> = ts.iter().copied().enumerate().filter(|(_, t)| *t >= 0.0).collect();
    let mut neg: Vec<(usize, f64)> = ts.iter().copied().enumerate().filter(|(_, t)| *t < 0.0).collect();
    pos.sort_by(|a, b| a.1.total_cmp(&b.1));
    neg.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut out: Vec<Option<Bundle>> = vec![None; ts.len()];
    for side in [pos, neg] {
        if side.is_empty() {
            continue;
        }
        let mut knots = vec![0.0];
        knots.extend(side.iter().map(|(_, t)| *t));
        let cont = bundle_continuation(path, e, &knots)?;
        for ((i, _), b) in side.iter().zip(cont.into_iter().skip(1)) {
            out[*i] = Some(b);
        }
    }
    Ok(out.into_iter().map(|b| b.expect("every time continued")).collect())
}

fn linspace(t0: f64, t1: f64, steps: usize) -> Vec<f64> {
    if steps == 0 {
        return vec![t0];
    }
    (0..=steps).map(|k| if k == steps { t1 } else { t0 + (t1 - t0) * k as f64 / steps as f64 }).collect()
}

fn lift_near(theta: f64, prev: f64) -> f64 {
    if prev.is_nan() {
        return theta;
    }
    theta + TAU * ((prev - theta) / TAU).round()
}

/// Sweeps t over R_t∘𝒜 (rotation of the frozen plane of E) and returns the first
/// (t, point) whose return map restricted to the continued bundle has a complex pair.
pub fn elliptic_search(
    a: &MatrixCocycle,
    e: &Bundle,
    points: &[BasePoint],
    t_range: [f64; 2],
    steps: usize,
) -> Result<EllipticSearch> {
    let [t0, t1] = t_range;
    if !(t0 <= 0.0 && 0.0 <= t1) {
        return Err(Error::invalid("t_range", "must contain 0"));
    }
    if points.is_empty() {
        return Err(Error::invalid("points", "need at least one periodic point"));
    }
    let eta = t0.abs().max(t1.abs()).max(1e-12);
    let spec = RotationFamilySpec {
        bundles: vec![e.clone()],
        depth: DEFAULT_SMOOTHING_DEPTH.max(2 * max_period(a, points)),
        eta,
        eps_bundle: SEARCH_EPS_BUNDLE,
    };
    let frozen = freeze(a, &spec, points)?;
    let family = CocyclePath::rotation_family(a.clone(), frozen.field.clone(), vec![1.0], t_range)?;
    let mono = monotone_margin(a, &spec, t_range)?;
    let e_ext = extend_bundle(a, e, &frozen.points);
    let ts = linspace(t0, t1, steps);
    let cont = continue_to(&family, &e_ext, &ts)?;
    let probes: Vec<(usize, usize)> = (0..ts.len()).flat_map(|i| (0..points.len()).map(move |j| (i, j))).collect();
    let mats: Vec<Mat> = probes
        .par_iter()
        .map(|&(i, j)| {
            let slice = family.slice(ts[i]);
            let b = &cont[i];
            restricted_return(&slice, &|y: &BasePoint| b.frame_or_build(&slice, y), &points[j])
        })
        .collect();
    let mut log = Vec::with_capacity(probes.len());
    let mut prev = vec![f64::NAN; points.len()];
    for (&(i, j), m) in probes.iter().zip(&mats) {
        let det = m.determinant();
        let theta = if det > 0.0 { eigenvalue_argument(m).map(|th| lift_near(th, prev[j])).unwrap_or(f64::NAN) } else { f64::NAN };
        prev[j] = theta;
        log.push(SweepRecord {
            t_index: i,
            t: ts[i],
            orbit_index: j,
            orbit: points[j].label(),
            discriminant: discriminant(m),
            det,
            theta_lift: theta,
            complex: is_complex(m),
        });
    }
    let hit = log.iter().find(|r| r.complex).map(|r| EllipticHit {
        t: r.t,
        t_index: r.t_index,
        orbit: r.orbit.clone(),
        orbit_index: r.orbit_index,
        discriminant: r.discriminant,
    });
    Ok(EllipticSearch { hit, log, monotone_margin: mono })
}

fn max_period(a: &MatrixCocycle, points: &[BasePoint]) -> usize {
    points.iter().map(|x| x.period(&a.base)).max().unwrap_or(1)
}

/// Certificate margin of t ↦ R_t∘𝒜 over [t0, t1] ∋ 0: the increasing family on
/// [0, t1] and the decreasing one on [0, −t0].
fn monotone_margin(a: &MatrixCocycle, spec: &RotationFamilySpec, [t0, t1]: [f64; 2]) -> Result<f64> {
    let mut margin = f64::INFINITY;
    for (eta, dir) in [(t1, Direction::Increasing), (-t0, Direction::Decreasing)] {
        if eta > 0.0 {
            let s = RotationFamilySpec { eta, ..spec.clone() };
            margin = margin.min(monotone_rotation_family(a, &s, dir)?.certificate.margin);
        }
    }
    Ok(margin)
}

// ---------------------------------------------------------------------------
// joint search and the Θ map

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaNode {
    pub t: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaMap {
    pub eta: f64,
    pub per_axis: usize,
    pub nodes: Vec<ThetaNode>,
}

impl ThetaMap {
    /// Columns: t_1..t_ℓ, then lower_i, upper_i per bundle.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let l = self.nodes.first().map(|n| n.t.len()).unwrap_or(0);
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(e.to_string());
        let mut head: Vec<String> = (1..=l).map(|i| format!("t_{i}")).collect();
        for i in 1..=l {
            head.push(format!("lower_{i}"));
            head.push(format!("upper_{i}"));
        }
        wr.write_record(&head).map_err(io)?;
        for n in &self.nodes {
            let mut row: Vec<String> = n.t.iter().map(|v| format!("{v:e}")).collect();
            for (lo, hi) in n.lower.iter().zip(&n.upper) {
                row.push(format!("{lo:e}"));
                row.push(format!("{hi:e}"));
            }
            wr.write_record(&row).map_err(io)?;
        }
        wr.flush().map_err(|e| Error::Io(e.to_string()))
    }

    fn node_index(&self, multi: &[usize]) -> usize {
        multi.iter().fold(0, |acc, &k| acc * self.per_axis + k)
    }

    /// First face (in order 1+, 1−, 2+, …) violating Θ_i > 0 on the + face
    /// (certified) or Θ_i ≤ 0 on the − face (up to one enclosure width).
    pub fn face_failure(&self) -> Option<FaceFailure> {
        let l = self.nodes.first().map(|n| n.t.len()).unwrap_or(0);
        let g = self.per_axis;
        for i in 0..l {
            for (sign, k) in [('+', g - 1), ('-', 0)] {
                let bad = (0..self.nodes.len()).any(|idx| {
                    let multi = multi_index(idx, l, g);
                    if multi[i] != k {
                        return false;
                    }
                    let n = &self.nodes[self.node_index(&multi)];
                    if sign == '+' {
                        !(n.lower[i] > 0.0)
                    } else {
                        // upper ≤ width
                        !(n.lower[i] <= 0.0)
                    }
                });
                if bad {
                    return Some(FaceFailure { face: i + 1, sign });
                }
            }
        }
        None
    }
}

fn multi_index(mut idx: usize, l: usize, g: usize) -> Vec<usize> {
    let mut out = vec![0; l];
    for k in (0..l).rev() {
        out[k] = idx % g;
        idx /= g;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceFailure {
    pub face: usize,
    pub sign: char,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointHit {
    pub t: Vec<f64>,
    pub node_index: usize,
    /// per bundle, the first point with a complex pair
    pub orbits: Vec<String>,
    pub discriminants: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSearch {
    pub hit: Option<JointHit>,
    pub pattern_failure: Option<FaceFailure>,
    pub theta: ThetaMap,
}

impl JointSearch {
    pub fn succeeded(&self) -> bool {
        self.hit.is_some() && self.pattern_failure.is_none()
    }
}

/// Evaluates Θ on the grid over [−η, η]^ℓ, checks the face signs and scans the
/// nodes (lexicographically) for a t⃗ with complex pairs in every continued bundle.
pub fn joint_elliptic_search(
    a: &MatrixCocycle,
    spec: &RotationFamilySpec,
    points: &[BasePoint],
    mu: &InvariantMeasure,
    per_axis: usize,
    opts: &RotationOptions,
) -> Result<JointSearch> {
    if per_axis < 2 {
        return Err(Error::invalid("per_axis", "need at least the two faces"));
    }
    if !(spec.eta > 0.0) {
        return Err(Error::invalid("spec.eta", "must be positive"));
    }
    if points.is_empty() {
        return Err(Error::invalid("points", "need at least one periodic point"));
    }
    let mut spec = spec.clone();
    spec.depth = spec.depth.max(2 * max_period(a, points));
    let frozen = freeze(a, &spec, points)?;
    let l = spec.bundles.len();
    let ext: Vec<Bundle> = spec.bundles.iter().map(|b| extend_bundle(a, b, &frozen.points)).collect();
    for (i, e) in ext.iter().enumerate() {
        if !orientation_check(a, e, &frozen.points)?.orientation_preserved {
            return Err(Error::Orientation(format!("bundle {} is not orientation preserving", i + 1)));
        }
    }
    let axis = linspace(-spec.eta, spec.eta, per_axis - 1);
    let count = per_axis.pow(l as u32);
    let nodes: Vec<Vec<f64>> = (0..count).map(|idx| multi_index(idx, l, per_axis).iter().map(|&k| axis[k]).collect()).collect();
    let evaluated: Vec<(ThetaNode, Option<(Vec<String>, Vec<f64>)>)> = nodes
        .par_iter()
        .map(|t| -> Result<_> {
            let path = CocyclePath::rotation_family(a.clone(), frozen.field.clone(), t.clone(), [0.0, 1.0])?;
            let mut lower = Vec::with_capacity(l);
            let mut upper = Vec::with_capacity(l);
            let mut fired: Vec<Option<(String, f64)>> = Vec::with_capacity(l);
            let end = path.slice(1.0);
            for e in &ext {
                let enc: RotationEnclosure = path_rotation_number(&path, mu, Some(e), opts)?;
                lower.push(enc.lower);
                upper.push(enc.upper);
                let cont = bundle_continuation(&path, e, &[0.0, 1.0])?;
                let b = &cont[1];
                let first = points.iter().find_map(|x| {
                    let m = restricted_return(&end, &|y: &BasePoint| b.frame_or_build(&end, y), x);
                    is_complex(&m).then(|| (x.label(), discriminant(&m)))
                });
                fired.push(first);
            }
            let hit = fired.into_iter().collect::<Option<Vec<_>>>().map(|v| v.into_iter().unzip());
            Ok((ThetaNode { t: t.clone(), lower, upper }, hit))
        })
        .collect::<Result<Vec<_>>>()?;
    let hit = evaluated.iter().enumerate().find_map(|(idx, (node, h))| {
        h.as_ref().map(|(orbits, discriminants)| JointHit {
            t: node.t.clone(),
            node_index: idx,
            orbits: orbits.clone(),
            discriminants: discriminants.clone(),
        })
    });
    let theta = ThetaMap { eta: spec.eta, per_axis, nodes: evaluated.into_iter().map(|(n, _)| n).collect() };
    let pattern_failure = theta.face_failure();
    Ok(JointSearch { hit, pattern_failure, theta })
}

// ---------------------------------------------------------------------------
// simple spectrum

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproximantRecord {
    pub orbit: String,
    pub period: usize,
    /// per resolved pair, the rotation angle applied at every orbit point
    pub angles: Vec<f64>,
    pub distance: f64,
    pub min_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimpleSpectrum {
    pub cocycle: MatrixCocycle,
    pub orbit: PeriodicOrbit,
    /// eigenvalue moduli of the return map, descending
    pub moduli: Vec<f64>,
    /// ratios of consecutive moduli, from the top
    pub gaps: Vec<f64>,
    pub min_gap: f64,
    pub distance: f64,
    pub log: Vec<ApproximantRecord>,
}

/// Eigenvalue moduli (descending) of the return map along an orbit, and their gaps.
pub fn orbit_moduli(c: &(impl Fibered + ?Sized), orbit: &PeriodicOrbit) -> (Vec<f64>, Vec<f64>) {
    let m = c.iterate(&orbit.point(0), orbit.period as i64);
    let mut moduli: Vec<f64> = eigenvalues_by_modulus(&m).iter().map(|z| z.norm()).collect();
    moduli.reverse();
    let gaps = moduli.windows(2).map(|w| w[0] / w[1]).collect();
    (moduli, gaps)
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Tied groups (ascending-modulus index ranges) in a spectrum.
fn tie_groups(eigs: &[Complex64]) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < eigs.len() {
        let mut j = i + 1;
        while j < eigs.len() && eigs[j].norm() <= GAP_THRESHOLD * eigs[j - 1].norm() {
            j += 1;
        }
        if j - i > 1 {
            out.push(i..j);
        }
        i = j;
    }
    out
}

/// Restricted return map of 2×2 steps with a rotation by s before each.
fn rotated_product(c: &[Mat], s: f64) -> Mat {
    let r = rot2(s);
    c.iter().fold(Mat::identity(2, 2), |m, cj| cj * &r * m)
}

/// Smallest |s| at which the complex pair of ∏ C_j·R_s leaves its half-plane
/// of arguments (the pair reaches the real axis).
fn crossing_angle(c: &[Mat]) -> f64 {
    let m0 = rotated_product(c, 0.0);
    if !is_complex(&m0) {
        return 0.0;
    }
    let upper = |m: &Mat| eigenvalue_argument(m).map(|th| th < std::f64::consts::PI).unwrap_or(false);
    let h0 = upper(&m0);
    let inside = |s: f64| {
        let m = rotated_product(c, s);
        is_complex(&m) && upper(&m) == h0
    };
    let q = c.len() as f64;
    let step = std::f64::consts::PI / (8.0 * q);
    let mut best = f64::INFINITY;
    for dir in [1.0, -1.0] {
        let mut s_in = 0.0;
        let mut s_out = None;
        for k in 1..=(8.0 * q).ceil() as usize + 8 {
            let s = dir * step * k as f64;
            if inside(s) {
                s_in = s;
            } else {
                s_out = Some(s);
                break;
            }
        }
        let Some(mut s_out) = s_out else { continue };
        for _ in 0..100 {
            let mid = 0.5 * (s_in + s_out);
            if mid == s_in || mid == s_out {
                break;
            }
            if inside(mid) {
                s_in = mid;
            } else {
                s_out = mid;
            }
        }
        let s = 0.5 * (s_in + s_out);
        if s.abs() < best.abs() {
            best = s;
        }
    }
    best
}

/// Rotates and splits one tied pair of the return map along `orbit`.
fn resolve_pair(
    cur: &MatrixCocycle,
    orbit: &PeriodicOrbit,
    pair: &[Complex64],
    eps_split: f64,
) -> Result<(MatrixCocycle, f64)> {
    let q = orbit.period;
    let pts = orbit.points();
    let a: Vec<Mat> = pts.iter().map(|x| cur.eval(x)).collect();
    let m = cur.iterate(&pts[0], q as i64);
    let e0 = invariant_subspace(&m, pair);
    let mut frames = vec![e0.clone()];
    for aj in a.iter().take(q - 1) {
        let next = orthonormalize(&(aj * frames.last().expect("frame")));
        frames.push(next);
    }
    let c: Vec<Mat> = (0..q)
        .map(|j| {
            let en = if j + 1 < q { &frames[j + 1] } else { &e0 };
            en.transpose() * &a[j] * &frames[j]
        })
        .collect();
    let s = if pair.iter().any(|z| z.im.abs() > 1e-12 * z.norm()) { crossing_angle(&c) } else { 0.0 };
    let y = rotated_product(&c, s);
    // eigendirection of the (near-)parabolic or real return map
    let (tr, det) = (y.trace(), y.determinant());
    let disc = tr * tr - 4.0 * det;
    let lam = if disc > 0.0 { 0.5 * (tr + tr.signum() * disc.sqrt()) } else { 0.5 * tr };
    let v = null_space(&(&y - Mat::identity(2, 2) * lam), 1);
    let w = complement(&v);
    let d2 = &v * v.transpose() * (1.0 + eps_split) + &w * w.transpose() * (1.0 - eps_split);
    let d = cur.dim;
    let dfull = Mat::identity(d, d) + &e0 * (d2 - Mat::identity(2, 2)) * e0.transpose();
    let mut out = cur.clone();
    for (j, x) in pts.iter().enumerate() {
        let mut r = plane_rotation(&frames[j], s);
        if j == 0 {
            r *= &dfull;
        }
        out = out.perturb_on_cylinder(&x.forward_symbols(q), r - Mat::identity(d, d), PatchMode::Compose)?.0;
    }
    Ok((out, s))
}

/// Pulls apart a tie of more than two moduli: each real or conjugate-pair block
/// of the group is scaled by its own power of (1 + ε) in the triangularizing
/// basis of the return map, so that only conjugate pairs stay tied.
fn separate_group(
    cur: &MatrixCocycle,
    orbit: &PeriodicOrbit,
    eigs: &[Complex64],
    g: std::ops::Range<usize>,
    eps_split: f64,
) -> Result<MatrixCocycle> {
    let d = cur.dim;
    let m = cur.iterate(&orbit.point(0), orbit.period as i64);
    let q = triangularizing_basis(&m, eigs);
    let blocks: Vec<_> = conjugate_groups(eigs).into_iter().filter(|b| b.start >= g.start && b.end <= g.end).collect();
    let span = (blocks.len() - 1).max(1) as f64;
    let mut scale = vec![1.0; d];
    for (k, b) in blocks.iter().enumerate() {
        let e = (2.0 * k as f64 - span) / span;
        for i in b.clone() {
            scale[i] = (1.0 + eps_split).powf(e);
        }
    }
    let dm = &q * Mat::from_diagonal(&nalgebra::DVector::from_vec(scale)) * q.transpose();
    let word = orbit.point(0).forward_symbols(orbit.period);
    Ok(cur.perturb_on_cylinder(&word, dm - Mat::identity(d, d), PatchMode::Compose)?.0)
}

/// Resolves all tied groups at one orbit, one after the other.
fn resolve_orbit(a: &MatrixCocycle, orbit: &PeriodicOrbit, eps_split: f64) -> Result<(MatrixCocycle, Vec<f64>)> {
    let mut cur = a.clone();
    let mut angles = Vec::new();
    for _ in 0..2 * a.dim {
        let m = cur.iterate(&orbit.point(0), orbit.period as i64);
        let eigs = eigenvalues_by_modulus(&m);
        let Some(g) = tie_groups(&eigs).into_iter().next() else { break };
        if g.len() > 2 {
            cur = separate_group(&cur, orbit, &eigs, g, eps_split)?;
            continue;
        }
        let (next, s) = resolve_pair(&cur, orbit, &eigs[g], eps_split)?;
        cur = next;
        angles.push(s);
    }
    Ok((cur, angles))
}

/// Finds a nearby cocycle with a periodic orbit of simple spectrum.
pub fn simple_spectrum_search(
    a: &MatrixCocycle,
    p_max: usize,
    excursion_budget: usize,
    perturbation_budget: f64,
    eps_split: f64,
) -> Result<SimpleSpectrum> {
    if a.base.kind != crate::base::SystemKind::FullShift {
        return Err(Error::UnsupportedBase("simple-spectrum search needs a full shift".into()));
    }
    if a.dim < 2 {
        return Err(Error::invalid("cocycle.dim", "must be ≥ 2"));
    }
    if !(eps_split > 0.0 && eps_split < 0.5) {
        return Err(Error::invalid("eps_split", "must lie in (0, 0.5)"));
    }
    let orbits = enumerate_periodic_orbits(&a.base, p_max)?;
    for o in &orbits {
        let (moduli, gaps) = orbit_moduli(a, o);
        if min_of(&gaps) > GAP_THRESHOLD {
            return Ok(SimpleSpectrum {
                cocycle: a.clone(),
                orbit: o.clone(),
                min_gap: min_of(&gaps),
                moduli,
                gaps,
                distance: 0.0,
                log: Vec::new(),
            });
        }
    }
    let x = &orbits[0];
    let k = a.base.alphabet_size as u8;
    let excursion = vec![(x.word[x.period - 1] + 1) % k];
    let approximants = homoclinic_periodic_approximations(&a.base, x, &excursion, excursion_budget.max(1))?;
    let mut log = Vec::new();
    let mut best_gap: f64 = 1.0;
    for y in &approximants {
        let (c, angles) = resolve_orbit(a, y, eps_split)?;
        let distance = sup_distance(a, &c)?;
        let (moduli, gaps) = orbit_moduli(&c, y);
        let min_gap = min_of(&gaps);
        log.push(ApproximantRecord { orbit: y.label(), period: y.period, angles, distance, min_gap });
        if distance <= perturbation_budget {
            best_gap = best_gap.max(min_gap);
            if min_gap > GAP_THRESHOLD {
                return Ok(SimpleSpectrum { cocycle: c, orbit: y.clone(), moduli, gaps, min_gap, distance, log });
            }
        }
    }
    Err(Error::BudgetExhausted { best_gap })
}
