//! Matrix cocycles over the base and their products.
//!
//! Over shifts the generator is a table indexed by depth-m forward words plus
//! an ordered list of cylinder patches; a patch on a long word costs nothing
//! until it is evaluated, so perturbations along long periodic orbits stay
//! cheap. Over rotations the generator is a trigonometric polynomial.

use crate::base::{word_serde, BasePoint, InvariantMeasure, SymbolicSystem, SystemKind};
use crate::error::{Error, Result};
use crate::linalg::{op_norm, product_svd, Mat, TAU};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const DEFAULT_DET_FLOOR: f64 = 1e-9;

pub(crate) mod mat_serde {
    use crate::linalg::{from_rows, to_rows, Mat};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).ok_or_else(|| serde::de::Error::custom("matrix rows must be nonempty and of equal length"))
    }
}

mod table_serde {
    use super::*;
    use crate::base::{parse_word, word_to_string};
    use crate::linalg::{from_rows, to_rows};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &BTreeMap<Vec<u8>, Mat>, s: S) -> std::result::Result<S::Ok, S::Error> {
        let m: BTreeMap<String, Vec<Vec<f64>>> = t.iter().map(|(k, v)| (word_to_string(k), to_rows(v))).collect();
        m.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<Vec<u8>, Mat>, D::Error> {
        let m = BTreeMap::<String, Vec<Vec<f64>>>::deserialize(d)?;
        m.into_iter()
            .map(|(k, rows)| {
                let w = parse_word(&k).map_err(serde::de::Error::custom)?;
                let a = from_rows(&rows).ok_or_else(|| serde::de::Error::custom(format!("bad matrix for word {k}")))?;
                Ok((w, a))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatchMode {
    /// A ← A·(I + Δ)
    Compose,
    /// A ← A + Δ
    Add,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    #[serde(with = "word_serde")]
    pub word: Vec<u8>,
    pub mode: PatchMode,
    #[serde(with = "mat_serde")]
    pub delta: Mat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub k: u32,
    #[serde(with = "mat_serde")]
    pub cos: Mat,
    #[serde(with = "mat_serde")]
    pub sin: Mat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Generator {
    LocallyConstant {
        depth: usize,
        #[serde(with = "table_serde")]
        table: BTreeMap<Vec<u8>, Mat>,
        #[serde(default)]
        patches: Vec<Patch>,
    },
    /// A(x) = Σ_k cos_k·cos(2πkx) + sin_k·sin(2πkx)
    TrigPolynomial { harmonics: Vec<Harmonic> },
    /// A(x) = S·exp(x·L)
    ExpLinear {
        #[serde(with = "mat_serde")]
        s: Mat,
        #[serde(with = "mat_serde")]
        l: Mat,
    },
}

fn default_det_floor() -> f64 {
    DEFAULT_DET_FLOOR
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixCocycle {
    pub base: SymbolicSystem,
    pub dim: usize,
    pub generator: Generator,
    #[serde(default = "default_det_floor")]
    pub det_floor: f64,
}

/// All admissible words of length `len`.
pub fn admissible_words(sys: &SymbolicSystem, len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        let mut next = Vec::with_capacity(out.len() * sys.alphabet_size);
        for w in &out {
            for s in 0..sys.alphabet_size as u8 {
                let mut v: Vec<u8> = w.clone();
                v.push(s);
                if sys.admissible_word(&v) {
                    next.push(v);
                }
            }
        }
        out = next;
    }
    out
}

impl MatrixCocycle {
    pub fn new(base: SymbolicSystem, dim: usize, generator: Generator) -> Result<Self> {
        let c = MatrixCocycle { base, dim, generator, det_floor: DEFAULT_DET_FLOOR };
        c.validate()?;
        Ok(c)
    }

    /// Depth-1 table over a shift.
    pub fn locally_constant(base: SymbolicSystem, mats: Vec<Mat>) -> Result<Self> {
        let dim = mats.first().map(|m| m.nrows()).unwrap_or(0);
        let table = mats.into_iter().enumerate().map(|(s, m)| (vec![s as u8], m)).collect();
        Self::new(base, dim, Generator::LocallyConstant { depth: 1, table, patches: Vec::new() })
    }

    pub fn from_table(base: SymbolicSystem, depth: usize, table: BTreeMap<Vec<u8>, Mat>) -> Result<Self> {
        let dim = table.values().next().map(|m| m.nrows()).unwrap_or(0);
        Self::new(base, dim, Generator::LocallyConstant { depth, table, patches: Vec::new() })
    }

    /// The same matrix at every base point.
    pub fn constant(base: SymbolicSystem, a: Mat) -> Result<Self> {
        let dim = a.nrows();
        let generator = match base.kind {
            SystemKind::FullShift | SystemKind::Sft => {
                let table = (0..base.alphabet_size as u8).map(|s| (vec![s], a.clone())).collect();
                Generator::LocallyConstant { depth: 1, table, patches: Vec::new() }
            }
            SystemKind::CircleRotation => {
                Generator::TrigPolynomial { harmonics: vec![Harmonic { k: 0, sin: Mat::zeros(dim, dim), cos: a }] }
            }
            SystemKind::IntervalIdentity => Generator::ExpLinear { s: a, l: Mat::zeros(dim, dim) },
        };
        Self::new(base, dim, generator)
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        let d = self.dim;
        if d < 2 {
            return Err(Error::invalid("cocycle.dim", "dimension must be ≥ 2"));
        }
        let square = |m: &Mat, field: String| -> Result<()> {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::invalid(field, format!("expected {d}x{d}, got {}x{}", m.nrows(), m.ncols())));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(field, "non-finite entry"));
            }
            Ok(())
        };
        match (&self.generator, self.base.kind) {
            (Generator::LocallyConstant { depth, table, patches }, SystemKind::FullShift | SystemKind::Sft) => {
                if *depth == 0 {
                    return Err(Error::invalid("cocycle.generator.depth", "must be ≥ 1"));
                }
                for (w, m) in table {
                    square(m, format!("cocycle.generator.table.{}", crate::base::word_to_string(w)))?;
                }
                for w in admissible_words(&self.base, *depth) {
                    if !table.contains_key(&w) {
                        return Err(Error::invalid(
                            "cocycle.generator.table",
                            format!("missing word {}", crate::base::word_to_string(&w)),
                        ));
                    }
                }
                for (i, p) in patches.iter().enumerate() {
                    square(&p.delta, format!("cocycle.generator.patches[{i}].delta"))?;
                    if p.word.is_empty() || !self.base.admissible_word(&p.word) {
                        return Err(Error::invalid(format!("cocycle.generator.patches[{i}].word"), "not admissible"));
                    }
                }
            }
            (Generator::TrigPolynomial { harmonics }, SystemKind::CircleRotation) => {
                if harmonics.is_empty() {
                    return Err(Error::invalid("cocycle.generator.harmonics", "empty"));
                }
                for (i, h) in harmonics.iter().enumerate() {
                    square(&h.cos, format!("cocycle.generator.harmonics[{i}].cos"))?;
                    square(&h.sin, format!("cocycle.generator.harmonics[{i}].sin"))?;
                }
            }
            (Generator::ExpLinear { s, l }, SystemKind::IntervalIdentity) => {
                square(s, "cocycle.generator.s".into())?;
                square(l, "cocycle.generator.l".into())?;
            }
            _ => return Err(Error::invalid("cocycle.generator", "generator type does not match the base kind")),
        }
        self.check_det_floor()
    }

    fn check_det_floor(&self) -> Result<()> {
        let check = |m: &Mat, location: String| -> Result<()> {
            let det = m.determinant();
            if !(det.abs() >= self.det_floor) {
                return Err(Error::DetFloor { det, floor: self.det_floor, location });
            }
            Ok(())
        };
        match &self.generator {
            Generator::LocallyConstant { .. } => {
                for w in self.cells() {
                    check(&self.eval_word(&w), format!("word {}", crate::base::word_to_string(&w)))?;
                }
            }
            _ => {
                for x in self.sample_grid(512) {
                    check(&self.eval(&x), x.label())?;
                }
            }
        }
        Ok(())
    }

    /// Dense sample of the base for the non-shift kinds.
    pub fn sample_grid(&self, n: usize) -> Vec<BasePoint> {
        match self.base.kind {
            SystemKind::CircleRotation => (0..n).map(|j| BasePoint::Circle(j as f64 / n as f64)).collect(),
            SystemKind::IntervalIdentity => {
                let [lo, hi] = self.base.interval.unwrap_or([0.0, 1.0]);
                (0..=n).map(|j| BasePoint::Interval(lo + (hi - lo) * j as f64 / n as f64)).collect()
            }
            _ => Vec::new(),
        }
    }

    /// Cylinder depth on which the generator is constant.
    pub fn depth(&self) -> usize {
        match &self.generator {
            Generator::LocallyConstant { depth, patches, .. } => {
                patches.iter().map(|p| p.word.len()).fold(*depth, usize::max)
            }
            _ => 0,
        }
    }

    fn table_depth(&self) -> usize {
        match &self.generator {
            Generator::LocallyConstant { depth, .. } => *depth,
            _ => 0,
        }
    }

    fn patches(&self) -> &[Patch] {
        match &self.generator {
            Generator::LocallyConstant { patches, .. } => patches,
            _ => &[],
        }
    }

    /// Matrix on the cylinder of a word at least as long as the table depth.
    pub fn eval_word(&self, w: &[u8]) -> Mat {
        let Generator::LocallyConstant { depth, table, patches } = &self.generator else {
            panic!("eval_word needs a locally constant generator");
        };
        let mut m = table[&w[..*depth]].clone();
        for p in patches {
            if w.len() >= p.word.len() && w[..p.word.len()] == p.word[..] {
                match p.mode {
                    PatchMode::Compose => m = &m + &m * &p.delta,
                    PatchMode::Add => m += &p.delta,
                }
            }
        }
        m
    }

    pub fn eval(&self, x: &BasePoint) -> Mat {
        match (&self.generator, x) {
            (Generator::LocallyConstant { .. }, BasePoint::Shift { .. }) => self.eval_word(&x.forward_symbols(self.depth())),
            (Generator::TrigPolynomial { harmonics }, BasePoint::Circle(t)) => {
                let mut m = Mat::zeros(self.dim, self.dim);
                for h in harmonics {
                    let (s, c) = (TAU * h.k as f64 * t).sin_cos();
                    m += &h.cos * c + &h.sin * s;
                }
                m
            }
            (Generator::ExpLinear { s, l }, BasePoint::Interval(t)) => s * (l * *t).exp(),
            _ => panic!("base point {} does not match the generator", x.label()),
        }
    }

    /// Words whose cylinders partition the shift and on which the generator is constant.
    pub fn cells(&self) -> Vec<Vec<u8>> {
        cells_for(&self.base, self.table_depth(), &[self.patches()])
    }

    /// Adds a patch on the cylinder of `word`. Returns the new cocycle and its sup distance to `self`.
    pub fn perturb_on_cylinder(&self, word: &[u8], delta: Mat, mode: PatchMode) -> Result<(MatrixCocycle, f64)> {
        let Generator::LocallyConstant { depth, table, patches } = &self.generator else {
            return Err(Error::UnsupportedBase("cylinder patches need a shift base".into()));
        };
        if word.is_empty() || !self.base.admissible_word(word) {
            return Err(Error::invalid("word", "cylinder word must be nonempty and admissible"));
        }
        if delta.nrows() != self.dim || delta.ncols() != self.dim {
            return Err(Error::invalid("delta", "wrong shape"));
        }
        let mut patches = patches.clone();
        patches.push(Patch { word: word.to_vec(), mode, delta });
        let out = MatrixCocycle {
            base: self.base.clone(),
            dim: self.dim,
            generator: Generator::LocallyConstant { depth: *depth, table: table.clone(), patches },
            det_floor: self.det_floor,
        };
        out.check_det_floor()?;
        let dist = sup_distance(self, &out)?;
        Ok((out, dist))
    }

    /// Same cocycle with the table re-expressed at a larger depth and patches folded in.
    pub fn deepen(&self, new_depth: usize) -> Result<MatrixCocycle> {
        self.transform(new_depth, &|_| None, &|_| None)
    }

    /// A'(x) = L(x)·A(x)·R(x) with L, R functions of the depth-k forward word
    /// (`None` = identity). The result has table depth max(m, k); patches are
    /// rewritten so that evaluation agrees everywhere.
    pub fn transform(
        &self,
        k: usize,
        left: &dyn Fn(&[u8]) -> Option<Mat>,
        right: &dyn Fn(&[u8]) -> Option<Mat>,
    ) -> Result<MatrixCocycle> {
        match &self.generator {
            Generator::LocallyConstant { depth, table, patches } => {
                let m = (*depth).max(k);
                let apply = |w: &[u8], a: &Mat| -> Mat {
                    let mut out = a.clone();
                    if let Some(l) = left(&w[..k]) {
                        out = l * out;
                    }
                    if let Some(r) = right(&w[..k]) {
                        out *= r;
                    }
                    out
                };
                let mut new_table = BTreeMap::new();
                for w in admissible_words(&self.base, m) {
                    let a = table[&w[..*depth]].clone();
                    new_table.insert(w.clone(), apply(&w, &a));
                }
                let mut new_patches = Vec::new();
                for p in patches {
                    let words = if p.word.len() >= k { vec![p.word.clone()] } else { extensions(&self.base, &p.word, k) };
                    for w in words {
                        let r = right(&w[..k]);
                        let delta = match p.mode {
                            PatchMode::Compose => match &r {
                                Some(r) => {
                                    let ri = r.clone().try_inverse().ok_or_else(|| Error::invalid("right", "not invertible"))?;
                                    ri * &p.delta * r
                                }
                                None => p.delta.clone(),
                            },
                            PatchMode::Add => apply(&w, &p.delta),
                        };
                        new_patches.push(Patch { word: w, mode: p.mode, delta });
                    }
                }
                let mut out = self.clone();
                out.generator = Generator::LocallyConstant { depth: m, table: new_table, patches: new_patches };
                out.check_det_floor()?;
                Ok(out)
            }
            Generator::TrigPolynomial { harmonics } => {
                if k > 0 {
                    return Err(Error::UnsupportedBase("word-dependent transforms need a shift base".into()));
                }
                let l = left(&[]).unwrap_or_else(|| Mat::identity(self.dim, self.dim));
                let r = right(&[]).unwrap_or_else(|| Mat::identity(self.dim, self.dim));
                let harmonics = harmonics
                    .iter()
                    .map(|h| Harmonic { k: h.k, cos: &l * &h.cos * &r, sin: &l * &h.sin * &r })
                    .collect();
                let mut out = self.clone();
                out.generator = Generator::TrigPolynomial { harmonics };
                out.check_det_floor()?;
                Ok(out)
            }
            Generator::ExpLinear { s, l } => {
                if k > 0 || right(&[]).is_some() {
                    return Err(Error::UnsupportedBase("only constant left factors on an exp-linear generator".into()));
                }
                let lf = left(&[]).unwrap_or_else(|| Mat::identity(self.dim, self.dim));
                let mut out = self.clone();
                out.generator = Generator::ExpLinear { s: lf * s, l: l.clone() };
                out.check_det_floor()?;
                Ok(out)
            }
        }
    }

    /// A'(x) = R·A(x) for a constant matrix R.
    pub fn left_multiply(&self, r: &Mat) -> Result<MatrixCocycle> {
        self.transform(0, &|_| Some(r.clone()), &|_| None)
    }

    /// The cocycle on the cylinders of a periodic orbit read from each phase:
    /// the generator loop A(x), A(Tx), …, A(T^{p−1}x).
    pub fn orbit_loop(&self, orbit: &crate::base::PeriodicOrbit) -> Vec<Mat> {
        Fibered::factors(self, &orbit.point(0), orbit.period)
    }
}

/// Anything that assigns a d×d matrix to each base point over a base map.
pub trait Fibered: Sync {
    fn system(&self) -> &SymbolicSystem;
    fn dim(&self) -> usize;
    fn matrix_at(&self, x: &BasePoint) -> Mat;

    /// A(x), A(Tx), …, A(T^{n-1}x).
    fn factors(&self, x: &BasePoint, n: usize) -> Vec<Mat> {
        let mut out = Vec::with_capacity(n);
        let mut y = x.clone();
        for _ in 0..n {
            out.push(self.matrix_at(&y));
            y = y.next(self.system());
        }
        out
    }

    /// Aⁿ(x) = A(T^{n−1}x)⋯A(x); for n < 0 the inverse cocycle.
    fn iterate(&self, x: &BasePoint, n: i64) -> Mat {
        let d = self.dim();
        let mut m = Mat::identity(d, d);
        if n >= 0 {
            let mut y = x.clone();
            for _ in 0..n {
                m = self.matrix_at(&y) * m;
                y = y.next(self.system());
            }
        } else {
            for k in 1..=(-n) {
                let a = self.matrix_at(&x.advance(self.system(), -k));
                let inv = a.try_inverse().expect("generator matrices are invertible");
                m = inv * m;
            }
        }
        m
    }

    /// log σ_i(Aⁿ(x)), ascending.
    fn log_singular_values(&self, x: &BasePoint, n: usize) -> Vec<f64> {
        product_svd(self.dim(), &self.factors(x, n)).log_ascending()
    }

    /// σ_i(Aⁿ(x)), ascending.
    fn singular_values(&self, x: &BasePoint, n: usize) -> Vec<f64> {
        self.log_singular_values(x, n).into_iter().map(f64::exp).collect()
    }

    /// (1/n)∫ log σ_i(Aⁿ) dμ, ascending.
    fn lyapunov_estimate(&self, mu: &InvariantMeasure, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (x, w) in mu.nodes(self.system()) {
            for (o, l) in out.iter_mut().zip(self.log_singular_values(&x, n)) {
                *o += w * l / n as f64;
            }
        }
        out
    }
}

impl Fibered for MatrixCocycle {
    fn system(&self) -> &SymbolicSystem {
        &self.base
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn matrix_at(&self, x: &BasePoint) -> Mat {
        self.eval(x)
    }
}

fn extensions(sys: &SymbolicSystem, w: &[u8], len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![w.to_vec()];
    while out[0].len() < len {
        let mut next = Vec::new();
        for v in &out {
            for s in 0..sys.alphabet_size as u8 {
                let mut u = v.clone();
                u.push(s);
                if sys.admissible_word(&u) {
                    next.push(u);
                }
            }
        }
        out = next;
        if out.is_empty() {
            break;
        }
    }
    out
}

/// Trie enumeration of the cells on which every listed patch set is constant.
fn cells_for(sys: &SymbolicSystem, depth: usize, patch_sets: &[&[Patch]]) -> Vec<Vec<u8>> {
    let long: Vec<&Vec<u8>> = patch_sets.iter().flat_map(|s| s.iter().map(|p| &p.word)).collect();
    let mut out = Vec::new();
    let mut stack: Vec<Vec<u8>> = admissible_words(sys, depth);
    stack.reverse();
    while let Some(w) = stack.pop() {
        let refine = long.iter().any(|p| p.len() > w.len() && p[..w.len()] == w[..]);
        if refine {
            let mut kids: Vec<Vec<u8>> = (0..sys.alphabet_size as u8)
                .map(|s| {
                    let mut u = w.clone();
                    u.push(s);
                    u
                })
                .filter(|u| sys.admissible_word(u))
                .collect();
            kids.reverse();
            stack.extend(kids);
        } else {
            out.push(w);
        }
    }
    out
}

/// sup_x ‖A(x) − B(x)‖ (operator norm). Exact over shifts; a 4096-point grid otherwise.
pub fn sup_distance(a: &MatrixCocycle, b: &MatrixCocycle) -> Result<f64> {
    if a.base != b.base || a.dim != b.dim {
        return Err(Error::invalid("cocycle", "cocycles live over different bases or dimensions"));
    }
    if a.base.is_shift() {
        let depth = a.table_depth().max(b.table_depth());
        let cells = cells_for(&a.base, depth, &[a.patches(), b.patches()]);
        Ok(cells.iter().map(|w| op_norm(&(a.eval_word(w) - b.eval_word(w)))).fold(0.0, f64::max))
    } else {
        Ok(a.sample_grid(4096).iter().map(|x| op_norm(&(a.eval(x) - b.eval(x)))).fold(0.0, f64::max))
    }
}
