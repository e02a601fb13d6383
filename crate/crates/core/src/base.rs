//! Base dynamics: full shifts, subshifts of finite type, rational rotations of
//! the circle, and the identity on an interval.
//!
//! Points of a shift are always periodic sequences `w^∞` read from a phase,
//! which is all the algorithms ever need: orbit points, homoclinic
//! approximants and long random words standing in for generic points.

use crate::error::{Error, Result};
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    FullShift,
    Sft,
    CircleRotation,
    /// T = Id on a closed interval; used for cocycles depending on a real parameter.
    IntervalIdentity,
}

/// A rotation angle p/q given as a continued-fraction convergent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RotationAngle {
    pub p: u64,
    pub q: u64,
    pub cf_depth: usize,
}

impl RotationAngle {
    /// Convergent of [0; a_1, a_2, …].
    pub fn from_continued_fraction(partial: &[u64]) -> Result<Self> {
        if partial.is_empty() || partial.contains(&0) {
            return Err(Error::invalid("angle", "partial quotients must be positive"));
        }
        // 1/(a_1 + 1/(a_2 + …)) evaluated from the back
        let (mut p, mut q) = (0u64, 1u64);
        for &a in partial.iter().rev() {
            (p, q) = (q, a * q + p);
        }
        if p == 0 || p >= q {
            return Err(Error::invalid("angle", "convergent must lie in (0,1)"));
        }
        Ok(RotationAngle { p, q, cf_depth: partial.len() })
    }

    /// Golden-mean convergent F_k / F_{k+1}.
    pub fn golden(depth: usize) -> Self {
        Self::from_continued_fraction(&vec![1; depth.max(2)]).expect("golden convergent")
    }

    pub fn value(&self) -> f64 {
        self.p as f64 / self.q as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolicSystem {
    pub kind: SystemKind,
    #[serde(default)]
    pub alphabet_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<Vec<Vec<u8>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle: Option<RotationAngle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<[f64; 2]>,
}

impl SymbolicSystem {
    pub fn full_shift(alphabet_size: usize) -> Self {
        SymbolicSystem { kind: SystemKind::FullShift, alphabet_size, transition: None, angle: None, interval: None }
    }

    pub fn sft(transition: Vec<Vec<u8>>) -> Result<Self> {
        let sys = SymbolicSystem {
            kind: SystemKind::Sft,
            alphabet_size: transition.len(),
            transition: Some(transition),
            angle: None,
            interval: None,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn rotation(angle: RotationAngle) -> Self {
        SymbolicSystem { kind: SystemKind::CircleRotation, alphabet_size: 0, transition: None, angle: Some(angle), interval: None }
    }

    pub fn golden_rotation() -> Self {
        Self::rotation(RotationAngle::golden(12))
    }

    pub fn interval_identity(lo: f64, hi: f64) -> Self {
        SymbolicSystem {
            kind: SystemKind::IntervalIdentity,
            alphabet_size: 0,
            transition: None,
            angle: None,
            interval: Some([lo, hi]),
        }
    }

    pub fn is_shift(&self) -> bool {
        matches!(self.kind, SystemKind::FullShift | SystemKind::Sft)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            SystemKind::FullShift => {
                if self.alphabet_size == 0 || self.alphabet_size > 36 {
                    return Err(Error::invalid("system.alphabet_size", "must be in 1..=36"));
                }
            }
            SystemKind::Sft => {
                let t = self.transition.as_ref().ok_or_else(|| Error::invalid("system.transition", "required for sft"))?;
                let k = t.len();
                if k == 0 || k > 36 || t.iter().any(|r| r.len() != k || r.iter().any(|&v| v > 1)) {
                    return Err(Error::invalid("system.transition", "must be a square 0/1 matrix of size ≤ 36"));
                }
                if self.alphabet_size != k {
                    return Err(Error::invalid("system.alphabet_size", "must equal the transition matrix size"));
                }
                if !has_cycle(t) {
                    return Err(Error::invalid("system.transition", "no admissible cycle"));
                }
            }
            SystemKind::CircleRotation => {
                let a = self.angle.ok_or_else(|| Error::invalid("system.angle", "required for circle-rotation"))?;
                if a.q == 0 || a.p == 0 || a.p >= a.q {
                    return Err(Error::invalid("system.angle", "p/q must lie in (0,1) with q ≥ 1"));
                }
            }
            SystemKind::IntervalIdentity => {
                let iv = self.interval.ok_or_else(|| Error::invalid("system.interval", "required for interval-identity"))?;
                if !(iv[0] <= iv[1]) {
                    return Err(Error::invalid("system.interval", "lo must not exceed hi"));
                }
            }
        }
        Ok(())
    }

    fn allowed(&self, a: u8, b: u8) -> bool {
        match &self.transition {
            Some(t) => t[a as usize][b as usize] == 1,
            None => true,
        }
    }

    pub fn admissible_word(&self, w: &[u8]) -> bool {
        w.iter().all(|&s| (s as usize) < self.alphabet_size) && w.windows(2).all(|p| self.allowed(p[0], p[1]))
    }

    /// The periodic sequence w^∞ is admissible.
    pub fn admissible_cycle(&self, w: &[u8]) -> bool {
        !w.is_empty() && self.admissible_word(w) && self.allowed(w[w.len() - 1], w[0])
    }

    pub fn alpha(&self) -> f64 {
        self.angle.map(|a| a.value()).unwrap_or(0.0)
    }
}

fn has_cycle(t: &[Vec<u8>]) -> bool {
    // some power of the adjacency matrix has a nonzero diagonal entry
    let k = t.len();
    let mut reach: Vec<Vec<bool>> = t.iter().map(|r| r.iter().map(|&v| v == 1).collect()).collect();
    for _ in 0..k {
        if (0..k).any(|i| reach[i][i]) {
            return true;
        }
        let mut next = vec![vec![false; k]; k];
        for i in 0..k {
            for j in 0..k {
                next[i][j] = reach[i][j] || (0..k).any(|m| reach[i][m] && t[m][j] == 1);
            }
        }
        reach = next;
    }
    (0..k).any(|i| reach[i][i])
}

pub fn word_to_string(w: &[u8]) -> String {
    w.iter().map(|&s| std::char::from_digit(s as u32, 36).unwrap_or('?')).collect()
}

pub fn parse_word(s: &str) -> Result<Vec<u8>> {
    s.chars()
        .map(|c| c.to_digit(36).map(|d| d as u8).ok_or_else(|| Error::invalid("word", format!("bad symbol {c:?}"))))
        .collect()
}

pub(crate) mod word_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(w: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::word_to_string(w))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_word(&s).map_err(serde::de::Error::custom)
    }
}

/// Lexicographically minimal rotation of a word.
pub fn canonical_rotation(w: &[u8]) -> Vec<u8> {
    (0..w.len())
        .map(|r| w[r..].iter().chain(&w[..r]).copied().collect::<Vec<u8>>())
        .min()
        .unwrap_or_default()
}

pub fn is_primitive(w: &[u8]) -> bool {
    let p = w.len();
    (1..p).filter(|d| p % d == 0).all(|d| w.chunks(d).any(|c| c != &w[..d]))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    #[serde(with = "word_serde")]
    pub word: Vec<u8>,
    pub period: usize,
}

impl PeriodicOrbit {
    /// Canonicalized orbit; the word must be nonempty and primitive.
    pub fn new(word: Vec<u8>) -> Result<Self> {
        if word.is_empty() {
            return Err(Error::invalid("orbit.word", "empty word"));
        }
        if !is_primitive(&word) {
            return Err(Error::invalid("orbit.word", format!("{} is not primitive", word_to_string(&word))));
        }
        let word = canonical_rotation(&word);
        let period = word.len();
        Ok(PeriodicOrbit { word, period })
    }

    pub fn from_str_word(s: &str) -> Result<Self> {
        Self::new(parse_word(s)?)
    }

    pub fn point(&self, phase: usize) -> BasePoint {
        BasePoint::Shift { word: self.word.clone(), phase: phase % self.period }
    }

    pub fn points(&self) -> Vec<BasePoint> {
        (0..self.period).map(|k| self.point(k)).collect()
    }

    pub fn label(&self) -> String {
        word_to_string(&self.word)
    }
}

/// A point of the base. Shift points are periodic sequences read from `phase`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasePoint {
    Shift {
        #[serde(with = "word_serde")]
        word: Vec<u8>,
        phase: usize,
    },
    Circle(f64),
    Interval(f64),
}

impl BasePoint {
    pub fn shift(word: &[u8], phase: usize) -> Self {
        BasePoint::Shift { word: word.to_vec(), phase: phase % word.len() }
    }

    /// T^n of the point; n may be negative.
    pub fn advance(&self, sys: &SymbolicSystem, n: i64) -> BasePoint {
        match self {
            BasePoint::Shift { word, phase } => {
                let p = word.len() as i64;
                BasePoint::Shift { word: word.clone(), phase: (*phase as i64 + n).rem_euclid(p) as usize }
            }
            BasePoint::Circle(x) => {
                let a = sys.angle.expect("rotation base");
                // exact when x is a multiple of 1/q; otherwise one rounding per call
                let shift = ((n as i128 * a.p as i128).rem_euclid(a.q as i128)) as f64 / a.q as f64;
                let y = (x + shift).fract();
                BasePoint::Circle(if y < 0.0 { y + 1.0 } else { y })
            }
            BasePoint::Interval(x) => BasePoint::Interval(*x),
        }
    }

    /// Least n ≥ 1 with Tⁿx = x.
    pub fn period(&self, sys: &SymbolicSystem) -> usize {
        match self {
            BasePoint::Shift { word, .. } => word.len(),
            BasePoint::Circle(_) => sys.angle.map(|a| a.q as usize).unwrap_or(1),
            BasePoint::Interval(_) => 1,
        }
    }

    pub fn next(&self, sys: &SymbolicSystem) -> BasePoint {
        self.advance(sys, 1)
    }

    /// The symbols x_0 … x_{m-1}.
    pub fn forward_symbols(&self, m: usize) -> Vec<u8> {
        match self {
            BasePoint::Shift { word, phase } => (0..m).map(|i| word[(phase + i) % word.len()]).collect(),
            _ => Vec::new(),
        }
    }

    pub fn coordinate(&self) -> f64 {
        match self {
            BasePoint::Circle(x) | BasePoint::Interval(x) => *x,
            BasePoint::Shift { .. } => f64::NAN,
        }
    }

    pub fn label(&self) -> String {
        match self {
            BasePoint::Shift { word, phase } => format!("{}@{}", word_to_string(word), phase),
            BasePoint::Circle(x) => format!("c{x:.12}"),
            BasePoint::Interval(x) => format!("i{x:.12}"),
        }
    }
}

/// All primitive admissible periodic words of period ≤ p_max, one canonical
/// representative per cyclic class, in lexicographic order.
pub fn enumerate_periodic_orbits(sys: &SymbolicSystem, p_max: usize) -> Result<Vec<PeriodicOrbit>> {
    if !sys.is_shift() {
        return Err(Error::UnsupportedBase("periodic orbits are enumerated on shift bases only".into()));
    }
    if p_max == 0 {
        return Err(Error::invalid("p_max", "must be ≥ 1"));
    }
    sys.validate()?;
    let mut out = Vec::new();
    let mut word = Vec::with_capacity(p_max);
    extend_words(sys, p_max, &mut word, &mut out);
    out.sort();
    Ok(out.into_iter().map(|word| PeriodicOrbit { period: word.len(), word }).collect())
}

fn extend_words(sys: &SymbolicSystem, p_max: usize, word: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if !word.is_empty()
        && sys.admissible_cycle(word)
        && is_primitive(word)
        && canonical_rotation(word) == *word
    {
        out.push(word.clone());
    }
    if word.len() == p_max {
        return;
    }
    for s in 0..sys.alphabet_size as u8 {
        if let Some(&last) = word.last() {
            if !sys.allowed(last, s) {
                continue;
            }
        }
        // a canonical word never starts with a symbol larger than any later one
        if let Some(&first) = word.first() {
            if s < first {
                continue;
            }
        }
        word.push(s);
        extend_words(sys, p_max, word, out);
        word.pop();
    }
}

/// Periodic orbits with words xᵐ·excursion for m = 1..=count.
pub fn homoclinic_periodic_approximations(
    sys: &SymbolicSystem,
    x: &PeriodicOrbit,
    excursion: &[u8],
    count: usize,
) -> Result<Vec<PeriodicOrbit>> {
    if sys.kind != SystemKind::FullShift {
        return Err(Error::UnsupportedBase("homoclinic approximations need a full shift".into()));
    }
    if count == 0 {
        return Err(Error::invalid("count", "must be ≥ 1"));
    }
    if excursion.is_empty() || excursion == x.word.as_slice() {
        return Err(Error::invalid("excursion", "must be nonempty and differ from the orbit word"));
    }
    if !sys.admissible_word(excursion) || !sys.admissible_word(&x.word) {
        return Err(Error::invalid("excursion", "symbols outside the alphabet"));
    }
    (1..=count)
        .map(|m| {
            let mut w: Vec<u8> = Vec::with_capacity(m * x.period + excursion.len());
            for _ in 0..m {
                w.extend_from_slice(&x.word);
            }
            w.extend_from_slice(excursion);
            PeriodicOrbit::new(w)
        })
        .collect()
}

pub(crate) mod ratio_serde {
    use num_rational::Ratio;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Ratio<u64>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&r.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Ratio<u64>, D::Error> {
        let s = String::deserialize(d)?;
        s.trim().parse::<Ratio<u64>>().map_err(|e| serde::de::Error::custom(format!("bad rational {s:?}: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub orbit: PeriodicOrbit,
    #[serde(with = "ratio_serde")]
    pub weight: Ratio<u64>,
}

/// Finite combination of periodic-orbit measures plus a Lebesgue part.
/// Orbit measures are normalized (mass 1 per unit weight).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantMeasure {
    #[serde(default)]
    pub atoms: Vec<Atom>,
    #[serde(with = "ratio_serde", default = "zero_ratio")]
    pub lebesgue_weight: Ratio<u64>,
    #[serde(default = "default_quadrature")]
    pub quadrature_points: usize,
}

fn zero_ratio() -> Ratio<u64> {
    Ratio::from_integer(0)
}

fn default_quadrature() -> usize {
    64
}

impl InvariantMeasure {
    pub fn orbit(orbit: PeriodicOrbit) -> Self {
        Self::atoms(vec![(orbit, Ratio::from_integer(1))])
    }

    pub fn atoms(atoms: Vec<(PeriodicOrbit, Ratio<u64>)>) -> Self {
        InvariantMeasure {
            atoms: atoms.into_iter().map(|(orbit, weight)| Atom { orbit, weight }).collect(),
            lebesgue_weight: zero_ratio(),
            quadrature_points: default_quadrature(),
        }
    }

    pub fn lebesgue(quadrature_points: usize) -> Self {
        InvariantMeasure { atoms: Vec::new(), lebesgue_weight: Ratio::from_integer(1), quadrature_points }
    }

    pub fn total_mass(&self) -> Ratio<u64> {
        self.atoms.iter().map(|a| a.weight).fold(self.lebesgue_weight, |s, w| s + w)
    }

    pub fn validate(&self, sys: &SymbolicSystem) -> Result<()> {
        for (i, a) in self.atoms.iter().enumerate() {
            if !sys.is_shift() {
                return Err(Error::invalid(format!("measure.atoms[{i}]"), "atoms need a shift base"));
            }
            if !sys.admissible_cycle(&a.orbit.word) {
                return Err(Error::invalid(format!("measure.atoms[{i}].orbit"), "orbit not admissible"));
            }
            if a.orbit.period != a.orbit.word.len() {
                return Err(Error::invalid(format!("measure.atoms[{i}].orbit.period"), "must equal the word length"));
            }
        }
        if self.lebesgue_weight != zero_ratio() {
            if sys.is_shift() {
                return Err(Error::invalid("measure.lebesgue_weight", "Lebesgue part needs a rotation or interval base"));
            }
            if self.quadrature_points == 0 {
                return Err(Error::invalid("measure.quadrature_points", "must be positive"));
            }
        }
        Ok(())
    }

    /// Quadrature nodes with weights; Σ weights = total mass.
    pub fn nodes(&self, sys: &SymbolicSystem) -> Vec<(BasePoint, f64)> {
        let mut out = Vec::new();
        for a in &self.atoms {
            let w = ratio_f64(a.weight) / a.orbit.period as f64;
            for p in a.orbit.points() {
                out.push((p, w));
            }
        }
        let lw = ratio_f64(self.lebesgue_weight);
        if lw > 0.0 {
            out.extend(lebesgue_nodes(sys, self.quadrature_points).into_iter().map(|(p, w)| (p, w * lw)));
        }
        out
    }

    /// Orbit points of the atoms (the sampled support).
    pub fn support_points(&self, sys: &SymbolicSystem) -> Vec<BasePoint> {
        self.nodes(sys).into_iter().map(|(p, _)| p).collect()
    }
}

/// Probability-normalized nodes: uniform on the circle, trapezoid on an interval.
pub fn lebesgue_nodes(sys: &SymbolicSystem, q: usize) -> Vec<(BasePoint, f64)> {
    match sys.kind {
        SystemKind::CircleRotation => (0..q).map(|j| (BasePoint::Circle(j as f64 / q as f64), 1.0 / q as f64)).collect(),
        SystemKind::IntervalIdentity => {
            let [lo, hi] = sys.interval.unwrap_or([0.0, 1.0]);
            if q == 1 || lo == hi {
                return vec![(BasePoint::Interval(0.5 * (lo + hi)), 1.0)];
            }
            let h = 1.0 / (q - 1) as f64;
            (0..q)
                .map(|j| {
                    let w = if j == 0 || j == q - 1 { 0.5 * h } else { h };
                    (BasePoint::Interval(lo + (hi - lo) * j as f64 * h), w)
                })
                .collect()
        }
        _ => Vec::new(),
    }
}

pub fn ratio_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Σ weight · (orbit average of f) + lebesgue_weight · (quadrature of f).
pub fn measure_integrate(mu: &InvariantMeasure, sys: &SymbolicSystem, f: impl Fn(&BasePoint) -> f64) -> f64 {
    mu.nodes(sys).iter().map(|(p, w)| w * f(p)).sum()
}
