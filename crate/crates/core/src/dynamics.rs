//! State spaces, acting groups, and the model dynamical systems.
//!
//! A system is a measurable action `T : G x X -> X` of `G = Z^d` on a compact
//! metric state space. The catalogue covers the standard laboratory cases:
//!
//! * circle rotation `x -> x + alpha mod 1` (a `Z`-action by isometries),
//! * toral translation on `T^d` (a `Z^d`-action by isometries),
//! * the doubling map `x -> 2x mod 1` (forward-only, expanding),
//! * the two-sided full shift on `s` symbols,
//! * the trivial identity action (every measure is invariant).
//!
//! Each system carries a pseudometric `p`, a Hölder action profile
//! `p(T_g x, T_g y) <= L(g) * p(x, y)^{H(g)}`, and a canonical reference
//! measure (constructed in [`crate::measure`]).

use crate::error::{Error, Result};
use serde::Serialize;
use smallvec::SmallVec;
use std::fmt;

/// Largest coordinate magnitude for which integer arithmetic is kept exact.
pub const MAX_COORD: i64 = 1 << 40;

/// An element of the acting group `Z^d`, stored as an integer vector.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct GroupElement {
    coords: SmallVec<[i64; 2]>,
}

impl GroupElement {
    /// Builds an element of `Z^d` from its coordinates.
    pub fn new(coords: &[i64]) -> Self {
        Self {
            coords: SmallVec::from_slice(coords),
        }
    }

    /// The element `n` of `Z` (the `d = 1` case).
    pub fn z(n: i64) -> Self {
        Self::new(&[n])
    }

    /// The identity of `Z^d`.
    pub fn zero(dim: usize) -> Self {
        Self {
            coords: SmallVec::from_elem(0, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.coords
    }

    /// Coordinatewise sum, checked against the exact-arithmetic range.
    pub fn add(&self, other: &GroupElement) -> Result<GroupElement> {
        if self.dim() != other.dim() {
            return Err(Error::GroupDimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        let coords: SmallVec<[i64; 2]> = self
            .coords
            .iter()
            .zip(other.coords.iter())
            .map(|(a, b)| a + b)
            .collect();
        for &c in &coords {
            if c.abs() > MAX_COORD {
                return Err(Error::CoordinateOverflow { value: c as f64 });
            }
        }
        Ok(GroupElement { coords })
    }

    /// Coordinatewise negation.
    pub fn neg(&self) -> GroupElement {
        GroupElement {
            coords: self.coords.iter().map(|c| -c).collect(),
        }
    }

    /// The single coordinate of a `Z`-element.
    pub fn as_z(&self) -> Result<i64> {
        if self.dim() == 1 {
            Ok(self.coords[0])
        } else {
            Err(Error::GroupDimensionMismatch {
                expected: 1,
                found: self.dim(),
            })
        }
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.dim() == 1 {
            write!(f, "{}", self.coords[0])
        } else {
            write!(f, "(")?;
            for (i, c) in self.coords.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{c}")?;
            }
            write!(f, ")")
        }
    }
}

/// A point of the state space.
///
/// Torus points keep every coordinate reduced into `[0, 1)`. Symbolic points
/// are finite words extended periodically in both directions, so the word
/// `[0, 1]` denotes the sequence `...010101...` with symbol `0` at index 0.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Point {
    Torus(SmallVec<[f64; 2]>),
    Symbolic(Vec<u8>),
}

/// Reduces a coordinate into the fundamental domain `[0, 1)`.
#[inline]
pub fn frac(x: f64) -> f64 {
    let r = x - x.floor();
    // `x - floor(x)` can round up to exactly 1.0 for tiny negative inputs.
    if r >= 1.0 {
        r - 1.0
    } else {
        r
    }
}

impl Point {
    /// A torus point; coordinates are reduced mod 1 on construction.
    pub fn torus(coords: &[f64]) -> Self {
        Point::Torus(coords.iter().map(|&x| frac(x)).collect())
    }

    /// A circle point (one-dimensional torus).
    pub fn circle(x: f64) -> Self {
        Point::torus(&[x])
    }

    /// A periodic symbolic point given by one period of its word.
    pub fn word(symbols: &[u8]) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::InvalidParameter(
                "symbolic point needs a nonempty word".into(),
            ));
        }
        Ok(Point::Symbolic(symbols.to_vec()))
    }

    /// Symbol at (possibly negative) index `n` of the periodic extension.
    pub fn symbol_at(&self, n: i64) -> Result<u8> {
        match self {
            Point::Symbolic(w) => {
                let len = w.len() as i64;
                Ok(w[n.rem_euclid(len) as usize])
            }
            Point::Torus(_) => Err(Error::PointVariantMismatch),
        }
    }

    pub fn torus_coords(&self) -> Result<&[f64]> {
        match self {
            Point::Torus(c) => Ok(c),
            Point::Symbolic(_) => Err(Error::PointVariantMismatch),
        }
    }

    /// Short human-readable rendering used in reports and witnesses.
    pub fn describe(&self) -> String {
        match self {
            Point::Torus(c) => {
                let parts: Vec<String> = c.iter().map(|x| format!("{x}")).collect();
                format!("[{}]", parts.join(", "))
            }
            Point::Symbolic(w) => {
                let s: String = w.iter().map(|b| (b'0' + b) as char).collect();
                format!("word {s}")
            }
        }
    }
}

/// The kind of model system, with its defining parameters.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum SystemKind {
    /// `x -> x + n*alpha mod 1` on the circle.
    Rotation { alpha: f64 },
    /// `x -> x + (n_1 alpha_1, ..., n_d alpha_d) mod 1` on `T^d`.
    ToralTranslation { alphas: Vec<f64> },
    /// `x -> 2^n x mod 1` on the circle, defined for `n >= 0` only.
    Doubling,
    /// Two-sided full shift on `symbols` letters with metric `2^{-k}`.
    Shift { symbols: u8 },
    /// Identity action on a torus of the given dimension.
    Trivial { dim: usize },
}

/// Hölder action profile: exponent `H(g)` and coefficient `L(g)` with
/// `p(T_g x, T_g y) <= L(g) * p(x, y)^{H(g)}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum HolderProfile {
    /// `H = L = 1`: the action never expands distances.
    Isometric,
    /// `H(n) = 1`, `L(n) = base^n` for forward indices `n >= 0`.
    GeometricForward { base: f64 },
    /// `H(n) = 1`, `L(n) = base^{|n|}` for two-sided indices.
    GeometricTwoSided { base: f64 },
}

impl HolderProfile {
    /// Hölder exponent `H(g)`.
    pub fn exponent(&self, _g: &GroupElement) -> f64 {
        1.0
    }

    /// Hölder coefficient `L(g)`. Overflow saturates to `+inf`, which keeps
    /// threshold comparisons meaningful.
    pub fn coefficient(&self, g: &GroupElement) -> f64 {
        match self {
            HolderProfile::Isometric => 1.0,
            HolderProfile::GeometricForward { base } => {
                let n = g.coords().iter().copied().max().unwrap_or(0).max(0);
                base.powf(n as f64)
            }
            HolderProfile::GeometricTwoSided { base } => {
                let n = g.coords().iter().map(|c| c.abs()).max().unwrap_or(0);
                base.powf(n as f64)
            }
        }
    }
}

/// How the reference measure of a system is built.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ReferenceMeasure {
    /// Lebesgue (Haar) measure on the torus.
    Lebesgue,
    /// Product Bernoulli measure on the shift.
    Bernoulli,
    /// Any fully supported measure works; the identity preserves them all.
    Arbitrary,
}

/// One of the model dynamical systems, together with its metric, Hölder
/// profile, and reference-measure descriptor.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DynamicalSystem {
    kind: SystemKind,
}

impl DynamicalSystem {
    pub fn rotation(alpha: f64) -> Self {
        Self {
            kind: SystemKind::Rotation { alpha: frac(alpha) },
        }
    }

    pub fn toral_translation(alphas: &[f64]) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::InvalidParameter(
                "toral translation needs at least one coordinate".into(),
            ));
        }
        Ok(Self {
            kind: SystemKind::ToralTranslation {
                alphas: alphas.iter().map(|&a| frac(a)).collect(),
            },
        })
    }

    pub fn doubling() -> Self {
        Self {
            kind: SystemKind::Doubling,
        }
    }

    pub fn shift(symbols: u8) -> Result<Self> {
        if symbols < 2 {
            return Err(Error::InvalidParameter(
                "shift alphabet needs at least two symbols".into(),
            ));
        }
        Ok(Self {
            kind: SystemKind::Shift { symbols },
        })
    }

    pub fn trivial(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "trivial action needs a positive state dimension".into(),
            ));
        }
        Ok(Self {
            kind: SystemKind::Trivial { dim },
        })
    }

    pub fn kind(&self) -> &SystemKind {
        &self.kind
    }

    /// Dimension `d` of the acting group `Z^d`.
    pub fn group_dim(&self) -> usize {
        match &self.kind {
            SystemKind::ToralTranslation { alphas } => alphas.len(),
            _ => 1,
        }
    }

    /// Dimension of torus state spaces; `None` for symbolic spaces.
    pub fn torus_dim(&self) -> Option<usize> {
        match &self.kind {
            SystemKind::Rotation { .. } | SystemKind::Doubling => Some(1),
            SystemKind::ToralTranslation { alphas } => Some(alphas.len()),
            SystemKind::Trivial { dim } => Some(*dim),
            SystemKind::Shift { .. } => None,
        }
    }

    /// Hölder action profile of the system.
    pub fn holder(&self) -> HolderProfile {
        match &self.kind {
            SystemKind::Rotation { .. }
            | SystemKind::ToralTranslation { .. }
            | SystemKind::Trivial { .. } => HolderProfile::Isometric,
            SystemKind::Doubling => HolderProfile::GeometricForward { base: 2.0 },
            SystemKind::Shift { .. } => HolderProfile::GeometricTwoSided { base: 2.0 },
        }
    }

    /// Reference-measure descriptor.
    pub fn reference_measure(&self) -> ReferenceMeasure {
        match &self.kind {
            SystemKind::Rotation { .. }
            | SystemKind::ToralTranslation { .. }
            | SystemKind::Doubling => ReferenceMeasure::Lebesgue,
            SystemKind::Shift { .. } => ReferenceMeasure::Bernoulli,
            SystemKind::Trivial { .. } => ReferenceMeasure::Arbitrary,
        }
    }

    /// Diameter of the state space under the system's metric.
    pub fn space_diameter(&self) -> f64 {
        match &self.kind {
            SystemKind::Shift { .. } => 1.0,
            _ => 0.5,
        }
    }

    /// Whether every index of `Z^d` acts (`false` for forward-only systems).
    pub fn invertible(&self) -> bool {
        !matches!(self.kind, SystemKind::Doubling)
    }

    /// Validates that `g` is inside the supported index range.
    pub fn check_index(&self, g: &GroupElement) -> Result<()> {
        if g.dim() != self.group_dim() {
            return Err(Error::GroupDimensionMismatch {
                expected: self.group_dim(),
                found: g.dim(),
            });
        }
        for &c in g.coords() {
            if c.abs() > MAX_COORD {
                return Err(Error::CoordinateOverflow { value: c as f64 });
            }
        }
        if let SystemKind::Doubling = self.kind {
            let n = g.coords()[0];
            if n < 0 {
                return Err(Error::UnsupportedIndex {
                    index: n,
                    reason: "the doubling map is not invertible; indices must be >= 0",
                });
            }
        }
        Ok(())
    }

    /// Validates that `x` lives in this system's state space.
    pub fn check_point(&self, x: &Point) -> Result<()> {
        match (&self.kind, x) {
            (SystemKind::Shift { symbols }, Point::Symbolic(w)) => {
                for &s in w {
                    if s >= *symbols {
                        return Err(Error::SymbolOutOfRange {
                            symbol: s,
                            alphabet: *symbols,
                        });
                    }
                }
                Ok(())
            }
            (SystemKind::Shift { .. }, Point::Torus(_)) => Err(Error::PointVariantMismatch),
            (_, Point::Symbolic(_)) => Err(Error::PointVariantMismatch),
            (_, Point::Torus(c)) => {
                let expected = self.torus_dim().unwrap();
                if c.len() != expected {
                    Err(Error::PointDimensionMismatch {
                        expected,
                        found: c.len(),
                    })
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Applies `T_g` to `x`. Torus coordinates are reduced mod 1 after the
    /// action so downstream metric code never sees drift out of `[0, 1)`.
    pub fn act(&self, g: &GroupElement, x: &Point) -> Result<Point> {
        self.check_index(g)?;
        self.check_point(x)?;
        Ok(match (&self.kind, x) {
            (SystemKind::Rotation { alpha }, Point::Torus(c)) => {
                Point::Torus(smallvec::smallvec![frac(c[0] + g.coords()[0] as f64 * alpha)])
            }
            (SystemKind::ToralTranslation { alphas }, Point::Torus(c)) => Point::Torus(
                c.iter()
                    .zip(alphas.iter().zip(g.coords()))
                    .map(|(&x, (&a, &n))| frac(x + n as f64 * a))
                    .collect(),
            ),
            (SystemKind::Doubling, Point::Torus(c)) => {
                Point::Torus(smallvec::smallvec![double_iterate(c[0], g.coords()[0])])
            }
            (SystemKind::Shift { .. }, Point::Symbolic(w)) => {
                let len = w.len() as i64;
                let n = g.coords()[0];
                let rotated: Vec<u8> = (0..w.len())
                    .map(|i| w[(i as i64 + n).rem_euclid(len) as usize])
                    .collect();
                Point::Symbolic(rotated)
            }
            (SystemKind::Trivial { .. }, p) => p.clone(),
            _ => unreachable!("check_point rules out mismatched variants"),
        })
    }

    /// `Z`-action fast path: `act` with the single index `n`.
    pub fn act_z(&self, n: i64, x: &Point) -> Result<Point> {
        self.act(&GroupElement::z(n), x)
    }

    /// Distance between two points of the state space.
    ///
    /// Torus: max over coordinates of the wraparound distance
    /// `min(|x - y|, 1 - |x - y|)`. Shift: `2^{-m}` where `m` is the smallest
    /// `|n|` with `x_n != y_n` (zero for equal sequences).
    pub fn distance(&self, x: &Point, y: &Point) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(y)?;
        match (x, y) {
            (Point::Torus(a), Point::Torus(b)) => {
                let mut d = 0.0f64;
                for (&xa, &xb) in a.iter().zip(b.iter()) {
                    d = d.max(circle_distance(xa, xb));
                }
                Ok(d)
            }
            (Point::Symbolic(a), Point::Symbolic(b)) => Ok(word_distance(a, b)),
            _ => Err(Error::PointVariantMismatch),
        }
    }

    /// The a-priori distortion bound `L(g) * r^{H(g)}`.
    pub fn distortion_bound(&self, g: &GroupElement, r: f64) -> Result<f64> {
        self.check_index(g)?;
        if !(r >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "radius must be nonnegative, got {r}"
            )));
        }
        let profile = self.holder();
        let h = profile.exponent(g);
        let l = profile.coefficient(g);
        Ok(l * pow_holder(r, h))
    }
}

/// `r^h` with the ubiquitous `h = 1` case kept exact.
#[inline]
pub fn pow_holder(r: f64, h: f64) -> f64 {
    if h == 1.0 {
        r
    } else {
        r.powf(h)
    }
}

/// Wraparound distance on the circle.
#[inline]
pub fn circle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    d.min(1.0 - d)
}

/// `2^n x mod 1` by exact repeated doubling. Each step `x -> 2x mod 1` is
/// exact in binary floating point, and any `f64` in `[0, 1)` reaches 0 after
/// finitely many doublings, so the loop is bounded even for huge `n`.
fn double_iterate(x0: f64, n: i64) -> f64 {
    let mut x = x0;
    for _ in 0..n {
        if x == 0.0 {
            break;
        }
        x *= 2.0;
        if x >= 1.0 {
            x -= 1.0;
        }
    }
    x
}

/// Shift metric `2^{-min{|n| : x_n != y_n}}` for periodic words.
///
/// Two periodic sequences that agree on every index within one least common
/// period agree everywhere, so the scan is finite.
fn word_distance(a: &[u8], b: &[u8]) -> f64 {
    let la = a.len() as i64;
    let lb = b.len() as i64;
    let horizon = lcm(la, lb);
    for m in 0..=horizon {
        for n in [m, -m] {
            if a[n.rem_euclid(la) as usize] != b[n.rem_euclid(lb) as usize] {
                return 0.5f64.powi(m as i32);
            }
        }
    }
    0.0
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: i64, b: i64) -> i64 {
    a / gcd(a, b) * b
}

/// Distortion profile `D_{x0}(g, r) = sup { p(T_g x0, T_g x) : p(x0, x) <= r }`.
///
/// For the homogeneous model systems the supremum is bounded by
/// `min(L(g) * r^{H(g)}, diam X)`, which is what `eval` reports; it is
/// nondecreasing in `r` and never exceeds the Hölder bound.
#[derive(Clone, Debug)]
pub struct DistortionProfile {
    base_point: Point,
}

impl DistortionProfile {
    pub fn new(base_point: Point) -> Self {
        Self { base_point }
    }

    pub fn base_point(&self) -> &Point {
        &self.base_point
    }

    pub fn eval(&self, sys: &DynamicalSystem, g: &GroupElement, r: f64) -> Result<f64> {
        Ok(sys.distortion_bound(g, r)?.min(sys.space_diameter()))
    }
}
