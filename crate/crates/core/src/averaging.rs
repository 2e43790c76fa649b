//! Følner schedules, observables, weights, and the ergodic average operators.
//!
//! The temporal average over a finite multiset `F` of group indices is
//!
//! ```text
//! Avg_F f (x) = (1/|F|) * sum_{g in F} f(T_g x),
//! ```
//!
//! summed in a fixed ascending index order with compensated summation so that
//! repeated runs agree bit for bit. Weighted variants multiply each term by a
//! unimodular factor `theta^j`, `xi(x)^j`, or a bounded sequence `a_j`
//! (`Z`-actions only), and multiple averages combine several commuting
//! `Z`-actions along index sequences `n_j^(l)`.

use crate::dynamics::{DynamicalSystem, GroupElement, Point};
use crate::error::{Error, Result};
use crate::kahan::{KahanComplex, KahanSum};
use num_complex::Complex64;
use serde::Serialize;
use std::collections::BTreeSet;

/// A Følner-style schedule `k -> F_k` of finite index sets in `Z^d`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum FolnerSchedule {
    /// `F_k = {0, 1, ..., k-1}` in `Z`.
    Interval,
    /// `F_k = {0, ..., k-1}^d` in `Z^d`.
    Box { dim: usize },
    /// `F_k = { floor(P(1)), ..., floor(P(k)) }` as a multiset: collisions
    /// are collapsed to one element with multiplicity kept as a weight.
    PolynomialImage { coeffs: Vec<f64> },
    /// Arbitrary explicit sets in `Z`; `sets[k-1]` is `F_k`.
    Explicit { sets: Vec<Vec<i64>> },
}

/// A finite multiset of group elements: the materialized `F_k`.
///
/// Members are stored in ascending lexicographic order with multiplicities;
/// `total` counts elements with multiplicity (the `|F|` that divides sums).
#[derive(Clone, Debug, PartialEq)]
pub struct FolnerSet {
    dim: usize,
    members: Vec<(GroupElement, u64)>,
    total: u64,
}

impl FolnerSet {
    fn from_elements(dim: usize, mut elems: Vec<GroupElement>) -> Result<Self> {
        if elems.is_empty() {
            return Err(Error::InvalidParameter("empty averaging set".into()));
        }
        elems.sort();
        let mut members: Vec<(GroupElement, u64)> = Vec::new();
        for e in elems {
            match members.last_mut() {
                Some((prev, count)) if *prev == e => *count += 1,
                _ => members.push((e, 1)),
            }
        }
        let total = members.iter().map(|(_, c)| c).sum();
        Ok(Self {
            dim,
            members,
            total,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of elements counted with multiplicity.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of distinct elements (the size of the support set).
    pub fn support_len(&self) -> usize {
        self.members.len()
    }

    /// Distinct members in ascending order, with multiplicities.
    pub fn members(&self) -> &[(GroupElement, u64)] {
        &self.members
    }

    /// The support as a set of coordinate vectors.
    pub fn support(&self) -> BTreeSet<Vec<i64>> {
        self.members
            .iter()
            .map(|(g, _)| g.coords().to_vec())
            .collect()
    }
}

impl FolnerSchedule {
    pub fn group_dim(&self) -> usize {
        match self {
            FolnerSchedule::Box { dim } => *dim,
            _ => 1,
        }
    }

    /// Whether `F_1 ⊆ F_2 ⊆ ...`, which enables incremental evaluation.
    pub fn is_nested(&self) -> bool {
        match self {
            FolnerSchedule::Interval
            | FolnerSchedule::Box { .. }
            | FolnerSchedule::PolynomialImage { .. } => true,
            FolnerSchedule::Explicit { sets } => {
                let mut seen: BTreeSet<i64> = BTreeSet::new();
                for s in sets {
                    let cur: BTreeSet<i64> = s.iter().copied().collect();
                    if !seen.is_subset(&cur) {
                        return false;
                    }
                    seen = cur;
                }
                true
            }
        }
    }

    /// Materializes `F_k` (`k >= 1`).
    pub fn set(&self, k: usize) -> Result<FolnerSet> {
        if k == 0 {
            return Err(Error::InvalidParameter("schedules start at k = 1".into()));
        }
        match self {
            FolnerSchedule::Interval => FolnerSet::from_elements(
                1,
                (0..k as i64).map(GroupElement::z).collect(),
            ),
            FolnerSchedule::Box { dim } => {
                let mut elems = Vec::with_capacity(k.pow(*dim as u32));
                let mut idx = vec![0i64; *dim];
                loop {
                    elems.push(GroupElement::new(&idx));
                    let mut axis = *dim;
                    loop {
                        if axis == 0 {
                            return FolnerSet::from_elements(*dim, elems);
                        }
                        axis -= 1;
                        idx[axis] += 1;
                        if idx[axis] < k as i64 {
                            break;
                        }
                        idx[axis] = 0;
                    }
                }
            }
            FolnerSchedule::PolynomialImage { coeffs } => {
                let elems = (1..=k as i64)
                    .map(|j| Ok(GroupElement::z(eval_poly_floor(coeffs, j)?)))
                    .collect::<Result<Vec<_>>>()?;
                FolnerSet::from_elements(1, elems)
            }
            FolnerSchedule::Explicit { sets } => {
                let s = sets.get(k - 1).ok_or_else(|| {
                    Error::InvalidParameter(format!(
                        "explicit schedule has {} sets, k = {k} requested",
                        sets.len()
                    ))
                })?;
                FolnerSet::from_elements(1, s.iter().copied().map(GroupElement::z).collect())
            }
        }
    }

    /// Elements added when passing from `F_{k-1}` to `F_k` (with `F_0` empty),
    /// in the order the underlying index `j` enumerates them. `None` means
    /// the schedule is not nested at this step and callers must recompute.
    pub fn increment(&self, k: usize) -> Result<Option<Vec<GroupElement>>> {
        if k == 0 {
            return Err(Error::InvalidParameter("schedules start at k = 1".into()));
        }
        match self {
            FolnerSchedule::Interval => Ok(Some(vec![GroupElement::z(k as i64 - 1)])),
            FolnerSchedule::Box { dim } => {
                if k == 1 {
                    return Ok(Some(vec![GroupElement::zero(*dim)]));
                }
                // The shell [0,k)^d \ [0,k-1)^d, in ascending order.
                let mut shell: Vec<GroupElement> = self
                    .set(k)?
                    .members()
                    .iter()
                    .filter(|(g, _)| g.coords().iter().any(|&c| c == k as i64 - 1))
                    .map(|(g, _)| g.clone())
                    .collect();
                shell.sort();
                Ok(Some(shell))
            }
            FolnerSchedule::PolynomialImage { coeffs } => {
                Ok(Some(vec![GroupElement::z(eval_poly_floor(coeffs, k as i64)?)]))
            }
            FolnerSchedule::Explicit { sets } => {
                let cur: BTreeSet<i64> = sets
                    .get(k - 1)
                    .ok_or_else(|| {
                        Error::InvalidParameter(format!(
                            "explicit schedule has {} sets, k = {k} requested",
                            sets.len()
                        ))
                    })?
                    .iter()
                    .copied()
                    .collect();
                let prev: BTreeSet<i64> = if k == 1 {
                    BTreeSet::new()
                } else {
                    sets[k - 2].iter().copied().collect()
                };
                if prev.is_subset(&cur) {
                    Ok(Some(
                        cur.difference(&prev).map(|&j| GroupElement::z(j)).collect(),
                    ))
                } else {
                    Ok(None)
                }
            }
        }
    }

    /// Følner defect `|(g + F_k) Δ F_k| / |F_k|`, computed on support sets.
    pub fn defect(&self, k: usize, g: &GroupElement) -> Result<f64> {
        if g.dim() != self.group_dim() {
            return Err(Error::GroupDimensionMismatch {
                expected: self.group_dim(),
                found: g.dim(),
            });
        }
        let f = self.set(k)?;
        let support = f.support();
        let translated: BTreeSet<Vec<i64>> = support
            .iter()
            .map(|c| {
                c.iter()
                    .zip(g.coords())
                    .map(|(a, b)| a + b)
                    .collect::<Vec<i64>>()
            })
            .collect();
        let sym_diff = support.symmetric_difference(&translated).count();
        Ok(sym_diff as f64 / support.len() as f64)
    }
}

/// `floor(P(j))` with a range check keeping coordinates exactly representable.
fn eval_poly_floor(coeffs: &[f64], j: i64) -> Result<i64> {
    let t = j as f64;
    let mut v = 0.0f64;
    for &c in coeffs.iter().rev() {
        v = v * t + c;
    }
    let fl = v.floor();
    if !fl.is_finite() || fl.abs() > crate::dynamics::MAX_COORD as f64 {
        return Err(Error::CoordinateOverflow { value: fl });
    }
    Ok(fl as i64)
}

/// Hölder data `(c, beta)` for an observable: `|f(x) - f(y)| <= c * p(x,y)^beta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HolderData {
    pub c: f64,
    pub beta: f64,
}

/// Evaluator kinds for observables on the model state spaces.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum ObservableKind {
    /// Identically zero (useful together with `offset` for constants).
    Zero,
    /// `sum_m coeff_m * exp(2 pi i m x_axis)` on torus points.
    TrigPoly {
        axis: usize,
        terms: Vec<(i64, Complex64)>,
    },
    /// Indicator of `x_position == symbol` on symbolic points.
    CylinderIndicator { position: i64, symbol: u8 },
    /// The symbol value at a position of a symbolic point, as a real number.
    SymbolAt { position: i64 },
    /// The raw torus coordinate in `[0, 1)` (discontinuous at 0).
    Coordinate { axis: usize },
    /// Finite linear combination of other observables.
    Linear { parts: Vec<(Complex64, Box<Observable>)> },
}

/// A bounded observable `f : X -> C` with declared metadata.
///
/// The value is `kernel(x) + offset`; keeping the additive constant out of
/// the kernel lets gauge scans and spread computations cancel it exactly.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Observable {
    kind: ObservableKind,
    offset: Complex64,
    kernel_bound: f64,
    holder: Option<HolderData>,
}

impl Observable {
    /// The constant observable `f ≡ c`.
    pub fn constant(c: Complex64) -> Self {
        Self {
            kind: ObservableKind::Zero,
            offset: c,
            kernel_bound: 0.0,
            holder: Some(HolderData { c: 0.0, beta: 1.0 }),
        }
    }

    /// Trigonometric polynomial `sum_m c_m e^{2 pi i m x}` on a torus axis.
    ///
    /// Carries the certified Hölder data `c = 2 pi * sum |c_m| |m|`, `beta = 1`
    /// with respect to the wraparound metric.
    pub fn trig(axis: usize, terms: &[(i64, Complex64)]) -> Self {
        let kernel_bound: f64 = terms.iter().map(|(_, c)| c.norm()).sum();
        let lip: f64 = terms
            .iter()
            .map(|(m, c)| 2.0 * std::f64::consts::PI * (m.abs() as f64) * c.norm())
            .sum();
        Self {
            kind: ObservableKind::TrigPoly {
                axis,
                terms: terms.to_vec(),
            },
            offset: Complex64::new(0.0, 0.0),
            kernel_bound,
            holder: Some(HolderData { c: lip, beta: 1.0 }),
        }
    }

    /// The character `e^{2 pi i m x}` on a torus axis.
    pub fn character(axis: usize, m: i64) -> Self {
        Self::trig(axis, &[(m, Complex64::new(1.0, 0.0))])
    }

    /// `cos(2 pi m x) = (e^{2 pi i m x} + e^{-2 pi i m x}) / 2`, real-valued.
    pub fn cosine(axis: usize, m: i64) -> Self {
        let half = Complex64::new(0.5, 0.0);
        Self::trig(axis, &[(m, half), (-m, half)])
    }

    /// `sin(2 pi m x)`, real-valued.
    pub fn sine(axis: usize, m: i64) -> Self {
        let c = Complex64::new(0.0, -0.5);
        Self::trig(axis, &[(m, c), (-m, c.conj())])
    }

    /// Indicator of the symbol at `position` equalling `symbol`.
    ///
    /// Lipschitz with constant `2^{|position|}`: points closer than
    /// `2^{-|position|}` agree at that coordinate.
    pub fn cylinder(position: i64, symbol: u8) -> Self {
        Self {
            kind: ObservableKind::CylinderIndicator { position, symbol },
            offset: Complex64::new(0.0, 0.0),
            kernel_bound: 1.0,
            holder: Some(HolderData {
                c: 2f64.powi(position.unsigned_abs().min(512) as i32),
                beta: 1.0,
            }),
        }
    }

    /// The symbol at `position` read as a real number (`x -> x_position`).
    pub fn symbol_at(position: i64, alphabet: u8) -> Self {
        Self {
            kind: ObservableKind::SymbolAt { position },
            offset: Complex64::new(0.0, 0.0),
            kernel_bound: (alphabet - 1) as f64,
            holder: Some(HolderData {
                c: (alphabet - 1) as f64 * 2f64.powi(position.unsigned_abs().min(512) as i32),
                beta: 1.0,
            }),
        }
    }

    /// The torus coordinate itself. No Hölder data: it jumps at 0.
    pub fn coordinate(axis: usize) -> Self {
        Self {
            kind: ObservableKind::Coordinate { axis },
            offset: Complex64::new(0.0, 0.0),
            kernel_bound: 1.0,
            holder: None,
        }
    }

    /// Linear combination `sum_i a_i f_i`.
    pub fn linear_combination(parts: &[(Complex64, Observable)]) -> Self {
        let kernel_bound = parts
            .iter()
            .map(|(a, f)| a.norm() * f.kernel_bound)
            .sum::<f64>();
        let offset = parts.iter().map(|(a, f)| a * f.offset).sum();
        let holder = parts
            .iter()
            .map(|(a, f)| f.holder.map(|h| (a.norm(), h)))
            .collect::<Option<Vec<_>>>()
            .and_then(|hs| {
                let beta = hs.first().map(|(_, h)| h.beta)?;
                if hs.iter().all(|(_, h)| h.beta == beta) {
                    Some(HolderData {
                        c: hs.iter().map(|(n, h)| n * h.c).sum(),
                        beta,
                    })
                } else {
                    None
                }
            });
        Self {
            kind: ObservableKind::Linear {
                parts: parts
                    .iter()
                    .map(|(a, f)| (*a, Box::new(f.clone())))
                    .collect(),
            },
            offset,
            kernel_bound,
            holder,
        }
    }

    /// The same observable shifted by a real additive constant.
    pub fn offset_by(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.offset += Complex64::new(c, 0.0);
        out
    }

    /// Declared uniform bound `M >= sup |f|`.
    pub fn bound(&self) -> f64 {
        self.kernel_bound + self.offset.norm()
    }

    pub fn offset(&self) -> Complex64 {
        self.offset
    }

    pub fn holder(&self) -> Option<HolderData> {
        self.holder
    }

    pub fn kind(&self) -> &ObservableKind {
        &self.kind
    }

    /// Kernel value (the observable minus its additive constant).
    pub fn kernel_eval(&self, x: &Point) -> Result<Complex64> {
        match (&self.kind, x) {
            (ObservableKind::Zero, _) => Ok(Complex64::new(0.0, 0.0)),
            (ObservableKind::TrigPoly { axis, terms }, Point::Torus(c)) => {
                let x = *c.get(*axis).ok_or(Error::PointDimensionMismatch {
                    expected: axis + 1,
                    found: c.len(),
                })?;
                let mut acc = Complex64::new(0.0, 0.0);
                for (m, coeff) in terms {
                    let phase = 2.0 * std::f64::consts::PI * (*m as f64) * x;
                    acc += coeff * Complex64::new(phase.cos(), phase.sin());
                }
                Ok(acc)
            }
            (ObservableKind::CylinderIndicator { position, symbol }, Point::Symbolic(_)) => {
                Ok(if x.symbol_at(*position)? == *symbol {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                })
            }
            (ObservableKind::SymbolAt { position }, Point::Symbolic(_)) => {
                Ok(Complex64::new(x.symbol_at(*position)? as f64, 0.0))
            }
            (ObservableKind::Coordinate { axis }, Point::Torus(c)) => Ok(Complex64::new(
                *c.get(*axis).ok_or(Error::PointDimensionMismatch {
                    expected: axis + 1,
                    found: c.len(),
                })?,
                0.0,
            )),
            (ObservableKind::Linear { parts }, _) => {
                // The parts' own offsets live in this observable's offset
                // (set at construction), so only kernels are summed here;
                // later `offset_by` shifts remain intact.
                let mut acc = Complex64::new(0.0, 0.0);
                for (a, f) in parts {
                    acc += a * f.kernel_eval(x)?;
                }
                Ok(acc)
            }
            _ => Err(Error::PointVariantMismatch),
        }
    }

    /// Full value `kernel(x) + offset`.
    pub fn eval(&self, x: &Point) -> Result<Complex64> {
        Ok(self.kernel_eval(x)? + self.offset)
    }

    /// Kernel value at the `j`-fold shift of a symbolic point, without
    /// materializing the shifted word: positions are offset by `j` under the
    /// cyclic indexing of [`Point::symbol_at`]. Errors on kinds that do not
    /// read symbols.
    pub(crate) fn kernel_eval_shifted(&self, x: &Point, j: i64) -> Result<Complex64> {
        match &self.kind {
            ObservableKind::Zero => Ok(Complex64::new(0.0, 0.0)),
            ObservableKind::CylinderIndicator { position, symbol } => {
                Ok(if x.symbol_at(position + j)? == *symbol {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                })
            }
            ObservableKind::SymbolAt { position } => {
                Ok(Complex64::new(x.symbol_at(position + j)? as f64, 0.0))
            }
            ObservableKind::Linear { parts } => {
                let mut acc = Complex64::new(0.0, 0.0);
                for (a, f) in parts {
                    acc += a * f.kernel_eval_shifted(x, j)?;
                }
                Ok(acc)
            }
            _ => Err(Error::Unsupported(
                "shifted evaluation requires a symbol-reading observable",
            )),
        }
    }

    /// Short description used in reports.
    pub fn describe(&self) -> String {
        let base = match &self.kind {
            ObservableKind::Zero => "const".to_string(),
            ObservableKind::TrigPoly { terms, .. } => {
                let freqs: Vec<String> = terms.iter().map(|(m, _)| m.to_string()).collect();
                format!("trig[{}]", freqs.join(","))
            }
            ObservableKind::CylinderIndicator { position, symbol } => {
                format!("cyl(x_{position}={symbol})")
            }
            ObservableKind::SymbolAt { position } => format!("x_{position}"),
            ObservableKind::Coordinate { axis } => format!("coord{axis}"),
            ObservableKind::Linear { parts } => format!("lin({} parts)", parts.len()),
        };
        if self.offset.norm() > 0.0 {
            format!("{base}+{:.3}", self.offset.re)
        } else {
            base
        }
    }
}

/// A modulus of continuity `(0,1) -> (0,inf)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Modulus {
    /// `Delta(eps) = eps / lipschitz`, the modulus of a Lipschitz function.
    Linear { lipschitz: f64 },
    /// Constant modulus (weight functions with no variation).
    Constant { delta: f64 },
}

impl Modulus {
    pub fn eval(&self, eps: f64) -> f64 {
        match self {
            Modulus::Linear { lipschitz } => eps / lipschitz,
            Modulus::Constant { delta } => *delta,
        }
    }

    /// Modulus for the `j`-th power of a unimodular weight function:
    /// `eps -> Delta(eps / |j|)`. For `j = 0` the power is identically 1 and
    /// any constant modulus works.
    pub fn powered(&self, j: i64) -> Modulus {
        if j == 0 {
            return Modulus::Constant { delta: 1.0 };
        }
        match self {
            Modulus::Linear { lipschitz } => Modulus::Linear {
                lipschitz: lipschitz * j.abs() as f64,
            },
            Modulus::Constant { delta } => Modulus::Constant { delta: *delta },
        }
    }
}

/// Closed-form weight sequences `j -> a_j`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum WeightSequence {
    Ones,
    Alternating,
    Explicit(Vec<Complex64>),
}

impl WeightSequence {
    pub fn term(&self, j: i64) -> Result<Complex64> {
        match self {
            WeightSequence::Ones => Ok(Complex64::new(1.0, 0.0)),
            WeightSequence::Alternating => Ok(Complex64::new(
                if j.rem_euclid(2) == 0 { 1.0 } else { -1.0 },
                0.0,
            )),
            WeightSequence::Explicit(values) => {
                usize::try_from(j)
                    .ok()
                    .and_then(|i| values.get(i).copied())
                    .ok_or(Error::UnsupportedIndex {
                        index: j,
                        reason: "explicit weight sequence is defined for 0 <= j < len",
                    })
            }
        }
    }

    /// Checks `sup_l (1/|F_l|) sum_{j in F_l} |a_j| <= declared` on a window.
    pub fn verify_bound(
        &self,
        schedule: &FolnerSchedule,
        k_window: &[usize],
        declared: f64,
    ) -> Result<bool> {
        for &k in k_window {
            let f = schedule.set(k)?;
            let mut acc = KahanSum::new();
            for (g, count) in f.members() {
                acc.add(*count as f64 * self.term(g.as_z()?)?.norm());
            }
            if acc.value() / f.total() as f64 > declared + 1e-12 {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Weight attached to a temporal average (for `Z`-actions).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum WeightSpec {
    /// Unweighted.
    Unit,
    /// `theta^j` for a fixed unimodular `theta = e^{i * angle}`.
    ConstantTheta { angle: f64 },
    /// `xi(x)^j` for a unimodular observable `xi`, evaluated at the average's
    /// base point and then powered.
    FunctionWeight { xi: Observable, modulus: Modulus },
    /// A declared bounded sequence `a_j`.
    SequenceWeight { seq: WeightSequence, bound: f64 },
}

impl WeightSpec {
    /// Weight `theta^j` given `theta` as a complex number on the unit circle.
    pub fn theta(theta: Complex64) -> Result<Self> {
        if (theta.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "theta must be unimodular, |theta| = {}",
                theta.norm()
            )));
        }
        Ok(WeightSpec::ConstantTheta { angle: theta.arg() })
    }

    /// Weight `e^{2 pi i t j}` given the angle in turns.
    pub fn theta_turns(t: f64) -> Self {
        WeightSpec::ConstantTheta {
            angle: 2.0 * std::f64::consts::PI * t,
        }
    }
}

/// Unimodular power `e^{i * angle * j}`, exact for `angle = 0`.
#[inline]
pub(crate) fn unit_power(angle: f64, j: i64) -> Complex64 {
    Complex64::from_polar(1.0, angle * j as f64)
}

/// Weight factor for index `j`; `xi_arg` is the precomputed `arg(xi(base))`.
#[inline]
pub(crate) fn weight_factor(w: &WeightSpec, xi_arg: f64, j: i64) -> Result<Complex64> {
    Ok(match w {
        WeightSpec::Unit => Complex64::new(1.0, 0.0),
        WeightSpec::ConstantTheta { angle } => unit_power(*angle, j),
        WeightSpec::FunctionWeight { .. } => unit_power(xi_arg, j),
        WeightSpec::SequenceWeight { seq, .. } => seq.term(j)?,
    })
}

/// `arg(xi(x))` after validating that `xi` is unimodular at `x`.
pub(crate) fn xi_argument(xi: &Observable, x: &Point) -> Result<f64> {
    let v = xi.eval(x)?;
    if (v.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "weight function must take values on the unit circle, |xi(x)| = {}",
            v.norm()
        )));
    }
    Ok(v.arg())
}

/// Temporal average `(1/|F|) sum_{g in F} f(T_g x)` with compensated
/// summation over members in ascending order (multiplicities multiply).
pub fn avg_temporal(
    sys: &DynamicalSystem,
    f_set: &FolnerSet,
    f: &Observable,
    x: &Point,
) -> Result<Complex64> {
    if f_set.dim() != sys.group_dim() {
        return Err(Error::GroupDimensionMismatch {
            expected: sys.group_dim(),
            found: f_set.dim(),
        });
    }
    let mut acc = KahanComplex::new();
    for (g, count) in f_set.members() {
        let v = f.eval(&sys.act(g, x)?)?;
        acc.add(*count as f64 * v);
    }
    Ok(acc.value() / f_set.total() as f64)
}

/// Weighted temporal average `(1/|F|) sum_j w_j f(T^j x)` on `Z`-actions.
///
/// With `WeightSpec::Unit` the factor is exactly `1 + 0i`, so the result is
/// bit-identical to `avg_temporal` over the same set.
pub fn avg_weighted(
    sys: &DynamicalSystem,
    f_set: &FolnerSet,
    f: &Observable,
    x: &Point,
    w: &WeightSpec,
) -> Result<Complex64> {
    if sys.group_dim() != 1 || f_set.dim() != 1 {
        return Err(Error::Unsupported("weighted averages require a Z-action"));
    }
    let xi_arg = match w {
        WeightSpec::FunctionWeight { xi, .. } => xi_argument(xi, x)?,
        _ => 0.0,
    };
    let mut acc = KahanComplex::new();
    for (g, count) in f_set.members() {
        let j = g.as_z()?;
        let term = weight_factor(w, xi_arg, j)? * f.eval(&sys.act(g, x)?)?;
        acc.add(*count as f64 * term);
    }
    Ok(acc.value() / f_set.total() as f64)
}

/// Index sequences `j -> n_j` for multiple averages.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum IndexSequence {
    /// `n_j = a * j + b`.
    Linear { a: i64, b: i64 },
    /// `n_j = floor(P(j))`.
    PolynomialFloor { coeffs: Vec<f64> },
    /// Explicit values for `j = 0, 1, ...`.
    Explicit(Vec<i64>),
}

impl IndexSequence {
    pub fn term(&self, j: usize) -> Result<i64> {
        match self {
            IndexSequence::Linear { a, b } => Ok(a * j as i64 + b),
            IndexSequence::PolynomialFloor { coeffs } => eval_poly_floor(coeffs, j as i64),
            IndexSequence::Explicit(v) => v.get(j).copied().ok_or(Error::UnsupportedIndex {
                index: j as i64,
                reason: "explicit index sequence exhausted",
            }),
        }
    }
}

/// A multiple-average specification
/// `(1/k) sum_{j<k} f_0(x) * prod_l f_l(T_l^{n_j^(l)} x)`.
///
/// `observables[0]` is the untransformed factor `f_0`; `systems[l-1]` and
/// `indices[l-1]` drive the `l`-th transformed factor.
#[derive(Clone, Debug)]
pub struct MultipleAverageSpec {
    pub systems: Vec<DynamicalSystem>,
    pub indices: Vec<IndexSequence>,
    pub observables: Vec<Observable>,
}

impl MultipleAverageSpec {
    pub fn new(
        systems: Vec<DynamicalSystem>,
        indices: Vec<IndexSequence>,
        observables: Vec<Observable>,
    ) -> Result<Self> {
        if systems.is_empty() || systems.len() != indices.len() {
            return Err(Error::InvalidParameter(
                "need one index sequence per transformed system".into(),
            ));
        }
        if observables.len() != systems.len() + 1 {
            return Err(Error::InvalidParameter(
                "need observables f_0, ..., f_L for L transformed systems".into(),
            ));
        }
        for sys in &systems {
            if sys.group_dim() != 1 {
                return Err(Error::Unsupported("multiple averages require Z-actions"));
            }
        }
        Ok(Self {
            systems,
            indices,
            observables,
        })
    }

    /// Number of transformed factors `L`.
    pub fn factors(&self) -> usize {
        self.systems.len()
    }

    /// `max(1, ||f_0||, ..., ||f_L||)` from the declared bounds.
    pub fn bound_envelope(&self) -> f64 {
        self.observables
            .iter()
            .map(|f| f.bound())
            .fold(1.0f64, f64::max)
    }

    /// One term `f_0(x) * prod_l f_l(T_l^{n_j^(l)} x)`.
    pub fn term(&self, j: usize, x: &Point) -> Result<Complex64> {
        let mut v = self.observables[0].eval(x)?;
        for l in 0..self.factors() {
            let n = self.indices[l].term(j)?;
            let y = self.systems[l].act_z(n, x)?;
            v *= self.observables[l + 1].eval(&y)?;
        }
        Ok(v)
    }
}

/// Multiple ergodic average `(1/k) sum_{j<k} f_0(x) prod_l f_l(T_l^{n_j} x)`.
pub fn avg_multiple(spec: &MultipleAverageSpec, k: usize, x: &Point) -> Result<Complex64> {
    if k == 0 {
        return Err(Error::InvalidParameter("averages start at k = 1".into()));
    }
    let mut acc = KahanComplex::new();
    for j in 0..k {
        acc.add(spec.term(j, x)?);
    }
    Ok(acc.value() / k as f64)
}

/// Følner defect of `F_k` under translation by `g` (support-set semantics).
pub fn folner_defect(schedule: &FolnerSchedule, k: usize, g: &GroupElement) -> Result<f64> {
    schedule.defect(k, g)
}
