//! Temporo-spatial differentiation traces.
//!
//! The central object is the sequence of spatial conditional averages of
//! temporal ergodic averages,
//!
//! ```text
//! s_k = alpha_{C_k}( Avg_{F_k} f ) = (1/mu(C_k)) integral_{C_k} (1/|F_k|) sum_{g in F_k} f(T_g x) dmu(x),
//! ```
//!
//! compared at every window index against the pointwise temporal average
//! `Avg_{F_k} f(x_0)` at a base point. When the observable carries Hölder
//! data `(c, beta)` and the system a Hölder action profile `(L, H)`, the gap
//! between the two obeys the quantitative envelope
//!
//! ```text
//! |Avg_{F_k} f(x_0) - alpha_{C_k}(Avg_{F_k} f)| <= (c/|F_k|) sum_{g in F_k} L(g)^beta diam(C_k)^{beta H(g)},
//! ```
//!
//! which collapses to `c * diam(C_k)^beta` for isometric actions and blows up
//! for expanding ones unless the region diameters decay fast enough. The
//! decay condition — the fraction of `g in F_k` whose transported diameter
//! exceeds `delta` must tend to zero — is computable exactly and is checked
//! by [`decay_check`] before any convergence claim is asserted.
//!
//! The module provides:
//!
//! * [`run_tsd`] / [`run_tsd_at`] — full traces of pointwise vs spatial
//!   values over a window, with per-entry quantitative bounds;
//! * [`quantitative_bound`] — the envelope itself, as a standalone quantity;
//! * [`decay_check`] — exact distortion-fraction tables with a tail verdict;
//! * [`build_counterexample`] / [`trace_counterexample`] — for observables
//!   whose invariant means genuinely spread (non-constant gauge interval),
//!   an alternating superlevel/sublevel region plan whose spatial values
//!   oscillate forever, optionally refined to shrinking-mass subregions;
//! * [`random_tsd_experiment`] — sampled-base-point convergence surveys,
//!   gated on the decay hypothesis;
//! * [`multiple_tsd`] — the same trace for multiple ergodic averages with a
//!   telescoped per-factor bound.
//!
//! Averages accumulate in compensated (Kahan) arithmetic in a fixed
//! ascending order, so every trace is bitwise reproducible for a fixed
//! configuration and seed.

use crate::averaging::{
    avg_temporal, avg_weighted, unit_power, weight_factor, xi_argument, FolnerSchedule, FolnerSet,
    HolderData, MultipleAverageSpec, Observable, ObservableKind, WeightSequence, WeightSpec,
};
use crate::dynamics::{
    frac, pow_holder, DynamicalSystem, GroupElement, HolderProfile, Point, SystemKind,
};
use crate::error::{Error, Result};
use crate::gauge::gauge_orbit_oracle;
use crate::kahan::{KahanComplex, KahanSum};
use crate::measure::{MeasureModel, Region, SamplingMode, SpatialFamily};
use num_complex::Complex64;
use serde::Serialize;
use std::io::Write;

const TAU: f64 = 2.0 * std::f64::consts::PI;
const REALITY_TOL: f64 = 1e-7;

/// One window index of a temporo-spatial trace.
#[derive(Clone, Debug, Serialize)]
pub struct TsdEntry {
    /// Window index `k`.
    pub k: usize,
    /// `|F_k|` counted with multiplicity.
    pub folner_size: u64,
    /// Human-readable description of the region `C_k`.
    pub region: String,
    /// Model mass `mu(C_k)`.
    pub mu: f64,
    /// Upper bound for `diam(C_k)`.
    pub diam: f64,
    /// Pointwise temporal average `Avg_{F_k} f(x_0)`.
    pub pointwise: Complex64,
    /// Spatial value `alpha_{C_k}(Avg_{F_k} f)`.
    pub spatial: Complex64,
    /// `|pointwise - spatial|`.
    pub gap: f64,
    /// Quantitative envelope for the gap; `+inf` when no Hölder certificate
    /// applies (missing data, or regions not anchored at the base point).
    pub bound: f64,
}

/// A complete trace of pointwise and spatial averages over a window.
#[derive(Clone, Debug, Serialize)]
pub struct TsdTrace {
    /// Description of the dynamical system.
    pub system: String,
    /// Description of the observable.
    pub observable: String,
    /// Description of the (snapped) base point.
    pub base: String,
    /// Quadrature slack added to the bound in the dominance invariant:
    /// Hölder constant times the model's covering radius (zero for
    /// Monte-Carlo and explicit models, whose samples are exact points).
    pub quad_tol: f64,
    /// Rows in ascending `k`.
    pub entries: Vec<TsdEntry>,
}

impl TsdTrace {
    /// Largest gap over the window.
    pub fn max_gap(&self) -> f64 {
        self.entries.iter().map(|e| e.gap).fold(0.0, f64::max)
    }

    /// Gap at the final window index.
    pub fn final_gap(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.gap)
    }

    /// Window indices where `gap > bound + quad_tol + margin` (rows without
    /// a finite bound are exempt). An empty result certifies the dominance
    /// invariant over the whole trace.
    pub fn bound_violations(&self, margin: f64) -> Vec<usize> {
        self.entries
            .iter()
            .filter(|e| e.bound.is_finite() && e.gap > e.bound + self.quad_tol + margin)
            .map(|e| e.k)
            .collect()
    }

    /// `max - min` of the real parts of the spatial values over the last
    /// `ceil(fraction * len)` entries — the finite-window surrogate for
    /// `limsup - liminf`.
    pub fn tail_oscillation(&self, fraction: f64) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        let len = self.entries.len();
        let keep = ((len as f64 * fraction).ceil() as usize).clamp(1, len);
        let tail = &self.entries[len - keep..];
        let hi = tail.iter().map(|e| e.spatial.re).fold(f64::NEG_INFINITY, f64::max);
        let lo = tail.iter().map(|e| e.spatial.re).fold(f64::INFINITY, f64::min);
        hi - lo
    }

    /// Maximum oscillation of the gap over the last quarter of the window —
    /// the Cauchy-style convergence verdict used throughout.
    pub fn tail_gap_oscillation(&self) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        let len = self.entries.len();
        let keep = (len.div_ceil(4)).max(1);
        let tail = &self.entries[len - keep..];
        let hi = tail.iter().map(|e| e.gap).fold(f64::NEG_INFINITY, f64::max);
        let lo = tail.iter().map(|e| e.gap).fold(f64::INFINITY, f64::min);
        hi - lo
    }

    /// Writes the trace as RFC-4180 CSV (CRLF line endings, fixed columns).
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write!(
            out,
            "k,F_size,mu_C,diam,pointwise_re,pointwise_im,spatial_re,spatial_im,gap,bound\r\n"
        )?;
        for e in &self.entries {
            write!(
                out,
                "{},{},{},{},{},{},{},{},{},{}\r\n",
                e.k,
                e.folner_size,
                e.mu,
                e.diam,
                e.pointwise.re,
                e.pointwise.im,
                e.spatial.re,
                e.spatial.im,
                e.gap,
                e.bound
            )?;
        }
        Ok(())
    }
}

/// Distortion-fraction table for the decay hypothesis.
///
/// Entry `(d, i)` is the `|F_k|`-normalized amount of `g in F_{ks[i]}` whose
/// transported-diameter bound `L(g) * diam(C_k)^{H(g)}` exceeds `deltas[d]`;
/// in the weighted variant each `g = j` contributes `|a_j|` instead of 1.
#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    pub deltas: Vec<f64>,
    pub ks: Vec<usize>,
    /// `fractions[d][i]` for `deltas[d]` and `ks[i]`.
    pub fractions: Vec<Vec<f64>>,
    /// Pass threshold applied to each delta-row's tail.
    pub threshold: f64,
    /// Whether a weight sequence scaled the numerators.
    pub weighted: bool,
    /// Per-row verdicts: max fraction over the last quarter of the window
    /// is at most `threshold`.
    pub row_pass: Vec<bool>,
    /// All rows pass.
    pub pass: bool,
}

impl DecayReport {
    /// Fraction for `deltas[d]` at window position `i`.
    pub fn fraction(&self, d: usize, i: usize) -> f64 {
        self.fractions[d][i]
    }
}

fn validate_marks(ks: &[usize]) -> Result<()> {
    if ks.is_empty() {
        return Err(Error::InvalidParameter("empty window".into()));
    }
    if ks[0] == 0 {
        return Err(Error::InvalidParameter("windows start at k = 1".into()));
    }
    for pair in ks.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::InvalidParameter(
                "window indices must be strictly increasing".into(),
            ));
        }
    }
    Ok(())
}

fn system_label(sys: &DynamicalSystem) -> String {
    match sys.kind() {
        SystemKind::Rotation { alpha } => format!("rotation(alpha={alpha})"),
        SystemKind::ToralTranslation { alphas } => {
            format!("toral-translation({}d)", alphas.len())
        }
        SystemKind::Doubling => "doubling".to_string(),
        SystemKind::Shift { symbols } => format!("shift({symbols})"),
        SystemKind::Trivial { dim } => format!("identity({dim}d)"),
    }
}

/// Covering radius of a quadrature model (0 for sampled/explicit models,
/// whose points are exact and claim nothing about the continuum).
fn model_covering_radius(sys: &DynamicalSystem, model: &MeasureModel) -> f64 {
    if model.mode() != SamplingMode::Quadrature || model.len() == 0 {
        return 0.0;
    }
    match sys.kind() {
        SystemKind::Shift { symbols } => {
            let w = (model.len() as f64).log(*symbols as f64).round();
            0.5f64.powf(w)
        }
        _ => {
            let d = sys.torus_dim().unwrap_or(1);
            let per_axis = (model.len() as f64).powf(1.0 / d as f64).round();
            0.5 / per_axis
        }
    }
}

fn quad_slack(sys: &DynamicalSystem, model: &MeasureModel, c: f64) -> f64 {
    c * model_covering_radius(sys, model)
}

fn pow_beta(x: f64, beta: f64) -> f64 {
    if beta == 1.0 {
        x
    } else {
        x.powf(beta)
    }
}

/// Quantitative gap envelope
/// `(c/|F|) * sum_{g in F} L(g)^beta * diam(C)^{beta H(g)}`
/// for an observable with Hölder data `(c, beta)` under the system's action
/// profile. For isometric actions this is `c * diam(C)^beta`, independent of
/// `F`; expanding actions weight each `g` by its distortion coefficient.
pub fn quantitative_bound(
    sys: &DynamicalSystem,
    f_set: &FolnerSet,
    region: &Region,
    f: &Observable,
) -> Result<f64> {
    let h = f.holder().ok_or(Error::MissingHolderData)?;
    let diam = region.diameter_bound(sys);
    bound_over_set(sys, f_set, diam, &h, None)
}

fn bound_over_set(
    sys: &DynamicalSystem,
    f_set: &FolnerSet,
    diam: f64,
    h: &HolderData,
    weights: Option<&WeightSequence>,
) -> Result<f64> {
    if matches!(sys.holder(), HolderProfile::Isometric) && weights.is_none() {
        // L = H = 1 collapses every summand to diam^beta.
        return Ok(h.c * pow_beta(pow_holder(diam, 1.0), h.beta));
    }
    let mut acc = KahanSum::new();
    for (g, count) in f_set.members() {
        let d = sys.distortion_bound(g, diam)?;
        let mag = match weights {
            Some(seq) => seq.term(g.as_z()?)?.norm(),
            None => 1.0,
        };
        acc.add(*count as f64 * mag * pow_beta(d, h.beta));
    }
    Ok(h.c * acc.value() / f_set.total() as f64)
}

/// The trace's per-entry bound: unit-modulus weights change nothing, a
/// declared sequence scales each summand by `|a_j|`.
fn bound_for_weight(
    sys: &DynamicalSystem,
    schedule: &FolnerSchedule,
    k: usize,
    diam: f64,
    h: &HolderData,
    w: &WeightSpec,
) -> Result<f64> {
    let seq = match w {
        WeightSpec::SequenceWeight { seq, .. } => Some(seq),
        _ => None,
    };
    if seq.is_none() && matches!(sys.holder(), HolderProfile::Isometric) {
        return Ok(h.c * pow_beta(diam, h.beta));
    }
    let f_set = schedule.set(k)?;
    bound_over_set(sys, &f_set, diam, h, seq)
}

// ---------------------------------------------------------------------------
// The trace engine
// ---------------------------------------------------------------------------

enum TermMode<'a> {
    Single { f: &'a Observable, w: &'a WeightSpec },
    Multi { spec: &'a MultipleAverageSpec },
}

enum Bank {
    /// Rotation-like systems with trigonometric kernels and constant-phase
    /// weights: the average factors through per-term geometric phase sums,
    /// so no per-sample stepping is needed at all.
    TrigClosed {
        /// `coeff_t * e^{2 pi i m_t x_slot}`, flattened `(slots) x (terms)`.
        base: Vec<Complex64>,
        nterms: usize,
        /// Running `sum_j e^{i angle_t j}` per term.
        sums: Vec<KahanComplex>,
        angles: Vec<f64>,
        /// Running `sum_j e^{i w_angle j}` multiplying the additive constant.
        offset_sum: KahanComplex,
        offset_angle: f64,
    },
    /// Exact binary doubling per sample.
    Doubling { cur: Vec<f64>, zero_kernel: Complex64 },
    /// Stateless shifted evaluation through cyclic symbol indexing.
    Shift,
    /// Fallback: advance points by `T_1` and evaluate directly.
    Generic { cur: Vec<Point> },
    /// Multiple averages: terms are evaluated from scratch per index.
    Multi,
    /// Non-interval schedules: recompute averages at each mark.
    Sets { fresh: Vec<Complex64>, size: u64 },
}

struct Engine<'a> {
    sys: &'a DynamicalSystem,
    schedule: &'a FolnerSchedule,
    mode: TermMode<'a>,
    /// Model samples followed by the base point in the final slot.
    pts: Vec<Point>,
    accs: Vec<KahanComplex>,
    xi_args: Vec<f64>,
    bank: Bank,
    j_done: usize,
}

impl<'a> Engine<'a> {
    fn new(
        sys: &'a DynamicalSystem,
        model: &MeasureModel,
        schedule: &'a FolnerSchedule,
        base: &Point,
        mode: TermMode<'a>,
    ) -> Result<Self> {
        sys.check_point(base)?;
        let mut pts: Vec<Point> = model.points().to_vec();
        pts.push(base.clone());
        let slots = pts.len();
        let interval = matches!(schedule, FolnerSchedule::Interval);
        let xi_args = match &mode {
            TermMode::Single {
                w: WeightSpec::FunctionWeight { xi, .. },
                ..
            } => pts.iter().map(|p| xi_argument(xi, p)).collect::<Result<Vec<_>>>()?,
            _ => Vec::new(),
        };
        let bank = if !interval {
            Bank::Sets {
                fresh: vec![Complex64::new(0.0, 0.0); slots],
                size: 0,
            }
        } else {
            match &mode {
                TermMode::Multi { .. } => Bank::Multi,
                TermMode::Single { f, w } => Self::single_bank(sys, f, w, &pts)?,
            }
        };
        Ok(Self {
            sys,
            schedule,
            mode,
            pts,
            accs: vec![KahanComplex::new(); slots],
            xi_args,
            bank,
            j_done: 0,
        })
    }

    fn single_bank(
        sys: &DynamicalSystem,
        f: &Observable,
        w: &WeightSpec,
        pts: &[Point],
    ) -> Result<Bank> {
        let constant_phase = |w: &WeightSpec| match w {
            WeightSpec::Unit => Some(0.0),
            WeightSpec::ConstantTheta { angle } => Some(*angle),
            _ => None,
        };
        match (sys.kind(), f.kind()) {
            (SystemKind::Rotation { alpha }, ObservableKind::TrigPoly { axis, terms })
                if *axis == 0 =>
            {
                if let Some(wangle) = constant_phase(w) {
                    return Self::trig_closed(*alpha, *axis, terms, wangle, pts);
                }
                Self::generic_bank(pts)
            }
            (
                SystemKind::ToralTranslation { alphas },
                ObservableKind::TrigPoly { axis, terms },
            ) if alphas.len() == 1 && *axis == 0 => {
                if let Some(wangle) = constant_phase(w) {
                    return Self::trig_closed(alphas[0], *axis, terms, wangle, pts);
                }
                Self::generic_bank(pts)
            }
            (SystemKind::Doubling, _) => Ok(Bank::Doubling {
                cur: pts
                    .iter()
                    .map(|p| Ok(p.torus_coords()?[0]))
                    .collect::<Result<Vec<_>>>()?,
                zero_kernel: f.kernel_eval(&Point::circle(0.0))?,
            }),
            (SystemKind::Shift { .. }, _) => {
                match f.kernel_eval_shifted(&pts[pts.len() - 1], 0) {
                    Ok(_) => Ok(Bank::Shift),
                    Err(_) => Self::generic_bank(pts),
                }
            }
            _ => Self::generic_bank(pts),
        }
    }

    fn generic_bank(pts: &[Point]) -> Result<Bank> {
        Ok(Bank::Generic { cur: pts.to_vec() })
    }

    fn trig_closed(
        alpha: f64,
        axis: usize,
        terms: &[(i64, Complex64)],
        wangle: f64,
        pts: &[Point],
    ) -> Result<Bank> {
        let nterms = terms.len();
        let mut angles = Vec::with_capacity(nterms);
        for (m, _) in terms {
            angles.push(wangle + TAU * frac(*m as f64 * alpha));
        }
        let mut base = Vec::with_capacity(pts.len() * nterms);
        for p in pts {
            let x = p.torus_coords()?[axis];
            for (m, c) in terms {
                let phase = TAU * (*m as f64) * x;
                base.push(c * Complex64::new(phase.cos(), phase.sin()));
            }
        }
        Ok(Bank::TrigClosed {
            base,
            nterms,
            sums: vec![KahanComplex::new(); nterms],
            angles,
            offset_sum: KahanComplex::new(),
            offset_angle: wangle,
        })
    }

    fn slot_list(&self, active: Option<&[usize]>) -> Vec<usize> {
        let n = self.pts.len() - 1;
        match active {
            None => (0..=n).collect(),
            Some(v) => v.iter().copied().chain(std::iter::once(n)).collect(),
        }
    }

    /// Advances internal state so that `value_at(_, k)` is defined. `active`
    /// limits per-sample work to the slots still needed (the base slot is
    /// always carried along).
    fn advance_to(&mut self, k: usize, active: Option<&[usize]>) -> Result<()> {
        if k == 0 {
            return Err(Error::InvalidParameter("windows start at k = 1".into()));
        }
        match &mut self.bank {
            Bank::TrigClosed {
                sums,
                angles,
                offset_sum,
                offset_angle,
                ..
            } => {
                for j in self.j_done..k {
                    let jf = j as f64;
                    for (s, a) in sums.iter_mut().zip(angles.iter()) {
                        s.add(Complex64::from_polar(1.0, a * jf));
                    }
                    offset_sum.add(Complex64::from_polar(1.0, *offset_angle * jf));
                }
            }
            Bank::Sets { .. } => {
                let f_set = self.schedule.set(k)?;
                let slots = self.slot_list(active);
                let (f, w) = match &self.mode {
                    TermMode::Single { f, w } => (*f, *w),
                    TermMode::Multi { .. } => {
                        return Err(Error::Unsupported(
                            "multiple averages run on the interval schedule",
                        ))
                    }
                };
                let Bank::Sets { fresh, size } = &mut self.bank else {
                    unreachable!()
                };
                *size = f_set.total();
                for slot in slots {
                    fresh[slot] = if matches!(w, WeightSpec::Unit) {
                        avg_temporal(self.sys, &f_set, f, &self.pts[slot])?
                    } else {
                        avg_weighted(self.sys, &f_set, f, &self.pts[slot], w)?
                    };
                }
            }
            _ => {
                let slots = self.slot_list(active);
                for j in self.j_done..k {
                    self.step(j, &slots)?;
                }
            }
        }
        self.j_done = k;
        Ok(())
    }

    fn step(&mut self, j: usize, slots: &[usize]) -> Result<()> {
        let ji = j as i64;
        match (&mut self.bank, &self.mode) {
            (Bank::Doubling { cur, zero_kernel }, TermMode::Single { f, w }) => {
                let off = f.offset();
                let shared = shared_factor(w, ji)?;
                for &slot in slots {
                    let x = cur[slot];
                    let v = if x == 0.0 {
                        *zero_kernel + off
                    } else {
                        f.kernel_eval(&Point::circle(x))? + off
                    };
                    let fac = match shared {
                        Some(c) => c,
                        None => unit_power(self.xi_args[slot], ji),
                    };
                    self.accs[slot].add(fac * v);
                    if x != 0.0 {
                        cur[slot] = frac(2.0 * x);
                    }
                }
            }
            (Bank::Shift, TermMode::Single { f, w }) => {
                let off = f.offset();
                let shared = shared_factor(w, ji)?;
                for &slot in slots {
                    let v = f.kernel_eval_shifted(&self.pts[slot], ji)? + off;
                    let fac = match shared {
                        Some(c) => c,
                        None => unit_power(self.xi_args[slot], ji),
                    };
                    self.accs[slot].add(fac * v);
                }
            }
            (Bank::Generic { cur }, TermMode::Single { f, w }) => {
                let shared = shared_factor(w, ji)?;
                for &slot in slots {
                    let v = f.eval(&cur[slot])?;
                    let fac = match shared {
                        Some(c) => c,
                        None => unit_power(self.xi_args[slot], ji),
                    };
                    self.accs[slot].add(fac * v);
                    cur[slot] = self.sys.act_z(1, &cur[slot])?;
                }
            }
            (Bank::Multi, TermMode::Multi { spec }) => {
                for &slot in slots {
                    let v = spec.term(j, &self.pts[slot])?;
                    self.accs[slot].add(v);
                }
            }
            _ => unreachable!("bank/mode combinations are fixed at construction"),
        }
        Ok(())
    }

    /// Average value for `slot` at window index `k` (requires
    /// `advance_to(k, ..)` to have covered this slot).
    fn value_at(&self, slot: usize, k: usize) -> Complex64 {
        let kf = k as f64;
        match &self.bank {
            Bank::TrigClosed {
                base,
                nterms,
                sums,
                offset_sum,
                ..
            } => {
                let off = match &self.mode {
                    TermMode::Single { f, .. } => f.offset(),
                    TermMode::Multi { .. } => unreachable!(),
                };
                let mut v = off * (offset_sum.value() / kf);
                for (t, s) in sums.iter().enumerate() {
                    v += base[slot * nterms + t] * (s.value() / kf);
                }
                v
            }
            Bank::Sets { fresh, .. } => fresh[slot],
            _ => self.accs[slot].value() / kf,
        }
    }

    /// `|F_k|` for the current mark.
    fn folner_total(&self, k: usize) -> u64 {
        match &self.bank {
            Bank::Sets { size, .. } => *size,
            _ => k as u64,
        }
    }

    fn base_slot(&self) -> usize {
        self.pts.len() - 1
    }
}

fn shared_factor(w: &WeightSpec, j: i64) -> Result<Option<Complex64>> {
    Ok(match w {
        WeightSpec::FunctionWeight { .. } => None,
        _ => Some(weight_factor(w, 0.0, j)?),
    })
}

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

/// Runs the full temporo-spatial trace at every `k = 1, ..., k_max`.
///
/// The base point is snapped to the nearest model sample, so shrinking ball
/// families always retain at least their center; spatial values over the
/// whole space equal the model mean of the temporal average, and the trace
/// is deterministic given the model (and its seed).
#[allow(clippy::too_many_arguments)]
pub fn run_tsd(
    sys: &DynamicalSystem,
    model: &MeasureModel,
    schedule: &FolnerSchedule,
    family: &SpatialFamily,
    x0: &Point,
    f: &Observable,
    w: &WeightSpec,
    k_max: usize,
) -> Result<TsdTrace> {
    let ks: Vec<usize> = (1..=k_max).collect();
    run_tsd_at(sys, model, schedule, family, x0, f, w, &ks)
}

/// [`run_tsd`] evaluated only at the given strictly increasing window marks.
#[allow(clippy::too_many_arguments)]
pub fn run_tsd_at(
    sys: &DynamicalSystem,
    model: &MeasureModel,
    schedule: &FolnerSchedule,
    family: &SpatialFamily,
    x0: &Point,
    f: &Observable,
    w: &WeightSpec,
    ks: &[usize],
) -> Result<TsdTrace> {
    validate_marks(ks)?;
    if schedule.group_dim() != sys.group_dim() {
        return Err(Error::GroupDimensionMismatch {
            expected: sys.group_dim(),
            found: schedule.group_dim(),
        });
    }
    if !matches!(w, WeightSpec::Unit) && sys.group_dim() != 1 {
        return Err(Error::Unsupported("weighted averages require a Z-action"));
    }
    let base_idx = model.nearest_sample_index(sys, x0)?;
    let base = model.point(base_idx).clone();
    let mut engine = Engine::new(sys, model, schedule, &base, TermMode::Single { f, w })?;
    let holder = f.holder();
    let quad_tol = holder.map_or(0.0, |h| quad_slack(sys, model, h.c));
    let n = model.len();
    let prune = matches!(family, SpatialFamily::Balls { .. }) && family.is_nested();
    let mut active: Option<Vec<usize>> = None;
    let mut entries = Vec::with_capacity(ks.len());
    for (mi, &k) in ks.iter().enumerate() {
        engine.advance_to(k, active.as_deref())?;
        let region = family.region(k, &base)?;
        let diam = region.diameter_bound(sys);
        let mut num = KahanComplex::new();
        let mut den = KahanSum::new();
        let mut count = 0usize;
        let mut scan = |i: usize| -> Result<()> {
            if region.contains(sys, i, model.point(i))? {
                num.add(model.weight(i) * engine.value_at(i, k));
                den.add(model.weight(i));
                count += 1;
            }
            Ok(())
        };
        match &active {
            None => {
                for i in 0..n {
                    scan(i)?;
                }
            }
            Some(list) => {
                for &i in list {
                    scan(i)?;
                }
            }
        }
        if count == 0 || den.value() <= 0.0 {
            return Err(Error::ZeroMeasureRegion { k: Some(k) });
        }
        let spatial = num.value() / den.value();
        let pointwise = engine.value_at(engine.base_slot(), k);
        let gap = (pointwise - spatial).norm();
        let bound = match &holder {
            Some(h) => bound_for_weight(sys, schedule, k, diam, h, w)?,
            None => f64::INFINITY,
        };
        entries.push(TsdEntry {
            k,
            folner_size: engine.folner_total(k),
            region: region.describe(),
            mu: den.value(),
            diam,
            pointwise,
            spatial,
            gap,
            bound,
        });
        if prune && mi + 1 < ks.len() {
            let next = family.region(ks[mi + 1], &base)?;
            let mut keep = Vec::new();
            match &active {
                None => {
                    for i in 0..n {
                        if next.contains(sys, i, model.point(i))? {
                            keep.push(i);
                        }
                    }
                }
                Some(list) => {
                    for &i in list {
                        if next.contains(sys, i, model.point(i))? {
                            keep.push(i);
                        }
                    }
                }
            }
            active = Some(keep);
        }
    }
    Ok(TsdTrace {
        system: system_label(sys),
        observable: f.describe(),
        base: base.describe(),
        quad_tol,
        entries,
    })
}

// ---------------------------------------------------------------------------
// Decay condition
// ---------------------------------------------------------------------------

/// Computes the distortion-fraction table for the regions `C_k(x0)` of the
/// family along the window, one row per `delta`.
///
/// The verdict passes iff each row's maximum over the last quarter of the
/// window is at most `threshold`. Fractions are exact rational counts for
/// unweighted runs (`numerator / |F_k|`); with weights the numerator sums
/// `|a_j|` over the offending indices.
#[allow(clippy::too_many_arguments)]
pub fn decay_check(
    sys: &DynamicalSystem,
    schedule: &FolnerSchedule,
    family: &SpatialFamily,
    x0: &Point,
    deltas: &[f64],
    ks: &[usize],
    weights: Option<&WeightSequence>,
    threshold: f64,
) -> Result<DecayReport> {
    validate_marks(ks)?;
    if deltas.is_empty() {
        return Err(Error::InvalidParameter("need at least one delta".into()));
    }
    for &d in deltas {
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::InvalidParameter(format!("bad delta {d}")));
        }
    }
    if schedule.group_dim() != sys.group_dim() {
        return Err(Error::GroupDimensionMismatch {
            expected: sys.group_dim(),
            found: schedule.group_dim(),
        });
    }
    if weights.is_some() && sys.group_dim() != 1 {
        return Err(Error::Unsupported("weighted averages require a Z-action"));
    }
    let mut fractions = vec![vec![0.0f64; ks.len()]; deltas.len()];
    for (ki, &k) in ks.iter().enumerate() {
        let f_set = schedule.set(k)?;
        let diam = family.region(k, x0)?.diameter_bound(sys);
        let mut rows: Vec<(f64, f64)> = Vec::with_capacity(f_set.members().len());
        for (g, count) in f_set.members() {
            let dist = sys.distortion_bound(g, diam)?;
            let mag = match weights {
                Some(seq) => seq.term(g.as_z()?)?.norm(),
                None => 1.0,
            };
            rows.push((dist, *count as f64 * mag));
        }
        for (di, &delta) in deltas.iter().enumerate() {
            let mut num = KahanSum::new();
            for (dist, weight) in &rows {
                if *dist > delta {
                    num.add(*weight);
                }
            }
            fractions[di][ki] = num.value() / f_set.total() as f64;
        }
    }
    let tail_start = ks.len() - ks.len().div_ceil(4).max(1);
    let row_pass: Vec<bool> = fractions
        .iter()
        .map(|row| row[tail_start..].iter().all(|&v| v <= threshold))
        .collect();
    let pass = row_pass.iter().all(|&b| b);
    Ok(DecayReport {
        deltas: deltas.to_vec(),
        ks: ks.to_vec(),
        fractions,
        threshold,
        weighted: weights.is_some(),
        row_pass,
        pass,
    })
}

// ---------------------------------------------------------------------------
// Divergence counterexamples
// ---------------------------------------------------------------------------

/// Which region a counterexample step selects.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StepKind {
    /// Below the start index: the whole space.
    Whole,
    /// Superlevel region `{x : Avg_{F_k} f(x) > M}` (odd k).
    Upper,
    /// Sublevel region `{x : Avg_{F_k} f(x) < L}` (even k).
    Lower,
}

/// Shrinking-mass refinement of one step's region.
#[derive(Clone, Debug, Serialize)]
pub struct RefinedRegion {
    /// Model sample the refinement ball is centered at.
    pub center_sample: usize,
    /// Ball radius; `None` marks the singleton fallback.
    pub radius: Option<f64>,
    /// Member sample indices (sorted).
    pub indices: Vec<usize>,
    /// Model mass of the refined region.
    pub mass: f64,
}

/// One window index of a counterexample plan.
#[derive(Clone, Debug, Serialize)]
pub struct PlanStep {
    pub k: usize,
    pub kind: StepKind,
    /// The level defining the region (`M` for upper, `L` for lower).
    pub threshold: Option<f64>,
    /// Number of member samples of the unrefined region.
    pub members: usize,
    /// Model mass of the unrefined region.
    pub mass: f64,
    /// Extremal sample index (argmax of the average for upper steps,
    /// argmin for lower ones).
    pub witness: usize,
    pub refined: Option<RefinedRegion>,
}

/// An alternating superlevel/sublevel region plan along which the spatial
/// averages oscillate between values above `upper` and below `lower`.
#[derive(Clone, Debug, Serialize)]
pub struct CounterexamplePlan {
    /// Lower threshold `L`.
    pub lower: f64,
    /// Upper threshold `M`.
    pub upper: f64,
    /// Reference-model mean of the working observable.
    pub mean: f64,
    /// Gauge estimate of the working observable.
    pub gauge: f64,
    /// Whether the reflection `f' = sup|f| - f` was applied because the
    /// original observable's mean already sat at the top of the gauge range.
    pub reflected: bool,
    /// The constant used by the reflection (0 when not reflected).
    pub reflect_constant: f64,
    /// First window index from which superlevel regions stay nonempty.
    pub start_index: usize,
    /// Whether shrinking-mass refinements were attached.
    pub shrink: bool,
    pub steps: Vec<PlanStep>,
}

impl CounterexamplePlan {
    /// The observable the plan actually thresholds (reflected if needed).
    pub fn working_observable(&self, f: &Observable) -> Observable {
        if self.reflected {
            reflect(f, self.reflect_constant)
        } else {
            f.clone()
        }
    }

    /// Masses of the refined regions in window order.
    pub fn refined_masses(&self) -> Vec<f64> {
        self.steps
            .iter()
            .filter_map(|s| s.refined.as_ref().map(|r| r.mass))
            .collect()
    }

    /// Whether the refined masses are nonincreasing along the window.
    pub fn masses_nonincreasing(&self) -> bool {
        self.refined_masses()
            .windows(2)
            .all(|p| p[1] <= p[0] + 1e-15)
    }
}

fn reflect(f: &Observable, c: f64) -> Observable {
    Observable::linear_combination(&[(Complex64::new(-1.0, 0.0), f.clone())]).offset_by(c)
}

/// Gauge estimate for the counterexample gate: exact periodic-orbit extremes
/// where the system has them, otherwise the maximum of `Avg_{F_k} f` over
/// the model samples at the window end.
fn estimate_gauge(
    sys: &DynamicalSystem,
    model: &MeasureModel,
    f: &Observable,
    k: usize,
) -> Result<f64> {
    match sys.kind() {
        SystemKind::Doubling | SystemKind::Shift { .. } => {
            Ok(gauge_orbit_oracle(sys, f, 10)?.max_mean)
        }
        _ => {
            let averages = crate::gauge::kernel_averages(sys, f, k, model.points())?;
            let mut max_re = f64::NEG_INFINITY;
            let mut max_im = 0.0f64;
            for v in &averages {
                max_re = max_re.max(v.re);
                max_im = max_im.max(v.im.abs());
            }
            if max_im > REALITY_TOL || f.offset().im.abs() > REALITY_TOL {
                return Err(Error::ComplexObservable {
                    imag: max_im.max(f.offset().im.abs()),
                });
            }
            Ok(max_re + f.offset().re)
        }
    }
}

struct LevelScan {
    upper_count: usize,
    upper_mass: f64,
    upper_witness: usize,
    lower_count: usize,
    lower_mass: f64,
    lower_witness: usize,
}

fn scan_levels(
    engine: &Engine,
    model: &MeasureModel,
    k: usize,
    lower: f64,
    upper: f64,
) -> LevelScan {
    let n = model.len();
    let mut s = LevelScan {
        upper_count: 0,
        upper_mass: 0.0,
        upper_witness: 0,
        lower_count: 0,
        lower_mass: 0.0,
        lower_witness: 0,
    };
    let mut upper_mass = KahanSum::new();
    let mut lower_mass = KahanSum::new();
    let mut best_hi = f64::NEG_INFINITY;
    let mut best_lo = f64::INFINITY;
    for i in 0..n {
        let v = engine.value_at(i, k).re;
        if v > upper {
            s.upper_count += 1;
            upper_mass.add(model.weight(i));
        }
        if v < lower {
            s.lower_count += 1;
            lower_mass.add(model.weight(i));
        }
        if v > best_hi {
            best_hi = v;
            s.upper_witness = i;
        }
        if v < best_lo {
            best_lo = v;
            s.lower_witness = i;
        }
    }
    s.upper_mass = upper_mass.value();
    s.lower_mass = lower_mass.value();
    s
}

/// Builds an alternating-region divergence plan for an observable whose
/// invariant means genuinely spread.
///
/// The gate estimates the reference mean `∫f dμ` (model mean) and the gauge
/// `Γ̂(f)`; if their difference is within `tol` the reflection
/// `f' = sup|f| − f` is tried, and if that also fails the observable admits
/// no counterexample of this kind. Thresholds default to the thirds of the
/// `(mean, gauge)` interval. With `shrink` set, each selected region is
/// refined to a ball around its witness whose model mass is capped by
/// `min(previous mass, 1/k)` (falling back to the witness singleton).
#[allow(clippy::too_many_arguments)]
pub fn build_counterexample(
    sys: &DynamicalSystem,
    model: &MeasureModel,
    schedule: &FolnerSchedule,
    f: &Observable,
    ks: &[usize],
    shrink: bool,
    thresholds: Option<(f64, f64)>,
    tol: f64,
) -> Result<CounterexamplePlan> {
    validate_marks(ks)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    if sys.group_dim() != 1 || schedule.group_dim() != 1 {
        return Err(Error::Unsupported(
            "counterexample construction alternates along a Z-window",
        ));
    }
    let mean_c = model.mean(f)?;
    if mean_c.im.abs() > REALITY_TOL {
        return Err(Error::ComplexObservable {
            imag: mean_c.im.abs(),
        });
    }
    let k_end = *ks.last().expect("validated nonempty");
    let gauge0 = estimate_gauge(sys, model, f, k_end)?;
    let (work, reflected, reflect_constant, mean, gauge) = if gauge0 - mean_c.re > tol {
        (f.clone(), false, 0.0, mean_c.re, gauge0)
    } else {
        let c = f.bound();
        let f2 = reflect(f, c);
        let mean2 = model.mean(&f2)?.re;
        let gauge2 = estimate_gauge(sys, model, &f2, k_end)?;
        if gauge2 - mean2 > tol {
            (f2, true, c, mean2, gauge2)
        } else {
            return Err(Error::NoCounterexample(format!(
                "every invariant mean sits within {tol} of the reference mean \
                 (gap {:.3e} direct, {:.3e} reflected)",
                gauge0 - mean_c.re,
                gauge2 - mean2
            )));
        }
    };
    let span = gauge - mean;
    let (lower, upper) = thresholds.unwrap_or((mean + span / 3.0, mean + 2.0 * span / 3.0));
    if !(mean < lower && lower < upper && upper < gauge) {
        return Err(Error::InvalidParameter(format!(
            "thresholds must satisfy mean < L < M < gauge, got mean={mean}, L={lower}, \
             M={upper}, gauge={gauge}"
        )));
    }

    // Pass 1: level scans at every mark.
    let unit = WeightSpec::Unit;
    let mut engine = Engine::new(
        sys,
        model,
        schedule,
        model.point(0),
        TermMode::Single { f: &work, w: &unit },
    )?;
    let mut scans = Vec::with_capacity(ks.len());
    for &k in ks {
        engine.advance_to(k, None)?;
        let s = scan_levels(&engine, model, k, lower, upper);
        if s.lower_count == 0 {
            return Err(Error::HypothesisUnmet(format!(
                "sublevel region {{Avg f < {lower}}} is empty at k = {k}"
            )));
        }
        scans.push(s);
    }
    let last_empty = scans.iter().rposition(|s| s.upper_count == 0);
    let start_index = match last_empty {
        None => ks[0],
        Some(p) if p + 1 < ks.len() => ks[p + 1],
        Some(_) => {
            return Err(Error::HypothesisUnmet(format!(
                "superlevel region {{Avg f > {upper}}} is empty at the window end (k = {k_end})"
            )));
        }
    };

    let mut steps: Vec<PlanStep> = ks
        .iter()
        .zip(&scans)
        .map(|(&k, s)| {
            if k < start_index {
                PlanStep {
                    k,
                    kind: StepKind::Whole,
                    threshold: None,
                    members: model.len(),
                    mass: 1.0,
                    witness: 0,
                    refined: None,
                }
            } else if k % 2 == 1 {
                PlanStep {
                    k,
                    kind: StepKind::Upper,
                    threshold: Some(upper),
                    members: s.upper_count,
                    mass: s.upper_mass,
                    witness: s.upper_witness,
                    refined: None,
                }
            } else {
                PlanStep {
                    k,
                    kind: StepKind::Lower,
                    threshold: Some(lower),
                    members: s.lower_count,
                    mass: s.lower_mass,
                    witness: s.lower_witness,
                    refined: None,
                }
            }
        })
        .collect();

    // Pass 2: shrinking-mass refinements (dyadic radius search around the
    // witness, mass capped by min(previous, 1/k), singleton fallback).
    if shrink {
        let mut engine = Engine::new(
            sys,
            model,
            schedule,
            model.point(0),
            TermMode::Single { f: &work, w: &unit },
        )?;
        let mut prev_mass = f64::INFINITY;
        for (mi, &k) in ks.iter().enumerate() {
            engine.advance_to(k, None)?;
            let step = &mut steps[mi];
            if step.kind == StepKind::Whole {
                continue;
            }
            let members: Vec<usize> = (0..model.len())
                .filter(|&i| {
                    let v = engine.value_at(i, k).re;
                    match step.kind {
                        StepKind::Upper => v > upper,
                        StepKind::Lower => v < lower,
                        StepKind::Whole => true,
                    }
                })
                .collect();
            let center = step.witness;
            let center_pt = model.point(center);
            let dists: Vec<f64> = members
                .iter()
                .map(|&i| sys.distance(model.point(i), center_pt))
                .collect::<Result<Vec<_>>>()?;
            let cap = prev_mass.min(1.0 / k as f64);
            let mut chosen: Option<(Option<f64>, Vec<usize>, f64)> = None;
            for m in 1..=60 {
                let r = 0.5f64.powi(m);
                let mut mass = KahanSum::new();
                let mut inside = Vec::new();
                for (&i, &d) in members.iter().zip(&dists) {
                    if d <= r {
                        mass.add(model.weight(i));
                        inside.push(i);
                    }
                }
                if !inside.is_empty() && mass.value() <= cap {
                    chosen = Some((Some(r), inside, mass.value()));
                    break;
                }
            }
            let (radius, indices, mass) = match chosen {
                Some(c) => c,
                None => {
                    let mass = model.weight(center);
                    if mass > cap {
                        return Err(Error::HypothesisUnmet(format!(
                            "refinement mass floor {mass} exceeds the cap {cap} at k = {k}"
                        )));
                    }
                    (None, vec![center], mass)
                }
            };
            prev_mass = mass;
            step.refined = Some(RefinedRegion {
                center_sample: center,
                radius,
                indices,
                mass,
            });
        }
    }

    Ok(CounterexamplePlan {
        lower,
        upper,
        mean,
        gauge,
        reflected,
        reflect_constant,
        start_index,
        shrink,
        steps,
    })
}

/// Replays a counterexample plan into a trace: at each step the spatial
/// average is taken over the plan's region (the refined one when present,
/// otherwise the level set re-derived from the engine's own averages, which
/// reproduces the construction bitwise).
///
/// Level-set regions are not metric neighborhoods of the base sample, so no
/// Hölder envelope applies; the bound column is `+inf` and the interesting
/// output is the oscillation of the spatial values.
pub fn trace_counterexample(
    sys: &DynamicalSystem,
    model: &MeasureModel,
    schedule: &FolnerSchedule,
    f: &Observable,
    plan: &CounterexamplePlan,
) -> Result<TsdTrace> {
    if plan.steps.is_empty() {
        return Err(Error::InvalidParameter("empty plan".into()));
    }
    let work = plan.working_observable(f);
    let unit = WeightSpec::Unit;
    let mut engine = Engine::new(
        sys,
        model,
        schedule,
        model.point(0),
        TermMode::Single { f: &work, w: &unit },
    )?;
    let n = model.len();
    let mut entries = Vec::with_capacity(plan.steps.len());
    for step in &plan.steps {
        let k = step.k;
        engine.advance_to(k, None)?;
        let mut num = KahanComplex::new();
        let mut den = KahanSum::new();
        let mut count = 0usize;
        let mut add = |i: usize| {
            num.add(model.weight(i) * engine.value_at(i, k));
            den.add(model.weight(i));
            count += 1;
        };
        let (desc, diam) = match (&step.refined, step.kind) {
            (Some(r), _) => {
                for &i in &r.indices {
                    add(i);
                }
                let diam = match r.radius {
                    Some(rad) => (2.0 * rad).min(sys.space_diameter()),
                    None => 0.0,
                };
                (
                    format!(
                        "refined({} of {} samples, r={})",
                        r.indices.len(),
                        step.members,
                        r.radius.map_or("point".to_string(), |v| format!("{v:.3e}"))
                    ),
                    diam,
                )
            }
            (None, StepKind::Whole) => {
                for i in 0..n {
                    add(i);
                }
                ("whole".to_string(), sys.space_diameter())
            }
            (None, StepKind::Upper) => {
                let thr = step.threshold.unwrap_or(plan.upper);
                for i in 0..n {
                    if engine.value_at(i, k).re > thr {
                        add(i);
                    }
                }
                (format!("superlevel(>{thr:.4})"), sys.space_diameter())
            }
            (None, StepKind::Lower) => {
                let thr = step.threshold.unwrap_or(plan.lower);
                for i in 0..n {
                    if engine.value_at(i, k).re < thr {
                        add(i);
                    }
                }
                (format!("sublevel(<{thr:.4})"), sys.space_diameter())
            }
        };
        if count == 0 || den.value() <= 0.0 {
            return Err(Error::ZeroMeasureRegion { k: Some(k) });
        }
        let spatial = num.value() / den.value();
        let pointwise = engine.value_at(0, k);
        entries.push(TsdEntry {
            k,
            folner_size: engine.folner_total(k),
            region: desc,
            mu: den.value(),
            diam,
            pointwise,
            spatial,
            gap: (pointwise - spatial).norm(),
            bound: f64::INFINITY,
        });
    }
    Ok(TsdTrace {
        system: system_label(sys),
        observable: work.describe(),
        base: model.point(0).describe(),
        quad_tol: 0.0,
        entries,
    })
}

// ---------------------------------------------------------------------------
// Random-base experiments
// ---------------------------------------------------------------------------

/// Outcome of one sampled base point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointOutcome {
    /// Description of the sampled base point.
    pub base: String,
    /// Model index of the sampled base point.
    pub base_index: usize,
    /// Gap at the window end.
    pub final_gap: f64,
    /// Pointwise average at the window end (the empirical limit candidate).
    pub f_star: Complex64,
    /// Whether the final gap is within the declared epsilon.
    pub pass: bool,
}

/// Summary of a sampled-base-point convergence survey.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub total: usize,
    pub passes: usize,
    /// `passes / total`.
    pub fraction: f64,
    pub epsilon: f64,
    /// Final window index.
    pub k_end: usize,
    pub outcomes: Vec<PointOutcome>,
    /// The decay verdict that gated the experiment.
    pub decay_pass: bool,
}

/// Samples base points from the model and checks the window-end gap
/// `|Avg_{F_k} f(x) - alpha_{C_k(x)}(Avg_{F_k} f)|` against `epsilon` at
/// each of them.
///
/// The experiment refuses to run (hypothesis unmet) unless [`decay_check`]
/// passes for the scheme; ball families share one verdict since their
/// diameters do not depend on the center. The temporal averages of all
/// samples are computed in a single sweep and shared across base points, so
/// the cost is one engine pass plus membership scans.
#[allow(clippy::too_many_arguments)]
pub fn random_tsd_experiment(
    sys: &DynamicalSystem,
    model: &MeasureModel,
    schedule: &FolnerSchedule,
    family: &SpatialFamily,
    f: &Observable,
    w: &WeightSpec,
    ks: &[usize],
    n_points: usize,
    seed: u64,
    epsilon: f64,
    deltas: &[f64],
    threshold: f64,
) -> Result<ExperimentSummary> {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    validate_marks(ks)?;
    if n_points == 0 {
        return Err(Error::InvalidParameter("need at least one base point".into()));
    }
    let seq = match w {
        WeightSpec::SequenceWeight { seq, .. } => Some(seq),
        _ => None,
    };
    let decay = decay_check(sys, schedule, family, model.point(0), deltas, ks, seq, threshold)?;
    if !decay.pass {
        let worst = decay
            .fractions
            .iter()
            .flat_map(|row| row.iter().copied())
            .fold(0.0f64, f64::max);
        return Err(Error::HypothesisUnmet(format!(
            "decay fractions do not vanish on the window (worst {worst:.4}); \
             the reduction hypothesis fails for this scheme"
        )));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let picks: Vec<usize> = (0..n_points).map(|_| rng.gen_range(0..model.len())).collect();

    // One shared sweep over all samples.
    let mut engine = Engine::new(
        sys,
        model,
        schedule,
        model.point(0),
        TermMode::Single { f, w },
    )?;
    let n = model.len();
    let mut snapshots: Vec<Vec<Complex64>> = Vec::with_capacity(ks.len());
    for &k in ks {
        engine.advance_to(k, None)?;
        snapshots.push((0..n).map(|i| engine.value_at(i, k)).collect());
    }

    let k_end = *ks.last().expect("validated nonempty");
    let mut outcomes = Vec::with_capacity(n_points);
    let mut passes = 0usize;
    for &idx in &picks {
        let base = model.point(idx);
        let mut final_gap = 0.0;
        let mut f_star = Complex64::new(0.0, 0.0);
        for (mi, &k) in ks.iter().enumerate() {
            let region = family.region(k, base)?;
            let mut num = KahanComplex::new();
            let mut den = KahanSum::new();
            let mut count = 0usize;
            for i in 0..n {
                if region.contains(sys, i, model.point(i))? {
                    num.add(model.weight(i) * snapshots[mi][i]);
                    den.add(model.weight(i));
                    count += 1;
                }
            }
            if count == 0 || den.value() <= 0.0 {
                return Err(Error::ZeroMeasureRegion { k: Some(k) });
            }
            let spatial = num.value() / den.value();
            let pointwise = snapshots[mi][idx];
            if k == k_end {
                final_gap = (pointwise - spatial).norm();
                f_star = pointwise;
            }
        }
        let pass = final_gap <= epsilon;
        if pass {
            passes += 1;
        }
        outcomes.push(PointOutcome {
            base: base.describe(),
            base_index: idx,
            final_gap,
            f_star,
            pass,
        });
    }
    Ok(ExperimentSummary {
        total: n_points,
        passes,
        fraction: passes as f64 / n_points as f64,
        epsilon,
        k_end,
        outcomes,
        decay_pass: decay.pass,
    })
}

// ---------------------------------------------------------------------------
// Multiple averages
// ---------------------------------------------------------------------------

/// Telescoped gap envelope for a multiple average over a region of diameter
/// `diam`: each factor `h` contributes
/// `prod_{l != h} sup|f_l| * c_h * (1/k) sum_{j<k} distortion_h(n_j, diam)^beta_h`,
/// where factor 0 (untransformed) has distortion `diam` itself.
fn multiple_bound(spec: &MultipleAverageSpec, k: usize, diam: f64) -> Result<f64> {
    let count = spec.observables.len();
    let mut total = KahanSum::new();
    for h in 0..count {
        let Some(hd) = spec.observables[h].holder() else {
            return Ok(f64::INFINITY);
        };
        if hd.c == 0.0 {
            continue;
        }
        let prod: f64 = (0..count)
            .filter(|&l| l != h)
            .map(|l| spec.observables[l].bound())
            .product();
        let avg = if h == 0 {
            pow_beta(diam, hd.beta)
        } else {
            let sys_h = &spec.systems[h - 1];
            if matches!(sys_h.holder(), HolderProfile::Isometric) {
                pow_beta(diam, hd.beta)
            } else {
                let mut acc = KahanSum::new();
                for j in 0..k {
                    let n = spec.indices[h - 1].term(j)?;
                    let d = sys_h.distortion_bound(&GroupElement::z(n), diam)?;
                    acc.add(pow_beta(d, hd.beta));
                }
                acc.value() / k as f64
            }
        };
        total.add(prod * hd.c * avg);
    }
    Ok(total.value())
}

/// Sum of the telescoped Lipschitz masses `prod_{l != h} sup|f_l| * c_h`
/// (used for the quadrature slack).
fn multiple_holder_mass(spec: &MultipleAverageSpec) -> Option<f64> {
    let count = spec.observables.len();
    let mut sum = 0.0;
    for h in 0..count {
        let hd = spec.observables[h].holder()?;
        let prod: f64 = (0..count)
            .filter(|&l| l != h)
            .map(|l| spec.observables[l].bound())
            .product();
        sum += prod * hd.c;
    }
    Some(sum)
}

/// Temporo-spatial trace for a multiple ergodic average
/// `(1/k) sum_{j<k} f_0 * prod_l f_l(T_l^{n_j} x)` over the family's regions.
///
/// Before tracing, the per-factor decay fractions (each with its own
/// system's distortion profile along its own index sequence) must pass the
/// tail check at level `delta`/`threshold`; otherwise the reduction
/// hypothesis is unmet and no claim is made. Distances and regions are read
/// through the first transformed system's metric (all factors share the
/// state space).
pub fn multiple_tsd(
    spec: &MultipleAverageSpec,
    model: &MeasureModel,
    family: &SpatialFamily,
    x0: &Point,
    ks: &[usize],
    delta: f64,
    threshold: f64,
) -> Result<TsdTrace> {
    validate_marks(ks)?;
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter("delta must be positive".into()));
    }
    let sys = &spec.systems[0];

    // Per-factor decay fractions along the window.
    for (l, (sys_l, idx_l)) in spec.systems.iter().zip(&spec.indices).enumerate() {
        let mut fractions = Vec::with_capacity(ks.len());
        for &k in ks {
            let diam = family.region(k, x0)?.diameter_bound(sys_l);
            let mut offending = 0usize;
            for j in 0..k {
                let n = idx_l.term(j)?;
                let d = sys_l.distortion_bound(&GroupElement::z(n), diam)?;
                if d > delta {
                    offending += 1;
                }
            }
            fractions.push(offending as f64 / k as f64);
        }
        let tail_start = ks.len() - ks.len().div_ceil(4).max(1);
        if fractions[tail_start..].iter().any(|&v| v > threshold) {
            return Err(Error::HypothesisUnmet(format!(
                "factor {} fails the decay condition at delta = {delta}",
                l + 1
            )));
        }
    }

    let base_idx = model.nearest_sample_index(sys, x0)?;
    let base = model.point(base_idx).clone();
    let interval = FolnerSchedule::Interval;
    let mut engine = Engine::new(sys, model, &interval, &base, TermMode::Multi { spec })?;
    let quad_tol = multiple_holder_mass(spec)
        .map_or(0.0, |c| quad_slack(sys, model, c));
    let n = model.len();
    let prune = matches!(family, SpatialFamily::Balls { .. }) && family.is_nested();
    let mut active: Option<Vec<usize>> = None;
    let mut entries = Vec::with_capacity(ks.len());
    for (mi, &k) in ks.iter().enumerate() {
        engine.advance_to(k, active.as_deref())?;
        let region = family.region(k, &base)?;
        let diam = region.diameter_bound(sys);
        let mut num = KahanComplex::new();
        let mut den = KahanSum::new();
        let mut count = 0usize;
        let mut scan = |i: usize| -> Result<()> {
            if region.contains(sys, i, model.point(i))? {
                num.add(model.weight(i) * engine.value_at(i, k));
                den.add(model.weight(i));
                count += 1;
            }
            Ok(())
        };
        match &active {
            None => {
                for i in 0..n {
                    scan(i)?;
                }
            }
            Some(list) => {
                for &i in list {
                    scan(i)?;
                }
            }
        }
        if count == 0 || den.value() <= 0.0 {
            return Err(Error::ZeroMeasureRegion { k: Some(k) });
        }
        let spatial = num.value() / den.value();
        let pointwise = engine.value_at(engine.base_slot(), k);
        entries.push(TsdEntry {
            k,
            folner_size: k as u64,
            region: region.describe(),
            mu: den.value(),
            diam,
            pointwise,
            spatial,
            gap: (pointwise - spatial).norm(),
            bound: multiple_bound(spec, k, diam)?,
        });
        if prune && mi + 1 < ks.len() {
            let next = family.region(ks[mi + 1], &base)?;
            let mut keep = Vec::new();
            match &active {
                None => {
                    for i in 0..n {
                        if next.contains(sys, i, model.point(i))? {
                            keep.push(i);
                        }
                    }
                }
                Some(list) => {
                    for &i in list {
                        if next.contains(sys, i, model.point(i))? {
                            keep.push(i);
                        }
                    }
                }
            }
            active = Some(keep);
        }
    }
    Ok(TsdTrace {
        system: format!("multiple({} factors)", spec.factors()),
        observable: spec
            .observables
            .iter()
            .map(|f| f.describe())
            .collect::<Vec<_>>()
            .join(" * "),
        base: base.describe(),
        quad_tol,
        entries,
    })
}
