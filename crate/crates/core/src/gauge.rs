//! Ergodic maximization: the gauge of an observable over invariant measures.
//!
//! For a continuous `f >= 0` the gauge
//!
//! ```text
//! Gamma(f) = sup { integral f dmu : mu invariant }
//! ```
//!
//! equals the limit of the uniform norms `||Avg_{F_k} f||_inf`, so a finite
//! evaluation grid plus a long window yields a computable estimate with an
//! explicit spatial-discretization budget when Hölder data is available.
//! Periodic-orbit oracles give independent lower bounds (exact on the
//! doubling map and full shifts, where cycles enumerate in integer
//! arithmetic), and the same machinery powers two diagnostics:
//!
//! * a **spread check**: whether `integral f dmu` is (numerically) the same
//!   for every invariant measure in a catalog and whether the long averages
//!   have uniformly small oscillation — the functionals for which temporal
//!   averages converge uniformly to a constant;
//! * a **unique-ergodicity probe**: run the spread check over a battery of
//!   nonnegative observables; a single functional with two distinct orbit
//!   means refutes unique ergodicity, while uniformly tiny oscillation on
//!   the whole battery is evidence for it.
//!
//! Additive constants are kept out of every scan: spreads are computed from
//! observable kernels only, so shifting `f` by a constant cannot change a
//! spread even in the last bit.

use crate::averaging::{avg_temporal, FolnerSchedule, Observable, ObservableKind};
use crate::dynamics::{frac, DynamicalSystem, GroupElement, Point, SystemKind};
use crate::error::{Error, Result};
use crate::kahan::{KahanComplex, KahanSum};
use crate::measure::MeasureModel;
use num_complex::Complex64;
use serde::Serialize;

/// Tolerance for "real and nonnegative" validation of gauge inputs.
const REALITY_TOL: f64 = 1e-9;

/// A finite evaluation grid with a covering-radius certificate: every point
/// of the space lies within `covering_radius` of a grid point.
#[derive(Clone, Debug)]
pub struct EvalGrid {
    points: Vec<Point>,
    covering_radius: f64,
    label: String,
}

impl EvalGrid {
    pub fn from_points(points: Vec<Point>, covering_radius: f64, label: &str) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("empty evaluation grid".into()));
        }
        Ok(Self {
            points,
            covering_radius,
            label: label.to_string(),
        })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn covering_radius(&self) -> f64 {
        self.covering_radius
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

/// Canonical evaluation grid for a system.
///
/// * circle systems: nodes `i/resolution`, covering radius `1/(2 resolution)`;
/// * `d`-torus systems: the product grid, same covering radius in the max
///   metric (total size capped at `2^22`);
/// * full shifts: all words of length `resolution` (covering radius
///   `2^-resolution`), capped at `2^20` words.
pub fn eval_grid(sys: &DynamicalSystem, resolution: usize) -> Result<EvalGrid> {
    if resolution == 0 {
        return Err(Error::InvalidParameter("resolution must be >= 1".into()));
    }
    match sys.kind() {
        SystemKind::Rotation { .. } | SystemKind::Doubling => EvalGrid::from_points(
            (0..resolution)
                .map(|i| Point::circle(i as f64 / resolution as f64))
                .collect(),
            1.0 / (2.0 * resolution as f64),
            &format!("circle-grid-{resolution}"),
        ),
        SystemKind::ToralTranslation { alphas } => {
            build_torus_grid(alphas.len(), resolution)
        }
        SystemKind::Trivial { dim } => build_torus_grid(*dim, resolution),
        SystemKind::Shift { symbols } => {
            let count = (*symbols as usize)
                .checked_pow(resolution as u32)
                .filter(|&c| c <= 1 << 20)
                .ok_or(Error::InvalidParameter(
                    "word grid too large; lower the resolution".into(),
                ))?;
            let mut points = Vec::with_capacity(count);
            let mut word = vec![0u8; resolution];
            'outer: loop {
                points.push(Point::word(&word)?);
                let mut pos = resolution;
                loop {
                    if pos == 0 {
                        break 'outer;
                    }
                    pos -= 1;
                    word[pos] += 1;
                    if word[pos] < *symbols {
                        break;
                    }
                    word[pos] = 0;
                }
            }
            EvalGrid::from_points(
                points,
                0.5f64.powi(resolution as i32),
                &format!("word-grid-{resolution}"),
            )
        }
    }
}

fn build_torus_grid(dim: usize, resolution: usize) -> Result<EvalGrid> {
    let count = resolution
        .checked_pow(dim as u32)
        .filter(|&c| c <= 1 << 22)
        .ok_or(Error::InvalidParameter(
            "torus grid too large; lower the resolution".into(),
        ))?;
    let mut points = Vec::with_capacity(count);
    let mut idx = vec![0usize; dim];
    'outer: loop {
        let coords: Vec<f64> = idx.iter().map(|&i| i as f64 / resolution as f64).collect();
        points.push(Point::torus(&coords));
        let mut axis = dim;
        loop {
            if axis == 0 {
                break 'outer;
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < resolution {
                break;
            }
            idx[axis] = 0;
        }
    }
    EvalGrid::from_points(
        points,
        1.0 / (2.0 * resolution as f64),
        &format!("torus-grid-{dim}d-{resolution}"),
    )
}

/// Per-grid-point kernel averages `Avg_{F_k}(f - offset)(x)`, using exact
/// structure where the system provides it:
///
/// * rotations / toral translations with trigonometric kernels factor the
///   average through the one-dimensional means `D_k(m alpha)` (geometric
///   phase sums), costing `O(k + grid * terms)`;
/// * the doubling map iterates exactly in binary floating point and every
///   orbit lands on the fixed point 0 after finitely many steps, so tails
///   close in one multiplication;
/// * shifts evaluate observables through cyclic index arithmetic with the
///   word period factored out;
/// * the trivial system returns the kernel itself;
/// * anything else falls back to direct summation.
pub(crate) fn kernel_averages(
    sys: &DynamicalSystem,
    f: &Observable,
    k: usize,
    points: &[Point],
) -> Result<Vec<Complex64>> {
    if k == 0 {
        return Err(Error::InvalidParameter("window must satisfy k >= 1".into()));
    }
    match (sys.kind(), f.kind()) {
        (_, ObservableKind::Zero) => Ok(vec![Complex64::new(0.0, 0.0); points.len()]),
        (_, ObservableKind::Linear { parts }) => {
            let mut acc = vec![Complex64::new(0.0, 0.0); points.len()];
            for (a, part) in parts {
                let sub = kernel_averages(sys, part, k, points)?;
                for (dst, v) in acc.iter_mut().zip(sub) {
                    *dst += a * v;
                }
            }
            Ok(acc)
        }
        (SystemKind::Rotation { alpha }, ObservableKind::TrigPoly { axis, terms }) => {
            dirichlet_averages(*alpha, *axis, terms, k, points)
        }
        (SystemKind::ToralTranslation { alphas }, ObservableKind::TrigPoly { axis, terms }) => {
            let alpha = *alphas.get(*axis).ok_or(Error::PointDimensionMismatch {
                expected: axis + 1,
                found: alphas.len(),
            })?;
            dirichlet_averages(alpha, *axis, terms, k, points)
        }
        (SystemKind::Trivial { .. }, _) => {
            points.iter().map(|p| f.kernel_eval(p)).collect()
        }
        (SystemKind::Doubling, _) => {
            let zero = Point::circle(0.0);
            let k0 = f.kernel_eval(&zero)?;
            points
                .iter()
                .map(|p| {
                    let mut cur = p.torus_coords()?[0];
                    let mut acc = KahanComplex::new();
                    let mut j = 0usize;
                    while j < k {
                        if cur == 0.0 {
                            acc.add((k - j) as f64 * k0);
                            break;
                        }
                        acc.add(f.kernel_eval(&Point::circle(cur))?);
                        cur = frac(2.0 * cur);
                        j += 1;
                    }
                    Ok(acc.value() / k as f64)
                })
                .collect()
        }
        (SystemKind::Shift { .. }, _) => points
            .iter()
            .map(|p| {
                let period = match p {
                    Point::Symbolic(w) => w.len(),
                    _ => return Err(Error::PointVariantMismatch),
                };
                // One period of shifted kernel values; the average over k
                // terms is (full_cycles * period_sum + prefix) / k.
                let mut period_sum = KahanComplex::new();
                let mut prefix = KahanComplex::new();
                let remainder = k % period;
                for j in 0..period.min(k) {
                    let v = f.kernel_eval_shifted(p, j as i64)?;
                    period_sum.add(v);
                    if j < remainder {
                        prefix.add(v);
                    }
                }
                let full_cycles = (k / period) as f64;
                Ok((full_cycles * period_sum.value() + prefix.value()) / k as f64)
            })
            .collect(),
        _ => {
            let f_set = FolnerSchedule::Interval.set(k)?;
            points
                .iter()
                .map(|p| Ok(avg_temporal(sys, &f_set, f, p)? - f.offset()))
                .collect()
        }
    }
}

/// Factored averages for trig kernels under rotation by `alpha`:
/// `Avg_k e^{2 pi i m (x + j alpha)} = e^{2 pi i m x} * D_k(m alpha)`.
fn dirichlet_averages(
    alpha: f64,
    axis: usize,
    terms: &[(i64, Complex64)],
    k: usize,
    points: &[Point],
) -> Result<Vec<Complex64>> {
    let mut dirichlet = Vec::with_capacity(terms.len());
    for (m, c) in terms {
        let theta = 2.0 * std::f64::consts::PI * frac(*m as f64 * alpha);
        let mut acc = KahanComplex::new();
        for j in 0..k {
            acc.add(Complex64::from_polar(1.0, theta * j as f64));
        }
        dirichlet.push((*m, c * acc.value() / k as f64));
    }
    points
        .iter()
        .map(|p| {
            let x = p
                .torus_coords()?
                .get(axis)
                .copied()
                .ok_or(Error::PointDimensionMismatch {
                    expected: axis + 1,
                    found: p.torus_coords()?.len(),
                })?;
            let mut acc = Complex64::new(0.0, 0.0);
            for (m, cd) in &dirichlet {
                let phase = 2.0 * std::f64::consts::PI * (*m as f64) * x;
                acc += cd * Complex64::new(phase.cos(), phase.sin());
            }
            Ok(acc)
        })
        .collect()
}

/// Validates that `f` is numerically real on the grid, returning
/// `(min Re f, max |Im f|)`.
fn reality_scan(f: &Observable, grid: &EvalGrid) -> Result<(f64, f64)> {
    let mut min_re = f64::INFINITY;
    let mut max_imag = 0.0f64;
    for p in &grid.points {
        let v = f.eval(p)?;
        min_re = min_re.min(v.re);
        max_imag = max_imag.max(v.im.abs());
    }
    if max_imag > REALITY_TOL {
        return Err(Error::ComplexObservable { imag: max_imag });
    }
    Ok((min_re, max_imag))
}

/// A gauge estimate with provenance.
#[derive(Clone, Debug, Serialize)]
pub struct GaugeEstimate {
    /// `max over grid of Avg_{F_k} f` — the upper-family estimate.
    pub value: f64,
    /// The same maximum with the observable's additive constant removed.
    pub kernel_max: f64,
    /// Window length used.
    pub k: usize,
    /// Number of grid points scanned.
    pub grid_size: usize,
    /// Description of the maximizing grid point.
    pub witness: String,
    /// Spatial-discretization budget from Hölder and distortion data:
    /// `(c/k) sum_j min(L(j) r^{H(j)}, diam)^beta` at the covering radius
    /// `r`. `None` when the observable carries no Hölder certificate.
    pub tolerance_budget: Option<f64>,
    /// Best `integral f dmu` over a supplied invariant-measure catalog — an
    /// independent lower bound for the gauge.
    pub catalog_lower_bound: Option<f64>,
}

/// Estimates the gauge `Gamma(f) = sup_mu integral f dmu` of a nonnegative
/// real observable as `max_{x in grid} Avg_{F_k} f (x)`.
///
/// Inputs must be real and nonnegative on the grid (up to `1e-9`); complex
/// or genuinely negative observables are rejected — shift them first, the
/// gauge translates: `Gamma(f + c) = Gamma(f) + c`.
pub fn gauge_supnorm(
    sys: &DynamicalSystem,
    f: &Observable,
    k: usize,
    grid: &EvalGrid,
    catalog: Option<&InvariantMeasureCatalog>,
) -> Result<GaugeEstimate> {
    let (min_re, _) = reality_scan(f, grid)?;
    if min_re < -REALITY_TOL {
        return Err(Error::NegativeObservable {
            min: min_re,
            imag: 0.0,
        });
    }
    if f.offset().im.abs() > REALITY_TOL {
        return Err(Error::ComplexObservable {
            imag: f.offset().im.abs(),
        });
    }
    let averages = kernel_averages(sys, f, k, &grid.points)?;
    let mut kernel_max = f64::NEG_INFINITY;
    let mut witness = 0usize;
    for (i, v) in averages.iter().enumerate() {
        if v.re > kernel_max {
            kernel_max = v.re;
            witness = i;
        }
    }
    let tolerance_budget = match f.holder() {
        Some(h) => Some(average_distortion_budget(sys, h.c, h.beta, k, grid.covering_radius)?),
        None => None,
    };
    let catalog_lower_bound = match catalog {
        Some(cat) => Some(cat.best_mean(f)?.1),
        None => None,
    };
    Ok(GaugeEstimate {
        value: kernel_max + f.offset().re,
        kernel_max,
        k,
        grid_size: grid.points.len(),
        witness: grid.points[witness].describe(),
        tolerance_budget,
        catalog_lower_bound,
    })
}

/// `(c/k) sum_{j<k} min(L(j) r^{H(j)}, diam)^beta`: how much `Avg_{F_k} f`
/// can vary across one covering cell of radius `r`.
fn average_distortion_budget(
    sys: &DynamicalSystem,
    c: f64,
    beta: f64,
    k: usize,
    r: f64,
) -> Result<f64> {
    let diam = sys.space_diameter();
    let mut acc = KahanSum::new();
    for j in 0..k {
        let g = GroupElement::z(j as i64);
        let d = sys.distortion_bound(&g, r)?.min(diam);
        acc.add(d.powf(beta));
    }
    Ok(c * acc.value() / k as f64)
}

/// Result of a periodic-orbit scan.
#[derive(Clone, Debug, Serialize)]
pub struct OrbitOracle {
    /// Largest orbit mean found (a certified lower bound for the gauge).
    pub max_mean: f64,
    /// Smallest orbit mean found.
    pub min_mean: f64,
    /// Description of the maximizing orbit.
    pub witness_max: String,
    /// Description of the minimizing orbit.
    pub witness_min: String,
    /// Number of orbits scanned.
    pub orbits: usize,
}

/// Scans all periodic orbits of period `<= max_period` and returns the
/// extremes of the orbit means of `f`.
///
/// Supported systems: the doubling map (cycles are the rationals
/// `m/(2^n - 1)`, iterated in integer arithmetic, so orbits never drift) and
/// full shifts (cycles are periodic words, represented exactly). Irrational
/// rotations have no periodic points, and on the trivial system the scan
/// degenerates to a grid maximum; both are rejected.
pub fn gauge_orbit_oracle(
    sys: &DynamicalSystem,
    f: &Observable,
    max_period: usize,
) -> Result<OrbitOracle> {
    if max_period == 0 || max_period > 20 {
        return Err(Error::InvalidParameter(
            "orbit oracle supports 1 <= max_period <= 20".into(),
        ));
    }
    let mut max_mean = f64::NEG_INFINITY;
    let mut min_mean = f64::INFINITY;
    let mut witness_max = String::new();
    let mut witness_min = String::new();
    let mut orbits = 0usize;
    let mut record = |mean: Complex64, desc: &dyn Fn() -> String| -> Result<()> {
        if mean.im.abs() > REALITY_TOL {
            return Err(Error::ComplexObservable {
                imag: mean.im.abs(),
            });
        }
        if mean.re > max_mean {
            max_mean = mean.re;
            witness_max = desc();
        }
        if mean.re < min_mean {
            min_mean = mean.re;
            witness_min = desc();
        }
        Ok(())
    };
    match sys.kind() {
        SystemKind::Doubling => {
            for n in 1..=max_period as u32 {
                let modulus: u64 = (1u64 << n) - 1;
                for m in 0..modulus.max(1) {
                    let mut acc = KahanComplex::new();
                    let mut cur = m;
                    for _ in 0..n {
                        acc.add(f.eval(&Point::circle(cur as f64 / modulus.max(1) as f64))?);
                        cur = (2 * cur) % modulus.max(1);
                    }
                    let mean = acc.value() / n as f64;
                    record(mean, &|| format!("cycle {m}/{modulus} (period {n})"))?;
                    orbits += 1;
                }
            }
        }
        SystemKind::Shift { symbols } => {
            for n in 1..=max_period {
                let count = (*symbols as usize)
                    .checked_pow(n as u32)
                    .filter(|&c| c <= 1 << 20)
                    .ok_or(Error::InvalidParameter(
                        "orbit oracle word count too large".into(),
                    ))?;
                let mut word = vec![0u8; n];
                for _ in 0..count {
                    let p = Point::word(&word)?;
                    let mut acc = KahanComplex::new();
                    for j in 0..n {
                        acc.add(f.kernel_eval_shifted(&p, j as i64)? + f.offset());
                    }
                    let mean = acc.value() / n as f64;
                    record(mean, &|| format!("cycle {word:?}"))?;
                    orbits += 1;
                    let mut pos = n;
                    loop {
                        if pos == 0 {
                            break;
                        }
                        pos -= 1;
                        word[pos] += 1;
                        if word[pos] < *symbols {
                            break;
                        }
                        word[pos] = 0;
                    }
                }
            }
        }
        _ => return Err(Error::UnsupportedOracle),
    }
    Ok(OrbitOracle {
        max_mean,
        min_mean,
        witness_max,
        witness_min,
        orbits,
    })
}

/// A named finite family of (models of) invariant measures.
#[derive(Clone, Debug)]
pub struct InvariantMeasureCatalog {
    entries: Vec<(String, MeasureModel)>,
}

impl InvariantMeasureCatalog {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn push(&mut self, name: &str, model: MeasureModel) {
        self.entries.push((name.to_string(), model));
    }

    pub fn entries(&self) -> &[(String, MeasureModel)] {
        &self.entries
    }

    /// Canonical catalog for a system.
    ///
    /// * irrational rotations / toral translations: the quadrature grid for
    ///   the reference measure (exactly invariant on trigonometric kernels
    ///   with frequencies below the grid size);
    /// * doubling: the reference grid, the fixed point `0`, and all cycles
    ///   `m/(2^n - 1)` with `n <= max_period`;
    /// * full shifts: the uniform Bernoulli model and all periodic words of
    ///   period `<= max_period`;
    /// * trivial systems: point masses at the grid nodes (every point is
    ///   fixed).
    pub fn for_system(
        sys: &DynamicalSystem,
        resolution: usize,
        max_period: usize,
    ) -> Result<Self> {
        let mut cat = Self::new();
        match sys.kind() {
            SystemKind::Rotation { .. } => {
                cat.push("lebesgue-grid", MeasureModel::circle_grid(resolution)?);
            }
            SystemKind::ToralTranslation { alphas } => {
                cat.push(
                    "lebesgue-grid",
                    MeasureModel::torus_grid(alphas.len(), resolution)?,
                );
            }
            SystemKind::Doubling => {
                cat.push("lebesgue-grid", MeasureModel::circle_grid(resolution)?);
                for n in 1..=max_period.clamp(1, 12) as u32 {
                    let modulus = (1u64 << n) - 1;
                    for m in 0..modulus.max(1) {
                        // Each cycle appears once per starting residue; keep
                        // only the lexicographically least representative.
                        let mut cur = m;
                        let mut least = true;
                        let mut points = Vec::with_capacity(n as usize);
                        for _ in 0..n {
                            points.push(Point::circle(cur as f64 / modulus.max(1) as f64));
                            cur = (2 * cur) % modulus.max(1);
                            if cur < m {
                                least = false;
                                break;
                            }
                        }
                        if !least || cur != m {
                            continue;
                        }
                        let w = 1.0 / points.len() as f64;
                        let weights = vec![w; points.len()];
                        cat.push(
                            &format!("cycle-{m}-of-{modulus}"),
                            MeasureModel::from_points(
                                points,
                                weights,
                                crate::measure::SamplingMode::Explicit,
                            )?,
                        );
                    }
                }
            }
            SystemKind::Shift { symbols } => {
                let w = resolution.clamp(1, 16);
                cat.push(
                    "bernoulli-uniform",
                    MeasureModel::shift_quadrature(*symbols, w, None)?,
                );
                for n in 1..=max_period.clamp(1, 10) {
                    let count = (*symbols as usize).pow(n as u32);
                    let mut word = vec![0u8; n];
                    for _ in 0..count {
                        if is_least_rotation(&word) {
                            let sys_pt = Point::word(&word)?;
                            let model = MeasureModel::orbit(sys, &sys_pt, n)?;
                            cat.push(&format!("cycle-{word:?}"), model);
                        }
                        let mut pos = n;
                        loop {
                            if pos == 0 {
                                break;
                            }
                            pos -= 1;
                            word[pos] += 1;
                            if word[pos] < *symbols {
                                break;
                            }
                            word[pos] = 0;
                        }
                    }
                }
            }
            SystemKind::Trivial { dim } => {
                let n = resolution.clamp(1, 64);
                let grid = build_torus_grid(*dim, n)?;
                for (i, p) in grid.points.iter().enumerate() {
                    cat.push(
                        &format!("fixed-{i}"),
                        MeasureModel::from_points(
                            vec![p.clone()],
                            vec![1.0],
                            crate::measure::SamplingMode::Explicit,
                        )?,
                    );
                }
            }
        }
        Ok(cat)
    }

    /// `|integral f d(T_* mu) - integral f dmu|` per entry: the invariance
    /// defect of each model on this observable.
    pub fn verify_invariance(
        &self,
        sys: &DynamicalSystem,
        f: &Observable,
    ) -> Result<Vec<(String, f64)>> {
        self.entries
            .iter()
            .map(|(name, model)| {
                let mut pushed = KahanComplex::new();
                for (p, w) in model.points().iter().zip(model.weights()) {
                    pushed.add(*w * f.eval(&sys.act_z(1, p)?)?);
                }
                let defect = (pushed.value() - model.mean(f)?).norm();
                Ok((name.clone(), defect))
            })
            .collect()
    }

    /// `(name, max Re integral f dmu)` over entries.
    pub fn best_mean(&self, f: &Observable) -> Result<(String, f64)> {
        let mut best: Option<(String, f64)> = None;
        for (name, model) in &self.entries {
            let v = model.mean(f)?;
            if v.im.abs() > REALITY_TOL {
                return Err(Error::ComplexObservable { imag: v.im.abs() });
            }
            if best.as_ref().map_or(true, |(_, b)| v.re > *b) {
                best = Some((name.clone(), v.re));
            }
        }
        best.ok_or(Error::InvalidParameter("empty catalog".into()))
    }

    /// Spread `max - min` of the **kernel** means over entries, with the
    /// witnesses. Offset-free by construction: shifting the observable by a
    /// constant leaves every kernel mean — hence the spread — bit-identical.
    pub fn kernel_mean_spread(&self, f: &Observable) -> Result<(f64, String, String)> {
        let mut lo: Option<(f64, String)> = None;
        let mut hi: Option<(f64, String)> = None;
        for (name, model) in &self.entries {
            let v = model.mean_kernel(f)?;
            if v.im.abs() > REALITY_TOL {
                return Err(Error::ComplexObservable { imag: v.im.abs() });
            }
            if lo.as_ref().map_or(true, |(b, _)| v.re < *b) {
                lo = Some((v.re, name.clone()));
            }
            if hi.as_ref().map_or(true, |(b, _)| v.re > *b) {
                hi = Some((v.re, name.clone()));
            }
        }
        let (lo_v, lo_n) = lo.ok_or(Error::InvalidParameter("empty catalog".into()))?;
        let (hi_v, hi_n) = hi.unwrap();
        Ok((hi_v - lo_v, lo_n, hi_n))
    }
}

impl Default for InvariantMeasureCatalog {
    fn default() -> Self {
        Self::new()
    }
}

/// Whether `word` is the lexicographically least among its rotations
/// (one representative per cyclic orbit).
fn is_least_rotation(word: &[u8]) -> bool {
    let n = word.len();
    for s in 1..n {
        for j in 0..n {
            match word[(s + j) % n].cmp(&word[j]) {
                std::cmp::Ordering::Less => return false,
                std::cmp::Ordering::Greater => break,
                std::cmp::Ordering::Equal => continue,
            }
        }
    }
    true
}

/// Outcome of the constant-mean spread check for one observable.
#[derive(Clone, Debug, Serialize)]
pub struct HermanVerdict {
    /// Oscillation `max - min` of the kernel averages over the grid.
    pub average_spread: f64,
    /// Spread of the kernel means over the catalog entries, if given.
    pub catalog_spread: Option<f64>,
    /// Whether both spreads are below the tolerance.
    pub passes: bool,
    pub tolerance: f64,
    pub k: usize,
    pub witness_low: String,
    pub witness_high: String,
}

/// Checks whether `integral f dmu` looks independent of the invariant
/// measure `mu`: the uniform oscillation of `Avg_{F_k} f` over the grid and
/// the spread of catalog means must both fall below `tolerance`.
///
/// Both spreads are computed from the observable's kernel, so the verdict is
/// invariant — bit for bit — under shifting `f` by an additive constant.
pub fn herman_check(
    sys: &DynamicalSystem,
    f: &Observable,
    k: usize,
    grid: &EvalGrid,
    catalog: Option<&InvariantMeasureCatalog>,
    tolerance: f64,
) -> Result<HermanVerdict> {
    let averages = kernel_averages(sys, f, k, &grid.points)?;
    let mut lo = (f64::INFINITY, 0usize);
    let mut hi = (f64::NEG_INFINITY, 0usize);
    for (i, v) in averages.iter().enumerate() {
        if v.im.abs() > REALITY_TOL {
            return Err(Error::ComplexObservable { imag: v.im.abs() });
        }
        if v.re < lo.0 {
            lo = (v.re, i);
        }
        if v.re > hi.0 {
            hi = (v.re, i);
        }
    }
    let average_spread = hi.0 - lo.0;
    let catalog_spread = match catalog {
        Some(cat) => Some(cat.kernel_mean_spread(f)?.0),
        None => None,
    };
    let passes =
        average_spread <= tolerance && catalog_spread.map_or(true, |s| s <= tolerance);
    Ok(HermanVerdict {
        average_spread,
        catalog_spread,
        passes,
        tolerance,
        k,
        witness_low: grid.points[lo.1].describe(),
        witness_high: grid.points[hi.1].describe(),
    })
}

/// Unique-ergodicity verdict.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum UeVerdict {
    /// Every battery observable had uniformly small average oscillation.
    Plausible,
    /// Two periodic orbits (or two catalog measures) disagree on some mean.
    Refuted,
    /// Neither small oscillation everywhere nor a certified disagreement.
    Inconclusive,
}

/// Report of the unique-ergodicity probe.
#[derive(Clone, Debug, Serialize)]
pub struct UeReport {
    pub verdict: UeVerdict,
    /// Largest average oscillation over the battery.
    pub max_gap: f64,
    /// Observable attaining it.
    pub worst_observable: String,
    /// Per-observable oscillations.
    pub gaps: Vec<(String, f64)>,
    pub k: usize,
    /// `(observable, spread)` certified by the orbit oracle, when one
    /// exists and refutes.
    pub oracle_refutation: Option<(String, f64)>,
    pub pass_tolerance: f64,
    pub refute_threshold: f64,
}

/// Standard nonnegative probe battery for a system: `1 + a*cos(2 pi m x)`
/// and `1 + a*sin(2 pi m x)` on torus factors, `1 + `cylinder indicators on
/// shifts.
pub fn probe_battery(sys: &DynamicalSystem) -> Vec<(String, Observable)> {
    match sys.kind() {
        SystemKind::Shift { symbols } => {
            let mut battery = Vec::new();
            for pos in 0..5i64 {
                for sym in 0..(*symbols).min(2) {
                    battery.push((
                        format!("1+cyl({pos},{sym})"),
                        Observable::cylinder(pos, sym).offset_by(1.0),
                    ));
                }
            }
            battery
        }
        _ => {
            let mut battery = Vec::new();
            for m in 1..=5i64 {
                for &a in &[1.0f64, 0.5] {
                    let cos = Observable::linear_combination(&[(
                        Complex64::new(a, 0.0),
                        Observable::cosine(0, m),
                    )])
                    .offset_by(1.0);
                    let sin = Observable::linear_combination(&[(
                        Complex64::new(a, 0.0),
                        Observable::sine(0, m),
                    )])
                    .offset_by(1.0);
                    battery.push((format!("1+{a}cos({m}x)"), cos));
                    battery.push((format!("1+{a}sin({m}x)"), sin));
                }
            }
            battery
        }
    }
}

/// Probes unique ergodicity with a battery of nonnegative observables.
///
/// If the system has a periodic-orbit oracle and two orbits disagree on some
/// battery mean by more than `refute_threshold`, the verdict is `Refuted`
/// with an exact witness. Otherwise the probe measures the oscillation of
/// `Avg_{F_k} f` over the grid for each battery member; all oscillations
/// below `pass_tolerance` yields `Plausible`, anything else `Inconclusive`.
pub fn unique_ergodicity_probe(
    sys: &DynamicalSystem,
    k: usize,
    grid: &EvalGrid,
    pass_tolerance: f64,
    refute_threshold: f64,
    max_period: usize,
) -> Result<UeReport> {
    let battery = probe_battery(sys);
    if battery.is_empty() {
        return Err(Error::InvalidParameter("empty probe battery".into()));
    }
    let mut oracle_refutation: Option<(String, f64)> = None;
    for (name, f) in &battery {
        match gauge_orbit_oracle(sys, f, max_period) {
            Ok(oracle) => {
                let spread = oracle.max_mean - oracle.min_mean;
                if spread > refute_threshold
                    && oracle_refutation.as_ref().map_or(true, |(_, s)| spread > *s)
                {
                    oracle_refutation = Some((name.clone(), spread));
                }
            }
            Err(Error::UnsupportedOracle) => break,
            Err(e) => return Err(e),
        }
    }
    let mut gaps = Vec::with_capacity(battery.len());
    let mut max_gap = 0.0f64;
    let mut worst = battery[0].0.clone();
    for (name, f) in &battery {
        let averages = kernel_averages(sys, f, k, &grid.points)?;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in &averages {
            lo = lo.min(v.re);
            hi = hi.max(v.re);
        }
        let gap = hi - lo;
        gaps.push((name.clone(), gap));
        if gap > max_gap {
            max_gap = gap;
            worst = name.clone();
        }
    }
    let verdict = if oracle_refutation.is_some() {
        UeVerdict::Refuted
    } else if max_gap <= pass_tolerance {
        UeVerdict::Plausible
    } else {
        UeVerdict::Inconclusive
    };
    Ok(UeReport {
        verdict,
        max_gap,
        worst_observable: worst,
        gaps,
        k,
        oracle_refutation,
        pass_tolerance,
        refute_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOLDEN: f64 = 0.618033988749894848;

    fn one_plus_cos() -> Observable {
        Observable::cosine(0, 1).offset_by(1.0)
    }

    #[test]
    fn gauge_of_constant_is_the_constant() {
        let sys = DynamicalSystem::rotation(GOLDEN);
        let grid = eval_grid(&sys, 64).unwrap();
        let f = Observable::constant(Complex64::new(0.75, 0.0));
        let g = gauge_supnorm(&sys, &f, 100, &grid, None).unwrap();
        assert_eq!(g.value, 0.75);
        assert_eq!(g.kernel_max, 0.0);
    }

    #[test]
    fn gauge_on_unique_ergodicity_returns_the_integral() {
        // Irrational rotation: Gamma(1 + cos) = integral = 1, and the
        // uniform norm of the window average converges at rate |D_k(alpha)|.
        let sys = DynamicalSystem::rotation(GOLDEN);
        let grid = eval_grid(&sys, 4096).unwrap();
        let f = one_plus_cos();
        let g = gauge_supnorm(&sys, &f, 10_000, &grid, None).unwrap();
        assert!((g.value - 1.0).abs() < 1e-3, "gauge = {}", g.value);
        // The budget for a Lipschitz observable on an isometry is c * r.
        let budget = g.tolerance_budget.unwrap();
        let expect = 2.0 * std::f64::consts::PI / (2.0 * 4096.0);
        assert!((budget - expect).abs() < 1e-12);
    }

    #[test]
    fn gauge_of_doubling_peak_is_exact_at_the_fixed_point() {
        // Gamma(1 + cos) = 2, attained by the point mass at the fixed point
        // 0; the grid contains 0 and its orbit is constant, so the estimate
        // is exact.
        let sys = DynamicalSystem::doubling();
        let grid = eval_grid(&sys, 4096).unwrap();
        let f = one_plus_cos();
        let g = gauge_supnorm(&sys, &f, 10_000, &grid, None).unwrap();
        assert_eq!(g.value, 2.0);
    }

    #[test]
    fn gauge_rejects_signed_and_complex_inputs() {
        let sys = DynamicalSystem::rotation(GOLDEN);
        let grid = eval_grid(&sys, 64).unwrap();
        match gauge_supnorm(&sys, &Observable::cosine(0, 1), 10, &grid, None) {
            Err(Error::NegativeObservable { min, .. }) => assert!(min < -0.9),
            other => panic!("expected NegativeObservable, got {other:?}"),
        }
        match gauge_supnorm(&sys, &Observable::character(0, 1), 10, &grid, None) {
            Err(Error::ComplexObservable { .. }) => {}
            other => panic!("expected ComplexObservable, got {other:?}"),
        }
    }

    #[test]
    fn orbit_oracle_matches_hand_enumeration_on_doubling() {
        // Periods 1 and 2: fixed point 0 (mean f(0) = 2) and the 2-cycle
        // {1/3, 2/3} with mean 1 + (cos(2pi/3) + cos(4pi/3))/2 = 1/2.
        let sys = DynamicalSystem::doubling();
        let f = one_plus_cos();
        let oracle = gauge_orbit_oracle(&sys, &f, 2).unwrap();
        assert_eq!(oracle.max_mean, 2.0);
        assert!((oracle.min_mean - 0.5).abs() < 1e-15, "{}", oracle.min_mean);
        // Longer scan only widens the bracket toward [integral-min, 2].
        let deep = gauge_orbit_oracle(&sys, &f, 10).unwrap();
        assert!(deep.max_mean >= oracle.max_mean);
        assert!(deep.min_mean <= oracle.min_mean);
        assert_eq!(deep.max_mean, 2.0);
    }

    #[test]
    fn orbit_oracle_on_shift_brackets_cylinder_frequencies() {
        // Orbit means of cyl(0, 1) are the symbol frequencies: min 0 on the
        // all-0 word, max 1 on the all-1 word.
        let sys = DynamicalSystem::shift(2).unwrap();
        let f = Observable::cylinder(0, 1);
        let oracle = gauge_orbit_oracle(&sys, &f, 6).unwrap();
        assert_eq!(oracle.max_mean, 1.0);
        assert_eq!(oracle.min_mean, 0.0);
    }

    #[test]
    fn orbit_oracle_rejects_rotations() {
        let sys = DynamicalSystem::rotation(GOLDEN);
        match gauge_orbit_oracle(&sys, &one_plus_cos(), 5) {
            Err(Error::UnsupportedOracle) => {}
            other => panic!("expected UnsupportedOracle, got {other:?}"),
        }
    }

    #[test]
    fn catalog_invariance_defects_are_tiny() {
        let sys = DynamicalSystem::doubling();
        let cat = InvariantMeasureCatalog::for_system(&sys, 512, 4).unwrap();
        assert!(cat.entries().len() > 3);
        let f = one_plus_cos();
        for (name, defect) in cat.verify_invariance(&sys, &f).unwrap() {
            assert!(defect < 1e-9, "{name}: defect {defect}");
        }
        // Catalog lower bound reaches the true gauge via the fixed point.
        let (name, best) = cat.best_mean(&f).unwrap();
        assert_eq!(best, 2.0, "witness {name}");

        let shift = DynamicalSystem::shift(2).unwrap();
        let cat = InvariantMeasureCatalog::for_system(&shift, 10, 4).unwrap();
        let f = Observable::cylinder(0, 1);
        for (name, defect) in cat.verify_invariance(&shift, &f).unwrap() {
            assert!(defect < 1e-12, "{name}: defect {defect}");
        }
    }

    #[test]
    fn catalog_spread_is_bitwise_offset_invariant() {
        let sys = DynamicalSystem::doubling();
        let cat = InvariantMeasureCatalog::for_system(&sys, 256, 5).unwrap();
        let f = Observable::cosine(0, 1);
        let g = f.offset_by(5.0);
        let (s1, _, _) = cat.kernel_mean_spread(&f).unwrap();
        let (s2, _, _) = cat.kernel_mean_spread(&g).unwrap();
        assert_eq!(s1.to_bits(), s2.to_bits());
        assert!(s1 > 1.0); // delta_0 mean 1 vs cycle means below 0.
    }

    #[test]
    fn herman_spread_vanishes_for_unique_ergodicity() {
        let sys = DynamicalSystem::rotation(GOLDEN);
        let grid = eval_grid(&sys, 4096).unwrap();
        let cat = InvariantMeasureCatalog::for_system(&sys, 4096, 1).unwrap();
        let f = one_plus_cos();
        let v = herman_check(&sys, &f, 10_000, &grid, Some(&cat), 1e-3).unwrap();
        assert!(v.passes, "spread = {}", v.average_spread);
        // Spread is bitwise invariant under additive shifts.
        let v2 = herman_check(&sys, &f.offset_by(5.0), 10_000, &grid, Some(&cat), 1e-3).unwrap();
        assert_eq!(v.average_spread.to_bits(), v2.average_spread.to_bits());
    }

    #[test]
    fn herman_spread_detects_multiple_means_on_doubling() {
        let sys = DynamicalSystem::doubling();
        let grid = eval_grid(&sys, 1024).unwrap();
        let cat = InvariantMeasureCatalog::for_system(&sys, 1024, 3).unwrap();
        let f = one_plus_cos();
        // Catalog spread alone refutes: delta_0 vs the 2-cycle differ by 1.5.
        let v = herman_check(&sys, &f, 50, &grid, Some(&cat), 1e-3).unwrap();
        assert!(!v.passes);
        assert!(v.catalog_spread.unwrap() > 1.0);
    }

    #[test]
    fn ue_probe_is_plausible_for_the_golden_rotation() {
        let sys = DynamicalSystem::rotation(GOLDEN);
        let grid = eval_grid(&sys, 4096).unwrap();
        let report = unique_ergodicity_probe(&sys, 4000, &grid, 0.01, 0.1, 8).unwrap();
        assert_eq!(report.verdict, UeVerdict::Plausible, "{report:?}");
        assert!(report.max_gap <= 0.01, "max gap {}", report.max_gap);
        assert!(report.oracle_refutation.is_none());
    }

    #[test]
    fn ue_probe_refutes_doubling_and_shift_exactly() {
        let sys = DynamicalSystem::doubling();
        let grid = eval_grid(&sys, 512).unwrap();
        let report = unique_ergodicity_probe(&sys, 40, &grid, 0.01, 0.1, 6).unwrap();
        assert_eq!(report.verdict, UeVerdict::Refuted);
        let (_, spread) = report.oracle_refutation.unwrap();
        assert!(spread >= 1.0, "spread {spread}");

        let sys = DynamicalSystem::shift(2).unwrap();
        let grid = eval_grid(&sys, 8).unwrap();
        let report = unique_ergodicity_probe(&sys, 64, &grid, 0.01, 0.1, 6).unwrap();
        assert_eq!(report.verdict, UeVerdict::Refuted);
    }

    #[test]
    fn dirichlet_path_agrees_with_direct_summation() {
        let sys = DynamicalSystem::rotation(GOLDEN);
        let f = Observable::trig(
            0,
            &[
                (1, Complex64::new(0.4, -0.2)),
                (3, Complex64::new(-0.1, 0.7)),
            ],
        );
        let pts: Vec<Point> = (0..7).map(|i| Point::circle(i as f64 / 7.0)).collect();
        let k = 523;
        let fast = kernel_averages(&sys, &f, k, &pts).unwrap();
        let f_set = FolnerSchedule::Interval.set(k).unwrap();
        for (p, v) in pts.iter().zip(fast) {
            let direct = avg_temporal(&sys, &f_set, &f, p).unwrap();
            assert!((v - direct).norm() < 1e-11, "{v} vs {direct}");
        }
    }

    #[test]
    fn shift_period_factoring_agrees_with_direct_summation() {
        let sys = DynamicalSystem::shift(2).unwrap();
        let f = Observable::linear_combination(&[
            (Complex64::new(1.0, 0.0), Observable::cylinder(0, 1)),
            (Complex64::new(0.5, 0.0), Observable::cylinder(2, 0)),
        ]);
        let pts = vec![
            Point::word(&[0, 1, 1]).unwrap(),
            Point::word(&[1, 0, 1, 1, 0]).unwrap(),
            Point::word(&[0]).unwrap(),
        ];
        let k = 137;
        let fast = kernel_averages(&sys, &f, k, &pts).unwrap();
        let f_set = FolnerSchedule::Interval.set(k).unwrap();
        for (p, v) in pts.iter().zip(fast) {
            let direct = avg_temporal(&sys, &f_set, &f, p).unwrap();
            assert!((v - direct).norm() < 1e-12);
        }
    }

    #[test]
    fn doubling_collapse_tail_agrees_with_direct_summation() {
        let sys = DynamicalSystem::doubling();
        let f = Observable::trig(0, &[(1, Complex64::new(0.8, 0.1))]);
        let pts = vec![
            Point::circle(0.0),
            Point::circle(0.375),
            Point::circle(0.123456789),
        ];
        let k = 300;
        let fast = kernel_averages(&sys, &f, k, &pts).unwrap();
        let f_set = FolnerSchedule::Interval.set(k).unwrap();
        for (p, v) in pts.iter().zip(fast) {
            let direct = avg_temporal(&sys, &f_set, &f, p).unwrap();
            assert!((v - direct).norm() < 1e-11);
        }
    }

    #[test]
    fn grids_cover_their_spaces() {
        let sys = DynamicalSystem::rotation(0.1);
        let grid = eval_grid(&sys, 100).unwrap();
        assert_eq!(grid.points().len(), 100);
        assert_eq!(grid.covering_radius(), 0.005);
        let shift = DynamicalSystem::shift(3).unwrap();
        let grid = eval_grid(&shift, 4).unwrap();
        assert_eq!(grid.points().len(), 81);
        assert_eq!(grid.covering_radius(), 0.0625);
        let toral = DynamicalSystem::toral_translation(&[0.3, 0.7]).unwrap();
        let grid = eval_grid(&toral, 32).unwrap();
        assert_eq!(grid.points().len(), 1024);
    }

    #[test]
    fn least_rotation_representatives() {
        assert!(is_least_rotation(&[0, 1, 1]));
        assert!(!is_least_rotation(&[1, 0, 1]));
        assert!(is_least_rotation(&[0, 0, 1]));
        assert!(is_least_rotation(&[0]));
        assert!(is_least_rotation(&[0, 0])); // period-1 repeated; still least
    }
}
