//! Numerical laboratory for temporo-spatial differentiation of ergodic
//! averages.
//!
//! The library composes two averaging procedures over a measure-preserving
//! system `(X, p, mu, T)`:
//!
//! * **temporal**: `Avg_F f(x) = (1/|F|) sum_{g in F} f(T_g x)` along a
//!   Følner schedule `F_1, F_2, ...` of finite index sets, and
//! * **spatial**: `alpha_C(f) = (1/mu(C)) integral_C f dmu` over regions
//!   `C_1 ⊇ C_2 ⊇ ...` shrinking toward a base point,
//!
//! and studies the diagonal sequence `k -> alpha_{C_k}(Avg_{F_k} f)`: when it
//! converges (quantitatively, from Hölder data of the observable and
//! distortion certificates of the system), how fast, and how to build
//! divergent examples when the geometry permits them.
//!
//! Modules:
//!
//! * [`dynamics`] — model systems (rotations, toral translations, doubling,
//!   full shifts) acting by `Z^d`, with metrics and distortion certificates;
//! * [`averaging`] — Følner schedules, observables with certified Hölder
//!   data, weighted and multiple ergodic averages;
//! * [`measure`] — finite measure models (quadrature grids, cylinder
//!   enumerations, Monte Carlo clouds), regions, conditional averages, and
//!   the sup-over-regions reduction;
//! * [`gauge`] — ergodic maximization: the gauge `sup_mu integral f dmu`
//!   over invariant measures via uniform sup-norms of long averages, with
//!   orbit-based oracles and unique-ergodicity probes;
//! * [`tsd`] — the composed sequence: traces, quantitative bounds, decay
//!   diagnostics, and divergence constructions.
//!
//! All reductions over floating-point data run in a fixed ascending order
//! with compensated (Kahan) summation, so every public computation is
//! reproducible bit for bit across runs and thread counts.

pub mod averaging;
pub mod dynamics;
pub mod error;
pub mod gauge;
pub mod kahan;
pub mod measure;
pub mod tsd;

pub use averaging::{
    avg_multiple, avg_temporal, avg_weighted, folner_defect, FolnerSchedule, FolnerSet,
    HolderData, IndexSequence, Modulus, MultipleAverageSpec, Observable, ObservableKind,
    WeightSequence, WeightSpec,
};
pub use dynamics::{
    DistortionProfile, DynamicalSystem, GroupElement, HolderProfile, Point, ReferenceMeasure,
    SystemKind,
};
pub use error::{Error, Result};
pub use kahan::{sum_complex, sum_f64, KahanComplex, KahanSum};
pub use measure::{
    check_distortion, measure_to_one_bound, quadrature_tolerance, sup_alpha_over_regions,
    MeasureModel, RadiusSchedule, Region, RegionCatalog, SamplingMode, SpatialFamily, SupAlpha,
};
pub use gauge::{
    eval_grid, gauge_orbit_oracle, gauge_supnorm, herman_check, unique_ergodicity_probe,
    EvalGrid, GaugeEstimate, HermanVerdict, InvariantMeasureCatalog, OrbitOracle, UeReport,
    UeVerdict,
};
pub use tsd::{
    build_counterexample, decay_check, multiple_tsd, quantitative_bound, random_tsd_experiment,
    run_tsd, run_tsd_at, trace_counterexample, CounterexamplePlan, DecayReport,
    ExperimentSummary, PlanStep, PointOutcome, RefinedRegion, StepKind, TsdEntry, TsdTrace,
};
