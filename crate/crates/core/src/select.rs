//! End-to-end selection drivers.
//!
//! These wire the stepwise engine to the tolerance chains: refine a guide
//! into a selection sitting on the target ([`select_near`]), build an
//! ε-selection of a graded family ([`select_eps`]), and chain the two so a
//! single mapping goes from nothing to a verified selection
//! ([`michael_select`]).

use std::sync::Arc;

use thiserror::Error;

use crate::covers::Domain;
use crate::engine::{guide_balls, run_pipeline, Assembled, EngineError, LiftTrace, Tolerances};
use crate::fillers::SphereFiller;
use crate::geom::{self, Point};
use crate::moduli::{
    cauchy_refine, eps_tolerance_chain, near_stage_budget, near_tolerance_chain, CauchyError,
    CauchyStage, Modulus,
};
use crate::regions::{is_eps_selection, RegionError, SetValuedMap};

/// Fraction of each allowance a stage actually spends.  The slack keeps
/// measured drifts strictly inside their bounds and leaves the next stage
/// room to start.
const STAGE_MARGIN: f64 = 0.9;

/// Failure of a driver run.
#[derive(Debug, Error)]
pub enum DriverError {
    /// The guide is too far from the target for the first stage to start.
    #[error("guide sits {dist} from the target at point {point}, the stage budget is {needed}")]
    GuideTooFar {
        point: usize,
        dist: f64,
        needed: f64,
    },
    /// A refinement stage could not be built.
    #[error("stage {stage}: {source}")]
    Stage {
        stage: usize,
        source: Box<DriverError>,
    },
    /// A stage moved farther than its nearness bound allows.
    #[error("stage {stage} drifted {drift}, allowed {bound}")]
    Drift {
        stage: usize,
        drift: f64,
        bound: f64,
    },
    /// Level mappings and moduli that do not line up.
    #[error("expected {expected} level mappings, got {got}")]
    LevelCount { expected: usize, got: usize },
    /// The finished map misses the requested closeness.
    #[error("selection sits {dist} from the target at point {point}, allowed {eps}")]
    NotWithinEps { point: usize, dist: f64, eps: f64 },
    /// A named phase of a combined run failed.
    #[error("{phase}: {source}")]
    Phase {
        phase: &'static str,
        source: Box<DriverError>,
    },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Region(#[from] RegionError),
}

impl From<CauchyError<DriverError>> for DriverError {
    fn from(e: CauchyError<DriverError>) -> Self {
        match e {
            CauchyError::Inner { stage, source } => DriverError::Stage {
                stage,
                source: Box::new(source),
            },
            CauchyError::Drift {
                stage,
                drift,
                bound,
            } => DriverError::Drift {
                stage,
                drift,
                bound,
            },
        }
    }
}

fn sup_dist(a: &[Point], b: &[Point]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| geom::dist(p, q))
        .fold(0.0, f64::max)
}

fn max_neighbor_jump(domain: &Domain, values: &[Point]) -> f64 {
    let mut jump = 0.0f64;
    for x in 0..domain.len() {
        for z in domain.neighbors(x) {
            if z > x {
                jump = jump.max(geom::dist(&values[x], &values[z]));
            }
        }
    }
    jump
}

/// Output of [`select_near`].
#[derive(Clone, Debug)]
pub struct NearSelection {
    /// One value per grid point.
    pub values: Vec<Point>,
    /// Stage-by-stage drift measurements.
    pub stages: Vec<CauchyStage>,
    /// Lift audit trails of the final stage.
    pub traces: Vec<LiftTrace>,
    /// Continuity measurements of the final stage's assembly; absent when
    /// the tolerance was loose enough that no stage had to run.
    pub continuity: Option<Continuity>,
    /// Sup distance from the result to the starting guide.
    pub guide_gap: f64,
    /// Sup distance from the result to the target's values.
    pub membership: f64,
}

/// Adjacent-sample continuity measurements of an assembled selection.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct Continuity {
    /// Certified budget for adjacent-value gaps.
    pub bound: f64,
    /// Largest gap actually measured between adjacent grid points.
    pub max_jump: f64,
}

impl Continuity {
    fn of(a: &Assembled) -> Self {
        Continuity {
            bound: a.continuity_bound,
            max_jump: a.max_jump,
        }
    }
}

/// Refines a guide into a selection of `phi` without straying more than
/// `eps` from it.
///
/// Every stage rebuilds the current iterate inside a tube around itself
/// half as wide as the last, intersected with a matching neighborhood of
/// the target, so the iterates are uniformly Cauchy and their distance to
/// the target's values shrinks geometrically; the loop stops once the
/// tube drops under `tol`.  The guide must already be within the stage
/// budget of the target (checked), which is what [`select_eps`] at that
/// budget produces.
pub fn select_near(
    domain: &Arc<Domain>,
    phi: &SetValuedMap,
    guide: &[Point],
    eps: f64,
    delta: &Modulus,
    tol: f64,
    filler: &dyn SphereFiller,
    tols: &Tolerances,
) -> Result<NearSelection, DriverError> {
    assert!(eps > 0.0 && tol > 0.0, "positive tolerances");
    let n = domain.len();
    if guide.len() != n {
        return Err(EngineError::LengthMismatch(guide.len(), n).into());
    }
    if phi.len() != n {
        return Err(EngineError::LengthMismatch(phi.len(), n).into());
    }
    let dim = domain.dim();
    let deltas = vec![delta.clone(); dim];

    let budget = near_stage_budget(&deltas, eps);
    if let Err(v) = is_eps_selection(guide, phi, budget) {
        return Err(DriverError::GuideTooFar {
            point: v.cell,
            dist: v.dist,
            needed: budget,
        });
    }

    let mut last_traces: Vec<LiftTrace> = Vec::new();
    let mut last_continuity: Option<Continuity> = None;
    let (values, stages) = cauchy_refine(
        guide.to_vec(),
        eps,
        tol,
        |a: &Vec<Point>, b: &Vec<Point>| sup_dist(a, b),
        |current: &Vec<Point>, build_to: f64, near: f64| -> Result<Vec<Point>, DriverError> {
            // The next stage needs this one's output within its own
            // starting budget, so the target tube tightens to that.
            let mu = near_stage_budget(&deltas, 2.0 * build_to);
            let chain = near_tolerance_chain(&deltas, STAGE_MARGIN * near, mu);
            let mut phis = Vec::with_capacity(dim + 1);
            for k in 0..=dim {
                let around = guide_balls(current, chain.eta[k])?;
                phis.push(around.intersect(&phi.o_map(chain.lambda[k]))?);
            }
            // The locality budget must cover the iterate's own jumps plus
            // the stage tube on both sides.
            let stage_tols = Tolerances {
                locality: (max_neighbor_jump(domain, current)
                    + 2.0 * (chain.eta[dim] + chain.lambda[dim])
                    + 1e-6)
                    .max(tols.locality),
                membership: tols.membership,
            };
            let (assembled, traces) = run_pipeline(domain, &phis, filler, &stage_tols)?;
            last_traces = traces;
            last_continuity = Some(Continuity::of(&assembled));
            Ok(assembled.values)
        },
    )?;

    let guide_gap = sup_dist(&values, guide);
    if guide_gap >= eps {
        return Err(DriverError::NotWithinEps {
            point: 0,
            dist: guide_gap,
            eps,
        });
    }
    let membership = values
        .iter()
        .enumerate()
        .map(|(x, y)| phi.value(x).dist(y))
        .fold(0.0f64, f64::max);
    Ok(NearSelection {
        values,
        stages,
        traces: last_traces,
        continuity: last_continuity,
        guide_gap,
        membership,
    })
}

/// Output of [`select_eps`].
#[derive(Clone, Debug)]
pub struct EpsSelection {
    /// One value per grid point.
    pub values: Vec<Point>,
    /// Lift audit trails.
    pub traces: Vec<LiftTrace>,
    /// Continuity measurements of the assembly.
    pub continuity: Continuity,
    /// Sup distance from the values to the top mapping, strictly below
    /// the requested `eps`.
    pub membership: f64,
}

/// Builds an `eps`-selection of the top of a graded family of mappings.
///
/// Level `k` of the stepwise construction works inside a neighborhood of
/// `targets[k]` whose width descends from `eps` through the per-level
/// moduli, so every lift stays supported; `targets` needs one more entry
/// than `deltas`.  The result is checked to sit strictly within `eps` of
/// the top target at every grid point.
pub fn select_eps(
    domain: &Arc<Domain>,
    targets: &[SetValuedMap],
    eps: f64,
    deltas: &[Modulus],
    filler: &dyn SphereFiller,
    tols: &Tolerances,
) -> Result<EpsSelection, DriverError> {
    assert!(eps > 0.0, "positive allowance");
    if targets.len() != deltas.len() + 1 {
        return Err(DriverError::LevelCount {
            expected: deltas.len() + 1,
            got: targets.len(),
        });
    }
    let gammas = eps_tolerance_chain(deltas, STAGE_MARGIN * eps);
    let phis: Vec<SetValuedMap> = targets
        .iter()
        .zip(&gammas)
        .map(|(t, g)| t.o_map(*g))
        .collect();
    let (assembled, traces) = run_pipeline(domain, &phis, filler, tols)?;
    let top = targets.last().expect("nonempty family");
    if let Err(v) = is_eps_selection(&assembled.values, top, eps) {
        return Err(DriverError::NotWithinEps {
            point: v.cell,
            dist: v.dist,
            eps,
        });
    }
    let membership = assembled
        .values
        .iter()
        .enumerate()
        .map(|(x, y)| top.value(x).dist(y))
        .fold(0.0f64, f64::max);
    Ok(EpsSelection {
        continuity: Continuity::of(&assembled),
        values: assembled.values,
        traces,
        membership,
    })
}

/// Output of [`michael_select`].
#[derive(Clone, Debug)]
pub struct FullSelection {
    /// One value per grid point.
    pub values: Vec<Point>,
    /// The intermediate coarse selection the refinement started from.
    pub guide: Vec<Point>,
    /// Lift audit trails of the coarse phase.
    pub guide_traces: Vec<LiftTrace>,
    /// Stage-by-stage drift measurements of the refinement phase.
    pub stages: Vec<CauchyStage>,
    /// Lift audit trails of the final refinement stage.
    pub traces: Vec<LiftTrace>,
    /// Continuity measurements of the last assembly that ran.
    pub continuity: Continuity,
    /// Sup distance from the result to the intermediate selection.
    pub guide_gap: f64,
    /// Sup distance from the result to the target's values.
    pub membership: f64,
}

/// Full pipeline for a single mapping: first build a coarse selection at
/// the refinement's starting budget, then refine it onto the target.
///
/// `eps0` bounds how far the refinement may stray from the coarse phase's
/// output; `tol` is the final on-target tolerance.  Errors carry which
/// phase failed.
pub fn michael_select(
    domain: &Arc<Domain>,
    phi: &SetValuedMap,
    eps0: f64,
    delta: &Modulus,
    tol: f64,
    filler: &dyn SphereFiller,
    tols: &Tolerances,
) -> Result<FullSelection, DriverError> {
    let dim = domain.dim();
    let deltas = vec![delta.clone(); dim];
    let budget = near_stage_budget(&deltas, eps0);
    let level_targets = vec![phi.clone(); dim + 1];
    let coarse = select_eps(domain, &level_targets, budget, &deltas, filler, tols).map_err(
        |source| DriverError::Phase {
            phase: "coarse phase",
            source: Box::new(source),
        },
    )?;
    let near = select_near(domain, phi, &coarse.values, eps0, delta, tol, filler, tols).map_err(
        |source| DriverError::Phase {
            phase: "refinement phase",
            source: Box::new(source),
        },
    )?;
    Ok(FullSelection {
        values: near.values,
        guide: coarse.values,
        guide_traces: coarse.traces,
        stages: near.stages,
        traces: near.traces,
        continuity: near.continuity.unwrap_or(coarse.continuity),
        guide_gap: near.guide_gap,
        membership: near.membership,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fillers::OracleFiller;
    use crate::moduli::cauchy_stage_count;
    use crate::realization::DEFAULT_DEPTH;
    use crate::regions::Region;

    fn filler() -> OracleFiller {
        OracleFiller {
            depth: DEFAULT_DEPTH,
            bfs_step: 0.05,
            interior_tol: 1e-9,
            star_center: None,
        }
    }

    fn ball(c: f64, r: f64) -> Region {
        Region::ball(vec![c], r)
    }

    #[test]
    fn near_refinement_converges_on_a_constant_ball() {
        let domain = Domain::grid_1d(0.0, 0.05, 21);
        let phi = SetValuedMap::constant(21, ball(0.0, 1.0));
        // A wobbling guide inside the ball.
        let guide: Vec<Point> = (0..21)
            .map(|x| vec![0.2 * (x as f64 * 0.3).sin()])
            .collect();
        let delta = Modulus::linear(0.5).unwrap();
        let out = select_near(
            &domain,
            &phi,
            &guide,
            0.5,
            &delta,
            1e-3,
            &filler(),
            &Tolerances::default(),
        )
        .unwrap();
        assert_eq!(out.values.len(), 21);
        assert!(out.guide_gap < 0.5);
        assert!(out.membership <= 1e-3);
        assert_eq!(out.stages.len(), cauchy_stage_count(0.5, 1e-3));
        for s in &out.stages {
            assert!(s.drift < s.near, "stage {} drifted {}", s.stage, s.drift);
        }
    }

    #[test]
    fn near_refinement_rejects_a_far_guide() {
        let domain = Domain::grid_1d(0.0, 0.05, 11);
        let phi = SetValuedMap::constant(11, ball(0.0, 1.0));
        let guide: Vec<Point> = (0..11).map(|_| vec![9.0]).collect();
        let delta = Modulus::linear(0.5).unwrap();
        let err = select_near(
            &domain,
            &phi,
            &guide,
            0.5,
            &delta,
            1e-3,
            &filler(),
            &Tolerances::default(),
        )
        .unwrap_err();
        assert!(matches!(err, DriverError::GuideTooFar { .. }));
    }

    #[test]
    fn eps_selection_lands_inside_the_allowance() {
        let domain = Domain::grid_1d(0.0, 0.05, 21);
        let two_lobes =
            Region::union(vec![ball(-0.6, 0.7), ball(0.6, 0.7)]).unwrap();
        let phi = SetValuedMap::constant(21, two_lobes);
        let targets = vec![phi.clone(), phi.clone()];
        let deltas = vec![Modulus::linear(0.5).unwrap()];
        let out = select_eps(
            &domain,
            &targets,
            0.5,
            &deltas,
            &filler(),
            &Tolerances::default(),
        )
        .unwrap();
        assert_eq!(out.values.len(), 21);
        assert!(out.membership < 0.5);
    }

    #[test]
    fn eps_selection_checks_level_counts() {
        let domain = Domain::grid_1d(0.0, 0.05, 5);
        let phi = SetValuedMap::constant(5, ball(0.0, 1.0));
        let err = select_eps(
            &domain,
            &[phi],
            0.5,
            &[Modulus::linear(0.5).unwrap()],
            &filler(),
            &Tolerances::default(),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            DriverError::LevelCount {
                expected: 2,
                got: 1
            }
        ));
    }

    #[test]
    fn full_pipeline_settles_a_constant_convex_value() {
        let domain = Domain::grid_1d(0.0, 0.05, 21);
        let phi = SetValuedMap::constant(21, ball(3.0, 0.5));
        let delta = Modulus::linear(0.5).unwrap();
        let out = michael_select(
            &domain,
            &phi,
            2.0,
            &delta,
            1e-4,
            &filler(),
            &Tolerances::default(),
        )
        .unwrap();
        assert!(out.membership <= 1e-4);
        assert!(out.guide_gap < 2.0);
        // A constant mapping admits a constant selection.
        for v in &out.values {
            assert_eq!(v, &out.values[0]);
        }
    }
}
