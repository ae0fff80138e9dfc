//! Continuity moduli and the tolerance bookkeeping of the stagewise
//! selection pipeline.
//!
//! A modulus maps a tolerance to a smaller one and never exceeds its
//! argument; tables interpolate between knots on log-log axes, which keeps
//! interpolated values below the diagonal whenever the knots are.  The
//! level chains turn one target tolerance into a tolerance per skeleton
//! level, and [`cauchy_refine`] runs a stage loop whose per-stage drifts
//! are measured and must shrink geometrically.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by modulus construction.
#[derive(Debug, Error)]
pub enum ModuliError {
    /// A linear modulus needs a slope in (0, 1].
    #[error("modulus slope {0} is not in (0, 1]")]
    BadSlope(f64),
    /// A table modulus failed validation.
    #[error("modulus table: {0}")]
    BadTable(String),
}

/// A modulus of continuity-style tolerance map: nondecreasing, positive,
/// and at most its argument.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modulus {
    /// `eps -> slope * eps` with `0 < slope <= 1`.
    Linear { slope: f64 },
    /// Piecewise log-log interpolation through `(eps, delta)` knots;
    /// scales linearly below the first knot and is constant above the
    /// last.
    Table { knots: Vec<(f64, f64)> },
}

impl Modulus {
    /// A linear modulus with the given slope.
    pub fn linear(slope: f64) -> Result<Modulus, ModuliError> {
        if !(slope > 0.0 && slope <= 1.0) {
            return Err(ModuliError::BadSlope(slope));
        }
        Ok(Modulus::Linear { slope })
    }

    /// A table modulus through the given knots.
    pub fn table(knots: Vec<(f64, f64)>) -> Result<Modulus, ModuliError> {
        if knots.is_empty() {
            return Err(ModuliError::BadTable("no knots".into()));
        }
        for &(e, d) in &knots {
            if !(e > 0.0 && d > 0.0) || !e.is_finite() || !d.is_finite() {
                return Err(ModuliError::BadTable(format!(
                    "knot ({e}, {d}) is not positive and finite"
                )));
            }
            if d > e {
                return Err(ModuliError::BadTable(format!(
                    "knot ({e}, {d}) lies above the diagonal"
                )));
            }
        }
        for pair in knots.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(ModuliError::BadTable(
                    "knot tolerances must increase strictly".into(),
                ));
            }
            if pair[1].1 < pair[0].1 {
                return Err(ModuliError::BadTable(
                    "knot values must be nondecreasing".into(),
                ));
            }
        }
        Ok(Modulus::Table { knots })
    }

    /// Evaluates the modulus at a positive tolerance.
    pub fn eval(&self, eps: f64) -> f64 {
        assert!(eps > 0.0, "modulus evaluated at nonpositive tolerance");
        match self {
            Modulus::Linear { slope } => slope * eps,
            Modulus::Table { knots } => {
                let (e0, d0) = knots[0];
                if eps <= e0 {
                    return d0 * (eps / e0);
                }
                let (el, dl) = *knots.last().expect("validated nonempty");
                if eps >= el {
                    return dl;
                }
                let i = knots.partition_point(|&(e, _)| e <= eps) - 1;
                let (ea, da) = knots[i];
                let (eb, db) = knots[i + 1];
                let s = (eps.ln() - ea.ln()) / (eb.ln() - ea.ln());
                (da.ln() * (1.0 - s) + db.ln() * s).exp()
            }
        }
    }

    /// The n-fold iterate at `eps`.
    pub fn iterate(&self, n: usize, eps: f64) -> f64 {
        (0..n).fold(eps, |e, _| self.eval(e))
    }
}

/// Half the modulus value: the one-sided nearness tolerance derived from
/// a closeness tolerance.
pub fn eta(delta: &Modulus, eps: f64) -> f64 {
    0.5 * delta.eval(eps)
}

/// The combined tolerance for staying both `eps`-controlled and within
/// `mu` of the previous stage.
pub fn lambda(delta: &Modulus, eps: f64, mu: f64) -> f64 {
    delta.eval(eta(delta, eps).min(mu))
}

/// Per-level tolerances produced by [`near_tolerance_chain`]: index `k`
/// holds the tolerance used when extending over the k-skeleton.
#[derive(Clone, Debug)]
pub struct LevelChains {
    pub eta: Vec<f64>,
    pub lambda: Vec<f64>,
}

/// Descends the target tolerances through the skeleton levels: the top
/// level gets `eps` and `mu`, and each level below tightens them through
/// that level's modulus.  `deltas[k]` is the modulus for level `k`; the
/// returned vectors have length `deltas.len() + 1`.
pub fn near_tolerance_chain(deltas: &[Modulus], eps: f64, mu: f64) -> LevelChains {
    let top = deltas.len();
    let mut etas = vec![0.0; top + 1];
    let mut lambdas = vec![0.0; top + 1];
    etas[top] = eps;
    lambdas[top] = mu;
    for k in (0..top).rev() {
        etas[k] = eta(&deltas[k], etas[k + 1]);
        lambdas[k] = deltas[k].eval(etas[k].min(lambdas[k + 1]));
    }
    LevelChains {
        eta: etas,
        lambda: lambdas,
    }
}

/// The accuracy budget to request from a full stage so that the stage's
/// result stays within `eps` overall: the bottom of the nearness chain
/// run at half the target.
pub fn near_stage_budget(deltas: &[Modulus], eps: f64) -> f64 {
    near_tolerance_chain(deltas, 0.5 * eps, f64::INFINITY).eta[0]
}

/// Descends a plain tolerance through the level moduli: the top level
/// gets `eps`, each level below is that level's modulus of the one above.
/// The returned vector has length `deltas.len() + 1`.
pub fn eps_tolerance_chain(deltas: &[Modulus], eps: f64) -> Vec<f64> {
    let top = deltas.len();
    let mut gammas = vec![0.0; top + 1];
    gammas[top] = eps;
    for k in (0..top).rev() {
        gammas[k] = deltas[k].eval(gammas[k + 1]);
    }
    gammas
}

/// One executed stage of [`cauchy_refine`].
#[derive(Clone, Debug, Serialize)]
pub struct CauchyStage {
    /// 1-based stage index.
    pub stage: usize,
    /// The nearness bound the stage had to respect.
    pub near: f64,
    /// The measured distance to the previous stage's output.
    pub drift: f64,
}

/// Failure of the stage loop.
#[derive(Debug, Error)]
pub enum CauchyError<E> {
    /// The stage constructor failed.
    #[error("stage {stage} failed: {source}")]
    Inner { stage: usize, source: E },
    /// A stage moved farther than its nearness bound allows.
    #[error("stage {stage} drifted {drift}, allowed {bound}")]
    Drift {
        stage: usize,
        drift: f64,
        bound: f64,
    },
}

/// Runs the geometric stage loop: stage `n` replaces the current object
/// by one built to accuracy `eps / 2^(n+1)` while moving less than
/// `eps / 2^n`, until that bound drops below `tol`.  Each stage's drift
/// is measured with `dist` and checked against its bound, so the final
/// object is within `2 tol` of every later stage a finer run would add.
///
/// `inner` receives the current object, the accuracy to build to, and the
/// nearness bound to respect.
pub fn cauchy_refine<S, E>(
    start: S,
    eps: f64,
    tol: f64,
    dist: impl Fn(&S, &S) -> f64,
    mut inner: impl FnMut(&S, f64, f64) -> Result<S, E>,
) -> Result<(S, Vec<CauchyStage>), CauchyError<E>> {
    assert!(eps > 0.0 && tol > 0.0);
    let mut current = start;
    let mut stages = Vec::new();
    let mut n = 1i32;
    while 0.5f64.powi(n) * eps >= tol {
        let near = 0.5f64.powi(n) * eps;
        let build_to = 0.5 * near;
        let next = inner(&current, build_to, near).map_err(|source| CauchyError::Inner {
            stage: n as usize,
            source,
        })?;
        let drift = dist(&next, &current);
        if drift >= near {
            return Err(CauchyError::Drift {
                stage: n as usize,
                drift,
                bound: near,
            });
        }
        stages.push(CauchyStage {
            stage: n as usize,
            near,
            drift,
        });
        current = next;
        n += 1;
    }
    Ok((current, stages))
}

/// Number of inner stages [`cauchy_refine`] will run for the given
/// tolerances.
pub fn cauchy_stage_count(eps: f64, tol: f64) -> usize {
    let mut n = 1i32;
    let mut count = 0;
    while 0.5f64.powi(n) * eps >= tol {
        count += 1;
        n += 1;
    }
    count
}
