//! Taylor-linearized least-squares trilateration.
//!
//! Ranges come from the propagation model; the position is refined by
//! Gauss-Newton on `Σ (d_i − ‖AP_i − x‖)²`. Linearizing around the current
//! estimate gives `Δd = H ΔX` where the rows of `H` point from the estimate
//! toward the APs. Moving the estimate by `δ` changes `d̂_i` by `−b_i·δ`,
//! so the step is `δ = −(HᵀH)⁻¹ Hᵀ Δd`.

use nalgebra::{DMatrix, DVector};

use crate::dop::{self, DopAssessment, DopConfig};
use crate::error::{Error, Result};
use crate::propagation::PropagationModel;
use crate::radio::{AccessPoint, ApId, Dimension, Environment, Position, RssScan};

/// Rows closer than this to the estimate are skipped for one iteration.
const COINCIDENT_RANGE: f64 = 1e-9;
const MAX_HALVINGS: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialGuess {
    /// Centroid of the qualified APs, z included.
    CentroidOfAps,
    Explicit(Position),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop once a step is shorter than this, meters.
    pub step_tolerance: f64,
    pub initial_guess: InitialGuess,
    pub model: PropagationModel,
    pub dop: DopConfig,
}

impl SolverConfig {
    pub fn new(model: PropagationModel) -> Self {
        SolverConfig {
            max_iterations: 50,
            step_tolerance: 1e-6,
            initial_guess: InitialGuess::CentroidOfAps,
            model,
            dop: DopConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::validation("max_iterations", "must be at least 1"));
        }
        if !(self.step_tolerance > 0.0) {
            return Err(Error::validation("step_tolerance", "must be strictly positive"));
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::new(PropagationModel::friis())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionFix {
    pub position: Position,
    /// Euclidean norm of the range residuals at `position`, meters.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// DOP evaluated at `position`.
    pub assessment: DopAssessment,
}

/// Range to every qualified AP in the scan, ordered by AP id.
pub fn ranges_from_scan(env: &Environment, scan: &RssScan, model: &PropagationModel) -> Result<Vec<(ApId, f64)>> {
    let (_, qualified, _) = dop::census(env, scan)?;
    if qualified.is_empty() {
        return Err(Error::InsufficientObservations {
            need: env.dimension.min_aps(),
            have: 0,
        });
    }
    qualified
        .into_iter()
        .map(|id| {
            let ap = env.ap(&id).expect("qualified AP is in the environment");
            let p = scan.reading(&id).unwrap_or(0.0);
            let d = model.invert_distance(ap, &env.receiver, p)?;
            Ok((id, d))
        })
        .collect()
}

struct Problem<'a> {
    anchors: Vec<&'a AccessPoint>,
    ranges: Vec<f64>,
    dim: Dimension,
}

impl Problem<'_> {
    fn cost(&self, x: &Position) -> f64 {
        self.anchors
            .iter()
            .zip(&self.ranges)
            .map(|(ap, d)| {
                let e = d - (ap.position - x).norm();
                e * e
            })
            .sum()
    }

    /// `H` rows and `Δd` at `x`, skipping APs that coincide with `x`.
    fn linearize(&self, x: &Position) -> (DMatrix<f64>, DVector<f64>) {
        let k = self.dim.count();
        let mut rows = Vec::with_capacity(self.anchors.len() * k);
        let mut delta = Vec::with_capacity(self.anchors.len());
        for (ap, d) in self.anchors.iter().zip(&self.ranges) {
            let diff = ap.position - x;
            let r = diff.norm();
            if r < COINCIDENT_RANGE {
                continue;
            }
            rows.extend((0..k).map(|j| diff[j] / r));
            delta.push(d - r);
        }
        let n = delta.len();
        (DMatrix::from_row_slice(n, k, &rows), DVector::from_vec(delta))
    }

    fn apply(&self, x: &Position, step: &DVector<f64>, scale: f64) -> Position {
        let mut out = *x;
        for j in 0..self.dim.count() {
            out[j] += scale * step[j];
        }
        out
    }
}

struct Outcome {
    position: Position,
    cost: f64,
    iterations: usize,
    converged: bool,
}

fn gauss_newton(problem: &Problem<'_>, start: Position, cfg: &SolverConfig) -> Result<Outcome> {
    let mut x = start;
    let mut cost = problem.cost(&x);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let (h, delta) = problem.linearize(&x);
        if h.nrows() < problem.dim.count() {
            return Err(Error::SingularGeometry);
        }
        let normal = h.transpose() * &h;
        if dop::is_singular(&normal) {
            return Err(Error::SingularGeometry);
        }
        let inv = normal.try_inverse().ok_or(Error::SingularGeometry)?;
        let step = -(inv * h.transpose() * delta);
        let step_norm = step.norm();

        if step_norm < cfg.step_tolerance {
            let candidate = problem.apply(&x, &step, 1.0);
            let c = problem.cost(&candidate);
            if c <= cost {
                x = candidate;
                cost = c;
            }
            converged = true;
            break;
        }

        // halve until the cost stops increasing
        let mut accepted = None;
        let mut scale = 1.0;
        for _ in 0..=MAX_HALVINGS {
            let candidate = problem.apply(&x, &step, scale);
            let c = problem.cost(&candidate);
            if c <= cost {
                accepted = Some((candidate, c, scale));
                break;
            }
            scale *= 0.5;
        }
        match accepted {
            Some((candidate, c, scale)) => {
                x = candidate;
                cost = c;
                if scale * step_norm < cfg.step_tolerance {
                    converged = true;
                    break;
                }
            }
            None => break,
        }
    }
    Ok(Outcome {
        position: x,
        cost,
        iterations,
        converged,
    })
}

fn assess_at(env: &Environment, scan: &RssScan, at: &Position, cfg: &DopConfig) -> Result<DopAssessment> {
    match dop::assess(env, scan, at, cfg) {
        Err(Error::DegenerateRange(_)) => {
            let (visible, qualified, excluded) = dop::census(env, scan)?;
            Ok(DopAssessment::infinite(visible, qualified, excluded, env.dimension))
        }
        other => other,
    }
}

fn solve_from(env: &Environment, scan: &RssScan, cfg: &SolverConfig, start: Option<Position>) -> Result<PositionFix> {
    cfg.validate()?;
    let dim = env.dimension;
    let ranges = ranges_from_scan(env, scan, &cfg.model)?;
    if ranges.len() < dim.min_aps() {
        return Err(Error::InsufficientObservations {
            need: dim.min_aps(),
            have: ranges.len(),
        });
    }
    let ids: Vec<ApId> = ranges.iter().map(|(id, _)| id.clone()).collect();
    let problem = Problem {
        anchors: ids
            .iter()
            .map(|id| env.ap(id).expect("ranged AP is in the environment"))
            .collect(),
        ranges: ranges.iter().map(|(_, d)| *d).collect(),
        dim,
    };
    let start = start.unwrap_or_else(|| match cfg.initial_guess {
        InitialGuess::CentroidOfAps => env.centroid(&ids),
        InitialGuess::Explicit(p) => p,
    });
    let out = gauss_newton(&problem, start, cfg)?;
    let assessment = assess_at(env, scan, &out.position, &cfg.dop)?;
    Ok(PositionFix {
        position: out.position,
        residual_norm: out.cost.sqrt(),
        iterations: out.iterations,
        converged: out.converged,
        assessment,
    })
}

/// Estimates the position for one scan.
pub fn solve(env: &Environment, scan: &RssScan, cfg: &SolverConfig) -> Result<PositionFix> {
    solve_from(env, scan, cfg, None)
}

/// Fix carried over from `fallback` when a scan cannot be solved.
pub fn failed_fix(env: &Environment, scan: &RssScan, cfg: &SolverConfig, fallback: Option<Position>) -> PositionFix {
    let census = dop::census(env, scan).ok();
    let position = fallback.unwrap_or_else(|| match &census {
        Some((_, q, _)) => env.centroid(q),
        None => env.centroid(&[]),
    });
    let residual_norm = ranges_from_scan(env, scan, &cfg.model)
        .map(|rs| {
            rs.iter()
                .map(|(id, d)| {
                    let ap = env.ap(id).expect("ranged AP is in the environment");
                    (d - (ap.position - position).norm()).powi(2)
                })
                .sum::<f64>()
                .sqrt()
        })
        .unwrap_or(0.0);
    let (visible, qualified, excluded) = census.unwrap_or_default();
    PositionFix {
        position,
        residual_norm,
        iterations: 0,
        converged: false,
        assessment: DopAssessment::infinite(visible, qualified, excluded, env.dimension),
    }
}

/// Solves a time-ordered sequence, warm-starting each scan from the previous
/// fix. Scans that cannot be solved keep the previous position with an
/// infinite DOP.
pub fn solve_trajectory(env: &Environment, scans: &[RssScan], cfg: &SolverConfig) -> Vec<PositionFix> {
    let mut fixes: Vec<PositionFix> = Vec::with_capacity(scans.len());
    for scan in scans {
        let prev = fixes.last().map(|f| f.position);
        let fix = match solve_from(env, scan, cfg, prev) {
            Ok(fix) => fix,
            Err(e) => {
                log::debug!("scan at t={} not solved: {e}", scan.timestamp);
                failed_fix(env, scan, cfg, prev)
            }
        };
        fixes.push(fix);
    }
    fixes
}
