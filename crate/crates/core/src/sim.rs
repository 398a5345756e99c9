//! Synthetic experiments: walk a trajectory, synthesize noisy scans, locate
//! every sample and relate the DOP to the positioning error.
//!
//! Shadowing is log-normal: each reading is the model prediction times
//! `10^(ε/10)` with `ε ~ N(0, σ²)` dB. Every sample draws from its own
//! ChaCha stream (`seed`, stream = sample index), so parallel and sequential
//! runs produce the same scans.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dop::{self, Classification};
use crate::error::{Error, Result};
use crate::propagation::PropagationModel;
use crate::radio::{Environment, Position, RssScan};
use crate::solver::{self, PositionFix, SolverConfig};

/// Lower edges of the default DOP bins: `[1,5) [5,10) [10,15) [15,∞)`.
pub const DEFAULT_BIN_EDGES: [f64; 4] = [1.0, 5.0, 10.0, 15.0];

/// Bins with fewer samples than this may break the monotone trend once.
pub const TREND_MIN_COUNT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub sigma_db: f64,
    /// Readings under this power are recorded as not received, mW.
    pub dropout_below: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(sigma_db: f64, seed: u64) -> Result<Self> {
        if !(sigma_db >= 0.0) || !sigma_db.is_finite() {
            return Err(Error::validation(
                "sigma",
                format!("must be a non-negative number of dB, got {sigma_db}"),
            ));
        }
        Ok(NoiseModel {
            sigma_db,
            dropout_below: 0.0,
            seed,
        })
    }

    pub fn noiseless() -> Self {
        NoiseModel {
            sigma_db: 0.0,
            dropout_below: 0.0,
            seed: 0,
        }
    }

    pub fn with_dropout(mut self, dropout_below: f64) -> Self {
        self.dropout_below = dropout_below;
        self
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            sigma_db: 2.0,
            dropout_below: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<[f64; 3]>,
    /// m/s
    pub speed: f64,
    /// seconds
    pub sample_period: f64,
}

impl Trajectory {
    pub fn validate(&self) -> Result<()> {
        if self.waypoints.is_empty() {
            return Err(Error::validation("waypoints", "at least one waypoint is required"));
        }
        if !self.waypoints.iter().flatten().all(|c| c.is_finite()) {
            return Err(Error::validation("waypoints", "coordinates must be finite"));
        }
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return Err(Error::validation("speed", "must be strictly positive"));
        }
        if !(self.sample_period > 0.0 && self.sample_period.is_finite()) {
            return Err(Error::validation("sample_period", "must be strictly positive"));
        }
        Ok(())
    }

    fn points(&self) -> Vec<Position> {
        self.waypoints.iter().map(|w| Position::new(w[0], w[1], w[2])).collect()
    }
}

/// Constant-speed samples along the waypoints, both endpoints included.
pub fn sample_trajectory(t: &Trajectory) -> Result<Vec<(f64, Position)>> {
    t.validate()?;
    let pts = t.points();
    // cumulative arc length at each waypoint
    let mut cum = Vec::with_capacity(pts.len());
    cum.push(0.0);
    for w in pts.windows(2) {
        let last = *cum.last().unwrap();
        cum.push(last + (w[1] - w[0]).norm());
    }
    let total_len = *cum.last().unwrap();
    let duration = total_len / t.speed;
    let at = |time: f64| -> Position {
        let s = (time * t.speed).min(total_len);
        // first segment whose end reaches s
        let seg = cum.partition_point(|&c| c < s).max(1).min(pts.len() - 1);
        if pts.len() == 1 {
            return pts[0];
        }
        let (s0, s1) = (cum[seg - 1], cum[seg]);
        let frac = if s1 > s0 { (s - s0) / (s1 - s0) } else { 1.0 };
        pts[seg - 1] + (pts[seg] - pts[seg - 1]) * frac
    };

    let steps = (duration / t.sample_period + 1e-9).floor() as usize;
    let mut out: Vec<(f64, Position)> = (0..=steps)
        .map(|k| {
            let time = k as f64 * t.sample_period;
            (time, at(time))
        })
        .collect();
    let last_time = out.last().map(|s| s.0).unwrap_or(0.0);
    if duration - last_time > 1e-9 * t.sample_period.max(1.0) {
        out.push((duration, pts[pts.len() - 1]));
    }
    Ok(out)
}

/// Noisy scan of every AP in `env` as seen from `truth`.
///
/// `stream` selects the random stream; use the sample index so that each
/// sample is reproducible on its own.
pub fn synthesize_scan(
    env: &Environment,
    truth: &Position,
    timestamp: f64,
    noise: &NoiseModel,
    model: &PropagationModel,
    stream: u64,
) -> Result<RssScan> {
    let mut rng = noise.rng(stream);
    let normal = Normal::new(0.0, noise.sigma_db).map_err(|e| Error::validation("sigma", e.to_string()))?;
    let mut scan = RssScan::new(timestamp);
    scan.truth = Some(*truth);
    for ap in env.aps() {
        let d = (ap.position - truth).norm();
        if d < 1e-9 {
            return Err(Error::DegenerateRange(ap.id.clone()));
        }
        let mut p = model.synthesize_rss(ap, &env.receiver, d)?;
        if noise.sigma_db > 0.0 {
            let eps: f64 = normal.sample(&mut rng);
            p *= 10f64.powf(eps / 10.0);
        }
        if p < noise.dropout_below {
            p = 0.0;
        }
        scan.readings.insert(ap.id.clone(), p);
    }
    Ok(scan)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub noise: NoiseModel,
    /// Model used both to synthesize scans and to invert them.
    pub solver: SolverConfig,
    /// Start each sample from the previous fix; forces sequential solving.
    pub warm_start: bool,
    /// Report the DOP at the true position instead of at the estimate.
    pub dop_at_truth: bool,
    pub bin_edges: Vec<f64>,
}

impl ExperimentConfig {
    pub fn new(noise: NoiseModel, solver: SolverConfig) -> Self {
        ExperimentConfig {
            noise,
            solver,
            warm_start: true,
            dop_at_truth: false,
            bin_edges: DEFAULT_BIN_EDGES.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub time: f64,
    pub truth: Position,
    pub estimate: Position,
    pub error_m: f64,
    pub dop: f64,
    pub visible: usize,
    pub qualified: usize,
    pub classification: Classification,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DopBin {
    pub lower: f64,
    /// Exclusive; `f64::INFINITY` for the open-ended bin.
    pub upper: f64,
    pub count: usize,
    pub mean_error: Option<f64>,
    pub max_error: Option<f64>,
}

impl DopBin {
    fn collect<'a>(lower: f64, upper: f64, errors: impl Iterator<Item = &'a f64>) -> Self {
        let (mut count, mut sum, mut max) = (0usize, 0.0, f64::NEG_INFINITY);
        for &e in errors {
            count += 1;
            sum += e;
            max = max.max(e);
        }
        DopBin {
            lower,
            upper,
            count,
            mean_error: (count > 0).then(|| sum / count as f64),
            max_error: (count > 0).then_some(max),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub records: Vec<SampleRecord>,
    /// Finite-DOP bins, partitioning `[0, ∞)`.
    pub bins: Vec<DopBin>,
    /// Samples with infinite DOP, kept out of the bins and the correlation.
    pub infinite: DopBin,
    /// Spearman rank correlation between DOP and error over finite-DOP samples.
    pub spearman: Option<f64>,
}

impl EvaluationReport {
    /// Builds the summary from per-sample records; `edges` must be increasing.
    pub fn from_records(records: Vec<SampleRecord>, edges: &[f64]) -> Result<Self> {
        if edges.windows(2).any(|w| !(w[0] < w[1])) || edges.iter().any(|e| !(*e >= 0.0) || e.is_infinite()) {
            return Err(Error::validation(
                "bins",
                "edges must be finite, non-negative and increasing",
            ));
        }
        let mut bounds = Vec::with_capacity(edges.len() + 2);
        if edges.first().is_none_or(|&e| e > 0.0) {
            bounds.push(0.0);
        }
        bounds.extend_from_slice(edges);
        bounds.push(f64::INFINITY);

        let bins = bounds
            .windows(2)
            .map(|w| {
                let (lo, hi) = (w[0], w[1]);
                DopBin::collect(
                    lo,
                    hi,
                    records
                        .iter()
                        .filter(|r| r.dop.is_finite() && r.dop >= lo && r.dop < hi)
                        .map(|r| &r.error_m),
                )
            })
            .collect();
        let infinite = DopBin::collect(
            f64::INFINITY,
            f64::INFINITY,
            records.iter().filter(|r| !r.dop.is_finite()).map(|r| &r.error_m),
        );
        let (dops, errs): (Vec<f64>, Vec<f64>) = records
            .iter()
            .filter(|r| r.dop.is_finite())
            .map(|r| (r.dop, r.error_m))
            .unzip();
        let spearman = spearman(&dops, &errs);
        Ok(EvaluationReport {
            records,
            bins,
            infinite,
            spearman,
        })
    }

    /// Mean error never drops from one non-empty bin to the next, except for
    /// at most one drop between bins where one side has fewer than
    /// [`TREND_MIN_COUNT`] samples.
    pub fn mean_error_trend_ok(&self) -> bool {
        let filled: Vec<&DopBin> = self.bins.iter().filter(|b| b.count > 0).collect();
        let mut inversions = 0;
        for w in filled.windows(2) {
            if w[1].mean_error < w[0].mean_error {
                if w[0].count < TREND_MIN_COUNT || w[1].count < TREND_MIN_COUNT {
                    inversions += 1;
                } else {
                    return false;
                }
            }
        }
        inversions <= 1
    }

    pub fn max_error(&self) -> Option<f64> {
        self.records.iter().map(|r| r.error_m).reduce(f64::max)
    }
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        // ties share the average rank
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman's ρ with average ranks for ties; `None` under two samples or
/// when either side is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let mean = (n as f64 + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (da, db) = (a - mean, b - mean);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

fn record(env: &Environment, scan: &RssScan, fix: &PositionFix, cfg: &ExperimentConfig) -> Result<SampleRecord> {
    let truth = scan.truth.expect("synthesized scans carry truth");
    let assessment = if cfg.dop_at_truth {
        dop::assess(env, scan, &truth, &cfg.solver.dop)?
    } else {
        fix.assessment.clone()
    };
    Ok(SampleRecord {
        time: scan.timestamp,
        truth,
        estimate: fix.position,
        error_m: (fix.position - truth).norm(),
        dop: assessment.dop,
        visible: assessment.visible_count,
        qualified: assessment.qualified_count,
        classification: assessment.classification,
        converged: fix.converged,
    })
}

/// Samples `trajectory`, synthesizes one scan per sample, locates it and
/// summarizes error against DOP.
///
/// Only a truth point that coincides with an AP fails; solver failures are
/// embedded as infinite-DOP samples.
pub fn run_experiment(env: &Environment, trajectory: &Trajectory, cfg: &ExperimentConfig) -> Result<EvaluationReport> {
    let samples = sample_trajectory(trajectory)?;
    let model = cfg.solver.model;
    let synth = |(k, (t, p)): (usize, &(f64, Position))| synthesize_scan(env, p, *t, &cfg.noise, &model, k as u64);

    let (scans, fixes): (Vec<RssScan>, Vec<PositionFix>) = if cfg.warm_start {
        let scans = samples.iter().enumerate().map(synth).collect::<Result<Vec<_>>>()?;
        let fixes = solver::solve_trajectory(env, &scans, &cfg.solver);
        (scans, fixes)
    } else {
        samples
            .par_iter()
            .enumerate()
            .map(|s| {
                let scan = synth(s)?;
                let fix = solver::solve(env, &scan, &cfg.solver)
                    .unwrap_or_else(|_| solver::failed_fix(env, &scan, &cfg.solver, None));
                Ok((scan, fix))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip()
    };

    let records = scans
        .iter()
        .zip(&fixes)
        .map(|(scan, fix)| record(env, scan, fix, cfg))
        .collect::<Result<Vec<_>>>()?;
    EvaluationReport::from_records(records, &cfg.bin_edges)
}
