//! Wi-Fi dilution of precision.
//!
//! The qualifier runs in three steps: collect the visible APs, drop the ones
//! whose signal is under the environment threshold, then score the geometry
//! of what is left with `DOP = √Tr((HᵀH)⁻¹)`, where each row of `H` is the
//! unit vector from the user toward one AP.
//!
//! `H` has three columns. There is no receiver clock unknown in RSS ranging,
//! so the all-zero fourth column seen in GPS-style notation is not carried;
//! with it `HᵀH` would be singular for every layout.

use std::fmt;

use nalgebra::{DMatrix, Vector3};

use crate::error::{Error, Result};
use crate::propagation::PropagationModel;
use crate::radio::{ApId, Dimension, Environment, Position, RssScan};

/// Upper bound of the "good accuracy" DOP band.
pub const DEFAULT_GOOD_DOP_MAX: f64 = 5.0;

/// Relative determinant floor below which the normal matrix counts as singular.
pub const SINGULARITY_RATIO: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryMatrix {
    rows: Vec<Vector3<f64>>,
    ranges: Vec<f64>,
}

impl GeometryMatrix {
    /// Builds a matrix from explicit direction rows; each is normalized.
    pub fn from_directions(dirs: impl IntoIterator<Item = Vector3<f64>>) -> Self {
        let (rows, ranges) = dirs.into_iter().map(|d| (d.normalize(), d.norm())).unzip();
        GeometryMatrix { rows, ranges }
    }

    pub fn rows(&self) -> &[Vector3<f64>] {
        &self.rows
    }

    pub fn ranges(&self) -> &[f64] {
        &self.ranges
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows restricted to the solved coordinates, as a dense `n × dim` matrix.
    ///
    /// In 2-D the z component is dropped and each row is re-normalized so
    /// that `Tr(HᵀH)` still equals the row count. A row pointing straight up
    /// or down has no horizontal component and stays zero.
    pub fn dense(&self, dim: Dimension) -> DMatrix<f64> {
        let k = dim.count();
        DMatrix::from_fn(self.rows.len(), k, |i, j| {
            let row = self.rows[i];
            match dim {
                Dimension::Three => row[j],
                Dimension::Two => {
                    let h = row.xy().norm();
                    if h > 1e-12 {
                        row[j] / h
                    } else {
                        0.0
                    }
                }
            }
        })
    }
}

/// Unit direction rows from `user` toward each listed AP, in input order.
pub fn build_geometry(env: &Environment, user: &Position, aps: &[ApId]) -> Result<GeometryMatrix> {
    let mut rows = Vec::with_capacity(aps.len());
    let mut ranges = Vec::with_capacity(aps.len());
    for id in aps {
        let ap = env.ap(id).ok_or_else(|| Error::UnknownAp(id.clone()))?;
        let delta = ap.position - user;
        let r = delta.norm();
        if r < 1e-9 {
            return Err(Error::DegenerateRange(id.clone()));
        }
        rows.push(delta / r);
        ranges.push(r);
    }
    Ok(GeometryMatrix { rows, ranges })
}

/// `HᵀWH` over the solved coordinates; `W` is the identity when `weights`
/// is `None`.
pub fn normal_matrix(h: &GeometryMatrix, dim: Dimension, weights: Option<&[f64]>) -> DMatrix<f64> {
    let dense = h.dense(dim);
    match weights {
        None => dense.transpose() * &dense,
        Some(w) => {
            let mut weighted = dense.clone();
            for (i, mut row) in weighted.row_iter_mut().enumerate() {
                row *= w[i];
            }
            dense.transpose() * weighted
        }
    }
}

/// Scale-aware singularity test: `det(N) ≤ 1e-10 · (Tr(N)/k)^k`.
pub fn is_singular(n: &DMatrix<f64>) -> bool {
    let k = n.nrows();
    let scale = (n.trace() / k as f64).powi(k as i32);
    !(n.determinant() > SINGULARITY_RATIO * scale)
}

fn dop_from_normal(n: DMatrix<f64>) -> f64 {
    if is_singular(&n) {
        return f64::INFINITY;
    }
    match n.try_inverse() {
        Some(inv) => inv.trace().max(0.0).sqrt(),
        None => f64::INFINITY,
    }
}

/// Geometric DOP, `f64::INFINITY` when fewer than `dim + 1` rows are given
/// or the normal matrix is singular.
pub fn compute_dop(h: &GeometryMatrix, dim: Dimension) -> f64 {
    if h.len() < dim.min_aps() {
        return f64::INFINITY;
    }
    dop_from_normal(normal_matrix(h, dim, None))
}

/// Signal-weighted DOP `√Tr((HᵀWH)⁻¹)` with `W = diag(1/c_i²)`.
///
/// This folds the range sensitivity of each AP into the trace and is an
/// extension: the plain [`compute_dop`] is the default everywhere.
pub fn compute_weighted_dop(h: &GeometryMatrix, sensitivities: &[f64], dim: Dimension) -> f64 {
    assert_eq!(h.len(), sensitivities.len(), "one sensitivity per row");
    if h.len() < dim.min_aps() {
        return f64::INFINITY;
    }
    let w: Vec<f64> = sensitivities.iter().map(|c| 1.0 / (c * c)).collect();
    dop_from_normal(normal_matrix(h, dim, Some(&w)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Classification {
    Good,
    Degraded,
    Insufficient,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Good => "good",
            Classification::Degraded => "degraded",
            Classification::Insufficient => "insufficient",
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Classification {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "good" => Ok(Classification::Good),
            "degraded" => Ok(Classification::Degraded),
            "insufficient" => Ok(Classification::Insufficient),
            other => Err(Error::validation("classification", format!("unknown value `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExclusionReason {
    /// Scanned, nothing received.
    NotReceived,
    BelowThreshold,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exclusion {
    pub id: ApId,
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DopAssessment {
    pub visible_count: usize,
    pub qualified_count: usize,
    /// APs that took part in the geometry, ordered by id.
    pub qualified: Vec<ApId>,
    pub dop: f64,
    pub classification: Classification,
    pub excluded: Vec<Exclusion>,
}

impl DopAssessment {
    /// Assessment for a scan whose geometry could not be evaluated.
    pub fn infinite(visible_count: usize, qualified: Vec<ApId>, excluded: Vec<Exclusion>, dim: Dimension) -> Self {
        let classification = if qualified.len() < dim.min_aps() {
            Classification::Insufficient
        } else {
            Classification::Degraded
        };
        DopAssessment {
            visible_count,
            qualified_count: qualified.len(),
            qualified,
            dop: f64::INFINITY,
            classification,
            excluded,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DopConfig {
    pub good_dop_max: f64,
    /// Weight rows by `1/c_i²` using this model's range sensitivities.
    pub weighting: Option<PropagationModel>,
}

impl Default for DopConfig {
    fn default() -> Self {
        DopConfig {
            good_dop_max: DEFAULT_GOOD_DOP_MAX,
            weighting: None,
        }
    }
}

/// APs with a non-zero reading, ordered by id.
pub fn visible_aps(env: &Environment, scan: &RssScan) -> Result<Vec<ApId>> {
    let mut visible = Vec::new();
    for (id, &p) in &scan.readings {
        if env.ap(id).is_none() {
            return Err(Error::UnknownAp(id.clone()));
        }
        if p > 0.0 {
            visible.push(id.clone());
        }
    }
    Ok(visible)
}

/// Splits visible APs on the environment's signal-strength threshold.
pub fn qualify_aps(env: &Environment, visible: &[ApId], scan: &RssScan) -> (Vec<ApId>, Vec<Exclusion>) {
    let mut qualified = Vec::with_capacity(visible.len());
    let mut excluded = Vec::new();
    for id in visible {
        let p = scan.reading(id).unwrap_or(0.0);
        if p >= env.ss_threshold {
            qualified.push(id.clone());
        } else {
            excluded.push(Exclusion {
                id: id.clone(),
                reason: ExclusionReason::BelowThreshold,
            });
        }
    }
    (qualified, excluded)
}

pub(crate) fn census(env: &Environment, scan: &RssScan) -> Result<(usize, Vec<ApId>, Vec<Exclusion>)> {
    let visible = visible_aps(env, scan)?;
    let (qualified, mut excluded) = qualify_aps(env, &visible, scan);
    let mut not_received: Vec<Exclusion> = scan
        .readings
        .iter()
        .filter(|(_, &p)| !(p > 0.0))
        .map(|(id, _)| Exclusion {
            id: id.clone(),
            reason: ExclusionReason::NotReceived,
        })
        .collect();
    not_received.append(&mut excluded);
    Ok((visible.len(), qualified, not_received))
}

/// Runs the three-step qualifier for `scan` evaluated at `user`.
pub fn assess(env: &Environment, scan: &RssScan, user: &Position, cfg: &DopConfig) -> Result<DopAssessment> {
    let dim = env.dimension;
    let (visible_count, qualified, excluded) = census(env, scan)?;
    if qualified.len() < dim.min_aps() {
        return Ok(DopAssessment::infinite(visible_count, qualified, excluded, dim));
    }
    let h = build_geometry(env, user, &qualified)?;
    let dop = match cfg.weighting {
        None => compute_dop(&h, dim),
        Some(model) => {
            let c = qualified
                .iter()
                .map(|id| {
                    let ap = env.ap(id).expect("qualified AP is in the environment");
                    model.range_sensitivity(ap, &env.receiver, scan.reading(id).unwrap_or(0.0))
                })
                .collect::<Result<Vec<f64>>>()?;
            compute_weighted_dop(&h, &c, dim)
        }
    };
    let classification = if dop.is_finite() && dop <= cfg.good_dop_max {
        Classification::Good
    } else {
        Classification::Degraded
    };
    Ok(DopAssessment {
        visible_count,
        qualified_count: qualified.len(),
        qualified,
        dop,
        classification,
        excluded,
    })
}
