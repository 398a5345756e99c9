//! Domain types shared by every module and the dBm/milliwatt bridge.
//!
//! Powers are carried internally as linear milliwatts. dBm only appears at
//! the file and flag boundary (see [`crate::io`]). A reading of `0.0` mW
//! means the access point was scanned but nothing was received; an absent
//! key means the access point was not scanned at all.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the building frame, meters.
pub type Position = Vector3<f64>;

/// Converts a dBm level to milliwatts.
pub fn dbm_to_mw(level: f64) -> Result<f64> {
    if !level.is_finite() {
        return Err(Error::InvalidUnit(level));
    }
    Ok(10f64.powf(level / 10.0))
}

/// Converts milliwatts to a dBm level.
pub fn mw_to_dbm(power: f64) -> Result<f64> {
    if !(power > 0.0) || !power.is_finite() {
        return Err(Error::NonPositivePower(power));
    }
    Ok(10.0 * power.log10())
}

/// Attenuation magnitude consumed by the SNAP-WPS regression.
///
/// The regression expects a positive number where larger means weaker, so a
/// received level `L < 0` dBm maps to `S = -L`. Non-negative levels are
/// passed through unchanged.
pub fn snap_attenuation(power: f64) -> Result<f64> {
    let level = mw_to_dbm(power)?;
    Ok(if level < 0.0 { -level } else { level })
}

/// Access point identifier, unique within an [`Environment`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ApId(pub String);

impl ApId {
    pub fn new(id: impl Into<String>) -> Self {
        ApId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ApId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ApId {
    fn from(s: &str) -> Self {
        ApId(s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccessPoint {
    pub id: ApId,
    pub position: Position,
    /// Emitted power `P_T`, mW.
    pub tx_power: f64,
    /// Linear antenna gain `G_T`.
    pub tx_gain: f64,
    /// Carrier wavelength, meters.
    pub wavelength: f64,
}

impl AccessPoint {
    pub fn new(id: impl Into<ApId>, position: Position, tx_power: f64, tx_gain: f64, wavelength: f64) -> Result<Self> {
        let ap = AccessPoint {
            id: id.into(),
            position,
            tx_power,
            tx_gain,
            wavelength,
        };
        ap.validate()?;
        Ok(ap)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::validation(
                    field,
                    format!("access point `{}`: must be strictly positive, got {v}", self.id),
                ))
            }
        };
        positive("tx_power", self.tx_power)?;
        positive("tx_gain", self.tx_gain)?;
        positive("wavelength", self.wavelength)?;
        if !self.position.iter().all(|c| c.is_finite()) {
            return Err(Error::validation(
                "position",
                format!("access point `{}`: coordinates must be finite", self.id),
            ));
        }
        Ok(())
    }
}

impl From<String> for ApId {
    fn from(s: String) -> Self {
        ApId(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Receiver {
    /// Linear antenna gain `G_R`.
    pub rx_gain: f64,
}

impl Receiver {
    pub fn new(rx_gain: f64) -> Result<Self> {
        if rx_gain > 0.0 && rx_gain.is_finite() {
            Ok(Receiver { rx_gain })
        } else {
            Err(Error::validation(
                "gain",
                format!("receiver gain must be strictly positive, got {rx_gain}"),
            ))
        }
    }
}

impl Default for Receiver {
    fn default() -> Self {
        Receiver { rx_gain: 1.0 }
    }
}

/// Number of position unknowns solved for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dimension {
    Two,
    Three,
}

impl Dimension {
    pub fn from_count(n: u8) -> Option<Self> {
        match n {
            2 => Some(Dimension::Two),
            3 => Some(Dimension::Three),
            _ => None,
        }
    }

    pub fn count(self) -> usize {
        match self {
            Dimension::Two => 2,
            Dimension::Three => 3,
        }
    }

    /// At least three APs in 2-D and four in 3-D.
    pub fn min_aps(self) -> usize {
        self.count() + 1
    }
}

/// One observation: per-AP received power at one instant.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RssScan {
    pub timestamp: f64,
    /// Received power in mW, `0.0` meaning "not received".
    pub readings: BTreeMap<ApId, f64>,
    /// Ground-truth position, present for simulated scans.
    pub truth: Option<Position>,
}

impl RssScan {
    pub fn new(timestamp: f64) -> Self {
        RssScan {
            timestamp,
            ..Default::default()
        }
    }

    pub fn with_reading(mut self, id: impl Into<ApId>, power_mw: f64) -> Self {
        self.readings.insert(id.into(), power_mw);
        self
    }

    pub fn reading(&self, id: &ApId) -> Option<f64> {
        self.readings.get(id).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    aps: Vec<AccessPoint>,
    index: HashMap<ApId, usize>,
    pub receiver: Receiver,
    pub dimension: Dimension,
    /// Minimum received power for an AP to take part in the DOP, mW.
    pub ss_threshold: f64,
}

impl Environment {
    pub fn new(aps: Vec<AccessPoint>, receiver: Receiver, dimension: Dimension, ss_threshold: f64) -> Result<Self> {
        if aps.is_empty() {
            return Err(Error::validation("aps", "at least one access point is required"));
        }
        if !(ss_threshold >= 0.0) || ss_threshold.is_infinite() {
            return Err(Error::validation(
                "ss_threshold",
                format!("threshold must be a non-negative power, got {ss_threshold} mW"),
            ));
        }
        Receiver::new(receiver.rx_gain)?;
        let mut index = HashMap::with_capacity(aps.len());
        for (i, ap) in aps.iter().enumerate() {
            ap.validate()?;
            if index.insert(ap.id.clone(), i).is_some() {
                return Err(Error::validation(
                    "id",
                    format!("duplicate access point id `{}`", ap.id),
                ));
            }
        }
        Ok(Environment {
            aps,
            index,
            receiver,
            dimension,
            ss_threshold,
        })
    }

    pub fn aps(&self) -> &[AccessPoint] {
        &self.aps
    }

    pub fn ap(&self, id: &ApId) -> Option<&AccessPoint> {
        self.index.get(id).map(|&i| &self.aps[i])
    }

    pub fn with_dimension(mut self, dimension: Dimension) -> Self {
        self.dimension = dimension;
        self
    }

    pub fn with_threshold(mut self, ss_threshold: f64) -> Result<Self> {
        if !(ss_threshold >= 0.0) || ss_threshold.is_infinite() {
            return Err(Error::validation("ss_threshold", format!("got {ss_threshold} mW")));
        }
        self.ss_threshold = ss_threshold;
        Ok(self)
    }

    /// Centroid of the listed APs, or of every AP when `ids` is empty.
    pub fn centroid(&self, ids: &[ApId]) -> Position {
        let pts: Vec<Position> = if ids.is_empty() {
            self.aps.iter().map(|a| a.position).collect()
        } else {
            ids.iter().filter_map(|id| self.ap(id)).map(|a| a.position).collect()
        };
        let n = pts.len().max(1) as f64;
        pts.iter().fold(Position::zeros(), |acc, p| acc + p) / n
    }
}
