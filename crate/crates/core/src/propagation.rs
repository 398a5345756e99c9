//! Path-loss models: forward signal prediction, range inversion and the
//! per-AP range sensitivity coefficients.
//!
//! Friis and Interlink Networks share one form,
//! `P_R = P_T · G_R · G_T · (λ / 4πd)^n`, with `n = 2` and `n = 3.5`.
//! SNAP-WPS is an empirical cubic that maps an attenuation magnitude in dB
//! straight to meters and has no forward direction.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use log::warn;

use crate::error::{Error, Result};
use crate::radio::{snap_attenuation, AccessPoint, Receiver};

/// Smallest range SNAP-WPS may return; the raw cubic goes negative for weak
/// attenuations.
pub const EPSILON_DISTANCE: f64 = 0.01;

/// Range of attenuations the SNAP-WPS regression was fitted on, dB.
pub const SNAP_VALID_RANGE: (f64, f64) = (15.0, 90.0);

const SNAP_COEFFS: [f64; 4] = [0.000198, -0.025, 1.14, -14.8];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Friis,
    InterlinkNetworks,
    SnapWps,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationModel {
    pub kind: ModelKind,
    /// Path-loss exponent; ignored by SNAP-WPS.
    pub exponent: f64,
    /// Invert Friis with `d = ¼·√(P_T G_T G_R / P_R)`, without the `λ/4π`
    /// factor. Off by default.
    pub friis_legacy_inversion: bool,
}

impl PropagationModel {
    pub const fn friis() -> Self {
        PropagationModel {
            kind: ModelKind::Friis,
            exponent: 2.0,
            friis_legacy_inversion: false,
        }
    }

    pub const fn interlink() -> Self {
        PropagationModel {
            kind: ModelKind::InterlinkNetworks,
            exponent: 3.5,
            friis_legacy_inversion: false,
        }
    }

    pub const fn snap_wps() -> Self {
        PropagationModel {
            kind: ModelKind::SnapWps,
            exponent: 0.0,
            friis_legacy_inversion: false,
        }
    }

    pub fn with_exponent(mut self, exponent: f64) -> Result<Self> {
        if self.kind != ModelKind::SnapWps && !(exponent > 0.0 && exponent.is_finite()) {
            return Err(Error::InvalidExponent(exponent));
        }
        self.exponent = exponent;
        Ok(self)
    }

    pub fn with_legacy_inversion(mut self, on: bool) -> Self {
        self.friis_legacy_inversion = on;
        self
    }

    fn legacy(&self) -> bool {
        self.kind == ModelKind::Friis && self.friis_legacy_inversion
    }

    /// Predicted received power at `distance`, mW.
    pub fn forward_rss(&self, ap: &AccessPoint, rx: &Receiver, distance: f64) -> Result<f64> {
        if self.kind == ModelKind::SnapWps {
            return Err(Error::UnsupportedDirection);
        }
        if !(distance > 0.0) || !distance.is_finite() {
            return Err(Error::InvalidDistance(distance));
        }
        let ratio = ap.wavelength / (4.0 * PI * distance);
        Ok(link_budget(ap, rx) * ratio.powf(self.exponent))
    }

    /// Range estimate from a received power in mW.
    pub fn invert_distance(&self, ap: &AccessPoint, rx: &Receiver, rss: f64) -> Result<f64> {
        if !(rss > 0.0) || !rss.is_finite() {
            return Err(Error::NonPositivePower(rss));
        }
        match self.kind {
            ModelKind::SnapWps => Ok(snap_distance(snap_attenuation(rss)?)),
            _ if self.legacy() => Ok(0.25 * (link_budget(ap, rx) / rss).sqrt()),
            _ => Ok(ap.wavelength / (4.0 * PI) * (link_budget(ap, rx) / rss).powf(1.0 / self.exponent)),
        }
    }

    /// Coefficient `c_i` turning a signal-domain perturbation into meters.
    ///
    /// For the path-loss models the signal variable is `P_R^(-1/n)`, so the
    /// range is exactly `c · P_R^(-1/n)` and `c` does not depend on `rss`.
    /// For SNAP-WPS it is the slope of the cubic at the observed attenuation.
    pub fn range_sensitivity(&self, ap: &AccessPoint, rx: &Receiver, rss: f64) -> Result<f64> {
        if !(rss > 0.0) || !rss.is_finite() {
            return Err(Error::NonPositivePower(rss));
        }
        match self.kind {
            ModelKind::SnapWps => Ok(snap_derivative(snap_attenuation(rss)?)),
            _ if self.legacy() => Ok(0.25 * link_budget(ap, rx).sqrt()),
            _ => Ok(ap.wavelength / (4.0 * PI) * link_budget(ap, rx).powf(1.0 / self.exponent)),
        }
    }

    /// Received power that the model maps back to `distance`, for synthesis.
    ///
    /// Friis and Interlink use [`forward_rss`](Self::forward_rss). SNAP-WPS
    /// inverts the cubic (which is strictly increasing) and reports the
    /// level `-S` dBm, ignoring the AP's transmit parameters.
    pub fn synthesize_rss(&self, ap: &AccessPoint, rx: &Receiver, distance: f64) -> Result<f64> {
        match self.kind {
            ModelKind::SnapWps => {
                if !(distance > 0.0) || !distance.is_finite() {
                    return Err(Error::InvalidDistance(distance));
                }
                crate::radio::dbm_to_mw(-snap_attenuation_for(distance))
            }
            _ => self.forward_rss(ap, rx, distance),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ModelKind::Friis => "friis",
            ModelKind::InterlinkNetworks => "interlink",
            ModelKind::SnapWps => "snap-wps",
        }
    }
}

impl Default for PropagationModel {
    fn default() -> Self {
        Self::friis()
    }
}

impl FromStr for PropagationModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "friis" => Ok(Self::friis()),
            "interlink" | "interlink-networks" => Ok(Self::interlink()),
            "snap-wps" | "snap" | "snapwps" => Ok(Self::snap_wps()),
            _ => Err(Error::UnknownModel(s.to_owned())),
        }
    }
}

impl fmt::Display for PropagationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn link_budget(ap: &AccessPoint, rx: &Receiver) -> f64 {
    ap.tx_power * ap.tx_gain * rx.rx_gain
}

/// The unclamped SNAP-WPS cubic, meters.
pub fn snap_polynomial(s: f64) -> f64 {
    let [a, b, c, d] = SNAP_COEFFS;
    a * s.powi(3) + b * s.powi(2) + c * s + d
}

/// SNAP-WPS range for attenuation `s` dB, clamped below at
/// [`EPSILON_DISTANCE`].
pub fn snap_distance(s: f64) -> f64 {
    if s < SNAP_VALID_RANGE.0 || s > SNAP_VALID_RANGE.1 {
        warn!("SNAP-WPS attenuation {s} dB is outside the fitted range 15-90 dB");
    }
    snap_polynomial(s).max(EPSILON_DISTANCE)
}

/// Slope of the SNAP-WPS cubic, meters per dB.
pub fn snap_derivative(s: f64) -> f64 {
    let [a, b, c, _] = SNAP_COEFFS;
    (3.0 * a * s + 2.0 * b) * s + c
}

/// Attenuation at which the raw SNAP-WPS cubic equals `distance`.
///
/// The cubic's derivative has negative discriminant, so it is strictly
/// increasing and the root is unique.
pub fn snap_attenuation_for(distance: f64) -> f64 {
    let (mut lo, mut hi) = (-1.0e3, 1.0e3);
    while snap_polynomial(hi) < distance {
        hi *= 2.0;
    }
    while snap_polynomial(lo) > distance {
        lo *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if snap_polynomial(mid) < distance {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * mid.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio::Position;

    fn ap(tx: f64, gain: f64, wl: f64) -> AccessPoint {
        AccessPoint::new("a", Position::zeros(), tx, gain, wl).unwrap()
    }

    #[test]
    fn friis_identity() {
        // λ / (4π d) = 1 at d = λ / 4π
        let a = ap(1.0, 1.0, 4.0 * PI);
        let p = PropagationModel::friis()
            .forward_rss(&a, &Receiver::default(), 1.0)
            .unwrap();
        assert!((p - 1.0).abs() < 1e-15);
        let a = ap(3.0, 1.0, 4.0 * PI * 2.5);
        let p = PropagationModel::friis()
            .forward_rss(&a, &Receiver::default(), 2.5)
            .unwrap();
        assert!((p - 3.0).abs() < 1e-14);
    }

    #[test]
    fn forward_reference_values() {
        let a = ap(100.0, 1.0, 0.125);
        let rx = Receiver::default();
        let friis = PropagationModel::friis().forward_rss(&a, &rx, 10.0).unwrap();
        assert!((friis - 9.894646840072048e-5).abs() / friis < 1e-12);
        let inter = PropagationModel::interlink().forward_rss(&a, &rx, 10.0).unwrap();
        assert!((inter - 3.1042059102424112e-9).abs() / inter < 1e-12);
    }

    #[test]
    fn inverse_reference_values() {
        let a = ap(100.0, 1.0, 0.125);
        let rx = Receiver::default();
        let friis = PropagationModel::friis();
        let unit = 100.0 * (0.125 / (4.0 * PI)).powi(2);
        assert!((friis.invert_distance(&a, &rx, unit).unwrap() - 1.0).abs() < 1e-12);
        let d = friis.invert_distance(&a, &rx, 9.894646840072048e-5).unwrap();
        assert!((d - 10.0).abs() < 1e-9);
        let d = PropagationModel::interlink()
            .invert_distance(&a, &rx, 3.1042059102424112e-9)
            .unwrap();
        assert!((d - 10.0).abs() < 1e-9);
    }

    #[test]
    fn errors() {
        let a = ap(100.0, 1.0, 0.125);
        let rx = Receiver::default();
        let f = PropagationModel::friis();
        assert_eq!(f.forward_rss(&a, &rx, 0.0), Err(Error::InvalidDistance(0.0)));
        assert!(matches!(f.forward_rss(&a, &rx, -1.0), Err(Error::InvalidDistance(_))));
        assert_eq!(f.invert_distance(&a, &rx, 0.0), Err(Error::NonPositivePower(0.0)));
        assert_eq!(
            PropagationModel::snap_wps().forward_rss(&a, &rx, 1.0),
            Err(Error::UnsupportedDirection)
        );
        assert!(matches!(
            PropagationModel::friis().with_exponent(0.0),
            Err(Error::InvalidExponent(_))
        ));
        assert!("bogus".parse::<PropagationModel>().is_err());
        assert_eq!("snap-wps".parse::<PropagationModel>().unwrap().kind, ModelKind::SnapWps);
    }

    #[test]
    fn snap_spot_values() {
        assert!((snap_distance(50.0) - 4.45).abs() < 1e-12);
        assert!((snap_distance(90.0) - 29.642).abs() < 1e-12);
        assert!((snap_polynomial(15.0) + 2.65675).abs() < 1e-12);
        assert_eq!(snap_distance(15.0), EPSILON_DISTANCE);
    }

    #[test]
    fn snap_inverse_cubic() {
        for d in [0.5, 4.45, 10.0, 29.642, 40.0] {
            let s = snap_attenuation_for(d);
            assert!((snap_polynomial(s) - d).abs() < 1e-9, "d={d} s={s}");
        }
        assert!((snap_attenuation_for(4.45) - 50.0).abs() < 1e-9);
        let a = ap(100.0, 1.0, 0.125);
        let m = PropagationModel::snap_wps();
        let p = m.synthesize_rss(&a, &Receiver::default(), 12.0).unwrap();
        assert!((m.invert_distance(&a, &Receiver::default(), p).unwrap() - 12.0).abs() < 1e-9);
    }

    #[test]
    fn sensitivity_reference_values() {
        let rx = Receiver::default();
        let unit = ap(1.0, 1.0, 4.0 * PI);
        let c = PropagationModel::friis().range_sensitivity(&unit, &rx, 1.0).unwrap();
        assert!((c - 1.0).abs() < 1e-15);
        let a = ap(100.0, 1.0, 0.125);
        let c = PropagationModel::friis().range_sensitivity(&a, &rx, 1e-5).unwrap();
        assert!((c - 0.0994718394324346).abs() < 1e-12);
        let s50 = crate::radio::dbm_to_mw(-50.0).unwrap();
        let c = PropagationModel::snap_wps().range_sensitivity(&a, &rx, s50).unwrap();
        assert!((c - 0.125).abs() < 1e-9);
    }

    #[test]
    fn legacy_inversion_drops_wavelength_factor() {
        let a = ap(100.0, 2.0, 0.125);
        let rx = Receiver::new(1.5).unwrap();
        let m = PropagationModel::friis().with_legacy_inversion(true);
        let d = m.invert_distance(&a, &rx, 3.0).unwrap();
        assert!((d - 0.25 * (300.0f64 / 3.0).sqrt()).abs() < 1e-12);
        // Interlink ignores the flag
        let i = PropagationModel::interlink().with_legacy_inversion(true);
        let p = i.forward_rss(&a, &rx, 7.0).unwrap();
        assert!((i.invert_distance(&a, &rx, p).unwrap() - 7.0).abs() < 1e-9);
    }

    #[test]
    fn sensitivity_matches_finite_difference() {
        // d as a function of u = P_R^(-1/n); dd/du should equal c.
        let rx = Receiver::new(1.3).unwrap();
        let a = ap(63.0, 2.2, 0.12);
        for m in [PropagationModel::friis(), PropagationModel::interlink()] {
            let n = m.exponent;
            for d0 in [0.5, 3.0, 25.0, 400.0] {
                let p0 = m.forward_rss(&a, &rx, d0).unwrap();
                let u0 = p0.powf(-1.0 / n);
                let h = u0 * 1e-6;
                let d_at = |u: f64| m.invert_distance(&a, &rx, u.powf(-n)).unwrap();
                let fd = (d_at(u0 + h) - d_at(u0 - h)) / (2.0 * h);
                let c = m.range_sensitivity(&a, &rx, p0).unwrap();
                assert!(((fd - c) / c).abs() < 1e-6, "{m} d0={d0}: fd={fd} c={c}");
            }
        }
    }

    #[test]
    fn monotone_in_distance_and_power() {
        let a = ap(100.0, 1.0, 0.125);
        let rx = Receiver::default();
        for m in [PropagationModel::friis(), PropagationModel::interlink()] {
            let ds = [0.1, 0.5, 1.0, 5.0, 50.0, 999.0];
            let ps: Vec<f64> = ds.iter().map(|&d| m.forward_rss(&a, &rx, d).unwrap()).collect();
            assert!(ps.windows(2).all(|w| w[0] > w[1]));
            let back: Vec<f64> = ps.iter().map(|&p| m.invert_distance(&a, &rx, p).unwrap()).collect();
            assert!(back.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
