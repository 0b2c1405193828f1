//! Client profiles: bitrate ladders paired with perceptual quality curves.
//!
//! Every client streams from a fixed ladder of [`LADDER_LEN`] bitrates. Each
//! rung has a normalized quality score in `[0, 1]`; the top rung always
//! scores exactly 1.0 so that curves of very different media types (video on
//! a phone vs. a point cloud on a headset) are comparable. Between rungs the
//! curve is treated as piecewise linear, which is what the bandwidth
//! allocator uses to find the bitrate needed for a target quality.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of rungs in every bitrate ladder.
pub const LADDER_LEN: usize = 7;

/// One client's media description: a strictly ascending bitrate ladder and
/// the perceptual quality score of each rung.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClientProfile {
    pub name: String,
    pub bitrates_mbps: Vec<f64>,
    pub qualities: Vec<f64>,
}

impl ClientProfile {
    pub fn new(name: impl Into<String>, bitrates_mbps: Vec<f64>, qualities: Vec<f64>) -> Result<Self> {
        let profile = ClientProfile {
            name: name.into(),
            bitrates_mbps,
            qualities,
        };
        profile.validate()?;
        Ok(profile)
    }

    /// Checks the structural invariants: exactly [`LADDER_LEN`] rungs,
    /// strictly ascending positive bitrates, non-decreasing qualities within
    /// `[0, 1]`, and a top rung of exactly 1.0.
    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::Profile(format!("{}: {msg}", self.name)));
        if self.bitrates_mbps.len() != LADDER_LEN || self.qualities.len() != LADDER_LEN {
            return err(format!(
                "expected {LADDER_LEN} bitrates and {LADDER_LEN} qualities, got {} and {}",
                self.bitrates_mbps.len(),
                self.qualities.len()
            ));
        }
        if !self.bitrates_mbps.iter().all(|b| b.is_finite() && *b > 0.0) {
            return err("bitrates must be finite and positive".into());
        }
        if !self.bitrates_mbps.windows(2).all(|w| w[0] < w[1]) {
            return err("bitrates must be strictly ascending".into());
        }
        if !self.qualities.iter().all(|q| q.is_finite() && (0.0..=1.0).contains(q)) {
            return err("qualities must lie in [0, 1]".into());
        }
        if !self.qualities.windows(2).all(|w| w[0] <= w[1]) {
            return err("qualities must be non-decreasing".into());
        }
        if self.qualities[LADDER_LEN - 1] != 1.0 {
            return err("quality of the top rung must be exactly 1.0".into());
        }
        Ok(())
    }

    /// Lowest bitrate on the ladder (Mbps).
    pub fn min_bitrate(&self) -> f64 {
        self.bitrates_mbps[0]
    }

    /// Highest bitrate on the ladder (Mbps).
    pub fn max_bitrate(&self) -> f64 {
        self.bitrates_mbps[LADDER_LEN - 1]
    }

    /// Quality score of a ladder rung.
    pub fn quality_at(&self, index: usize) -> Result<f64> {
        self.qualities
            .get(index)
            .copied()
            .ok_or_else(|| Error::Profile(format!("{}: ladder index {index} out of range", self.name)))
    }

    /// Piecewise-linear quality at an arbitrary bitrate within the ladder
    /// range. Bitrates outside `[min, max]` are an error: there is nothing
    /// the client could actually stream out there.
    pub fn interp_quality(&self, bitrate_mbps: f64) -> Result<f64> {
        if !bitrate_mbps.is_finite()
            || bitrate_mbps < self.min_bitrate()
            || bitrate_mbps > self.max_bitrate()
        {
            return Err(Error::Profile(format!(
                "{}: bitrate {bitrate_mbps} Mbps outside ladder range [{}, {}]",
                self.name,
                self.min_bitrate(),
                self.max_bitrate()
            )));
        }
        let b = &self.bitrates_mbps;
        let q = &self.qualities;
        let k = b
            .iter()
            .position(|x| bitrate_mbps <= *x)
            .expect("bitrate checked against ladder max");
        if bitrate_mbps == b[k] {
            return Ok(q[k]);
        }
        // Strict ascent puts the bitrate strictly inside segment [k-1, k].
        let seg = k - 1;
        let frac = (bitrate_mbps - b[seg]) / (b[seg + 1] - b[seg]);
        Ok(q[seg] + frac * (q[seg + 1] - q[seg]))
    }

    /// Inverse of [`interp_quality`](Self::interp_quality): the bitrate at
    /// which the interpolated curve reaches `quality`. On flat segments this
    /// returns the lowest bitrate achieving the quality.
    pub fn interp_bitrate(&self, quality: f64) -> Result<f64> {
        if !quality.is_finite() || quality < self.qualities[0] || quality > 1.0 {
            return Err(Error::Profile(format!(
                "{}: quality {quality} outside curve range [{}, 1.0]",
                self.name, self.qualities[0]
            )));
        }
        let b = &self.bitrates_mbps;
        let q = &self.qualities;
        if quality <= q[0] {
            return Ok(b[0]);
        }
        for seg in 0..LADDER_LEN - 1 {
            if quality <= q[seg + 1] {
                if quality == q[seg] {
                    return Ok(b[seg]);
                }
                if quality == q[seg + 1] {
                    return Ok(b[seg + 1]);
                }
                // q[seg + 1] > q[seg] here: quality > q[seg] rules out a
                // flat segment.
                let frac = (quality - q[seg]) / (q[seg + 1] - q[seg]);
                return Ok(b[seg] + frac * (b[seg + 1] - b[seg]));
            }
        }
        Ok(b[LADDER_LEN - 1])
    }
}

/// The set of client profiles taking part in a session, in client-id order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProfileSet {
    pub clients: Vec<ClientProfile>,
}

impl ProfileSet {
    pub fn new(clients: Vec<ClientProfile>) -> Result<Self> {
        let set = ProfileSet { clients };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.clients.is_empty() {
            return Err(Error::Profile("profile set must contain at least one client".into()));
        }
        for p in &self.clients {
            p.validate()?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.clients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clients.is_empty()
    }

    /// Sum of the lowest ladder rung over all clients: the bandwidth below
    /// which not even minimum-quality streaming fits.
    pub fn min_bitrate_sum(&self) -> f64 {
        self.clients.iter().map(ClientProfile::min_bitrate).sum()
    }

    /// Sum of the highest ladder rung over all clients.
    pub fn max_bitrate_sum(&self) -> f64 {
        self.clients.iter().map(ClientProfile::max_bitrate).sum()
    }

    /// Parses a profile set from TOML text.
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let set: ProfileSet = toml::from_str(text).map_err(|e| Error::parse(origin, e))?;
        set.validate()?;
        Ok(set)
    }

    /// The built-in default client mix (Phone, HDTV, 4KTV, PCV).
    pub fn builtin_default() -> Self {
        Self::from_toml_str(DEFAULT_PROFILES_TOML, "<builtin>")
            .expect("built-in profile config must be valid")
    }

    /// Sanity warnings that do not make a config unusable. Currently checks
    /// the expected asymmetry between lightweight and heavyweight clients:
    /// a point-cloud client named "PCV" needs roughly 7.5 Mbps to reach the
    /// quality a "Phone" client already gets at its lowest rung.
    pub fn anchor_warnings(&self) -> Vec<String> {
        let mut warnings = Vec::new();
        let phone = self.clients.iter().find(|p| p.name == "Phone");
        let pcv = self.clients.iter().find(|p| p.name == "PCV");
        if let (Some(phone), Some(pcv)) = (phone, pcv) {
            let phone_q = phone.interp_quality(0.5).ok();
            let pcv_q = pcv.interp_quality(7.5).ok();
            if let (Some(phone_q), Some(pcv_q)) = (phone_q, pcv_q) {
                if pcv_q > phone_q {
                    warnings.push(format!(
                        "PCV quality at 7.5 Mbps ({pcv_q:.4}) exceeds Phone quality at 0.5 Mbps \
                         ({phone_q:.4}); heavyweight clients are expected to need far more \
                         bandwidth for comparable quality"
                    ));
                }
            }
        }
        warnings
    }
}

const DEFAULT_PROFILES_TOML: &str = include_str!("../data/default_profiles.toml");

/// Loads a profile set from a TOML file, logging any sanity warnings.
pub fn load_profiles(path: &Path) -> Result<ProfileSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let set = ProfileSet::from_toml_str(&text, &path.display().to_string())?;
    for w in set.anchor_warnings() {
        log::warn!("{}: {w}", path.display());
    }
    Ok(set)
}

/// Normalizes raw objective or subjective scores to `[0, 1]` against a
/// floor: `(v - floor) / (max(v) - floor)`. The floor maps to 0 (scores at
/// or below it clamp to 0) and the best observed score maps to exactly 1.
pub fn normalize_scores(raw: &[f64], floor: f64) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(Error::Metric("normalize_scores: empty input".into()));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Metric("normalize_scores: non-finite input".into()));
    }
    let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max <= floor {
        return Err(Error::Metric(format!(
            "normalize_scores: max score {max} does not exceed floor {floor}"
        )));
    }
    Ok(raw.iter().map(|v| ((v - floor) / (max - floor)).max(0.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn toy_profile() -> ClientProfile {
        ClientProfile::new(
            "toy",
            vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
            vec![0.1, 0.3, 0.3, 0.6, 0.8, 0.9, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn default_config_loads_and_matches_expected_envelope() {
        let set = ProfileSet::builtin_default();
        assert_eq!(set.len(), 4);
        assert_eq!(
            set.clients.iter().map(|p| p.name.as_str()).collect::<Vec<_>>(),
            ["Phone", "HDTV", "4KTV", "PCV"]
        );
        assert_abs_diff_eq!(set.min_bitrate_sum(), 2.75, epsilon = 1e-9);
        assert_abs_diff_eq!(set.max_bitrate_sum(), 82.68, epsilon = 1e-9);
        assert!(set.anchor_warnings().is_empty());
    }

    #[test]
    fn anchor_violation_is_a_warning_not_an_error() {
        let mut set = ProfileSet::builtin_default();
        // Lift PCV's quality at 7.5 Mbps above Phone's at 0.5 Mbps.
        let pcv = set.clients.iter_mut().find(|p| p.name == "PCV").unwrap();
        pcv.qualities = vec![0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 1.0];
        set.validate().unwrap();
        assert_eq!(set.anchor_warnings().len(), 1);
    }

    #[test]
    fn rejects_malformed_ladders() {
        let descending = ClientProfile::new(
            "bad",
            vec![2.0, 1.0, 3.0, 4.0, 5.0, 6.0, 7.0],
            vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 1.0],
        );
        assert!(descending.is_err());

        let short = ClientProfile::new("bad", vec![1.0, 2.0], vec![0.5, 1.0]);
        assert!(short.is_err());

        let top_not_one = ClientProfile::new(
            "bad",
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0],
            vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.9],
        );
        assert!(top_not_one.is_err());

        let decreasing_quality = ClientProfile::new(
            "bad",
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0],
            vec![0.1, 0.5, 0.3, 0.6, 0.7, 0.8, 1.0],
        );
        assert!(decreasing_quality.is_err());
    }

    #[test]
    fn interp_quality_matches_hand_values() {
        let p = toy_profile();
        // Rung hits return rung values.
        for i in 0..LADDER_LEN {
            assert_eq!(p.interp_quality(p.bitrates_mbps[i]).unwrap(), p.qualities[i]);
        }
        // Midpoint of [1, 2] with q [0.1, 0.3].
        assert_abs_diff_eq!(p.interp_quality(1.5).unwrap(), 0.2, epsilon = 1e-12);
        // Flat segment [2, 4].
        assert_abs_diff_eq!(p.interp_quality(3.0).unwrap(), 0.3, epsilon = 1e-12);
        // Out of range errors.
        assert!(p.interp_quality(0.5).is_err());
        assert!(p.interp_quality(65.0).is_err());
    }

    #[test]
    fn interp_bitrate_matches_hand_values_and_prefers_cheap_flat_rungs() {
        let p = toy_profile();
        assert_abs_diff_eq!(p.interp_bitrate(0.2).unwrap(), 1.5, epsilon = 1e-12);
        // 0.3 is reached first at 2 Mbps; the flat segment up to 4 Mbps
        // must not inflate the answer.
        assert_abs_diff_eq!(p.interp_bitrate(0.3).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.interp_bitrate(1.0).unwrap(), 64.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.interp_bitrate(0.1).unwrap(), 1.0, epsilon = 1e-12);
        assert!(p.interp_bitrate(0.05).is_err());
        assert!(p.interp_bitrate(1.1).is_err());
    }

    #[test]
    fn flat_tail_returns_lowest_bitrate_with_quality_one() {
        let p = ClientProfile::new(
            "flat-tail",
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0],
            vec![0.2, 0.4, 0.6, 0.8, 1.0, 1.0, 1.0],
        )
        .unwrap();
        assert_eq!(p.interp_bitrate(1.0).unwrap(), 5.0);
    }

    #[test]
    fn normalize_scores_examples() {
        let out = normalize_scores(&[20.0, 60.0, 100.0], 20.0).unwrap();
        assert_eq!(out, vec![0.0, 0.5, 1.0]);

        let out = normalize_scores(&[1.0, 3.0, 5.0], 1.0).unwrap();
        assert_eq!(out, vec![0.0, 0.5, 1.0]);

        // Degenerate: nothing rises above the floor.
        assert!(normalize_scores(&[20.0, 20.0], 20.0).is_err());
        assert!(normalize_scores(&[], 20.0).is_err());
    }

    #[test]
    fn normalize_scores_output_envelope() {
        let out = normalize_scores(&[10.0, 30.0, 90.0], 20.0).unwrap();
        assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(out.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 1.0);
        assert_eq!(out[0], 0.0);
    }

    proptest! {
        #[test]
        fn interp_quality_is_monotone_and_bounded(
            raw_b in proptest::collection::vec(0.1f64..100.0, LADDER_LEN),
            raw_q in proptest::collection::vec(0.0f64..1.0, LADDER_LEN),
            probe in 0.0f64..1.0,
        ) {
            let mut bitrates = raw_b;
            bitrates.sort_by(|a, b| a.partial_cmp(b).unwrap());
            // Deduplicate by nudging: strict ascent is required.
            for i in 1..LADDER_LEN {
                if bitrates[i] <= bitrates[i - 1] {
                    bitrates[i] = bitrates[i - 1] + 0.01;
                }
            }
            let mut qualities = raw_q;
            qualities.sort_by(|a, b| a.partial_cmp(b).unwrap());
            qualities[LADDER_LEN - 1] = 1.0;
            let p = ClientProfile::new("prop", bitrates.clone(), qualities).unwrap();

            let lo = bitrates[0];
            let hi = bitrates[LADDER_LEN - 1];
            let x1 = lo + probe * (hi - lo);
            let x2 = lo + (probe * 0.5) * (hi - lo);
            let q1 = p.interp_quality(x1).unwrap();
            let q2 = p.interp_quality(x2).unwrap();
            prop_assert!((0.0..=1.0).contains(&q1));
            prop_assert!(q2 <= q1 + 1e-12);
        }

        #[test]
        fn interp_round_trip_on_strict_curves(probe in 0.0f64..=1.0) {
            let p = ClientProfile::new(
                "strict",
                vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
                vec![0.1, 0.25, 0.4, 0.6, 0.75, 0.9, 1.0],
            ).unwrap();
            let q = 0.1 + probe * 0.9;
            let b = p.interp_bitrate(q).unwrap();
            prop_assert!((p.interp_quality(b).unwrap() - q).abs() < 1e-9);
        }
    }
}
