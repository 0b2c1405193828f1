//! Dividing the bottleneck among concurrent downloads.

use crate::error::{Error, Result};
use crate::media::ClientProfile;
use crate::sim::SharingMode;

/// One client currently downloading: its device profile and the bitrate of
/// the segment it requested.
#[derive(Clone, Copy, Debug)]
pub struct Demand<'a> {
    pub profile: &'a ClientProfile,
    pub requested_mbps: f64,
}

/// Splits `bw_total_mbps` across the downloading clients. Shares always sum
/// to the total; only their proportions depend on the mode.
pub fn allocate_bandwidth(
    demands: &[Demand<'_>],
    bw_total_mbps: f64,
    mode: SharingMode,
) -> Result<Vec<f64>> {
    if demands.is_empty() {
        return Err(Error::Sim("no downloading clients to allocate to".into()));
    }
    if !(bw_total_mbps.is_finite() && bw_total_mbps >= 0.0) {
        return Err(Error::Sim(format!(
            "total bandwidth {bw_total_mbps} must be finite and non-negative"
        )));
    }
    let weights: Vec<f64> = match mode {
        SharingMode::Proportional => {
            for d in demands {
                if !(d.requested_mbps.is_finite() && d.requested_mbps > 0.0) {
                    return Err(Error::Sim(format!(
                        "requested bitrate {} must be positive",
                        d.requested_mbps
                    )));
                }
            }
            demands.iter().map(|d| d.requested_mbps).collect()
        }
        SharingMode::Minerva => {
            let profiles: Vec<&ClientProfile> = demands.iter().map(|d| d.profile).collect();
            minerva_weights(&profiles, bw_total_mbps)?
        }
    };
    let weight_sum: f64 = weights.iter().sum();
    Ok(weights
        .iter()
        .map(|w| bw_total_mbps * w / weight_sum)
        .collect())
}

/// Finds per-client weights that equalize interpolated quality across the
/// given profiles, scaled to a weight budget of `total_mbps`.
///
/// The common quality target is located by bisection: the sum of bitrates
/// needed to reach a target grows monotonically with the target, so the
/// level whose bitrate sum meets the budget is bracketed between quality 0
/// and 1. Clients whose lowest rung already exceeds the target stay pinned
/// at their lowest bitrate. Budgets outside the feasible band clamp to
/// everyone's lowest or highest rung.
pub fn minerva_weights(profiles: &[&ClientProfile], total_mbps: f64) -> Result<Vec<f64>> {
    if profiles.is_empty() {
        return Err(Error::Sim("no profiles to weight".into()));
    }
    if !(total_mbps.is_finite() && total_mbps >= 0.0) {
        return Err(Error::Sim(format!(
            "weight budget {total_mbps} must be finite and non-negative"
        )));
    }
    let min_sum: f64 = profiles.iter().map(|p| p.min_bitrate()).sum();
    let max_sum: f64 = profiles.iter().map(|p| p.max_bitrate()).sum();
    if total_mbps <= min_sum {
        return Ok(profiles.iter().map(|p| p.min_bitrate()).collect());
    }
    if total_mbps >= max_sum {
        return Ok(profiles.iter().map(|p| p.max_bitrate()).collect());
    }

    let bitrate_at = |p: &ClientProfile, theta: f64| -> f64 {
        let clamped = theta.max(p.qualities[0]);
        p.interp_bitrate(clamped)
            .expect("clamped quality target is within the ladder")
    };
    let demand_at =
        |theta: f64| -> f64 { profiles.iter().map(|p| bitrate_at(p, theta)).sum() };

    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if demand_at(mid) < total_mbps {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * 4.0 {
            break;
        }
    }
    let theta = 0.5 * (lo + hi);
    Ok(profiles.iter().map(|p| bitrate_at(p, theta)).collect())
}

/// Download share of one client as a piecewise-constant function of time.
/// Each `(start, rate)` point holds until the next point; the last holds
/// until `end_s`.
#[derive(Clone, Debug)]
pub struct ShareTimeline {
    points: Vec<(f64, f64)>,
    end_s: f64,
}

impl ShareTimeline {
    pub fn new(points: Vec<(f64, f64)>, end_s: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Sim("share timeline needs at least one piece".into()));
        }
        for (i, (t, rate)) in points.iter().enumerate() {
            if !t.is_finite() || !(rate.is_finite() && *rate >= 0.0) {
                return Err(Error::Sim(format!(
                    "share timeline piece ({t}, {rate}) is invalid"
                )));
            }
            if i > 0 && *t <= points[i - 1].0 {
                return Err(Error::Sim(
                    "share timeline points must be strictly increasing in time".into(),
                ));
            }
        }
        if end_s <= points[points.len() - 1].0 {
            return Err(Error::Sim(
                "share timeline must end after its last piece starts".into(),
            ));
        }
        Ok(ShareTimeline { points, end_s })
    }

    pub fn start_s(&self) -> f64 {
        self.points[0].0
    }

    pub fn end_s(&self) -> f64 {
        self.end_s
    }
}

/// Integrates a download of `megabits` along a share timeline from
/// `start_s`. Returns the completion time, or `None` when the timeline ends
/// before the download does.
pub fn integrate_download(
    megabits: f64,
    start_s: f64,
    timeline: &ShareTimeline,
) -> Result<Option<f64>> {
    if !(megabits.is_finite() && megabits >= 0.0) {
        return Err(Error::Sim(format!(
            "download size {megabits} must be finite and non-negative"
        )));
    }
    if start_s < timeline.start_s() || start_s > timeline.end_s() {
        return Err(Error::Sim(format!(
            "download start {start_s} lies outside the timeline"
        )));
    }
    if megabits == 0.0 {
        return Ok(Some(start_s));
    }
    let mut remaining = megabits;
    let mut t = start_s;
    for (i, &(piece_start, rate)) in timeline.points.iter().enumerate() {
        let piece_end = timeline
            .points
            .get(i + 1)
            .map_or(timeline.end_s, |next| next.0);
        if piece_end <= t {
            continue;
        }
        let span = piece_end - t.max(piece_start);
        let capacity = rate * span;
        if remaining <= capacity {
            return Ok(Some(t.max(piece_start) + remaining / rate));
        }
        remaining -= capacity;
        t = piece_end;
    }
    Ok(None)
}
