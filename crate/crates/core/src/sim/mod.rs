//! Event-driven simulation of clients streaming over a shared bottleneck.
//!
//! Time advances from event to event: a trace breakpoint changing the total
//! bandwidth, a segment download completing, or a full-buffer client gaining
//! enough space to continue. Between events every quantity evolves linearly,
//! so buffers, stall times, and download progress are integrated exactly
//! rather than on a tick grid. Whenever the set of downloading clients or
//! the total bandwidth changes, all in-flight shares are recomputed.
//!
//! Clients act asynchronously: an agent is queried exactly when its client
//! must pick the next segment's bitrate, at stream start and after each
//! completed download (delayed while the buffer lacks room for a segment).

mod bandwidth;
mod episode;

pub use bandwidth::{allocate_bandwidth, integrate_download, minerva_weights, Demand, ShareTimeline};
pub use episode::run_episode;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::{ProfileSet, LADDER_LEN};
use crate::metrics::{QoeCoefficients, DEFAULT_ALPHA, DEFAULT_KAPPA};
use crate::traces::Trace;

/// How the bottleneck bandwidth is divided among downloading clients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SharingMode {
    /// Shares proportional to the requested segment bitrates.
    Proportional,
    /// Shares sized so all downloading clients reach the same interpolated
    /// quality.
    Minerva,
}

impl SharingMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SharingMode::Proportional => "proportional",
            SharingMode::Minerva => "minerva",
        }
    }
}

impl fmt::Display for SharingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SharingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "proportional" => Ok(SharingMode::Proportional),
            "minerva" => Ok(SharingMode::Minerva),
            other => Err(Error::Config(format!("unknown sharing mode '{other}'"))),
        }
    }
}

/// Everything one episode depends on. Given equal configs (including the
/// seed), episodes are bit-for-bit identical.
#[derive(Clone, Debug)]
pub struct SessionConfig {
    pub profiles: ProfileSet,
    pub trace: Trace,
    pub sharing: SharingMode,
    /// Playback length of one segment in seconds.
    pub segment_duration_s: f64,
    /// Segments each client downloads over the episode.
    pub num_segments: u32,
    /// Maximum buffered playback seconds per client.
    pub buffer_capacity_s: f64,
    /// Downloaded segments required before playback starts.
    pub startup_segments: u32,
    pub coeffs: QoeCoefficients,
    /// Weight of own QoE versus fairness in the per-step reward.
    pub alpha: f64,
    /// Smoothing factor of the QoE moving average.
    pub kappa: f64,
    pub seed: u64,
}

impl SessionConfig {
    pub fn new(profiles: ProfileSet, trace: Trace) -> Self {
        SessionConfig {
            profiles,
            trace,
            sharing: SharingMode::Proportional,
            segment_duration_s: 1.0,
            num_segments: 100,
            buffer_capacity_s: 8.0,
            startup_segments: 1,
            coeffs: QoeCoefficients::default(),
            alpha: DEFAULT_ALPHA,
            kappa: DEFAULT_KAPPA,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.profiles.validate()?;
        if !(self.segment_duration_s.is_finite() && self.segment_duration_s > 0.0) {
            return Err(Error::Config("segment duration must be positive".into()));
        }
        if self.num_segments == 0 {
            return Err(Error::Config("num_segments must be at least 1".into()));
        }
        if self.buffer_capacity_s < self.segment_duration_s {
            return Err(Error::Config(
                "buffer capacity must hold at least one segment".into(),
            ));
        }
        if self.startup_segments == 0 || self.startup_segments > self.num_segments {
            return Err(Error::Config(
                "startup_segments must be in [1, num_segments]".into(),
            ));
        }
        if self.startup_segments as f64 * self.segment_duration_s > self.buffer_capacity_s {
            return Err(Error::Config(
                "startup segments must fit into the buffer".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.kappa) {
            return Err(Error::Config(format!("kappa {} outside [0, 1)", self.kappa)));
        }
        Ok(())
    }
}

/// What an agent sees when choosing the next segment's bitrate: the outcome
/// of its last completed download, its buffer, remaining work, and the
/// static ladders of its client. Flattens to a fixed 23-scalar layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// QoE of the last completed segment (0 before the first).
    pub qoe_last: f64,
    /// Bias-corrected moving average of QoE so far (0 before the first).
    pub v_ema: f64,
    /// Perceptual quality of the last segment (0 before the first).
    pub q_last: f64,
    /// Bitrate of the last segment in Mbps (0 before the first).
    pub bitrate_last: f64,
    /// Wall-clock seconds the last download took (0 before the first).
    pub dt_last: f64,
    /// Initial stall seconds accrued during the last download.
    pub t_init_last: f64,
    /// Rebuffering stall seconds accrued during the last download.
    pub t_reb_last: f64,
    /// Current buffered playback seconds.
    pub buffer: f64,
    /// Segments not yet downloaded.
    pub segments_remaining: u32,
    /// The client's bitrate ladder in Mbps.
    pub bitrate_ladder: Vec<f64>,
    /// Quality score of each ladder rung.
    pub quality_ladder: Vec<f64>,
}

impl Observation {
    /// Observation handed to an agent before anything has happened.
    pub fn initial(num_segments: u32, bitrate_ladder: Vec<f64>, quality_ladder: Vec<f64>) -> Self {
        Observation {
            qoe_last: 0.0,
            v_ema: 0.0,
            q_last: 0.0,
            bitrate_last: 0.0,
            dt_last: 0.0,
            t_init_last: 0.0,
            t_reb_last: 0.0,
            buffer: 0.0,
            segments_remaining: num_segments,
            bitrate_ladder,
            quality_ladder,
        }
    }

    /// Fixed flat layout: nine dynamic scalars followed by the two ladders.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(9 + 2 * LADDER_LEN);
        v.extend_from_slice(&[
            self.qoe_last,
            self.v_ema,
            self.q_last,
            self.bitrate_last,
            self.dt_last,
            self.t_init_last,
            self.t_reb_last,
            self.buffer,
            self.segments_remaining as f64,
        ]);
        v.extend_from_slice(&self.bitrate_ladder);
        v.extend_from_slice(&self.quality_ladder);
        v
    }
}

/// One completed download step of one client.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepRecord {
    pub client: usize,
    /// Step index: 0 for the client's first segment.
    pub t: u32,
    /// Simulation time of the download completion.
    pub sim_time: f64,
    /// Chosen ladder index.
    pub action: usize,
    /// Observation produced by this step (input to the next decision).
    pub observation: Observation,
    pub qoe: f64,
    pub fairness: f64,
    pub reward: f64,
    /// Clients whose moving averages entered the fairness value.
    pub participants: Vec<usize>,
}

/// Per-client wall-clock accounting over an episode. The four duration
/// buckets partition the episode length exactly.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ClientTotals {
    /// Seconds spent playing content.
    pub playback_s: f64,
    /// Stall seconds before playback first started.
    pub init_stall_s: f64,
    /// Stall seconds after playback started.
    pub rebuffer_stall_s: f64,
    /// Seconds after the client finished playing everything.
    pub idle_s: f64,
    /// Integral of the buffer level over the episode, in seconds squared.
    pub buffer_integral: f64,
    pub segments_downloaded: u32,
    pub finished_playback: bool,
    pub finish_time_s: Option<f64>,
}

/// Echo of the session parameters an episode ran under.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionEcho {
    pub clients: Vec<String>,
    pub sharing: SharingMode,
    pub segment_duration_s: f64,
    pub num_segments: u32,
    pub buffer_capacity_s: f64,
    pub startup_segments: u32,
    pub alpha: f64,
    pub kappa: f64,
    pub seed: u64,
}

/// Full record of one episode: every step of every client plus per-client
/// totals.
#[derive(Clone, Debug, Serialize)]
pub struct EpisodeLog {
    pub trace_id: String,
    pub config: SessionEcho,
    /// Step records per client, in step order.
    pub steps: Vec<Vec<StepRecord>>,
    pub totals: Vec<ClientTotals>,
    /// When the episode ended: trace end or all clients finished.
    pub end_time_s: f64,
    /// Largest observed gap between the sum of shares and the total
    /// bandwidth at any event boundary. Diagnostic; stays at rounding noise.
    pub max_share_deviation: f64,
}

impl EpisodeLog {
    /// All step records in chronological order (ties by client id, matching
    /// processing order).
    pub fn chronological_steps(&self) -> Vec<&StepRecord> {
        let mut all: Vec<&StepRecord> = self.steps.iter().flatten().collect();
        all.sort_by(|a, b| {
            a.sim_time
                .partial_cmp(&b.sim_time)
                .unwrap()
                .then(a.client.cmp(&b.client))
        });
        all
    }

    /// Line-delimited log: one JSON record per step, chronological.
    pub fn to_jsonl(&self) -> String {
        #[derive(Serialize)]
        struct Row<'a> {
            trace: &'a str,
            client: usize,
            t: u32,
            sim_time: f64,
            action: usize,
            qoe: f64,
            fairness: f64,
            reward: f64,
            buffer: f64,
            dt: f64,
            t_init: f64,
            t_reb: f64,
        }
        let mut out = String::new();
        for s in self.chronological_steps() {
            let row = Row {
                trace: &self.trace_id,
                client: s.client,
                t: s.t,
                sim_time: s.sim_time,
                action: s.action,
                qoe: s.qoe,
                fairness: s.fairness,
                reward: s.reward,
                buffer: s.observation.buffer,
                dt: s.observation.dt_last,
                t_init: s.observation.t_init_last,
                t_reb: s.observation.t_reb_last,
            };
            out.push_str(&serde_json::to_string(&row).expect("step rows serialize"));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::ProfileSet;
    use crate::traces::Trace;

    #[test]
    fn observation_flattens_to_23_scalars() {
        let set = ProfileSet::builtin_default();
        let p = &set.clients[0];
        let obs = Observation::initial(100, p.bitrates_mbps.clone(), p.qualities.clone());
        let v = obs.to_vec();
        assert_eq!(v.len(), 23);
        // Zeros for the dynamic part, the segment budget, then the ladders.
        assert!(v[..8].iter().all(|x| *x == 0.0));
        assert_eq!(v[8], 100.0);
        assert_eq!(&v[9..16], p.bitrates_mbps.as_slice());
        assert_eq!(&v[16..23], p.qualities.as_slice());
    }

    #[test]
    fn config_validation_catches_contradictions() {
        let set = ProfileSet::builtin_default();
        let trace = Trace::constant("t", 10.0, 200.0).unwrap();
        let ok = SessionConfig::new(set.clone(), trace.clone());
        ok.validate().unwrap();

        let mut bad = ok.clone();
        bad.buffer_capacity_s = 0.5;
        assert!(bad.validate().is_err());

        let mut bad = ok.clone();
        bad.startup_segments = 0;
        assert!(bad.validate().is_err());

        let mut bad = ok.clone();
        bad.startup_segments = 101;
        assert!(bad.validate().is_err());

        let mut bad = ok.clone();
        bad.startup_segments = 9; // nine segments cannot fit an 8 s buffer
        assert!(bad.validate().is_err());

        let mut bad = ok.clone();
        bad.alpha = 1.5;
        assert!(bad.validate().is_err());

        let mut bad = ok;
        bad.kappa = 1.0;
        assert!(bad.validate().is_err());
    }
}
