//! Batch experiments: one episode per trace, per-client metrics, and the
//! per-class aggregate tables.
//!
//! Episodes are independent and run in parallel; results are assembled in
//! dataset order, and every per-episode seed is derived from the master
//! seed and the trace id alone, so a run is reproducible regardless of
//! thread scheduling.

use rayon::prelude::*;
use serde::Serialize;

use crate::agents::AgentSpec;
use crate::error::{Error, Result};
use crate::media::ProfileSet;
use crate::metrics::{population_std, QoeCoefficients, DEFAULT_ALPHA, DEFAULT_KAPPA};
use crate::sim::{run_episode, EpisodeLog, SessionConfig, SharingMode};
use crate::traces::{Dataset, Split, TraceClass};
use crate::util::{format_sig, mix_seed};

/// A batch of episodes: one client set and agent line-up, run once per
/// trace of a dataset.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub profiles: ProfileSet,
    /// One spec per client, or a single spec shared by all clients.
    pub agents: Vec<AgentSpec>,
    pub sharing: SharingMode,
    pub segment_duration_s: f64,
    pub num_segments: u32,
    pub buffer_capacity_s: f64,
    pub startup_segments: u32,
    pub coeffs: QoeCoefficients,
    pub alpha: f64,
    pub kappa: f64,
    pub master_seed: u64,
}

impl Experiment {
    pub fn new(profiles: ProfileSet, agents: Vec<AgentSpec>) -> Self {
        Experiment {
            profiles,
            agents,
            sharing: SharingMode::Proportional,
            segment_duration_s: 1.0,
            num_segments: 100,
            buffer_capacity_s: 8.0,
            startup_segments: 1,
            coeffs: QoeCoefficients::default(),
            alpha: DEFAULT_ALPHA,
            kappa: DEFAULT_KAPPA,
            master_seed: 0,
        }
    }

    /// The agent spec of each client, replicating a single shared spec.
    pub fn resolved_agents(&self) -> Result<Vec<AgentSpec>> {
        let n = self.profiles.len();
        if self.agents.len() == 1 {
            return Ok(vec![self.agents[0]; n]);
        }
        if self.agents.len() == n {
            return Ok(self.agents.clone());
        }
        Err(Error::Config(format!(
            "{} agent specs for {n} clients (give one per client or a single shared one)",
            self.agents.len()
        )))
    }

    /// Short label naming the agent line-up in output tables.
    pub fn agent_label(&self) -> String {
        let mut labels: Vec<String> = self.agents.iter().map(|a| a.to_string()).collect();
        labels.dedup();
        if labels.len() == 1 {
            labels.pop().unwrap()
        } else {
            labels.join("+")
        }
    }

    fn session_for(&self, trace: crate::traces::Trace) -> SessionConfig {
        let seed = mix_seed(self.master_seed, &trace.id);
        SessionConfig {
            profiles: self.profiles.clone(),
            trace,
            sharing: self.sharing,
            segment_duration_s: self.segment_duration_s,
            num_segments: self.num_segments,
            buffer_capacity_s: self.buffer_capacity_s,
            startup_segments: self.startup_segments,
            coeffs: self.coeffs,
            alpha: self.alpha,
            kappa: self.kappa,
            seed,
        }
    }
}

/// One finished episode with its trace labels.
#[derive(Clone, Debug, Serialize)]
pub struct EpisodeRun {
    pub class: TraceClass,
    pub split: Option<Split>,
    pub log: EpisodeLog,
}

/// Runs one episode per dataset entry, in parallel, assembled in dataset
/// order.
pub fn run_experiment(exp: &Experiment, dataset: &Dataset) -> Result<Vec<EpisodeRun>> {
    if dataset.is_empty() {
        return Err(Error::Config("no traces selected for the experiment".into()));
    }
    let specs = exp.resolved_agents()?;
    dataset
        .entries
        .par_iter()
        .map(|entry| {
            let mut agents = specs
                .iter()
                .map(|s| s.build(exp.segment_duration_s))
                .collect::<Result<Vec<_>>>()?;
            let config = exp.session_for(entry.trace.clone());
            let log = run_episode(&config, &mut agents)?;
            Ok(EpisodeRun {
                class: entry.class,
                split: entry.split,
                log,
            })
        })
        .collect()
}

/// Per-client metrics of one episode.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct ClientEpisodeMetrics {
    /// Sum of step rewards.
    #[serde(rename = "return")]
    pub ret: f64,
    /// Mean step QoE.
    pub qoe: f64,
    /// Mean step fairness.
    pub fairness: f64,
    /// Mean perceptual quality of the downloaded segments.
    pub perceptual_quality: f64,
    /// Stall seconds before playback started, summed over steps.
    pub init_rebuffer_s: f64,
    /// Stall seconds after playback started, summed over steps.
    pub rebuffer_s: f64,
    /// Fraction of consecutive segment pairs with a quality change.
    pub quality_switches: f64,
    /// Mean absolute quality change between consecutive segments.
    pub quality_difference: f64,
    /// Time-averaged buffer level in seconds.
    pub buffer_level: f64,
    /// Seconds of content actually played.
    pub total_playback_s: f64,
}

pub const METRIC_NAMES: [&str; 10] = [
    "return",
    "qoe",
    "fairness",
    "perceptual_quality",
    "init_rebuffer_s",
    "rebuffer_s",
    "quality_switches",
    "quality_difference",
    "buffer_level",
    "total_playback_s",
];

impl ClientEpisodeMetrics {
    pub fn to_array(self) -> [f64; 10] {
        [
            self.ret,
            self.qoe,
            self.fairness,
            self.perceptual_quality,
            self.init_rebuffer_s,
            self.rebuffer_s,
            self.quality_switches,
            self.quality_difference,
            self.buffer_level,
            self.total_playback_s,
        ]
    }

    pub fn from_array(a: [f64; 10]) -> Self {
        ClientEpisodeMetrics {
            ret: a[0],
            qoe: a[1],
            fairness: a[2],
            perceptual_quality: a[3],
            init_rebuffer_s: a[4],
            rebuffer_s: a[5],
            quality_switches: a[6],
            quality_difference: a[7],
            buffer_level: a[8],
            total_playback_s: a[9],
        }
    }
}

fn mean_of(values: impl Iterator<Item = f64>, count: usize) -> f64 {
    if count == 0 {
        0.0
    } else {
        values.sum::<f64>() / count as f64
    }
}

/// Computes each client's metrics from an episode log.
pub fn per_episode_metrics(log: &EpisodeLog) -> Vec<ClientEpisodeMetrics> {
    log.steps
        .iter()
        .zip(&log.totals)
        .map(|(steps, totals)| {
            let n = steps.len();
            let qualities: Vec<f64> = steps.iter().map(|s| s.observation.q_last).collect();
            let pairs = n.saturating_sub(1);
            let switches = qualities
                .windows(2)
                .filter(|w| w[0] != w[1])
                .count();
            let diff_sum: f64 = qualities.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
            ClientEpisodeMetrics {
                ret: steps.iter().map(|s| s.reward).sum(),
                qoe: mean_of(steps.iter().map(|s| s.qoe), n),
                fairness: mean_of(steps.iter().map(|s| s.fairness), n),
                perceptual_quality: mean_of(qualities.iter().copied(), n),
                init_rebuffer_s: steps.iter().map(|s| s.observation.t_init_last).sum(),
                rebuffer_s: steps.iter().map(|s| s.observation.t_reb_last).sum(),
                quality_switches: if pairs == 0 { 0.0 } else { switches as f64 / pairs as f64 },
                quality_difference: if pairs == 0 { 0.0 } else { diff_sum / pairs as f64 },
                buffer_level: if log.end_time_s > 0.0 {
                    totals.buffer_integral / log.end_time_s
                } else {
                    0.0
                },
                total_playback_s: totals.playback_s,
            }
        })
        .collect()
}

/// Field-wise mean over the clients of one episode.
pub fn client_mean(metrics: &[ClientEpisodeMetrics]) -> ClientEpisodeMetrics {
    let mut acc = [0.0_f64; 10];
    for m in metrics {
        for (slot, v) in acc.iter_mut().zip(m.to_array()) {
            *slot += v;
        }
    }
    let n = metrics.len().max(1) as f64;
    acc.iter_mut().for_each(|v| *v /= n);
    ClientEpisodeMetrics::from_array(acc)
}

/// One aggregate table row: mean and population std of every metric over
/// the episodes of one class (or over all episodes).
#[derive(Clone, Debug, Serialize)]
pub struct MetricsRow {
    pub agent: String,
    pub sharing: SharingMode,
    /// Class name, or `all` for the cross-class row.
    pub class: String,
    pub episodes: usize,
    pub mean: ClientEpisodeMetrics,
    pub std: ClientEpisodeMetrics,
}

fn aggregate_group(
    agent: &str,
    sharing: SharingMode,
    class: &str,
    samples: &[ClientEpisodeMetrics],
) -> MetricsRow {
    let mut mean = [0.0_f64; 10];
    let mut std = [0.0_f64; 10];
    for k in 0..10 {
        let values: Vec<f64> = samples.iter().map(|m| m.to_array()[k]).collect();
        mean[k] = mean_of(values.iter().copied(), values.len());
        std[k] = population_std(&values);
    }
    MetricsRow {
        agent: agent.to_string(),
        sharing,
        class: class.to_string(),
        episodes: samples.len(),
        mean: ClientEpisodeMetrics::from_array(mean),
        std: ClientEpisodeMetrics::from_array(std),
    }
}

/// Aggregates already-labeled episode means into per-class rows plus the
/// `all` row. Classes without episodes are omitted (with a log notice).
pub fn aggregate_records(
    agent: &str,
    sharing: SharingMode,
    records: &[(TraceClass, ClientEpisodeMetrics)],
) -> Vec<MetricsRow> {
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    for class in TraceClass::ALL {
        let samples: Vec<ClientEpisodeMetrics> = records
            .iter()
            .filter(|(c, _)| *c == class)
            .map(|(_, m)| *m)
            .collect();
        if samples.is_empty() {
            missing.push(class.as_str());
            continue;
        }
        rows.push(aggregate_group(agent, sharing, class.as_str(), &samples));
    }
    if !missing.is_empty() {
        log::warn!("no episodes for class(es): {}", missing.join(", "));
    }
    let all: Vec<ClientEpisodeMetrics> = records.iter().map(|(_, m)| *m).collect();
    if !all.is_empty() {
        rows.push(aggregate_group(agent, sharing, "all", &all));
    }
    rows
}

/// Full aggregation of an experiment's episode runs.
pub fn aggregate(exp: &Experiment, runs: &[EpisodeRun]) -> Vec<MetricsRow> {
    let records: Vec<(TraceClass, ClientEpisodeMetrics)> = runs
        .iter()
        .map(|r| (r.class, client_mean(&per_episode_metrics(&r.log))))
        .collect();
    aggregate_records(&exp.agent_label(), exp.sharing, &records)
}

/// Renders rows as CSV with a fixed schema and 6-significant-digit floats,
/// so equal results are byte-identical files.
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::new();
    out.push_str(
        "# per-episode client means aggregated over traces; _std columns are population standard deviations over traces\n",
    );
    out.push_str("agent,sharing,class,episodes");
    for name in METRIC_NAMES {
        out.push_str(&format!(",{name}_mean,{name}_std"));
    }
    out.push('\n');
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{}",
            row.agent, row.sharing, row.class, row.episodes
        ));
        for (m, s) in row.mean.to_array().iter().zip(row.std.to_array()) {
            out.push_str(&format!(",{},{}", format_sig(*m), format_sig(s)));
        }
        out.push('\n');
    }
    out
}

/// Concatenated JSONL step logs of all runs.
pub fn steps_jsonl(runs: &[EpisodeRun]) -> String {
    runs.iter().map(|r| r.log.to_jsonl()).collect()
}
