//! The episode loop: advances exact event by exact event until the trace
//! runs out or every client has played its last segment.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agents::Policy;
use crate::error::{Error, Result};
use crate::media::ClientProfile;
use crate::metrics::{self, EmaState, QoeInputs};
use crate::sim::{
    allocate_bandwidth, ClientTotals, Demand, EpisodeLog, Observation, SessionConfig, SessionEcho,
    StepRecord,
};
use crate::util::client_seed;

/// Slack when checking whether a segment still fits the buffer, absorbing
/// rounding from the wake-time arithmetic.
const ADMIT_EPS: f64 = 1e-9;

/// Buffer levels below this count as drained.
const FINISH_EPS: f64 = 1e-12;

struct Download {
    remaining_mb: f64,
    started_at: f64,
    action: usize,
    t_init: f64,
    t_reb: f64,
}

enum Phase {
    Downloading(Download),
    /// Buffer too full for another segment; resumes at `wake_at`.
    Waiting { wake_at: f64 },
    /// All segments fetched; the buffer drains out.
    DoneDownloading,
}

struct Client {
    profile: ClientProfile,
    rng: ChaCha8Rng,
    phase: Phase,
    buffer_s: f64,
    playback_started: bool,
    finished: bool,
    segments_done: u32,
    prev_quality: Option<f64>,
    ema: EmaState,
    /// Latest bias-corrected QoE average, once one exists.
    v: Option<f64>,
    /// Observation produced by the last completed step.
    last_obs: Observation,
    totals: ClientTotals,
    steps: Vec<StepRecord>,
}

/// Runs one episode to its end and returns the full log.
///
/// One agent drives one client, queried exactly when that client needs its
/// next bitrate: once at time zero and once after each completed segment
/// (postponed while the buffer lacks room). The episode ends when the trace
/// is exhausted, dropping in-flight downloads, or earlier if every client
/// finished playback. Coincident events settle in a fixed order: trace end,
/// then completions by ascending client id, then buffer wake-ups by
/// ascending client id.
pub fn run_episode(config: &SessionConfig, agents: &mut [Box<dyn Policy>]) -> Result<EpisodeLog> {
    config.validate()?;
    let n = config.profiles.len();
    if agents.len() != n {
        return Err(Error::Sim(format!(
            "{} agents supplied for {n} clients",
            agents.len()
        )));
    }
    for agent in agents.iter_mut() {
        agent.reset();
    }

    let mut clients: Vec<Client> = config
        .profiles
        .clients
        .iter()
        .enumerate()
        .map(|(i, p)| Client {
            profile: p.clone(),
            rng: ChaCha8Rng::seed_from_u64(client_seed(config.seed, i)),
            phase: Phase::Waiting { wake_at: 0.0 },
            buffer_s: 0.0,
            playback_started: false,
            finished: false,
            segments_done: 0,
            prev_quality: None,
            ema: EmaState::new(),
            v: None,
            last_obs: Observation::initial(
                config.num_segments,
                p.bitrates_mbps.clone(),
                p.qualities.clone(),
            ),
            totals: ClientTotals::default(),
            steps: Vec::with_capacity(config.num_segments as usize),
        })
        .collect();

    let duration = config.trace.duration();
    let mut now = 0.0_f64;
    let mut max_dev = 0.0_f64;

    for i in 0..n {
        start_download(&mut clients[i], agents[i].as_mut(), config, now)?;
    }

    let iteration_cap = 1_000_000 + 64 * n as u64 * config.num_segments as u64;
    let mut iterations = 0_u64;
    loop {
        iterations += 1;
        if iterations > iteration_cap {
            return Err(Error::Sim("episode made no progress".into()));
        }

        // Shares under the current bandwidth and downloading set.
        let bw = config.trace.bandwidth_at(now);
        let downloading: Vec<usize> = (0..n)
            .filter(|&i| matches!(clients[i].phase, Phase::Downloading(_)))
            .collect();
        let mut share_of = vec![0.0_f64; n];
        if !downloading.is_empty() {
            let demands: Vec<Demand<'_>> = downloading
                .iter()
                .map(|&i| {
                    let action = match &clients[i].phase {
                        Phase::Downloading(dl) => dl.action,
                        _ => unreachable!(),
                    };
                    Demand {
                        profile: &clients[i].profile,
                        requested_mbps: clients[i].profile.bitrates_mbps[action],
                    }
                })
                .collect();
            let shares = allocate_bandwidth(&demands, bw, config.sharing)?;
            max_dev = max_dev.max((shares.iter().sum::<f64>() - bw).abs());
            for (&i, s) in downloading.iter().zip(shares) {
                share_of[i] = s;
            }
        }

        // Next event: trace breakpoint (or end), completions, wake-ups, and
        // buffer run-outs of clients that already fetched everything.
        let mut t_next = config.trace.next_change_after(now);
        let mut completion_at: Vec<Option<f64>> = vec![None; n];
        let mut wake_ids: Vec<usize> = Vec::new();
        for (i, c) in clients.iter().enumerate() {
            let candidate = match &c.phase {
                Phase::Downloading(dl) if share_of[i] > 0.0 => {
                    let t = now + dl.remaining_mb / share_of[i];
                    completion_at[i] = Some(t);
                    t
                }
                Phase::Downloading(_) => continue,
                Phase::Waiting { wake_at } => {
                    wake_ids.push(i);
                    *wake_at
                }
                Phase::DoneDownloading if c.playback_started && !c.finished => now + c.buffer_s,
                Phase::DoneDownloading => continue,
            };
            t_next = t_next.min(candidate);
        }
        let t_next = t_next.min(duration).max(now);

        advance(&mut clients, &share_of, now, t_next);
        now = t_next;

        for c in clients.iter_mut() {
            if matches!(c.phase, Phase::DoneDownloading)
                && c.playback_started
                && !c.finished
                && c.buffer_s <= FINISH_EPS
            {
                c.buffer_s = 0.0;
                c.finished = true;
                c.totals.finished_playback = true;
                c.totals.finish_time_s = Some(now);
            }
        }

        if now >= duration {
            break;
        }

        for i in 0..n {
            if matches!(completion_at[i], Some(t) if t <= t_next) {
                complete_download(&mut clients, i, agents[i].as_mut(), config, now)?;
            }
        }

        for &i in &wake_ids {
            let due = matches!(&clients[i].phase, Phase::Waiting { wake_at } if *wake_at <= t_next);
            if due {
                start_download(&mut clients[i], agents[i].as_mut(), config, now)?;
            }
        }

        if clients.iter().all(|c| c.finished) {
            break;
        }
    }

    let echo = SessionEcho {
        clients: config
            .profiles
            .clients
            .iter()
            .map(|p| p.name.clone())
            .collect(),
        sharing: config.sharing,
        segment_duration_s: config.segment_duration_s,
        num_segments: config.num_segments,
        buffer_capacity_s: config.buffer_capacity_s,
        startup_segments: config.startup_segments,
        alpha: config.alpha,
        kappa: config.kappa,
        seed: config.seed,
    };
    Ok(EpisodeLog {
        trace_id: config.trace.id.clone(),
        config: echo,
        steps: clients
            .iter_mut()
            .map(|c| std::mem::take(&mut c.steps))
            .collect(),
        totals: clients.into_iter().map(|c| c.totals).collect(),
        end_time_s: now,
        max_share_deviation: max_dev,
    })
}

/// Evolves every client linearly across `[from, to]`: download progress,
/// buffer drain, playback, and the stall and idle clocks.
fn advance(clients: &mut [Client], share_of: &[f64], from: f64, to: f64) {
    let dt = to - from;
    if dt <= 0.0 {
        return;
    }
    for (i, c) in clients.iter_mut().enumerate() {
        if let Phase::Downloading(dl) = &mut c.phase {
            dl.remaining_mb = (dl.remaining_mb - share_of[i] * dt).max(0.0);
        }
        if c.finished {
            c.totals.idle_s += dt;
            continue;
        }
        if !c.playback_started {
            c.totals.init_stall_s += dt;
            c.totals.buffer_integral += c.buffer_s * dt;
            if let Phase::Downloading(dl) = &mut c.phase {
                dl.t_init += dt;
            }
            continue;
        }
        let played = dt.min(c.buffer_s);
        let gap = dt - played;
        c.totals.playback_s += played;
        c.totals.buffer_integral += c.buffer_s * played - 0.5 * played * played;
        c.buffer_s = (c.buffer_s - played).max(0.0);
        if gap > 0.0 {
            match &mut c.phase {
                Phase::Downloading(dl) => {
                    dl.t_reb += gap;
                    c.totals.rebuffer_stall_s += gap;
                }
                // A drained buffer with nothing left to fetch is the tail
                // sliver right before the finish flag lands.
                Phase::DoneDownloading | Phase::Waiting { .. } => c.totals.idle_s += gap,
            }
        }
    }
}

/// Finalizes client `i`'s in-flight download at time `now`: scores the
/// segment, records the step, and starts the next download or the wait for
/// buffer space.
fn complete_download(
    clients: &mut [Client],
    i: usize,
    agent: &mut dyn Policy,
    config: &SessionConfig,
    now: f64,
) -> Result<()> {
    let dl = match std::mem::replace(&mut clients[i].phase, Phase::DoneDownloading) {
        Phase::Downloading(dl) => dl,
        _ => return Err(Error::Sim("completion for a client not downloading".into())),
    };
    let d = config.segment_duration_s;

    let (step_index, quality, bitrate, qoe);
    {
        let c = &mut clients[i];
        step_index = c.segments_done;
        bitrate = c.profile.bitrates_mbps[dl.action];
        quality = c.profile.qualities[dl.action];
        qoe = metrics::qoe(
            &QoeInputs {
                t: step_index,
                quality,
                prev_quality: c.prev_quality,
                t_init: dl.t_init,
                t_reb: dl.t_reb,
            },
            &config.coeffs,
        )?;
        let corrected = c.ema.update(qoe, config.kappa)?;
        c.v = Some(corrected);
        c.buffer_s += d;
        c.segments_done += 1;
        c.totals.segments_downloaded = c.segments_done;
        if !c.playback_started && c.segments_done >= config.startup_segments {
            c.playback_started = true;
        }
        c.prev_quality = Some(quality);
    }

    // Fairness spans every client still playing (or yet to play), scored by
    // its latest QoE average. Clients without a completed segment yet stay
    // out; so do clients that already finished.
    let mut participants = Vec::new();
    let mut averages = Vec::new();
    for (k, other) in clients.iter().enumerate() {
        if other.finished {
            continue;
        }
        if let Some(v) = other.v {
            participants.push(k);
            averages.push(v);
        }
    }
    let fairness = metrics::fairness(&averages)?;
    let reward = metrics::reward(qoe, fairness, config.alpha)?;

    let c = &mut clients[i];
    let obs = Observation {
        qoe_last: qoe,
        v_ema: c.v.expect("average was just updated"),
        q_last: quality,
        bitrate_last: bitrate,
        dt_last: now - dl.started_at,
        t_init_last: dl.t_init,
        t_reb_last: dl.t_reb,
        buffer: c.buffer_s,
        segments_remaining: config.num_segments - c.segments_done,
        bitrate_ladder: c.profile.bitrates_mbps.clone(),
        quality_ladder: c.profile.qualities.clone(),
    };
    c.steps.push(StepRecord {
        client: i,
        t: step_index,
        sim_time: now,
        action: dl.action,
        observation: obs.clone(),
        qoe,
        fairness,
        reward,
        participants,
    });
    c.last_obs = obs;

    if c.segments_done == config.num_segments {
        // Phase is already DoneDownloading from the take above.
        return Ok(());
    }
    if c.buffer_s + d <= config.buffer_capacity_s + ADMIT_EPS {
        start_download(c, agent, config, now)
    } else {
        let wake_at = now + (c.buffer_s - (config.buffer_capacity_s - d));
        c.phase = Phase::Waiting { wake_at };
        Ok(())
    }
}

/// Queries the agent with the freshest buffer level and opens the download
/// it picked.
fn start_download(
    c: &mut Client,
    agent: &mut dyn Policy,
    config: &SessionConfig,
    now: f64,
) -> Result<()> {
    let mut obs = c.last_obs.clone();
    obs.buffer = c.buffer_s;
    let action = agent.act(&obs, &mut c.rng);
    if action >= c.profile.bitrates_mbps.len() {
        return Err(Error::Agent(format!(
            "action {action} outside the {}-rung ladder",
            c.profile.bitrates_mbps.len()
        )));
    }
    c.phase = Phase::Downloading(Download {
        remaining_mb: c.profile.bitrates_mbps[action] * config.segment_duration_s,
        started_at: now,
        action,
        t_init: 0.0,
        t_reb: 0.0,
    });
    Ok(())
}
