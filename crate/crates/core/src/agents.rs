//! Bitrate selection policies and the textual specs that name them.
//!
//! A policy is queried once per segment, right when the simulator needs the
//! next bitrate for its client, and answers with a ladder index. Policies
//! see only their own client's observation; any state they keep (like the
//! greedy throughput history) must be rebuilt from those observations.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::sim::Observation;

pub const DEFAULT_GREEDY_WINDOW: usize = 8;

/// A bitrate decision rule. `act` returns an index into the client's
/// ladder; the simulator validates it.
pub trait Policy: Send {
    fn act(&mut self, obs: &Observation, rng: &mut dyn RngCore) -> usize;

    /// Clears per-episode state. Called before an episode starts.
    fn reset(&mut self) {}
}

/// Always the lowest rung.
#[derive(Clone, Copy, Debug, Default)]
pub struct MinPolicy;

impl Policy for MinPolicy {
    fn act(&mut self, _obs: &Observation, _rng: &mut dyn RngCore) -> usize {
        0
    }
}

/// Always the highest rung.
#[derive(Clone, Copy, Debug, Default)]
pub struct MaxPolicy;

impl Policy for MaxPolicy {
    fn act(&mut self, obs: &Observation, _rng: &mut dyn RngCore) -> usize {
        obs.bitrate_ladder.len() - 1
    }
}

/// A rung drawn uniformly at random each segment.
#[derive(Clone, Copy, Debug, Default)]
pub struct RandomPolicy;

impl Policy for RandomPolicy {
    fn act(&mut self, obs: &Observation, rng: &mut dyn RngCore) -> usize {
        rng.gen_range(0..obs.bitrate_ladder.len())
    }
}

/// Picks the largest rung whose download, at the mean throughput of the
/// last few segments, would fit into the current buffer.
///
/// The time allowance is `max(buffer, segment_duration)`, so an empty
/// buffer still permits rungs that download in real time. With no
/// throughput history yet the lowest rung is chosen.
#[derive(Clone, Debug)]
pub struct GreedyPolicy {
    window: usize,
    segment_duration_s: f64,
    rates: VecDeque<f64>,
}

impl GreedyPolicy {
    pub fn new(window: usize, segment_duration_s: f64) -> Result<Self> {
        if window == 0 {
            return Err(Error::Agent("greedy window must be at least 1".into()));
        }
        if !(segment_duration_s.is_finite() && segment_duration_s > 0.0) {
            return Err(Error::Agent(
                "greedy segment duration must be positive".into(),
            ));
        }
        Ok(GreedyPolicy {
            window,
            segment_duration_s,
            rates: VecDeque::new(),
        })
    }
}

impl Policy for GreedyPolicy {
    fn act(&mut self, obs: &Observation, _rng: &mut dyn RngCore) -> usize {
        if obs.dt_last > 0.0 {
            if self.rates.len() == self.window {
                self.rates.pop_front();
            }
            self.rates
                .push_back(obs.bitrate_last * self.segment_duration_s / obs.dt_last);
        }
        if self.rates.is_empty() {
            return 0;
        }
        let estimate = self.rates.iter().sum::<f64>() / self.rates.len() as f64;
        greedy_choice(
            &obs.bitrate_ladder,
            self.segment_duration_s,
            estimate,
            obs.buffer,
        )
    }

    fn reset(&mut self) {
        self.rates.clear();
    }
}

/// The greedy selection rule itself: the largest rung whose predicted
/// download time fits the allowance, or the lowest rung if none does.
pub fn greedy_choice(
    bitrate_ladder: &[f64],
    segment_duration_s: f64,
    estimate_mbps: f64,
    buffer_s: f64,
) -> usize {
    let allowance = buffer_s.max(segment_duration_s);
    bitrate_ladder
        .iter()
        .rposition(|b| b * segment_duration_s / estimate_mbps <= allowance)
        .unwrap_or(0)
}

/// Parsed form of an agent name like `min`, `random`, or `greedy:k=8`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AgentSpec {
    Min,
    Max,
    Random,
    Greedy { window: usize },
}

impl AgentSpec {
    /// Builds the policy this spec describes.
    pub fn build(&self, segment_duration_s: f64) -> Result<Box<dyn Policy>> {
        Ok(match self {
            AgentSpec::Min => Box::new(MinPolicy),
            AgentSpec::Max => Box::new(MaxPolicy),
            AgentSpec::Random => Box::new(RandomPolicy),
            AgentSpec::Greedy { window } => {
                Box::new(GreedyPolicy::new(*window, segment_duration_s)?)
            }
        })
    }
}

impl fmt::Display for AgentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentSpec::Min => f.write_str("min"),
            AgentSpec::Max => f.write_str("max"),
            AgentSpec::Random => f.write_str("random"),
            AgentSpec::Greedy { window } => write!(f, "greedy:k={window}"),
        }
    }
}

impl FromStr for AgentSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "min" => return Ok(AgentSpec::Min),
            "max" => return Ok(AgentSpec::Max),
            "random" => return Ok(AgentSpec::Random),
            "greedy" => return Ok(AgentSpec::Greedy { window: DEFAULT_GREEDY_WINDOW }),
            _ => {}
        }
        if let Some(args) = lower.strip_prefix("greedy:") {
            if let Some(k) = args.strip_prefix("k=") {
                let window: usize = k
                    .parse()
                    .map_err(|_| Error::Agent(format!("bad greedy window '{k}'")))?;
                if window == 0 {
                    return Err(Error::Agent("greedy window must be at least 1".into()));
                }
                return Ok(AgentSpec::Greedy { window });
            }
            return Err(Error::Agent(format!("bad greedy arguments '{args}'")));
        }
        Err(Error::Agent(format!("unknown agent '{s}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::ProfileSet;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn obs_with(buffer: f64, bitrate_last: f64, dt_last: f64) -> Observation {
        let set = ProfileSet::builtin_default();
        let p = &set.clients[0];
        let mut obs = Observation::initial(100, p.bitrates_mbps.clone(), p.qualities.clone());
        obs.buffer = buffer;
        obs.bitrate_last = bitrate_last;
        obs.dt_last = dt_last;
        obs
    }

    #[test]
    fn specs_parse_and_print_round_trip() {
        for text in ["min", "max", "random", "greedy:k=8", "greedy:k=3"] {
            let spec: AgentSpec = text.parse().unwrap();
            assert_eq!(spec.to_string(), text);
        }
        assert_eq!(
            "greedy".parse::<AgentSpec>().unwrap(),
            AgentSpec::Greedy { window: DEFAULT_GREEDY_WINDOW }
        );
        assert_eq!("  MAX ".parse::<AgentSpec>().unwrap(), AgentSpec::Max);
    }

    #[test]
    fn bad_specs_are_rejected() {
        assert!("bola".parse::<AgentSpec>().is_err());
        assert!("greedy:k=0".parse::<AgentSpec>().is_err());
        assert!("greedy:k=-1".parse::<AgentSpec>().is_err());
        assert!("greedy:window=3".parse::<AgentSpec>().is_err());
        assert!("".parse::<AgentSpec>().is_err());
    }

    #[test]
    fn min_and_max_pin_the_ladder_ends() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let obs = obs_with(4.0, 0.0, 0.0);
        assert_eq!(MinPolicy.act(&obs, &mut rng), 0);
        assert_eq!(MaxPolicy.act(&obs, &mut rng), 6);
    }

    #[test]
    fn random_covers_the_whole_ladder() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut policy = RandomPolicy;
        let obs = obs_with(4.0, 0.0, 0.0);
        let mut seen = [false; 7];
        for _ in 0..500 {
            let a = policy.act(&obs, &mut rng);
            assert!(a < 7);
            seen[a] = true;
        }
        assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn greedy_starts_at_the_lowest_rung() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut policy = GreedyPolicy::new(8, 1.0).unwrap();
        assert_eq!(policy.act(&obs_with(0.0, 0.0, 0.0), &mut rng), 0);
    }

    #[test]
    fn greedy_choice_scales_with_throughput_and_buffer() {
        let ladder = [0.5, 1.0, 2.5, 5.0, 7.5, 10.0, 20.0];
        // 5 Mbps estimate, empty buffer: only rungs downloading within one
        // segment duration qualify.
        assert_eq!(greedy_choice(&ladder, 1.0, 5.0, 0.0), 3);
        // A 4 s buffer stretches the allowance to 20 Mb of budget.
        assert_eq!(greedy_choice(&ladder, 1.0, 5.0, 4.0), 6);
        // Throughput below the lowest rung still returns the lowest rung.
        assert_eq!(greedy_choice(&ladder, 1.0, 0.1, 0.0), 0);
        // Exact boundary counts as feasible.
        assert_eq!(greedy_choice(&ladder, 1.0, 10.0, 1.0), 5);
    }

    #[test]
    fn greedy_averages_its_recent_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut policy = GreedyPolicy::new(2, 1.0).unwrap();
        // Rates observed: 10, 2, 2. Window of 2 keeps the last two, so the
        // estimate drops to 2 Mbps and only rungs up to 2 Mb fit (buffer 1).
        policy.act(&obs_with(1.0, 10.0, 1.0), &mut rng);
        policy.act(&obs_with(1.0, 2.0, 1.0), &mut rng);
        let a = policy.act(&obs_with(1.0, 2.0, 1.0), &mut rng);
        assert_eq!(a, 1);
        // Reset forgets the history.
        policy.reset();
        assert_eq!(policy.act(&obs_with(1.0, 0.0, 0.0), &mut rng), 0);
    }

    #[test]
    fn built_policies_match_their_specs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let obs = obs_with(0.0, 0.0, 0.0);
        for (text, expected) in [("min", 0), ("max", 6), ("greedy", 0)] {
            let spec: AgentSpec = text.parse().unwrap();
            let mut policy = spec.build(1.0).unwrap();
            assert_eq!(policy.act(&obs, &mut rng), expected, "agent {text}");
        }
        let spec: AgentSpec = "random".parse().unwrap();
        let mut policy = spec.build(1.0).unwrap();
        assert!(policy.act(&obs, &mut rng) < 7);
    }
}
