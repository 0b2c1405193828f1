//! Shared fixtures for the criterion benches.

use abrsim_core::agents::{AgentSpec, Policy};
use abrsim_core::media::ProfileSet;
use abrsim_core::sim::{SessionConfig, SharingMode};
use abrsim_core::traces::Trace;

/// A 200 s trace that toggles between 12 and 36 Mbps every 8 s, so the
/// engine recomputes shares at a realistic rate.
pub fn choppy_trace() -> Trace {
    let samples = (0..25)
        .map(|k| (k as f64 * 8.0, if k % 2 == 0 { 12.0 } else { 36.0 }))
        .collect();
    Trace::new("bench_choppy", samples, 200.0).expect("valid fixture trace")
}

/// A session over the built-in four-client profile set.
pub fn session(sharing: SharingMode, trace: Trace) -> SessionConfig {
    let mut config = SessionConfig::new(ProfileSet::builtin_default(), trace);
    config.sharing = sharing;
    config
}

/// One agent per client in the session.
pub fn agents(spec: &str, config: &SessionConfig) -> Vec<Box<dyn Policy>> {
    let spec: AgentSpec = spec.parse().expect("valid agent spec");
    (0..config.profiles.len())
        .map(|_| spec.build(config.segment_duration_s).expect("buildable agent"))
        .collect()
}
