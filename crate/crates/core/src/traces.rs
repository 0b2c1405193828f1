//! Bandwidth traces: piecewise-constant bottleneck capacity over time.
//!
//! A trace is a sorted list of `(timestamp, Mbps)` samples starting at 0;
//! each sample holds until the next one, the last until the trace's
//! duration. Traces are grouped into classes by their time-weighted mean and
//! coefficient of variation, mirroring how wildly different access links
//! behave: anything sufficiently bursty is "fluctuating", the rest is binned
//! by mean bandwidth.
//!
//! The module also carries the dataset pipeline: cutting raw measurement
//! files into fixed-length traces, rebalancing class sizes by mean-bandwidth
//! bins, deterministic train/validation/test splits, a synthetic generator
//! whose output is guaranteed to classify as requested, and manifest files
//! that make a dataset bit-for-bit reproducible.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::mix_seed;

/// Default trace length in seconds used by the ingestion pipeline and the
/// synthetic generator.
pub const DEFAULT_TRACE_LEN_S: f64 = 200.0;

/// Default multiplier applied to raw measured bandwidth during ingestion.
pub const DEFAULT_SCALE: f64 = 3.0;

/// Traffic class of a trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceClass {
    Fluctuating,
    Low,
    Normal,
    High,
    VeryHigh,
}

impl TraceClass {
    pub const ALL: [TraceClass; 5] = [
        TraceClass::Fluctuating,
        TraceClass::Low,
        TraceClass::Normal,
        TraceClass::High,
        TraceClass::VeryHigh,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TraceClass::Fluctuating => "fluctuating",
            TraceClass::Low => "low",
            TraceClass::Normal => "normal",
            TraceClass::High => "high",
            TraceClass::VeryHigh => "veryhigh",
        }
    }
}

impl fmt::Display for TraceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TraceClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fluctuating" => Ok(TraceClass::Fluctuating),
            "low" => Ok(TraceClass::Low),
            "normal" => Ok(TraceClass::Normal),
            "high" => Ok(TraceClass::High),
            "veryhigh" | "very_high" | "very-high" => Ok(TraceClass::VeryHigh),
            other => Err(Error::Trace(format!("unknown trace class '{other}'"))),
        }
    }
}

/// Dataset split a trace is assigned to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::Trace(format!("unknown split '{other}'"))),
        }
    }
}

/// Time-weighted summary statistics of a trace.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TraceStats {
    pub mean_mbps: f64,
    pub std_mbps: f64,
    /// Coefficient of variation, `std / mean`.
    pub cv: f64,
}

impl TraceStats {
    /// Assigns a traffic class: coefficient of variation of at least 0.35
    /// means fluctuating, otherwise the mean decides with lower-exclusive,
    /// upper-inclusive bands (3, 10], (10, 25], (25, 50], (50, inf).
    /// A mean at or below 3 Mbps is unclassifiable.
    pub fn classify(&self) -> Result<TraceClass> {
        if self.mean_mbps <= 3.0 {
            return Err(Error::Trace(format!(
                "mean bandwidth {} Mbps is at or below the 3 Mbps classification floor",
                self.mean_mbps
            )));
        }
        if self.cv >= 0.35 {
            return Ok(TraceClass::Fluctuating);
        }
        Ok(if self.mean_mbps <= 10.0 {
            TraceClass::Low
        } else if self.mean_mbps <= 25.0 {
            TraceClass::Normal
        } else if self.mean_mbps <= 50.0 {
            TraceClass::High
        } else {
            TraceClass::VeryHigh
        })
    }
}

/// A piecewise-constant bandwidth timeline.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trace {
    pub id: String,
    /// Sorted `(timestamp_s, bandwidth_mbps)` samples; the first timestamp
    /// is 0 and each value holds until the next sample.
    samples: Vec<(f64, f64)>,
    /// End of the timeline; the last sample holds until here.
    duration_s: f64,
}

impl Trace {
    pub fn new(id: impl Into<String>, samples: Vec<(f64, f64)>, duration_s: f64) -> Result<Self> {
        let id = id.into();
        if samples.is_empty() {
            return Err(Error::Trace(format!("{id}: no samples")));
        }
        if samples[0].0 != 0.0 {
            return Err(Error::Trace(format!("{id}: first sample must be at t=0")));
        }
        if !samples.windows(2).all(|w| w[0].0 < w[1].0) {
            return Err(Error::Trace(format!("{id}: timestamps must be strictly increasing")));
        }
        if !samples.iter().all(|(t, b)| t.is_finite() && b.is_finite() && *b >= 0.0) {
            return Err(Error::Trace(format!("{id}: bandwidth must be finite and non-negative")));
        }
        if !duration_s.is_finite() || duration_s <= samples.last().unwrap().0 {
            return Err(Error::Trace(format!(
                "{id}: duration {duration_s} must exceed the last sample timestamp"
            )));
        }
        Ok(Trace {
            id,
            samples,
            duration_s,
        })
    }

    /// A flat trace, handy for tests and closed-form checks.
    pub fn constant(id: impl Into<String>, bandwidth_mbps: f64, duration_s: f64) -> Result<Self> {
        Trace::new(id, vec![(0.0, bandwidth_mbps)], duration_s)
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn duration(&self) -> f64 {
        self.duration_s
    }

    /// Bandwidth in effect at time `t`.
    pub fn bandwidth_at(&self, t: f64) -> f64 {
        match self.samples.partition_point(|(ts, _)| *ts <= t) {
            0 => self.samples[0].1,
            k => self.samples[k - 1].1,
        }
    }

    /// The next instant strictly after `t` where the bandwidth may change:
    /// the next sample timestamp, or the end of the trace.
    pub fn next_change_after(&self, t: f64) -> f64 {
        let k = self.samples.partition_point(|(ts, _)| *ts <= t);
        match self.samples.get(k) {
            Some((ts, _)) => ts.min(self.duration_s),
            None => self.duration_s,
        }
    }

    /// Multiplies every bandwidth sample by `factor`.
    pub fn scaled(mut self, factor: f64) -> Self {
        for (_, b) in &mut self.samples {
            *b *= factor;
        }
        self
    }

    /// Time-weighted mean and population standard deviation over the whole
    /// timeline.
    pub fn stats(&self) -> TraceStats {
        let mut mean = 0.0;
        for (i, (t, b)) in self.samples.iter().enumerate() {
            let end = self.samples.get(i + 1).map_or(self.duration_s, |(nt, _)| *nt);
            mean += b * (end - t);
        }
        mean /= self.duration_s;
        let mut var = 0.0;
        for (i, (t, b)) in self.samples.iter().enumerate() {
            let end = self.samples.get(i + 1).map_or(self.duration_s, |(nt, _)| *nt);
            var += (b - mean).powi(2) * (end - t);
        }
        var /= self.duration_s;
        let std = var.sqrt();
        TraceStats {
            mean_mbps: mean,
            std_mbps: std,
            cv: if mean > 0.0 { std / mean } else { f64::INFINITY },
        }
    }

    /// Reads a trace from a `timestamp_s,bandwidth_mbps` CSV file.
    pub fn from_csv(path: &Path, id: impl Into<String>, duration_s: f64) -> Result<Self> {
        let samples = read_samples_csv(path)?;
        Trace::new(id, samples, duration_s)
    }

    /// Writes the samples as a `timestamp_s,bandwidth_mbps` CSV file.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("timestamp_s,bandwidth_mbps\n");
        for (t, b) in &self.samples {
            out.push_str(&format!("{t},{b}\n"));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// Reads `(timestamp_s, bandwidth_mbps)` rows from a CSV file with a header.
pub fn read_samples_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::parse(path.display().to_string(), e))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path.display().to_string(), e))?
        .clone();
    if headers.len() < 2 || &headers[0] != "timestamp_s" || &headers[1] != "bandwidth_mbps" {
        return Err(Error::parse(
            path.display().to_string(),
            format!("expected header 'timestamp_s,bandwidth_mbps', got '{}'", headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut samples = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::parse(path.display().to_string(), e))?;
        let parse = |field: &str, what: &str| -> Result<f64> {
            field.trim().parse::<f64>().map_err(|_| {
                Error::parse(
                    path.display().to_string(),
                    format!("row {}: invalid {what} '{field}'", i + 2),
                )
            })
        };
        samples.push((parse(&row[0], "timestamp")?, parse(&row[1], "bandwidth")?));
    }
    Ok(samples)
}

/// One dataset row: a trace plus its class, split, and cached statistics.
#[derive(Clone, Debug)]
pub struct DatasetEntry {
    pub trace: Trace,
    pub class: TraceClass,
    pub split: Option<Split>,
    pub stats: TraceStats,
}

/// A collection of classified traces, optionally split, with manifest IO.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub entries: Vec<DatasetEntry>,
}

impl Dataset {
    pub fn from_traces(traces: Vec<Trace>) -> Result<Self> {
        let mut entries = Vec::with_capacity(traces.len());
        for trace in traces {
            let stats = trace.stats();
            let class = stats.classify()?;
            entries.push(DatasetEntry {
                trace,
                class,
                split: None,
                stats,
            });
        }
        Ok(Dataset { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Keeps entries matching the class and split filters. `None` keeps all.
    pub fn filtered(&self, classes: Option<&[TraceClass]>, split: Option<Split>) -> Dataset {
        let entries = self
            .entries
            .iter()
            .filter(|e| classes.map_or(true, |cs| cs.contains(&e.class)))
            .filter(|e| split.map_or(true, |s| e.split == Some(s)))
            .cloned()
            .collect();
        Dataset { entries }
    }

    /// Stable ordering used for all outputs: class order, then id.
    pub fn sort(&mut self) {
        self.entries.sort_by(|a, b| a.class.cmp(&b.class).then_with(|| a.trace.id.cmp(&b.trace.id)));
    }

    /// Writes `manifest.csv` plus one trace CSV per entry under `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let traces_dir = dir.join("traces");
        std::fs::create_dir_all(&traces_dir).map_err(|e| Error::io(traces_dir.display().to_string(), e))?;
        let manifest_path = dir.join("manifest.csv");
        let file = std::fs::File::create(&manifest_path)
            .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
        let mut w = std::io::BufWriter::new(file);
        writeln!(w, "id,class,split,mean_mbps,std_mbps,cv,duration_s,path")
            .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
        for e in &self.entries {
            let rel = format!("traces/{}.csv", e.trace.id);
            e.trace.write_csv(&dir.join(&rel))?;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                e.trace.id,
                e.class,
                e.split.map_or("none".to_string(), |s| s.to_string()),
                e.stats.mean_mbps,
                e.stats.std_mbps,
                e.stats.cv,
                e.trace.duration(),
                rel
            )
            .map_err(|err| Error::io(manifest_path.display().to_string(), err))?;
        }
        w.flush().map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
        Ok(manifest_path)
    }

    /// Loads a dataset from a manifest file written by [`Dataset::write`].
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(manifest_path)
            .map_err(|e| Error::parse(manifest_path.display().to_string(), e))?;
        let mut entries = Vec::new();
        for row in reader.records() {
            let row = row.map_err(|e| Error::parse(manifest_path.display().to_string(), e))?;
            if row.len() != 8 {
                return Err(Error::parse(
                    manifest_path.display().to_string(),
                    format!("expected 8 columns, got {}", row.len()),
                ));
            }
            let id = row[0].to_string();
            let class: TraceClass = row[1].parse()?;
            let split = match &row[2] {
                "none" => None,
                s => Some(s.parse::<Split>()?),
            };
            let duration: f64 = row[6]
                .parse()
                .map_err(|_| Error::parse(manifest_path.display().to_string(), format!("bad duration for {id}")))?;
            let trace = Trace::from_csv(&base.join(&row[7]), id, duration)?;
            let stats = trace.stats();
            entries.push(DatasetEntry {
                trace,
                class,
                split,
                stats,
            });
        }
        Ok(Dataset { entries })
    }
}

/// Concatenates one source's measurement samples, cuts them into traces of
/// exactly `trace_len_s` seconds, scales bandwidth by `scale`, and drops any
/// window whose scaled mean is at or below the 3 Mbps classification floor.
/// Timestamps are rebased so the source and every window start at 0; only
/// windows fully covered by measurements are emitted.
pub fn cut_source(
    source_id: &str,
    mut samples: Vec<(f64, f64)>,
    trace_len_s: f64,
    scale: f64,
) -> Result<Vec<Trace>> {
    if trace_len_s <= 0.0 || !scale.is_finite() || scale <= 0.0 {
        return Err(Error::Config(format!(
            "trace_len_s {trace_len_s} and scale {scale} must be positive"
        )));
    }
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    if samples.iter().any(|(t, b)| !t.is_finite() || !b.is_finite() || *b < 0.0) {
        return Err(Error::Trace(format!("{source_id}: invalid measurement values")));
    }
    samples.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    if samples.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::Trace(format!("{source_id}: duplicate timestamps")));
    }
    let t0 = samples[0].0;
    for (t, _) in &mut samples {
        *t -= t0;
    }
    let span = samples.last().unwrap().0;
    let windows = (span / trace_len_s).floor() as usize;

    let mut traces = Vec::new();
    for k in 0..windows {
        let start = k as f64 * trace_len_s;
        let end = start + trace_len_s;
        let mut window: Vec<(f64, f64)> = Vec::new();
        // Value already in effect when the window opens.
        let head = samples.partition_point(|(t, _)| *t <= start);
        window.push((0.0, samples[head - 1].1 * scale));
        for (t, b) in samples.iter().skip(head) {
            if *t >= end {
                break;
            }
            window.push((t - start, b * scale));
        }
        let trace = Trace::new(format!("{source_id}_{k:03}"), window, trace_len_s)?;
        if trace.stats().mean_mbps > 3.0 {
            traces.push(trace);
        }
    }
    Ok(traces)
}

/// Runs [`cut_source`] over several measurement files and classifies the
/// survivors into a dataset. Each file is treated as one source; the file
/// stem becomes the source id.
pub fn ingest_files(paths: &[PathBuf], trace_len_s: f64, scale: f64) -> Result<Dataset> {
    let mut traces = Vec::new();
    for path in paths {
        let source_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "source".to_string());
        let samples = read_samples_csv(path)?;
        traces.extend(cut_source(&source_id, samples, trace_len_s, scale)?);
    }
    let mut dataset = Dataset::from_traces(traces)?;
    dataset.sort();
    Ok(dataset)
}

/// Rebalances every class to at most `per_class` traces by sampling evenly
/// across 1 Mbps mean-bandwidth bins: bins are drained round-robin, one
/// random trace per still-populated bin, so surviving bin counts differ by
/// at most one. Classes already at or below the target are kept whole.
pub fn undersample(dataset: Dataset, per_class: usize, seed: u64) -> Dataset {
    let mut by_class: BTreeMap<TraceClass, Vec<DatasetEntry>> = BTreeMap::new();
    for e in dataset.entries {
        by_class.entry(e.class).or_default().push(e);
    }
    let mut entries = Vec::new();
    for (class, mut members) in by_class {
        members.sort_by(|a, b| a.trace.id.cmp(&b.trace.id));
        if members.len() <= per_class {
            entries.extend(members);
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &format!("undersample_{class}")));
        let mut bins: BTreeMap<i64, Vec<DatasetEntry>> = BTreeMap::new();
        for e in members {
            bins.entry(e.stats.mean_mbps.floor() as i64).or_default().push(e);
        }
        // Random draw order within each bin.
        let mut bins: Vec<Vec<DatasetEntry>> = bins.into_values().collect();
        for bin in &mut bins {
            for i in (1..bin.len()).rev() {
                bin.swap(i, rng.gen_range(0..=i));
            }
        }
        let mut picked = Vec::with_capacity(per_class);
        while picked.len() < per_class {
            let mut took_any = false;
            for bin in &mut bins {
                if picked.len() == per_class {
                    break;
                }
                if let Some(e) = bin.pop() {
                    picked.push(e);
                    took_any = true;
                }
            }
            if !took_any {
                break;
            }
        }
        entries.extend(picked);
    }
    let mut dataset = Dataset { entries };
    dataset.sort();
    dataset
}

/// Assigns train/validation/test splits per class with a 90/5/5 target.
/// Validation and test get at least one trace each once a class has three
/// or more; the remainder goes to train. Deterministic in `seed`.
pub fn split_dataset(mut dataset: Dataset, seed: u64) -> Dataset {
    let mut by_class: BTreeMap<TraceClass, Vec<usize>> = BTreeMap::new();
    for (i, e) in dataset.entries.iter().enumerate() {
        by_class.entry(e.class).or_default().push(i);
    }
    for (class, mut idxs) in by_class {
        idxs.sort_by(|a, b| dataset.entries[*a].trace.id.cmp(&dataset.entries[*b].trace.id));
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &format!("split_{class}")));
        for i in (1..idxs.len()).rev() {
            idxs.swap(i, rng.gen_range(0..=i));
        }
        let n = idxs.len();
        let share = |frac: f64| -> usize {
            let rounded = (n as f64 * frac).round() as usize;
            if n >= 3 {
                rounded.max(1)
            } else {
                rounded
            }
        };
        let n_val = share(0.05);
        let n_test = share(0.05);
        for (pos, idx) in idxs.into_iter().enumerate() {
            dataset.entries[idx].split = Some(if pos < n_val {
                Split::Validation
            } else if pos < n_val + n_test {
                Split::Test
            } else {
                Split::Train
            });
        }
    }
    dataset.sort();
    dataset
}

/// Generates `count` synthetic traces of the requested class. Non-bursty
/// classes draw a mean inside the class band and add bounded multiplicative
/// noise; the samples are then rescaled so the time-weighted mean lands
/// exactly on the drawn value, which pins the classification. Fluctuating
/// traces alternate between a low and a high level with random dwell times
/// and are rescaled to a drawn target mean; the realized coefficient of
/// variation is checked and the rare unlucky realization redrawn. Every
/// returned trace classifies as `class`, and trace `i` depends only on
/// `(class, seed, i)`.
pub fn synth(class: TraceClass, count: usize, seed: u64) -> Vec<Trace> {
    (0..count)
        .map(|i| {
            let id = format!("synth_{class}_{i:03}");
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &id));
            let trace = synth_one(&id, class, &mut rng);
            debug_assert_eq!(trace.stats().classify().unwrap(), class);
            trace
        })
        .collect()
}

fn synth_one(id: &str, class: TraceClass, rng: &mut ChaCha8Rng) -> Trace {
    let duration = DEFAULT_TRACE_LEN_S;
    for _ in 0..64 {
        let trace = match class {
            TraceClass::Fluctuating => {
                let base = rng.gen_range(2.0..15.0);
                let ratio = rng.gen_range(3.0..5.0);
                let target_mean = rng.gen_range(6.0..50.0);
                let mut level_high = rng.gen_bool(0.5);
                let mut samples = Vec::new();
                let mut t = 0.0;
                while t < duration {
                    let level = if level_high { base * ratio } else { base };
                    samples.push((t, level));
                    level_high = !level_high;
                    // Dwell times on a 0.1 s grid keep the files tidy.
                    t += (rng.gen_range(5.0_f64..20.0) * 10.0).round() / 10.0;
                }
                rescale_to_mean(samples, duration, target_mean)
            }
            _ => {
                let target_mean = match class {
                    TraceClass::Low => rng.gen_range(3.5..9.5),
                    TraceClass::Normal => rng.gen_range(10.5..24.5),
                    TraceClass::High => rng.gen_range(25.5..49.5),
                    TraceClass::VeryHigh => rng.gen_range(51.0..85.0),
                    TraceClass::Fluctuating => unreachable!(),
                };
                let samples: Vec<(f64, f64)> = (0..duration as usize)
                    .map(|k| (k as f64, target_mean * (1.0 + rng.gen_range(-0.1..0.1))))
                    .collect();
                rescale_to_mean(samples, duration, target_mean)
            }
        };
        let trace = Trace::new(id, trace, duration).expect("generated samples are well-formed");
        if trace.stats().classify().ok() == Some(class) {
            return trace;
        }
    }
    unreachable!("synthetic generator failed to hit class {class} after 64 attempts");
}

/// Scales all samples so the time-weighted mean equals `target_mean`.
fn rescale_to_mean(samples: Vec<(f64, f64)>, duration: f64, target_mean: f64) -> Vec<(f64, f64)> {
    let mut weighted = 0.0;
    for (i, (t, b)) in samples.iter().enumerate() {
        let end = samples.get(i + 1).map_or(duration, |(nt, _)| *nt);
        weighted += b * (end - t);
    }
    let mean = weighted / duration;
    let factor = target_mean / mean;
    samples.into_iter().map(|(t, b)| (t, b * factor)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn stats_of_a_two_level_trace() {
        // Half the time at 2, half at 18: mean 10, population std 8.
        let trace = Trace::new("two-level", vec![(0.0, 2.0), (100.0, 18.0)], 200.0).unwrap();
        let s = trace.stats();
        assert_abs_diff_eq!(s.mean_mbps, 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.std_mbps, 8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.cv, 0.8, epsilon = 1e-12);
        assert_eq!(s.classify().unwrap(), TraceClass::Fluctuating);
    }

    #[test]
    fn stats_match_a_dense_resampling_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            // Breakpoints on a 0.25 s grid so midpoint sampling is exact.
            let mut samples = vec![(0.0, rng.gen_range(0.0..40.0))];
            let mut t = 0.0;
            loop {
                t += rng.gen_range(1..20) as f64 * 0.25;
                if t >= 50.0 {
                    break;
                }
                samples.push((t, rng.gen_range(0.0..40.0)));
            }
            let trace = Trace::new("oracle", samples, 50.0).unwrap();

            let n = 4000; // 0.0125 s cells, midpoint sampled
            let cell = 50.0 / n as f64;
            let dense: Vec<f64> = (0..n)
                .map(|k| trace.bandwidth_at((k as f64 + 0.5) * cell))
                .collect();
            let mean = dense.iter().sum::<f64>() / n as f64;
            let var = dense.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / n as f64;

            let s = trace.stats();
            assert_abs_diff_eq!(s.mean_mbps, mean, epsilon = 1e-6);
            assert_abs_diff_eq!(s.std_mbps, var.sqrt(), epsilon = 1e-6);
        }
    }

    #[test]
    fn classification_boundaries() {
        let class = |mean: f64, cv: f64| {
            TraceStats {
                mean_mbps: mean,
                std_mbps: cv * mean,
                cv,
            }
            .classify()
        };
        assert!(class(3.0, 0.0).is_err());
        assert!(class(2.0, 1.0).is_err());
        assert_eq!(class(3.01, 0.0).unwrap(), TraceClass::Low);
        assert_eq!(class(10.0, 0.0).unwrap(), TraceClass::Low);
        assert_eq!(class(10.001, 0.0).unwrap(), TraceClass::Normal);
        assert_eq!(class(25.0, 0.0).unwrap(), TraceClass::Normal);
        assert_eq!(class(25.001, 0.0).unwrap(), TraceClass::High);
        assert_eq!(class(50.0, 0.0).unwrap(), TraceClass::High);
        assert_eq!(class(50.001, 0.0).unwrap(), TraceClass::VeryHigh);
        assert_eq!(class(500.0, 0.0).unwrap(), TraceClass::VeryHigh);
        assert_eq!(class(20.0, 0.35).unwrap(), TraceClass::Fluctuating);
        assert_eq!(class(20.0, 0.349).unwrap(), TraceClass::Normal);
    }

    #[test]
    fn bandwidth_lookup_and_breakpoints() {
        let trace = Trace::new("t", vec![(0.0, 10.0), (0.25, 5.0)], 1.0).unwrap();
        assert_eq!(trace.bandwidth_at(0.0), 10.0);
        assert_eq!(trace.bandwidth_at(0.1), 10.0);
        assert_eq!(trace.bandwidth_at(0.25), 5.0);
        assert_eq!(trace.bandwidth_at(0.9), 5.0);
        assert_eq!(trace.next_change_after(0.0), 0.25);
        assert_eq!(trace.next_change_after(0.25), 1.0);
    }

    #[test]
    fn trace_validation_rejects_malformed_input() {
        assert!(Trace::new("t", vec![], 1.0).is_err());
        assert!(Trace::new("t", vec![(1.0, 5.0)], 2.0).is_err());
        assert!(Trace::new("t", vec![(0.0, 5.0), (0.0, 6.0)], 1.0).is_err());
        assert!(Trace::new("t", vec![(0.0, -1.0)], 1.0).is_err());
        assert!(Trace::new("t", vec![(0.0, 5.0)], 0.0).is_err());
    }

    #[test]
    fn cutting_produces_full_windows_only() {
        // 400 s of measurements: exactly two 200 s traces.
        let samples: Vec<(f64, f64)> = (0..=400).step_by(10).map(|t| (t as f64, 4.0)).collect();
        let traces = cut_source("src", samples, 200.0, 3.0).unwrap();
        assert_eq!(traces.len(), 2);
        assert_eq!(traces[0].id, "src_000");
        assert_eq!(traces[1].id, "src_001");
        for t in &traces {
            assert_eq!(t.duration(), 200.0);
            assert_eq!(t.samples()[0].0, 0.0);
            assert_abs_diff_eq!(t.stats().mean_mbps, 12.0, epsilon = 1e-12);
        }

        // 500 s: the 100 s remainder is dropped.
        let samples: Vec<(f64, f64)> = (0..=500).step_by(10).map(|t| (t as f64, 4.0)).collect();
        assert_eq!(cut_source("src", samples, 200.0, 3.0).unwrap().len(), 2);
    }

    #[test]
    fn cutting_rebases_and_carries_the_open_value() {
        // Measurements start at t=1000 and change mid-window.
        let samples = vec![(1000.0, 2.0), (1150.0, 6.0), (1350.0, 8.0), (1500.0, 4.0)];
        let traces = cut_source("src", samples, 200.0, 3.0).unwrap();
        assert_eq!(traces.len(), 2);
        assert_eq!(traces[0].samples(), &[(0.0, 6.0), (150.0, 18.0)]);
        // Second window opens inside the 6.0-level span.
        assert_eq!(traces[1].samples(), &[(0.0, 18.0), (150.0, 24.0)]);
    }

    #[test]
    fn low_mean_windows_are_dropped() {
        // Mean 0.9 before scaling, 2.7 after: at or below the 3 Mbps floor.
        let samples: Vec<(f64, f64)> = (0..=200).step_by(5).map(|t| (t as f64, 0.9)).collect();
        assert!(cut_source("src", samples, 200.0, 3.0).unwrap().is_empty());
    }

    #[test]
    fn undersampling_balances_bins() {
        // Bimodal class: 12 traces near 5 Mbps, 4 near 9 Mbps.
        let mut traces = Vec::new();
        for i in 0..12 {
            traces.push(Trace::constant(format!("a_{i:02}"), 5.0 + 0.05 * i as f64, 200.0).unwrap());
        }
        for i in 0..4 {
            traces.push(Trace::constant(format!("b_{i:02}"), 9.0 + 0.1 * i as f64, 200.0).unwrap());
        }
        let dataset = Dataset::from_traces(traces).unwrap();
        let out = undersample(dataset, 8, 99);
        assert_eq!(out.len(), 8);
        let near_5 = out.entries.iter().filter(|e| e.stats.mean_mbps < 7.0).count();
        let near_9 = out.len() - near_5;
        assert_eq!(near_5, 4);
        assert_eq!(near_9, 4);

        // A uniform class small enough is kept whole.
        let traces: Vec<Trace> = (0..5)
            .map(|i| Trace::constant(format!("c_{i}"), 6.0 + 0.01 * i as f64, 200.0).unwrap())
            .collect();
        let out = undersample(Dataset::from_traces(traces).unwrap(), 8, 99);
        assert_eq!(out.len(), 5);
    }

    #[test]
    fn undersampling_bin_counts_differ_by_at_most_one() {
        let mut traces = Vec::new();
        for i in 0..30 {
            // Means spread over bins 4, 5, 6 with sizes 17, 9, 4.
            let mean = if i < 17 {
                4.2 + 0.02 * i as f64
            } else if i < 26 {
                5.3 + 0.02 * i as f64
            } else {
                6.1 + 0.02 * i as f64
            };
            traces.push(Trace::constant(format!("t_{i:02}"), mean, 200.0).unwrap());
        }
        let out = undersample(Dataset::from_traces(traces).unwrap(), 12, 3);
        assert_eq!(out.len(), 12);
        let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
        for e in &out.entries {
            *counts.entry(e.stats.mean_mbps.floor() as i64).or_default() += 1;
        }
        // Bin 6 (4 members) is exhausted; the others must be within one of
        // each other.
        let not_exhausted: Vec<usize> =
            counts.iter().filter(|(bin, _)| **bin != 6).map(|(_, c)| *c).collect();
        let max = *not_exhausted.iter().max().unwrap();
        let min = *not_exhausted.iter().min().unwrap();
        assert!(max - min <= 1, "bin counts {counts:?}");
    }

    #[test]
    fn splitting_hits_ninety_five_five() {
        let traces: Vec<Trace> = (0..100)
            .map(|i| Trace::constant(format!("t_{i:03}"), 5.0 + 0.01 * i as f64, 200.0).unwrap())
            .collect();
        let dataset = split_dataset(Dataset::from_traces(traces).unwrap(), 11);
        let count = |s: Split| dataset.entries.iter().filter(|e| e.split == Some(s)).count();
        assert_eq!(count(Split::Train), 90);
        assert_eq!(count(Split::Validation), 5);
        assert_eq!(count(Split::Test), 5);
    }

    #[test]
    fn tiny_classes_still_get_validation_and_test() {
        let traces: Vec<Trace> = (0..3)
            .map(|i| Trace::constant(format!("t_{i}"), 5.0 + 0.1 * i as f64, 200.0).unwrap())
            .collect();
        let dataset = split_dataset(Dataset::from_traces(traces).unwrap(), 5);
        let count = |s: Split| dataset.entries.iter().filter(|e| e.split == Some(s)).count();
        assert_eq!(count(Split::Validation), 1);
        assert_eq!(count(Split::Test), 1);
        assert_eq!(count(Split::Train), 1);

        // With fewer than three traces everything lands in train.
        let traces: Vec<Trace> = (0..2)
            .map(|i| Trace::constant(format!("t_{i}"), 5.0 + 0.1 * i as f64, 200.0).unwrap())
            .collect();
        let dataset = split_dataset(Dataset::from_traces(traces).unwrap(), 5);
        assert_eq!(dataset.entries.iter().filter(|e| e.split == Some(Split::Train)).count(), 2);
    }

    #[test]
    fn splits_are_deterministic_and_disjoint() {
        let make = || {
            let traces: Vec<Trace> = (0..40)
                .map(|i| Trace::constant(format!("t_{i:02}"), 5.0 + 0.1 * i as f64, 200.0).unwrap())
                .collect();
            split_dataset(Dataset::from_traces(traces).unwrap(), 123)
        };
        let a = make();
        let b = make();
        for (x, y) in a.entries.iter().zip(&b.entries) {
            assert_eq!(x.trace.id, y.trace.id);
            assert_eq!(x.split, y.split);
        }
        assert!(a.entries.iter().all(|e| e.split.is_some()));
    }

    #[test]
    fn synthetic_traces_classify_as_requested() {
        for class in TraceClass::ALL {
            for trace in synth(class, 25, 42) {
                assert_eq!(trace.stats().classify().unwrap(), class, "trace {}", trace.id);
                assert_eq!(trace.duration(), DEFAULT_TRACE_LEN_S);
            }
        }
    }

    #[test]
    fn synthetic_generation_is_deterministic_and_count_stable() {
        let a = synth(TraceClass::Normal, 5, 7);
        let b = synth(TraceClass::Normal, 5, 7);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.samples(), y.samples());
        }
        // Trace i does not depend on how many traces were requested.
        let c = synth(TraceClass::Normal, 2, 7);
        assert_eq!(a[1].samples(), c[1].samples());
        // A different seed changes the data.
        let d = synth(TraceClass::Normal, 2, 8);
        assert_ne!(a[0].samples(), d[0].samples());
    }

    #[test]
    fn manifest_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut dataset = Dataset::from_traces(
            synth(TraceClass::Low, 3, 1)
                .into_iter()
                .chain(synth(TraceClass::High, 3, 1))
                .collect(),
        )
        .unwrap();
        dataset = split_dataset(dataset, 9);
        let manifest = dataset.write(dir.path()).unwrap();
        let first = std::fs::read_to_string(&manifest).unwrap();

        let reloaded = Dataset::load(&manifest).unwrap();
        assert_eq!(reloaded.len(), dataset.len());
        for (a, b) in dataset.entries.iter().zip(&reloaded.entries) {
            assert_eq!(a.trace.id, b.trace.id);
            assert_eq!(a.trace.samples(), b.trace.samples());
            assert_eq!(a.class, b.class);
            assert_eq!(a.split, b.split);
        }

        // Writing the reloaded dataset reproduces the manifest byte for byte.
        let dir2 = tempfile::tempdir().unwrap();
        let manifest2 = reloaded.write(dir2.path()).unwrap();
        assert_eq!(first, std::fs::read_to_string(&manifest2).unwrap());
    }

    proptest! {
        #[test]
        fn classification_is_scale_invariant_in_cv(
            levels in proptest::collection::vec(1.0f64..50.0, 2..10),
            factor in 0.5f64..4.0,
        ) {
            let n = levels.len();
            let samples: Vec<(f64, f64)> = levels.iter().enumerate()
                .map(|(i, b)| (i as f64 * 10.0, *b)).collect();
            let duration = n as f64 * 10.0;
            let base = Trace::new("a", samples, duration).unwrap();
            let scaled = base.clone().scaled(factor);
            let (s1, s2) = (base.stats(), scaled.stats());
            prop_assert!((s1.cv - s2.cv).abs() < 1e-9);
            prop_assert!((s2.mean_mbps - factor * s1.mean_mbps).abs() < 1e-9 * factor.max(1.0));
        }

        #[test]
        fn undersample_never_grows_a_class(
            n_traces in 1usize..40,
            target in 1usize..20,
            seed in 0u64..1000,
        ) {
            let traces: Vec<Trace> = (0..n_traces)
                .map(|i| Trace::constant(format!("t_{i:02}"), 4.0 + (i as f64 * 0.37) % 6.0, 200.0).unwrap())
                .collect();
            let dataset = Dataset::from_traces(traces).unwrap();
            let out = undersample(dataset, target, seed);
            prop_assert_eq!(out.len(), n_traces.min(target));
        }
    }
}
