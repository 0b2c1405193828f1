//! Seed derivation and number formatting helpers shared across modules.

/// SplitMix64 finalizer. Used to spread structured seed material (master
/// seed, trace ids, client indices) over the full 64-bit space before it is
/// fed to a stream RNG.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// FNV-1a hash of a string. Stable across platforms and releases, unlike
/// `DefaultHasher`, so derived seeds never change under us.
pub fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Derives a per-episode seed from the master seed and a trace id.
pub fn mix_seed(master: u64, tag: &str) -> u64 {
    splitmix64(master ^ fnv1a64(tag))
}

/// Derives a per-client seed from an episode seed and the client index.
pub fn client_seed(episode_seed: u64, client: usize) -> u64 {
    splitmix64(episode_seed.wrapping_add((client as u64 + 1).wrapping_mul(0x9e3779b97f4a7c15)))
}

/// Formats a float with six significant digits, the fixed width used in all
/// result tables. Plain decimal notation keeps the files friendly to
/// spreadsheet and dataframe tooling; only extreme magnitudes fall back to
/// scientific notation.
pub fn format_sig(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0.00000".to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    if !(-7..15).contains(&magnitude) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}
