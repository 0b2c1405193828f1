//! Static rung assignment: pick one ladder index per client so the blend of
//! mean quality and quality fairness is maximal under a total bandwidth cap.
//!
//! Unlike the simulator this ignores time entirely. Every combination of
//! rungs is enumerated, infeasible ones (total bitrate above the cap) are
//! discarded, and the rest are scored. On the default four-client setup the
//! search space is 7^4 = 2401 combinations, small enough for exact
//! enumeration everywhere, including the 100x100 sweep grids.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::media::{ClientProfile, ProfileSet};
use crate::metrics::population_std;

/// Enumeration size guard; beyond this the search space is too large for
/// exact enumeration.
const MAX_COMBINATIONS: u64 = 5_000_000;

/// One client's options as the optimizer sees them: a bitrate per rung and
/// a quality score per rung.
#[derive(Clone, Debug)]
pub struct Ladder {
    pub bitrates_mbps: Vec<f64>,
    pub qualities: Vec<f64>,
}

impl Ladder {
    pub fn new(bitrates_mbps: Vec<f64>, qualities: Vec<f64>) -> Result<Self> {
        if bitrates_mbps.is_empty() || bitrates_mbps.len() != qualities.len() {
            return Err(Error::Config(
                "ladder needs matching, non-empty bitrate and quality lists".into(),
            ));
        }
        for (b, q) in bitrates_mbps.iter().zip(&qualities) {
            if !(b.is_finite() && *b > 0.0) {
                return Err(Error::Config(format!("ladder bitrate {b} must be positive")));
            }
            if !(0.0..=1.0).contains(q) {
                return Err(Error::Config(format!("ladder quality {q} outside [0, 1]")));
            }
        }
        Ok(Ladder { bitrates_mbps, qualities })
    }

    pub fn len(&self) -> usize {
        self.bitrates_mbps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bitrates_mbps.is_empty()
    }
}

impl From<&ClientProfile> for Ladder {
    fn from(p: &ClientProfile) -> Self {
        Ladder {
            bitrates_mbps: p.bitrates_mbps.clone(),
            qualities: p.qualities.clone(),
        }
    }
}

/// The ladders of a whole profile set, in client order.
pub fn ladders_of(set: &ProfileSet) -> Vec<Ladder> {
    set.clients.iter().map(Ladder::from).collect()
}

/// One feasible rung assignment with its scores. Fairness here is over the
/// chosen per-client qualities: `1 - 2 * population std`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Solution {
    /// Chosen rung per client.
    pub indices: Vec<usize>,
    pub total_bitrate_mbps: f64,
    pub mean_quality: f64,
    pub fairness: f64,
}

impl Solution {
    /// The blended objective: `alpha * mean_quality + (1 - alpha) * fairness`.
    pub fn objective(&self, alpha: f64) -> f64 {
        alpha * self.mean_quality + (1.0 - alpha) * self.fairness
    }
}

fn evaluate(ladders: &[Ladder], indices: &[usize]) -> Solution {
    let total: f64 = indices
        .iter()
        .zip(ladders)
        .map(|(&i, l)| l.bitrates_mbps[i])
        .sum();
    let qualities: Vec<f64> = indices
        .iter()
        .zip(ladders)
        .map(|(&i, l)| l.qualities[i])
        .collect();
    let mean_quality = qualities.iter().sum::<f64>() / qualities.len() as f64;
    let fairness = 1.0 - 2.0 * population_std(&qualities);
    Solution {
        indices: indices.to_vec(),
        total_bitrate_mbps: total,
        mean_quality,
        fairness,
    }
}

fn check_search_space(ladders: &[Ladder], bw_cap_mbps: f64) -> Result<()> {
    if ladders.is_empty() {
        return Err(Error::Config("no ladders to assign rungs to".into()));
    }
    if !(bw_cap_mbps.is_finite() && bw_cap_mbps >= 0.0) {
        return Err(Error::Config(format!(
            "bandwidth cap {bw_cap_mbps} must be finite and non-negative"
        )));
    }
    let mut combos = 1_u64;
    for l in ladders {
        combos = combos
            .checked_mul(l.len() as u64)
            .filter(|c| *c <= MAX_COMBINATIONS)
            .ok_or_else(|| {
                Error::Config(format!(
                    "search space exceeds {MAX_COMBINATIONS} combinations"
                ))
            })?;
    }
    Ok(())
}

/// All rung assignments whose total bitrate fits the cap, in ascending
/// lexicographic index order. Empty when even the all-minimum assignment
/// does not fit.
pub fn enumerate_feasible(ladders: &[Ladder], bw_cap_mbps: f64) -> Result<Vec<Solution>> {
    check_search_space(ladders, bw_cap_mbps)?;
    let mut out = Vec::new();
    let mut indices = vec![0_usize; ladders.len()];
    loop {
        let total: f64 = indices
            .iter()
            .zip(ladders)
            .map(|(&i, l)| l.bitrates_mbps[i])
            .sum();
        if total <= bw_cap_mbps {
            out.push(evaluate(ladders, &indices));
        }
        // Odometer increment, last position fastest.
        let mut pos = ladders.len();
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            indices[pos] += 1;
            if indices[pos] < ladders[pos].len() {
                break;
            }
            indices[pos] = 0;
        }
    }
}

/// The best feasible assignment for one `(alpha, cap)` pair, or `None` when
/// nothing fits. Ties on the objective go to the lowest total bitrate, then
/// to the lexicographically smallest index vector.
pub fn solve(ladders: &[Ladder], bw_cap_mbps: f64, alpha: f64) -> Result<Option<Solution>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha {alpha} outside [0, 1]")));
    }
    let feasible = enumerate_feasible(ladders, bw_cap_mbps)?;
    Ok(pick_best(feasible.iter().collect(), alpha).cloned())
}

/// Argmax with the tie rules, over solutions already ordered so that
/// earlier entries win ties (lower total bitrate first, then lexicographic).
fn pick_best(mut ordered: Vec<&Solution>, alpha: f64) -> Option<&Solution> {
    ordered.sort_by(|a, b| {
        a.total_bitrate_mbps
            .partial_cmp(&b.total_bitrate_mbps)
            .unwrap()
            .then_with(|| a.indices.cmp(&b.indices))
    });
    let mut best: Option<(&Solution, f64)> = None;
    for s in ordered {
        let obj = s.objective(alpha);
        if best.as_ref().map_or(true, |(_, b)| obj > *b) {
            best = Some((s, obj));
        }
    }
    best.map(|(s, _)| s)
}

fn dominates(a: &Solution, b: &Solution) -> bool {
    a.total_bitrate_mbps <= b.total_bitrate_mbps
        && a.mean_quality >= b.mean_quality
        && a.fairness >= b.fairness
        && a.mean_quality + a.fairness > b.mean_quality + b.fairness
}

/// The non-dominated feasible assignments, sorted by total bitrate (then by
/// index vector). A solution is dominated when another one costs no more
/// bandwidth, is at least as good on both scores, and strictly better on
/// their sum.
pub fn pareto_front(ladders: &[Ladder], bw_cap_mbps: f64) -> Result<Vec<Solution>> {
    let feasible = enumerate_feasible(ladders, bw_cap_mbps)?;
    let mut front: Vec<Solution> = feasible
        .iter()
        .filter(|s| !feasible.iter().any(|other| dominates(other, s)))
        .cloned()
        .collect();
    front.sort_by(|a, b| {
        a.total_bitrate_mbps
            .partial_cmp(&b.total_bitrate_mbps)
            .unwrap()
            .then_with(|| a.indices.cmp(&b.indices))
    });
    Ok(front)
}

/// One sweep cell: the optimum for this `(alpha, cap)` pair, or `None`
/// below the minimum total bitrate.
#[derive(Clone, Debug, Serialize)]
pub struct SweepCell {
    pub alpha: f64,
    pub bw_cap_mbps: f64,
    pub solution: Option<Solution>,
}

/// A full grid of optima, row-major: all caps for the first alpha, then all
/// caps for the second, and so on.
#[derive(Clone, Debug, Serialize)]
pub struct SweepGrid {
    pub alphas: Vec<f64>,
    pub bw_caps_mbps: Vec<f64>,
    pub cells: Vec<SweepCell>,
}

impl SweepGrid {
    pub fn cell(&self, alpha_idx: usize, bw_idx: usize) -> &SweepCell {
        &self.cells[alpha_idx * self.bw_caps_mbps.len() + bw_idx]
    }
}

/// `n` uniformly spaced values covering `[lo, hi]` inclusive.
pub fn uniform_grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Default sweep axes: 100 alphas over `[0, 1]` and 100 caps over
/// `[0, 90]` Mbps.
pub fn default_sweep_axes() -> (Vec<f64>, Vec<f64>) {
    (uniform_grid(100, 0.0, 1.0), uniform_grid(100, 0.0, 90.0))
}

/// Solves every `(alpha, cap)` pair of the grid. The enumeration runs once;
/// each cell reduces to an argmax over the prefix of solutions that fit its
/// cap, so the result matches a cell-by-cell `solve` exactly.
pub fn sweep(ladders: &[Ladder], alphas: &[f64], bw_caps_mbps: &[f64]) -> Result<SweepGrid> {
    for a in alphas {
        if !(0.0..=1.0).contains(a) {
            return Err(Error::Config(format!("alpha {a} outside [0, 1]")));
        }
    }
    for bw in bw_caps_mbps {
        if !(bw.is_finite() && *bw >= 0.0) {
            return Err(Error::Config(format!("bandwidth cap {bw} must be non-negative")));
        }
    }
    let mut all = enumerate_feasible(ladders, f64::MAX)?;
    all.sort_by(|a, b| {
        a.total_bitrate_mbps
            .partial_cmp(&b.total_bitrate_mbps)
            .unwrap()
            .then_with(|| a.indices.cmp(&b.indices))
    });

    let mut cells = Vec::with_capacity(alphas.len() * bw_caps_mbps.len());
    for &alpha in alphas {
        for &bw in bw_caps_mbps {
            let fits = all.partition_point(|s| s.total_bitrate_mbps <= bw);
            let mut best: Option<(&Solution, f64)> = None;
            for s in &all[..fits] {
                let obj = s.objective(alpha);
                if best.as_ref().map_or(true, |(_, b)| obj > *b) {
                    best = Some((s, obj));
                }
            }
            cells.push(SweepCell {
                alpha,
                bw_cap_mbps: bw,
                solution: best.map(|(s, _)| s.clone()),
            });
        }
    }
    Ok(SweepGrid {
        alphas: alphas.to_vec(),
        bw_caps_mbps: bw_caps_mbps.to_vec(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn toy_pair() -> Vec<Ladder> {
        vec![
            Ladder::new(vec![1.0, 2.0, 3.0], vec![0.2, 0.6, 1.0]).unwrap(),
            Ladder::new(vec![1.0, 2.0, 3.0], vec![0.4, 0.7, 1.0]).unwrap(),
        ]
    }

    #[test]
    fn enumeration_lists_exactly_the_fitting_assignments() {
        let ladders = toy_pair();
        let feasible = enumerate_feasible(&ladders, 4.0).unwrap();
        let indices: Vec<Vec<usize>> = feasible.iter().map(|s| s.indices.clone()).collect();
        assert_eq!(
            indices,
            vec![
                vec![0, 0],
                vec![0, 1],
                vec![0, 2],
                vec![1, 0],
                vec![1, 1],
                vec![2, 0],
            ]
        );
        assert!(enumerate_feasible(&ladders, 1.9).unwrap().is_empty());
        assert_eq!(enumerate_feasible(&ladders, 2.0).unwrap().len(), 1);
    }

    #[test]
    fn scores_match_hand_arithmetic() {
        let ladders = toy_pair();
        let feasible = enumerate_feasible(&ladders, 4.0).unwrap();
        let s = feasible.iter().find(|s| s.indices == [1, 1]).unwrap();
        assert_relative_eq!(s.total_bitrate_mbps, 4.0, epsilon = 1e-12);
        assert_relative_eq!(s.mean_quality, 0.65, epsilon = 1e-12);
        // qualities 0.6 and 0.7: std 0.05, fairness 0.9.
        assert_relative_eq!(s.fairness, 0.9, epsilon = 1e-12);
        assert_relative_eq!(s.objective(0.25), 0.25 * 0.65 + 0.75 * 0.9, epsilon = 1e-12);
    }

    #[test]
    fn solve_maximizes_each_end_of_the_blend() {
        let ladders = toy_pair();
        // Pure quality: rung 2 for the first client tops the mean.
        let s = solve(&ladders, 4.0, 1.0).unwrap().unwrap();
        assert_eq!(s.indices, vec![2, 0]);
        assert_relative_eq!(s.mean_quality, 0.7, epsilon = 1e-12);
        // Pure fairness: 0.6 vs 0.7 is the closest pair.
        let s = solve(&ladders, 4.0, 0.0).unwrap().unwrap();
        assert_eq!(s.indices, vec![1, 1]);
        assert_relative_eq!(s.fairness, 0.9, epsilon = 1e-12);
        // Nothing fits.
        assert!(solve(&ladders, 1.0, 0.5).unwrap().is_none());
    }

    #[test]
    fn objective_ties_fall_to_cheapest_then_lexicographic() {
        let ladders = toy_pair();
        // Cap 3 at alpha 0: [0,0] and [1,0] both reach fairness 0.8; the
        // cheaper [0,0] (2 Mbps vs 3) wins.
        let s = solve(&ladders, 3.0, 0.0).unwrap().unwrap();
        assert_eq!(s.indices, vec![0, 0]);

        // Mirrored ladders make [0,1] and [1,0] identical in every score,
        // and at alpha 1 they beat the all-minimum pick (0.4 vs 0.3 mean
        // quality). The lexicographically smaller index vector wins.
        let mirrored = vec![
            Ladder::new(vec![1.0, 2.0], vec![0.3, 0.5]).unwrap(),
            Ladder::new(vec![1.0, 2.0], vec![0.3, 0.5]).unwrap(),
        ];
        let s = solve(&mirrored, 3.0, 1.0).unwrap().unwrap();
        assert_eq!(s.indices, vec![0, 1]);
    }

    #[test]
    fn pareto_front_matches_hand_elimination() {
        let ladders = toy_pair();
        let front = pareto_front(&ladders, 4.0).unwrap();
        let indices: Vec<Vec<usize>> = front.iter().map(|s| s.indices.clone()).collect();
        // [0,1] loses to [1,0] (same cost, better everywhere); [0,2] loses
        // to [1,1]. The rest trade off against each other.
        assert_eq!(
            indices,
            vec![vec![0, 0], vec![1, 0], vec![1, 1], vec![2, 0]]
        );
    }

    #[test]
    fn solve_results_sit_on_the_front() {
        let ladders = toy_pair();
        let front = pareto_front(&ladders, 4.0).unwrap();
        for alpha in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let s = solve(&ladders, 4.0, alpha).unwrap().unwrap();
            assert!(
                front.iter().any(|f| f.indices == s.indices),
                "alpha {alpha} optimum {:?} missing from the front",
                s.indices
            );
        }
    }

    #[test]
    fn default_profiles_hit_the_documented_boundaries() {
        let ladders = ladders_of(&ProfileSet::builtin_default());
        assert!(enumerate_feasible(&ladders, 2.74).unwrap().is_empty());
        let only = enumerate_feasible(&ladders, 2.75).unwrap();
        assert_eq!(only.len(), 1);
        assert_eq!(only[0].indices, vec![0, 0, 0, 0]);
        for alpha in [0.0, 0.5, 1.0] {
            let s = solve(&ladders, 82.68, alpha).unwrap().unwrap();
            assert_eq!(s.indices, vec![6, 6, 6, 6]);
            assert_relative_eq!(s.objective(alpha), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn sweep_cells_agree_with_individual_solves() {
        let ladders = toy_pair();
        let alphas = uniform_grid(5, 0.0, 1.0);
        let bws = uniform_grid(6, 0.0, 6.0);
        let grid = sweep(&ladders, &alphas, &bws).unwrap();
        assert_eq!(grid.cells.len(), 30);
        for (ai, &alpha) in alphas.iter().enumerate() {
            for (bi, &bw) in bws.iter().enumerate() {
                let cell = grid.cell(ai, bi);
                assert_eq!(cell.alpha, alpha);
                assert_eq!(cell.bw_cap_mbps, bw);
                let direct = solve(&ladders, bw, alpha).unwrap();
                match (&cell.solution, &direct) {
                    (None, None) => {}
                    (Some(a), Some(b)) => assert_eq!(a, b),
                    other => panic!("cell and solve disagree: {other:?}"),
                }
                // Infeasible exactly below the minimum total bitrate.
                assert_eq!(cell.solution.is_none(), bw < 2.0);
            }
        }
    }

    #[test]
    fn uniform_grid_covers_both_endpoints() {
        let g = uniform_grid(100, 0.0, 90.0);
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[99], 90.0);
        assert_relative_eq!(g[1] - g[0], 90.0 / 99.0, epsilon = 1e-12);
        assert_eq!(uniform_grid(1, 3.0, 5.0), vec![3.0]);
    }

    #[test]
    fn oversized_search_spaces_are_rejected() {
        let big = Ladder::new(vec![1.0; 50], vec![0.5; 50]);
        // Constructor itself is fine with 50 rungs.
        let big = big.unwrap();
        let ladders = vec![big.clone(), big.clone(), big.clone(), big];
        assert!(enumerate_feasible(&ladders, 10.0).is_err());
    }

    proptest! {
        // The optimal objective can only improve as the cap grows.
        #[test]
        fn optimum_is_monotone_in_bandwidth(
            alpha in 0.0_f64..=1.0,
            lo in 0.0_f64..8.0,
            extra in 0.0_f64..4.0,
        ) {
            let ladders = toy_pair();
            let a = solve(&ladders, lo, alpha).unwrap();
            let b = solve(&ladders, lo + extra, alpha).unwrap();
            match (a, b) {
                (Some(sa), Some(sb)) => {
                    prop_assert!(sb.objective(alpha) >= sa.objective(alpha) - 1e-12);
                }
                (Some(_), None) => prop_assert!(false, "feasible set shrank"),
                _ => {}
            }
        }

        // Every optimum is itself a feasible enumeration member.
        #[test]
        fn optimum_is_a_feasible_member(bw in 2.0_f64..7.0, alpha in 0.0_f64..=1.0) {
            let ladders = toy_pair();
            if let Some(s) = solve(&ladders, bw, alpha).unwrap() {
                let feasible = enumerate_feasible(&ladders, bw).unwrap();
                prop_assert!(feasible.iter().any(|f| f == &s));
            }
        }
    }
}
