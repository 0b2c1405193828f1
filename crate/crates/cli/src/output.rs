//! Fixed-schema CSV rendering for the optimizer subcommands. All floats go
//! through the same 6-significant-digit formatter, so equal results are
//! byte-identical files.

use std::fmt::Write as _;

use abrsim_core::tiopt::{Ladder, Solution, SweepGrid};
use abrsim_core::util::format_sig;

pub fn sig(x: f64) -> String {
    format_sig(x)
}

fn indices_label(solution: &Solution) -> String {
    solution
        .indices
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join("-")
}

fn bitrates_label(ladders: &[Ladder], solution: &Solution) -> String {
    solution
        .indices
        .iter()
        .zip(ladders)
        .map(|(&i, l)| format_sig(l.bitrates_mbps[i]))
        .collect::<Vec<_>>()
        .join("-")
}

pub fn solve_csv(ladders: &[Ladder], bw: f64, alpha: f64, solution: &Option<Solution>) -> String {
    let mut out = String::from(
        "alpha,bw_mbps,status,indices,bitrates_mbps,total_bitrate_mbps,mean_quality,fairness,objective\n",
    );
    match solution {
        Some(s) => {
            let _ = writeln!(
                out,
                "{},{},feasible,{},{},{},{},{},{}",
                format_sig(alpha),
                format_sig(bw),
                indices_label(s),
                bitrates_label(ladders, s),
                format_sig(s.total_bitrate_mbps),
                format_sig(s.mean_quality),
                format_sig(s.fairness),
                format_sig(s.objective(alpha)),
            );
        }
        None => {
            let _ = writeln!(
                out,
                "{},{},infeasible,,,,,,",
                format_sig(alpha),
                format_sig(bw)
            );
        }
    }
    out
}

pub fn pareto_csv(ladders: &[Ladder], bw: f64, front: &[Solution]) -> String {
    let mut out =
        String::from("bw_mbps,rank,indices,bitrates_mbps,total_bitrate_mbps,mean_quality,fairness\n");
    for (rank, s) in front.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            format_sig(bw),
            rank,
            indices_label(s),
            bitrates_label(ladders, s),
            format_sig(s.total_bitrate_mbps),
            format_sig(s.mean_quality),
            format_sig(s.fairness),
        );
    }
    out
}

pub fn sweep_cells_csv(grid: &SweepGrid) -> String {
    let mut out = String::from(
        "alpha,bw_mbps,status,indices,total_bitrate_mbps,mean_quality,fairness,objective\n",
    );
    for cell in &grid.cells {
        match &cell.solution {
            Some(s) => {
                let _ = writeln!(
                    out,
                    "{},{},feasible,{},{},{},{},{}",
                    format_sig(cell.alpha),
                    format_sig(cell.bw_cap_mbps),
                    indices_label(s),
                    format_sig(s.total_bitrate_mbps),
                    format_sig(s.mean_quality),
                    format_sig(s.fairness),
                    format_sig(s.objective(cell.alpha)),
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    "{},{},infeasible,,,,,",
                    format_sig(cell.alpha),
                    format_sig(cell.bw_cap_mbps)
                );
            }
        }
    }
    out
}

/// One value per cell as a matrix: a row per alpha, a column per bandwidth.
/// Infeasible cells are left empty.
pub fn sweep_matrix_csv(grid: &SweepGrid, value: impl Fn(&Solution) -> f64) -> String {
    let mut out = String::from("alpha");
    for bw in &grid.bw_caps_mbps {
        let _ = write!(out, ",{}", format_sig(*bw));
    }
    out.push('\n');
    for (ai, alpha) in grid.alphas.iter().enumerate() {
        let _ = write!(out, "{}", format_sig(*alpha));
        for bi in 0..grid.bw_caps_mbps.len() {
            match &grid.cell(ai, bi).solution {
                Some(s) => {
                    let _ = write!(out, ",{}", format_sig(value(s)));
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}
