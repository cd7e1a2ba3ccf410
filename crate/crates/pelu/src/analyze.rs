//! Interval-length analysis: tabulates `l(w)` over a weight grid and
//! compares the closed-form optimum with the best grid point.

use std::path::Path;

use pelu_core::analysis::{
    brute_force_optimum, interval_length, optimal_weight, BruteForce, WeightGrid,
};

use crate::csv_out::{num, write_csv};
use crate::error::CliError;

pub const DEFAULT_GRID_POINTS: usize = 100_000;

pub const ANALYSIS_HEADER: [&str; 4] = ["a", "b", "w", "interval_length"];
pub const SUMMARY_HEADER: [&str; 4] =
    ["w_star", "l_star", "w_star_bruteforce", "l_star_bruteforce"];

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub a: f64,
    pub b: f64,
    pub grid: WeightGrid,
    pub w_star: f64,
    pub l_star: f64,
    pub brute: BruteForce,
}

impl Analysis {
    pub fn summary_row(&self) -> Vec<String> {
        vec![
            num(self.w_star),
            num(self.l_star),
            num(self.brute.w_best),
            num(self.brute.l_best),
        ]
    }
}

/// Scans `[b/a, w_max]` with `points` weights. `w_max` defaults to
/// `10 e b / a`.
pub fn analyze(a: f64, b: f64, w_max: Option<f64>, points: usize) -> Result<Analysis, CliError> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(CliError::Usage(format!(
            "--a and --b must be positive, got a = {a}, b = {b}"
        )));
    }
    let mut grid = WeightGrid::default_for(a, b, points);
    if let Some(hi) = w_max {
        grid.hi = hi;
    }
    let (w_star, l_star) = optimal_weight(a, b)?;
    let brute = brute_force_optimum(a, b, &grid)
        .map_err(|e| CliError::Usage(format!("invalid grid: {e}")))?;
    Ok(Analysis {
        a,
        b,
        grid,
        w_star,
        l_star,
        brute,
    })
}

/// Writes `analysis.csv` (every grid point) and `analysis_summary.csv`.
pub fn write_analysis(analysis: &Analysis, out_dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let (a, b) = (analysis.a, analysis.b);
    let rows = analysis.grid.iter().map(|w| {
        let l = interval_length(w, a, b).expect("grid validated against b/a");
        vec![num(a), num(b), num(w), num(l)]
    });
    write_csv(&out_dir.join("analysis.csv"), &ANALYSIS_HEADER, rows)?;
    write_csv(
        &out_dir.join("analysis_summary.csv"),
        &SUMMARY_HEADER,
        [analysis.summary_row()],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_parameters() {
        let r = analyze(1.0, 1.0, None, 10_001).unwrap();
        assert!((r.w_star - std::f64::consts::E).abs() < 1e-12);
        assert!((r.brute.w_best - r.w_star).abs() <= r.brute.resolution);
        assert!(r.brute.l_best <= r.l_star);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(
            analyze(-1.0, 1.0, None, 100),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(
            analyze(1.0, 0.0, None, 100),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(
            analyze(1.0, 1.0, Some(2.0), 100),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(
            analyze(1.0, 1.0, None, 2),
            Err(CliError::Usage(_))
        ));
    }
}
