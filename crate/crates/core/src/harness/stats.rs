//! Monte Carlo summaries.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Standard error of the mean; absent below two samples.
    pub stderr: Option<f64>,
    pub count: usize,
}

/// Mean and standard error (`s / √n`, unbiased `s`). Samples are summed in
/// order, so the result does not depend on how trials were scheduled.
pub fn summarize(samples: &[f64]) -> Summary {
    let n = samples.len();
    if n == 0 {
        return Summary {
            mean: f64::NAN,
            stderr: None,
            count: 0,
        };
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let stderr = (n >= 2).then(|| {
        let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
        (ss / (n - 1) as f64 / n as f64).sqrt()
    });
    Summary {
        mean,
        stderr,
        count: n,
    }
}

/// Summary of the per-trial differences `a_i - b_i`, for arms evaluated on
/// the same trials.
pub fn paired_difference(a: &[f64], b: &[f64]) -> Summary {
    assert_eq!(a.len(), b.len(), "paired samples must have equal length");
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    summarize(&d)
}
