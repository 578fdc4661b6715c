//! Mann-Whitney U (rank-sum) test with midrank ties, tie-corrected variance
//! and continuity correction.

use crate::{CliError, Result};

/// Two-sided Mann-Whitney U test.
///
/// Returns `(U, p)` where `U` belongs to the first sample
/// (`U = R_a - n_a(n_a+1)/2` over midranks). The p-value uses the normal
/// approximation with tie-corrected variance and a 0.5 continuity
/// correction; when every pooled value is identical the test is degenerate
/// and `p = 1`.
pub fn ranksum(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() < 2 || b.len() < 2 {
        return Err(CliError::Config(
            "ranksum needs at least 2 observations per sample".into(),
        ));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(CliError::Config("ranksum samples must be finite".into()));
    }

    let n1 = a.len();
    let n2 = b.len();
    let n = n1 + n2;

    let mut pooled: Vec<(f64, bool)> = a
        .iter()
        .map(|v| (*v, true))
        .chain(b.iter().map(|v| (*v, false)))
        .collect();
    pooled.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());

    // midranks plus the tie-correction term sum(t^3 - t)
    let mut rank_sum_a = 0.0f64;
    let mut tie_term = 0.0f64;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let t = (j - i) as f64;
        let midrank = (i + j + 1) as f64 / 2.0;
        for item in &pooled[i..j] {
            if item.1 {
                rank_sum_a += midrank;
            }
        }
        tie_term += t * t * t - t;
        i = j;
    }

    let u = rank_sum_a - (n1 * (n1 + 1)) as f64 / 2.0;

    let mean = (n1 * n2) as f64 / 2.0;
    let nf = n as f64;
    let var = (n1 * n2) as f64 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    if var <= 0.0 {
        return Ok((u, 1.0)); // every pooled value identical
    }

    let diff = u - mean;
    let corrected = if diff > 0.0 {
        diff - 0.5
    } else if diff < 0.0 {
        diff + 0.5
    } else {
        0.0
    };
    let z = corrected / var.sqrt();
    let p = (2.0 * normal_cdf(-z.abs())).min(1.0);
    Ok((u, p))
}

/// Standard normal CDF via the Abramowitz-Stegun 7.1.26 erf approximation
/// (absolute error < 1.5e-7, plenty for rank tests).
fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}
