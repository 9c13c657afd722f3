//! Scoring: dynamic time warping, recognition summaries, and the
//! Mann-Whitney U rank test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// DTW alignment outcome. `score` is the optimal path cost divided by the
/// warping-path length so sequences of different lengths stay comparable;
/// `raw_cost` is the unnormalized optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtwResult {
    pub score: f64,
    pub raw_cost: f64,
    pub path: Vec<(usize, usize)>,
}

fn point_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Standard DTW over Euclidean point distances with steps
/// {(1,0), (0,1), (1,1)} and no window constraint.
pub fn dtw(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<DtwResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::argument("dtw inputs must be non-empty"));
    }
    let dim = a[0].len();
    if a.iter().chain(b.iter()).any(|p| p.len() != dim) {
        return Err(Error::argument("dtw inputs must share one dimension"));
    }
    let (la, lb) = (a.len(), b.len());
    let mut cost = vec![f64::INFINITY; la * lb];
    let idx = |i: usize, j: usize| i * lb + j;
    for i in 0..la {
        for j in 0..lb {
            let d = point_distance(&a[i], &b[j]);
            let best_prev = if i == 0 && j == 0 {
                0.0
            } else {
                let mut best = f64::INFINITY;
                if i > 0 {
                    best = best.min(cost[idx(i - 1, j)]);
                }
                if j > 0 {
                    best = best.min(cost[idx(i, j - 1)]);
                }
                if i > 0 && j > 0 {
                    best = best.min(cost[idx(i - 1, j - 1)]);
                }
                best
            };
            cost[idx(i, j)] = d + best_prev;
        }
    }
    // Backtrack; prefer the diagonal on ties so the reported path is stable.
    let mut path = vec![(la - 1, lb - 1)];
    let (mut i, mut j) = (la - 1, lb - 1);
    while i > 0 || j > 0 {
        let mut next = None;
        let mut best = f64::INFINITY;
        if i > 0 && j > 0 && cost[idx(i - 1, j - 1)] < best {
            best = cost[idx(i - 1, j - 1)];
            next = Some((i - 1, j - 1));
        }
        if i > 0 && cost[idx(i - 1, j)] < best {
            best = cost[idx(i - 1, j)];
            next = Some((i - 1, j));
        }
        if j > 0 && cost[idx(i, j - 1)] < best {
            next = Some((i, j - 1));
        }
        let (ni, nj) = next.expect("backtrack step exists");
        path.push((ni, nj));
        i = ni;
        j = nj;
    }
    path.reverse();
    let raw_cost = cost[idx(la - 1, lb - 1)];
    Ok(DtwResult {
        score: raw_cost / path.len() as f64,
        raw_cost,
        path,
    })
}

/// One recognition trial's outcome fields, as read back from a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionRecord {
    pub class_true: usize,
    pub class_top1: usize,
    pub class_top2: usize,
    pub final_mse: f64,
}

/// Trial counts and the per-outcome-group confidence statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionSummary {
    pub n_trials: usize,
    pub top1_accuracy: f64,
    pub top2_accuracy: f64,
    /// Final reconstruction MSE per group: recognized first guess, recognized
    /// second guess, missed entirely.
    pub mse_top1_correct: Vec<f64>,
    pub mse_top2_correct: Vec<f64>,
    pub mse_incorrect: Vec<f64>,
}

pub fn recognition_summary(records: &[RecognitionRecord]) -> Result<RecognitionSummary> {
    if records.is_empty() {
        return Err(Error::argument("no recognition records given"));
    }
    let mut summary = RecognitionSummary {
        n_trials: records.len(),
        top1_accuracy: 0.0,
        top2_accuracy: 0.0,
        mse_top1_correct: Vec::new(),
        mse_top2_correct: Vec::new(),
        mse_incorrect: Vec::new(),
    };
    for r in records {
        if r.class_true == r.class_top1 {
            summary.mse_top1_correct.push(r.final_mse);
        } else if r.class_true == r.class_top2 {
            summary.mse_top2_correct.push(r.final_mse);
        } else {
            summary.mse_incorrect.push(r.final_mse);
        }
    }
    let n = records.len() as f64;
    summary.top1_accuracy = summary.mse_top1_correct.len() as f64 / n;
    summary.top2_accuracy =
        (summary.mse_top1_correct.len() + summary.mse_top2_correct.len()) as f64 / n;
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    Less,
    Greater,
    TwoSided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UTestResult {
    /// U statistic of sample a (midrank tie handling).
    pub u: f64,
    pub p_value: f64,
    pub alternative: Alternative,
    /// True when p came from exhaustive enumeration rather than the normal
    /// approximation.
    pub exact: bool,
}

/// Midranks of the pooled samples, plus tie-group sizes.
fn pooled_midranks(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut pooled: Vec<(f64, usize)> = a
        .iter()
        .copied()
        .enumerate()
        .map(|(i, v)| (v, i))
        .chain(b.iter().copied().enumerate().map(|(i, v)| (v, a.len() + i)))
        .collect();
    pooled.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite sample values"));
    let n = pooled.len();
    let mut ranks = vec![0.0; n];
    let mut tie_sizes = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        for item in &pooled[i..j] {
            ranks[item.1] = midrank;
        }
        tie_sizes.push(j - i);
        i = j;
    }
    (ranks, tie_sizes)
}

/// Exact null distribution tail probabilities by enumerating every way the
/// rank set can be split between the samples.
fn exact_tail_counts(n_total: usize, n_a: usize, u_obs: f64) -> (u64, u64, u64) {
    // Enumerate combinations of n_a ranks out of 1..=n_total, tracking the
    // rank sum; U_a = ranksum - n_a(n_a+1)/2.
    let base = (n_a * (n_a + 1) / 2) as f64;
    let mut le = 0u64;
    let mut ge = 0u64;
    let mut total = 0u64;
    let mut combo: Vec<usize> = (1..=n_a).collect();
    loop {
        let ranksum: usize = combo.iter().sum();
        let u = ranksum as f64 - base;
        total += 1;
        if u <= u_obs + 1e-9 {
            le += 1;
        }
        if u >= u_obs - 1e-9 {
            ge += 1;
        }
        // Next combination in lexicographic order.
        let mut k = n_a;
        loop {
            if k == 0 {
                return (le, ge, total);
            }
            k -= 1;
            if combo[k] < n_total - (n_a - 1 - k) {
                combo[k] += 1;
                for m in (k + 1)..n_a {
                    combo[m] = combo[m - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Abramowitz-Stegun 7.1.26 erf approximation (|error| < 1.5e-7).
fn normal_cdf(z: f64) -> f64 {
    let x = z / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.3275911 * x.abs());
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erf_abs = 1.0 - poly * (-x * x).exp();
    let erf = if x < 0.0 { -erf_abs } else { erf_abs };
    0.5 * (1.0 + erf)
}

/// Rank-sum U test with midrank tie handling. Exact p by enumeration for
/// small tie-free samples (n_a + n_b <= 16), otherwise normal approximation
/// with tie and continuity corrections.
pub fn mann_whitney_u(a: &[f64], b: &[f64], alternative: Alternative) -> Result<UTestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::argument("both samples must be non-empty"));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::argument("samples must be finite"));
    }
    let (n_a, n_b) = (a.len(), b.len());
    let (ranks, tie_sizes) = pooled_midranks(a, b);
    let rank_sum_a: f64 = ranks[..n_a].iter().sum();
    let u_a = rank_sum_a - (n_a * (n_a + 1) / 2) as f64;

    let has_ties = tie_sizes.iter().any(|&t| t > 1);
    let n = n_a + n_b;
    if !has_ties && n <= 16 {
        let (le, ge, total) = exact_tail_counts(n, n_a, u_a);
        let p_le = le as f64 / total as f64;
        let p_ge = ge as f64 / total as f64;
        let p = match alternative {
            Alternative::Less => p_le,
            Alternative::Greater => p_ge,
            Alternative::TwoSided => (2.0 * p_le.min(p_ge)).min(1.0),
        };
        return Ok(UTestResult {
            u: u_a,
            p_value: p,
            alternative,
            exact: true,
        });
    }

    let mean = (n_a * n_b) as f64 / 2.0;
    let nf = n as f64;
    let tie_term: f64 = tie_sizes
        .iter()
        .map(|&t| (t * t * t - t) as f64)
        .sum::<f64>()
        / (nf * (nf - 1.0));
    let var = (n_a * n_b) as f64 / 12.0 * ((nf + 1.0) - tie_term);
    if var <= 0.0 {
        // Every pooled value identical: no evidence either way.
        return Ok(UTestResult {
            u: u_a,
            p_value: 1.0,
            alternative,
            exact: false,
        });
    }
    let sd = var.sqrt();
    let p = match alternative {
        Alternative::Less => normal_cdf((u_a - mean + 0.5) / sd),
        Alternative::Greater => 1.0 - normal_cdf((u_a - mean - 0.5) / sd),
        Alternative::TwoSided => {
            let z = ((u_a - mean).abs() - 0.5).max(0.0) / sd;
            (2.0 * (1.0 - normal_cdf(z))).min(1.0)
        }
    };
    Ok(UTestResult {
        u: u_a,
        p_value: p.clamp(0.0, 1.0),
        alternative,
        exact: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn seq(vals: &[f64]) -> Vec<Vec<f64>> {
        vals.iter().map(|&v| vec![v]).collect()
    }

    #[test]
    fn dtw_of_identical_sequences_is_zero_diagonal() {
        let a = seq(&[0.0, 1.0, 2.0, 1.5]);
        let r = dtw(&a, &a).unwrap();
        assert_eq!(r.score, 0.0);
        assert_eq!(r.raw_cost, 0.0);
        assert_eq!(r.path, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
    }

    #[test]
    fn dtw_small_grid_matches_hand_enumeration() {
        // a = [0, 1, 2], b = [0, 2]: the optimal monotone path is
        // (0,0)->(1,0)->(2,1) or (0,0)->(1,1)->(2,1), both with cost 1.
        let a = seq(&[0.0, 1.0, 2.0]);
        let b = seq(&[0.0, 2.0]);
        let r = dtw(&a, &b).unwrap();
        assert!((r.raw_cost - 1.0).abs() < 1e-12);
        assert_eq!(r.path.first(), Some(&(0, 0)));
        assert_eq!(r.path.last(), Some(&(2, 1)));
        assert!((r.score - r.raw_cost / r.path.len() as f64).abs() < 1e-15);
    }

    #[test]
    fn dtw_is_symmetric() {
        let mut rng = Rng::new(42);
        for _ in 0..100 {
            let la = 2 + (rng.next_u64() % 6) as usize;
            let lb = 2 + (rng.next_u64() % 6) as usize;
            let a: Vec<Vec<f64>> = (0..la)
                .map(|_| vec![rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0)])
                .collect();
            let b: Vec<Vec<f64>> = (0..lb)
                .map(|_| vec![rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0)])
                .collect();
            let ab = dtw(&a, &b).unwrap();
            let ba = dtw(&b, &a).unwrap();
            assert!((ab.raw_cost - ba.raw_cost).abs() < 1e-12);
        }
    }

    #[test]
    fn dtw_path_is_monotone_and_anchored() {
        let mut rng = Rng::new(7);
        let a: Vec<Vec<f64>> = (0..9).map(|_| vec![rng.uniform_in(-1.0, 1.0)]).collect();
        let b: Vec<Vec<f64>> = (0..5).map(|_| vec![rng.uniform_in(-1.0, 1.0)]).collect();
        let r = dtw(&a, &b).unwrap();
        assert_eq!(r.path.first(), Some(&(0, 0)));
        assert_eq!(r.path.last(), Some(&(8, 4)));
        for w in r.path.windows(2) {
            assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
            assert!(w[1].0 - w[0].0 <= 1 && w[1].1 - w[0].1 <= 1);
        }
    }

    #[test]
    fn dtw_rejects_bad_input() {
        assert!(dtw(&[], &seq(&[1.0])).is_err());
        assert!(dtw(&seq(&[1.0]), &[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn recognition_summary_all_correct() {
        let recs: Vec<RecognitionRecord> = (0..4)
            .map(|k| RecognitionRecord {
                class_true: k,
                class_top1: k,
                class_top2: (k + 1) % 4,
                final_mse: 0.1,
            })
            .collect();
        let s = recognition_summary(&recs).unwrap();
        assert_eq!(s.top1_accuracy, 1.0);
        assert_eq!(s.top2_accuracy, 1.0);
        assert!(s.mse_incorrect.is_empty());
    }

    #[test]
    fn recognition_summary_rates_by_definition() {
        // 10 trials: 6 top-1, 2 top-2 only, 2 incorrect.
        let mut recs = Vec::new();
        for i in 0..10 {
            let (t1, t2) = if i < 6 {
                (0, 1)
            } else if i < 8 {
                (1, 0)
            } else {
                (1, 2)
            };
            recs.push(RecognitionRecord {
                class_true: 0,
                class_top1: t1,
                class_top2: t2,
                final_mse: i as f64,
            });
        }
        let s = recognition_summary(&recs).unwrap();
        assert!((s.top1_accuracy - 0.6).abs() < 1e-15);
        assert!((s.top2_accuracy - 0.8).abs() < 1e-15);
        assert_eq!(
            s.mse_top1_correct.len() + s.mse_top2_correct.len() + s.mse_incorrect.len(),
            s.n_trials
        );
    }

    #[test]
    fn recognition_summary_paper_scale_counts() {
        // 260 trials split 177 / 34 / 49 gives 68.1% top-1, 81.2% top-2.
        let mut recs = Vec::new();
        for i in 0..260 {
            let (t1, t2) = if i < 177 {
                (3, 4)
            } else if i < 211 {
                (4, 3)
            } else {
                (4, 5)
            };
            recs.push(RecognitionRecord {
                class_true: 3,
                class_top1: t1,
                class_top2: t2,
                final_mse: 0.0,
            });
        }
        let s = recognition_summary(&recs).unwrap();
        assert_eq!(s.n_trials, 260);
        assert!((s.top1_accuracy - 177.0 / 260.0).abs() < 1e-12);
        assert!((s.top2_accuracy - 211.0 / 260.0).abs() < 1e-12);
    }

    #[test]
    fn u_test_small_exact_values() {
        // a = [1,2], b = [3,4]: U_a = 0; 6 equally likely splits, one as
        // extreme, so one-sided p = 1/6.
        let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0], Alternative::Less).unwrap();
        assert!(r.exact);
        assert_eq!(r.u, 0.0);
        assert!((r.p_value - 1.0 / 6.0).abs() < 1e-12);

        // a = [5], b = [1]: U_a = 1, exact p(greater) = 1/2.
        let r = mann_whitney_u(&[5.0], &[1.0], Alternative::Greater).unwrap();
        assert_eq!(r.u, 1.0);
        assert!((r.p_value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn u_test_identical_samples_split_evenly() {
        let a = [1.0, 2.0, 3.0];
        let r = mann_whitney_u(&a, &a, Alternative::TwoSided).unwrap();
        assert!((r.u - (a.len() * a.len()) as f64 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn u_identity_holds_with_midranks() {
        let mut rng = Rng::new(11);
        for _ in 0..50 {
            let n_a = 1 + (rng.next_u64() % 10) as usize;
            let n_b = 1 + (rng.next_u64() % 10) as usize;
            // Coarse grid so ties actually occur.
            let a: Vec<f64> = (0..n_a).map(|_| (rng.next_u64() % 5) as f64).collect();
            let b: Vec<f64> = (0..n_b).map(|_| (rng.next_u64() % 5) as f64).collect();
            let ua = mann_whitney_u(&a, &b, Alternative::TwoSided).unwrap().u;
            let ub = mann_whitney_u(&b, &a, Alternative::TwoSided).unwrap().u;
            assert!(
                (ua + ub - (n_a * n_b) as f64).abs() < 1e-9,
                "U_a {ua} + U_b {ub} != {}",
                n_a * n_b
            );
        }
    }

    #[test]
    fn exact_and_approximate_p_agree_for_8_by_8() {
        let mut rng = Rng::new(23);
        for _ in 0..20 {
            let a: Vec<f64> = (0..8).map(|_| rng.uniform()).collect();
            let mut b: Vec<f64> = (0..8).map(|_| rng.uniform()).collect();
            b[0] += 0.2;
            for alt in [Alternative::Less, Alternative::Greater, Alternative::TwoSided] {
                let exact = mann_whitney_u(&a, &b, alt).unwrap();
                assert!(exact.exact);
                // Force the approximate path by padding... instead, recompute
                // the approximation directly on the same statistic.
                let n_a = 8.0f64;
                let n_b = 8.0f64;
                let mean = n_a * n_b / 2.0;
                let sd = (n_a * n_b * (n_a + n_b + 1.0) / 12.0).sqrt();
                let approx = match alt {
                    Alternative::Less => normal_cdf((exact.u - mean + 0.5) / sd),
                    Alternative::Greater => 1.0 - normal_cdf((exact.u - mean - 0.5) / sd),
                    Alternative::TwoSided => {
                        let z = ((exact.u - mean).abs() - 0.5).max(0.0) / sd;
                        (2.0 * (1.0 - normal_cdf(z))).min(1.0)
                    }
                };
                assert!(
                    (exact.p_value - approx).abs() < 0.02,
                    "alt {alt:?}: exact {} vs approx {approx}",
                    exact.p_value
                );
            }
        }
    }
}
