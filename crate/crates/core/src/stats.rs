//! Rank-based tests: Kruskal-Wallis, Dunn's post-hoc comparisons and the
//! Mann-Whitney rank-sum test, each with an exact permutation variant for
//! small samples.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::{Error, Result};

/// Largest pooled sample the exact permutation variants accept.
pub const EXACT_MAX_N: usize = 12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub group_sizes: Vec<usize>,
    /// `1 - sum(t^3 - t) / (N^3 - N)` over tie groups; 1 without ties.
    pub tie_correction: f64,
}

/// Average ranks (1-based) of the pooled values, plus the sizes of the tie
/// groups.
pub fn ranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            out[k] = avg;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (out, ties)
}

fn tie_sum(ties: &[usize]) -> f64 {
    ties.iter().map(|&t| (t * t * t - t) as f64).sum()
}

fn pooled(groups: &[&[f64]]) -> Result<(Vec<f64>, Vec<usize>)> {
    if groups.len() < 2 {
        return Err(Error::InvalidArgument("need at least two groups".into()));
    }
    if groups.iter().any(|g| g.is_empty()) {
        return Err(Error::InvalidArgument("empty group".into()));
    }
    if groups.iter().flat_map(|g| g.iter()).any(|x| x.is_nan()) {
        return Err(Error::InvalidArgument("NaN in sample".into()));
    }
    let all: Vec<f64> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    Ok((all, groups.iter().map(|g| g.len()).collect()))
}

/// H from pooled ranks split by consecutive group sizes, before tie
/// correction.
fn h_raw(ranks: &[f64], sizes: &[usize]) -> f64 {
    let n = ranks.len() as f64;
    let mut s = 0.0;
    let mut start = 0;
    for &k in sizes {
        let r: f64 = ranks[start..start + k].iter().sum();
        s += r * r / k as f64;
        start += k;
    }
    12.0 / (n * (n + 1.0)) * s - 3.0 * (n + 1.0)
}

fn kw_core(groups: &[&[f64]]) -> Result<(f64, f64, Vec<f64>, Vec<usize>)> {
    let (all, sizes) = pooled(groups)?;
    let n = all.len();
    if n < 3 {
        return Err(Error::InvalidArgument(
            "need at least three observations".into(),
        ));
    }
    let (r, ties) = ranks(&all);
    let nf = n as f64;
    let c = 1.0 - tie_sum(&ties) / (nf * nf * nf - nf);
    let h = if c <= 0.0 {
        0.0
    } else {
        (h_raw(&r, &sizes) / c).max(0.0)
    };
    Ok((h, c, r, sizes))
}

/// Kruskal-Wallis H with tie correction and its chi-square p-value on
/// `k - 1` degrees of freedom. All values tied gives `H = 0, p = 1`.
pub fn kruskal_wallis(groups: &[&[f64]]) -> Result<TestResult> {
    let (h, c, _, sizes) = kw_core(groups)?;
    let p = if h == 0.0 {
        1.0
    } else {
        let chi = ChiSquared::new((sizes.len() - 1) as f64).expect("positive degrees of freedom");
        chi.sf(h).clamp(0.0, 1.0)
    };
    Ok(TestResult {
        statistic: h,
        p_value: p,
        group_sizes: sizes,
        tie_correction: c,
    })
}

/// Calls `visit` with each distinct assignment of `n` positions to groups
/// of the given sizes, as a label per position.
fn for_each_assignment(sizes: &[usize], visit: &mut dyn FnMut(&[usize])) {
    fn rec(
        pos: usize,
        left: &mut [usize],
        labels: &mut Vec<usize>,
        n: usize,
        visit: &mut dyn FnMut(&[usize]),
    ) {
        if pos == n {
            visit(labels);
            return;
        }
        for g in 0..left.len() {
            if left[g] > 0 {
                left[g] -= 1;
                labels.push(g);
                rec(pos + 1, left, labels, n, visit);
                labels.pop();
                left[g] += 1;
            }
        }
    }
    let n = sizes.iter().sum();
    let mut left = sizes.to_vec();
    rec(0, &mut left, &mut Vec::with_capacity(n), n, visit);
}

fn check_exact(n: usize) -> Result<()> {
    if n > EXACT_MAX_N {
        return Err(Error::InvalidArgument(format!(
            "exact test limited to {EXACT_MAX_N} observations, got {n}"
        )));
    }
    Ok(())
}

/// Kruskal-Wallis with the p-value from the full permutation distribution
/// of H.
pub fn kruskal_wallis_exact(groups: &[&[f64]]) -> Result<TestResult> {
    let (h, c, r, sizes) = kw_core(groups)?;
    check_exact(r.len())?;
    // H is a monotone function of sum(R_i^2 / n_i) for fixed data, so the
    // permutation distribution compares that sum.
    let stat = |labels: &[usize]| -> f64 {
        let mut sums = vec![0.0; sizes.len()];
        for (i, &g) in labels.iter().enumerate() {
            sums[g] += r[i];
        }
        sums.iter()
            .zip(&sizes)
            .map(|(s, &k)| s * s / k as f64)
            .sum()
    };
    let observed: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(g, &k)| std::iter::repeat_n(g, k))
        .collect();
    let obs = stat(&observed);
    let tol = 1e-9 * obs.abs().max(1.0);
    let (mut hits, mut total) = (0u64, 0u64);
    for_each_assignment(&sizes, &mut |labels| {
        total += 1;
        if stat(labels) >= obs - tol {
            hits += 1;
        }
    });
    Ok(TestResult {
        statistic: h,
        p_value: hits as f64 / total as f64,
        group_sizes: sizes,
        tie_correction: c,
    })
}

/// Pairwise Dunn comparisons; matrices are indexed `[i][j]` by group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DunnResult {
    pub z: Vec<Vec<f64>>,
    pub p_raw: Vec<Vec<f64>>,
    /// Raw p-values times the number of pairs, capped at 1.
    pub p_bonferroni: Vec<Vec<f64>>,
}

pub fn dunn(groups: &[&[f64]]) -> Result<DunnResult> {
    let (all, sizes) = pooled(groups)?;
    if all.len() < 3 {
        return Err(Error::InvalidArgument(
            "need at least three observations".into(),
        ));
    }
    let (r, ties) = ranks(&all);
    let n = all.len() as f64;
    let k = sizes.len();
    let mut means = Vec::with_capacity(k);
    let mut start = 0;
    for &m in &sizes {
        means.push(r[start..start + m].iter().sum::<f64>() / m as f64);
        start += m;
    }
    let base = n * (n + 1.0) / 12.0 - tie_sum(&ties) / (12.0 * (n - 1.0));
    let pairs = (k * (k - 1) / 2) as f64;
    let normal = Normal::standard();
    let mut z = vec![vec![0.0; k]; k];
    let mut p_raw = vec![vec![1.0; k]; k];
    let mut p_bonferroni = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let var = base * (1.0 / sizes[i] as f64 + 1.0 / sizes[j] as f64);
            let zij = if var > 0.0 {
                (means[i] - means[j]) / var.sqrt()
            } else {
                0.0
            };
            let p = (2.0 * normal.sf(zij.abs())).clamp(0.0, 1.0);
            z[i][j] = zij;
            z[j][i] = -zij;
            p_raw[i][j] = p;
            p_raw[j][i] = p;
            let adj = (p * pairs).min(1.0);
            p_bonferroni[i][j] = adj;
            p_bonferroni[j][i] = adj;
        }
    }
    Ok(DunnResult {
        z,
        p_raw,
        p_bonferroni,
    })
}

/// Mann-Whitney U of `a` against `b` (`U = R_a - n_a (n_a + 1) / 2`) with a
/// two-sided p-value from the tie-corrected normal approximation with
/// continuity correction.
pub fn rank_sum(a: &[f64], b: &[f64]) -> Result<TestResult> {
    let (all, sizes) = pooled(&[a, b])?;
    let (r, ties) = ranks(&all);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;
    let u = r[..a.len()].iter().sum::<f64>() - na * (na + 1.0) / 2.0;
    let mean = na * nb / 2.0;
    let ts = tie_sum(&ties);
    let var = na * nb / 12.0 * ((n + 1.0) - ts / (n * (n - 1.0)).max(1.0));
    let c = if n > 1.0 {
        1.0 - ts / (n * n * n - n)
    } else {
        1.0
    };
    let p = if var <= 0.0 {
        1.0
    } else {
        let zabs = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
        (2.0 * Normal::standard().sf(zabs)).clamp(0.0, 1.0)
    };
    Ok(TestResult {
        statistic: u,
        p_value: p,
        group_sizes: sizes,
        tie_correction: c,
    })
}

/// Rank-sum test with the two-sided p-value from all `C(n, n_a)` splits.
pub fn rank_sum_exact(a: &[f64], b: &[f64]) -> Result<TestResult> {
    let mut result = rank_sum(a, b)?;
    let all: Vec<f64> = a.iter().chain(b).copied().collect();
    check_exact(all.len())?;
    let (r, _) = ranks(&all);
    let na = a.len() as f64;
    let mean = na * b.len() as f64 / 2.0;
    let dev = (result.statistic - mean).abs();
    let (mut hits, mut total) = (0u64, 0u64);
    for_each_assignment(&[a.len(), b.len()], &mut |labels| {
        total += 1;
        let ra: f64 = labels
            .iter()
            .zip(&r)
            .filter(|(&g, _)| g == 0)
            .map(|(_, x)| x)
            .sum();
        let u = ra - na * (na + 1.0) / 2.0;
        if (u - mean).abs() >= dev - 1e-9 {
            hits += 1;
        }
    });
    result.p_value = hits as f64 / total as f64;
    Ok(result)
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest};
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_computed_h() {
        // Rank sums 6, 15, 24: 12/90 * (12 + 75 + 192) - 30.
        let r = kruskal_wallis(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], &[7.0, 8.0, 9.0]]).unwrap();
        assert!((r.statistic - 7.2).abs() < 1e-9);
        assert!(
            (r.p_value - (-3.6f64).exp()).abs() < 1e-12,
            "chi2 sf on 2 df is exp(-h/2)"
        );
        assert_eq!(r.tie_correction, 1.0);
        assert_eq!(r.group_sizes, vec![3, 3, 3]);
    }

    // Direct transcription of the textbook formulas over explicit rank
    // lists, ties handled by brute-force averaging.
    fn naive_h(groups: &[Vec<f64>]) -> f64 {
        let all: Vec<f64> = groups.iter().flatten().copied().collect();
        let rank = |x: f64| {
            let below = all.iter().filter(|&&y| y < x).count() as f64;
            let equal = all.iter().filter(|&&y| y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        };
        let n = all.len() as f64;
        let grand = (n + 1.0) / 2.0;
        let mut num = 0.0;
        for g in groups {
            let rbar = g.iter().map(|&x| rank(x)).sum::<f64>() / g.len() as f64;
            num += g.len() as f64 * (rbar - grand).powi(2);
        }
        let den: f64 = all.iter().map(|&x| (rank(x) - grand).powi(2)).sum::<f64>();
        (n - 1.0) * num / den
    }

    #[test]
    fn h_matches_variance_form_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let k = rng.gen_range(2..5);
            let groups: Vec<Vec<f64>> = (0..k)
                .map(|_| {
                    (0..rng.gen_range(1..8))
                        .map(|_| rng.gen_range(0..6) as f64)
                        .collect()
                })
                .collect();
            let refs: Vec<&[f64]> = groups.iter().map(Vec::as_slice).collect();
            let Ok(r) = kruskal_wallis(&refs) else {
                continue;
            };
            let expected = naive_h(&groups);
            if expected.is_finite() {
                assert!(
                    (r.statistic - expected).abs() < 1e-9,
                    "{} vs {expected}",
                    r.statistic
                );
            }
        }
    }

    #[test]
    fn identical_groups() {
        let g = [5.0, 5.0, 5.0];
        let r = kruskal_wallis(&[&g, &g, &g]).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        let d = dunn(&[&g, &g, &g]).unwrap();
        assert!(d.p_raw.iter().flatten().all(|&p| p == 1.0));
        let same = [1.0, 2.0, 3.0];
        assert!((rank_sum(&same, &same).unwrap().p_value - 1.0).abs() < 1e-12);
        assert_eq!(rank_sum(&g, &g).unwrap().p_value, 1.0);
    }

    proptest! {
        #[test]
        fn monotone_transform_invariance(xs in proptest::collection::vec(-100.0f64..100.0, 9..30)) {
            let cut = xs.len() / 3;
            let (a, rest) = xs.split_at(cut);
            let (b, c) = rest.split_at(cut);
            let t = |v: &[f64]| v.iter().map(|x| (x / 10.0).exp() * 3.0 + 1.0).collect::<Vec<_>>();
            let r1 = kruskal_wallis(&[a, b, c]).unwrap();
            let r2 = kruskal_wallis(&[&t(a), &t(b), &t(c)]).unwrap();
            prop_assert!((r1.statistic - r2.statistic).abs() < 1e-9);
            let u1 = rank_sum(a, b).unwrap();
            let u2 = rank_sum(&t(a), &t(b)).unwrap();
            prop_assert!(u1.statistic == u2.statistic && (u1.p_value - u2.p_value).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&r1.p_value));
        }
    }

    #[test]
    fn dunn_separated_groups_and_symmetry() {
        let d = dunn(&[
            &[1.0, 2.0, 3.0, 4.0, 5.0],
            &[6.0, 7.0, 8.0, 9.0, 10.0],
            &[11.0, 12.0, 13.0, 14.0, 15.0],
        ])
        .unwrap();
        // Mean ranks 3, 8, 13; sd of a difference sqrt(20 * 2/5).
        let z = -5.0 / (20.0f64 * 0.4).sqrt();
        assert!((d.z[0][1] - z).abs() < 1e-12);
        assert!((d.z[0][2] - 2.0 * z).abs() < 1e-12);
        assert!(d.p_raw[0][2] < 0.05 && d.p_raw[0][2] < d.p_raw[0][1]);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(d.p_raw[i][j], d.p_raw[j][i]);
                assert!(d.p_bonferroni[i][j] >= d.p_raw[i][j]);
            }
        }
        assert!((d.p_bonferroni[0][1] - (3.0 * d.p_raw[0][1]).min(1.0)).abs() < 1e-15);
    }

    #[test]
    fn rank_sum_extreme_split_is_most_significant() {
        let r = rank_sum(&[1.0, 2.0, 3.0], &[10.0, 11.0, 12.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        // All 20 ways to place three of six ranks in the first group.
        let values = [1.0, 2.0, 3.0, 10.0, 11.0, 12.0];
        let mut ps = Vec::new();
        let mut extreme = 0;
        for mask in 0u32..64 {
            if mask.count_ones() != 3 {
                continue;
            }
            let (a, b): (Vec<f64>, Vec<f64>) = (0..6)
                .map(|i| (mask >> i & 1 == 1, values[i]))
                .fold((vec![], vec![]), |(mut a, mut b), (in_a, v)| {
                    if in_a {
                        a.push(v)
                    } else {
                        b.push(v)
                    }
                    (a, b)
                });
            let s = rank_sum(&a, &b).unwrap();
            if s.statistic == 0.0 || s.statistic == 9.0 {
                extreme += 1;
            }
            ps.push(s.p_value);
        }
        assert_eq!(ps.len(), 20);
        assert_eq!(extreme, 2);
        let min = ps.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(r.p_value, min);
        let exact = rank_sum_exact(&[1.0, 2.0, 3.0], &[10.0, 11.0, 12.0]).unwrap();
        assert!((exact.p_value - 2.0 / 20.0).abs() < 1e-12);
    }

    #[test]
    fn exact_kw_on_hand_example() {
        // Only the 3! orderings of the three blocks reach H = 7.2 among
        // 9! / (3!)^3 = 1680 assignments.
        let r =
            kruskal_wallis_exact(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], &[7.0, 8.0, 9.0]]).unwrap();
        assert!((r.p_value - 6.0 / 1680.0).abs() < 1e-12);
        let big = [0.0; 13];
        assert!(kruskal_wallis_exact(&[&big, &[1.0]]).is_err());
    }

    fn ks_uniform(mut ps: Vec<f64>) -> f64 {
        ps.sort_by(f64::total_cmp);
        let n = ps.len() as f64;
        ps.iter()
            .enumerate()
            .map(|(i, &p)| (p - i as f64 / n).abs().max(((i + 1) as f64 / n - p).abs()))
            .fold(0.0, f64::max)
    }

    #[test]
    fn shuffled_labels_give_uniform_p_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut data: Vec<f64> = (0..30).map(|_| rng.gen::<f64>()).collect();
        let (mut kw, mut rs, mut dn) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..1000 {
            data.shuffle(&mut rng);
            let (a, rest) = data.split_at(10);
            let (b, c) = rest.split_at(10);
            kw.push(kruskal_wallis(&[a, b, c]).unwrap().p_value);
            rs.push(rank_sum(a, b).unwrap().p_value);
            dn.push(dunn(&[a, b, c]).unwrap().p_raw[0][1]);
        }
        for (name, ps) in [("kw", kw), ("ranksum", rs), ("dunn", dn)] {
            let d = ks_uniform(ps);
            assert!(d < 0.1, "{name}: KS distance {d}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(kruskal_wallis(&[&[1.0, 2.0]]).is_err());
        assert!(kruskal_wallis(&[&[1.0, 2.0], &[]]).is_err());
        assert!(kruskal_wallis(&[&[1.0], &[2.0]]).is_err());
        assert!(rank_sum(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }
}
