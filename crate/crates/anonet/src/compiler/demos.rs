//! Ready-made specifications covering the main predicate shapes:
//! single thresholds, weighted thresholds, pairwise comparisons,
//! permutation orderings, and exact level sets of a weighted mean.

use num::rational::Rational64;
use num::Zero;

use super::{Clause, LevelSetSpec, RationalInequality};
use crate::engine::Value;

fn r(n: i64, d: i64) -> Rational64 {
    Rational64::new(n, d)
}

/// Difference vector `p_a - p_b` over `k` coordinates (1-based values).
fn diff(k: usize, a: usize, b: usize) -> Vec<Rational64> {
    let mut v = vec![Rational64::zero(); k];
    v[a - 1] = r(1, 1);
    v[b - 1] = r(-1, 1);
    v
}

/// Did value 1 reach more than half the nodes? Ties answer `le_half`.
pub fn majority() -> LevelSetSpec {
    LevelSetSpec {
        alphabet_max: 1,
        labels: vec!["le_half".into(), "gt_half".into()],
        clauses: vec![
            Clause { label: 0, conjunction: vec![RationalInequality::le(vec![r(1, 1)], r(1, 2))] },
            Clause { label: 1, conjunction: vec![RationalInequality::gt(vec![r(1, 1)], r(1, 2))] },
        ],
    }
}

/// Passes only with a three-quarters supermajority of value 1.
pub fn weighted_majority() -> LevelSetSpec {
    LevelSetSpec {
        alphabet_max: 1,
        labels: vec!["pass".into(), "fail".into()],
        clauses: vec![
            Clause { label: 0, conjunction: vec![RationalInequality::ge(vec![r(1, 1)], r(3, 4))] },
            Clause { label: 1, conjunction: vec![RationalInequality::lt(vec![r(1, 1)], r(3, 4))] },
        ],
    }
}

/// Yes/no vote where value 0 abstains: 1 = yes, 2 = no, ties to yes.
/// Only the yes/no balance matters, however many abstain.
pub fn abstain_majority() -> LevelSetSpec {
    LevelSetSpec {
        alphabet_max: 2,
        labels: vec!["yes".into(), "no".into()],
        clauses: vec![
            Clause {
                label: 0,
                conjunction: vec![RationalInequality::le(vec![r(-1, 1), r(1, 1)], r(0, 1))],
            },
            Clause {
                label: 1,
                conjunction: vec![RationalInequality::gt(vec![r(-1, 1), r(1, 1)], r(0, 1))],
            },
        ],
    }
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, rest: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..rest.len() {
            let v = rest.remove(i);
            prefix.push(v);
            go(prefix, rest, out);
            prefix.pop();
            rest.insert(i, v);
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut (1..=k).collect(), &mut out);
    out
}

/// Which value has the second-highest share? Ties rank the smaller value
/// higher, so every proportion vector falls in exactly one ordering cell.
pub fn second_most_popular(k: usize) -> LevelSetSpec {
    assert!(k >= 2, "need at least two values to rank");
    let mut labels: Vec<String> = Vec::new();
    let mut clauses = Vec::new();
    for perm in permutations(k) {
        // Adjacent constraints pin the whole chain; the tie goes to the
        // smaller value, making that pair's inequality non-strict.
        let conjunction = perm
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                if a < b {
                    RationalInequality::ge(diff(k, a, b), Rational64::zero())
                } else {
                    RationalInequality::gt(diff(k, a, b), Rational64::zero())
                }
            })
            .collect();
        let name = perm[1].to_string();
        let label = match labels.iter().position(|l| *l == name) {
            Some(i) => i,
            None => {
                labels.push(name);
                labels.len() - 1
            }
        };
        clauses.push(Clause { label, conjunction });
    }
    LevelSetSpec { alphabet_max: k as Value, labels, clauses }
}

/// Three-way comparison of two chosen values' shares.
pub fn i_vs_iprime(i: Value, i_prime: Value, k: Value) -> LevelSetSpec {
    assert!(i != i_prime && i >= 1 && i_prime >= 1 && i <= k && i_prime <= k);
    let d = diff(k as usize, i as usize, i_prime as usize);
    LevelSetSpec {
        alphabet_max: k,
        labels: vec![format!("more{i}"), format!("more{i_prime}"), "tie".into()],
        clauses: vec![
            Clause {
                label: 0,
                conjunction: vec![RationalInequality::gt(d.clone(), Rational64::zero())],
            },
            Clause {
                label: 1,
                conjunction: vec![RationalInequality::lt(d.clone(), Rational64::zero())],
            },
            Clause {
                label: 2,
                conjunction: vec![
                    RationalInequality::le(d.clone(), Rational64::zero()),
                    RationalInequality::ge(d, Rational64::zero()),
                ],
            },
        ],
    }
}

/// Level sets of the mean input: `2k + 1` classes alternating between
/// exact integers and the open intervals separating them. Directly
/// comparable with what one averaging run reports.
pub fn mean_level_sets(k: Value) -> LevelSetSpec {
    let coeff: Vec<Rational64> = (1..=k as i64).map(|v| r(v, 1)).collect();
    let mut labels = Vec::new();
    let mut clauses = Vec::new();
    for m in 0..=k as i64 {
        labels.push(m.to_string());
        clauses.push(Clause {
            label: labels.len() - 1,
            conjunction: vec![
                RationalInequality::le(coeff.clone(), r(m, 1)),
                RationalInequality::ge(coeff.clone(), r(m, 1)),
            ],
        });
        if m < k as i64 {
            labels.push(format!("({m},{})", m + 1));
            clauses.push(Clause {
                label: labels.len() - 1,
                conjunction: vec![
                    RationalInequality::gt(coeff.clone(), r(m, 1)),
                    RationalInequality::lt(coeff.clone(), r(m + 1, 1)),
                ],
            });
        }
    }
    LevelSetSpec { alphabet_max: k, labels, clauses }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_demo_is_a_partition() {
        majority().validate_partition(12).unwrap();
        weighted_majority().validate_partition(12).unwrap();
        abstain_majority().validate_partition(12).unwrap();
        i_vs_iprime(1, 3, 3).validate_partition(10).unwrap();
        mean_level_sets(3).validate_partition(10).unwrap();
        second_most_popular(4).validate_partition(8).unwrap();
    }

    #[test]
    fn rankings_read_off_the_sorted_shares() {
        let spec = second_most_popular(4);
        assert_eq!(spec.clauses.len(), 24);
        let p = [r(4, 10), r(3, 10), r(2, 10), r(1, 10)];
        assert_eq!(spec.labels[spec.evaluate(&p).unwrap()], "2");
        // All-equal shares: ties rank smaller values higher.
        let q = [r(1, 4); 4];
        assert_eq!(spec.labels[spec.evaluate(&q).unwrap()], "2");
        // Value 3 dominates, then 1 by tie-break against 2 and 4.
        let s = [r(1, 5), r(1, 5), r(2, 5), r(1, 5)];
        assert_eq!(spec.labels[spec.evaluate(&s).unwrap()], "1");
    }

    #[test]
    fn mean_cells_name_the_exact_mean_interval() {
        let spec = mean_level_sets(3);
        assert_eq!(spec.clauses.len(), 7);
        // Shares of one node each of 1, 2, 3 among four nodes: mean 3/2.
        let p = [r(1, 4), r(1, 4), r(1, 4)];
        assert_eq!(spec.labels[spec.evaluate(&p).unwrap()], "(1,2)");
        let all_twos = [r(0, 1), r(1, 1), r(0, 1)];
        assert_eq!(spec.labels[spec.evaluate(&all_twos).unwrap()], "2");
    }

    #[test]
    fn pairwise_comparison_has_a_tie_class() {
        let spec = i_vs_iprime(2, 3, 4);
        let more2 = [r(0, 1), r(2, 5), r(1, 5), r(0, 1)];
        assert_eq!(spec.labels[spec.evaluate(&more2).unwrap()], "more2");
        let tie = [r(1, 5), r(1, 5), r(1, 5), r(1, 5)];
        assert_eq!(spec.labels[spec.evaluate(&tie).unwrap()], "tie");
    }

    #[test]
    fn abstentions_do_not_sway_the_vote() {
        let spec = abstain_majority();
        // 1 yes, 1 no, 8 abstain: tie goes to yes.
        let p = [r(1, 10), r(1, 10)];
        assert_eq!(spec.labels[spec.evaluate(&p).unwrap()], "yes");
        let p = [r(1, 10), r(2, 10)];
        assert_eq!(spec.labels[spec.evaluate(&p).unwrap()], "no");
    }
}
