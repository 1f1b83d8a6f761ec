//! Quantizes a continuous function of proportions into a level-set
//! specification, trading resolution for finiteness.
//!
//! The proportion simplex is cut into half-open grid cells of side `1/g`
//! (closed where they touch the `p = 1` face, so nothing escapes). Each
//! cell becomes one clause labeled with the function's value at a cell
//! representative, snapped to the `ε`-grid over `[low, high]`. For an
//! `h` that moves at most 1 per unit of coordinate change, any input in
//! the cell therefore maps to a label within `ε/2 + 1/g` of its true
//! value.
//!
//! The representative is the cell center, pulled back along the segment
//! toward the cell's lower corner until it enters the simplex when the
//! center lies outside — the lower corner always lies inside, so the
//! label reflects a point the cell genuinely contains.

use num::rational::Rational64;
use num::{One, Zero};

use super::{Clause, LevelSetSpec, RationalInequality};
use crate::engine::Value;

fn unit(k: usize, idx: usize) -> Vec<Rational64> {
    let mut v = vec![Rational64::zero(); k];
    v[idx] = Rational64::one();
    v
}

/// Builds the spec for `h` over proportions `(p_1, …, p_k)`, with output
/// range `[low, high]`, output resolution `epsilon`, and grid resolution
/// `g`. Labels are the quantized values rendered as rationals.
pub fn quantize_continuous<H>(
    h: H,
    k: Value,
    (low, high): (Rational64, Rational64),
    epsilon: Rational64,
    g: u32,
) -> LevelSetSpec
where
    H: Fn(&[Rational64]) -> Rational64,
{
    assert!(k >= 1, "need at least one tracked proportion");
    assert!(g >= 1, "grid resolution must be positive");
    assert!(epsilon > Rational64::zero(), "resolution must be positive");
    assert!(low < high, "empty output range");
    let k = k as usize;
    let levels = ((high - low) / epsilon).floor().to_integer();

    let mut labels: Vec<String> = Vec::new();
    let mut clauses: Vec<Clause> = Vec::new();
    let mut cell = vec![0u32; k];
    loop {
        if cell.iter().map(|&a| a as u64).sum::<u64>() <= g as u64 {
            let mut conjunction = Vec::new();
            for (idx, &a) in cell.iter().enumerate() {
                if a > 0 {
                    conjunction.push(RationalInequality::ge(
                        unit(k, idx),
                        Rational64::new(a as i64, g as i64),
                    ));
                }
                if a + 1 < g {
                    conjunction.push(RationalInequality::lt(
                        unit(k, idx),
                        Rational64::new(a as i64 + 1, g as i64),
                    ));
                }
            }

            let lower: Vec<Rational64> =
                cell.iter().map(|&a| Rational64::new(a as i64, g as i64)).collect();
            let center: Vec<Rational64> =
                cell.iter().map(|&a| Rational64::new(2 * a as i64 + 1, 2 * g as i64)).collect();
            let center_sum: Rational64 = center.iter().sum();
            let rep: Vec<Rational64> = if center_sum <= Rational64::one() {
                center
            } else {
                // Slide from the lower corner toward the center until the
                // coordinate sum hits 1.
                let lower_sum: Rational64 = lower.iter().sum();
                let lambda = (Rational64::one() - lower_sum) / (center_sum - lower_sum);
                lower
                    .iter()
                    .zip(&center)
                    .map(|(l, c)| l + lambda * (c - l))
                    .collect()
            };

            let mut level = ((h(&rep) - low) / epsilon).round().to_integer();
            level = level.clamp(0, levels);
            let label = (low + epsilon * Rational64::from_integer(level)).to_string();
            let label_idx = match labels.iter().position(|l| *l == label) {
                Some(i) => i,
                None => {
                    labels.push(label);
                    labels.len() - 1
                }
            };
            clauses.push(Clause { label: label_idx, conjunction });
        }
        // Advance the odometer over {0..g-1}^k.
        let mut idx = k;
        loop {
            if idx == 0 {
                return LevelSetSpec { alphabet_max: k as Value, labels, clauses };
            }
            idx -= 1;
            cell[idx] += 1;
            if cell[idx] < g {
                break;
            }
            cell[idx] = 0;
        }
    }
}
