//! Compiles rational threshold predicates over value proportions into
//! runnable anonymous protocols.
//!
//! A specification partitions the space of proportion vectors
//! `(p_1, …, p_K)` (shares of nodes holding values `1..=K`; value 0 is
//! the untracked remainder) into labeled regions, each a finite union of
//! conjunctions of linear inequalities `Σ α_k p_k ⋚ a` with rational
//! coefficients. Compilation clears denominators: each inequality
//! becomes an integer comparison against the *mean* of a small per-node
//! encoding, and that mean is measured exactly by one averaging
//! instance. Flipping negative weights to `β_k(1 − χ_k)` keeps every
//! encoded value nonnegative while shifting the threshold by the sum of
//! the flipped weights, so the whole test runs over a bounded alphabet.
//!
//! An averaging instance pins its mean to an integer or an open unit
//! interval ([`IntervalValue`]); since the cleared threshold is an
//! integer, either answer settles the comparison outright. A node's
//! label is the first clause whose comparisons all hold.

pub mod demos;
mod parse;
mod quantize;

pub use parse::{parse_spec, ParseError};
pub use quantize::quantize_continuous;

use std::collections::HashMap;
use std::fmt;

use num::rational::Rational64;
use num::{One, Signed, Zero};
use thiserror::Error;

use crate::averaging::{AveragingProtocol, AvgCore, AvgWire, IntervalValue};
use crate::engine::product::{Fanout, Product};
use crate::engine::{NodeUpdate, Protocol, ProtocolViolation, TransitionCtx, Value};

/// Upper bound on the encoded alphabet of one comparison; keeps node
/// state logarithmic in practice.
pub const MAX_CAP: u64 = 1 << 20;

/// `Σ coefficients[k] · p_{k+1} ≤ threshold` (or `<` when strict).
/// Other senses are stored negated, so this form is canonical.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalInequality {
    pub coefficients: Vec<Rational64>,
    pub threshold: Rational64,
    pub strict: bool,
}

impl RationalInequality {
    pub fn le(coefficients: Vec<Rational64>, threshold: Rational64) -> Self {
        RationalInequality { coefficients, threshold, strict: false }
    }

    pub fn lt(coefficients: Vec<Rational64>, threshold: Rational64) -> Self {
        RationalInequality { coefficients, threshold, strict: true }
    }

    pub fn ge(coefficients: Vec<Rational64>, threshold: Rational64) -> Self {
        Self::le(coefficients.into_iter().map(|c| -c).collect(), -threshold)
    }

    pub fn gt(coefficients: Vec<Rational64>, threshold: Rational64) -> Self {
        Self::lt(coefficients.into_iter().map(|c| -c).collect(), -threshold)
    }

    /// Direct rational evaluation; the reference every compiled run is
    /// checked against.
    pub fn holds(&self, p: &[Rational64]) -> bool {
        let lhs: Rational64 =
            self.coefficients.iter().zip(p).map(|(c, share)| c * share).sum();
        if self.strict {
            lhs < self.threshold
        } else {
            lhs <= self.threshold
        }
    }
}

impl fmt::Display for RationalInequality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut any = false;
        for (idx, c) in self.coefficients.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let mag = c.abs();
            if any {
                f.write_str(if c.is_negative() { " - " } else { " + " })?;
            } else if c.is_negative() {
                f.write_str("-")?;
            }
            if mag.is_one() {
                write!(f, "p{}", idx + 1)?;
            } else {
                write!(f, "{}*p{}", mag, idx + 1)?;
            }
            any = true;
        }
        if !any {
            write!(f, "0*p1")?;
        }
        write!(f, " {} {}", if self.strict { "<" } else { "<=" }, self.threshold)
    }
}

/// Denominator-cleared form: the comparison holds iff the mean of the
/// per-node encoding ([`encode_local`]) is `≤ threshold` (`<` when
/// strict). `positive[k]` records whether value `k+1` counts directly or
/// flipped.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IntegerComparison {
    pub weights: Vec<u32>,
    pub positive: Vec<bool>,
    pub threshold: i64,
    pub strict: bool,
}

impl IntegerComparison {
    /// Largest value [`encode_local`] can produce; the alphabet bound of
    /// the averaging instance measuring this comparison.
    pub fn cap(&self) -> Value {
        self.weights.iter().map(|&w| w as u64).sum::<u64>() as Value
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CompileError {
    #[error("coefficient arithmetic overflows while clearing denominators")]
    WeightOverflow,
    #[error("encoded alphabet bound {cap} exceeds the limit {MAX_CAP}")]
    CapTooLarge { cap: u64 },
    #[error("clause {clause}: inequality has {got} coefficients for alphabet bound {expected}")]
    ArityMismatch { clause: usize, expected: usize, got: usize },
    #[error("clause {clause} names label {label}, but only {labels} labels exist")]
    LabelRange { clause: usize, label: usize, labels: usize },
    #[error("no clause covers proportions {point}")]
    Uncovered { point: String },
    #[error("proportions {point} match both \"{first}\" and \"{second}\"")]
    Ambiguous { point: String, first: String, second: String },
}

fn checked_lcm(a: i64, b: i64) -> Option<i64> {
    let g = num::integer::gcd(a, b);
    (a / g).checked_mul(b)
}

/// Clears denominators and flips negative weights, producing the integer
/// comparison whose encoded mean decides the original inequality.
pub fn normalize_inequality(ineq: &RationalInequality) -> Result<IntegerComparison, CompileError> {
    let mut l = *ineq.threshold.denom();
    for c in &ineq.coefficients {
        l = checked_lcm(l, *c.denom()).ok_or(CompileError::WeightOverflow)?;
    }
    let mut weights = Vec::with_capacity(ineq.coefficients.len());
    let mut positive = Vec::with_capacity(ineq.coefficients.len());
    let mut flipped: i64 = 0;
    for c in &ineq.coefficients {
        let a = c.numer().checked_mul(l / c.denom()).ok_or(CompileError::WeightOverflow)?;
        let w = u32::try_from(a.unsigned_abs()).map_err(|_| CompileError::WeightOverflow)?;
        weights.push(w);
        positive.push(a >= 0);
        if a < 0 {
            flipped = flipped.checked_add(-a).ok_or(CompileError::WeightOverflow)?;
        }
    }
    let scaled = ineq
        .threshold
        .numer()
        .checked_mul(l / ineq.threshold.denom())
        .ok_or(CompileError::WeightOverflow)?;
    let threshold = scaled.checked_add(flipped).ok_or(CompileError::WeightOverflow)?;
    let cmp = IntegerComparison { weights, positive, threshold, strict: ineq.strict };
    let cap: u64 = cmp.weights.iter().map(|&w| w as u64).sum();
    if cap > MAX_CAP {
        return Err(CompileError::CapTooLarge { cap });
    }
    Ok(cmp)
}

/// Per-node encoding whose global mean equals the cleared left-hand side
/// (shifted by the flipped weights): matched positive values contribute
/// their weight, unmatched negative values contribute theirs.
pub fn encode_local(x: Value, cmp: &IntegerComparison) -> Value {
    let mut e: u64 = 0;
    for (idx, (&w, &pos)) in cmp.weights.iter().zip(&cmp.positive).enumerate() {
        let matched = x as usize == idx + 1;
        if matched == pos {
            e += w as u64;
        }
    }
    e as Value
}

/// Settles a comparison from an averaging instance's interval output.
/// Always conclusive: the threshold is an integer, and an open interval
/// between consecutive integers sits entirely on one side of it.
pub fn decide_comparison(cmp: &IntegerComparison, value: IntervalValue) -> bool {
    match value {
        IntervalValue::Singleton(v) => {
            if cmp.strict {
                (v as i64) < cmp.threshold
            } else {
                (v as i64) <= cmp.threshold
            }
        }
        IntervalValue::Open(v) => v as i64 + 1 <= cmp.threshold,
    }
}

/// One labeled region: the conjunction of its inequalities.
#[derive(Debug, Clone, PartialEq)]
pub struct Clause {
    pub label: usize,
    pub conjunction: Vec<RationalInequality>,
}

/// A labeled partition of proportion space. Inputs range over
/// `0..=alphabet_max`; proportions track values `1..=alphabet_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetSpec {
    pub alphabet_max: Value,
    pub labels: Vec<String>,
    pub clauses: Vec<Clause>,
}

impl LevelSetSpec {
    /// First clause matching the proportion vector, by direct rational
    /// evaluation.
    pub fn evaluate(&self, p: &[Rational64]) -> Option<usize> {
        self.clauses
            .iter()
            .find(|c| c.conjunction.iter().all(|ineq| ineq.holds(p)))
            .map(|c| c.label)
    }

    fn structural_check(&self) -> Result<(), CompileError> {
        let k = self.alphabet_max as usize;
        for (ci, clause) in self.clauses.iter().enumerate() {
            if clause.label >= self.labels.len() {
                return Err(CompileError::LabelRange {
                    clause: ci,
                    label: clause.label,
                    labels: self.labels.len(),
                });
            }
            for ineq in &clause.conjunction {
                if ineq.coefficients.len() != k {
                    return Err(CompileError::ArityMismatch {
                        clause: ci,
                        expected: k,
                        got: ineq.coefficients.len(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Checks that every proportion point with denominator up to
    /// `max_denominator` is covered by exactly one label. Clauses with
    /// the same label may overlap freely.
    pub fn validate_partition(&self, max_denominator: u32) -> Result<(), CompileError> {
        self.structural_check()?;
        let k = self.alphabet_max as usize;
        let mut counts = vec![0i64; k];
        for n in 1..=max_denominator as i64 {
            self.walk_points(n, 0, n, &mut counts)?;
        }
        Ok(())
    }

    fn walk_points(
        &self,
        n: i64,
        value: usize,
        remaining: i64,
        counts: &mut Vec<i64>,
    ) -> Result<(), CompileError> {
        if value == counts.len() {
            let p: Vec<Rational64> =
                counts.iter().map(|&c| Rational64::new(c, n)).collect();
            return self.check_point(&p);
        }
        for c in 0..=remaining {
            counts[value] = c;
            self.walk_points(n, value + 1, remaining - c, counts)?;
            counts[value] = 0;
        }
        Ok(())
    }

    fn check_point(&self, p: &[Rational64]) -> Result<(), CompileError> {
        let mut seen: Option<usize> = None;
        for clause in &self.clauses {
            if clause.conjunction.iter().all(|ineq| ineq.holds(p)) {
                match seen {
                    None => seen = Some(clause.label),
                    Some(other) if other != clause.label => {
                        return Err(CompileError::Ambiguous {
                            point: render_point(p),
                            first: self.labels[other].clone(),
                            second: self.labels[clause.label].clone(),
                        });
                    }
                    _ => {}
                }
            }
        }
        match seen {
            Some(_) => Ok(()),
            None => Err(CompileError::Uncovered { point: render_point(p) }),
        }
    }
}

fn render_point(p: &[Rational64]) -> String {
    let parts: Vec<String> = p.iter().map(|r| r.to_string()).collect();
    format!("({})", parts.join(", "))
}

impl fmt::Display for LevelSetSpec {
    /// Renders in the text grammar [`parse_spec`] reads back.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "k {}", self.alphabet_max)?;
        for clause in &self.clauses {
            write!(f, "class {}:", self.labels[clause.label])?;
            for (i, ineq) in clause.conjunction.iter().enumerate() {
                write!(f, "{} {ineq}", if i == 0 { "" } else { " &" })?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Maps each node value to the encoded input of every comparison's
/// averaging instance.
pub struct CmpFanout {
    pub comparisons: Vec<IntegerComparison>,
}

impl Fanout for CmpFanout {
    fn instance_input(&self, idx: usize, x: Value) -> Value {
        encode_local(x, &self.comparisons[idx])
    }
}

#[derive(Debug, Clone, PartialEq)]
struct CompiledClause {
    label: usize,
    comparisons: Vec<usize>,
}

/// The runnable protocol for a [`LevelSetSpec`]: one averaging instance
/// per distinct comparison, in lock-step, plus a readout that names the
/// first fully-satisfied clause. Output is the label index, defined once
/// every instance has decided.
pub struct CompiledProtocol {
    pub alphabet_max: Value,
    pub labels: Vec<String>,
    clauses: Vec<CompiledClause>,
    product: Product<AveragingProtocol, CmpFanout>,
}

impl CompiledProtocol {
    pub fn comparisons(&self) -> &[IntegerComparison] {
        &self.product.fanout.comparisons
    }

    pub fn instance_count(&self) -> usize {
        self.product.parts.len()
    }

    /// Label implied by a full vector of decided intervals, if all are
    /// decided and some clause matches.
    pub fn readout(&self, intervals: &[Option<IntervalValue>]) -> Option<usize> {
        let cmps = self.comparisons();
        let mut truth = Vec::with_capacity(cmps.len());
        for (cmp, interval) in cmps.iter().zip(intervals) {
            truth.push(decide_comparison(cmp, (*interval)?));
        }
        self.clauses
            .iter()
            .find(|c| c.comparisons.iter().all(|&i| truth[i]))
            .map(|c| c.label)
    }
}

/// Builds the protocol for a spec. Call
/// [`LevelSetSpec::validate_partition`] first if the spec's partition
/// property is not otherwise known. `hop_cap` bounds the embedded
/// trackers; pass the node count when known.
pub fn compile(spec: &LevelSetSpec, hop_cap: u32) -> Result<CompiledProtocol, CompileError> {
    spec.structural_check()?;
    let mut index: HashMap<IntegerComparison, usize> = HashMap::new();
    let mut comparisons: Vec<IntegerComparison> = Vec::new();
    let mut clauses = Vec::with_capacity(spec.clauses.len());
    for clause in &spec.clauses {
        let mut ids = Vec::with_capacity(clause.conjunction.len());
        for ineq in &clause.conjunction {
            let cmp = normalize_inequality(ineq)?;
            let id = *index.entry(cmp.clone()).or_insert_with(|| {
                comparisons.push(cmp);
                comparisons.len() - 1
            });
            ids.push(id);
        }
        clauses.push(CompiledClause { label: clause.label, comparisons: ids });
    }
    let parts = comparisons
        .iter()
        .map(|c| AveragingProtocol::new(c.cap(), hop_cap))
        .collect();
    Ok(CompiledProtocol {
        alphabet_max: spec.alphabet_max,
        labels: spec.labels.clone(),
        clauses,
        product: Product { parts, fanout: CmpFanout { comparisons } },
    })
}

impl Protocol for CompiledProtocol {
    type Memory = Vec<Option<AvgCore>>;
    type Output = usize;
    type Message = Vec<Option<AvgWire>>;

    fn transition(
        &self,
        ctx: &TransitionCtx<'_, Self>,
    ) -> Result<NodeUpdate<Self>, ProtocolViolation> {
        if ctx.memory.is_none() && ctx.input > self.alphabet_max {
            return Err(ProtocolViolation(format!(
                "input {} exceeds the alphabet bound {}",
                ctx.input, self.alphabet_max
            )));
        }
        // The instances never read their previous output, so the product
        // context can omit it.
        let sub_ctx = TransitionCtx::<Product<AveragingProtocol, CmpFanout>> {
            round: ctx.round,
            degree: ctx.degree,
            input: ctx.input,
            memory: ctx.memory,
            output: None,
            inbox: ctx.inbox,
        };
        let update = self.product.transition(&sub_ctx)?;
        let output = update.output.as_ref().and_then(|ivs| self.readout(ivs));
        Ok(NodeUpdate { memory: update.memory, output, outbox: update.outbox })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run, RunConfig};
    use crate::graph::PortLabeledGraph;

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    #[test]
    fn clearing_denominators_matches_hand_worked_forms() {
        // p1 <= 1/2 clears to weight 2, threshold 1.
        let cmp = normalize_inequality(&RationalInequality::le(vec![r(1, 1)], r(1, 2))).unwrap();
        assert_eq!(
            cmp,
            IntegerComparison { weights: vec![2], positive: vec![true], threshold: 1, strict: false }
        );
        assert_eq!(cmp.cap(), 2);

        // p1 >= 3/4, i.e. -p1 <= -3/4: weight 4 flipped, threshold -3 + 4.
        let cmp = normalize_inequality(&RationalInequality::ge(vec![r(1, 1)], r(3, 4))).unwrap();
        assert_eq!(
            cmp,
            IntegerComparison { weights: vec![4], positive: vec![false], threshold: 1, strict: false }
        );

        // p2 - p1 <= 0: unit weights, one flipped, threshold 0 + 1.
        let cmp =
            normalize_inequality(&RationalInequality::le(vec![r(-1, 1), r(1, 1)], r(0, 1)))
                .unwrap();
        assert_eq!(
            cmp,
            IntegerComparison {
                weights: vec![1, 1],
                positive: vec![false, true],
                threshold: 1,
                strict: false
            }
        );
    }

    #[test]
    fn local_encodings_mirror_the_weights() {
        let majority =
            normalize_inequality(&RationalInequality::le(vec![r(1, 1)], r(1, 2))).unwrap();
        assert_eq!(encode_local(0, &majority), 0);
        assert_eq!(encode_local(1, &majority), 2);

        let supermajority =
            normalize_inequality(&RationalInequality::ge(vec![r(1, 1)], r(3, 4))).unwrap();
        assert_eq!(encode_local(0, &supermajority), 4);
        assert_eq!(encode_local(1, &supermajority), 0);

        let balance =
            normalize_inequality(&RationalInequality::le(vec![r(-1, 1), r(1, 1)], r(0, 1)))
                .unwrap();
        assert_eq!(encode_local(0, &balance), 1);
        assert_eq!(encode_local(1, &balance), 0);
        assert_eq!(encode_local(2, &balance), 2);
    }

    #[test]
    fn interval_outputs_always_settle_a_comparison() {
        let cmp = IntegerComparison {
            weights: vec![2],
            positive: vec![true],
            threshold: 1,
            strict: false,
        };
        assert!(decide_comparison(&cmp, IntervalValue::Singleton(1)));
        assert!(!decide_comparison(&cmp, IntervalValue::Singleton(2)));
        assert!(decide_comparison(&cmp, IntervalValue::Open(0)));
        assert!(!decide_comparison(&cmp, IntervalValue::Open(1)));
        let strict = IntegerComparison { strict: true, ..cmp };
        assert!(!decide_comparison(&strict, IntervalValue::Singleton(1)));
        assert!(decide_comparison(&strict, IntervalValue::Singleton(0)));
        assert!(decide_comparison(&strict, IntervalValue::Open(0)));
    }

    #[test]
    fn identical_comparisons_share_one_instance() {
        let spec = demos::i_vs_iprime(1, 2, 2);
        // The tie clause reuses the "- p1 + p2 <= 0"-shaped comparisons;
        // four distinct comparisons serve five inequality slots.
        let compiled = compile(&spec, 8).unwrap();
        assert_eq!(compiled.instance_count(), 4);
    }

    #[test]
    fn compiled_majority_matches_direct_evaluation() {
        let spec = demos::majority();
        let graph = PortLabeledGraph::ring(5).unwrap();
        for (inputs, expected) in [
            (vec![1, 1, 0, 0, 0], "le_half"),
            (vec![1, 1, 1, 0, 0], "gt_half"),
            (vec![0, 0, 0, 0, 0], "le_half"),
            (vec![1, 1, 1, 1, 1], "gt_half"),
        ] {
            let compiled = compile(&spec, 5).unwrap();
            let res = run(&graph, &compiled, &inputs, None, &RunConfig::default()).unwrap();
            assert!(res.quiescent);
            for out in &res.outputs {
                assert_eq!(compiled.labels[out.unwrap()], expected, "inputs {inputs:?}");
            }
        }
    }

    #[test]
    fn boundary_proportion_is_decided_by_a_singleton() {
        // p1 = 1/2 exactly: the encoded mean equals the threshold, and
        // only the non-strict side accepts it.
        let compiled = compile(&demos::majority(), 4).unwrap();
        let graph = PortLabeledGraph::path(4).unwrap();
        let res = run(&graph, &compiled, &[1, 0, 1, 0], None, &RunConfig::default()).unwrap();
        assert!(res.quiescent);
        for out in &res.outputs {
            assert_eq!(compiled.labels[out.unwrap()], "le_half");
        }
    }

    #[test]
    fn uncovered_inputs_leave_the_output_empty() {
        let spec = LevelSetSpec {
            alphabet_max: 1,
            labels: vec!["low".into()],
            clauses: vec![Clause {
                label: 0,
                conjunction: vec![RationalInequality::le(vec![r(1, 1)], r(1, 4))],
            }],
        };
        assert!(matches!(
            spec.validate_partition(4),
            Err(CompileError::Uncovered { .. })
        ));
        let compiled = compile(&spec, 4).unwrap();
        let graph = PortLabeledGraph::complete(2).unwrap();
        let res = run(&graph, &compiled, &[1, 0], None, &RunConfig::default()).unwrap();
        assert!(res.quiescent);
        assert_eq!(res.outputs, vec![None, None]);
    }

    #[test]
    fn overlapping_labels_fail_validation() {
        let spec = LevelSetSpec {
            alphabet_max: 1,
            labels: vec!["a".into(), "b".into()],
            clauses: vec![
                Clause {
                    label: 0,
                    conjunction: vec![RationalInequality::le(vec![r(1, 1)], r(1, 2))],
                },
                Clause {
                    label: 1,
                    conjunction: vec![RationalInequality::ge(vec![r(1, 1)], r(1, 2))],
                },
            ],
        };
        let err = spec.validate_partition(4).unwrap_err();
        assert!(matches!(err, CompileError::Ambiguous { .. }), "{err}");
    }

    #[test]
    fn empty_conjunctions_decide_immediately() {
        let spec = parse_spec("k 1\nclass anything:\n").unwrap();
        spec.validate_partition(6).unwrap();
        let compiled = compile(&spec, 3).unwrap();
        assert_eq!(compiled.instance_count(), 0);
        let graph = PortLabeledGraph::ring(3).unwrap();
        let res = run(&graph, &compiled, &[1, 0, 1], None, &RunConfig::default()).unwrap();
        assert!(res.quiescent);
        assert_eq!(res.outputs, vec![Some(0); 3]);
    }

    #[test]
    fn out_of_alphabet_inputs_fault() {
        let compiled = compile(&demos::majority(), 3).unwrap();
        let graph = PortLabeledGraph::ring(3).unwrap();
        let err = run(&graph, &compiled, &[2, 0, 0], None, &RunConfig::default()).unwrap_err();
        assert!(matches!(err, crate::engine::EngineError::Protocol { node: 0, .. }));
    }
}
