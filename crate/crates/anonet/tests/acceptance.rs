//! Acceptance battery: ten independent end-to-end criteria, each printing
//! one `criterion NN <name>: PASS` line (visible with `--nocapture`).
//! Every expected value comes from a centralized oracle or a hand-checked
//! constant, never from the code under test.

use num::rational::Rational64;
use num::{One, Signed, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use anonet::averaging::AveragingProtocol;
use anonet::compiler::{
    compile, demos, encode_local, normalize_inequality, quantize_continuous, CompiledProtocol,
    IntegerComparison, LevelSetSpec, RationalInequality,
};
use anonet::engine::run_trace;
use anonet::extrema::{mirror_value, pointer_chain, TrackerProtocol};
use anonet::frequency::{run_frequency, FrequencyProtocol};
use anonet::{
    check_equivariance, check_replication, oracle_average, oracle_evaluate, oracle_proportions,
    run, verify_averaging_run, InputSchedule, PortLabeledGraph, Protocol, RunConfig, Value,
};

fn pass(number: u32, name: &str, cases: usize) {
    println!("criterion {number:02} {name}: PASS ({cases} cases)");
}

/// Inner runs stay sequential; the batteries parallelize over cases.
fn seq() -> RunConfig {
    RunConfig { max_rounds: 100_000, capture_trace: false, parallel: false }
}

fn par_for_each<T: Sync>(items: &[T], f: impl Fn(&T) + Send + Sync) {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().for_each(f);
    }
    #[cfg(not(feature = "parallel"))]
    items.iter().for_each(f);
}

/// Every vector in `{0..=alphabet_max}^n`, odometer order.
fn all_inputs(n: usize, alphabet_max: Value) -> Vec<Vec<Value>> {
    let mut out = Vec::new();
    let mut x = vec![0; n];
    loop {
        out.push(x.clone());
        let mut pos = 0;
        loop {
            if pos == n {
                return out;
            }
            if x[pos] < alphabet_max {
                x[pos] += 1;
                break;
            }
            x[pos] = 0;
            pos += 1;
        }
    }
}

fn random_inputs(rng: &mut ChaCha8Rng, n: usize, alphabet_max: Value) -> Vec<Value> {
    (0..n).map(|_| rng.gen_range(0..=alphabet_max)).collect()
}

/// Random connected graph with as many extra edges as the size allows,
/// capped at `n`.
fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> PortLabeledGraph {
    if n == 1 {
        return PortLabeledGraph::singleton();
    }
    let available = n * (n - 1) / 2 - (n - 1);
    let extra = rng.gen_range(0..=available.min(n));
    PortLabeledGraph::random_connected(n, extra, rng.gen()).unwrap()
}

/// Graph for a case, varied by size so batteries cover several families.
fn graph_for(n: usize, flavor: usize) -> PortLabeledGraph {
    if n == 1 {
        return PortLabeledGraph::singleton();
    }
    if n == 2 {
        return PortLabeledGraph::ring(2).unwrap();
    }
    match flavor % 3 {
        0 => PortLabeledGraph::ring(n).unwrap(),
        1 => PortLabeledGraph::complete(n).unwrap(),
        _ => PortLabeledGraph::path(n).unwrap(),
    }
}

/// Shared battery for the two averaging criteria: exhaustive small cases
/// over three graph families plus sixty random larger ones.
fn averaging_battery() -> Vec<(PortLabeledGraph, Vec<Value>, Value)> {
    let mut cases = Vec::new();
    for n in 2..=5usize {
        let graphs = [
            PortLabeledGraph::complete(n).unwrap(),
            PortLabeledGraph::ring(n).unwrap(),
            PortLabeledGraph::path(n).unwrap(),
        ];
        for alphabet_max in 1..=3 {
            for x in all_inputs(n, alphabet_max) {
                for g in &graphs {
                    cases.push((g.clone(), x.clone(), alphabet_max));
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE01);
    for _ in 0..60 {
        let n = rng.gen_range(2..=25usize);
        let graph = random_graph(&mut rng, n);
        let alphabet_max = rng.gen_range(1..=9);
        let x = random_inputs(&mut rng, n, alphabet_max);
        cases.push((graph, x, alphabet_max));
    }
    cases
}

#[test]
fn criterion_01_averaging_reaches_the_exact_mean() {
    let cases = averaging_battery();
    par_for_each(&cases, |(graph, x, alphabet_max)| {
        let protocol = AveragingProtocol::new(*alphabet_max, graph.node_count() as u32);
        let result = run(graph, &protocol, x, None, &seq()).unwrap();
        assert!(result.quiescent, "no fixed point for {x:?}");
        let want = Some(oracle_average(x));
        for (i, out) in result.outputs.iter().enumerate() {
            assert_eq!(*out, want, "node {i} on inputs {x:?}");
        }
    });
    pass(1, "averaging_reaches_the_exact_mean", cases.len());
}

#[test]
fn criterion_02_averaging_conserves_and_tightens() {
    let cases = averaging_battery();
    par_for_each(&cases, |(graph, x, alphabet_max)| {
        let hop_cap = graph.node_count() as u32;
        let audit = verify_averaging_run(graph, x, *alphabet_max, hop_cap, 100_000).unwrap();
        assert!(audit.agree(), "inputs {x:?}: {:?}", audit.violations);
    });
    pass(2, "averaging_conserves_and_tightens", cases.len());
}

#[test]
fn criterion_03_extrema_track_scheduled_changes() {
    const H_MAX: Value = 64;
    let seeds: Vec<u64> = (0..50).collect();
    par_for_each(&seeds, |&seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(0xACCE03 ^ (seed << 8));
        let n = rng.gen_range(2..=20usize);
        let graph = random_graph(&mut rng, n);
        let x = random_inputs(&mut rng, n, H_MAX);
        let entries: Vec<(usize, usize, Value)> = (0..rng.gen_range(1..=8))
            .map(|_| (rng.gen_range(1..=30), rng.gen_range(0..n), rng.gen_range(0..=H_MAX)))
            .collect();
        let schedule = InputSchedule::new(entries.clone());
        let final_x: Vec<Value> =
            (0..n).map(|i| schedule.effective(i, usize::MAX, x[i])).collect();

        // Settled estimates equal the true maximum of the final inputs,
        // and every node's parent chain reaches a node holding it.
        let protocol = TrackerProtocol::max(n as u32);
        let cfg = RunConfig { capture_trace: true, ..seq() };
        let result = run(&graph, &protocol, &x, Some(&schedule), &cfg).unwrap();
        assert!(result.quiescent);
        let truth = *final_x.iter().max().unwrap();
        for out in &result.outputs {
            assert_eq!(*out, Some(truth));
        }
        let trace = result.trace.unwrap();
        let last = trace.last().unwrap();
        for start in 0..n {
            let chain = pointer_chain(&graph, last, |i| last.nodes[i].memory, start).unwrap();
            let root = *chain.last().unwrap();
            assert_eq!(final_x[root], truth, "chain from {start} ends off the maximum");
        }

        // Min-tracking x and max-tracking the mirrored inputs are the
        // same trajectory, estimate mirrored, parent and hop identical.
        let mirrored_x: Vec<Value> = x.iter().map(|&v| mirror_value(H_MAX, v)).collect();
        let mirrored_schedule = InputSchedule::new(
            entries.iter().map(|&(r, node, v)| (r, node, mirror_value(H_MAX, v))),
        );
        let rounds = 30 + 2 * n + 10;
        let min_trace = run_trace(
            &graph,
            &TrackerProtocol::min(n as u32),
            &x,
            Some(&schedule),
            rounds,
            false,
        )
        .unwrap();
        let max_trace = run_trace(
            &graph,
            &TrackerProtocol::max(n as u32),
            &mirrored_x,
            Some(&mirrored_schedule),
            rounds,
            false,
        )
        .unwrap();
        for (min_cfg, max_cfg) in min_trace.iter().zip(&max_trace) {
            for i in 0..n {
                match (min_cfg.nodes[i].memory, max_cfg.nodes[i].memory) {
                    (None, None) => {}
                    (Some(a), Some(b)) => {
                        assert_eq!(a.estimate, mirror_value(H_MAX, b.estimate));
                        assert_eq!(a.input, mirror_value(H_MAX, b.input));
                        assert_eq!(a.parent, b.parent);
                        assert_eq!(a.hop, b.hop);
                    }
                    _ => panic!("memory presence diverged"),
                }
            }
        }
    });
    pass(3, "extrema_track_scheduled_changes", seeds.len());
}

/// Five specs, each run exhaustively on small populations and on random
/// larger ones (boundary proportions forced in), against direct rational
/// evaluation at the true shares.
#[test]
fn criterion_04_compiled_specs_match_the_rational_oracle() {
    let specs: Vec<(LevelSetSpec, usize)> = vec![
        (demos::majority(), 6),
        (demos::weighted_majority(), 6),
        (demos::abstain_majority(), 6),
        (demos::second_most_popular(4), 6),
        (demos::i_vs_iprime(1, 2, 3), 6),
    ];
    let mut total = 0;
    for (spec_idx, (spec, exhaustive_n)) in specs.iter().enumerate() {
        let compiled = compile(spec, 32).unwrap();
        let mut cases: Vec<(PortLabeledGraph, Vec<Value>)> = Vec::new();
        for n in 1..=*exhaustive_n {
            for x in all_inputs(n, spec.alphabet_max) {
                cases.push((graph_for(n, n + spec_idx), x));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0xACCE04 + spec_idx as u64);
        for j in 0..100 {
            let mut n = rng.gen_range(2..=25usize);
            let mut x = random_inputs(&mut rng, n, spec.alphabet_max);
            if j % 4 == 0 {
                // Exact boundary shares: half the population at value 1.
                if n % 2 == 1 {
                    n += 1;
                }
                x = (0..n).map(|i| (i % 2) as Value).collect();
                x.shuffle(&mut rng);
            }
            cases.push((random_graph(&mut rng, n), x));
        }
        total += cases.len();
        par_for_each(&cases, |(graph, x)| {
            let expected = oracle_evaluate(spec, x).unwrap();
            let result = run(graph, &compiled, x, None, &seq()).unwrap();
            assert!(result.quiescent, "{} stuck on {x:?}", spec.labels[expected]);
            for out in &result.outputs {
                assert_eq!(
                    *out,
                    Some(expected),
                    "spec {spec_idx} on {x:?}: wanted {}",
                    spec.labels[expected]
                );
            }
        });
    }
    pass(4, "compiled_specs_match_the_rational_oracle", total);
}

/// Clearing denominators preserves meaning: for every inequality in the
/// battery and every input vector, the integer comparison over summed
/// local encodings decides exactly like the rational original, whether
/// evaluated directly or through the interval readout.
#[test]
fn criterion_05_cleared_thresholds_equal_rational_tests() {
    let r = Rational64::new;
    let mut battery: Vec<(RationalInequality, Value)> = Vec::new();
    for spec in [
        demos::majority(),
        demos::weighted_majority(),
        demos::abstain_majority(),
        demos::second_most_popular(3),
        demos::i_vs_iprime(1, 2, 3),
    ] {
        for clause in &spec.clauses {
            for ineq in &clause.conjunction {
                battery.push((ineq.clone(), spec.alphabet_max));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE05);
    for _ in 0..40 {
        let alphabet_max = rng.gen_range(1..=3u32);
        let coefficients: Vec<Rational64> = (0..alphabet_max)
            .map(|_| r(rng.gen_range(-3..=3), rng.gen_range(1..=4)))
            .collect();
        let threshold = r(rng.gen_range(-2..=2), rng.gen_range(1..=4));
        let ineq = if rng.gen() {
            RationalInequality::lt(coefficients, threshold)
        } else {
            RationalInequality::le(coefficients, threshold)
        };
        battery.push((ineq, alphabet_max));
    }

    let decide_integral = |cmp: &IntegerComparison, encodings: &[Value]| -> bool {
        let total: i64 = encodings.iter().map(|&e| e as i64).sum();
        let bound = cmp.threshold * encodings.len() as i64;
        if cmp.strict { total < bound } else { total <= bound }
    };

    let mut cases = 0;
    par_for_each_counted(&battery, &mut cases, |(ineq, alphabet_max)| {
        let cmp = normalize_inequality(ineq).unwrap();
        let mut checked = 0;
        for n in 1..=8 {
            for x in all_inputs(n, *alphabet_max) {
                let shares = oracle_proportions(&x, *alphabet_max).shares;
                let direct = ineq.holds(&shares);
                let encodings: Vec<Value> =
                    x.iter().map(|&xi| encode_local(xi, &cmp)).collect();
                assert_eq!(decide_integral(&cmp, &encodings), direct, "{ineq} on {x:?}");
                let readout =
                    anonet::compiler::decide_comparison(&cmp, oracle_average(&encodings));
                assert_eq!(readout, direct, "{ineq} interval readout on {x:?}");
                checked += 1;
            }
        }
        checked
    });
    pass(5, "cleared_thresholds_equal_rational_tests", cases);
}

/// `par_for_each` that also sums a per-item case count.
fn par_for_each_counted<T: Sync>(
    items: &[T],
    total: &mut usize,
    f: impl Fn(&T) -> usize + Send + Sync,
) {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        *total = items.par_iter().map(|t| f(t)).sum();
    }
    #[cfg(not(feature = "parallel"))]
    {
        *total = items.iter().map(|t| f(t)).sum();
    }
}

#[test]
fn criterion_06_frequency_reports_exact_shares() {
    let mut cases: Vec<Vec<Value>> = Vec::new();
    for n in 1..=10usize {
        cases.extend(all_inputs(n, 1));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE06);
    for _ in 0..50 {
        let n = rng.gen_range(11..=30usize);
        cases.push(random_inputs(&mut rng, n, 1));
    }
    cases.push(vec![1; 30]);
    cases.push(vec![0; 30]);
    par_for_each(&cases, |x| {
        let n = x.len();
        let ones = x.iter().filter(|&&v| v == 1).count();
        let graph = graph_for(n, ones);
        let protocol = FrequencyProtocol { m_max: n as Value, hop_cap: n as u32 };
        // Settling needs roughly n^2/2 blocks at worst (one instance turn
        // per block, transfers crossing the diameter hop by hop).
        let result = run_frequency(&graph, &protocol, x, 30 + 3 * n * n, false).unwrap();
        assert!(result.settled, "no per-block fixed point for {x:?}");
        let ones = x.iter().filter(|&&v| v == 1).count() as i64;
        let share = Rational64::new(ones, n as i64);
        // The reduced denominator is the least instance that can report
        // the share exactly; the readout must settle there.
        let expected = Some((*share.denom() as Value, share));
        for (i, out) in result.outputs.iter().enumerate() {
            assert_eq!(*out, expected, "node {i} on {x:?}");
        }
    });
    pass(6, "frequency_reports_exact_shares", cases.len());
}

fn equivariance_block<P: Protocol>(protocol: &P, alphabet_max: Value, seed: u64) -> usize {
    let graphs = [
        PortLabeledGraph::ring(6).unwrap(),
        PortLabeledGraph::path(5).unwrap(),
        PortLabeledGraph::complete(5).unwrap(),
        PortLabeledGraph::star(6).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = 0;
    for graph in &graphs {
        let n = graph.node_count();
        for _ in 0..3 {
            let inputs = random_inputs(&mut rng, n, alphabet_max);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            check_equivariance(graph, protocol, &inputs, &perm, 40).unwrap();
            checks += 1;
        }
    }
    checks
}

fn replication_block<P: Protocol>(protocol: &P, alphabet_max: Value, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = 0;
    for m in 2..=6usize {
        for k in 2..=3usize {
            let inputs = random_inputs(&mut rng, m, alphabet_max);
            check_replication(protocol, &inputs, k, 60).unwrap();
            checks += 1;
        }
    }
    checks
}

/// Relabeling invariance and ring-cover lockstep for three protocol
/// families: pure averaging, frequency measurement, and a compiled spec.
#[test]
fn criterion_07_trajectories_respect_symmetry() {
    let averaging = AveragingProtocol::new(5, 24);
    let frequency = FrequencyProtocol { m_max: 6, hop_cap: 24 };
    let majority = compile(&demos::majority(), 24).unwrap();
    let mut checks = 0;
    checks += equivariance_block(&averaging, 5, 0xACCE07);
    checks += equivariance_block(&frequency, 1, 0xACCE17);
    checks += equivariance_block(&majority, 1, 0xACCE27);
    checks += replication_block(&averaging, 5, 0xACCE37);
    checks += replication_block(&frequency, 1, 0xACCE47);
    checks += replication_block(&majority, 1, 0xACCE57);
    pass(7, "trajectories_respect_symmetry", checks);
}

/// Two populations with the same value proportions — one a shuffled
/// `k`-fold copy of the other, on unrelated graphs — land on the same
/// label of every compiled spec.
#[test]
fn criterion_08_outputs_depend_only_on_proportions() {
    let specs: Vec<CompiledProtocol> = vec![
        compile(&demos::majority(), 32).unwrap(),
        compile(&demos::abstain_majority(), 32).unwrap(),
        compile(&demos::i_vs_iprime(1, 2, 2), 32).unwrap(),
    ];
    let raw_specs =
        [demos::majority(), demos::abstain_majority(), demos::i_vs_iprime(1, 2, 2)];
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE08);
    let mut pairs = Vec::new();
    for j in 0..20 {
        let which = j % specs.len();
        let alphabet_max = raw_specs[which].alphabet_max;
        let n = rng.gen_range(2..=8usize);
        let k = rng.gen_range(2..=3usize);
        let x = random_inputs(&mut rng, n, alphabet_max);
        let mut big: Vec<Value> = x.iter().cycle().take(n * k).copied().collect();
        big.shuffle(&mut rng);
        let graph_small = random_graph(&mut rng, n);
        let graph_big = random_graph(&mut rng, n * k);
        pairs.push((which, x, big, graph_small, graph_big));
    }
    par_for_each(&pairs, |(which, x, big, graph_small, graph_big)| {
        let spec = &raw_specs[*which];
        assert_eq!(
            oracle_proportions(x, spec.alphabet_max).shares,
            oracle_proportions(big, spec.alphabet_max).shares
        );
        let small_run = run(graph_small, &specs[*which], x, None, &seq()).unwrap();
        let big_run = run(graph_big, &specs[*which], big, None, &seq()).unwrap();
        assert!(small_run.quiescent && big_run.quiescent);
        let expected = Some(oracle_evaluate(spec, x).unwrap());
        assert_eq!(small_run.outputs[0], expected);
        for out in small_run.outputs.iter().chain(&big_run.outputs) {
            assert_eq!(*out, expected, "{x:?} vs {big:?}");
        }
    });
    pass(8, "outputs_depend_only_on_proportions", pairs.len());
}

fn parse_label_rational(label: &str) -> Rational64 {
    match label.split_once('/') {
        Some((num, den)) => Rational64::new(num.parse().unwrap(), den.parse().unwrap()),
        None => Rational64::new(label.parse().unwrap(), 1),
    }
}

/// A quantized continuous function (here the share itself, grid 1/8,
/// precision 1/4) labels every point of the simplex within the promised
/// error budget, both by direct evaluation and through compiled runs.
#[test]
fn criterion_09_quantized_readout_stays_in_budget() {
    let epsilon = Rational64::new(1, 4);
    let spec = quantize_continuous(
        |p| p[0],
        1,
        (Rational64::zero(), Rational64::one()),
        epsilon,
        8,
    );
    // Rounding contributes epsilon/2 and the cell representative at most
    // half a grid cell for this 1-Lipschitz h; budget epsilon + 1/(2g).
    let budget = epsilon + Rational64::new(1, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE09);
    let mut cases = 0;
    for _ in 0..10_000 {
        let den = rng.gen_range(1..=64i64);
        let num = rng.gen_range(0..=den);
        let p = Rational64::new(num, den);
        let label_idx = spec.evaluate(&[p]).expect("partition covers the simplex");
        let labeled = parse_label_rational(&spec.labels[label_idx]);
        assert!(
            (labeled - p).abs() <= budget,
            "p = {p} labeled {labeled}, off by more than {budget}"
        );
        cases += 1;
    }
    let compiled = compile(&spec, 16).unwrap();
    let distributed: Vec<(usize, u64)> = vec![(3, 1), (5, 2), (8, 3), (10, 4)];
    par_for_each(&distributed, |&(n, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(0xACCE19 + seed);
        let graph = random_graph(&mut rng, n);
        let x = random_inputs(&mut rng, n, 1);
        let expected = oracle_evaluate(&spec, &x).unwrap();
        let result = run(&graph, &compiled, &x, None, &seq()).unwrap();
        assert!(result.quiescent);
        for out in &result.outputs {
            assert_eq!(*out, Some(expected));
        }
        let ones = x.iter().filter(|&&v| v == 1).count() as i64;
        let truth = Rational64::new(ones, n as i64);
        let labeled = parse_label_rational(&spec.labels[expected]);
        assert!((labeled - truth).abs() <= budget);
    });
    pass(9, "quantized_readout_stays_in_budget", cases + distributed.len());
}

/// Identical seeds replay identical trajectories — across repeat runs and
/// across the parallel/sequential stepping paths — down to the rendered
/// bytes of the final configuration.
#[test]
fn criterion_10_seeded_runs_replay_byte_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE10);
    let graph = PortLabeledGraph::random_connected(12, 9, rng.gen()).unwrap();
    let x = random_inputs(&mut rng, 12, 6);
    let schedule = InputSchedule::new([(4, 0, 6), (9, 7, 0), (11, 3, 2)]);
    let protocol = AveragingProtocol::new(6, 12);

    let replay = |parallel: bool| {
        run_trace(&graph, &protocol, &x, Some(&schedule), 60, parallel).unwrap()
    };
    let first = replay(true);
    let second = replay(true);
    let sequential = replay(false);
    assert_eq!(first, second);
    assert_eq!(first, sequential);
    assert_eq!(
        format!("{:?}", first.last().unwrap()),
        format!("{:?}", second.last().unwrap())
    );
    assert_eq!(
        format!("{:?}", first.last().unwrap()),
        format!("{:?}", sequential.last().unwrap())
    );

    let freq_protocol = FrequencyProtocol { m_max: 8, hop_cap: 8 };
    let ones: Vec<Value> = (0..8).map(|i| (i % 3 == 0) as Value).collect();
    let ring = PortLabeledGraph::ring(8).unwrap();
    let fa = run_frequency(&ring, &freq_protocol, &ones, 60, true).unwrap();
    let fb = run_frequency(&ring, &freq_protocol, &ones, 60, false).unwrap();
    assert_eq!(fa.settled, fb.settled);
    assert_eq!(fa.blocks, fb.blocks);
    assert_eq!(fa.rounds, fb.rounds);
    assert_eq!(fa.outputs, fb.outputs);

    let compiled = compile(&demos::majority(), 12).unwrap();
    let ca = run(&graph, &compiled, &ones_pad(&x), None, &RunConfig::default()).unwrap();
    let cb = run(&graph, &compiled, &ones_pad(&x), None, &seq()).unwrap();
    assert_eq!(ca.outputs, cb.outputs);
    assert_eq!(ca.rounds, cb.rounds);
    pass(10, "seeded_runs_replay_byte_identical", 3);
}

/// Squashes arbitrary values to indicators so compiled binary specs can
/// reuse the same seeded vector.
fn ones_pad(x: &[Value]) -> Vec<Value> {
    x.iter().map(|&v| (v % 2 == 0) as Value).collect()
}
