#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;

use qubolin::linearize::{extract_and_linearize, linearize, penalty_value};
use qubolin::mkp::{self, MkpInstance};
use qubolin::ordering::{
    extract_order_dense, extract_order_dense_with_pruning, extract_order_parallel,
    extract_order_sparse, score_pair, verify_order, OrderDag,
};
use qubolin::solver::{brute_force, simulated_anneal, AnnealSchedule, SampleSet};
use qubolin::{Assignment, QuboMatrix};

/// Integer-valued upper-triangular matrix with some zero entries.
fn int_qubo(max_n: usize) -> impl Strategy<Value = QuboMatrix> {
    (1..=max_n).prop_flat_map(|n| {
        prop::collection::vec(
            prop_oneof![1 => Just(0i32), 3 => -10i32..=10],
            n * (n + 1) / 2,
        )
        .prop_map(move |vals| {
            let mut it = vals.into_iter();
            let mut q = QuboMatrix::new(n);
            for i in 0..n {
                for j in i..n {
                    q.set(i, j, f64::from(it.next().unwrap())).unwrap();
                }
            }
            q
        })
    })
}

/// Real-valued matrix biased towards orderable structure.
fn real_qubo(max_n: usize) -> impl Strategy<Value = QuboMatrix> {
    (2..=max_n).prop_flat_map(|n| {
        (
            prop::collection::vec(-20.0f64..0.0, n),
            prop::collection::vec(-1.0f64..4.0, n * (n - 1) / 2),
        )
            .prop_map(move |(diag, off)| {
                let mut it = off.into_iter();
                let mut q = QuboMatrix::new(n);
                for i in 0..n {
                    q.set(i, i, diag[i]).unwrap();
                    for j in i + 1..n {
                        q.set(i, j, it.next().unwrap()).unwrap();
                    }
                }
                q
            })
    })
}

fn small_mkp() -> impl Strategy<Value = MkpInstance> {
    (1usize..=8, 1usize..=2).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(1u64..=30, n),
            prop::collection::vec(prop::collection::vec(1u64..=20, n), m),
            prop::collection::vec(1u64..=60, m),
        )
            .prop_map(|(v, w, c)| MkpInstance::new(v, w, c, None).unwrap())
    })
}

fn all_assignments(n: usize) -> impl Iterator<Item = Assignment> {
    (0..1u64 << n).map(move |mask| Assignment::from_mask(mask, n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn dense_order_is_certified_and_preserves_minimum(q in int_qubo(9)) {
        let g = extract_order_dense(&q);
        prop_assert!(g.is_acyclic());
        prop_assert!(verify_order(&q, &g).unwrap());
        let (lin, report) = linearize(&q, &g).unwrap();
        prop_assert_eq!(lin.od_count(), q.od_count() - report.removed_count());
        let before = brute_force(&q).unwrap();
        let after = brute_force(&lin).unwrap();
        prop_assert_eq!(before.min_energy, after.min_energy);
        for x in all_assignments(q.n()) {
            let (e, el) = (q.energy(&x).unwrap(), lin.energy(&x).unwrap());
            prop_assert!(el >= e);
            prop_assert_eq!(el - e, penalty_value(&q, &g, &x).unwrap());
        }
    }

    #[test]
    fn sparse_order_is_certified(q in int_qubo(10)) {
        let g = extract_order_sparse(&q);
        prop_assert!(g.is_acyclic());
        for &(i, j) in g.edges() {
            prop_assert!(score_pair(&q, i, j).unwrap() <= 0.0);
        }
    }

    #[test]
    fn extraction_variants_agree(q in real_qubo(14)) {
        let dense = extract_order_dense(&q);
        prop_assert_eq!(extract_order_dense_with_pruning(&q, false), dense.clone());
        prop_assert_eq!(extract_order_parallel(&q), dense.clone());
        for &(i, j) in dense.edges() {
            prop_assert!(score_pair(&q, i, j).unwrap() <= 0.0);
        }
    }

    #[test]
    fn fused_pass_equals_two_phase(q in prop_oneof![int_qubo(12), real_qubo(12)]) {
        let g = extract_order_dense(&q);
        let (lin, report) = linearize(&q, &g).unwrap();
        let (fused, fg, freport) = extract_and_linearize(&q);
        prop_assert_eq!(fg.edges(), g.edges());
        prop_assert_eq!(fused, lin);
        prop_assert_eq!(freport, report);
    }

    #[test]
    fn qubo_json_roundtrip(q in prop_oneof![int_qubo(8), real_qubo(8)]) {
        let text = q.to_json_string().unwrap();
        let back = QuboMatrix::from_json_str(&text).unwrap();
        prop_assert_eq!(&back, &q);
        prop_assert_eq!(back.to_json_string().unwrap(), text);
        let g = extract_order_dense(&q);
        prop_assert_eq!(OrderDag::from_json_str(&g.to_json_string().unwrap()).unwrap(), g);
    }

    #[test]
    fn energy_is_sum_of_flip_deltas(q in real_qubo(10), mask in any::<u64>()) {
        let n = q.n();
        let target = Assignment::from_mask(mask & ((1 << n) - 1), n);
        let mut x = Assignment::zeros(n);
        let mut e = 0.0;
        for i in 0..n {
            if target.get(i) {
                e += q.flip_delta(&x, i).unwrap();
                x.flip(i);
            }
        }
        prop_assert!((e - q.energy(&target).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn annealing_never_beats_exhaustive_search(q in int_qubo(10), seed in any::<u64>()) {
        let schedule = AnnealSchedule { sweeps: 30, beta_start: 0.05, beta_end: 3.0, restarts: 4, seed };
        let set = simulated_anneal(&q, &schedule).unwrap();
        let best = brute_force(&q).unwrap().min_energy;
        prop_assert_eq!(set.samples.len(), 4);
        for s in &set.samples {
            prop_assert!(s.energy >= best);
            prop_assert_eq!(s.energy, q.energy(&s.assignment).unwrap());
        }
        let reread = SampleSet::from_json_str(&set.to_json_string().unwrap()).unwrap();
        prop_assert_eq!(reread, set);
    }

    #[test]
    fn plain_encoding_energy_is_value_plus_penalty(inst in small_mkp(), mask in any::<u64>(), lambda in 0.5f64..4.0) {
        let enc = mkp::encode_qubo(&inst, lambda).unwrap();
        let n_total = enc.layout.n_total();
        let x = Assignment::from_bools((0..n_total).map(|b| mask >> (b % 64) & 1 == 1).collect());
        let sel = x.prefix(inst.n());
        let mut expected = -(inst.objective(&sel) as f64);
        for block in &enc.layout.slack_blocks {
            let load: u64 = (0..inst.n()).filter(|&i| sel.get(i)).map(|i| inst.weights()[block.constraint][i]).sum();
            let r = load as f64 - block.value(&x) as f64;
            expected += lambda * r * r;
        }
        prop_assert!((enc.qubo.energy(&x).unwrap() - expected).abs() < 1e-6 * expected.abs().max(1.0));
    }

    #[test]
    fn linearized_encoding_adds_dominance_penalty(inst in small_mkp(), mask in any::<u64>()) {
        let lambda = 2.0;
        let plain = mkp::encode_qubo(&inst, lambda).unwrap();
        let lin = mkp::encode_linearized(&inst, lambda).unwrap();
        let order = lin.order_used.as_ref().unwrap();
        let n_total = plain.layout.n_total();
        let x = Assignment::from_bools((0..n_total).map(|b| mask >> (b % 64) & 1 == 1).collect());
        let mut extra = 0.0;
        for &(i, j) in order.edges() {
            if x.get(i) && !x.get(j) {
                extra += 2.0 * lambda * inst.weights().iter().map(|row| (row[i] * row[j]) as f64).sum::<f64>();
            }
        }
        let diff = lin.qubo.energy(&x).unwrap() - plain.qubo.energy(&x).unwrap();
        prop_assert!((diff - extra).abs() < 1e-6 * extra.max(1.0));
        // the dominance order is acyclic and total over identical items
        prop_assert!(order.is_acyclic());
    }

    #[test]
    fn slack_block_covers_capacity(c in 1u64..=5000) {
        let block = mkp::slack_layout(c).unwrap();
        prop_assert_eq!(block.weights.iter().sum::<u64>(), c);
        for t in [0, c / 3, c / 2, c] {
            let bits = block.encode(t).unwrap();
            prop_assert_eq!(bits.iter().zip(&block.weights).filter(|(b, _)| **b).map(|(_, w)| w).sum::<u64>(), t);
        }
        prop_assert!(block.encode(c + 1).is_none());
    }

    #[test]
    fn dp_and_enumeration_agree(inst in small_mkp()) {
        let single = inst.first_constraint_only();
        prop_assert_eq!(mkp::dp_knapsack_oracle(&single).unwrap().score, mkp::mkp_exact_oracle(&single).unwrap().score);
        let exact = mkp::mkp_exact_oracle(&inst).unwrap();
        prop_assert!(inst.is_feasible(&exact.selection));
        prop_assert_eq!(inst.objective(&exact.selection), exact.score);
    }
}
