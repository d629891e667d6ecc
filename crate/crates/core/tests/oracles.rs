//! Library results checked against independent brute-force computations.

mod common;

use common::*;
use guided_proto::evaluation::class_means;
use guided_proto::inference::{decide, uniform_metric};
use guided_proto::model::{posterior, soft_label_targets};
use guided_proto::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn cost_matrix_matches_bfs() {
    let mut r = rng(11);
    for _ in 0..50 {
        let n = r.random_range(2..30);
        let tax = random_tree(n, true, &mut r);
        let all = cost_matrix(&tax, NodeSet::All).unwrap();
        let oracle = bfs_distances(&tax);
        for (i, row) in oracle.iter().enumerate() {
            for (j, &d) in row.iter().enumerate() {
                assert!((all.cost(i, j) - d).abs() <= 1e-12 * d.max(1.0));
            }
        }
        let leaves = tax.leaves();
        if leaves.len() >= 2 {
            let lm = cost_matrix(&tax, NodeSet::Leaves).unwrap();
            for (a, &i) in leaves.iter().enumerate() {
                for (b, &j) in leaves.iter().enumerate() {
                    assert!((lm.cost(a, b) - oracle[i][j]).abs() <= 1e-12 * oracle[i][j].max(1.0));
                }
            }
        }
    }
}

#[test]
fn toy_tree_costs() {
    let tax = parse_taxonomy(TOY, TaxonomyFormat::EdgeList).unwrap();
    let leaves = cost_matrix(&tax, NodeSet::Leaves).unwrap();
    assert_eq!(leaves.len(), 3);
    let mut values: Vec<f64> = leaves.costs().as_slice().to_vec();
    values.sort_by(f64::total_cmp);
    values.dedup();
    assert_eq!(values, vec![0.0, 2.0, 4.0]);
    assert_eq!(cost_matrix(&tax, NodeSet::All).unwrap().len(), 6);
}

#[test]
fn distortion_matches_double_loop() {
    let mut r = rng(12);
    for _ in 0..30 {
        let k = r.random_range(2..9);
        let metric = random_tree_metric(k, &mut r);
        let pi = random_prototypes(&metric, 3, &mut r);
        let spec = DistanceSpec::huber(0.3).unwrap();
        let mut total = 0.0;
        for a in 0..k {
            for b in 0..k {
                if a != b {
                    let d = distance(&spec, pi.coords().row(a), pi.coords().row(b)).unwrap();
                    total += (d - metric.cost(a, b)).abs() / metric.cost(a, b);
                }
            }
        }
        let oracle = total / (k * (k - 1)) as f64;
        assert!((distortion(&pi, &metric, &spec).unwrap() - oracle).abs() < 1e-12);
    }
}

#[test]
fn ratio_multiset_112_by_grid() {
    let ratios = [1.0, 1.0, 2.0];
    let best = (1..=400_000)
        .map(|i| i as f64 * 1e-5)
        .map(|s| (l1_objective(&ratios, s), s))
        .fold((f64::INFINITY, 0.0), |a, b| if b.0 < a.0 { b } else { a });
    let solved = guided_proto::distortion::L1Scale::solve(&ratios).unwrap();
    assert_eq!(solved.scale, 1.0);
    // f is flat on [1/2, 1]; s* = 1 only needs to attain the grid minimum
    assert!(l1_objective(&ratios, solved.scale) <= best.0 + 1e-12);
    assert!((l1_objective(&ratios, 1.0) - 1.0).abs() < 1e-15);
}

#[test]
fn huber_example() {
    let spec = DistanceSpec::huber(0.1).unwrap();
    let d = distance(&spec, &[0.0, 0.0], &[0.6, 0.8]).unwrap();
    assert!((d - 0.1 * (101f64.sqrt() - 1.0)).abs() < 1e-12);
    assert!((d - 0.904987).abs() < 1e-6);
}

#[test]
fn posterior_two_classes() {
    let d = uniform_metric(vec!["a".into(), "b".into()]).unwrap();
    let pi = PrototypeSet::for_metric(&d, Matrix::from_rows(&[vec![0.0], vec![3f64.ln()]]).unwrap()).unwrap();
    let p = posterior(&[0.0], &pi, &DistanceSpec::euclidean()).unwrap();
    assert!((p[0] - 0.75).abs() < 1e-15 && (p[1] - 0.25).abs() < 1e-15);
}

#[test]
fn soft_labels_on_chain() {
    let rows = vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0], vec![2.0, 1.0, 0.0]];
    let d = FiniteMetric::new(vec!["a".into(), "b".into(), "c".into()], &rows).unwrap();
    let t = soft_label_targets(&d, 0, 1.0);
    let z = 1.0 + (-1f64).exp() + (-2f64).exp();
    for (i, want) in [1.0, (-1f64).exp(), (-2f64).exp()].iter().enumerate() {
        assert!((t[i] - want / z).abs() < 1e-15);
    }
}

#[test]
fn max_prob_is_posterior_argmax_and_scale_invariant() {
    let mut r = rng(13);
    let metric = random_tree_metric(7, &mut r);
    let pi = random_prototypes(&metric, 4, &mut r);
    let index = build_index(&pi).unwrap();
    for i in 0..500 {
        let spec = [
            DistanceSpec::euclidean(),
            DistanceSpec::squared_euclidean(),
            DistanceSpec::huber(0.2).unwrap(),
        ][i % 3];
        let e: Vec<f64> = (0..4).map(|_| r.random_range(-2.0..2.0)).collect();
        let pred = predict_max_prob(&e, &index, &pi, &spec).unwrap();
        let p = posterior(&e, &pi, &spec).unwrap();
        let best = (0..p.len()).fold(0, |b, k| if p[k] > p[b] { k } else { b });
        assert_eq!(pred.row, best);
        let c = r.random_range(0.1..10.0);
        let scaled = pi.scaled(c);
        let es: Vec<f64> = e.iter().map(|x| x * c).collect();
        let again = predict_max_prob(&es, &build_index(&scaled).unwrap(), &scaled, &DistanceSpec::euclidean()).unwrap();
        assert_eq!(again.row, pred.row);
    }
}

#[test]
fn exact_hit_and_equidistant_pair() {
    let d = uniform_metric(vec!["a".into(), "b".into(), "c".into()]).unwrap();
    let pi = PrototypeSet::for_metric(
        &d,
        Matrix::from_rows(&[vec![-1.0, 0.0], vec![1.0, 0.0], vec![0.0, 5.0]]).unwrap(),
    )
    .unwrap();
    let index = build_index(&pi).unwrap();
    let spec = DistanceSpec::euclidean();
    assert_eq!(predict_max_prob(&[0.0, 5.0], &index, &pi, &spec).unwrap().row, 2);
    assert_eq!(predict_max_prob(&[0.0, 0.0], &index, &pi, &spec).unwrap().row, 0);
}

#[test]
fn expected_costs_match_double_loop() {
    let mut r = rng(14);
    let tax = random_tree(12, true, &mut r);
    let all = cost_matrix(&tax, NodeSet::All).unwrap();
    let table = CostTable::new(&all, true);
    let leaves = all.leaf_rows();
    for _ in 0..50 {
        let raw: Vec<f64> = (0..leaves.len()).map(|_| r.random_range(0.0..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let ec = expected_costs(&p, &table).unwrap();
        let mut brute_best = 0;
        for k in 0..all.len() {
            let mut s = 0.0;
            for (j, &l) in leaves.iter().enumerate() {
                s += p[j] * all.cost(k, l);
            }
            assert!((ec[k] - s).abs() < 1e-12);
            if s < ec[brute_best] - 1e-12 {
                brute_best = k;
            }
        }
        let pred = decide(p.clone(), Scheme::AnyNode, &table).unwrap();
        assert!((ec[pred.row] - ec[brute_best]).abs() < 1e-12);
        // leaf-only scheme: argmin over leaves
        let leaf_metric = all.restrict(&leaves);
        let leaf_pred = decide(p.clone(), Scheme::MinExpectedCost, &CostTable::new(&leaf_metric, false)).unwrap();
        let leaf_best = (0..leaves.len()).map(|j| ec[leaves[j]]).fold(f64::INFINITY, f64::min);
        assert!((ec[leaves[leaf_pred.row]] - leaf_best).abs() < 1e-12);
    }
    // one-hot posterior picks its support
    let mut onehot = vec![0.0; leaves.len()];
    onehot[2] = 1.0;
    let pred = decide(onehot, Scheme::AnyNode, &table).unwrap();
    assert_eq!(pred.row, leaves[2]);
}

#[test]
fn any_node_with_prototypes() {
    let tax = parse_taxonomy(TOY, TaxonomyFormat::EdgeList).unwrap();
    let all = cost_matrix(&tax, NodeSet::All).unwrap();
    let leaves = cost_matrix(&tax, NodeSet::Leaves).unwrap();
    let pi = PrototypeSet::for_metric(
        &leaves,
        Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 50.0]]).unwrap(),
    )
    .unwrap();
    let spec = DistanceSpec::squared_euclidean();
    let on_a1 = predict_any_node(&[0.0, 0.0], &pi, &spec, &all, &tax).unwrap();
    assert_eq!(tax.name(on_a1.node_id), "a1");
    assert!(predict_any_node(&[0.0, 0.0], &pi, &spec, &leaves, &tax).is_err());
}

#[test]
fn evaluate_matches_direct_sum() {
    let mut r = rng(15);
    let tax = parse_taxonomy(BINARY8, TaxonomyFormat::EdgeList).unwrap();
    let metric = cost_matrix(&tax, NodeSet::Leaves).unwrap();
    for _ in 0..20 {
        let n = r.random_range(1..200);
        let preds: Vec<usize> = (0..n).map(|_| r.random_range(0..8)).collect();
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..8)).collect();
        let rep = evaluate(&preds, &labels, &metric, None).unwrap();
        let ac: f64 = preds.iter().zip(&labels).map(|(&y, &z)| metric.cost(y, z)).sum::<f64>() / n as f64;
        let er = preds.iter().zip(&labels).filter(|(y, z)| y != z).count() as f64 / n as f64;
        assert!((rep.ac - ac).abs() < 1e-12);
        assert_eq!(rep.er, er);
        assert!((rep.ac_from_confusion(&metric) - rep.ac).abs() < 1e-12);
        assert!(rep.ac <= rep.er * metric.max_cost() + 1e-12);
        assert!(rep.ac >= rep.er * metric.min_off_diagonal() - 1e-12);
        assert_eq!(rep.ac == 0.0, rep.er == 0.0);
    }
}

#[test]
fn compare_matches_recount() {
    let mut r = rng(16);
    let metric = cost_matrix(
        &parse_taxonomy(BINARY8, TaxonomyFormat::EdgeList).unwrap(),
        NodeSet::Leaves,
    )
    .unwrap();
    let labels: Vec<usize> = (0..300).map(|_| r.random_range(0..8)).collect();
    let pa: Vec<usize> = (0..300).map(|_| r.random_range(0..8)).collect();
    let pb: Vec<usize> = (0..300).map(|_| r.random_range(0..8)).collect();
    let a = evaluate(&pa, &labels, &metric, None).unwrap();
    let b = evaluate(&pb, &labels, &metric, None).unwrap();
    let deltas = compare(&a, &b).unwrap();
    assert_eq!(deltas.len(), 28);
    let count = |p: &[usize], k: usize, l: usize| {
        p.iter()
            .zip(&labels)
            .filter(|&(&y, &z)| (y == k && z == l) || (y == l && z == k))
            .count() as u64
    };
    for d in &deltas {
        assert_eq!(d.count_a, count(&pa, d.k, d.l));
        assert_eq!(d.count_b, count(&pb, d.k, d.l));
        assert_eq!(d.cost, metric.cost(d.k, d.l));
        if d.count_a > 0 {
            let want = (d.count_b as f64 - d.count_a as f64) / d.count_a as f64;
            assert!((d.relative_change.unwrap() - want).abs() < 1e-15);
        }
    }
    let keys: Vec<f64> = deltas
        .iter()
        .map(|d| d.relative_change.unwrap_or(f64::INFINITY))
        .collect();
    assert!(keys.windows(2).all(|w| w[0] <= w[1]));
    let other = uniform_metric((0..8).map(|i| format!("x{i}")).collect()).unwrap();
    let c = evaluate(&pa, &labels, &other, None).unwrap();
    assert!(compare(&a, &c).is_err());
}

#[test]
fn split_partitions_exactly() {
    let mut r = rng(17);
    for _ in 0..20 {
        let n = r.random_range(2..100);
        let k = r.random_range(1..6);
        let features = gaussian_matrix(n, 2, &mut r);
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let data = Dataset::new(features, labels, (0..k).map(|i| format!("c{i}")).collect()).unwrap();
        let fraction = r.random_range(0.1..0.9);
        let Ok(s) = split(&data, fraction, &mut r) else {
            continue;
        };
        let mut all: Vec<usize> = s.train_indices.iter().chain(&s.test_indices).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..n).collect::<Vec<_>>());
        assert!(s.train_indices.iter().all(|i| !s.test_indices.contains(i)));
        assert_eq!(s.train.len() + s.test.len(), n);
    }
}

#[test]
fn synthetic_subtrees_are_closer() {
    let tax = parse_taxonomy(BINARY8, TaxonomyFormat::EdgeList).unwrap();
    let metric = cost_matrix(&tax, NodeSet::Leaves).unwrap();
    let (mut intra, mut inter) = (Vec::new(), Vec::new());
    for seed in 0..20 {
        let params = SynthParams {
            per_class: 50,
            dims: 8,
            ..SynthParams::default()
        };
        let data = gen_hierarchical_gaussians(&tax, &params, &mut rng(seed)).unwrap();
        let means = class_means(data.features(), data.labels(), 8).unwrap();
        for a in 0..8 {
            for b in a + 1..8 {
                let d = guided_proto::linalg::sq_dist(means.row(a), means.row(b)).sqrt();
                // leaves under the same depth-1 node are at cost <= 4
                if metric.cost(a, b) <= 4.0 {
                    intra.push(d);
                } else {
                    inter.push(d);
                }
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&intra) < mean(&inter));
}

#[test]
fn fitted_chain_and_one_dimensional_star() {
    let rows = vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0], vec![2.0, 1.0, 0.0]];
    let chain = FiniteMetric::new(vec!["a".into(), "b".into(), "c".into()], &rows).unwrap();
    let spec = DistanceSpec::euclidean();
    let mut pi = random_prototypes(&chain, 2, &mut rng(18));
    guided_proto::distortion::fit_prototypes(&mut pi, &chain, &spec, Regularizer::Disto, 20_000, 0.0, &mut rng(0))
        .unwrap();
    assert!(scale_free_distortion(&pi, &chain, &spec).unwrap() < 1e-4);
    // the exact line embedding itself has zero scale-free distortion
    let line =
        PrototypeSet::for_metric(&chain, Matrix::from_rows(&[vec![0.0], vec![3.0], vec![6.0]]).unwrap()).unwrap();
    assert!(scale_free_distortion(&line, &chain, &spec).unwrap() < 1e-15);

    // four leaves at mutual distance 2 cannot sit on a line: grid over 1-D layouts
    let star = FiniteMetric::new(
        (0..4).map(|i| i.to_string()).collect(),
        &(0..4)
            .map(|i| (0..4).map(|j| if i == j { 0.0 } else { 2.0 }).collect())
            .collect::<Vec<_>>(),
    )
    .unwrap();
    let mut best = f64::INFINITY;
    let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.25).collect();
    for &b in &grid {
        for &c in &grid {
            for &d in &grid {
                let coords = Matrix::from_rows(&[vec![0.0], vec![b], vec![c], vec![d]]).unwrap();
                let p = PrototypeSet::for_metric(&star, coords).unwrap();
                if let Ok(v) = scale_free_distortion(&p, &star, &spec) {
                    best = best.min(v);
                }
            }
        }
    }
    assert!(best > 0.1);
    let mut fitted = random_prototypes(&star, 1, &mut rng(19));
    guided_proto::distortion::fit_prototypes(&mut fitted, &star, &spec, Regularizer::Disto, 5_000, 1e-10, &mut rng(0))
        .unwrap();
    assert!(scale_free_distortion(&fitted, &star, &spec).unwrap() > 0.1);
}
