mod common;

use common::*;
use label_audit::confidence::*;
use label_audit::dataset::AuxiliarySet;
use label_audit::gradient::{empirical_g, theory_kernel_values};
use label_audit::similarity::*;
use label_audit::{Dataset, Similarity};
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;

fn rec(label: usize, probs: &[f64]) -> ProbRecord {
    ProbRecord::new(0, label, probs.to_vec()).unwrap()
}

#[test]
fn confidence_hand_examples() {
    let p = [0.7, 0.2, 0.1];
    assert!((self_confidence(&rec(0, &p)) - 0.7).abs() <= 1e-9);
    assert!((self_confidence(&rec(2, &[0.25; 4])) - 0.25).abs() <= 1e-9);
    assert!((normalized_margin(&rec(0, &p)).unwrap() - 0.5).abs() <= 1e-9);
    assert!((normalized_margin(&rec(0, &[0.2, 0.7, 0.1])).unwrap() + 0.5).abs() <= 1e-9);
    assert!((normalized_margin(&rec(1, &[0.0, 1.0, 0.0])).unwrap() - 1.0).abs() <= 1e-9);

    let entropy = -(0.7f64 * 0.7f64.ln() + 0.2 * 0.2f64.ln() + 0.1 * 0.1f64.ln()) / 3f64.ln();
    assert!((entropy - 0.72985).abs() < 1e-5);
    let ce = confidence_weighted_entropy(&rec(0, &p)).unwrap();
    assert!((ce - 0.7 / entropy).abs() <= 1e-9);
    assert!((ce - 0.9591).abs() < 1e-4);
    assert!((confidence_weighted_entropy(&rec(1, &[0.2; 5])).unwrap() - 0.2).abs() <= 1e-9);
    assert_eq!(confidence_weighted_entropy(&rec(0, &[1.0, 0.0])).unwrap(), MAX_SCORE);
    assert!(normalized_margin(&rec(0, &[1.0])).is_err());
}

#[test]
fn kernel_ratio_is_exactly_n_minus_one() {
    for n in [2usize, 3, 8, 100] {
        for alpha in [0.5, 0.9, 0.99] {
            let kv = theory_kernel_values(alpha, n).unwrap();
            assert!(
                (kv.ratio - (n as f64 - 1.0)).abs() <= 1e-12 * n as f64,
                "N={n} alpha={alpha}"
            );
        }
    }
}

/// The kernel expanded term by term: the observed-class terms, the other
/// observed-class term, and the sum over the remaining classes.
fn g_oracle(a: &ProbRecord, b: &ProbRecord) -> f64 {
    let (ka, kb) = (a.label, b.label);
    let rest = |skip: &[usize]| -> f64 {
        (0..a.probs.len())
            .filter(|c| !skip.contains(c))
            .map(|c| a.probs[c] * b.probs[c])
            .sum()
    };
    if ka == kb {
        (1.0 - a.probs[ka]) * (1.0 - b.probs[ka]) + rest(&[ka])
    } else {
        -(1.0 - a.probs[ka]) * b.probs[ka] - a.probs[kb] * (1.0 - b.probs[kb]) + rest(&[ka, kb])
    }
}

fn random_probs(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

#[test]
fn empirical_kernel_matches_term_by_term_expansion() {
    let mut rng = rng(11);
    for _ in 0..500 {
        let n = rng.random_range(2..10);
        let a = rec(rng.random_range(0..n), &random_probs(&mut rng, n));
        let b = rec(rng.random_range(0..n), &random_probs(&mut rng, n));
        assert!((empirical_g(&a, &b).unwrap() - g_oracle(&a, &b)).abs() <= 1e-12);
    }
}

fn idealized(label: usize, n: usize, alpha: f64) -> ProbRecord {
    let eps = (1.0 - alpha) / (n as f64 - 1.0);
    let mut p = vec![eps; n];
    p[label] = alpha;
    ProbRecord::new(0, label, p).unwrap()
}

#[test]
fn idealized_records_reproduce_closed_forms() {
    for n in [2usize, 3, 8, 20] {
        for alpha in [0.6, 0.93, 0.99] {
            let kv = theory_kernel_values(alpha, n).unwrap();
            let same = empirical_g(&idealized(1, n, alpha), &idealized(1, n, alpha)).unwrap();
            let diff = empirical_g(&idealized(0, n, alpha), &idealized(1, n, alpha)).unwrap();
            assert!((same - kv.same).abs() <= 1e-12);
            assert!((diff - kv.different).abs() <= 1e-12);
            assert!((same.abs() / diff.abs() - (n as f64 - 1.0)).abs() <= 1e-9);
        }
    }
}

#[test]
fn idealized_ratio_check() {
    use label_audit::evaluation::theory_ratio_from_records;
    for n in [2usize, 8] {
        let records: Vec<_> = (0..200).map(|i| idealized(i % n, n, 0.9)).collect();
        let check = theory_ratio_from_records(&records, 2000, 3).unwrap();
        assert!((check.empirical_ratio - (n as f64 - 1.0)).abs() <= 1e-9);
        assert_eq!(check.analytic_ratio, n as f64 - 1.0);
    }
}

fn sim_oracle(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>, measure: Similarity) -> f64 {
    let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
    match measure {
        Similarity::Dot => dot,
        Similarity::Cosine => {
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            dot / (na * nb)
        }
    }
}

/// Full sort of every auxiliary point.
fn brute_force(q: ndarray::ArrayView1<f64>, aux: &Dataset, k: usize, measure: Similarity) -> Vec<(u64, f64)> {
    let mut all: Vec<(u64, f64)> = (0..aux.len())
        .map(|j| (aux.ids()[j], sim_oracle(q, aux.row(j), measure)))
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

fn aux_with_ids(
    rng: &mut rand_chacha::ChaCha8Rng,
    m: usize,
    dim: usize,
    classes: usize,
    quantize: bool,
) -> AuxiliarySet {
    let mut features = uniform_matrix(rng, m, dim, 1.0);
    if quantize {
        features.mapv_inplace(|v| (v * 2.0).round());
    }
    let labels = (0..m).map(|_| rng.random_range(0..classes)).collect();
    let ids = (0..m as u64).map(|i| 1000 + 7 * i).rev().collect();
    AuxiliarySet::trusted(Dataset::new(features, labels, None, classes, ids).unwrap()).unwrap()
}

#[test]
fn knn_matches_full_sort_oracle() {
    let mut rng = rng(12);
    for instance in 0..50 {
        let quantize = instance % 5 == 0;
        let aux = aux_with_ids(&mut rng, 150, 6, 4, quantize);
        let mut q = uniform_vector(&mut rng, 6, 1.0);
        if quantize {
            q.mapv_inplace(|v| (v * 2.0).round() + 0.5);
        }
        for measure in [Similarity::Cosine, Similarity::Dot] {
            let index = NeighborIndex::new(&aux, measure).unwrap();
            for k in [1, 5, 100] {
                let got = index.query(9, q.view(), k).unwrap();
                let want = brute_force(q.view(), aux.dataset(), k, measure);
                assert_eq!(got.neighbors.len(), k);
                for (n, (id, s)) in got.neighbors.iter().zip(&want) {
                    assert_eq!(n.id, *id, "instance {instance} k {k} {measure:?}");
                    assert!((n.similarity - s).abs() <= 1e-12);
                }
            }
        }
    }
}

#[test]
fn knn_with_k_equal_m_returns_everything() {
    let mut rng = rng(13);
    let aux = aux_with_ids(&mut rng, 30, 3, 2, false);
    let q = uniform_vector(&mut rng, 3, 1.0);
    let ns = knn(0, q.view(), &aux, 30, Similarity::Cosine).unwrap();
    let mut ids: Vec<u64> = ns.neighbors.iter().map(|n| n.id).collect();
    ids.sort_unstable();
    let mut all = aux.dataset().ids().to_vec();
    all.sort_unstable();
    assert_eq!(ids, all);
    let self_query = knn(0, aux.dataset().row(4), &aux, 1, Similarity::Cosine).unwrap();
    assert!((self_query.neighbors[0].similarity - 1.0).abs() <= 1e-12);
}

fn neighbors(labels: &[usize]) -> NeighborSet {
    NeighborSet {
        query_id: 0,
        neighbors: labels
            .iter()
            .enumerate()
            .map(|(i, &label)| Neighbor {
                id: i as u64,
                similarity: 1.0,
                label,
            })
            .collect(),
    }
}

#[test]
fn agreement_and_mode_examples() {
    let (a, b) = (0, 1);
    assert!((label_agreement_score(&neighbors(&[a, a, a, b, a]), a) - 0.8).abs() <= 1e-12);
    assert_eq!(label_agreement_score(&neighbors(&[b, b]), b), 1.0);
    assert_eq!(label_agreement_score(&neighbors(&[b, b]), a), 0.0);
    assert_eq!(mode_rectify(&neighbors(&[b; 5]), a, 0.8), b);
    assert_eq!(mode_rectify(&neighbors(&[b, b, b, b, a]), a, 0.8), a);
    assert_eq!(mode_rectify(&neighbors(&[b, b, b, a, a]), a, 0.8), a);
    assert_eq!(mode_rectify(&neighbors(&[2, 2, 1, 1]), 0, 0.4), 1);
}

fn scaled_rows(m: &Array2<f64>, row: usize, factor: f64) -> Array2<f64> {
    let mut out = m.clone();
    out.row_mut(row).mapv_inplace(|v| v * factor);
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn global_scaling_preserves_rankings(seed in 0u64..1000, c in 0.01f64..100.0) {
        let mut rng = rng(seed);
        let aux = aux_with_ids(&mut rng, 40, 4, 3, false);
        let d = {
            let f = uniform_matrix(&mut rng, 25, 4, 1.0);
            let labels = (0..25).map(|_| rng.random_range(0..3)).collect();
            Dataset::new(f, labels, None, 3, (0..25).collect()).unwrap()
        };
        let scaled_d = d.with_features(d.features() * c).unwrap();
        let scaled_aux = AuxiliarySet::trusted(aux.dataset().with_features(aux.dataset().features() * c).unwrap()).unwrap();
        for measure in [Similarity::Cosine, Similarity::Dot] {
            let before = detect(&d, &aux, 7, measure).unwrap();
            let after = detect(&scaled_d, &scaled_aux, 7, measure).unwrap();
            prop_assert_eq!(before.scores.ranking(), after.scores.ranking());
            for (x, y) in before.neighbors.iter().zip(&after.neighbors) {
                let xi: Vec<u64> = x.neighbors.iter().map(|n| n.id).collect();
                let yi: Vec<u64> = y.neighbors.iter().map(|n| n.id).collect();
                prop_assert_eq!(xi, yi);
            }
        }
    }

    #[test]
    fn per_point_scaling_only_moves_dot_neighbours(seed in 0u64..1000) {
        let mut rng = rng(seed);
        let aux = aux_with_ids(&mut rng, 40, 4, 3, false);
        let q = uniform_vector(&mut rng, 4, 1.0);
        let before_dot = knn(0, q.view(), &aux, 1, Similarity::Dot).unwrap();
        let before_cos = knn(0, q.view(), &aux, 5, Similarity::Cosine).unwrap();
        // Blow up the runner-up under dot; it must take first place.
        let dots: Vec<f64> = aux.dataset().features().rows().into_iter().map(|r| r.dot(&q)).collect();
        let target = (0..40)
            .filter(|&j| dots[j] > 0.0 && aux.dataset().ids()[j] != before_dot.neighbors[0].id)
            .max_by(|&a, &b| dots[a].total_cmp(&dots[b]));
        prop_assume!(target.is_some());
        let target = target.unwrap();
        let scaled = AuxiliarySet::trusted(
            aux.dataset().with_features(scaled_rows(aux.dataset().features(), target, 1e3)).unwrap(),
        ).unwrap();
        let after_dot = knn(0, q.view(), &scaled, 1, Similarity::Dot).unwrap();
        let after_cos = knn(0, q.view(), &scaled, 5, Similarity::Cosine).unwrap();
        prop_assert_eq!(after_dot.neighbors[0].id, aux.dataset().ids()[target]);
        let ids = |ns: &NeighborSet| ns.neighbors.iter().map(|n| n.id).collect::<Vec<_>>();
        prop_assert_eq!(ids(&before_cos), ids(&after_cos));
    }

    #[test]
    fn rank_suspicious_orders_by_score_then_id(scores in proptest::collection::vec(0u8..5, 1..60), shift in -10.0f64..10.0) {
        let entries: Vec<label_audit::ScoreEntry> = scores
            .iter()
            .enumerate()
            .map(|(i, &s)| label_audit::ScoreEntry { id: (i as u64 * 13) % 101, score: s as f64 / 4.0 })
            .collect();
        prop_assume!({
            let mut ids: Vec<u64> = entries.iter().map(|e| e.id).collect();
            ids.sort_unstable();
            ids.windows(2).all(|w| w[0] != w[1])
        });
        let order = rank_suspicious(&entries);
        let mut oracle: Vec<(f64, u64)> = entries.iter().map(|e| (e.score, e.id)).collect();
        oracle.sort_by(|a, b| a.partial_cmp(b).unwrap());
        prop_assert_eq!(&order, &oracle.iter().map(|p| p.1).collect::<Vec<_>>());
        let shifted: Vec<_> = entries.iter().map(|e| label_audit::ScoreEntry { id: e.id, score: e.score + shift }).collect();
        prop_assert_eq!(order, rank_suspicious(&shifted));
    }
}
