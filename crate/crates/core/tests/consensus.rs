use std::collections::{BTreeMap, HashMap};

use chemlinker::consensus::*;
use chemlinker::par::Exec;
use proptest::prelude::*;

mod common;

fn table(scores: Vec<Vec<Option<f64>>>, directions: Vec<Direction>) -> ScoreTable {
    ScoreTable {
        molecules: (0..scores.len()).map(|i| format!("m{i}")).collect(),
        programs: (0..directions.len()).map(|p| format!("p{p}")).collect(),
        directions,
        scores,
    }
}

// Rank by counting: 1 + strictly better + half of the other tied scores.
fn oracle_ecr(t: &ScoreTable, sigma: f64) -> Vec<f64> {
    let n = t.molecules.len();
    (0..n)
        .map(|m| {
            (0..t.programs.len())
                .map(|p| {
                    let rank = match t.scores[m][p] {
                        None => n as f64,
                        Some(s) => {
                            let better = |o: f64| match t.directions[p] {
                                Direction::LowerIsBetter => o < s,
                                Direction::HigherIsBetter => o > s,
                            };
                            let others = (0..n).filter(|&k| k != m).filter_map(|k| t.scores[k][p]);
                            let (b, tie) = others.fold((0.0, 0.0), |(b, tie), o| {
                                (b + f64::from(u8::from(better(o))), tie + f64::from(u8::from(o == s)))
                            });
                            1.0 + b + tie / 2.0
                        }
                    };
                    (-rank / sigma).exp() / sigma
                })
                .sum()
        })
        .collect()
}

#[test]
fn three_molecules_two_programs_by_hand() {
    // ranks A=(1,2), B=(2,1), C=(3,3)
    let t = table(
        vec![vec![Some(-9.0), Some(-8.0)], vec![Some(-8.0), Some(-9.0)], vec![Some(-7.0), Some(-7.0)]],
        vec![Direction::LowerIsBetter; 2],
    );
    let e = ecr_scores(&t, 1.0, Exec::Sequential).unwrap();
    let ab = (-1f64).exp() + (-2f64).exp();
    assert!((e[0] - ab).abs() < 1e-9 && (e[1] - ab).abs() < 1e-9);
    assert!((e[2] - 2.0 * (-3f64).exp()).abs() < 1e-9);
    assert!((ab - 0.5032).abs() < 1e-4);
}

#[test]
fn csv_fixture_matches_oracle() {
    let dirs: HashMap<String, Direction> = serde_json::from_str(&common::fixture("docking_directions.json")).unwrap();
    let t = ScoreTable::from_csv(common::fixture("docking_scores.csv").as_bytes(), &dirs).unwrap();
    assert_eq!(t.molecules.len(), 5);
    assert_eq!(t.programs, ["PLANTS", "Gnina", "FRED", "rDock"]);
    assert_eq!(t.scores[2][3], None);
    assert_eq!(t.scores[4][2], None);
    // PLANTS: lig5 -95.3, lig1 -92.1, lig2 = lig4 -88.4, lig3 -70.0
    assert_eq!(t.ranks(0), [2.0, 3.5, 5.0, 3.5, 1.0]);
    // rDock: lig3 missing gets N = 5
    assert_eq!(t.ranks(3)[2], 5.0);
    for sigma in [0.5, 1.0, default_sigma(5), 3.0] {
        let got = ecr_scores(&t, sigma, Exec::Parallel).unwrap();
        let want = oracle_ecr(&t, sigma);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }
    assert!(matches!(ScoreTable::from_csv(common::fixture("docking_scores.csv").as_bytes(), &HashMap::new()), Err(ConsensusError::MissingDirection(_))));
}

#[test]
fn errors() {
    let empty = table(vec![], vec![Direction::LowerIsBetter]);
    assert!(matches!(ecr_scores(&empty, 1.0, Exec::Sequential), Err(ConsensusError::EmptyTable)));
    let t = table(vec![vec![Some(1.0)]], vec![Direction::LowerIsBetter]);
    assert!(matches!(ecr_scores(&t, 0.0, Exec::Sequential), Err(ConsensusError::BadSigma(_))));
    assert!(matches!(background_report(&[], &BTreeMap::new(), None), Err(ConsensusError::EmptySet(_))));
    let bg = BTreeMap::from([("bg".to_string(), vec![])]);
    assert!(matches!(background_report(&[1.0], &bg, None), Err(ConsensusError::EmptySet(_))));
}

fn arb_table() -> impl Strategy<Value = ScoreTable> {
    (2usize..12, 1usize..5).prop_flat_map(|(n, p)| {
        (
            proptest::collection::vec(proptest::collection::vec(proptest::option::weighted(0.85, (-20i32..20).prop_map(f64::from)), p), n),
            proptest::collection::vec(prop_oneof![Just(Direction::LowerIsBetter), Just(Direction::HigherIsBetter)], p),
        )
            .prop_map(|(s, d)| table(s, d))
    })
}

proptest! {
    #[test]
    fn matches_counting_oracle(t in arb_table(), sigma in 0.2f64..10.0) {
        let got = ecr_scores(&t, sigma, Exec::Sequential).unwrap();
        for (g, w) in got.iter().zip(oracle_ecr(&t, sigma)) {
            prop_assert!((g - w).abs() < 1e-12);
        }
        prop_assert!(got.iter().all(|&e| e >= 0.0));
    }

    #[test]
    fn invariant_under_monotone_transforms(t in arb_table(), sigma in 0.2f64..10.0, k in 0usize..3) {
        let f = |x: f64| match k {
            0 => 3.0 * x + 7.0,
            1 => (x / 10.0).exp(),
            _ => x * x * x + x,
        };
        let mut u = t.clone();
        for row in &mut u.scores {
            for s in row.iter_mut() {
                *s = s.map(f);
            }
        }
        prop_assert_eq!(ecr_scores(&t, sigma, Exec::Sequential).unwrap(), ecr_scores(&u, sigma, Exec::Sequential).unwrap());
        // a decreasing transform with flipped directions is also rank-preserving
        let mut v = t.clone();
        for row in &mut v.scores {
            for s in row.iter_mut() {
                *s = s.map(|x| -f(x));
            }
        }
        for d in &mut v.directions {
            *d = if *d == Direction::LowerIsBetter { Direction::HigherIsBetter } else { Direction::LowerIsBetter };
        }
        prop_assert_eq!(ecr_scores(&t, sigma, Exec::Sequential).unwrap(), ecr_scores(&v, sigma, Exec::Sequential).unwrap());
    }

    #[test]
    fn program_order_does_not_matter(t in arb_table(), sigma in 0.2f64..10.0, seed in any::<u64>()) {
        let perm = common::shuffled(t.programs.len(), &mut common::rng(seed));
        let mut u = t.clone();
        u.programs = perm.iter().map(|&p| t.programs[p].clone()).collect();
        u.directions = perm.iter().map(|&p| t.directions[p]).collect();
        u.scores = t.scores.iter().map(|row| perm.iter().map(|&p| row[p]).collect()).collect();
        let a = ecr_scores(&t, sigma, Exec::Sequential).unwrap();
        let b = ecr_scores(&u, sigma, Exec::Sequential).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-15 * x.abs().max(1.0));
        }
    }

    #[test]
    fn tied_molecules_share_scores_regardless_of_order(t in arb_table(), seed in any::<u64>()) {
        let perm = common::shuffled(t.molecules.len(), &mut common::rng(seed));
        let mut u = t.clone();
        u.molecules = perm.iter().map(|&m| t.molecules[m].clone()).collect();
        u.scores = perm.iter().map(|&m| t.scores[m].clone()).collect();
        let a = ecr_scores(&t, 2.0, Exec::Sequential).unwrap();
        let b = ecr_scores(&u, 2.0, Exec::Sequential).unwrap();
        for (new, &old) in perm.iter().enumerate() {
            prop_assert_eq!(b[new], a[old]);
        }
    }

    #[test]
    fn sigma_keeps_order_for_one_complete_program(
        raw in proptest::collection::vec(0u8..7, 2..10), s1 in 0.3f64..5.0, s2 in 5.0f64..50.0,
    ) {
        let t = table(raw.iter().map(|&x| vec![Some(f64::from(x))]).collect(), vec![Direction::LowerIsBetter]);
        let a = ecr_scores(&t, s1, Exec::Sequential).unwrap();
        let b = ecr_scores(&t, s2, Exec::Sequential).unwrap();
        for i in 0..a.len() {
            for j in 0..a.len() {
                prop_assert_eq!(a[i] > a[j], b[i] > b[j]);
            }
        }
    }
}

#[test]
fn single_program_order_is_the_ranking() {
    let t = table(vec![vec![Some(3.0)], vec![Some(-1.0)], vec![Some(2.0)], vec![Some(0.0)]], vec![Direction::LowerIsBetter]);
    let e = ecr_scores(&t, 1.5, Exec::Sequential).unwrap();
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| e[b].total_cmp(&e[a]));
    assert_eq!(order, [1, 3, 2, 0]);
}

#[test]
fn missing_scores_can_flip_order_with_sigma() {
    // X: best on p0, missing on p1 (rank N = 10). Y: rank 3 on both.
    let mut scores: Vec<Vec<Option<f64>>> = (0..10).map(|i| vec![Some(10.0 + i as f64), Some(10.0 + i as f64)]).collect();
    scores[0] = vec![Some(0.0), None];
    scores[1] = vec![Some(2.5), Some(2.5)];
    scores[2] = vec![Some(1.0), Some(1.0)];
    scores[3] = vec![Some(2.0), Some(2.0)];
    let t = table(scores, vec![Direction::LowerIsBetter; 2]);
    assert_eq!(t.ranks(0)[..4], [1.0, 4.0, 2.0, 3.0]);
    assert_eq!(t.ranks(1)[..4], [10.0, 3.0, 1.0, 2.0]);
    // X = m0 (ranks 1, 10), Y = m1 (ranks 4, 3)
    let small = ecr_scores(&t, 1.0, Exec::Sequential).unwrap();
    let large = ecr_scores(&t, 100.0, Exec::Sequential).unwrap();
    assert!(small[0] > small[1]);
    assert!(large[0] < large[1]);
}

#[test]
fn background_examples() {
    let bg = BTreeMap::from([("bg".to_string(), vec![0.1, 0.2])]);
    let r = background_report(&[0.3, 0.4, 0.5], &bg, Some(0.2)).unwrap();
    assert!((r.candidate_median - 0.4).abs() < 1e-15);
    assert!((r.backgrounds[0].median - 0.15).abs() < 1e-15);
    assert!(r.backgrounds[0].candidate_median_exceeds);
    assert_eq!(r.backgrounds[0].probe_percentile, Some(75.0));

    let flat = BTreeMap::from([("flat".to_string(), vec![0.7; 9])]);
    let r = background_report(&[0.1], &flat, Some(0.7)).unwrap();
    assert_eq!(r.backgrounds[0].probe_percentile, Some(50.0));
    assert!(!r.backgrounds[0].candidate_median_exceeds);
}

fn scores(name: &str) -> Vec<f64> {
    read_score_list(common::fixture(&format!("impdh/{name}.csv")).as_bytes()).unwrap()
}

#[test]
fn impdh_fixture_relationships() {
    let probe = scores("ground_truth");
    assert_eq!(probe, [0.00488]);
    let candidates = scores("adapter_t5_molgen");
    let bgs = BTreeMap::from([
        ("fda".to_string(), scores("fda_background")),
        ("adapter_background".to_string(), scores("adapter_background")),
    ]);
    let r = background_report(&candidates, &bgs, Some(probe[0])).unwrap();
    assert!((r.candidate_median - 0.00594).abs() < 1e-12);
    let fda = r.backgrounds.iter().find(|b| b.name == "fda").unwrap();
    let cbg = r.backgrounds.iter().find(|b| b.name == "adapter_background").unwrap();
    assert!((fda.median - 0.00006).abs() < 1e-12);
    assert!((cbg.median - 0.00049).abs() < 1e-12);
    assert!(probe[0] > fda.median && probe[0] > cbg.median);
    assert!(fda.candidate_median_exceeds && cbg.candidate_median_exceeds);
    assert!(fda.probe_percentile.unwrap() > 50.0 && cbg.probe_percentile.unwrap() > 50.0);
}
