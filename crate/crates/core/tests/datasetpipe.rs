use std::collections::BTreeSet;

use chemlinker::datasetpipe::*;
use chemlinker::par::Exec;
use proptest::prelude::*;

mod common;

fn pubchem() -> Vec<DatasetRecord> {
    read_records(common::fixture("pubchem20.tsv").as_bytes()).unwrap()
}

fn overlap_filter() -> PubchemFilter {
    let text = common::fixture("chebi_overlap.smi");
    PubchemFilter::default().exclude_smiles(text.lines())
}

fn cids(rs: &[DatasetRecord]) -> BTreeSet<String> {
    rs.iter().map(|r| r.cid.clone()).collect()
}

fn rec(cid: &str, smiles: &str, description: &str) -> DatasetRecord {
    DatasetRecord { cid: cid.into(), smiles: smiles.into(), description: description.into() }
}

#[test]
fn pubchem_fixture_counts() {
    let records = pubchem();
    assert_eq!(records.len(), 20);
    let (kept, report) = filter_pubchem(&records, &overlap_filter(), Exec::Sequential);
    assert_eq!(kept.len(), 13);
    assert_eq!((report.input, report.kept, report.dropped), (20, 13, 7));
    let per: Vec<(&str, usize)> = report.per_rule.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    assert_eq!(
        per,
        [("banned_phrase", 1), ("excluded", 1), ("one_to_many", 2), ("short_description", 2), ("unparseable", 1)]
    );
    assert!(kept.iter().all(|r| r.cid.starts_with("10")));
    let (par, par_report) = filter_pubchem(&records, &overlap_filter(), Exec::Parallel);
    assert_eq!((par, par_report), (kept, report));
}

#[test]
fn word_threshold_is_strict() {
    let words = |n: usize| vec!["w"; n].join(" ");
    let rs = [rec("1", "CCO", &words(30)), rec("2", "CCN", &words(31))];
    let (kept, _) = filter_pubchem(&rs, &PubchemFilter::default(), Exec::Sequential);
    assert_eq!(cids(&kept), BTreeSet::from(["2".to_string()]));
}

#[test]
fn shared_description_drops_every_target() {
    let d = vec!["w"; 40].join(" ");
    let rs = [rec("1", "CCO", &d), rec("2", "CCN", &d), rec("3", "OCC", &vec!["v"; 40].join(" "))];
    let (kept, report) = filter_pubchem(&rs, &PubchemFilter::default(), Exec::Sequential);
    assert_eq!(cids(&kept), BTreeSet::from(["3".to_string()]));
    assert_eq!(report.per_rule["one_to_many"], 2);
}

#[test]
fn staged_filtering_matches_in_either_order() {
    let records = pubchem();
    let words_only = PubchemFilter { banned_phrases: vec![], ..PubchemFilter::default() };
    let phrase_overlap = PubchemFilter { min_words: 0, ..overlap_filter() };
    let ab = filter_pubchem(&filter_pubchem(&records, &words_only, Exec::Sequential).0, &phrase_overlap, Exec::Sequential).0;
    let ba = filter_pubchem(&filter_pubchem(&records, &phrase_overlap, Exec::Sequential).0, &words_only, Exec::Sequential).0;
    let all = filter_pubchem(&records, &overlap_filter(), Exec::Sequential).0;
    assert_eq!(cids(&ab), cids(&ba));
    assert_eq!(cids(&ab), cids(&all));
}

#[test]
fn nothing_excluded_survives() {
    let cfg = overlap_filter();
    let (kept, _) = filter_pubchem(&pubchem(), &cfg, Exec::Sequential);
    assert!(kept.iter().all(|r| !cfg.exclude.contains(&canonical(&r.smiles).unwrap())));
}

proptest! {
    #[test]
    fn pubchem_filter_is_monotone_and_order_free(seed in any::<u64>()) {
        let records = pubchem();
        let perm = common::shuffled(records.len(), &mut common::rng(seed));
        let shuffled: Vec<DatasetRecord> = perm.iter().map(|&i| records[i].clone()).collect();
        let (a, _) = filter_pubchem(&records, &overlap_filter(), Exec::Sequential);
        let (b, _) = filter_pubchem(&shuffled, &overlap_filter(), Exec::Sequential);
        prop_assert_eq!(cids(&a), cids(&b));
        prop_assert!(cids(&a).is_subset(&cids(&records)));
        let (again, _) = filter_pubchem(&a, &overlap_filter(), Exec::Sequential);
        prop_assert_eq!(again, a);
    }

    #[test]
    fn normalization_is_idempotent(
        name in "[A-Za-z0-9,()-]{1,20}",
        verb in prop::sample::select(vec![" is ", " are ", " "]),
        rest in "[a-z ]{0,40}",
        trailer in any::<bool>(),
    ) {
        let text = format!("{name}{verb}{rest}{}", if trailer { " with data available." } else { "" });
        let once = normalize_description(&text);
        prop_assert_eq!(normalize_description(&once), once.clone());
        prop_assert!(!once.ends_with("with data available.") || !trailer);
    }
}

#[test]
fn normalization_examples() {
    assert_eq!(
        normalize_description("4-methylphenol is a member of the class of phenols with data available."),
        "This molecule is a member of the class of phenols."
    );
    assert_eq!(normalize_description("This molecule is a member of phenols."), "This molecule is a member of phenols.");
    assert_eq!(normalize_description("Aspirin, also called acetylsalicylic acid"), "Aspirin, also called acetylsalicylic acid");
    assert_eq!(normalize_description("Ginsenosides are saponins with data available"), "This molecule are saponins");
}

#[test]
fn compat_rules() {
    let rs = [
        rec("1", "C[C@H](N)C(=O)O", "alanine"),
        rec("2", "C[C@@H](N)C(=O)O", "alanine, other hand"),
        rec("3", "C[Se]C", "selenide"),
        rec("4", "CP(C)C", "phosphine"),
        rec("5", "C[N+](C)(C)C", "cation"),
        rec("6", "C1CC", "broken"),
        rec("7", "F/C=C/F", "difluoroethene"),
        rec("8", "c1cc[nH]c1", "pyrrole"),
    ];
    let (kept, report) = compat_filter(&rs, &CompatFilter::default(), Exec::Sequential);
    let got: Vec<(&str, &str)> = kept.iter().map(|r| (r.cid.as_str(), r.smiles.as_str())).collect();
    assert_eq!(got.len(), 4);
    assert_eq!(got[0].1, got[1].1);
    assert_eq!(canonical(got[0].1), canonical("CC(N)C(=O)O"));
    assert_eq!(canonical(got[2].1), canonical("FC=CF"));
    assert_eq!(got[3].0, "8");
    assert_eq!(report.per_rule["element"], 2);
    assert_eq!(report.per_rule["tokenization"], 3);
    assert_eq!(report.per_rule["unparseable"], 1);
    assert_eq!(report.dropped, 4);

    let keep_stereo = CompatFilter { strip_stereo: false, ..CompatFilter::default() };
    let (kept, _) = compat_filter(&rs, &keep_stereo, Exec::Sequential);
    assert_eq!(cids(&kept), BTreeSet::from(["8".to_string()]));
}

#[test]
fn subset_sampling() {
    let records: Vec<DatasetRecord> = (0..50).map(|i| rec(&i.to_string(), "C", "d")).collect();
    assert_eq!(sample_subset(&records, 50, 7).unwrap(), records);
    let a = sample_subset(&records, 12, 7).unwrap();
    assert_eq!(a, sample_subset(&records, 12, 7).unwrap());
    assert_ne!(a, sample_subset(&records, 12, 8).unwrap());
    assert_eq!(cids(&a).len(), 12);
    assert!(matches!(sample_subset(&records, 51, 7), Err(DatasetError::SampleTooLarge { n: 51, len: 50 })));
    assert!(sample_subset(&records, 0, 7).unwrap().is_empty());
}

#[test]
fn subset_sampling_is_uniform_enough() {
    let records: Vec<DatasetRecord> = (0..10).map(|i| rec(&i.to_string(), "C", "d")).collect();
    let mut hits = [0usize; 10];
    for seed in 0..4000 {
        for r in sample_subset(&records, 3, seed).unwrap() {
            hits[r.cid.parse::<usize>().unwrap()] += 1;
        }
    }
    // each index expected 1200 times; sd about 29
    assert!(hits.iter().all(|&h| (1050..=1350).contains(&h)), "{hits:?}");
}

#[test]
fn write_then_read() {
    let records = pubchem();
    let mut buf = Vec::new();
    write_records(&mut buf, &records).unwrap();
    assert_eq!(read_records(buf.as_slice()).unwrap(), records);
}

#[test]
fn chebi_directory_loading() {
    let dir = tempfile::tempdir().unwrap();
    for (f, n) in CHEBI20_FILES.iter().zip([3, 1, 0]) {
        let rows: Vec<DatasetRecord> = (0..n).map(|i| rec(&format!("{f}{i}"), "CCO", "x")).collect();
        let mut buf = Vec::new();
        write_records(&mut buf, &rows).unwrap();
        std::fs::write(dir.path().join(f), buf).unwrap();
    }
    let c = load_chebi20(dir.path()).unwrap();
    assert_eq!((c.train.len(), c.validation.len(), c.test.len()), (3, 1, 0));
    assert!(matches!(load_chebi20(&dir.path().join("missing")), Err(DatasetError::Io { .. })));
}
