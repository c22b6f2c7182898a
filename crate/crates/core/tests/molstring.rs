mod common;

use chemlinker::molstring::*;
use common::oracles::valence_ok;
use common::{corpus, fixture, isomorphic, mol, rng, shuffled};
use proptest::prelude::*;
use rand_core::RngCore;

#[test]
fn parse_errors() {
    assert_eq!(parse_smiles(""), Err(ParseError::EmptyInput));
    assert!(matches!(parse_smiles("C("), Err(ParseError::UnclosedBranch { .. })));
    assert!(matches!(parse_smiles("C1CC"), Err(ParseError::UnclosedRing { label: 1 })));
    assert_eq!(parse_smiles("c1ccc1"), Err(ParseError::KekulizationFailure));
    assert!(matches!(parse_smiles("C(C)(C)(C)(C)C"), Err(ParseError::ValenceViolation { .. })));
    assert!(matches!(parse_smiles("C*C"), Err(ParseError::Lex { .. })));
    assert!(matches!(parse_smiles("C$C"), Err(ParseError::Lex { .. })));
    assert!(matches!(parse_smiles("CQ"), Err(ParseError::Lex { .. })));
}

#[test]
fn methylphenol_graph() {
    let m = mol("Cc1ccc(O)cc1");
    assert_eq!(m.heavy_atom_count(), 8);
    assert_eq!(m.atoms().iter().filter(|a| a.aromatic).count(), 6);
    assert_eq!(m.atoms().iter().filter(|a| a.element == Element::O).count(), 1);
    assert_eq!(m.cyclomatic_number(), 1);
    assert_eq!(m.atom(7).hydrogens(), 1);
}

#[test]
fn implicit_hydrogens_follow_lowest_valence() {
    assert_eq!(mol("P").atom(0).hydrogens(), 3);
    assert_eq!(mol("S").atom(0).hydrogens(), 2);
    assert_eq!(mol("CP(=O)(O)O").atom(1).hydrogens(), 0);
    assert_eq!(mol("CS(=O)C").atom(1).hydrogens(), 0);
    assert_eq!(mol("OS(=O)(=O)O").atom(1).hydrogens(), 0);
    assert_eq!(mol("[NH4+]").atom(0).hydrogens(), 4);
    assert_eq!(mol("B").atom(0).hydrogens(), 3);
}

#[test]
fn fragments_are_components() {
    let m = mol("[Na+].[Cl-]");
    assert_eq!(m.num_components(), 2);
    let m = mol("CCO");
    assert_eq!(m.num_components(), 1);
}

#[test]
fn ring_closure_percent_labels() {
    assert_eq!(canonicalize("C%10CCCCC%10"), canonicalize("C1CCCCC1"));
}

#[test]
fn strip_stereo_examples() {
    assert_eq!(write_smiles(&strip_stereo(&mol("C/C=C\\C")), true), "CC=CC");
    assert_eq!(write_smiles(&strip_stereo(&mol("N[C@@H](C)C(=O)O")), true), "CC(N)C(=O)O");
    let plain = mol("CCO");
    assert_eq!(strip_stereo(&plain), plain);
}

#[test]
fn canonical_equivalent_writings() {
    assert_eq!(canonicalize("OCC"), canonicalize("CCO"));
    assert_eq!(canonicalize("Cc1ccc(O)cc1"), canonicalize("Oc1ccc(C)cc1"));
    assert_eq!(canonicalize("Cc1ccc(O)cc1").as_deref(), Some("Cc1ccc(O)cc1"));
}

#[test]
fn corpus_roundtrips_through_both_writers() {
    for s in corpus() {
        let m = mol(&s);
        let c = write_smiles(&m, true);
        let back = mol(&c);
        assert!(isomorphic(&m, &back), "{s} -> {c}");
        assert_eq!(write_smiles(&back, true), c, "idempotence {s}");
        let nc = write_smiles(&m, false);
        assert!(isomorphic(&m, &mol(&nc)), "{s} -> {nc}");
    }
}

#[test]
fn stereo_fixtures_canonicalize_under_permutation() {
    let mut r = rng(11);
    for s in fixture("canon_stereo.smi").lines() {
        let m = mol(s);
        let c = write_smiles(&m, true);
        assert_eq!(write_smiles(&mol(&c), true), c);
        for _ in 0..100 {
            let p = m.permuted(&shuffled(m.num_atoms(), &mut r));
            assert_eq!(write_smiles(&p, true), c, "{s}");
        }
    }
}

#[test]
fn enantiomers_and_geometric_isomers_differ() {
    assert_ne!(canonicalize("N[C@@H](C)C(=O)O"), canonicalize("N[C@H](C)C(=O)O"));
    assert_ne!(canonicalize("C/C=C/C"), canonicalize("C/C=C\\C"));
    assert_eq!(canonicalize("C/C=C/C"), canonicalize("C\\C=C\\C"));
    assert_eq!(canonicalize("N[C@@H](C)C(=O)O"), canonicalize("C[C@H](N)C(=O)O"));
}

#[test]
fn selfies_reference_examples() {
    let paper = "[C][C][=C][C][=C][Branch1][Branch1][C][=C][Ring1][=Branch1][O]";
    assert_eq!(write_smiles(&decode_selfies(paper).unwrap(), true), "Cc1ccc(O)cc1");
    assert_eq!(encode_selfies(&mol("CCO")).unwrap().to_string(), "[C][C][O]");
    assert_eq!(write_smiles(&decode_selfies("[O][#C]").unwrap(), true), "C=O");
    assert_eq!(
        decode_selfies("[EOS]").unwrap_err(),
        SelfiesError::DecodeFailure { reason: NO_ATOMS.into() }
    );
    assert!(decode_selfies("").is_err());
    let enc = encode_selfies(&mol("Cc1ccc(O)cc1")).unwrap();
    assert_eq!(write_smiles(&decode_selfies(&enc.to_string()).unwrap(), true), "Cc1ccc(O)cc1");
}

#[test]
fn selfies_rejects_stereo_and_fragments() {
    assert!(matches!(encode_selfies(&mol("C/C=C/C")), Err(SelfiesError::UnsupportedFeature(_))));
    assert!(matches!(encode_selfies(&mol("CC.O")), Err(SelfiesError::UnsupportedFeature(_))));
}

#[test]
fn selfies_corpus_roundtrip_is_isomorphic() {
    for s in corpus() {
        let m = mol(&s);
        let tokens = encode_selfies(&m).unwrap();
        let d = decode_selfies(&tokens.to_string()).unwrap();
        assert!(isomorphic(&m, &d), "{s} via {tokens}");
    }
}

#[test]
fn selfies_fuzz_never_yields_invalid_molecules() {
    let alphabet = fuzz_alphabet();
    let mut r = rng(2024);
    let mut failures = 0;
    for _ in 0..10_000 {
        let len = (r.next_u64() % 41) as usize;
        let text: String = (0..len).map(|_| alphabet[(r.next_u64() % alphabet.len() as u64) as usize].as_str()).collect();
        match decode_selfies(&text) {
            Ok(m) => {
                if let Err(msg) = valence_ok(&m) {
                    panic!("{text}: {msg}");
                }
                let c = write_smiles(&m, true);
                let again = parse_smiles(&c).unwrap_or_else(|e| panic!("{text} -> {c}: {e}"));
                assert!(isomorphic(&m, &again), "{text} -> {c}");
            }
            Err(SelfiesError::DecodeFailure { reason }) => {
                assert_eq!(reason, NO_ATOMS, "{text}");
                failures += 1;
            }
            Err(e) => panic!("{text}: {e}"),
        }
    }
    assert!(failures < 10_000);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn canonical_form_ignores_atom_order(idx in 0usize..500, seed in any::<u64>()) {
        let smiles = corpus();
        let m = mol(&smiles[idx % smiles.len()]);
        let p = m.permuted(&shuffled(m.num_atoms(), &mut rng(seed)));
        prop_assert_eq!(write_smiles(&p, true), write_smiles(&m, true));
        prop_assert!(isomorphic(&m, &p));
    }

    #[test]
    fn permuted_noncanonical_output_reparses(idx in 0usize..500, seed in any::<u64>()) {
        let smiles = corpus();
        let m = mol(&smiles[idx % smiles.len()]);
        let p = m.permuted(&shuffled(m.num_atoms(), &mut rng(seed)));
        let w = write_smiles(&p, false);
        prop_assert!(isomorphic(&m, &mol(&w)));
    }

    #[test]
    fn lexer_never_panics(s in "[CNOcn()=#1-9\\[\\]@+\\-H/\\\\.%0]{0,30}") {
        let _ = parse_smiles(&s);
    }
}
