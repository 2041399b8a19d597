mod support;

use docparse_core::metrics::teds;
use docparse_core::tables::{emit_html, emit_latex, parse_html_table, parse_latex_table};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::random_table;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn latex_round_trip(seed in any::<u64>()) {
        let t = random_table(&mut ChaCha8Rng::seed_from_u64(seed), 8, 3);
        let back = parse_latex_table(&emit_latex(&t)).unwrap();
        prop_assert!(back.same_layout_and_content(&t), "{:?}\n{:?}", t, back);
    }

    #[test]
    fn html_round_trip(seed in any::<u64>()) {
        let t = random_table(&mut ChaCha8Rng::seed_from_u64(seed), 8, 3);
        let back = parse_html_table(&emit_html(&t)).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn latex_to_html_keeps_structure(seed in any::<u64>()) {
        let t = random_table(&mut ChaCha8Rng::seed_from_u64(seed), 8, 3);
        let via_latex = parse_latex_table(&emit_latex(&t)).unwrap();
        let converted = parse_html_table(&emit_html(&via_latex)).unwrap();
        prop_assert_eq!(teds(&t, &converted, true), 1.0);
        prop_assert_eq!(teds(&t, &converted, false), 1.0);
    }
}
