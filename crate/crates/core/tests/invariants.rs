mod common;

use common::props::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn confidence_ignores_per_frame_shifts((seed, offsets) in shift_strategy()) {
        check_shift_invariance(seed, &offsets)?;
    }

    #[test]
    fn pooling_is_a_monotone_max((targets, map, row, bump) in pool_strategy()) {
        check_pool_monotone(targets, &map, &row, &bump)?;
    }

    #[test]
    fn buffer_keeps_one_event_per_window((raw, len) in candidate_strategy()) {
        check_buffer_dedup(&raw, len)?;
    }

    #[test]
    fn higher_threshold_never_adds_events((raw, len, seed, lo, hi) in threshold_strategy()) {
        check_threshold_monotone(&raw, len, seed, lo, hi)?;
    }

    #[test]
    fn confidence_falls_with_margin(
        r in -1e4f64..1e4,
        dr in 1e-3f64..1e3,
        dur in 1usize..500,
        ns in 1usize..60,
        k in 1e-2f64..1e4,
    ) {
        check_confidence_decreasing(r, dr, dur, ns, k)?;
    }

    #[test]
    fn det_curves_are_monotone(seed in any::<u64>()) {
        check_det_monotone(seed)?;
    }
}
