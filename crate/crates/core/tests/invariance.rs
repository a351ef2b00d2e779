mod common;

use common::props;
use proptest::prelude::*;

const CASES: u32 = 1000;

proptest! {
    #![proptest_config(ProptestConfig { cases: CASES, ..ProptestConfig::default() })]

    #[test]
    fn unit_fixed_effects_cancel(seed in any::<u64>(), staggered in any::<bool>()) {
        props::unit_fixed_effects_cancel(seed, staggered)?;
    }

    #[test]
    fn additive_cohort_and_group_trends_cancel(seed in any::<u64>(), staggered in any::<bool>()) {
        props::additive_trends_cancel(seed, staggered)?;
    }

    #[test]
    fn swapping_group_labels_negates_both_contrasts(seed in any::<u64>(), staggered in any::<bool>()) {
        props::group_swap_negates_contrasts(seed, staggered)?;
    }

    #[test]
    fn row_order_is_irrelevant(seed in any::<u64>(), staggered in any::<bool>()) {
        props::row_order_is_irrelevant(seed, staggered)?;
    }

    #[test]
    fn outcome_scale_is_equivariant(seed in any::<u64>(), staggered in any::<bool>(), power in -4i32..=4) {
        props::outcome_scale_is_equivariant(seed, staggered, power)?;
    }
}
