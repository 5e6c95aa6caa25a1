mod common;

use common::{check_group_stream, check_trigger_stream, monotone_keys, readout};
use inline_cmr::stages::{prepare_ref, KSpaceBucket, Trigger, TriggerDimension};
use inline_cmr::wire::flags;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn trigger_conserves_and_emits_on_advance(seed in any::<u64>(), groups in 0usize..12, run in 1usize..20) {
        let keys = monotone_keys(&mut ChaCha8Rng::seed_from_u64(seed), groups, run);
        prop_assert_eq!(check_trigger_stream(&keys, TriggerDimension::Slice), Ok(()));
        prop_assert_eq!(check_trigger_stream(&keys, TriggerDimension::None), Ok(()));
    }

    #[test]
    fn grouping_conserves_and_emits_on_advance(seed in any::<u64>(), groups in 0usize..12, run in 1usize..20) {
        let keys = monotone_keys(&mut ChaCha8Rng::seed_from_u64(seed), groups, run);
        prop_assert_eq!(check_group_stream(&keys), Ok(()));
    }

    #[test]
    fn prepare_ref_partitions(flagged in proptest::collection::vec(any::<bool>(), 0..40)) {
        let mut b = KSpaceBucket::new(0);
        for (i, f) in flagged.iter().enumerate() {
            let mut r = readout(0, 0, i as u32);
            if *f {
                r.header.flags |= flags::CALIBRATION;
            }
            b.readouts.push(r);
        }
        let (imaging, calibration) = prepare_ref(b.clone());
        prop_assert_eq!(imaging.len() + calibration.len(), b.len());
        prop_assert!(calibration.readouts.iter().all(|r| r.header.has_flag(flags::CALIBRATION)));
        prop_assert!(imaging.readouts.iter().all(|r| !r.header.has_flag(flags::CALIBRATION)));
        let mut merged: Vec<_> = imaging.readouts.iter().chain(&calibration.readouts).map(|r| r.header.scan_counter).collect();
        merged.sort();
        prop_assert_eq!(merged, (0..b.len() as u32).collect::<Vec<_>>());
        let ordered = |k: &KSpaceBucket| k.readouts.windows(2).all(|w| w[0].header.scan_counter < w[1].header.scan_counter);
        prop_assert!(ordered(&imaging) && ordered(&calibration));
    }

    #[test]
    fn going_back_is_an_error(a in 1u16..100, back in 1u16..100) {
        let mut t = Trigger::new(TriggerDimension::Slice);
        t.ingest(readout(a, 0, 0)).unwrap();
        prop_assert!(t.ingest(readout(a.saturating_sub(back), 0, 1)).is_err());
    }
}

#[test]
fn phase_dimension_keys_on_phase() {
    let mut t = Trigger::new(TriggerDimension::Phase);
    assert!(t.ingest(readout(0, 0, 0)).unwrap().is_none());
    assert!(t.ingest(readout(5, 0, 1)).unwrap().is_none());
    let b = t.ingest(readout(0, 1, 2)).unwrap().unwrap();
    assert_eq!((b.key, b.len()), (0, 2));
}
