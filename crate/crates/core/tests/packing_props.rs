mod common;

use conpack::packing::{self, PackItem, PackingConfig, Strategy as Packer};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{check_plan, random_items};

fn items_strategy(max_n: usize, max_len: u32) -> impl Strategy<Value = Vec<PackItem>> {
    prop::collection::vec((1..=max_len, 0..4u8), 0..max_n).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (len, s))| PackItem::new(format!("x{i}"), len, format!("s{s}")))
            .collect()
    })
}

fn config_strategy() -> impl Strategy<Value = PackingConfig> {
    (
        1..200u32,
        prop_oneof![Just(Packer::Ffd), Just(Packer::Bucket)],
        1..8u32,
        prop::option::of(1..6usize),
        0.05..=1.0f64,
        prop::option::of(1..4usize),
        1..6usize,
        any::<u64>(),
    )
        .prop_map(|(capacity, strategy, num_buckets, max_items, u, max_sources, shards, seed)| {
            PackingConfig {
                capacity,
                strategy,
                num_buckets,
                max_samples_per_pack: max_items,
                min_utilization: u,
                max_sources_per_pack: max_sources,
                shards,
                seed,
            }
        })
}

fn ffd_count(items: &[PackItem], capacity: u32, max_items: Option<usize>) -> usize {
    let cfg = PackingConfig {
        capacity,
        strategy: Packer::Ffd,
        max_samples_per_pack: max_items,
        ..PackingConfig::default()
    };
    packing::pack(items, &cfg).unwrap().packs().len()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn plans_satisfy_invariants(items in items_strategy(60, 240), cfg in config_strategy()) {
        let plan = packing::pack(&items, &cfg).unwrap();
        prop_assert_eq!(check_plan(&items, &plan, &cfg), Ok(()));
        let stats = packing::packing_stats(&plan, cfg.min_utilization);
        if let Some(r) = stats.compression_ratio {
            prop_assert!(r >= 1.0);
            let u = stats.utilization.unwrap();
            prop_assert!(u > 0.0 && u <= 1.0);
            let s = stats.success_rate.unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
        } else {
            prop_assert!(stats.empty && plan.packs().is_empty());
        }
    }

    #[test]
    fn plan_is_input_order_independent_for_ffd(items in items_strategy(40, 100), cap in 1..150u32) {
        let mut rev = items.clone();
        rev.reverse();
        let a = packing::pack_ffd(&items, cap).unwrap();
        let b = packing::pack_ffd(&rev, cap).unwrap();
        prop_assert_eq!(a.packs(), b.packs());
    }

    #[test]
    fn raising_max_samples_never_adds_packs(items in items_strategy(40, 100), cap in 1..150u32, m in 1..8usize) {
        prop_assert!(ffd_count(&items, cap, Some(m + 1)) <= ffd_count(&items, cap, Some(m)));
        prop_assert!(ffd_count(&items, cap, None) <= ffd_count(&items, cap, Some(m)));
    }

    #[test]
    fn raising_capacity_never_adds_packs(items in items_strategy(40, 100), cap in 1..150u32, d in 1..20u32) {
        // Items admitted only by the larger capacity would add packs legitimately.
        let fits: Vec<PackItem> = items.iter().filter(|x| x.length <= cap).cloned().collect();
        prop_assert!(ffd_count(&fits, cap + d, None) <= ffd_count(&fits, cap, None));
    }
}

/// Serialized plan bytes.
fn fingerprint(plan: &packing::PackPlan) -> Vec<u8> {
    let mut buf = Vec::new();
    packing::write_plan(&mut buf, plan, 0.9).unwrap();
    buf
}

#[test]
fn bucketed_output_independent_of_thread_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let items = random_items(&mut rng, 20_000, 3000, 5);
    let cfg = PackingConfig {
        max_sources_per_pack: Some(2),
        max_samples_per_pack: Some(12),
        seed: 5,
        ..PackingConfig::default()
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| fingerprint(&packing::pack(&items, &cfg).unwrap()))
    };
    let one = run(1);
    assert_eq!(one, run(8));
    assert_eq!(one, run(3));
}

#[test]
fn worked_ffd_example() {
    let items: Vec<PackItem> = [5, 5, 4, 3, 3]
        .iter()
        .enumerate()
        .map(|(i, &l)| PackItem::new(format!("s{i}"), l, "web"))
        .collect();
    let plan = packing::pack_ffd(&items, 10).unwrap();
    let lens: Vec<Vec<u32>> = plan
        .packs()
        .iter()
        .map(|p| p.items().iter().map(|x| x.length).collect())
        .collect();
    assert_eq!(lens, [vec![5, 5], vec![4, 3, 3]]);
    let s = packing::packing_stats(&plan, 0.9);
    assert_eq!(s.compression_ratio, Some(2.5));
    assert_eq!(s.utilization, Some(1.0));
    assert_eq!(s.success_rate, Some(1.0));
    assert_eq!(packing::pack_optimal_oracle(&[5, 5, 4, 3, 3], 10).unwrap(), 2);
}
