use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seminar_core::scheduler::{brute_force_min_load, feasible, plan_schedule, ScheduleInstance, ScheduleItem};
use seminar_core::Error;

fn random_instance(rng: &mut impl Rng, max_items: usize, max_weeks: u32) -> ScheduleInstance {
    let num_weeks = rng.random_range(1..=max_weeks);
    let total = rng.random_range(0..=max_items);
    let mut inst = ScheduleInstance::new(num_weeks);
    for id in 0..total as i64 {
        if rng.random_bool(0.2) {
            inst.fixed.push((id, rng.random_range(1..=num_weeks)));
        } else {
            let a = rng.random_range(1..=num_weeks);
            let b = rng.random_range(1..=num_weeks);
            inst.free_items.push(ScheduleItem::new(id, a.min(b), a.max(b)));
        }
    }
    inst
}

fn instances() -> impl Strategy<Value = ScheduleInstance> {
    any::<u64>().prop_map(|seed| random_instance(&mut ChaCha8Rng::seed_from_u64(seed), 8, 5))
}

#[test]
fn matches_brute_force_on_500_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for n in 0..500 {
        let inst = random_instance(&mut rng, 8, 5);
        let plan = plan_schedule(&inst).unwrap();
        assert_eq!(
            Some(plan.max_weekly_load),
            brute_force_min_load(&inst),
            "instance {n}: {inst:?}"
        );
    }
}

#[test]
fn uniform_41_over_7_weeks() {
    let inst = ScheduleInstance {
        num_weeks: 7,
        fixed: Vec::new(),
        free_items: (1..=41).map(|id| ScheduleItem::anywhere(id, 7)).collect(),
    };
    let a = plan_schedule(&inst).unwrap();
    assert_eq!(a.max_weekly_load, 6);
    assert_eq!(a.loads.len(), 7);
    assert_eq!(a.loads.values().sum::<u32>(), 41);
    assert_eq!(a, plan_schedule(&inst).unwrap());
}

#[test]
fn oracle_sanity() {
    // Two items that must share week 1.
    let mut inst = ScheduleInstance::new(3);
    inst.free_items = vec![ScheduleItem::new(1, 1, 1), ScheduleItem::new(2, 1, 1)];
    assert_eq!(brute_force_min_load(&inst), Some(2));
    inst.free_items.push(ScheduleItem::new(3, 3, 2));
    assert_eq!(brute_force_min_load(&inst), None);
    assert!(matches!(plan_schedule(&inst), Err(Error::Infeasible { items }) if items == vec![3]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn feasibility_is_monotone(inst in instances(), cap in 0u32..9) {
        if feasible(&inst, cap).is_some() {
            prop_assert!(feasible(&inst, cap + 1).is_some());
        }
    }

    #[test]
    fn placement_respects_windows_and_loads(inst in instances()) {
        let plan = plan_schedule(&inst).unwrap();
        let free: BTreeSet<i64> = inst.free_items.iter().map(|i| i.item_id).collect();
        prop_assert_eq!(plan.placement.keys().copied().collect::<BTreeSet<_>>(), free);
        for item in &inst.free_items {
            let week = plan.placement[&item.item_id];
            prop_assert!(item.earliest_week <= week && week <= item.deadline_week);
        }
        prop_assert_eq!(plan.loads.len() as u32, inst.num_weeks);
        prop_assert_eq!(plan.loads.values().sum::<u32>() as usize, inst.total_items());
        prop_assert_eq!(plan.max_weekly_load, plan.loads.values().copied().max().unwrap_or(0));
    }

    #[test]
    fn respects_lower_bounds(inst in instances()) {
        let plan = plan_schedule(&inst).unwrap();
        let total = inst.total_items() as u32;
        prop_assert!(plan.max_weekly_load >= total.div_ceil(inst.num_weeks));
        let max_fixed = (1..=inst.num_weeks)
            .map(|w| inst.fixed.iter().filter(|f| f.1 == w).count() as u32)
            .max()
            .unwrap_or(0);
        prop_assert!(plan.max_weekly_load >= max_fixed);
    }

    #[test]
    fn deterministic(inst in instances()) {
        prop_assert_eq!(plan_schedule(&inst).unwrap(), plan_schedule(&inst.clone()).unwrap());
    }

    #[test]
    fn free_item_order_does_not_matter(inst in instances()) {
        let mut reversed = inst.clone();
        reversed.free_items.reverse();
        prop_assert_eq!(plan_schedule(&inst).unwrap(), plan_schedule(&reversed).unwrap());
    }
}
