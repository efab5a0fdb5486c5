//! Presentation-week planning.
//!
//! Every presentation occupies one slot in one week. Items that already have
//! a week are pre-placed (`fixed`); the others carry a window
//! `[earliest_week, deadline_week]`. The planner picks weeks for the free
//! items so that the largest weekly load is as small as possible.
//!
//! For a candidate capacity `c`, [`feasible`] sweeps the weeks in order and
//! fills each week's free slots with released items by earliest deadline
//! first. For unit-length items this greedy is exact: it fails only when no
//! placement respecting `c` exists. [`plan_schedule`] binary-searches the
//! smallest feasible `c`.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Week;

pub type ItemId = i64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleItem {
    pub item_id: ItemId,
    pub earliest_week: Week,
    pub deadline_week: Week,
}

impl ScheduleItem {
    pub fn new(item_id: ItemId, earliest_week: Week, deadline_week: Week) -> Self {
        ScheduleItem {
            item_id,
            earliest_week,
            deadline_week,
        }
    }

    /// An item that may go in any of the `num_weeks` weeks.
    pub fn anywhere(item_id: ItemId, num_weeks: Week) -> Self {
        ScheduleItem::new(item_id, 1, num_weeks)
    }

    fn window_fits(&self, num_weeks: Week) -> bool {
        self.earliest_week >= 1 && self.earliest_week <= self.deadline_week && self.deadline_week <= num_weeks
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleInstance {
    pub num_weeks: Week,
    /// Pre-placed `(item, week)` pairs.
    pub fixed: Vec<(ItemId, Week)>,
    pub free_items: Vec<ScheduleItem>,
}

impl ScheduleInstance {
    pub fn new(num_weeks: Week) -> Self {
        ScheduleInstance {
            num_weeks,
            ..Default::default()
        }
    }

    pub fn total_items(&self) -> usize {
        self.fixed.len() + self.free_items.len()
    }

    /// Checks the instance invariants. Items whose window is empty or lies
    /// outside the weeks, and fixed placements outside the weeks, are
    /// reported together as `Infeasible`.
    pub fn validate(&self) -> Result<()> {
        if self.num_weeks == 0 {
            return Err(Error::validation("num_weeks must be at least 1"));
        }
        let mut seen = BTreeSet::new();
        let ids = self
            .fixed
            .iter()
            .map(|&(id, _)| id)
            .chain(self.free_items.iter().map(|i| i.item_id));
        for id in ids {
            if !seen.insert(id) {
                return Err(Error::validation(format!("duplicate schedule item {id}")));
            }
        }

        let mut offending: Vec<ItemId> = self
            .fixed
            .iter()
            .filter(|&&(_, week)| week == 0 || week > self.num_weeks)
            .map(|&(id, _)| id)
            .chain(
                self.free_items
                    .iter()
                    .filter(|item| !item.window_fits(self.num_weeks))
                    .map(|item| item.item_id),
            )
            .collect();
        if offending.is_empty() {
            Ok(())
        } else {
            offending.sort_unstable();
            Err(Error::Infeasible { items: offending })
        }
    }

    /// Pre-placed count per week; index 0 is unused.
    fn fixed_counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.num_weeks as usize + 1];
        for &(_, week) in &self.fixed {
            if let Some(slot) = counts.get_mut(week as usize) {
                *slot += 1;
            }
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleResult {
    /// Week chosen for every free item.
    pub placement: BTreeMap<ItemId, Week>,
    pub max_weekly_load: u32,
    /// Load of every week `1..=num_weeks`, fixed items included.
    pub loads: BTreeMap<Week, u32>,
}

/// Earliest-deadline-first placement at weekly `capacity`. Returns the
/// placement of the free items when every week stays within `capacity`,
/// `None` otherwise.
pub fn feasible(instance: &ScheduleInstance, capacity: u32) -> Option<BTreeMap<ItemId, Week>> {
    let num_weeks = instance.num_weeks;
    if instance.free_items.iter().any(|item| !item.window_fits(num_weeks)) {
        return None;
    }
    let fixed = instance.fixed_counts();
    if instance.fixed.iter().any(|&(_, week)| week == 0 || week > num_weeks) {
        return None;
    }

    let mut by_release: Vec<&ScheduleItem> = instance.free_items.iter().collect();
    by_release.sort_by_key(|item| (item.earliest_week, item.item_id));

    let mut released = BinaryHeap::new();
    let mut next = 0;
    let mut placement = BTreeMap::new();

    for week in 1..=num_weeks {
        while let Some(item) = by_release.get(next) {
            if item.earliest_week > week {
                break;
            }
            released.push(Reverse((item.deadline_week, item.item_id)));
            next += 1;
        }

        let used = fixed[week as usize];
        if used > capacity {
            return None;
        }
        for _ in 0..capacity - used {
            match released.pop() {
                Some(Reverse((_, id))) => {
                    placement.insert(id, week);
                }
                None => break,
            }
        }

        if let Some(Reverse((deadline, _))) = released.peek() {
            if *deadline <= week {
                return None;
            }
        }
    }

    if next < by_release.len() || !released.is_empty() {
        return None;
    }
    Some(placement)
}

/// Minimizes the maximum weekly load over all placements that respect the
/// item windows and the pre-placed items.
pub fn plan_schedule(instance: &ScheduleInstance) -> Result<ScheduleResult> {
    instance.validate()?;
    let total = instance.total_items() as u32;
    let max_fixed = instance.fixed_counts().into_iter().max().unwrap_or(0);

    let mut low = total.div_ceil(instance.num_weeks).max(max_fixed);
    let mut high = total;
    if feasible(instance, high).is_none() {
        return Err(Error::Infeasible {
            items: instance.free_items.iter().map(|i| i.item_id).collect(),
        });
    }
    while low < high {
        let mid = low + (high - low) / 2;
        if feasible(instance, mid).is_some() {
            high = mid;
        } else {
            low = mid + 1;
        }
    }
    let best = feasible(instance, low).ok_or_else(|| Error::Internal("capacity search lost its witness".into()))?;

    let loads = weekly_load(&best, &instance.fixed, instance.num_weeks)?;
    let max_weekly_load = loads.values().copied().max().unwrap_or(0);
    Ok(ScheduleResult {
        placement: best,
        max_weekly_load,
        loads,
    })
}

/// Count of items per week, covering every week `1..=num_weeks`.
pub fn weekly_load(
    placement: &BTreeMap<ItemId, Week>,
    fixed: &[(ItemId, Week)],
    num_weeks: Week,
) -> Result<BTreeMap<Week, u32>> {
    let mut loads: BTreeMap<Week, u32> = (1..=num_weeks).map(|w| (w, 0)).collect();
    for &week in placement.values().chain(fixed.iter().map(|(_, w)| w)) {
        match loads.get_mut(&week) {
            Some(count) => *count += 1,
            None => {
                return Err(Error::WeekOutOfRange {
                    week: week as i64,
                    num_weeks,
                })
            }
        }
    }
    Ok(loads)
}

/// Smallest achievable maximum weekly load, by trying every placement.
/// Exponential; meant as a reference for small instances. `None` when no
/// window-respecting placement exists.
pub fn brute_force_min_load(instance: &ScheduleInstance) -> Option<u32> {
    let num_weeks = instance.num_weeks as usize;
    let mut loads = vec![0u32; num_weeks + 1];
    for &(_, week) in &instance.fixed {
        *loads.get_mut(week as usize).filter(|_| week >= 1)? += 1;
    }
    fn go(items: &[ScheduleItem], loads: &mut [u32], best: &mut Option<u32>) {
        let Some((item, rest)) = items.split_first() else {
            let max = loads.iter().copied().max().unwrap_or(0);
            if best.is_none_or(|b| max < b) {
                *best = Some(max);
            }
            return;
        };
        let last = item.deadline_week.min(loads.len() as Week - 1);
        for week in item.earliest_week.max(1)..=last {
            loads[week as usize] += 1;
            go(rest, loads, best);
            loads[week as usize] -= 1;
        }
    }
    let mut best = None;
    go(&instance.free_items, &mut loads, &mut best);
    best
}
