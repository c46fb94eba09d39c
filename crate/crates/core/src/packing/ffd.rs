use super::{Pack, PackItem, PackPlan};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Limits {
    pub max_items: Option<usize>,
    pub max_sources: Option<usize>,
}

/// First-fit decreasing: items sorted by length descending (ties by id
/// ascending), each placed into the first pack with room. Items longer than
/// `capacity` are returned as overflow in input order.
pub fn pack_ffd(items: &[PackItem], capacity: u32) -> Result<PackPlan> {
    if capacity == 0 {
        return Err(Error::Config("capacity must be at least 1".into()));
    }
    check_items(items)?;
    let (packs, overflow) = ffd_core(items.to_vec(), capacity, Limits::default());
    Ok(PackPlan {
        capacity,
        packs,
        overflow,
    })
}

pub(crate) fn check_items(items: &[PackItem]) -> Result<()> {
    match items.iter().find(|i| i.length == 0) {
        Some(item) => Err(Error::ZeroLength {
            id: item.id.clone(),
        }),
        None => Ok(()),
    }
}

pub(crate) fn ffd_core(
    items: Vec<PackItem>,
    capacity: u32,
    limits: Limits,
) -> (Vec<Pack>, Vec<PackItem>) {
    let (mut fitting, overflow): (Vec<_>, Vec<_>) =
        items.into_iter().partition(|i| i.length <= capacity);
    fitting.sort_by(|a, b| b.length.cmp(&a.length).then_with(|| a.id.cmp(&b.id)));

    let mut bins = OpenBins::new(capacity, fitting.len(), limits);
    for item in fitting {
        bins.place(item);
    }
    (bins.finish(), overflow)
}

struct Bin {
    items: Vec<PackItem>,
    total: u64,
    sources: Vec<String>,
}

/// Open packs plus a max-tree over their effective free space, so the first
/// pack with room is found in O(log n).
struct OpenBins {
    capacity: u64,
    limits: Limits,
    bins: Vec<Bin>,
    leaves: usize,
    tree: Vec<u64>,
}

impl OpenBins {
    fn new(capacity: u32, max_bins: usize, limits: Limits) -> Self {
        let leaves = max_bins.max(1).next_power_of_two();
        OpenBins {
            capacity: u64::from(capacity),
            limits,
            bins: Vec::new(),
            leaves,
            tree: vec![0; 2 * leaves],
        }
    }

    fn place(&mut self, item: PackItem) {
        let need = u64::from(item.length);
        let mut from = 0;
        let slot = loop {
            match self.first_with_room(need, from) {
                Some(b) if self.source_allows(b, &item.source) => break b,
                Some(b) => from = b + 1,
                None => {
                    self.bins.push(Bin {
                        items: Vec::new(),
                        total: 0,
                        sources: Vec::new(),
                    });
                    break self.bins.len() - 1;
                }
            }
        };
        let bin = &mut self.bins[slot];
        bin.total += need;
        if !bin.sources.contains(&item.source) {
            bin.sources.push(item.source.clone());
        }
        bin.items.push(item);
        self.update(slot);
    }

    fn source_allows(&self, b: usize, source: &str) -> bool {
        match self.limits.max_sources {
            None => true,
            Some(cap) => {
                let s = &self.bins[b].sources;
                s.len() < cap || s.iter().any(|x| x == source)
            }
        }
    }

    fn free_space(&self, b: usize) -> u64 {
        let bin = &self.bins[b];
        if self.limits.max_items.is_some_and(|m| bin.items.len() >= m) {
            0
        } else {
            self.capacity - bin.total
        }
    }

    fn update(&mut self, b: usize) {
        let mut node = self.leaves + b;
        self.tree[node] = self.free_space(b);
        while node > 1 {
            node /= 2;
            self.tree[node] = self.tree[2 * node].max(self.tree[2 * node + 1]);
        }
    }

    /// Leftmost bin at index >= `from` with at least `need` free tokens.
    fn first_with_room(&self, need: u64, from: usize) -> Option<usize> {
        if from >= self.bins.len() {
            return None;
        }
        self.descend(1, 0, self.leaves, need, from)
    }

    fn descend(&self, node: usize, lo: usize, hi: usize, need: u64, from: usize) -> Option<usize> {
        if hi <= from || self.tree[node] < need {
            return None;
        }
        if hi - lo == 1 {
            return Some(lo);
        }
        let mid = (lo + hi) / 2;
        self.descend(2 * node, lo, mid, need, from)
            .or_else(|| self.descend(2 * node + 1, mid, hi, need, from))
    }

    fn finish(self) -> Vec<Pack> {
        self.bins
            .into_iter()
            .map(|b| Pack {
                items: b.items,
                total: b.total,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn items(lengths: &[u32]) -> Vec<PackItem> {
        lengths
            .iter()
            .enumerate()
            .map(|(i, &l)| PackItem::new(format!("s{i}"), l, format!("src{}", i % 3)))
            .collect()
    }

    fn lengths(plan: &PackPlan) -> Vec<Vec<u32>> {
        plan.packs()
            .iter()
            .map(|p| p.items().iter().map(|i| i.length).collect())
            .collect()
    }

    /// Direct O(n·bins) first-fit decreasing for cross-checking the tree.
    fn naive_ffd(lengths: &[u32], cap: u32) -> Vec<Vec<u32>> {
        let mut sorted: Vec<(u32, String)> = lengths
            .iter()
            .enumerate()
            .filter(|(_, &l)| l <= cap)
            .map(|(i, &l)| (l, format!("s{i}")))
            .collect();
        sorted.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        let mut bins: Vec<Vec<u32>> = Vec::new();
        for (l, _) in sorted {
            match bins.iter_mut().find(|b| b.iter().sum::<u32>() + l <= cap) {
                Some(b) => b.push(l),
                None => bins.push(vec![l]),
            }
        }
        bins
    }

    #[test]
    fn worked_example() {
        let plan = pack_ffd(&items(&[5, 5, 4, 3, 3]), 10).unwrap();
        assert_eq!(lengths(&plan), vec![vec![5, 5], vec![4, 3, 3]]);
    }

    #[test]
    fn saturated_items_one_per_pack() {
        let plan = pack_ffd(&items(&[10, 10, 10]), 10).unwrap();
        assert_eq!(plan.packs().len(), 3);
        assert!(plan.packs().iter().all(|p| p.padding(10) == 0));
    }

    #[test]
    fn oversize_goes_to_overflow() {
        let plan = pack_ffd(&items(&[11]), 10).unwrap();
        assert!(plan.packs().is_empty());
        assert_eq!(plan.overflow().len(), 1);
    }

    #[test]
    fn ties_sorted_by_id() {
        let its = vec![
            PackItem::new("b", 4, "x"),
            PackItem::new("a", 4, "x"),
            PackItem::new("c", 4, "x"),
        ];
        let plan = pack_ffd(&its, 8).unwrap();
        let ids: Vec<Vec<&str>> = plan
            .packs()
            .iter()
            .map(|p| p.items().iter().map(|i| i.id.as_str()).collect())
            .collect();
        assert_eq!(ids, vec![vec!["a", "b"], vec!["c"]]);
    }

    #[test]
    fn tree_matches_naive_first_fit() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let n = rng.gen_range(0..80);
            let cap = rng.gen_range(1..60);
            let ls: Vec<u32> = (0..n).map(|_| rng.gen_range(1..70)).collect();
            assert_eq!(lengths(&pack_ffd(&items(&ls), cap).unwrap()), naive_ffd(&ls, cap));
        }
    }

    #[test]
    fn rejects_zero_length_and_zero_capacity() {
        assert!(matches!(
            pack_ffd(&[PackItem::new("z", 0, "x")], 10),
            Err(Error::ZeroLength { .. })
        ));
        assert!(matches!(pack_ffd(&items(&[1]), 0), Err(Error::Config(_))));
    }

    #[test]
    fn item_cap_limits_pack_size() {
        let limits = Limits {
            max_items: Some(2),
            max_sources: None,
        };
        let (packs, _) = ffd_core(items(&[1, 1, 1, 1, 1]), 100, limits);
        assert_eq!(packs.iter().map(|p| p.len()).collect::<Vec<_>>(), vec![2, 2, 1]);
    }

    #[test]
    fn source_cap_limits_composition() {
        let limits = Limits {
            max_items: None,
            max_sources: Some(1),
        };
        let (packs, _) = ffd_core(items(&[1, 1, 1, 1, 1, 1]), 100, limits);
        assert_eq!(packs.len(), 3);
        assert!(packs.iter().all(|p| p.distinct_sources() == 1));
    }
}
