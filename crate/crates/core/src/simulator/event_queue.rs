//! Minimum-time tournament tree over per-site event clocks.
//!
//! A complete binary tree holds one tentative firing time per site; finding
//! the next event is O(1) at the root and updating a site after an event is
//! O(log n). Unlike a binary heap there are no stale entries to manage:
//! each site owns exactly one slot.

pub(crate) struct EventQueue {
    leaves: usize,
    // node k has children 2k and 2k+1; leaves start at index `leaves`.
    time: Vec<f64>,
    site: Vec<u32>,
}

impl EventQueue {
    pub fn new(n: usize) -> EventQueue {
        let leaves = n.next_power_of_two();
        let mut q = EventQueue {
            leaves,
            time: vec![f64::INFINITY; 2 * leaves],
            site: vec![u32::MAX; 2 * leaves],
        };
        for i in 0..n {
            q.site[leaves + i] = i as u32;
        }
        for k in (1..leaves).rev() {
            q.pull_up(k);
        }
        q
    }

    #[inline]
    fn pull_up(&mut self, k: usize) {
        let (l, r) = (2 * k, 2 * k + 1);
        // Ties resolve to the left child, which keeps the result
        // independent of update order.
        if self.time[l] <= self.time[r] {
            self.time[k] = self.time[l];
            self.site[k] = self.site[l];
        } else {
            self.time[k] = self.time[r];
            self.site[k] = self.site[r];
        }
    }

    pub fn set(&mut self, site: usize, t: f64) {
        let mut k = self.leaves + site;
        self.time[k] = t;
        while k > 1 {
            k /= 2;
            self.pull_up(k);
        }
    }

    /// The earliest tentative event. Infinite time means no pending event.
    pub fn min(&self) -> (f64, usize) {
        (self.time[1], self.site[1] as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tracks_the_minimum_under_updates() {
        let mut q = EventQueue::new(5);
        for (i, t) in [3.0, 1.0, 4.0, 1.5, 9.0].iter().enumerate() {
            q.set(i, *t);
        }
        assert_eq!(q.min(), (1.0, 1));
        q.set(1, 10.0);
        assert_eq!(q.min(), (1.5, 3));
        q.set(4, 0.25);
        assert_eq!(q.min(), (0.25, 4));
    }

    #[test]
    fn empty_slots_are_infinite() {
        let q = EventQueue::new(3);
        assert!(q.min().0.is_infinite());
    }

    #[test]
    fn matches_linear_scan_on_random_updates() {
        // Deterministic pseudo-random walk compared against a naive vector.
        let n = 37;
        let mut q = EventQueue::new(n);
        let mut naive = vec![f64::INFINITY; n];
        let mut x = 0x2545f4914f6cdd1d_u64;
        for _ in 0..2000 {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            let site = (x % n as u64) as usize;
            let t = (x >> 11) as f64 / (1u64 << 53) as f64;
            q.set(site, t);
            naive[site] = t;
            let (bt, bs) = q.min();
            let (nt, ns) = naive
                .iter()
                .enumerate()
                .map(|(i, &v)| (v, i))
                .fold((f64::INFINITY, usize::MAX), |acc, cur| {
                    if cur.0 < acc.0 {
                        cur
                    } else {
                        acc
                    }
                });
            assert_eq!(bt, nt);
            assert_eq!(bs, ns);
        }
    }
}
