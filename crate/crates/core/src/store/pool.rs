use std::collections::VecDeque;

/// Dynamic address pool: one FIFO free-list of bucket addresses per cluster.
#[derive(Debug, Clone, Default)]
pub struct AddressPool {
    lists: Vec<VecDeque<usize>>,
    /// Cluster holding each address, if any.
    owner: Vec<Option<usize>>,
    free: usize,
}

impl AddressPool {
    pub fn new(k: usize, n_buckets: usize) -> Self {
        AddressPool {
            lists: vec![VecDeque::new(); k],
            owner: vec![None; n_buckets],
            free: 0,
        }
    }

    pub fn k(&self) -> usize {
        self.lists.len()
    }

    pub fn push(&mut self, label: usize, addr: usize) {
        if addr >= self.owner.len() {
            self.owner.resize(addr + 1, None);
        }
        assert!(
            self.owner[addr].is_none(),
            "address {addr} already in free-list {:?}",
            self.owner[addr]
        );
        self.owner[addr] = Some(label);
        self.lists[label].push_back(addr);
        self.free += 1;
    }

    /// Head of the cluster's free-list.
    pub fn pop(&mut self, label: usize) -> Option<usize> {
        let addr = self.lists.get_mut(label)?.pop_front()?;
        self.owner[addr] = None;
        self.free -= 1;
        Some(addr)
    }

    pub fn len_of(&self, label: usize) -> usize {
        self.lists.get(label).map_or(0, VecDeque::len)
    }

    pub fn total_free(&self) -> usize {
        self.free
    }

    pub fn contains(&self, addr: usize) -> bool {
        self.owner.get(addr).is_some_and(Option::is_some)
    }

    pub fn owner(&self, addr: usize) -> Option<usize> {
        self.owner.get(addr).copied().flatten()
    }

    pub fn list(&self, label: usize) -> impl Iterator<Item = usize> + '_ {
        self.lists[label].iter().copied()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.lists.iter().map(VecDeque::len).collect()
    }
}
