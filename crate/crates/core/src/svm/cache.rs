use alloc::rc::Rc;
use alloc::vec::Vec;

/// Least-recently-used cache of kernel matrix rows.
pub(crate) struct KernelCache {
    rows: Vec<Option<Rc<[f64]>>>,
    last_used: Vec<u64>,
    clock: u64,
    live: usize,
    capacity: usize,
}

impl KernelCache {
    pub(crate) fn new(n: usize, budget_bytes: usize) -> Self {
        let row_bytes = (n * core::mem::size_of::<f64>()).max(1);
        KernelCache {
            rows: alloc::vec![None; n],
            last_used: alloc::vec![0; n],
            clock: 0,
            live: 0,
            capacity: (budget_bytes / row_bytes).max(2),
        }
    }

    pub(crate) fn get(&mut self, i: usize, compute: impl FnOnce() -> Vec<f64>) -> Rc<[f64]> {
        self.clock += 1;
        self.last_used[i] = self.clock;
        if let Some(row) = &self.rows[i] {
            return Rc::clone(row);
        }
        if self.live >= self.capacity {
            let victim =
                (0..self.rows.len()).filter(|&k| k != i && self.rows[k].is_some()).min_by_key(|&k| self.last_used[k]);
            if let Some(v) = victim {
                self.rows[v] = None;
                self.live -= 1;
            }
        }
        let row: Rc<[f64]> = compute().into();
        self.rows[i] = Some(Rc::clone(&row));
        self.live += 1;
        row
    }
}
