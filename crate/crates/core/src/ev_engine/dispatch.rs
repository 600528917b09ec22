use std::collections::HashMap;

use serde::Serialize;

use super::extent::ExtentMap;
use crate::error::Result;
use crate::recmodel::Query;
use crate::storage::{Ftl, IoClass, PageRead, PhysAddr, SsdGeometry};
use crate::time::SimTime;

/// One embedding-vector fetch after translation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EvRequest {
    pub query: usize,
    pub table: usize,
    /// Position within the query's index list for `table`.
    pub position: usize,
    pub index: usize,
    /// Page-start lba and byte offset of the vector.
    pub lba: u64,
    pub offset: usize,
    pub target: PhysAddr,
    pub issue: SimTime,
}

/// Translates every lookup of a batch, ordered by query, table, position.
pub fn translate_batch(map: &ExtentMap, ftl: &Ftl, queries: &[Query], issue: SimTime) -> Result<Vec<EvRequest>> {
    let mut out = Vec::with_capacity(queries.iter().map(Query::lookups).sum());
    for (qid, q) in queries.iter().enumerate() {
        for (table, idx) in q.indices.iter().enumerate() {
            for (position, &index) in idx.iter().enumerate() {
                let (lba, offset) = map.translate_index(table, index)?;
                let target = ftl.translate(lba)?;
                out.push(EvRequest {
                    query: qid,
                    table,
                    position,
                    index,
                    lba,
                    offset,
                    target,
                    issue,
                });
            }
        }
    }
    Ok(out)
}

/// A page read shared by every request that lands on the page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PageJob {
    /// Page address (offset 0).
    pub target: PhysAddr,
    pub lba: u64,
    /// Indices into the request slice.
    pub requests: Vec<usize>,
}

/// Pending page reads keyed by physical page; a page is listed once no
/// matter how many requests map onto it.
#[derive(Debug, Default)]
pub struct PathBuffer {
    slots: HashMap<(usize, usize, u64), usize>,
    pages: Vec<PageJob>,
}

impl PathBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn log(&mut self, request_id: usize, req: &EvRequest) {
        let t = req.target;
        let key = (t.channel, t.die, t.page);
        match self.slots.get(&key) {
            Some(&slot) => self.pages[slot].requests.push(request_id),
            None => {
                self.slots.insert(key, self.pages.len());
                self.pages.push(PageJob {
                    target: PhysAddr { offset: 0, ..t },
                    lba: req.lba,
                    requests: vec![request_id],
                });
            }
        }
    }

    pub fn len(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }
}

/// Coalesced page reads in first-arrival order, plus the queue each die
/// will serve.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DispatchPlan {
    pub pages: Vec<PageJob>,
    /// Page-job ids per die (channel-major), in queue order.
    pub per_die: Vec<Vec<usize>>,
}

impl DispatchPlan {
    pub fn page_reads(&self, arrival: SimTime) -> Vec<PageRead> {
        self.pages
            .iter()
            .map(|p| PageRead {
                target: p.target,
                class: IoClass::Ev,
                arrival,
            })
            .collect()
    }

    pub fn die_loads(&self) -> Vec<usize> {
        self.per_die.iter().map(Vec::len).collect()
    }
}

pub fn dispatch(requests: &[EvRequest], path: &mut PathBuffer, geometry: &SsdGeometry) -> DispatchPlan {
    for (i, r) in requests.iter().enumerate() {
        path.log(i, r);
    }
    let pages = std::mem::take(&mut path.pages);
    path.slots.clear();
    let mut per_die = vec![Vec::new(); geometry.dies()];
    for (j, p) in pages.iter().enumerate() {
        per_die[geometry.die_index(p.target.channel, p.target.die)].push(j);
    }
    DispatchPlan { pages, per_die }
}
