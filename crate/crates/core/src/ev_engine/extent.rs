use serde::Serialize;

use crate::error::{Error, Result};
use crate::recmodel::TableSpec;
use crate::storage::SsdGeometry;

/// A contiguous run of logical blocks holding part of a table file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FileExtent {
    pub start_lba: u64,
    pub lba_count: u64,
}

/// Embedding indices `[index_start, index_start + index_count)` stored from
/// `start_lba` onwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Extent {
    pub index_start: usize,
    pub index_count: usize,
    pub start_lba: u64,
}

/// Index-to-LBA mapping for one table.
///
/// Rows are packed `rows_per_page` to a page and padded at page ends, so an
/// embedding vector never straddles a page or an extent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TableExtents {
    pub rows: usize,
    pub ev_bytes: usize,
    pub rows_per_page: usize,
    pub lbas_per_page: u64,
    pub extents: Vec<Extent>,
}

impl TableExtents {
    /// `(page-start lba, byte offset within the page)` for `index`.
    pub fn locate(&self, table_id: usize, index: usize) -> Result<(u64, usize)> {
        if index >= self.rows {
            return Err(Error::IndexOutOfRange {
                table: table_id,
                index,
                rows: self.rows,
            });
        }
        let k = self.extents.partition_point(|e| e.index_start <= index) - 1;
        let e = &self.extents[k];
        let local = index - e.index_start;
        let lba = e.start_lba + (local / self.rows_per_page) as u64 * self.lbas_per_page;
        Ok((lba, (local % self.rows_per_page) * self.ev_bytes))
    }

    /// Page-padded file length in pages.
    pub fn file_pages(&self) -> u64 {
        self.rows.div_ceil(self.rows_per_page) as u64
    }
}

/// Number of pages a table occupies once rows are padded to page boundaries.
pub fn table_pages(spec: TableSpec, geometry: &SsdGeometry) -> Result<u64> {
    let rpp = rows_per_page(spec, geometry)?;
    Ok(spec.rows.div_ceil(rpp) as u64)
}

fn rows_per_page(spec: TableSpec, geometry: &SsdGeometry) -> Result<usize> {
    let ev_bytes = spec.ev_bytes();
    if ev_bytes > geometry.page_size {
        return Err(Error::Extent(format!(
            "embedding vector of {ev_bytes} B exceeds page size {}",
            geometry.page_size
        )));
    }
    Ok(geometry.page_size / ev_bytes)
}

/// Derives index ranges from the file's extents and the fixed EV width.
pub fn build_extent_map(spec: TableSpec, file_extents: &[FileExtent], geometry: &SsdGeometry) -> Result<TableExtents> {
    geometry.validate()?;
    let rpp = rows_per_page(spec, geometry)?;
    let lpp = geometry.lbas_per_page();
    let mut extents = Vec::new();
    let mut next_index = 0usize;
    for fe in file_extents {
        if next_index >= spec.rows {
            break;
        }
        if fe.lba_count == 0 || fe.start_lba % lpp != 0 || fe.lba_count % lpp != 0 {
            return Err(Error::Extent(format!("extent {fe:?} is not page aligned")));
        }
        let pages = (fe.lba_count / lpp) as usize;
        let count = (pages * rpp).min(spec.rows - next_index);
        extents.push(Extent {
            index_start: next_index,
            index_count: count,
            start_lba: fe.start_lba,
        });
        next_index += count;
    }
    if next_index < spec.rows {
        return Err(Error::Extent(format!(
            "extents hold {next_index} of {} rows",
            spec.rows
        )));
    }
    Ok(TableExtents {
        rows: spec.rows,
        ev_bytes: spec.ev_bytes(),
        rows_per_page: rpp,
        lbas_per_page: lpp,
        extents,
    })
}

/// Extent maps of every table, indexed by table id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExtentMap {
    pub tables: Vec<TableExtents>,
}

impl ExtentMap {
    pub fn translate_index(&self, table_id: usize, index: usize) -> Result<(u64, usize)> {
        let t = self
            .tables
            .get(table_id)
            .ok_or_else(|| Error::param(format!("unknown table {table_id}")))?;
        t.locate(table_id, index)
    }
}
