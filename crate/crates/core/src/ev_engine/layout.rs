//! Places embedding table files on the device and keeps their bytes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::extent::{build_extent_map, table_pages, ExtentMap, FileExtent};
use crate::error::Result;
use crate::recmodel::Model;
use crate::storage::{Ftl, SsdGeometry};

/// Logical contents of the device, addressed by LBA.
#[derive(Debug, Clone)]
pub struct FlashImage {
    lba_size: usize,
    data: Vec<u8>,
}

impl FlashImage {
    pub fn new(lbas: u64, lba_size: usize) -> Self {
        FlashImage {
            lba_size,
            data: vec![0; lbas as usize * lba_size],
        }
    }

    fn span(&self, lba: u64, offset: usize, len: usize) -> std::ops::Range<usize> {
        let start = lba as usize * self.lba_size + offset;
        start..start + len
    }

    pub fn write(&mut self, lba: u64, offset: usize, bytes: &[u8]) {
        let r = self.span(lba, offset, bytes.len());
        self.data[r].copy_from_slice(bytes);
    }

    pub fn read(&self, lba: u64, offset: usize, len: usize) -> &[u8] {
        &self.data[self.span(lba, offset, len)]
    }

    /// Decodes `dim` little-endian FP32 values.
    pub fn read_ev(&self, lba: u64, offset: usize, dim: usize) -> Vec<f32> {
        self.read(lba, offset, dim * 4)
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect()
    }
}

/// How table files are laid out in LBA space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Placement {
    /// Each table file is one extent, back to back.
    #[default]
    Contiguous,
    /// Each file is cut into `pieces` extents separated by random gaps.
    Fragmented { pieces: usize, seed: u64 },
}

/// A provisioned device: FTL, stored bytes, and the EV translator state.
#[derive(Debug, Clone)]
pub struct Device {
    pub geometry: SsdGeometry,
    pub ftl: Ftl,
    pub image: FlashImage,
    pub extents: ExtentMap,
    pub files: Vec<Vec<FileExtent>>,
}

impl Device {
    pub fn provision(model: &Model, geometry: SsdGeometry, placement: Placement) -> Result<Self> {
        geometry.validate()?;
        let lpp = geometry.lbas_per_page();
        let mut rng = match placement {
            Placement::Fragmented { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
            Placement::Contiguous => None,
        };
        let mut cursor_page = 0u64;
        let mut files = Vec::with_capacity(model.tables().len());
        for t in model.tables() {
            let pages = table_pages(t.spec(), &geometry)?;
            let pieces = match placement {
                Placement::Fragmented { pieces, .. } => (pieces.max(1) as u64).min(pages),
                Placement::Contiguous => 1,
            };
            let mut extents = Vec::new();
            let mut left = pages;
            for k in 0..pieces {
                let n = if k + 1 == pieces { left } else { pages / pieces };
                extents.push(FileExtent {
                    start_lba: cursor_page * lpp,
                    lba_count: n * lpp,
                });
                left -= n;
                cursor_page += n;
                if let Some(rng) = rng.as_mut() {
                    cursor_page += rng.random_range(1..8u64);
                }
            }
            files.push(extents);
        }
        // a fragmented file may list its extents out of LBA order
        if let Placement::Fragmented { .. } = placement {
            for f in files.iter_mut() {
                f.reverse();
            }
        }

        let lbas = cursor_page.max(1) * lpp;
        let ftl = Ftl::new(geometry, lbas)?;
        let tables = model
            .tables()
            .iter()
            .zip(&files)
            .map(|(t, f)| build_extent_map(t.spec(), f, &geometry))
            .collect::<Result<Vec<_>>>()?;
        let extents = ExtentMap { tables };

        let mut image = FlashImage::new(lbas, geometry.lba_size);
        for (tid, t) in model.tables().iter().enumerate() {
            for row in 0..t.spec().rows {
                let (lba, off) = extents.translate_index(tid, row)?;
                let bytes: Vec<u8> = t.row(row).iter().flat_map(|v| v.to_le_bytes()).collect();
                image.write(lba, off, &bytes);
            }
        }
        Ok(Device {
            geometry,
            ftl,
            image,
            extents,
            files,
        })
    }
}
