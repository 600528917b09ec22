//! SSD geometry, timing and a static page-striped FTL.

mod flash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::SimTime;

pub use flash::{simulate_reads, FlashRun, IoClass, PageCompletion, PageRead};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SsdGeometry {
    pub channels: usize,
    pub dies_per_channel: usize,
    pub page_size: usize,
    pub lba_size: usize,
    pub pages_per_block: usize,
}

impl Default for SsdGeometry {
    fn default() -> Self {
        SsdGeometry {
            channels: 8,
            dies_per_channel: 4,
            page_size: 4096,
            lba_size: 512,
            pages_per_block: 256,
        }
    }
}

impl SsdGeometry {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("channels", self.channels),
            ("dies_per_channel", self.dies_per_channel),
            ("page_size", self.page_size),
            ("lba_size", self.lba_size),
            ("pages_per_block", self.pages_per_block),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(Error::param(format!("geometry.{name} must be >= 1")));
        }
        if self.page_size % self.lba_size != 0 {
            return Err(Error::param(format!(
                "page_size {} is not a multiple of lba_size {}",
                self.page_size, self.lba_size
            )));
        }
        Ok(())
    }

    pub fn lbas_per_page(&self) -> u64 {
        (self.page_size / self.lba_size) as u64
    }

    pub fn dies(&self) -> usize {
        self.channels * self.dies_per_channel
    }

    /// Flat die index, channel-major.
    pub fn die_index(&self, channel: usize, die: usize) -> usize {
        channel * self.dies_per_channel + die
    }
}

/// Latency parameters. None of these come from measured hardware; the
/// defaults are desk-scale assumptions and every one can be overridden.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingParams {
    /// Flash array sense time per page.
    pub page_read_us: f64,
    pub channel_transfer_ns_per_byte: f64,
    /// Host DRAM hit for a resident embedding row.
    pub dram_hit_ns: f64,
    pub host_interface_ns_per_byte: f64,
    /// Clock of the in-storage MLP engine and EV-sum adder.
    pub fc_clock_mhz: f64,
    /// Host software stack cost per block I/O or device command.
    pub host_block_io_overhead_us: f64,
    /// Host CPU MLP throughput.
    pub host_mlp_macs_per_ns: f64,
    /// Fixed host cost per MLP layer invocation.
    pub host_mlp_layer_overhead_us: f64,
}

impl Default for TimingParams {
    fn default() -> Self {
        TimingParams {
            page_read_us: 50.0,
            channel_transfer_ns_per_byte: 0.4,
            dram_hit_ns: 100.0,
            host_interface_ns_per_byte: 0.25,
            fc_clock_mhz: 200.0,
            host_block_io_overhead_us: 10.0,
            host_mlp_macs_per_ns: 1.0,
            host_mlp_layer_overhead_us: 1.0,
        }
    }
}

impl TimingParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("page_read_us", self.page_read_us),
            ("channel_transfer_ns_per_byte", self.channel_transfer_ns_per_byte),
            ("dram_hit_ns", self.dram_hit_ns),
            ("host_interface_ns_per_byte", self.host_interface_ns_per_byte),
            ("fc_clock_mhz", self.fc_clock_mhz),
            ("host_block_io_overhead_us", self.host_block_io_overhead_us),
            ("host_mlp_macs_per_ns", self.host_mlp_macs_per_ns),
            ("host_mlp_layer_overhead_us", self.host_mlp_layer_overhead_us),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(format!("timing.{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn sense_time(&self) -> SimTime {
        SimTime::from_us_f64(self.page_read_us)
    }

    pub fn channel_transfer(&self, bytes: usize) -> SimTime {
        SimTime::from_ns_f64(bytes as f64 * self.channel_transfer_ns_per_byte)
    }

    pub fn host_transfer(&self, bytes: usize) -> SimTime {
        SimTime::from_ns_f64(bytes as f64 * self.host_interface_ns_per_byte)
    }

    pub fn host_overhead(&self) -> SimTime {
        SimTime::from_us_f64(self.host_block_io_overhead_us)
    }

    pub fn dram_hit(&self) -> SimTime {
        SimTime::from_ns_f64(self.dram_hit_ns)
    }

    pub fn cycles(&self, cycles: u64) -> SimTime {
        SimTime::from_cycles(cycles, self.fc_clock_mhz)
    }

    /// Sense plus full-page channel transfer.
    pub fn page_read_time(&self, page_size: usize) -> SimTime {
        self.sense_time() + self.channel_transfer(page_size)
    }

    /// Host-side MLP cost for `batch` queries over layers of `shapes`.
    pub fn host_mlp_time(&self, shapes: &[(usize, usize)], batch: usize) -> SimTime {
        shapes
            .iter()
            .map(|&(r, c)| {
                let macs = (r * c * batch) as f64;
                SimTime::from_ns_f64(macs / self.host_mlp_macs_per_ns)
                    + SimTime::from_us_f64(self.host_mlp_layer_overhead_us)
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PhysAddr {
    pub channel: usize,
    pub die: usize,
    /// Page index within the die.
    pub page: u64,
    /// Byte offset within the page.
    pub offset: usize,
}

/// Static round-robin page striping over `(channel, die)`.
///
/// Physical page `p = lba · lba_size / page_size` lands on channel
/// `p mod channels`, die `(p / channels) mod dies_per_channel`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ftl {
    geometry: SsdGeometry,
    lbas: u64,
}

impl Ftl {
    pub fn new(geometry: SsdGeometry, lbas: u64) -> Result<Self> {
        geometry.validate()?;
        if lbas == 0 {
            return Err(Error::param("FTL needs at least one provisioned lba"));
        }
        Ok(Ftl { geometry, lbas })
    }

    pub fn geometry(&self) -> &SsdGeometry {
        &self.geometry
    }

    pub fn lbas(&self) -> u64 {
        self.lbas
    }

    pub fn pages(&self) -> u64 {
        self.lbas.div_ceil(self.geometry.lbas_per_page())
    }

    pub fn translate(&self, lba: u64) -> Result<PhysAddr> {
        if lba >= self.lbas {
            return Err(Error::LbaOutOfRange {
                lba,
                provisioned: self.lbas,
            });
        }
        let g = &self.geometry;
        let byte = lba * g.lba_size as u64;
        let p = byte / g.page_size as u64;
        let ch = g.channels as u64;
        let dies = g.dies_per_channel as u64;
        Ok(PhysAddr {
            channel: (p % ch) as usize,
            die: ((p / ch) % dies) as usize,
            page: p / (ch * dies),
            offset: (byte % g.page_size as u64) as usize,
        })
    }

    /// Inverse of [`translate`](Self::translate).
    pub fn lba_of(&self, addr: PhysAddr) -> Result<u64> {
        let g = &self.geometry;
        if addr.channel >= g.channels || addr.die >= g.dies_per_channel || addr.offset >= g.page_size {
            return Err(Error::param(format!("physical address {addr:?} outside geometry")));
        }
        let ch = g.channels as u64;
        let dies = g.dies_per_channel as u64;
        let p = addr.page * ch * dies + addr.die as u64 * ch + addr.channel as u64;
        let lba = (p * g.page_size as u64 + addr.offset as u64) / g.lba_size as u64;
        if lba >= self.lbas {
            return Err(Error::LbaOutOfRange {
                lba,
                provisioned: self.lbas,
            });
        }
        Ok(lba)
    }
}

/// Latency of a host block read of `len` bytes starting at `lba` on an
/// otherwise idle device: host stack overhead, page reads on every touched
/// page (dies in parallel, each channel bus serialized), then the host
/// interface transfer.
pub fn host_block_read(ftl: &Ftl, timing: &TimingParams, lba: u64, len: usize) -> Result<SimTime> {
    let reads = block_read_pages(ftl, lba, len, SimTime::ZERO)?;
    let run = simulate_reads(ftl.geometry(), timing, &reads);
    Ok(timing.host_overhead() + run.makespan + timing.host_transfer(len))
}

/// Page reads touched by a block read, in ascending page order.
pub fn block_read_pages(ftl: &Ftl, lba: u64, len: usize, arrival: SimTime) -> Result<Vec<PageRead>> {
    if len == 0 {
        return Err(Error::param("block read length must be >= 1"));
    }
    let g = ftl.geometry();
    let first_byte = lba * g.lba_size as u64;
    let last_byte = first_byte + len as u64 - 1;
    let last_lba = last_byte / g.lba_size as u64;
    // range check both ends
    ftl.translate(lba)?;
    ftl.translate(last_lba)?;
    let first_page = first_byte / g.page_size as u64;
    let last_page = last_byte / g.page_size as u64;
    (first_page..=last_page)
        .map(|p| {
            let target = ftl.translate(p * g.lbas_per_page())?;
            Ok(PageRead {
                target,
                class: IoClass::Block,
                arrival,
            })
        })
        .collect()
}
