use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp_engine::KernelAssignment;
use crate::recmodel::ModelSpec;
use crate::time::SimTime;

/// Modeled FPGA cost. Logic scales with total tile area; BRAM holds layer
/// weights; layers that do not fit stream from DRAM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResourceModel {
    pub lut_per_mac: f64,
    pub ff_per_mac: f64,
    pub dsp_per_mac: f64,
    pub bram_bytes: u64,
    pub dram_bytes_per_s: f64,
}

impl Default for ResourceModel {
    fn default() -> Self {
        ResourceModel {
            lut_per_mac: 50.0,
            ff_per_mac: 60.0,
            dsp_per_mac: 2.0,
            bram_bytes: 4 << 20,
            dram_bytes_per_s: 16e9,
        }
    }
}

impl ResourceModel {
    pub fn validate(&self) -> Result<()> {
        let coef = [self.lut_per_mac, self.ff_per_mac, self.dsp_per_mac, self.dram_bytes_per_s];
        if coef.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::param("resource coefficients and DRAM bandwidth must be > 0"));
        }
        if self.bram_bytes == 0 {
            return Err(Error::param("bram_bytes must be > 0"));
        }
        Ok(())
    }

    /// Time to stream `bytes` of weights from DRAM.
    pub fn fetch_time(&self, bytes: u64) -> SimTime {
        SimTime((bytes as f64 / self.dram_bytes_per_s * 1e12).round() as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResourceUsage {
    pub lut: f64,
    pub ff: f64,
    /// Bytes of weights resident on chip.
    pub bram: u64,
    pub dsp: f64,
    /// Bytes of weights streamed from DRAM once per batch.
    pub dram: u64,
}

/// Which layers keep their weights on chip. Layers are taken in order,
/// bottom then top, until the next one does not fit; it and every later
/// layer stream from DRAM.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightPlacement {
    pub bottom_resident: Vec<bool>,
    pub top_resident: Vec<bool>,
    pub bottom_floor: Vec<SimTime>,
    pub top_floor: Vec<SimTime>,
    pub bram: u64,
    pub dram: u64,
}

/// FP32 weights plus bias.
pub fn layer_bytes(inputs: usize, outputs: usize) -> u64 {
    ((inputs * outputs + outputs) * 4) as u64
}

pub fn place_weights(spec: &ModelSpec, rm: &ResourceModel) -> WeightPlacement {
    let mut left = rm.bram_bytes;
    let mut spilling = false;
    let mut bram = 0;
    let mut dram = 0;
    let mut place = |shapes: Vec<(usize, usize)>| -> (Vec<bool>, Vec<SimTime>) {
        shapes
            .into_iter()
            .map(|(r, c)| {
                let bytes = layer_bytes(r, c);
                if !spilling && bytes <= left {
                    left -= bytes;
                    bram += bytes;
                    (true, SimTime::ZERO)
                } else {
                    spilling = true;
                    dram += bytes;
                    (false, rm.fetch_time(bytes))
                }
            })
            .unzip()
    };
    let (bottom_resident, bottom_floor) = place(spec.bottom_shapes());
    let (top_resident, top_floor) = place(spec.top_shapes());
    WeightPlacement {
        bottom_resident,
        top_resident,
        bottom_floor,
        top_floor,
        bram,
        dram,
    }
}

pub fn resource_usage(spec: &ModelSpec, a: &KernelAssignment, rm: &ResourceModel) -> ResourceUsage {
    let area = a.objective() as f64;
    let p = place_weights(spec, rm);
    ResourceUsage {
        lut: rm.lut_per_mac * area,
        ff: rm.ff_per_mac * area,
        bram: p.bram,
        dsp: rm.dsp_per_mac * area,
        dram: p.dram,
    }
}
