use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recmodel::{BlockOrder, ModelSpec};

/// A `kr × kc` compute tile: `kr` inputs by `kc` outputs per cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Kernel {
    pub kr: usize,
    pub kc: usize,
}

impl Kernel {
    pub const UNIT: Kernel = Kernel { kr: 1, kc: 1 };

    pub fn new(kr: usize, kc: usize) -> Self {
        Kernel { kr, kc }
    }

    pub fn area(self) -> u64 {
        (self.kr * self.kc) as u64
    }

    /// Checks `1 ≤ kr ≤ rows`, `1 ≤ kc ≤ cols`, both powers of two.
    pub fn check(self, layer: impl Into<String>, rows: usize, cols: usize) -> Result<()> {
        let ok = |k: usize, dim: usize| k >= 1 && k <= dim && k.is_power_of_two();
        if ok(self.kr, rows) && ok(self.kc, cols) {
            Ok(())
        } else {
            Err(Error::Kernel {
                layer: layer.into(),
                kr: self.kr,
                kc: self.kc,
                rows,
                cols,
            })
        }
    }

    /// The biggest power-of-two tile that fits a `rows × cols` layer.
    pub fn largest(rows: usize, cols: usize) -> Self {
        Kernel {
            kr: floor_pow2(rows),
            kc: floor_pow2(cols),
        }
    }
}

pub(crate) fn floor_pow2(n: usize) -> usize {
    if n == 0 {
        0
    } else {
        1 << (usize::BITS - 1 - n.leading_zeros())
    }
}

/// Kernel choice for every FC layer plus the EV-sum unit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelAssignment {
    pub bottom: Vec<Kernel>,
    pub top: Vec<Kernel>,
    /// Row dimension of the EV-sum tile. The sum unit adds whole vectors
    /// one at a time, so only `kr_e = 1` is meaningful.
    #[serde(default = "one")]
    pub kr_e: usize,
    pub kc_e: usize,
}

fn one() -> usize {
    1
}

impl KernelAssignment {
    pub fn uniform(spec: &ModelSpec, k: Kernel, kc_e: usize) -> Self {
        let fit = |(r, c): (usize, usize)| Kernel {
            kr: k.kr.min(floor_pow2(r)),
            kc: k.kc.min(floor_pow2(c)),
        };
        KernelAssignment {
            bottom: spec.bottom_shapes().into_iter().map(fit).collect(),
            top: spec.top_shapes().into_iter().map(fit).collect(),
            kr_e: 1,
            kc_e: kc_e.min(floor_pow2(spec.ev_dim())),
        }
    }

    pub fn minimal(spec: &ModelSpec) -> Self {
        Self::uniform(spec, Kernel::UNIT, 1)
    }

    /// Every layer at its largest fitting tile.
    pub fn maximal(spec: &ModelSpec) -> Self {
        let big = |(r, c): (usize, usize)| Kernel::largest(r, c);
        KernelAssignment {
            bottom: spec.bottom_shapes().into_iter().map(big).collect(),
            top: spec.top_shapes().into_iter().map(big).collect(),
            kr_e: 1,
            kc_e: floor_pow2(spec.ev_dim()),
        }
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        let bs = spec.bottom_shapes();
        let ts = spec.top_shapes();
        if self.bottom.len() != bs.len() {
            return Err(Error::shape("bottom kernel list", bs.len(), self.bottom.len()));
        }
        if self.top.len() != ts.len() {
            return Err(Error::shape("top kernel list", ts.len(), self.top.len()));
        }
        for (i, (k, &(r, c))) in self.bottom.iter().zip(&bs).enumerate() {
            k.check(format!("bottom[{i}]"), r, c)?;
        }
        for (i, (k, &(r, c))) in self.top.iter().zip(&ts).enumerate() {
            k.check(format!("top[{i}]"), r, c)?;
        }
        if self.kr_e != 1 {
            return Err(Error::param(format!("EV-sum kernel row size must be 1, got {}", self.kr_e)));
        }
        Kernel::new(1, self.kc_e).check("ev_sum", 1, spec.ev_dim())
    }

    /// Total tile area, `Σ kr·kc` over all FC layers plus `kr_e·kc_e`.
    pub fn objective(&self) -> u64 {
        self.bottom.iter().chain(&self.top).map(|k| k.area()).sum::<u64>() + (self.kr_e * self.kc_e) as u64
    }

    /// Summation order implied by these kernels.
    pub fn block_order(&self) -> BlockOrder {
        BlockOrder {
            bottom: self.bottom.iter().map(|k| k.kr).collect(),
            top: self.top.iter().map(|k| k.kr).collect(),
        }
    }

    /// Flat kernel list, bottom then top then `(kr_e, kc_e)`; the search
    /// breaks ties by comparing these lexicographically.
    pub fn flat(&self) -> Vec<(usize, usize)> {
        self.bottom
            .iter()
            .chain(&self.top)
            .map(|k| (k.kr, k.kc))
            .chain(std::iter::once((self.kr_e, self.kc_e)))
            .collect()
    }
}

/// Cycles for one FC layer over a batch: one tile issued per cycle plus
/// the adder-tree fill, paid once.
pub fn fc_cycles(inputs: usize, outputs: usize, kernel: Kernel, batch: usize) -> Result<u64> {
    kernel.check("fc", inputs, outputs)?;
    Ok(fc_cycles_unchecked(inputs, outputs, kernel, batch))
}

pub(crate) fn fc_cycles_unchecked(inputs: usize, outputs: usize, kernel: Kernel, batch: usize) -> u64 {
    (inputs.div_ceil(kernel.kr) * outputs.div_ceil(kernel.kc) * batch) as u64 + tree_depth(kernel.kr)
}

/// `ceil(log2(max(kr, 2)))`.
pub fn tree_depth(kr: usize) -> u64 {
    let k = kr.max(2);
    (usize::BITS - (k - 1).leading_zeros()) as u64
}
