//! Exhaustive kernel-search oracle and random small instances.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rmssd::kernel_search::{place_weights, ResourceModel, StageTimer};
use rmssd::mlp_engine::{Kernel, KernelAssignment, StagePlans};
use rmssd::recmodel::{ModelSpec, TableSpec};
use rmssd::storage::TimingParams;
use rmssd::SimTime;

/// Embedding time that grows with the batch and shrinks with a wider adder.
#[derive(Clone, Copy, Debug)]
pub struct SyntheticEmb {
    pub base_ns: u64,
    pub per_add_ns: u64,
    pub ev_dim: usize,
}

impl StageTimer for SyntheticEmb {
    fn t_emb(&self, kc_e: usize, batch: usize) -> rmssd::Result<SimTime> {
        let adds = self.ev_dim.div_ceil(kc_e) as u64;
        Ok(SimTime::from_ns((self.base_ns + self.per_add_ns * adds) * batch as u64))
    }
}

pub fn pow2_tiles(r: usize, c: usize, sizes: &[usize]) -> Vec<Kernel> {
    let mut v = Vec::new();
    for &kr in sizes.iter().filter(|&&s| s <= r) {
        for &kc in sizes.iter().filter(|&&s| s <= c) {
            v.push(Kernel::new(kr, kc));
        }
    }
    v
}

pub fn cartesian(lists: &[Vec<Kernel>]) -> Vec<Vec<Kernel>> {
    let mut out = vec![Vec::new()];
    for l in lists {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                l.iter().map(move |k| {
                    let mut p = prefix.clone();
                    p.push(*k);
                    p
                })
            })
            .collect();
    }
    out
}

/// Exhaustive search: every assignment at every batch in doubling order.
pub fn enumerate(
    spec: &ModelSpec,
    timing: &TimingParams,
    rm: &ResourceModel,
    emb: &dyn StageTimer,
    sizes: &[usize],
    batches: &[usize],
) -> Option<(usize, KernelAssignment)> {
    let place = place_weights(spec, rm);
    let layers: Vec<Vec<Kernel>> = spec
        .bottom_shapes()
        .into_iter()
        .chain(spec.top_shapes())
        .map(|(r, c)| pow2_tiles(r, c, sizes))
        .collect();
    let nb = spec.bottom_shapes().len();
    let combos = cartesian(&layers);
    for &batch in batches {
        let mut best: Option<(u64, Vec<(usize, usize)>, KernelAssignment)> = None;
        for &kc_e in sizes.iter().filter(|&&s| s <= spec.ev_dim()) {
            let te = emb.t_emb(kc_e, batch).unwrap();
            for ks in &combos {
                let a = KernelAssignment {
                    bottom: ks[..nb].to_vec(),
                    top: ks[nb..].to_vec(),
                    kr_e: 1,
                    kc_e,
                };
                let plans = StagePlans::build(spec, &a, &place.bottom_floor, &place.top_floor).unwrap();
                let (tb, tt) = plans.times(batch, timing).unwrap();
                if tb <= te && tt <= te {
                    let key = (a.objective(), a.flat());
                    if best.as_ref().map_or(true, |(o, f, _)| (key.0, &key.1) < (*o, f)) {
                        best = Some((key.0, key.1, a));
                    }
                }
            }
        }
        if let Some((_, _, a)) = best {
            return Some((batch, a));
        }
    }
    None
}

pub struct Instance {
    pub spec: ModelSpec,
    pub rm: ResourceModel,
    pub emb: SyntheticEmb,
}

pub fn random_instance(rng: &mut ChaCha8Rng, max_dim: usize, max_layers: usize, max_combos: usize) -> Instance {
    loop {
        let nb = rng.random_range(1..max_layers);
        let nt = rng.random_range(1..=(max_layers - nb));
        let dim = |rng: &mut ChaCha8Rng| rng.random_range(1..=max_dim);
        let dense = dim(rng);
        let bottom: Vec<usize> = (0..nb).map(|_| dim(rng)).collect();
        let mut top: Vec<usize> = (0..nt - 1).map(|_| dim(rng)).collect();
        top.push(1);
        let ev_dim = [2usize, 4, 8][rng.random_range(0..3)];
        let tables = vec![TableSpec { rows: 10, ev_dim }; rng.random_range(1..=2)];
        let spec = ModelSpec::new("rand", dense, bottom, top, tables).unwrap();
        let combos: usize = spec
            .bottom_shapes()
            .into_iter()
            .chain(spec.top_shapes())
            .map(|(r, c)| pow2_tiles(r, c, &[1, 2, 4, 8]).len())
            .product();
        if combos > max_combos {
            continue;
        }
        let rm = if rng.random::<bool>() {
            ResourceModel {
                bram_bytes: rng.random_range(1..2000),
                dram_bytes_per_s: 1e8,
                ..ResourceModel::default()
            }
        } else {
            ResourceModel::default()
        };
        let emb = SyntheticEmb {
            base_ns: rng.random_range(20..1500),
            per_add_ns: rng.random_range(0..40),
            ev_dim,
        };
        return Instance { spec, rm, emb };
    }
}

impl std::fmt::Debug for Instance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?} bram={} {:?}", self.spec, self.rm.bram_bytes, self.emb)
    }
}

