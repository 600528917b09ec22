use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use super::{ModelSpec, Query};
use crate::error::{Error, Result};

/// How lookup indices are drawn within each table.
///
/// Under `Zipf` the popularity rank follows table order: index 0 is the
/// hottest row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IndexDistribution {
    Uniform,
    Zipf { s: f64 },
}

impl IndexDistribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            IndexDistribution::Zipf { s } if !(s > 0.0 && s.is_finite()) => {
                Err(Error::param(format!("zipf exponent must be > 0, got {s}")))
            }
            _ => Ok(()),
        }
    }
}

enum Sampler {
    Uniform(usize),
    Zipf(Zipf<f64>),
}

impl Sampler {
    fn draw(&self, rng: &mut ChaCha8Rng) -> usize {
        match self {
            Sampler::Uniform(rows) => rng.random_range(0..*rows),
            Sampler::Zipf(z) => z.sample(rng) as usize - 1,
        }
    }
}

/// Seeded query stream: `pooling` indices per table, dense features in `[0, 1)`.
pub fn generate_workload(
    spec: &ModelSpec,
    dist: IndexDistribution,
    pooling: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<Query>> {
    if count == 0 {
        return Err(Error::param("query count must be >= 1"));
    }
    if pooling == 0 {
        return Err(Error::param("pooling must be >= 1"));
    }
    dist.validate()?;
    let samplers = spec
        .tables()
        .iter()
        .map(|t| match dist {
            IndexDistribution::Uniform => Ok(Sampler::Uniform(t.rows)),
            IndexDistribution::Zipf { s } => Zipf::new(t.rows as f64, s)
                .map(Sampler::Zipf)
                .map_err(|e| Error::param(format!("zipf: {e}"))),
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let indices = samplers
                .iter()
                .map(|s| (0..pooling).map(|_| s.draw(&mut rng)).collect())
                .collect();
            let dense = (0..spec.dense_dim()).map(|_| rng.random::<f32>()).collect();
            Query { indices, dense }
        })
        .collect())
}
