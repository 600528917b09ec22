//! Recommendation-model structure and the functional reference path.
//!
//! Every simulated configuration is checked against [`reference_inference`].
//! Summation orders are normative: dot products accumulate from `0.0` in
//! ascending input order and the bias is added once the sum completes;
//! embedding lookups fold rows left-to-right in index-position order.

mod io;
pub mod presets;
mod workload;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_model_spec, read_table_file, save_model_spec, write_table_file};
pub use workload::{generate_workload, IndexDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSpec {
    pub rows: usize,
    pub ev_dim: usize,
}

impl TableSpec {
    /// Bytes of one embedding vector (FP32).
    pub fn ev_bytes(&self) -> usize {
        self.ev_dim * 4
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interaction {
    #[default]
    Concatenation,
}

/// Shape of a recommendation model.
///
/// Layer lists hold output widths. The bottom MLP consumes `dense_dim`
/// features; the first top layer consumes the bottom output concatenated
/// with one pooled vector per table, so its input width is derived rather
/// than stored and cannot disagree with the rest of the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawModelSpec", into = "RawModelSpec")]
pub struct ModelSpec {
    name: String,
    dense_dim: usize,
    bottom_mlp: Vec<usize>,
    top_mlp: Vec<usize>,
    tables: Vec<TableSpec>,
    interaction: Interaction,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModelSpec {
    name: String,
    dense_dim: usize,
    bottom_mlp: Vec<usize>,
    top_mlp: Vec<usize>,
    #[serde(default)]
    interaction: Interaction,
    tables: Vec<TableSpec>,
}

impl TryFrom<RawModelSpec> for ModelSpec {
    type Error = Error;

    fn try_from(raw: RawModelSpec) -> Result<Self> {
        ModelSpec::new(raw.name, raw.dense_dim, raw.bottom_mlp, raw.top_mlp, raw.tables)
    }
}

impl From<ModelSpec> for RawModelSpec {
    fn from(spec: ModelSpec) -> Self {
        RawModelSpec {
            name: spec.name,
            dense_dim: spec.dense_dim,
            bottom_mlp: spec.bottom_mlp,
            top_mlp: spec.top_mlp,
            interaction: spec.interaction,
            tables: spec.tables,
        }
    }
}

impl ModelSpec {
    pub fn new(
        name: impl Into<String>,
        dense_dim: usize,
        bottom_mlp: Vec<usize>,
        top_mlp: Vec<usize>,
        tables: Vec<TableSpec>,
    ) -> Result<Self> {
        if dense_dim == 0 {
            return Err(Error::param("dense_dim must be >= 1"));
        }
        if bottom_mlp.is_empty() || top_mlp.is_empty() {
            return Err(Error::param("bottom and top MLPs need at least one layer"));
        }
        if bottom_mlp.iter().chain(&top_mlp).any(|&d| d == 0) {
            return Err(Error::param("all layer sizes must be >= 1"));
        }
        if *top_mlp.last().unwrap() != 1 {
            return Err(Error::shape("top MLP output width", 1, *top_mlp.last().unwrap()));
        }
        let Some(first) = tables.first() else {
            return Err(Error::param("model needs at least one embedding table"));
        };
        for (i, t) in tables.iter().enumerate() {
            if t.rows == 0 || t.ev_dim == 0 {
                return Err(Error::param(format!("table {i}: rows and ev_dim must be >= 1")));
            }
            if t.ev_dim != first.ev_dim {
                return Err(Error::shape(format!("table {i} ev_dim"), first.ev_dim, t.ev_dim));
            }
        }
        Ok(ModelSpec {
            name: name.into(),
            dense_dim,
            bottom_mlp,
            top_mlp,
            tables,
            interaction: Interaction::Concatenation,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dense_dim(&self) -> usize {
        self.dense_dim
    }

    pub fn tables(&self) -> &[TableSpec] {
        &self.tables
    }

    pub fn table_count(&self) -> usize {
        self.tables.len()
    }

    pub fn ev_dim(&self) -> usize {
        self.tables[0].ev_dim
    }

    pub fn interaction(&self) -> Interaction {
        self.interaction
    }

    /// Output width of the bottom MLP (R_b).
    pub fn bottom_out(&self) -> usize {
        *self.bottom_mlp.last().unwrap()
    }

    /// Width of the concatenated pooled embeddings (R_e = M · EV_dim).
    pub fn embedding_width(&self) -> usize {
        self.table_count() * self.ev_dim()
    }

    /// Input width of the first top-MLP layer (R = R_b + R_e).
    pub fn top_input(&self) -> usize {
        self.bottom_out() + self.embedding_width()
    }

    /// `(inputs, outputs)` for each bottom layer.
    pub fn bottom_shapes(&self) -> Vec<(usize, usize)> {
        chain_shapes(self.dense_dim, &self.bottom_mlp)
    }

    /// `(inputs, outputs)` for each top layer.
    pub fn top_shapes(&self) -> Vec<(usize, usize)> {
        chain_shapes(self.top_input(), &self.top_mlp)
    }

    pub fn total_table_bytes(&self) -> u64 {
        self.tables.iter().map(|t| (t.rows * t.ev_bytes()) as u64).sum()
    }

    /// Multiply-accumulates for one query through both MLPs.
    pub fn mlp_macs(&self) -> u64 {
        self.bottom_shapes()
            .iter()
            .chain(self.top_shapes().iter())
            .map(|&(r, c)| (r * c) as u64)
            .sum()
    }
}

fn chain_shapes(input: usize, dims: &[usize]) -> Vec<(usize, usize)> {
    let mut prev = input;
    dims.iter()
        .map(|&d| {
            let s = (prev, d);
            prev = d;
            s
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f32) -> f32 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Linear => x,
        }
    }
}

/// Fully connected layer with `outputs × inputs` row-major weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    inputs: usize,
    outputs: usize,
    weights: Vec<f32>,
    bias: Vec<f32>,
}

impl DenseLayer {
    pub fn new(inputs: usize, outputs: usize, weights: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::param("layer dimensions must be >= 1"));
        }
        if weights.len() != inputs * outputs {
            return Err(Error::shape("layer weights", inputs * outputs, weights.len()));
        }
        if bias.len() != outputs {
            return Err(Error::shape("layer bias", outputs, bias.len()));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::param("layer parameters must be finite"));
        }
        Ok(DenseLayer {
            inputs,
            outputs,
            weights,
            bias,
        })
    }

    /// Seeded weights and biases uniform in `[-1/√inputs, 1/√inputs)`, the
    /// usual fan-in scaled default for dense layers.
    pub fn random(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (inputs.max(1) as f32).sqrt();
        let weights = (0..inputs * outputs).map(|_| (rng.random::<f32>() * 2.0 - 1.0) * bound).collect();
        let bias = (0..outputs).map(|_| (rng.random::<f32>() * 2.0 - 1.0) * bound).collect();
        DenseLayer {
            inputs,
            outputs,
            weights,
            bias,
        }
    }

    pub fn identity(width: usize) -> Self {
        let mut weights = vec![0.0; width * width];
        for i in 0..width {
            weights[i * width + i] = 1.0;
        }
        DenseLayer {
            inputs: width,
            outputs: width,
            weights,
            bias: vec![0.0; width],
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    /// Weight row for output `c`.
    pub fn row(&self, c: usize) -> &[f32] {
        &self.weights[c * self.inputs..(c + 1) * self.inputs]
    }

    pub fn weight_bytes(&self) -> u64 {
        ((self.weights.len() + self.bias.len()) * 4) as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    spec: TableSpec,
    values: Vec<f32>,
}

impl EmbeddingTable {
    pub fn new(spec: TableSpec, values: Vec<f32>) -> Result<Self> {
        if values.len() != spec.rows * spec.ev_dim {
            return Err(Error::shape("embedding table values", spec.rows * spec.ev_dim, values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("embedding values must be finite"));
        }
        Ok(EmbeddingTable { spec, values })
    }

    pub fn random(spec: TableSpec, rng: &mut impl Rng) -> Self {
        let values = (0..spec.rows * spec.ev_dim).map(|_| rng.random::<f32>() - 0.5).collect();
        EmbeddingTable { spec, values }
    }

    pub fn spec(&self) -> TableSpec {
        self.spec
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, index: usize) -> &[f32] {
        &self.values[index * self.spec.ev_dim..(index + 1) * self.spec.ev_dim]
    }
}

/// A model with concrete parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    bottom: Vec<DenseLayer>,
    top: Vec<DenseLayer>,
    tables: Vec<EmbeddingTable>,
}

impl Model {
    pub fn new(
        spec: ModelSpec,
        bottom: Vec<DenseLayer>,
        top: Vec<DenseLayer>,
        tables: Vec<EmbeddingTable>,
    ) -> Result<Self> {
        check_chain("bottom MLP", &spec.bottom_shapes(), &bottom)?;
        check_chain("top MLP", &spec.top_shapes(), &top)?;
        if tables.len() != spec.table_count() {
            return Err(Error::shape("table count", spec.table_count(), tables.len()));
        }
        for (i, (t, s)) in tables.iter().zip(spec.tables()).enumerate() {
            if t.spec() != *s {
                return Err(Error::shape(format!("table {i} rows"), s.rows, t.spec().rows));
            }
        }
        Ok(Model {
            spec,
            bottom,
            top,
            tables,
        })
    }

    /// Parameters drawn from seeded generators: fan-in scaled layers, tables uniform in `[-0.5, 0.5)`.
    pub fn random(spec: ModelSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bottom = spec
            .bottom_shapes()
            .into_iter()
            .map(|(r, c)| DenseLayer::random(r, c, &mut rng))
            .collect();
        let top = spec
            .top_shapes()
            .into_iter()
            .map(|(r, c)| DenseLayer::random(r, c, &mut rng))
            .collect();
        let tables = spec
            .tables()
            .iter()
            .map(|&t| EmbeddingTable::random(t, &mut rng))
            .collect();
        Model {
            spec,
            bottom,
            top,
            tables,
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn bottom(&self) -> &[DenseLayer] {
        &self.bottom
    }

    pub fn top(&self) -> &[DenseLayer] {
        &self.top
    }

    pub fn tables(&self) -> &[EmbeddingTable] {
        &self.tables
    }

    pub fn weight_bytes(&self) -> u64 {
        self.bottom.iter().chain(&self.top).map(DenseLayer::weight_bytes).sum()
    }
}

fn check_chain(what: &str, shapes: &[(usize, usize)], layers: &[DenseLayer]) -> Result<()> {
    if shapes.len() != layers.len() {
        return Err(Error::shape(format!("{what} layer count"), shapes.len(), layers.len()));
    }
    for (i, (&(r, c), l)) in shapes.iter().zip(layers).enumerate() {
        if l.inputs() != r {
            return Err(Error::shape(format!("{what} layer {i} inputs"), r, l.inputs()));
        }
        if l.outputs() != c {
            return Err(Error::shape(format!("{what} layer {i} outputs"), c, l.outputs()));
        }
    }
    Ok(())
}

/// One inference request: `pooling` indices per table plus dense features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub indices: Vec<Vec<usize>>,
    pub dense: Vec<f32>,
}

impl Query {
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if self.dense.len() != spec.dense_dim() {
            return Err(Error::shape("dense features", spec.dense_dim(), self.dense.len()));
        }
        if self.dense.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("dense features must be finite"));
        }
        if self.indices.len() != spec.table_count() {
            return Err(Error::shape("query index lists", spec.table_count(), self.indices.len()));
        }
        for (table, (idx, t)) in self.indices.iter().zip(spec.tables()).enumerate() {
            if idx.is_empty() {
                return Err(Error::param(format!("table {table}: query needs at least one index")));
            }
            if let Some(&index) = idx.iter().find(|&&i| i >= t.rows) {
                return Err(Error::IndexOutOfRange {
                    table,
                    index,
                    rows: t.rows,
                });
            }
        }
        Ok(())
    }

    pub fn lookups(&self) -> usize {
        self.indices.iter().map(Vec::len).sum()
    }
}

/// Element-wise sum of the selected rows, folded in position order.
pub fn ev_lookup_sum(table: &EmbeddingTable, table_id: usize, indices: &[usize]) -> Result<Vec<f32>> {
    if indices.is_empty() {
        return Err(Error::param(format!("table {table_id}: lookup needs at least one index")));
    }
    let rows = table.spec().rows;
    let mut acc = vec![0.0f32; table.spec().ev_dim];
    for &index in indices {
        if index >= rows {
            return Err(Error::IndexOutOfRange {
                table: table_id,
                index,
                rows,
            });
        }
        for (a, v) in acc.iter_mut().zip(table.row(index)) {
            *a += *v;
        }
    }
    Ok(acc)
}

/// Dense forward through one layer in the normative sequential order.
pub fn dense_forward(layer: &DenseLayer, input: &[f32], act: Activation) -> Result<Vec<f32>> {
    if input.len() != layer.inputs() {
        return Err(Error::shape("layer input", layer.inputs(), input.len()));
    }
    Ok((0..layer.outputs())
        .map(|c| {
            let mut acc = 0.0f32;
            for (w, x) in layer.row(c).iter().zip(input) {
                acc += w * x;
            }
            act.apply(acc + layer.bias()[c])
        })
        .collect())
}

/// Forward pass with ReLU between layers and `last` on the final layer.
pub fn mlp_forward(layers: &[DenseLayer], input: &[f32], last: Activation) -> Result<Vec<f32>> {
    let mut x = input.to_vec();
    for (i, layer) in layers.iter().enumerate() {
        let act = if i + 1 == layers.len() { last } else { Activation::Relu };
        x = dense_forward(layer, &x, act)?;
    }
    Ok(x)
}

/// Bottom MLP over dense features. Its output feeds the interaction as a
/// hidden representation, so every bottom layer is ReLU-activated.
pub fn bottom_forward(model: &Model, dense: &[f32]) -> Result<Vec<f32>> {
    mlp_forward(model.bottom(), dense, Activation::Relu)
}

/// Concatenated per-table pooled vectors in table order.
pub fn pooled_embeddings(model: &Model, query: &Query) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(model.spec().embedding_width());
    for (t, (table, idx)) in model.tables().iter().zip(&query.indices).enumerate() {
        out.extend(ev_lookup_sum(table, t, idx)?);
    }
    Ok(out)
}

/// Scalar score in the normative sequential order.
pub fn reference_inference(model: &Model, query: &Query) -> Result<f32> {
    query.validate(model.spec())?;
    let mut x = bottom_forward(model, &query.dense)?;
    x.extend(pooled_embeddings(model, query)?);
    let out = mlp_forward(model.top(), &x, Activation::Linear)?;
    Ok(out[0])
}

/// Per-layer adder-tree widths used by the blocked accumulation order.
///
/// In the blocked order each dot product is cut into consecutive blocks of
/// `kr` inputs; a block's products are reduced by a pairwise adder tree and
/// the block sums are accumulated left to right from `0.0`. The first top
/// layer is decomposed: blocks restart at the boundary between bottom-MLP
/// inputs and embedding inputs, with the embedding blocks continuing the
/// same accumulator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockOrder {
    pub bottom: Vec<usize>,
    pub top: Vec<usize>,
}

impl BlockOrder {
    /// All widths 1: identical to the sequential order.
    pub fn sequential(spec: &ModelSpec) -> Self {
        BlockOrder {
            bottom: vec![1; spec.bottom_shapes().len()],
            top: vec![1; spec.top_shapes().len()],
        }
    }
}

/// Scalar score in the blocked order, computed by straight scalar loops.
pub fn reference_inference_blocked(model: &Model, query: &Query, order: &BlockOrder) -> Result<f32> {
    query.validate(model.spec())?;
    if order.bottom.len() != model.bottom().len() {
        return Err(Error::shape("bottom block order", model.bottom().len(), order.bottom.len()));
    }
    if order.top.len() != model.top().len() {
        return Err(Error::shape("top block order", model.top().len(), order.top.len()));
    }
    let mut x = query.dense.clone();
    for (layer, &kr) in model.bottom().iter().zip(&order.bottom) {
        x = blocked_layer(layer, &x, kr, None, Activation::Relu);
    }
    let split = x.len();
    x.extend(pooled_embeddings(model, query)?);
    let n = model.top().len();
    for (i, (layer, &kr)) in model.top().iter().zip(&order.top).enumerate() {
        let act = if i + 1 == n { Activation::Linear } else { Activation::Relu };
        let seg = if i == 0 { Some(split) } else { None };
        x = blocked_layer(layer, &x, kr, seg, act);
    }
    Ok(x[0])
}

fn blocked_layer(layer: &DenseLayer, x: &[f32], kr: usize, split: Option<usize>, act: Activation) -> Vec<f32> {
    let kr = kr.max(1);
    let segments: Vec<(usize, usize)> = match split {
        Some(s) if s > 0 && s < x.len() => vec![(0, s), (s, x.len())],
        _ => vec![(0, x.len())],
    };
    let mut products = Vec::with_capacity(kr);
    (0..layer.outputs())
        .map(|c| {
            let w = layer.row(c);
            let mut acc = 0.0f32;
            for &(lo, hi) in &segments {
                let mut start = lo;
                while start < hi {
                    let end = (start + kr).min(hi);
                    products.clear();
                    products.extend((start..end).map(|i| w[i] * x[i]));
                    acc += tree_sum(&mut products);
                    start = end;
                }
            }
            act.apply(acc + layer.bias()[c])
        })
        .collect()
}

/// Pairwise reduction, level by level; an odd trailing element is carried
/// up unchanged. Overwrites `level`.
fn tree_sum(level: &mut [f32]) -> f32 {
    let mut n = level.len();
    while n > 1 {
        for i in 0..n / 2 {
            level[i] = level[2 * i] + level[2 * i + 1];
        }
        if n % 2 == 1 {
            level[n / 2] = level[n - 1];
        }
        n = n.div_ceil(2);
    }
    level.first().copied().unwrap_or(0.0)
}

/// Relative closeness with a unit floor on the magnitude, so values near
/// zero are compared absolutely.
pub fn rel_close(a: f32, b: f32, tol: f64) -> bool {
    rel_err(a, b) <= tol
}

pub fn rel_err(a: f32, b: f32) -> f64 {
    let (a, b) = (a as f64, b as f64);
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}
