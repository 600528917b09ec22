use super::kernel::{Kernel, KernelAssignment};
use crate::error::{Error, Result};
use crate::recmodel::{Activation, DenseLayer, Model};

/// In-place adder tree over `v`: stride 1, 2, 4, ... with each slot `i`
/// absorbing slot `i + stride`.
fn adder_tree(v: &mut [f32]) -> f32 {
    let mut stride = 1;
    while stride < v.len() {
        let mut i = 0;
        while i + stride < v.len() {
            v[i] += v[i + stride];
            i += 2 * stride;
        }
        stride *= 2;
    }
    v.first().copied().unwrap_or(0.0)
}

/// Adds the tiled products of `layer`'s weights restricted to input
/// columns `col0..col0 + x.len()` onto `acc`. Tiles are visited in
/// row-major block order and input blocks restart at `col0`.
fn accumulate(layer: &DenseLayer, col0: usize, x: &[f32], kernel: Kernel, acc: &mut [f32]) {
    let kr = kernel.kr.max(1);
    let kc = kernel.kc.max(1);
    let mut lanes = vec![0.0f32; kr];
    for c0 in (0..layer.outputs()).step_by(kc) {
        for r0 in (0..x.len()).step_by(kr) {
            let r1 = (r0 + kr).min(x.len());
            for (c, a) in acc.iter_mut().enumerate().take((c0 + kc).min(layer.outputs())).skip(c0) {
                let w = &layer.row(c)[col0..];
                let lane = &mut lanes[..r1 - r0];
                for (k, l) in lane.iter_mut().enumerate() {
                    *l = w[r0 + k] * x[r0 + k];
                }
                *a += adder_tree(lane);
            }
        }
    }
}

fn finish(layer: &DenseLayer, acc: Vec<f32>, act: Activation) -> Vec<f32> {
    acc.into_iter().zip(layer.bias()).map(|(a, b)| act.apply(a + b)).collect()
}

pub fn fc_forward_blocked(layer: &DenseLayer, kernel: Kernel, x: &[f32], act: Activation) -> Result<Vec<f32>> {
    if x.len() != layer.inputs() {
        return Err(Error::shape("blocked FC input", layer.inputs(), x.len()));
    }
    let mut acc = vec![0.0f32; layer.outputs()];
    accumulate(layer, 0, x, kernel, &mut acc);
    Ok(finish(layer, acc, act))
}

/// Forward pass through `layers` with ReLU between layers and `last` on
/// the output.
pub fn mlp_forward_blocked(layers: &[DenseLayer], kernels: &[Kernel], input: &[f32], last: Activation) -> Result<Vec<f32>> {
    if kernels.len() != layers.len() {
        return Err(Error::shape("kernel list", layers.len(), kernels.len()));
    }
    let mut x = input.to_vec();
    for (i, (l, &k)) in layers.iter().zip(kernels).enumerate() {
        let act = if i + 1 == layers.len() { last } else { Activation::Relu };
        x = fc_forward_blocked(l, k, &x, act)?;
    }
    Ok(x)
}

/// First top layer split by input columns into a bottom-fed part and an
/// embedding-fed part.
#[derive(Debug, Clone, PartialEq)]
pub struct L0Split {
    /// `C × R_b`, zero bias.
    pub w_b: DenseLayer,
    /// `C × R_e`, carrying the original bias.
    pub w_e: DenseLayer,
}

pub fn decompose_l0(l0: &DenseLayer, r_b: usize, r_e: usize) -> Result<L0Split> {
    if r_b + r_e != l0.inputs() || r_b == 0 || r_e == 0 {
        return Err(Error::param(format!(
            "split {r_b} + {r_e} does not partition {} inputs",
            l0.inputs()
        )));
    }
    let c = l0.outputs();
    let mut wb = Vec::with_capacity(c * r_b);
    let mut we = Vec::with_capacity(c * r_e);
    for o in 0..c {
        let row = l0.row(o);
        wb.extend_from_slice(&row[..r_b]);
        we.extend_from_slice(&row[r_b..]);
    }
    Ok(L0Split {
        w_b: DenseLayer::new(r_b, c, wb, vec![0.0; c])?,
        w_e: DenseLayer::new(r_e, c, we, l0.bias().to_vec())?,
    })
}

impl L0Split {
    /// Raw accumulators `W_b·b`, with no bias or activation.
    pub fn bottom_partial(&self, b: &[f32], kernel: Kernel) -> Result<Vec<f32>> {
        if b.len() != self.w_b.inputs() {
            return Err(Error::shape("L0 bottom input", self.w_b.inputs(), b.len()));
        }
        let mut acc = vec![0.0f32; self.w_b.outputs()];
        accumulate(&self.w_b, 0, b, kernel, &mut acc);
        Ok(acc)
    }

    /// Continues `partial` with `W_e·e`, then adds the bias and applies `act`.
    pub fn complete(&self, mut partial: Vec<f32>, e: &[f32], kernel: Kernel, act: Activation) -> Result<Vec<f32>> {
        if e.len() != self.w_e.inputs() {
            return Err(Error::shape("L0 embedding input", self.w_e.inputs(), e.len()));
        }
        if partial.len() != self.w_e.outputs() {
            return Err(Error::shape("L0 partial sums", self.w_e.outputs(), partial.len()));
        }
        accumulate(&self.w_e, 0, e, kernel, &mut partial);
        Ok(finish(&self.w_e, partial, act))
    }

    pub fn evaluate(&self, b: &[f32], e: &[f32], kernel: Kernel, act: Activation) -> Result<Vec<f32>> {
        let p = self.bottom_partial(b, kernel)?;
        self.complete(p, e, kernel, act)
    }
}

/// The device's MLP pipeline for one model and kernel assignment, with
/// the first top layer already decomposed.
#[derive(Debug, Clone)]
pub struct DeviceStages<'a> {
    model: &'a Model,
    kernels: &'a KernelAssignment,
    split: L0Split,
}

impl<'a> DeviceStages<'a> {
    pub fn new(model: &'a Model, kernels: &'a KernelAssignment) -> Result<Self> {
        let s = model.spec();
        let split = decompose_l0(&model.top()[0], s.bottom_out(), s.embedding_width())?;
        Ok(DeviceStages { model, kernels, split })
    }

    /// Bottom MLP followed by the bottom-fed part of the first top layer.
    /// Returns the L0 partial sums.
    pub fn bottom(&self, dense: &[f32]) -> Result<Vec<f32>> {
        let b = mlp_forward_blocked(self.model.bottom(), &self.kernels.bottom, dense, Activation::Relu)?;
        self.split.bottom_partial(&b, self.kernels.top[0])
    }

    /// Finishes L0 from the pooled embeddings and runs the remaining top
    /// layers.
    pub fn top(&self, partial: Vec<f32>, pooled: &[f32]) -> Result<f32> {
        let top = self.model.top();
        let l0_act = if top.len() == 1 { Activation::Linear } else { Activation::Relu };
        let h = self.split.complete(partial, pooled, self.kernels.top[0], l0_act)?;
        let out = if top.len() == 1 {
            h
        } else {
            mlp_forward_blocked(&top[1..], &self.kernels.top[1..], &h, Activation::Linear)?
        };
        Ok(out[0])
    }
}

/// Device-side bottom stage: bottom MLP followed by the bottom-fed part of
/// the first top layer. Returns the L0 partial sums.
pub fn bottom_stage(model: &Model, a: &KernelAssignment, dense: &[f32]) -> Result<Vec<f32>> {
    DeviceStages::new(model, a)?.bottom(dense)
}

/// Device-side top stage: finishes L0 from the pooled embeddings and runs
/// the remaining top layers.
pub fn top_stage(model: &Model, a: &KernelAssignment, partial: Vec<f32>, pooled: &[f32]) -> Result<f32> {
    DeviceStages::new(model, a)?.top(partial, pooled)
}
