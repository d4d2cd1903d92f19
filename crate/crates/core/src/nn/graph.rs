//! Tensor-level reverse-mode automatic differentiation.
//!
//! A [`ComputeGraph`] is built eagerly: every builder call evaluates its node
//! immediately and appends it, so node ids are already a topological order.
//! [`ComputeGraph::backward`] walks the list in reverse and accumulates
//! vector-Jacobian products into the inputs of each node.
//!
//! Complex quantities are carried as real tensors. For a complex-linear map
//! `L`, the gradient with respect to its input is `L^H` applied to the output
//! gradient (`d/dRe + i d/dIm`), which is how the encoding nodes propagate.

use std::sync::Arc;

use super::conv;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::kspace::EncodingOperator;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf { param: Option<usize> },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    /// Tensor times a scalar node.
    Scale(NodeId, NodeId),
    /// Real inner product, a scalar.
    Dot(NodeId, NodeId),
    /// Scalar quotient.
    Div(NodeId, NodeId),
    Relu(NodeId),
    Conv2d { x: NodeId, w: NodeId, b: NodeId },
    /// `E^H E x` on a `[2, ny, nz]` image.
    Normal { x: NodeId, op: Arc<EncodingOperator> },
    /// `E x`, image to interleaved `[ncoils, ny, nz, 2]` k-space.
    Encode { x: NodeId, op: Arc<EncodingOperator> },
    /// Normalized l1-l2 distance to a fixed reference.
    L1L2 { pred: NodeId, target: Arc<Tensor> },
}

impl Op {
    fn inputs(&self) -> Vec<NodeId> {
        match *self {
            Op::Leaf { .. } => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Scale(a, b) | Op::Dot(a, b) | Op::Div(a, b) => vec![a, b],
            Op::Relu(x) | Op::Normal { x, .. } | Op::Encode { x, .. } => vec![x],
            Op::Conv2d { x, w, b } => vec![x, w, b],
            Op::L1L2 { pred, .. } => vec![pred],
        }
    }

    fn tag(&self) -> &'static str {
        match self {
            Op::Leaf { .. } => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Scale(..) => "scale",
            Op::Dot(..) => "dot",
            Op::Div(..) => "div",
            Op::Relu(_) => "relu",
            Op::Conv2d { .. } => "conv2d",
            Op::Normal { .. } => "normal",
            Op::Encode { .. } => "encode",
            Op::L1L2 { .. } => "l1l2",
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

#[derive(Clone, Debug, Default)]
pub struct ComputeGraph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node it depends on.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(usize, NodeId)>,
}

impl Gradients {
    pub fn wrt(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient of parameter `index`, zero-filled when the loss does not
    /// depend on it. `None` if the parameter was never placed in the graph.
    pub fn param(&self, index: usize, graph: &ComputeGraph) -> Option<Tensor> {
        let &(_, id) = self.params.iter().find(|(i, _)| *i == index)?;
        Some(self.wrt(id).cloned().unwrap_or_else(|| Tensor::zeros(graph.value(id).shape())))
    }

    /// Dense list of parameter gradients indexed by parameter slot.
    pub fn param_grads(&self, graph: &ComputeGraph, nparams: usize) -> Vec<Option<Tensor>> {
        (0..nparams).map(|i| self.param(i, graph)).collect()
    }
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(format!("{what}: shapes {:?} and {:?} differ", a.shape(), b.shape())));
    }
    Ok(())
}

fn scalar_input(t: &Tensor, what: &str) -> Result<f64> {
    if !t.is_scalar() {
        return Err(Error::Contract(format!("{what} expects a scalar, got shape {:?}", t.shape())));
    }
    Ok(t.item())
}

fn image_dims(t: &Tensor, what: &str) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::dim(format!("{what} expects a [c, h, w] tensor, got {:?}", t.shape()))),
    }
}

impl ComputeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn op_tag(&self, id: NodeId) -> &'static str {
        self.nodes[id.0].op.tag()
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        let requires_grad = match op {
            Op::Leaf { param } => param.is_some(),
            _ => op.inputs().iter().any(|i| self.nodes[i.0].requires_grad),
        };
        self.nodes.push(Node { op, value, requires_grad });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf { param: None }, value)
    }

    /// Differentiable leaf bound to parameter slot `index`.
    pub fn param(&mut self, index: usize, value: Tensor) -> NodeId {
        self.push(Op::Leaf { param: Some(index) }, value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape(va, vb, "add")?;
        let mut out = va.clone();
        out.add_assign(vb);
        Ok(self.push(Op::Add(a, b), out))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape(va, vb, "sub")?;
        let mut out = va.clone();
        out.add_scaled(-1.0, vb);
        Ok(self.push(Op::Sub(a, b), out))
    }

    pub fn scale(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        let sv = scalar_input(self.value(s), "scale")?;
        let vx = self.value(x);
        let out = Tensor::new(vx.shape().to_vec(), vx.data().iter().map(|v| v * sv).collect())?;
        Ok(self.push(Op::Scale(x, s), out))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape(va, vb, "dot")?;
        let out = Tensor::scalar(va.dot(vb));
        Ok(self.push(Op::Dot(a, b), out))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let num = scalar_input(self.value(a), "div")?;
        let den = scalar_input(self.value(b), "div")?;
        Ok(self.push(Op::Div(a, b), Tensor::scalar(num / den)))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let vx = self.value(x);
        let out = Tensor::new(vx.shape().to_vec(), vx.data().iter().map(|&v| v.max(0.0)).collect())
            .expect("shape preserved");
        self.push(Op::Relu(x), out)
    }

    pub fn conv2d(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (cin, h, wd) = image_dims(self.value(x), "conv2d")?;
        let ws = self.value(w).shape().to_vec();
        if ws.len() != 4 || ws[1] != cin || ws[2] != conv::KERNEL || ws[3] != conv::KERNEL {
            return Err(Error::dim(format!("conv2d weight {ws:?} incompatible with {cin} input channels")));
        }
        let cout = ws[0];
        if self.value(b).shape() != [cout] {
            return Err(Error::dim(format!("conv2d bias {:?}, expected [{cout}]", self.value(b).shape())));
        }
        let out = conv::forward(self.value(x).data(), cin, h, wd, self.value(w).data(), self.value(b).data(), cout);
        let out = Tensor::new(vec![cout, h, wd], out)?;
        Ok(self.push(Op::Conv2d { x, w, b }, out))
    }

    pub fn normal(&mut self, x: NodeId, op: Arc<EncodingOperator>) -> Result<NodeId> {
        let img = self.value(x).to_image()?;
        let out = Tensor::from_image(&op.normal(&img)?);
        Ok(self.push(Op::Normal { x, op }, out))
    }

    pub fn encode(&mut self, x: NodeId, op: Arc<EncodingOperator>) -> Result<NodeId> {
        let img = self.value(x).to_image()?;
        let (ny, nz) = op.shape();
        let out = Tensor::from_complex(&[op.ncoils(), ny, nz], &op.forward(&img)?);
        Ok(self.push(Op::Encode { x, op }, out))
    }

    /// `||u - v||_2 / ||u||_2 + ||u - v||_1 / ||u||_1` with `u` the fixed
    /// reference and `v` the prediction, both interleaved complex; the l1
    /// norm sums complex moduli.
    pub fn l1l2(&mut self, pred: NodeId, target: Arc<Tensor>) -> Result<NodeId> {
        let vp = self.value(pred);
        same_shape(vp, &target, "l1l2")?;
        let loss = super::loss::l1l2_value(target.data(), vp.data())?;
        Ok(self.push(Op::L1L2 { pred, target }, Tensor::scalar(loss)))
    }

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::Graph(format!("loss node {} not in graph", loss.0)));
        }
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, node {} has shape {:?}",
                loss.0,
                self.nodes[loss.0].value.shape()
            )));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.op.inputs().iter().any(|inp| inp.0 >= i) {
                return Err(Error::Graph(format!("cycle: node {i} ({}) reads a later node", node.op.tag())));
            }
        }

        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match &node.op {
                Op::Leaf { .. } => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, *a, || g.clone());
                    self.accumulate(&mut grads, *b, || g.clone());
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut grads, *a, || g.clone());
                    self.accumulate(&mut grads, *b, || {
                        let mut n = g.clone();
                        n.data_mut().iter_mut().for_each(|v| *v = -*v);
                        n
                    });
                }
                Op::Scale(x, s) => {
                    let sv = self.value(*s).item();
                    self.accumulate(&mut grads, *x, || {
                        let mut gx = g.clone();
                        gx.data_mut().iter_mut().for_each(|v| *v *= sv);
                        gx
                    });
                    self.accumulate(&mut grads, *s, || Tensor::scalar(g.dot(self.value(*x))));
                }
                Op::Dot(a, b) => {
                    let gs = g.item();
                    let (a, b) = (*a, *b);
                    self.accumulate(&mut grads, a, || scaled(self.value(b), gs));
                    self.accumulate(&mut grads, b, || scaled(self.value(a), gs));
                }
                Op::Div(a, b) => {
                    let gs = g.item();
                    let den = self.value(*b).item();
                    let q = node.value.item();
                    self.accumulate(&mut grads, *a, || Tensor::scalar(gs / den));
                    self.accumulate(&mut grads, *b, || Tensor::scalar(-gs * q / den));
                }
                Op::Relu(x) => {
                    self.accumulate(&mut grads, *x, || {
                        let data = g
                            .data()
                            .iter()
                            .zip(self.value(*x).data())
                            .map(|(gv, xv)| if *xv > 0.0 { *gv } else { 0.0 })
                            .collect();
                        Tensor::new(g.shape().to_vec(), data).expect("shape preserved")
                    });
                }
                Op::Conv2d { x, w, b } => {
                    let (cin, h, wd) = image_dims(self.value(*x), "conv2d")?;
                    let cout = node.value.shape()[0];
                    if self.nodes[x.0].requires_grad {
                        let gx = conv::backward_input(g.data(), cout, h, wd, self.value(*w).data(), cin);
                        self.accumulate(&mut grads, *x, || Tensor::new(vec![cin, h, wd], gx).expect("shape"));
                    }
                    if self.nodes[w.0].requires_grad || self.nodes[b.0].requires_grad {
                        let (gw, gb) = conv::backward_params(g.data(), self.value(*x).data(), cin, h, wd, cout);
                        let wshape = self.value(*w).shape().to_vec();
                        self.accumulate(&mut grads, *w, || Tensor::new(wshape, gw).expect("shape"));
                        self.accumulate(&mut grads, *b, || Tensor::new(vec![cout], gb).expect("shape"));
                    }
                }
                Op::Normal { x, op } => {
                    if self.nodes[x.0].requires_grad {
                        let gx = Tensor::from_image(&op.normal(&g.to_image()?)?);
                        self.accumulate(&mut grads, *x, || gx);
                    }
                }
                Op::Encode { x, op } => {
                    if self.nodes[x.0].requires_grad {
                        let gx = Tensor::from_image(&op.adjoint(&g.interleaved_complex())?);
                        self.accumulate(&mut grads, *x, || gx);
                    }
                }
                Op::L1L2 { pred, target } => {
                    let gs = g.item();
                    let vp = self.value(*pred);
                    self.accumulate(&mut grads, *pred, || {
                        let mut gp = super::loss::l1l2_grad(target.data(), vp.data());
                        gp.iter_mut().for_each(|v| *v *= gs);
                        Tensor::new(vp.shape().to_vec(), gp).expect("shape preserved")
                    });
                }
            }
        }

        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Leaf { param: Some(p) } => Some((p, NodeId(i))),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads, params })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], target: NodeId, make: impl FnOnce() -> Tensor) {
        if !self.nodes[target.0].requires_grad {
            return;
        }
        let g = make();
        match &mut grads[target.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }
}

fn scaled(t: &Tensor, s: f64) -> Tensor {
    Tensor::new(t.shape().to_vec(), t.data().iter().map(|v| v * s).collect()).expect("shape preserved")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = crate::rng::rng_from_seed(seed);
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn sum_of_squares_gradient_is_twice_params() {
        let mut g = ComputeGraph::new();
        let p = random_tensor(&[3, 4], 1);
        let id = g.param(0, p.clone());
        let loss = g.dot(id, id).unwrap();
        let grads = g.backward(loss).unwrap();
        let gp = grads.param(0, &g).unwrap();
        for (a, b) in gp.data().iter().zip(p.data()) {
            assert_eq!(*a, 2.0 * b);
        }
    }

    #[test]
    fn constant_loss_has_zero_param_gradient() {
        let mut g = ComputeGraph::new();
        let _p = g.param(0, random_tensor(&[5], 2));
        let c = g.constant(Tensor::scalar(3.0));
        let grads = g.backward(c).unwrap();
        assert!(grads.param(0, &g).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = ComputeGraph::new();
        let p = g.param(0, random_tensor(&[2, 2], 3));
        let r = g.relu(p);
        assert!(matches!(g.backward(r), Err(Error::Contract(_))));
    }

    #[test]
    fn scalar_ops_match_finite_differences() {
        // f(a, b) = (a.b) / (b.b) * <a, relu(a - b)>
        let a0 = random_tensor(&[6], 4);
        let b0 = random_tensor(&[6], 5);
        let f = |a: &Tensor, b: &Tensor, grads: bool| {
            let mut g = ComputeGraph::new();
            let a = g.param(0, a.clone());
            let b = g.param(1, b.clone());
            let ab = g.dot(a, b).unwrap();
            let bb = g.dot(b, b).unwrap();
            let q = g.div(ab, bb).unwrap();
            let d = g.sub(a, b).unwrap();
            let r = g.relu(d);
            let s = g.scale(r, q).unwrap();
            let t = g.add(s, a).unwrap();
            let l = g.dot(t, a).unwrap();
            let val = g.value(l).item();
            let gr = grads.then(|| {
                let gr = g.backward(l).unwrap();
                (gr.param(0, &g).unwrap(), gr.param(1, &g).unwrap())
            });
            (val, gr)
        };
        let (_, Some((ga, gb))) = f(&a0, &b0, true) else { panic!() };
        let eps = 1e-6;
        for (which, analytic) in [(0, &ga), (1, &gb)] {
            for i in 0..6 {
                let (mut ap, mut bp) = (a0.clone(), b0.clone());
                let (mut am, mut bm) = (a0.clone(), b0.clone());
                if which == 0 {
                    ap.data_mut()[i] += eps;
                    am.data_mut()[i] -= eps;
                } else {
                    bp.data_mut()[i] += eps;
                    bm.data_mut()[i] -= eps;
                }
                let fd = (f(&ap, &bp, false).0 - f(&am, &bm, false).0) / (2.0 * eps);
                assert!((fd - analytic.data()[i]).abs() < 1e-7, "param {which} entry {i}");
            }
        }
    }
}
