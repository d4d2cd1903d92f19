//! Shared-weight ResNet regularizer.
//!
//! A complex image enters as two real channels and passes through
//! `conv_in -> B x [conv -> ReLU -> conv, + skip] -> conv_out`, all 3x3 "same"
//! convolutions with zero padding and no normalization layers.

use rand::Rng as _;

use super::graph::{ComputeGraph, NodeId};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::kspace::ComplexImage;
use crate::rng::child_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ResNetArch {
    pub channels: usize,
    pub blocks: usize,
}

impl Default for ResNetArch {
    fn default() -> Self {
        Self { channels: 16, blocks: 3 }
    }
}

impl ResNetArch {
    /// Number of convolution layers.
    pub fn layers(&self) -> usize {
        2 + 2 * self.blocks
    }

    /// `(cin, cout)` for conv layer `l`.
    fn layer_channels(&self, l: usize) -> (usize, usize) {
        let c = self.channels;
        if l == 0 {
            (2, c)
        } else if l == self.layers() - 1 {
            (c, 2)
        } else {
            (c, c)
        }
    }

    fn layer_name(&self, l: usize) -> String {
        if l == 0 {
            "conv_in".into()
        } else if l == self.layers() - 1 {
            "conv_out".into()
        } else {
            format!("block{}.conv{}", (l - 1) / 2, (l - 1) % 2 + 1)
        }
    }

    /// Slot of the penalty weight `mu` in the parameter list.
    pub fn mu_slot(&self) -> usize {
        2 * self.layers()
    }

    pub fn param_count(&self) -> usize {
        2 * self.layers() + 1
    }
}

/// Regularizer weights `theta` plus the quadratic-penalty weight `mu`.
///
/// Slots `2l` and `2l + 1` hold the weight and bias of conv layer `l`; the
/// last slot holds `mu` as a one-element tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    arch: ResNetArch,
    tensors: Vec<Tensor>,
    names: Vec<String>,
    pub mu_trainable: bool,
}

/// Default initial `mu`.
pub const MU_INIT: f64 = 0.05;
/// Scale applied to the initial output-layer weights.
pub const OUTPUT_INIT_SCALE: f64 = 0.01;

impl NetworkParams {
    pub fn slot_names(arch: &ResNetArch) -> Vec<String> {
        let mut names = Vec::with_capacity(arch.param_count());
        for l in 0..arch.layers() {
            let n = arch.layer_name(l);
            names.push(format!("{n}.weight"));
            names.push(format!("{n}.bias"));
        }
        names.push("mu".into());
        names
    }

    fn from_fn(arch: ResNetArch, mu: f64, mut weight: impl FnMut(usize, usize, usize) -> Tensor) -> Self {
        let mut tensors = Vec::with_capacity(arch.param_count());
        for l in 0..arch.layers() {
            let (cin, cout) = arch.layer_channels(l);
            tensors.push(weight(l, cin, cout));
            tensors.push(Tensor::zeros(&[cout]));
        }
        tensors.push(Tensor::scalar(mu));
        Self { names: Self::slot_names(&arch), arch, tensors, mu_trainable: true }
    }

    /// Glorot-uniform weights, each layer drawn from its own stream of
    /// `seed`; zero biases; the output layer scaled by [`OUTPUT_INIT_SCALE`].
    pub fn init(arch: ResNetArch, mu: f64, seed: u64) -> Self {
        let last = arch.layers() - 1;
        Self::from_fn(arch, mu, |l, cin, cout| {
            let k2 = 9;
            let bound = (6.0 / ((cin * k2 + cout * k2) as f64)).sqrt();
            let mut rng = child_rng(seed, l as u64);
            let scale = if l == last { OUTPUT_INIT_SCALE } else { 1.0 };
            let data = (0..cout * cin * k2).map(|_| scale * rng.gen_range(-bound..bound)).collect();
            Tensor::new(vec![cout, cin, 3, 3], data).expect("shape")
        })
    }

    pub fn zeros(arch: ResNetArch, mu: f64) -> Self {
        Self::from_fn(arch, mu, |_, cin, cout| Tensor::zeros(&[cout, cin, 3, 3]))
    }

    /// Parameters for which the regularizer returns its input unchanged:
    /// `conv_in` copies the two image channels, residual branches are zero
    /// and `conv_out` copies them back.
    pub fn identity(arch: ResNetArch, mu: f64) -> Self {
        assert!(arch.channels >= 2, "identity needs at least two channels");
        let last = arch.layers() - 1;
        Self::from_fn(arch, mu, |l, cin, cout| {
            let mut t = Tensor::zeros(&[cout, cin, 3, 3]);
            if l == 0 || l == last {
                for c in 0..2 {
                    t.data_mut()[((c * cin + c) * 3 + 1) * 3 + 1] = 1.0;
                }
            }
            t
        })
    }

    pub fn from_tensors(arch: ResNetArch, tensors: Vec<Tensor>, mu_trainable: bool) -> Result<Self> {
        let reference = Self::zeros(arch, 0.0);
        if tensors.len() != reference.tensors.len() {
            return Err(Error::dim(format!(
                "expected {} parameter tensors, got {}",
                reference.tensors.len(),
                tensors.len()
            )));
        }
        for ((t, r), name) in tensors.iter().zip(&reference.tensors).zip(&reference.names) {
            if t.shape() != r.shape() {
                return Err(Error::dim(format!("{name}: shape {:?}, expected {:?}", t.shape(), r.shape())));
            }
            if !t.is_finite() {
                return Err(Error::dim(format!("{name} contains non-finite values")));
            }
        }
        Ok(Self { arch, tensors, names: reference.names, mu_trainable })
    }

    pub fn arch(&self) -> ResNetArch {
        self.arch
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub(crate) fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn mu(&self) -> f64 {
        self.tensors[self.arch.mu_slot()].item()
    }

    pub fn set_mu(&mut self, mu: f64) {
        let slot = self.arch.mu_slot();
        self.tensors[slot] = Tensor::scalar(mu);
    }

    /// Place every parameter in `graph`. `mu` becomes a constant when it is
    /// not trainable.
    pub fn insert_into(&self, graph: &mut ComputeGraph) -> ParamNodes {
        let mu_slot = self.arch.mu_slot();
        let nodes = self
            .tensors
            .iter()
            .enumerate()
            .map(|(i, t)| {
                if i == mu_slot && !self.mu_trainable {
                    graph.constant(t.clone())
                } else {
                    graph.param(i, t.clone())
                }
            })
            .collect();
        ParamNodes { arch: self.arch, nodes }
    }

    /// Same parameters placed as constants, for gradient-free evaluation.
    pub fn insert_constants(&self, graph: &mut ComputeGraph) -> ParamNodes {
        let nodes = self.tensors.iter().map(|t| graph.constant(t.clone())).collect();
        ParamNodes { arch: self.arch, nodes }
    }
}

/// Graph handles of a [`NetworkParams`] set.
#[derive(Clone, Debug)]
pub struct ParamNodes {
    arch: ResNetArch,
    nodes: Vec<NodeId>,
}

impl ParamNodes {
    pub fn mu(&self) -> NodeId {
        self.nodes[self.arch.mu_slot()]
    }

    fn layer(&self, l: usize) -> (NodeId, NodeId) {
        (self.nodes[2 * l], self.nodes[2 * l + 1])
    }
}

/// Regularizer applied to a `[2, ny, nz]` image node.
pub fn resnet_nodes(graph: &mut ComputeGraph, x: NodeId, params: &ParamNodes) -> Result<NodeId> {
    let arch = params.arch;
    let (w, b) = params.layer(0);
    let mut h = graph.conv2d(x, w, b)?;
    for blk in 0..arch.blocks {
        let (w1, b1) = params.layer(1 + 2 * blk);
        let (w2, b2) = params.layer(2 + 2 * blk);
        let a = graph.conv2d(h, w1, b1)?;
        let a = graph.relu(a);
        let a = graph.conv2d(a, w2, b2)?;
        h = graph.add(h, a)?;
    }
    let (w, b) = params.layer(arch.layers() - 1);
    graph.conv2d(h, w, b)
}

pub fn resnet_regularizer(x: &ComplexImage, params: &NetworkParams) -> Result<ComplexImage> {
    let mut graph = ComputeGraph::new();
    let nodes = params.insert_constants(&mut graph);
    let xin = graph.constant(Tensor::from_image(x));
    let out = resnet_nodes(&mut graph, xin, &nodes)?;
    graph.value(out).to_image()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kspace::C64;

    fn random_image(n: usize, seed: u64) -> ComplexImage {
        let mut rng = crate::rng::rng_from_seed(seed);
        let data = (0..n * n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        ComplexImage::new(n, n, data).unwrap()
    }

    fn randomize(params: &NetworkParams, seed: u64) -> NetworkParams {
        let mut rng = crate::rng::rng_from_seed(seed);
        let tensors = params
            .tensors()
            .iter()
            .map(|t| {
                Tensor::new(t.shape().to_vec(), t.data().iter().map(|_| rng.gen_range(-0.5..0.5)).collect()).unwrap()
            })
            .collect();
        NetworkParams::from_tensors(params.arch(), tensors, true).unwrap()
    }

    /// Straight-line forward pass with explicit loops, independent of the graph.
    fn direct_forward(x: &ComplexImage, p: &NetworkParams) -> ComplexImage {
        let n = x.ny();
        let conv = |input: &Vec<Vec<f64>>, w: &Tensor, b: &Tensor| -> Vec<Vec<f64>> {
            let (cout, cin) = (w.shape()[0], w.shape()[1]);
            let mut out = vec![vec![0.0; n * n]; cout];
            for co in 0..cout {
                for y in 0..n {
                    for z in 0..n {
                        let mut acc = b.data()[co];
                        for ci in 0..cin {
                            for ky in 0..3 {
                                for kz in 0..3 {
                                    let sy = y as isize + ky as isize - 1;
                                    let sz = z as isize + kz as isize - 1;
                                    if sy < 0 || sz < 0 || sy >= n as isize || sz >= n as isize {
                                        continue;
                                    }
                                    acc += w.data()[((co * cin + ci) * 3 + ky) * 3 + kz]
                                        * input[ci][sy as usize * n + sz as usize];
                                }
                            }
                        }
                        out[co][y * n + z] = acc;
                    }
                }
            }
            out
        };
        let t = p.tensors();
        let input = vec![x.data().iter().map(|c| c.re).collect(), x.data().iter().map(|c| c.im).collect()];
        let mut h = conv(&input, &t[0], &t[1]);
        for blk in 0..p.arch().blocks {
            let l1 = 1 + 2 * blk;
            let mut a = conv(&h, &t[2 * l1], &t[2 * l1 + 1]);
            for ch in a.iter_mut() {
                for v in ch.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            let a = conv(&a, &t[2 * l1 + 2], &t[2 * l1 + 3]);
            for (hc, ac) in h.iter_mut().zip(&a) {
                for (hv, av) in hc.iter_mut().zip(ac) {
                    *hv += av;
                }
            }
        }
        let last = p.arch().layers() - 1;
        let out = conv(&h, &t[2 * last], &t[2 * last + 1]);
        let data = out[0].iter().zip(&out[1]).map(|(&r, &i)| C64::new(r, i)).collect();
        ComplexImage::new(n, n, data).unwrap()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let p = NetworkParams::zeros(ResNetArch::default(), MU_INIT);
        let out = resnet_regularizer(&random_image(8, 1), &p).unwrap();
        assert!(out.data().iter().all(|v| v.re == 0.0 && v.im == 0.0));
    }

    #[test]
    fn identity_network_returns_input() {
        let p = NetworkParams::identity(ResNetArch::default(), MU_INIT);
        let x = random_image(8, 2);
        assert_eq!(resnet_regularizer(&x, &p).unwrap(), x);
    }

    #[test]
    fn matches_direct_forward() {
        let arch = ResNetArch { channels: 4, blocks: 2 };
        let p = randomize(&NetworkParams::zeros(arch, MU_INIT), 3);
        let x = random_image(8, 4);
        let got = resnet_regularizer(&x, &p).unwrap();
        let expect = direct_forward(&x, &p);
        let err = got.sub(&expect).norm() / expect.norm();
        assert!(err < 1e-12, "relative error {err}");
    }

    #[test]
    fn init_is_deterministic_and_scaled() {
        let arch = ResNetArch::default();
        let a = NetworkParams::init(arch, MU_INIT, 5);
        assert_eq!(a, NetworkParams::init(arch, MU_INIT, 5));
        assert_ne!(a, NetworkParams::init(arch, MU_INIT, 6));
        let bound_in = (6.0f64 / (2.0 * 9.0 + 16.0 * 9.0)).sqrt();
        assert!(a.tensors()[0].data().iter().all(|v| v.abs() <= bound_in));
        let last = 2 * (arch.layers() - 1);
        let bound_out = 0.01 * (6.0f64 / (16.0 * 9.0 + 2.0 * 9.0)).sqrt();
        assert!(a.tensors()[last].data().iter().all(|v| v.abs() <= bound_out));
        assert_eq!(a.mu(), MU_INIT);
        assert_eq!(a.names()[0], "conv_in.weight");
        assert_eq!(a.names()[2], "block0.conv1.weight");
        assert_eq!(a.names()[a.names().len() - 1], "mu");
    }

    #[test]
    fn translation_equivariant_in_interior() {
        let arch = ResNetArch { channels: 4, blocks: 2 };
        let p = randomize(&NetworkParams::zeros(arch, MU_INIT), 7);
        let n = 32;
        let mut base = vec![C64::new(0.0, 0.0); n * n];
        let blob = random_image(6, 8);
        for y in 0..6 {
            for z in 0..6 {
                base[(12 + y) * n + 12 + z] = blob.get(y, z);
            }
        }
        let mut shifted = vec![C64::new(0.0, 0.0); n * n];
        for y in 0..6 {
            for z in 0..6 {
                shifted[(14 + y) * n + 13 + z] = blob.get(y, z);
            }
        }
        let a = resnet_regularizer(&ComplexImage::new(n, n, base).unwrap(), &p).unwrap();
        let b = resnet_regularizer(&ComplexImage::new(n, n, shifted).unwrap(), &p).unwrap();
        // receptive-field radius is 1 + 2 * blocks + 1 = 6
        for y in 8..22 {
            for z in 8..22 {
                assert!((a.get(y, z) - b.get(y + 2, z + 1)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let p = NetworkParams::zeros(ResNetArch::default(), MU_INIT);
        let bad = vec![Tensor::zeros(&[3]); p.tensors().len()];
        assert!(NetworkParams::from_tensors(ResNetArch::default(), bad, true).is_err());
    }
}
