use crate::error::{Error, Result};
use crate::kspace::{ComplexImage, C64};

/// Dense row-major real tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::dim(format!(
                "tensor shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn scalar(v: f64) -> Self {
        Self { shape: vec![1], data: vec![v] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The value of a one-element tensor.
    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub(crate) fn add_scaled(&mut self, s: f64, other: &Tensor) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// `[2, ny, nz]` planes holding the real and imaginary parts.
    pub fn from_image(img: &ComplexImage) -> Self {
        let n = img.ny() * img.nz();
        let mut data = vec![0.0; 2 * n];
        let (re, im) = data.split_at_mut(n);
        for ((r, i), v) in re.iter_mut().zip(im.iter_mut()).zip(img.data()) {
            *r = v.re;
            *i = v.im;
        }
        Self { shape: vec![2, img.ny(), img.nz()], data }
    }

    pub fn to_image(&self) -> Result<ComplexImage> {
        if self.shape.len() != 3 || self.shape[0] != 2 {
            return Err(Error::dim(format!("expected a [2, ny, nz] tensor, got {:?}", self.shape)));
        }
        Ok(ComplexImage::from_raw(self.shape[1], self.shape[2], self.complex_planes()))
    }

    pub(crate) fn complex_planes(&self) -> Vec<C64> {
        let n = self.data.len() / 2;
        let (re, im) = self.data.split_at(n);
        re.iter().zip(im).map(|(&r, &i)| C64::new(r, i)).collect()
    }

    /// Interleaved `[..., 2]` layout for k-space values.
    pub fn from_complex(shape: &[usize], values: &[C64]) -> Self {
        let mut full = shape.to_vec();
        full.push(2);
        let data = values.iter().flat_map(|v| [v.re, v.im]).collect();
        Self { shape: full, data }
    }

    pub(crate) fn interleaved_complex(&self) -> Vec<C64> {
        self.data.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect()
    }
}
