use crate::error::{Error, Result};

/// Dense row-major `f64` tensor. Only rank 1 and rank 2 are used by the models.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
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

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        if self.shape.len() > 1 {
            self.shape[1]
        } else {
            1
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `out += self · x` for a matrix `self` of shape `[rows, cols]`.
    #[inline]
    pub fn matvec_add(&self, x: &[f64], out: &mut [f64]) {
        let cols = self.cols();
        debug_assert_eq!(x.len(), cols);
        debug_assert_eq!(out.len(), self.rows());
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(cols)) {
            *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// `out += selfᵀ · g`.
    #[inline]
    pub fn matvec_t_add(&self, g: &[f64], out: &mut [f64]) {
        let cols = self.cols();
        debug_assert_eq!(g.len(), self.rows());
        debug_assert_eq!(out.len(), cols);
        for (gi, row) in g.iter().zip(self.data.chunks_exact(cols)) {
            if *gi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(row) {
                *o += gi * a;
            }
        }
    }

    /// `self += g · xᵀ`.
    #[inline]
    pub fn outer_add(&mut self, g: &[f64], x: &[f64]) {
        let cols = self.cols();
        debug_assert_eq!(x.len(), cols);
        for (gi, row) in g.iter().zip(self.data.chunks_exact_mut(cols)) {
            if *gi == 0.0 {
                continue;
            }
            for (r, xj) in row.iter_mut().zip(x) {
                *r += gi * xj;
            }
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}
