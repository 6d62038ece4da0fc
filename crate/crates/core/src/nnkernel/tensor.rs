use crate::{Error, Result};

/// Dense row-major tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f64> {
    shape: Vec<usize>,
    values: Vec<T>,
}

impl<T: Copy + Default> Tensor<T> {
    pub fn new(shape: Vec<usize>, values: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::ContractViolation(format!(
                "shape {shape:?} needs {expected} values, got {}",
                values.len()
            )));
        }
        Ok(Tensor { shape, values })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            values: vec![T::default(); n],
        }
    }

    pub fn filled(shape: Vec<usize>, value: T) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            values: vec![value; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Leading dimension (batch size for activation tensors).
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Number of values per leading index.
    pub fn row_len(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    pub fn row(&self, i: usize) -> &[T] {
        let r = self.row_len();
        &self.values[i * r..(i + 1) * r]
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != self.values.len() {
            return Err(Error::ContractViolation(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Stacks equally-shaped rows into a `[rows, ...row_shape]` tensor.
    pub fn stack<'a, I>(row_shape: &[usize], rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [T]>,
        T: 'a,
    {
        let row_len: usize = row_shape.iter().product();
        let mut values = Vec::new();
        let mut n = 0;
        for r in rows {
            if r.len() != row_len {
                return Err(Error::ContractViolation(format!(
                    "row of {} values does not match shape {row_shape:?}",
                    r.len()
                )));
            }
            values.extend_from_slice(r);
            n += 1;
        }
        let mut shape = vec![n];
        shape.extend_from_slice(row_shape);
        Ok(Tensor { shape, values })
    }

    /// Rows `range` as a new tensor.
    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> Self {
        let r = self.row_len();
        let mut shape = self.shape.clone();
        shape[0] = range.len();
        Tensor {
            shape,
            values: self.values[range.start * r..range.end * r].to_vec(),
        }
    }

    /// Rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let r = self.row_len();
        let mut values = Vec::with_capacity(indices.len() * r);
        for &i in indices {
            values.extend_from_slice(&self.values[i * r..(i + 1) * r]);
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Tensor { shape, values }
    }

    pub fn concat_rows(parts: &[Tensor<T>]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::ContractViolation("nothing to concatenate".into()))?;
        let mut shape = first.shape.clone();
        let mut values = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.shape[1..] != first.shape[1..] {
                return Err(Error::ContractViolation("row shapes differ".into()));
            }
            rows += p.rows();
            values.extend_from_slice(&p.values);
        }
        shape[0] = rows;
        Ok(Tensor { shape, values })
    }
}

impl Tensor<f64> {
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
