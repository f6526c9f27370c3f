use super::NumericError;

/// Dense row-major matrix of `f64`. Vectors are `1 x n` and scalars `1 x 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericError> {
        if data.len() != rows * cols {
            return Err(NumericError::Shape {
                op: "tensor",
                detail: format!("{} values for shape {rows}x{cols}", data.len()),
            });
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn scalar(x: f64) -> Self {
        Tensor { rows: 1, cols: 1, data: vec![x] }
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        Tensor { rows: 1, cols: data.len(), data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Tensor { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, x: f64) {
        self.data[r * self.cols + c] = x;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn transpose(&self) -> Tensor {
        Tensor::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }
}

/// `a * b`.
pub(crate) fn mm(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let o = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let x = a.data[i * k + p];
            if x == 0.0 {
                continue;
            }
            let br = &b.data[p * n..(p + 1) * n];
            for (oj, bj) in o.iter_mut().zip(br) {
                *oj += x * bj;
            }
        }
    }
    Tensor { rows: m, cols: n, data: out }
}

/// `a * bᵀ`.
pub(crate) fn mm_t(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows, a.cols, b.rows);
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        let ar = &a.data[i * k..(i + 1) * k];
        for j in 0..n {
            let br = &b.data[j * k..(j + 1) * k];
            out.push(ar.iter().zip(br).map(|(x, y)| x * y).sum());
        }
    }
    Tensor { rows: m, cols: n, data: out }
}

/// `aᵀ * b`.
pub(crate) fn t_mm(a: &Tensor, b: &Tensor) -> Tensor {
    let (k, m, n) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0; m * n];
    for p in 0..k {
        let br = &b.data[p * n..(p + 1) * n];
        for i in 0..m {
            let x = a.data[p * m + i];
            if x == 0.0 {
                continue;
            }
            let o = &mut out[i * n..(i + 1) * n];
            for (oj, bj) in o.iter_mut().zip(br) {
                *oj += x * bj;
            }
        }
    }
    Tensor { rows: m, cols: n, data: out }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Tensor, b: &Tensor) -> Tensor {
        Tensor::from_fn(a.rows(), b.cols(), |i, j| (0..a.cols()).map(|p| a.get(i, p) * b.get(p, j)).sum())
    }

    #[test]
    fn products_agree_with_scalar_loops() {
        let a = Tensor::from_fn(3, 4, |r, c| (r * 7 + c * 3) as f64 % 5.0 - 2.0);
        let b = Tensor::from_fn(4, 2, |r, c| (r + 2 * c) as f64 * 0.5 - 1.0);
        assert_eq!(mm(&a, &b), naive(&a, &b));
        assert_eq!(mm_t(&a, &b.transpose()), naive(&a, &b));
        assert_eq!(t_mm(&a.transpose(), &b), naive(&a, &b));
    }

    #[test]
    fn two_by_two() {
        let a = Tensor::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::new(2, 2, vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        assert_eq!(mm(&a, &b).data(), &[19.0, 22.0, 43.0, 50.0]);
        let id = Tensor::from_fn(2, 2, |r, c| if r == c { 1.0 } else { 0.0 });
        assert_eq!(mm(&id, &a), a);
    }

    #[test]
    fn bad_shape() {
        assert!(Tensor::new(2, 3, vec![0.0; 5]).is_err());
    }
}
