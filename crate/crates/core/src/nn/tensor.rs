//! Row-major dense 2-D tensors with an optional gradient buffer.
//!
//! This is deliberately small: the fusion network is a fixed DAG of MLPs and
//! per-sample 3×3 matrix products, so a handful of explicit kernels keeps the
//! whole differentiation path auditable. All math is f64.

use super::NnError;

/// Dense row-major matrix. Parameters carry a gradient buffer of the same
/// shape; activations normally do not.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "tensor dimensions must be positive");
        Tensor2 {
            rows,
            cols,
            data: vec![0.0; rows * cols],
            grad: None,
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NnError> {
        if data.len() != rows * cols {
            return Err(NnError::ShapeMismatch {
                context: "from_vec",
                expected: (rows, cols),
                got: (data.len(), 1),
            });
        }
        Ok(Tensor2 {
            rows,
            cols,
            data,
            grad: None,
        })
    }

    pub fn from_row(row: &[f64]) -> Self {
        Tensor2 {
            rows: 1,
            cols: row.len(),
            data: row.to_vec(),
            grad: None,
        }
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

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Allocates the gradient buffer if absent.
    pub fn ensure_grad(&mut self) {
        if self.grad.is_none() {
            self.grad = Some(vec![0.0; self.data.len()]);
        }
    }

    pub fn zero_grad(&mut self) {
        self.ensure_grad();
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        self.ensure_grad();
        self.grad.as_deref_mut().expect("just ensured")
    }

    /// Accumulates `upstream` into the gradient buffer.
    pub fn accumulate_grad(&mut self, upstream: &Tensor2) {
        debug_assert_eq!(self.shape(), upstream.shape());
        self.ensure_grad();
        let g = self.grad.as_deref_mut().expect("just ensured");
        for (gi, ui) in g.iter_mut().zip(upstream.data.iter()) {
            *gi += ui;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn check_finite(&self, context: &'static str) -> Result<(), NnError> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(NnError::NonFinite { context })
        }
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Tensor2) -> Result<Tensor2, NnError> {
        if self.cols != other.rows {
            return Err(NnError::ShapeMismatch {
                context: "matmul",
                expected: (self.cols, self.cols),
                got: (other.rows, other.cols),
            });
        }
        let mut out = Tensor2::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let o_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a_ik) in a_row.iter().enumerate() {
                if a_ik == 0.0 {
                    continue;
                }
                let b_row = other.row(k);
                for (o, &b_kj) in o_row.iter_mut().zip(b_row.iter()) {
                    *o += a_ik * b_kj;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other`; used for weight gradients.
    pub fn matmul_transpose_self(&self, other: &Tensor2) -> Result<Tensor2, NnError> {
        if self.rows != other.rows {
            return Err(NnError::ShapeMismatch {
                context: "matmul_transpose_self",
                expected: (self.rows, self.rows),
                got: (other.rows, other.cols),
            });
        }
        let mut out = Tensor2::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for (i, &a_ki) in a_row.iter().enumerate() {
                if a_ki == 0.0 {
                    continue;
                }
                let o_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b_kj) in o_row.iter_mut().zip(b_row.iter()) {
                    *o += a_ki * b_kj;
                }
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ`; used for input gradients.
    pub fn matmul_transpose_other(&self, other: &Tensor2) -> Result<Tensor2, NnError> {
        if self.cols != other.cols {
            return Err(NnError::ShapeMismatch {
                context: "matmul_transpose_other",
                expected: (self.cols, self.cols),
                got: (other.rows, other.cols),
            });
        }
        let mut out = Tensor2::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            for j in 0..other.rows {
                let b_row = other.row(j);
                let mut acc = 0.0;
                for (a, b) in a_row.iter().zip(b_row.iter()) {
                    acc += a * b;
                }
                out.data[i * other.rows + j] = acc;
            }
        }
        Ok(out)
    }

    /// Adds a 1×C bias row to every row.
    pub fn add_row_broadcast(&mut self, bias: &Tensor2) -> Result<(), NnError> {
        if bias.rows != 1 || bias.cols != self.cols {
            return Err(NnError::ShapeMismatch {
                context: "add_row_broadcast",
                expected: (1, self.cols),
                got: bias.shape(),
            });
        }
        for r in 0..self.rows {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (x, b) in row.iter_mut().zip(bias.data.iter()) {
                *x += b;
            }
        }
        Ok(())
    }

    /// Column-wise sum collapsed to a 1×C row; used for bias gradients.
    pub fn sum_rows(&self) -> Tensor2 {
        let mut out = Tensor2::zeros(1, self.cols);
        for r in 0..self.rows {
            let row = self.row(r);
            for (o, x) in out.data.iter_mut().zip(row.iter()) {
                *o += x;
            }
        }
        out
    }

    pub fn relu(&self) -> Tensor2 {
        let mut out = self.clone();
        out.grad = None;
        out.data.iter_mut().for_each(|x| {
            if *x < 0.0 {
                *x = 0.0;
            }
        });
        out
    }

    /// Masks `upstream` by the ReLU activity of `post` (the forward output).
    pub fn relu_backward(post: &Tensor2, upstream: &Tensor2) -> Tensor2 {
        debug_assert_eq!(post.shape(), upstream.shape());
        let mut out = upstream.clone();
        out.grad = None;
        for (o, &p) in out.data.iter_mut().zip(post.data.iter()) {
            if p <= 0.0 {
                *o = 0.0;
            }
        }
        out
    }

    /// Horizontal concatenation of equally-tall tensors.
    pub fn concat_cols(parts: &[&Tensor2]) -> Result<Tensor2, NnError> {
        assert!(!parts.is_empty());
        let rows = parts[0].rows;
        let total: usize = parts.iter().map(|p| p.cols).sum();
        for p in parts {
            if p.rows != rows {
                return Err(NnError::ShapeMismatch {
                    context: "concat_cols",
                    expected: (rows, p.cols),
                    got: p.shape(),
                });
            }
        }
        let mut out = Tensor2::zeros(rows, total);
        for r in 0..rows {
            let mut offset = 0;
            let o_row = &mut out.data[r * total..(r + 1) * total];
            for p in parts {
                o_row[offset..offset + p.cols].copy_from_slice(p.row(r));
                offset += p.cols;
            }
        }
        Ok(out)
    }

    /// Splits columns into segments of the given widths.
    pub fn split_cols(&self, widths: &[usize]) -> Result<Vec<Tensor2>, NnError> {
        let total: usize = widths.iter().sum();
        if total != self.cols {
            return Err(NnError::ShapeMismatch {
                context: "split_cols",
                expected: (self.rows, self.cols),
                got: (self.rows, total),
            });
        }
        let mut parts: Vec<Tensor2> = widths.iter().map(|&w| Tensor2::zeros(self.rows, w)).collect();
        for r in 0..self.rows {
            let row = self.row(r);
            let mut offset = 0;
            for (p, &w) in parts.iter_mut().zip(widths.iter()) {
                p.row_mut(r).copy_from_slice(&row[offset..offset + w]);
                offset += w;
            }
        }
        Ok(parts)
    }

    pub fn add_inplace(&mut self, other: &Tensor2) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }

    pub fn scale_inplace(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_known_product() {
        let a = Tensor2::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor2::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn transpose_products_agree_with_plain_matmul() {
        let a = Tensor2::from_vec(2, 3, vec![1.0, -2.0, 3.0, 0.5, 5.0, -6.0]).unwrap();
        let b = Tensor2::from_vec(2, 4, (0..8).map(|x| x as f64 * 0.3 - 1.0).collect()).unwrap();
        // aᵀ·b via explicit transpose.
        let mut at = Tensor2::zeros(3, 2);
        for i in 0..2 {
            for j in 0..3 {
                at.set(j, i, a.get(i, j));
            }
        }
        let direct = at.matmul(&b).unwrap();
        let fused = a.matmul_transpose_self(&b).unwrap();
        assert_eq!(direct.data(), fused.data());

        let c = Tensor2::from_vec(5, 3, (0..15).map(|x| (x as f64).sin()).collect()).unwrap();
        let mut ct = Tensor2::zeros(3, 5);
        for i in 0..5 {
            for j in 0..3 {
                ct.set(j, i, c.get(i, j));
            }
        }
        let direct = a.matmul(&ct).unwrap();
        let fused = a.matmul_transpose_other(&c).unwrap();
        for (x, y) in direct.data().iter().zip(fused.data().iter()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn concat_split_round_trip() {
        let a = Tensor2::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor2::from_vec(2, 3, vec![5.0, 6.0, 7.0, 8.0, 9.0, 10.0]).unwrap();
        let joined = Tensor2::concat_cols(&[&a, &b]).unwrap();
        assert_eq!(joined.row(0), &[1.0, 2.0, 5.0, 6.0, 7.0]);
        let parts = joined.split_cols(&[2, 3]).unwrap();
        assert_eq!(parts[0].data(), a.data());
        assert_eq!(parts[1].data(), b.data());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = Tensor2::zeros(2, 3);
        let b = Tensor2::zeros(2, 3);
        assert!(matches!(
            a.matmul(&b),
            Err(NnError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn grad_buffer_accumulates() {
        let mut t = Tensor2::zeros(1, 3);
        t.accumulate_grad(&Tensor2::from_row(&[1.0, 2.0, 3.0]));
        t.accumulate_grad(&Tensor2::from_row(&[0.5, 0.5, 0.5]));
        assert_eq!(t.grad().unwrap(), &[1.5, 2.5, 3.5]);
        t.zero_grad();
        assert_eq!(t.grad().unwrap(), &[0.0, 0.0, 0.0]);
    }
}
