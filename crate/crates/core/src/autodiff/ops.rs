//! Forward kernels on plain tensors. The tape records these and supplies the
//! matching backward rules; they are also usable directly for inference.

use super::Tensor;
use crate::error::{Error, Result};

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044_715;

/// `C[m,n] = A[m,k] · B[k,n]` on raw row-major slices.
pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aip * bv;
            }
        }
    }
    out
}

/// `Aᵀ[k,m] · G[m,n]` without materialising the transpose.
pub(crate) fn matmul_tn(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in out_row.iter_mut().zip(g_row) {
                *o += aip * gv;
            }
        }
    }
    out
}

/// `G[m,n] · Bᵀ[n,k]` for `B[k,n]`.
pub(crate) fn matmul_nt(g: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            out[i * k + p] = g_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
        }
    }
    out
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = match a.shape() {
        [m, k] => (*m, *k),
        s => {
            return Err(Error::dim(
                "matmul",
                format!("left operand must be 2-D, got {s:?}"),
            ))
        }
    };
    let (k2, n) = match b.shape() {
        [k2, n] => (*k2, *n),
        s => {
            return Err(Error::dim(
                "matmul",
                format!("right operand must be 2-D, got {s:?}"),
            ))
        }
    };
    if k != k2 {
        return Err(Error::dim(
            "matmul",
            format!("inner dimensions differ: {:?} x {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(Tensor::from_parts(
        vec![m, n],
        matmul_raw(a.data(), b.data(), m, k, n),
    ))
}

/// Splits `shape` around `axis` into `(outer, len, inner)` extents.
pub(crate) fn axis_extents(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Numerically stable softmax along `axis` (max-subtracted).
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= x.rank() {
        return Err(Error::dim(
            "softmax",
            format!("axis {axis} out of range for shape {:?}", x.shape()),
        ));
    }
    let (outer, n, inner) = axis_extents(x.shape(), axis);
    let src = x.data();
    let mut out = vec![0.0; src.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| o * n * inner + j * inner + i;
            let max = (0..n).map(|j| src[at(j)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for j in 0..n {
                let e = (src[at(j)] - max).exp();
                out[at(j)] = e;
                total += e;
            }
            for j in 0..n {
                out[at(j)] /= total;
            }
        }
    }
    Ok(Tensor::from_parts(x.shape().to_vec(), out))
}

/// Per-row `log Σ exp` of a row-major `[rows, n]` buffer.
pub(crate) fn logsumexp_rows(data: &[f64], n: usize) -> Vec<f64> {
    data.chunks(n)
        .map(|row| {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
        })
        .collect()
}

/// Mean (or sum) negative log-likelihood of `labels` under row-softmax of
/// `logits[b, n]`.
pub fn cross_entropy(logits: &Tensor, labels: &[usize], sum: bool) -> Result<f64> {
    let (b, n) = match logits.shape() {
        [b, n] => (*b, *n),
        s => {
            return Err(Error::dim(
                "cross_entropy",
                format!("logits must be 2-D, got {s:?}"),
            ))
        }
    };
    check_labels(b, n, labels)?;
    let lse = logsumexp_rows(logits.data(), n);
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| lse[i] - logits.data()[i * n + y])
        .sum();
    Ok(if sum { total } else { total / b as f64 })
}

pub(crate) fn check_labels(b: usize, n: usize, labels: &[usize]) -> Result<()> {
    if labels.len() != b {
        return Err(Error::dim(
            "cross_entropy",
            format!("{b} logit rows but {} labels", labels.len()),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= n) {
        return Err(Error::InvalidParameter(format!(
            "label {bad} out of range for {n} classes"
        )));
    }
    Ok(())
}

/// Layer normalisation over the last axis; returns `(y, xhat, inv_std)`.
pub(crate) fn layer_norm_parts(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    eps: f64,
) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
    let d = x.last_dim();
    if gamma.shape() != [d] || beta.shape() != [d] {
        return Err(Error::dim(
            "layer_norm",
            format!(
                "gamma {:?} / beta {:?} must be [{d}] for input {:?}",
                gamma.shape(),
                beta.shape(),
                x.shape()
            ),
        ));
    }
    if eps <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "layer_norm eps must be > 0, got {eps}"
        )));
    }
    let rows = x.numel() / d;
    let mut y = vec![0.0; x.numel()];
    let mut xhat = vec![0.0; x.numel()];
    let mut inv_std = vec![0.0; rows];
    for r in 0..rows {
        let row = &x.data()[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + eps).sqrt();
        inv_std[r] = is;
        for j in 0..d {
            let h = (row[j] - mean) * is;
            xhat[r * d + j] = h;
            y[r * d + j] = gamma.data()[j] * h + beta.data()[j];
        }
    }
    Ok((Tensor::from_parts(x.shape().to_vec(), y), xhat, inv_std))
}

pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    layer_norm_parts(x, gamma, beta, eps).map(|(y, _, _)| y)
}

/// GELU, tanh approximation.
pub fn gelu(x: f64) -> f64 {
    let t = (SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x)).tanh();
    0.5 * x * (1.0 + t)
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let inner = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    let t = inner.tanh();
    let d_inner = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner
}

/// Cosine similarity; defined as 0 when either vector has zero norm.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn matmul_identity_and_projector() {
        let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(matmul(&Tensor::identity(2), &x).unwrap(), x);
        let p = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let y = Tensor::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]).unwrap();
        let out = matmul(&p, &y).unwrap();
        assert_eq!(out.data(), &[5.0, 6.0, 0.0, 0.0]);
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        let msg = matmul(&a, &b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3] x [2, 3]"), "{msg}");
    }

    #[test]
    fn softmax_examples() {
        let u = softmax(&Tensor::vector(vec![0.0; 3]).unwrap(), 0).unwrap();
        for &p in u.data() {
            assert!(close(p, 1.0 / 3.0, 1e-15));
        }
        let s = softmax(&Tensor::vector(vec![1000.0, 0.0, 0.0]).unwrap(), 0).unwrap();
        assert!(s.is_finite());
        assert!(close(s.data()[0], 1.0, 1e-12));
        assert!(s.data()[1] < 1e-300);
        // e^x_i / Σ e^x_j for [1,2,3]
        let denom = 1f64.exp() + 2f64.exp() + 3f64.exp();
        let r = softmax(&Tensor::vector(vec![1.0, 2.0, 3.0]).unwrap(), 0).unwrap();
        let expected = [1f64.exp() / denom, 2f64.exp() / denom, 3f64.exp() / denom];
        for (got, want) in r.data().iter().zip(expected) {
            assert!(close(*got, want, 1e-15));
        }
        for (got, want) in r.data().iter().zip([0.09003057, 0.24472847, 0.66524096]) {
            assert!(close(*got, want, 5e-9));
        }
    }

    #[test]
    fn softmax_middle_axis() {
        let x = Tensor::new(vec![2, 3, 2], (0..12).map(|v| v as f64 * 0.3).collect()).unwrap();
        let y = softmax(&x, 1).unwrap();
        for o in 0..2 {
            for i in 0..2 {
                let s: f64 = (0..3).map(|j| y.get(&[o, j, i])).sum();
                assert!(close(s, 1.0, 1e-12));
            }
        }
    }

    #[test]
    fn cross_entropy_examples() {
        let zeros = Tensor::zeros(&[3, 6]);
        let l = cross_entropy(&zeros, &[0, 3, 5], false).unwrap();
        assert!(close(l, 6f64.ln(), 1e-12));

        let mut conf = vec![0.0; 6];
        conf[2] = 1e6;
        let t = Tensor::matrix(1, 6, conf).unwrap();
        assert!(cross_entropy(&t, &[2], false).unwrap() < 1e-12);

        assert!(cross_entropy(&zeros, &[0, 6, 1], false).is_err());
    }

    #[test]
    fn cross_entropy_matches_scalar_recomputation() {
        let rows: [Vec<f64>; 2] = [
            vec![0.3, -1.2, 0.8, 0.05, 2.0, -0.4],
            vec![-0.7, 0.1, 0.2, 1.5, -2.2, 0.9],
        ];
        let labels = [4usize, 0];
        let mut expected = 0.0;
        for (row, &y) in rows.iter().zip(&labels) {
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            expected -= (row[y].exp() / z).ln();
        }
        expected /= 2.0;
        let t = Tensor::from_rows(&rows).unwrap();
        assert!(close(
            cross_entropy(&t, &labels, false).unwrap(),
            expected,
            1e-14
        ));
    }

    #[test]
    fn layer_norm_examples() {
        let one = Tensor::full(&[4], 1.0);
        let zero = Tensor::zeros(&[4]);
        let c = Tensor::full(&[2, 4], 3.5);
        let y = layer_norm(&c, &one, &zero, 1e-5).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));

        let g = Tensor::full(&[2], 1.0);
        let b = Tensor::zeros(&[2]);
        let y = layer_norm(&Tensor::vector(vec![1.0, 3.0]).unwrap(), &g, &b, 1e-12).unwrap();
        assert!(close(y.data()[0], -1.0, 1e-9) && close(y.data()[1], 1.0, 1e-9));
    }

    #[test]
    fn cosine_zero_norm_is_zero() {
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
        assert!(close(
            cosine_similarity(&[1.0, 1.0], &[2.0, 2.0]),
            1.0,
            1e-15
        ));
    }
}
