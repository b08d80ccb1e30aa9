use serde::{Deserialize, Serialize};

use crate::autodiff::ops::cosine_similarity;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Similarity gate configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmfParams {
    /// Streams whose best cosine similarity to any other stream falls below
    /// this value are zeroed.
    pub theta_sim: f64,
}

impl Default for AmfParams {
    fn default() -> Self {
        Self { theta_sim: 0.2 }
    }
}

impl AmfParams {
    pub fn new(theta_sim: f64) -> Result<Self> {
        let p = Self { theta_sim };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.theta_sim) {
            return Err(Error::InvalidParameter(format!(
                "theta_sim must lie in [-1, 1], got {}",
                self.theta_sim
            )));
        }
        Ok(())
    }
}

/// Keep/drop decision per stream: stream `i` is dropped when
/// `max_{j != i} cos(s_i, s_j) < theta_sim`. If every stream would be
/// dropped, all are kept.
pub fn amf_mask(streams: &[&[f64]], p: &AmfParams) -> Result<Vec<u8>> {
    p.validate()?;
    if streams.len() < 2 {
        return Err(Error::dim(
            "amf_gate",
            format!("need at least 2 streams, got {}", streams.len()),
        ));
    }
    let width = streams[0].len();
    if streams.iter().any(|s| s.len() != width) {
        return Err(Error::dim("amf_gate", "streams differ in width"));
    }
    let mut mask: Vec<u8> = (0..streams.len())
        .map(|i| {
            let best = (0..streams.len())
                .filter(|&j| j != i)
                .map(|j| cosine_similarity(streams[i], streams[j]))
                .fold(f64::NEG_INFINITY, f64::max);
            u8::from(best >= p.theta_sim)
        })
        .collect();
    if mask.iter().all(|&m| m == 0) {
        mask.iter_mut().for_each(|m| *m = 1);
    }
    Ok(mask)
}

/// Gate and sum equally sized stream vectors. Returns the fused vector and
/// the mask that produced it.
pub fn amf_gate(streams: &[Tensor], p: &AmfParams) -> Result<(Tensor, Vec<u8>)> {
    let views: Vec<&[f64]> = streams.iter().map(Tensor::data).collect();
    let mask = amf_mask(&views, p)?;
    let width = views[0].len();
    let mut fused = vec![0.0; width];
    for (s, &m) in views.iter().zip(&mask) {
        if m == 1 {
            for (f, v) in fused.iter_mut().zip(s.iter()) {
                *f += v;
            }
        }
    }
    Ok((Tensor::vector(fused)?, mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(i: usize, n: usize) -> Tensor {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        Tensor::vector(v).unwrap()
    }

    #[test]
    fn identical_pair_kept() {
        let u = Tensor::vector(vec![0.3, -1.0, 2.0]).unwrap();
        let (fused, mask) = amf_gate(&[u.clone(), u.clone()], &AmfParams::default()).unwrap();
        assert_eq!(mask, vec![1, 1]);
        assert_eq!(fused, u.map(|v| 2.0 * v));
    }

    #[test]
    fn orthonormal_outlier_dropped() {
        let p = AmfParams::new(0.5).unwrap();
        let (fused, mask) = amf_gate(&[e(0, 3), e(0, 3), e(1, 3)], &p).unwrap();
        assert_eq!(mask, vec![1, 1, 0]);
        assert_eq!(fused.data(), &[2.0, 0.0, 0.0]);
    }

    #[test]
    fn disabled_threshold_is_plain_sum() {
        let p = AmfParams::new(-1.0).unwrap();
        let s = [e(0, 2), e(1, 2), Tensor::vector(vec![-1.0, 0.0]).unwrap()];
        let (fused, mask) = amf_gate(&s, &p).unwrap();
        assert_eq!(mask, vec![1, 1, 1]);
        assert_eq!(fused.data(), &[0.0, 1.0]);
    }

    #[test]
    fn all_dropped_falls_back_to_all_kept() {
        let p = AmfParams::new(0.9).unwrap();
        let (_, mask) = amf_gate(&[e(0, 3), e(1, 3), e(2, 3)], &p).unwrap();
        assert_eq!(mask, vec![1, 1, 1]);
    }

    #[test]
    fn zero_norm_stream_has_zero_similarity() {
        let p = AmfParams::new(0.5).unwrap();
        let z = Tensor::zeros(&[3]);
        let (_, mask) = amf_gate(&[e(0, 3), e(0, 3), z], &p).unwrap();
        assert_eq!(mask, vec![1, 1, 0]);
    }

    #[test]
    fn invalid_inputs() {
        assert!(AmfParams::new(1.5).is_err());
        assert!(amf_gate(&[e(0, 3)], &AmfParams::default()).is_err());
        assert!(amf_gate(&[e(0, 3), e(0, 2)], &AmfParams::default()).is_err());
    }
}
