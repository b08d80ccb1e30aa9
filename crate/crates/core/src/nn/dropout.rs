use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Inverted dropout. Inactive (the identity) unless built with
/// [`Dropout::training`] and a positive rate.
#[derive(Debug, Clone)]
pub struct Dropout {
    rate: f64,
    rng: Option<SplitMix64>,
}

impl Dropout {
    pub fn off() -> Self {
        Self {
            rate: 0.0,
            rng: None,
        }
    }

    pub fn training(rate: f64, seed: u64) -> Result<Self> {
        check_rate(rate)?;
        Ok(Self {
            rate,
            rng: Some(SplitMix64::new(seed)),
        })
    }

    pub fn is_active(&self) -> bool {
        self.rng.is_some() && self.rate > 0.0
    }

    /// Zero each element with probability `rate` and scale survivors by
    /// `1 / (1 - rate)`.
    pub fn apply(&mut self, tape: &mut Tape, x: Var) -> Result<Var> {
        let rate = self.rate;
        let Some(rng) = self.rng.as_mut().filter(|_| rate > 0.0) else {
            return Ok(x);
        };
        let keep = 1.0 / (1.0 - rate);
        let shape = tape.value(x).shape().to_vec();
        let n: usize = shape.iter().product();
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.next_unit() < rate { 0.0 } else { keep })
            .collect();
        let m = tape.constant(Tensor::new(shape, mask)?);
        tape.mul(x, m)
    }
}

pub(crate) fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidParameter(format!(
            "dropout rate must lie in [0, 1), got {rate}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn off_is_identity() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(&[3, 4], 2.0));
        let y = Dropout::off().apply(&mut tape, x).unwrap();
        assert_eq!(x, y);
        let mut d = Dropout::training(0.0, 1).unwrap();
        assert_eq!(d.apply(&mut tape, x).unwrap(), x);
    }

    #[test]
    fn mask_values_and_rate() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(&[100, 100], 1.0));
        let mut d = Dropout::training(0.25, 7).unwrap();
        let y = d.apply(&mut tape, x).unwrap();
        let vals = tape.value(y).data();
        assert!(vals
            .iter()
            .all(|&v| v == 0.0 || (v - 4.0 / 3.0).abs() < 1e-15));
        let dropped = vals.iter().filter(|&&v| v == 0.0).count() as f64 / 1e4;
        assert!((dropped - 0.25).abs() < 0.02, "{dropped}");
    }

    #[test]
    fn rejects_bad_rate() {
        assert!(Dropout::training(1.0, 0).is_err());
        assert!(Dropout::training(-0.1, 0).is_err());
    }
}
