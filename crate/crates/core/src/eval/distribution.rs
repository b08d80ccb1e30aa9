use std::fmt::Write as _;

use crate::data::{Dataset, EmotionLabel};
use crate::error::{Error, Result};
use crate::NUM_CLASSES;

/// Black-box probing values for the test set, in label-code order
/// (worry, happy, neutral, angry, surprise, sad). Treated as unnormalized
/// weights.
pub const PROBED_TEST_VALUES: [f64; NUM_CLASSES] =
    [0.0326, 0.0732, 0.0505, 0.03412, 0.0094, 0.1157];

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionReport {
    pub train: [f64; NUM_CLASSES],
    pub test: [f64; NUM_CLASSES],
    pub train_prop: [f64; NUM_CLASSES],
    pub test_prop: [f64; NUM_CLASSES],
}

fn normalize(values: &[f64; NUM_CLASSES], what: &str) -> Result<[f64; NUM_CLASSES]> {
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "{what} values must be finite and non-negative, got {values:?}"
        )));
    }
    let total: f64 = values.iter().sum();
    if total == 0.0 {
        return Err(Error::Data(format!("{what} population is all zero")));
    }
    Ok(values.map(|v| v / total))
}

impl DistributionReport {
    pub fn new(train: [f64; NUM_CLASSES], test: [f64; NUM_CLASSES]) -> Result<Self> {
        Ok(Self {
            train_prop: normalize(&train, "train")?,
            test_prop: normalize(&test, "test")?,
            train,
            test,
        })
    }

    /// One row per label: `label,train_value,train_proportion,test_value,test_proportion`.
    /// Raw values are written exactly, proportions to four decimals.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("label,train_value,train_proportion,test_value,test_proportion\n");
        for l in EmotionLabel::ALL {
            let i = l.index();
            let _ = writeln!(
                out,
                "{},{},{:.4},{},{:.4}",
                l.name(),
                self.train[i],
                self.train_prop[i],
                self.test[i],
                self.test_prop[i]
            );
        }
        out
    }
}

/// Label distribution of a labeled training set next to a test-set
/// estimate.
pub fn distribution_report(
    train: &Dataset,
    test_estimate: &[f64; NUM_CLASSES],
) -> Result<DistributionReport> {
    train.labels()?;
    let counts = train.label_counts().map(|c| c as f64);
    DistributionReport::new(counts, *test_estimate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::REFERENCE_TRAIN_COUNTS;

    #[test]
    fn reference_populations() {
        let r =
            DistributionReport::new(REFERENCE_TRAIN_COUNTS.map(|c| c as f64), PROBED_TEST_VALUES)
                .unwrap();
        assert!((r.train_prop.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((r.test_prop.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((r.train_prop[0] - 616.0 / 5030.0).abs() < 1e-15);
        let sad = EmotionLabel::Sad.index();
        assert!((r.test_prop[sad] - 0.1157 / 0.31552).abs() < 1e-12);
        assert!(r.to_csv().contains("surprise,190,0.0378,0.0094,0.0298"));
    }

    #[test]
    fn uniform_and_errors() {
        let r = DistributionReport::new([5.0; 6], [2.0; 6]).unwrap();
        assert!(r.train_prop.iter().all(|p| (p - 1.0 / 6.0).abs() < 1e-15));
        assert!(DistributionReport::new([0.0; 6], [1.0; 6]).is_err());
        assert!(DistributionReport::new([1.0; 6], [-1.0, 1.0, 1.0, 1.0, 1.0, 1.0]).is_err());
    }
}
