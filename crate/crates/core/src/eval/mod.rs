//! Classification metrics, label-distribution reports and the ablation
//! harness.

mod ablation;
mod distribution;
mod metrics;

pub use ablation::{
    ablation_run, reference_benchmark, AblationConfig, AblationData, AblationGrid, AblationRow,
    AblationTable, FeatureSet, Strategy, REFERENCE_SPLIT,
};
pub use distribution::{distribution_report, DistributionReport, PROBED_TEST_VALUES};
pub use metrics::{f1_from_labels, f1_scores, Averaging, ClassScore, ConfusionMatrix, F1Report};
