//! Sensor-frame data model, ingestion, cleaning and feature analysis.

mod clean;
mod correlation;
mod frame;

pub use clean::{binarize_person, interpolate_missing, missing_report, EdgePolicy, MissingReport, MissingRun};
pub use correlation::{pearson, pearson_matrix, select_features, CorrelationMatrix, DroppedFeature, FeatureSet};
pub use frame::{parse_frame, read_frame, write_frame, Channel, ColumnSchema, LabelSeries, SensorFrame};
