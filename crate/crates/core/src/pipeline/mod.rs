//! From cleaned frames to balanced, scaled, labeled fixed-length windows.

mod prepare;
mod scaler;
mod segment;
mod split;
mod window;

pub use prepare::{clean_labeled, prepare_labeled, prepare_labeled_with, PrepareConfig, Prepared};
pub use scaler::{fit_frame, fit_windows, ScalerKind, ScalerParams, ScalerStats};
pub use segment::{intersect, slide, split_on_gaps, undersample, Segment, SegmentReason, DEFAULT_MAX_GAP_SECS};
pub use split::{split_random, split_time, split_train_valid, SplitMode, SplitSpec};
pub use window::{build_windows, event_windows, window_label, LabelPosition, WindowSet, WindowSpec};
