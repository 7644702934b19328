use crate::error::{LabError, Result};
use crate::model::TrainTrace;

/// First step of each round at which training accuracy reached `threshold`;
/// `None` marks a round that never got there.
pub fn round_speed(traces: &[TrainTrace], threshold: f64) -> Result<Vec<Option<usize>>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(LabError::Config(format!("threshold {threshold} outside [0, 1]")));
    }
    Ok(traces.iter().map(|t| t.steps_to_threshold(threshold)).collect())
}

pub fn format_speed(entry: Option<usize>) -> String {
    entry.map_or_else(|| "unreached".to_string(), |s| s.to_string())
}
