use serde::{Deserialize, Serialize};

use super::ClassifierError;

/// How slice features are routed to positions within the padded length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutingStrategy {
    /// Pack the l slices at positions 0..l-1.
    FirstL,
    /// Place the l slices at equidistant positions across 0..t-1.
    Aligned,
}

impl RoutingStrategy {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "first_l" => Some(RoutingStrategy::FirstL),
            "aligned" => Some(RoutingStrategy::Aligned),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RoutingStrategy::FirstL => "first_l",
            RoutingStrategy::Aligned => "aligned",
        }
    }
}

/// Classifier hyperparameters. Full-scale defaults; desk-scale runs override
/// them through the same fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    /// Padded sequence length.
    pub t: usize,
    /// Recurrent layer width.
    pub rnn_units: usize,
    /// Dense layer width.
    pub dense_units: usize,
    /// Dropout keep probability in the feature extractor (1.0 disables).
    pub dropout_keep: f64,
    pub num_classes: usize,
    pub routing: RoutingStrategy,
    /// Per-slice feature dimension produced by the extractor.
    pub feature_dim: usize,
    /// Slices are resized to this (height, width) before feature extraction.
    pub input_hw: (usize, usize),
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            t: 700,
            rnn_units: 128,
            dense_units: 128,
            dropout_keep: 0.8,
            num_classes: 2,
            routing: RoutingStrategy::Aligned,
            feature_dim: 32,
            input_hw: (256, 256),
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.t < 1 {
            return Err(ClassifierError::BadConfig("t must be >= 1".into()));
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return Err(ClassifierError::BadConfig(format!(
                "dropout_keep {} outside (0, 1]",
                self.dropout_keep
            )));
        }
        if self.num_classes < 2 {
            return Err(ClassifierError::BadConfig(
                "num_classes must be >= 2".into(),
            ));
        }
        if self.rnn_units < 1 || self.dense_units < 1 || self.feature_dim < 1 {
            return Err(ClassifierError::BadConfig(
                "layer widths must be >= 1".into(),
            ));
        }
        if self.input_hw.0 < 1 || self.input_hw.1 < 1 {
            return Err(ClassifierError::BadConfig(
                "input dimensions must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_full_scale() {
        let c = ClassifierConfig::default();
        assert_eq!(c.t, 700);
        assert_eq!(c.rnn_units, 128);
        assert_eq!(c.dense_units, 128);
        assert_eq!(c.dropout_keep, 0.8);
        assert_eq!(c.input_hw, (256, 256));
        c.validate().unwrap();
    }

    #[test]
    fn validation_catches_bad_keep() {
        let c = ClassifierConfig {
            dropout_keep: 0.0,
            ..ClassifierConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
