//! Run configuration echoed into every output document so that any result
//! can be reproduced from the artifact alone.

use num_rational::Rational64;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::graph::{Topology, DEFAULT_CANDIDATE_CEILING};
use crate::rational::ratio_serde;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Hop bound for solution-space enumeration; None means |nodes| - 1.
    pub max_hops: Option<usize>,
    /// Mining threshold on the likelihood score, exact.
    #[serde(with = "ratio_serde")]
    pub tau: Rational64,
    /// Laplace smoothing applied to likelihood counts.
    #[serde(with = "ratio_serde")]
    pub smoothing: Rational64,
    /// Arrangement-prior weight for feasibility-before-optimization.
    pub feasibility_first_weight: f64,
    /// Arrangement-prior weight for local-scope-before-global ordering.
    pub scope_order_weight: f64,
    /// Discarded paths sampled per generated record.
    pub discard_size: usize,
    /// Hard ceiling on enumerated candidates.
    pub candidate_ceiling: u64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            max_hops: None,
            tau: Rational64::new(3, 5),
            smoothing: Rational64::one(),
            feasibility_first_weight: 4.0,
            scope_order_weight: 2.0,
            discard_size: 10,
            candidate_ceiling: DEFAULT_CANDIDATE_CEILING,
            seed: 0,
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        let zero = Rational64::from_integer(0);
        let one = Rational64::one();
        if self.tau <= zero || self.tau >= one {
            return Err("tau must lie strictly between 0 and 1".into());
        }
        if self.smoothing <= zero {
            return Err("smoothing must be positive".into());
        }
        if self.feasibility_first_weight <= 0.0 || self.scope_order_weight <= 0.0 {
            return Err("prior weights must be positive".into());
        }
        if self.discard_size == 0 {
            return Err("discard_size must be at least 1".into());
        }
        if self.candidate_ceiling == 0 {
            return Err("candidate_ceiling must be at least 1".into());
        }
        if let Some(0) = self.max_hops {
            return Err("max_hops must be at least 1".into());
        }
        Ok(())
    }

    /// The hop bound to use for `t`: the configured value, or |nodes| - 1.
    pub fn effective_max_hops(&self, t: &Topology) -> usize {
        self.max_hops.unwrap_or_else(|| t.nodes().len().saturating_sub(1).max(1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn out_of_range_fields_rejected() {
        let mut cfg = RunConfig::default();
        cfg.tau = Rational64::from_integer(1);
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.discard_size = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.max_hops = Some(0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = RunConfig { max_hops: Some(4), seed: 7, ..RunConfig::default() };
        let json = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
    }
}
