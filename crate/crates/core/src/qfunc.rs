//! Linear-in-sigmoid-features Q-function approximation.
//!
//! `Q(s~) = theta^T phi(s~)` with `phi_i = sigmoid(mu_i^T (s~ / scale))`. The
//! weight vectors `mu_i` are fixed at construction; only `theta` is learned.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng;

/// Logistic function, evaluated without overflow for any finite input.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Derivative of the sigmoid expressed through its value, `s (1 - s)`.
pub fn sigmoid_slope(value: f64) -> f64 {
    value * (1.0 - value)
}

/// Replayable description of a random feature bank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureBankSpec {
    pub seed: u64,
    pub feature_dim: usize,
    pub scales: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBank {
    seed: Option<u64>,
    scales: Vec<f64>,
    /// `weights[i]` is mu_i, one entry per input coordinate.
    weights: Vec<Vec<f64>>,
}

impl FeatureBank {
    /// Draws every `mu_i` i.i.d. standard normal scaled by `1 / sqrt(dim)`.
    pub fn random(seed: u64, feature_dim: usize, scales: Vec<f64>) -> Self {
        assert!(feature_dim >= 1, "feature bank needs at least one feature");
        let dim = scales.len();
        let mut s = rng::seeded(seed);
        let scale = 1.0 / (dim as f64).sqrt();
        let weights = (0..feature_dim)
            .map(|_| {
                (0..dim)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut s);
                        z * scale
                    })
                    .collect()
            })
            .collect();
        FeatureBank {
            seed: Some(seed),
            scales,
            weights,
        }
    }

    pub fn from_weights(weights: Vec<Vec<f64>>, scales: Vec<f64>) -> Self {
        assert!(!weights.is_empty(), "feature bank needs at least one feature");
        for w in &weights {
            assert_eq!(w.len(), scales.len(), "weight vector dimension");
            assert!(w.iter().all(|v| v.is_finite()), "weights must be finite");
        }
        FeatureBank {
            seed: None,
            scales,
            weights,
        }
    }

    pub fn from_spec(spec: &FeatureBankSpec) -> Self {
        Self::random(spec.seed, spec.feature_dim, spec.scales.clone())
    }

    pub fn spec(&self) -> Option<FeatureBankSpec> {
        self.seed.map(|seed| FeatureBankSpec {
            seed,
            feature_dim: self.weights.len(),
            scales: self.scales.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.scales.len()
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// `mu_i[j]`.
    pub fn weight(&self, feature: usize, coord: usize) -> f64 {
        self.weights[feature][coord]
    }

    /// Feature vector of a raw (unnormalised) action-state vector.
    pub fn features(&self, action_state: &[f64]) -> Vec<f64> {
        assert_eq!(action_state.len(), self.input_dim(), "action-state dimension");
        self.weights
            .iter()
            .map(|mu| {
                let z: f64 = mu
                    .iter()
                    .zip(action_state)
                    .zip(&self.scales)
                    .map(|((m, x), s)| m * (x / s))
                    .sum();
                sigmoid(z)
            })
            .collect()
    }
}

/// Learned linear weights (theta for a WD, eta for the server).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(m: usize) -> Self {
        ParamVector(vec![0.0; m])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

pub fn q_value(params: &ParamVector, features: &[f64]) -> f64 {
    assert_eq!(params.len(), features.len(), "parameter/feature length");
    params.0.iter().zip(features).map(|(a, b)| a * b).sum()
}

/// One-step temporal-difference error `r + gamma Q(next) - Q(now)`.
pub fn td_error(reward: f64, params: &ParamVector, phi_now: &[f64], phi_next: &[f64], discount: f64) -> f64 {
    reward + discount * q_value(params, phi_next) - q_value(params, phi_now)
}

/// `delta (gamma phi_next - phi_now)`: half the gradient of delta^2 in the linear weights.
pub fn td_param_gradient(delta: f64, phi_now: &[f64], phi_next: &[f64], discount: f64) -> Vec<f64> {
    assert_eq!(phi_now.len(), phi_next.len(), "feature lengths");
    phi_now
        .iter()
        .zip(phi_next)
        .map(|(now, next)| delta * (discount * next - now))
        .collect()
}

/// Half the derivative of delta^2 with respect to an action coordinate that
/// both action-state vectors share.
///
/// `immediate` is the derivative of the reward in that coordinate (raw units).
pub fn td_action_gradient(
    delta: f64,
    immediate: f64,
    params: &ParamVector,
    bank: &FeatureBank,
    coord: usize,
    phi_now: &[f64],
    phi_next: &[f64],
    discount: f64,
) -> f64 {
    let inv_scale = 1.0 / bank.scales()[coord];
    let through_features: f64 = (0..bank.len())
        .map(|i| {
            params.0[i]
                * bank.weight(i, coord)
                * inv_scale
                * (discount * sigmoid_slope(phi_next[i]) - sigmoid_slope(phi_now[i]))
        })
        .sum();
    delta * (immediate + through_features)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        assert!(sigmoid(700.0) <= 1.0 && sigmoid(-700.0) > 0.0);
        assert!(sigmoid(-700.0).is_finite() && sigmoid(700.0).is_finite());
    }

    #[test]
    fn sigmoid_slope_matches_central_difference() {
        for &x in &[-6.0, -1.3, 0.0, 0.2, 2.5, 9.0] {
            let h = 1e-5;
            // difference the flat tail of the mirrored curve to avoid cancellation near 1
            let fd = if x > 0.0 {
                (sigmoid(-x + h) - sigmoid(-x - h)) / (2.0 * h)
            } else {
                (sigmoid(x + h) - sigmoid(x - h)) / (2.0 * h)
            };
            let an = sigmoid_slope(sigmoid(x));
            assert!(((fd - an) / an).abs() <= 1e-8, "x={x} fd={fd} an={an}");
        }
    }

    #[test]
    fn zero_bank_gives_halves() {
        let bank = FeatureBank::from_weights(vec![vec![0.0; 3]; 4], vec![1.0; 3]);
        assert_eq!(bank.features(&[1.0, -2.0, 3.0]), vec![0.5; 4]);
    }

    #[test]
    fn basis_weight_composes_with_sigmoid() {
        let bank = FeatureBank::from_weights(vec![vec![1.0, 0.0, 0.0]], vec![1.0; 3]);
        let phi = bank.features(&[3f64.ln(), 0.0, 0.0]);
        assert!((phi[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn scales_normalise_inputs() {
        let bank = FeatureBank::from_weights(vec![vec![1.0]], vec![1e10]);
        assert!((bank.features(&[1e10])[0] - sigmoid(1.0)).abs() < 1e-15);
    }

    #[test]
    fn q_value_examples() {
        let phi = [0.5, 0.25];
        assert_eq!(q_value(&ParamVector::zeros(2), &phi), 0.0);
        assert_eq!(q_value(&ParamVector(vec![0.0, 1.0]), &phi), 0.25);
        assert_eq!(q_value(&ParamVector(vec![1.0, 2.0]), &phi), 1.0);
    }

    #[test]
    fn random_bank_replays_from_spec() {
        let bank = FeatureBank::random(17, 5, vec![1.0, 2.0, 3.0]);
        let spec = bank.spec().unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let again = FeatureBank::from_spec(&serde_json::from_str(&json).unwrap());
        assert_eq!(bank, again);
    }

    #[test]
    #[should_panic(expected = "action-state dimension")]
    fn dimension_mismatch_panics() {
        FeatureBank::random(1, 3, vec![1.0; 4]).features(&[0.0; 3]);
    }
}
