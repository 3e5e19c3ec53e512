//! Message passing networks over simplicial complexes.
//!
//! Two variants share one implementation, selected by config: the invariant
//! network conditions messages on precomputed geometric invariants and never
//! moves points, while the equivariant network additionally steers node
//! positions each layer and therefore recomputes the invariants on the
//! differentiation tape from the updated coordinates.

mod batch;
mod net;
mod tape_inv;

pub use batch::{prepare, PreparedBatch};
pub use net::{EmpsnModel, ForwardOutput};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complex::adjacency::AdjacencyKind;
use crate::complex::ComplexError;
use crate::invariants::InvariantError;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error(transparent)]
    Invariant(#[from] InvariantError),
}

fn default_fourier_scale() -> f64 {
    1.0
}

fn default_num_frequencies() -> usize {
    8
}

/// Model architecture and task wiring, JSON-serializable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmpsnConfig {
    /// Highest simplex dimension kept by the lift.
    pub max_dim: usize,
    /// Highest communication pair (a, b): the model wires every pair
    /// (j, j) and (j, j+1) up to and including (a, b) in lexicographic
    /// order — (0,0), (0,1), (1,1), (1,2), (2,2), ...
    pub comm_type: (usize, usize),
    pub hidden_dim: usize,
    pub num_layers: usize,
    /// Lift radius used when the model (re-)lifts point clouds itself.
    pub delta: f64,
    /// Equivariant variant: update node positions each layer.
    pub update_positions: bool,
    /// Feed initial velocities into position updates and node-pair invariants.
    pub use_velocity: bool,
    /// Zero out all geometric invariants (topology-only ablation).
    #[serde(default)]
    pub geometry_ablation: bool,
    /// Embed invariants with Gaussian Fourier features.
    #[serde(default)]
    pub fourier: bool,
    #[serde(default = "default_fourier_scale")]
    pub fourier_scale: f64,
    #[serde(default = "default_num_frequencies")]
    pub num_frequencies: usize,
    /// Batch normalization inside message and update MLPs.
    #[serde(default)]
    pub batch_norm: bool,
    /// Re-lift the complex from moved positions after each layer
    /// (single-sample forward only).
    #[serde(default)]
    pub relift: bool,
    /// Width of per-node input features.
    pub in_features: usize,
    /// Readout width for graph-level tasks; 0 disables the readout head.
    #[serde(default)]
    pub target_width: usize,
}

impl EmpsnConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let (a, b) = self.comm_type;
        if !(a == b || b == a + 1) {
            return Err(ModelError::Config(format!(
                "comm_type ({a},{b}) must be of the form (k,k) or (k,k+1)"
            )));
        }
        if b > self.max_dim {
            return Err(ModelError::Config(format!(
                "comm_type ({a},{b}) exceeds max_dim {}",
                self.max_dim
            )));
        }
        if self.hidden_dim < 1 || self.num_layers < 1 || self.in_features < 1 {
            return Err(ModelError::Config(
                "hidden_dim, num_layers, and in_features must be ≥ 1".into(),
            ));
        }
        if self.fourier && self.num_frequencies < 1 {
            return Err(ModelError::Config("num_frequencies must be ≥ 1".into()));
        }
        if self.relift && !self.update_positions {
            return Err(ModelError::Config(
                "re-lifting is only meaningful when positions update".into(),
            ));
        }
        if self.update_positions && self.max_dim > 3 {
            return Err(ModelError::Config(
                "position updates support max_dim ≤ 3 (on-tape invariants cover simplex dims ≤ 2)"
                    .into(),
            ));
        }
        if self.update_positions {
            for rel in self.relations() {
                if rel.sender_dim.max(rel.receiver_dim) > 2 {
                    return Err(ModelError::Config(format!(
                        "position updates cannot recompute invariants for {} ({}, {})",
                        rel.kind.name(),
                        rel.sender_dim,
                        rel.receiver_dim
                    )));
                }
            }
        }
        Ok(())
    }

    /// The wired message relations, in deterministic order. Each
    /// communication pair (j, j) yields upper-adjacent traffic (skipped
    /// when no witness dimension exists), and each (j, j+1) yields
    /// boundary traffic into dimension j+1 plus coboundary traffic back.
    pub fn relations(&self) -> Vec<Relation> {
        let mut rels = Vec::new();
        let (a, b) = self.comm_type;
        let mut j = 0;
        loop {
            // (j, j)
            if (j, j) > (a, b) {
                break;
            }
            if j + 1 <= self.max_dim {
                rels.push(Relation {
                    kind: AdjacencyKind::Upper,
                    sender_dim: j,
                    receiver_dim: j,
                });
            }
            // (j, j+1)
            if (j, j + 1) > (a, b) {
                break;
            }
            rels.push(Relation {
                kind: AdjacencyKind::Boundary,
                sender_dim: j,
                receiver_dim: j + 1,
            });
            rels.push(Relation {
                kind: AdjacencyKind::Coboundary,
                sender_dim: j + 1,
                receiver_dim: j,
            });
            j += 1;
        }
        rels
    }
}

/// One wired message relation: senders of one dimension feeding receivers
/// of another along a simplicial adjacency.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Relation {
    pub kind: AdjacencyKind,
    pub sender_dim: usize,
    pub receiver_dim: usize,
}

impl Relation {
    /// Stable name used in parameter keys.
    pub fn name(&self) -> String {
        format!("{}_{}_{}", self.kind.name(), self.sender_dim, self.receiver_dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config() -> EmpsnConfig {
        EmpsnConfig {
            max_dim: 2,
            comm_type: (1, 2),
            hidden_dim: 8,
            num_layers: 2,
            delta: 1.0,
            update_positions: false,
            use_velocity: false,
            geometry_ablation: false,
            fourier: false,
            fourier_scale: 1.0,
            num_frequencies: 8,
            batch_norm: false,
            relift: false,
            in_features: 1,
            target_width: 0,
        }
    }

    #[test]
    fn comm_type_1_2_wires_six_relations() {
        let rels = base_config().relations();
        let names: Vec<String> = rels.iter().map(Relation::name).collect();
        assert_eq!(
            names,
            vec![
                "upper_0_0",
                "boundary_0_1",
                "coboundary_1_0",
                "upper_1_1",
                "boundary_1_2",
                "coboundary_2_1",
            ]
        );
    }

    #[test]
    fn comm_type_wiring_is_monotone() {
        // a (1,2) model contains exactly the (1,1) wiring plus the 1↔2 traffic
        let mut small = base_config();
        small.comm_type = (1, 1);
        let mut large = base_config();
        large.comm_type = (1, 2);
        let small_rels = small.relations();
        let large_rels = large.relations();
        assert_eq!(&large_rels[..small_rels.len()], &small_rels[..]);
        let extra: Vec<String> = large_rels[small_rels.len()..]
            .iter()
            .map(Relation::name)
            .collect();
        assert_eq!(extra, vec!["boundary_1_2", "coboundary_2_1"]);
    }

    #[test]
    fn upper_traffic_without_witness_dimension_is_skipped() {
        let mut cfg = base_config();
        cfg.max_dim = 2;
        cfg.comm_type = (2, 2);
        let names: Vec<String> = cfg.relations().iter().map(Relation::name).collect();
        // (2,2) upper needs 3-simplices; max_dim 2 has none
        assert!(!names.contains(&"upper_2_2".to_string()));
        assert!(names.contains(&"coboundary_2_1".to_string()));

        cfg.max_dim = 3;
        let names: Vec<String> = cfg.relations().iter().map(Relation::name).collect();
        assert!(names.contains(&"upper_2_2".to_string()));
    }

    #[test]
    fn config_validation_rejects_bad_shapes() {
        let mut cfg = base_config();
        cfg.comm_type = (0, 2);
        assert!(cfg.validate().is_err());

        let mut cfg = base_config();
        cfg.comm_type = (2, 3);
        assert!(cfg.validate().is_err()); // exceeds max_dim

        let mut cfg = base_config();
        cfg.hidden_dim = 0;
        assert!(cfg.validate().is_err());

        let mut cfg = base_config();
        cfg.max_dim = 3;
        cfg.comm_type = (2, 3);
        cfg.update_positions = true;
        assert!(cfg.validate().is_err()); // dim-3 receivers not recomputable on tape

        assert!(base_config().validate().is_ok());
    }

    #[test]
    fn config_round_trips_through_json_with_defaults() {
        let cfg = base_config();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: EmpsnConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.comm_type, cfg.comm_type);
        assert_eq!(back.hidden_dim, cfg.hidden_dim);

        // minimal document relies on serde defaults
        let minimal = r#"{
            "max_dim": 2, "comm_type": [1, 2], "hidden_dim": 16,
            "num_layers": 4, "delta": 4.0, "update_positions": true,
            "use_velocity": true, "in_features": 2
        }"#;
        let cfg: EmpsnConfig = serde_json::from_str(minimal).unwrap();
        assert!(!cfg.geometry_ablation);
        assert!(!cfg.fourier);
        assert_eq!(cfg.fourier_scale, 1.0);
        assert_eq!(cfg.target_width, 0);
        assert!(cfg.validate().is_ok());
    }
}
