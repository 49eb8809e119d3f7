use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

/// Cumulative communication and computation counts for one run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostCounters {
    /// Global models shipped to clients: `|GM| * K` per round.
    pub models_sent_to_clients: u64,
    /// Locally trained models returned to the server, one per (client, model)
    /// pair that trained in a round.
    pub models_sent_to_server: u64,
    /// Loss evaluations during assignment: one per (client, model, present
    /// group) for FairFedDrift, one per (client, model) for FedDrift.
    pub group_loss_evaluations: u64,
    /// Loss evaluations spent building merge distance matrices, counted the
    /// same way as `group_loss_evaluations`.
    pub merge_matrix_loss_evaluations: u64,
    /// Local epochs executed across all clients and models.
    pub training_passes: u64,
}

impl AddAssign for CostCounters {
    fn add_assign(&mut self, o: Self) {
        self.models_sent_to_clients += o.models_sent_to_clients;
        self.models_sent_to_server += o.models_sent_to_server;
        self.group_loss_evaluations += o.group_loss_evaluations;
        self.merge_matrix_loss_evaluations += o.merge_matrix_loss_evaluations;
        self.training_passes += o.training_passes;
    }
}

impl CostCounters {
    /// Every field of `self` is at least the matching field of `earlier`.
    pub fn dominates(&self, earlier: &CostCounters) -> bool {
        self.models_sent_to_clients >= earlier.models_sent_to_clients
            && self.models_sent_to_server >= earlier.models_sent_to_server
            && self.group_loss_evaluations >= earlier.group_loss_evaluations
            && self.merge_matrix_loss_evaluations >= earlier.merge_matrix_loss_evaluations
            && self.training_passes >= earlier.training_passes
    }
}
