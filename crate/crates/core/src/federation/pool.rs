use std::collections::BTreeMap;

use super::{ModelId, Window};
use crate::data::{Example, TimestepBatch};
use crate::model::ModelParams;

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalModel {
    pub params: ModelParams,
    /// Set once the model has gone through a training round with participants.
    pub trained: bool,
}

/// One retained timestep of a client's history.
#[derive(Clone, Copy, Debug)]
pub struct Retained<'a> {
    pub timestep: usize,
    pub model: ModelId,
    pub batch: &'a TimestepBatch,
}

/// Losses a client observed at the previous timestep; the drift thresholds are
/// measured from these.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RefLosses {
    pub groups: Vec<Option<f64>>,
    pub overall: Option<f64>,
}

impl RefLosses {
    pub fn group(&self, s: u8) -> Option<f64> {
        self.groups.get(s as usize).copied().flatten()
    }
}

/// The set of global models plus every client's retained history.
#[derive(Clone, Debug)]
pub struct ModelPool<'a> {
    models: BTreeMap<ModelId, GlobalModel>,
    next_id: ModelId,
    windows: Vec<Vec<Retained<'a>>>,
    refs: Vec<RefLosses>,
    current: Vec<ModelId>,
}

impl<'a> ModelPool<'a> {
    /// A pool holding `initial` as model 0 with every client assigned to it.
    pub fn new(clients: usize, initial: ModelParams) -> Self {
        let mut models = BTreeMap::new();
        models.insert(
            0,
            GlobalModel {
                params: initial,
                trained: false,
            },
        );
        Self {
            models,
            next_id: 1,
            windows: vec![Vec::new(); clients],
            refs: vec![RefLosses::default(); clients],
            current: vec![0; clients],
        }
    }

    pub fn clients(&self) -> usize {
        self.current.len()
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn ids(&self) -> Vec<ModelId> {
        self.models.keys().copied().collect()
    }

    pub fn contains(&self, id: ModelId) -> bool {
        self.models.contains_key(&id)
    }

    pub fn model(&self, id: ModelId) -> Option<&GlobalModel> {
        self.models.get(&id)
    }

    pub fn params(&self, id: ModelId) -> &ModelParams {
        &self.models[&id].params
    }

    pub(crate) fn model_mut(&mut self, id: ModelId) -> &mut GlobalModel {
        self.models.get_mut(&id).expect("live model id")
    }

    pub fn next_id(&self) -> ModelId {
        self.next_id
    }

    /// Adds a model under a fresh id.
    pub fn insert(&mut self, params: ModelParams, trained: bool) -> ModelId {
        let id = self.next_id;
        self.next_id += 1;
        self.models.insert(id, GlobalModel { params, trained });
        id
    }

    /// Adds a model under a caller-chosen id (used by the oracle, whose ids are
    /// concept indices). Ids stay unique: later fresh ids skip past it.
    pub fn insert_with_id(&mut self, id: ModelId, params: ModelParams) {
        assert!(!self.models.contains_key(&id), "model id {id} already live");
        self.models.insert(
            id,
            GlobalModel {
                params,
                trained: false,
            },
        );
        self.next_id = self.next_id.max(id + 1);
    }

    pub(crate) fn remove(&mut self, id: ModelId) {
        self.models.remove(&id);
    }

    pub fn current(&self, client: usize) -> ModelId {
        self.current[client]
    }

    pub fn set_current(&mut self, client: usize, model: ModelId) {
        debug_assert!(self.contains(model));
        self.current[client] = model;
    }

    pub fn refs(&self, client: usize) -> &RefLosses {
        &self.refs[client]
    }

    pub fn set_refs(&mut self, client: usize, refs: RefLosses) {
        self.refs[client] = refs;
    }

    pub fn refs_mut(&mut self, client: usize) -> &mut RefLosses {
        &mut self.refs[client]
    }

    /// Records that `client` holds `batch` for `timestep` under `model`.
    pub fn retain(&mut self, client: usize, timestep: usize, model: ModelId, batch: &'a TimestepBatch) {
        self.windows[client].push(Retained {
            timestep,
            model,
            batch,
        });
    }

    /// Drops history older than the window allows at timestep `t`.
    pub fn trim(&mut self, t: usize, window: Window) {
        let earliest = window.earliest(t);
        for w in &mut self.windows {
            w.retain(|r| r.timestep >= earliest);
        }
    }

    pub fn window(&self, client: usize) -> &[Retained<'a>] {
        &self.windows[client]
    }

    /// Union of `client`'s retained batches assigned to `model`, oldest first.
    pub fn data_for(&self, client: usize, model: ModelId) -> Vec<&'a Example> {
        self.windows[client]
            .iter()
            .filter(|r| r.model == model)
            .flat_map(|r| r.batch.examples.iter())
            .collect()
    }

    /// Clients with any retained data assigned to `model`, ascending.
    pub fn clients_of(&self, model: ModelId) -> Vec<usize> {
        (0..self.clients())
            .filter(|&k| self.windows[k].iter().any(|r| r.model == model))
            .collect()
    }

    /// Total retained examples assigned to `model` across clients.
    pub fn data_size(&self, model: ModelId) -> usize {
        self.windows
            .iter()
            .flatten()
            .filter(|r| r.model == model)
            .map(|r| r.batch.len())
            .sum()
    }

    /// Rewrites every reference to `from` (history and current assignment) as `to`.
    pub(crate) fn relabel(&mut self, from: ModelId, to: ModelId) {
        for w in &mut self.windows {
            for r in w.iter_mut().filter(|r| r.model == from) {
                r.model = to;
            }
        }
        for c in self.current.iter_mut().filter(|c| **c == from) {
            *c = to;
        }
    }

    /// Every assignment id refers to a live model.
    pub fn assignments_are_live(&self) -> bool {
        self.current.iter().all(|m| self.contains(*m))
            && self.windows.iter().flatten().all(|r| self.contains(r.model))
    }
}
