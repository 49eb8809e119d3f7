//! One communication round for every global model.

use rayon::prelude::*;

use super::{CostCounters, FederationConfig, ModelId, ModelPool};
use crate::error::Result;
use crate::model::{local_train, weighted_average};
use crate::seed;

/// Trains every model on the clients holding retained data for it and
/// replaces it with the data-size-weighted average of the local results.
///
/// Local training runs in parallel; results are combined in client order, so
/// the outcome does not depend on scheduling. Models without participants are
/// left untouched.
pub fn train_round(
    pool: &mut ModelPool<'_>,
    cfg: &FederationConfig,
    timestep: usize,
    round: usize,
    counters: &mut CostCounters,
) -> Result<()> {
    let ids = pool.ids();
    let tasks: Vec<(ModelId, usize)> = ids
        .iter()
        .flat_map(|&m| pool.clients_of(m).into_iter().map(move |k| (m, k)))
        .collect();

    let shared: &ModelPool<'_> = pool;
    let locals = tasks
        .par_iter()
        .map(|&(m, k)| {
            let data = shared.data_for(k, m);
            let train = cfg.train.with_seed(seed::derive_seed(
                cfg.seed,
                &[seed::TAG_TRAIN, k as u64, m, timestep as u64, round as u64],
            ));
            local_train(shared.params(m), &data, &train)
                .map(|p| (p, data.len() as f64))
                .map_err(|e| e.at(timestep, k, Some(m)))
        })
        .collect::<Result<Vec<_>>>()?;

    counters.models_sent_to_clients += (ids.len() * cfg.clients) as u64;
    counters.models_sent_to_server += tasks.len() as u64;
    counters.training_passes += (tasks.len() * cfg.train.epochs) as u64;

    let mut start = 0;
    for &m in &ids {
        let n = tasks[start..].iter().take_while(|(id, _)| *id == m).count();
        if n == 0 {
            continue;
        }
        let group = &locals[start..start + n];
        start += n;
        let params: Vec<_> = group.iter().map(|(p, _)| p).collect();
        let weights: Vec<f64> = group.iter().map(|(_, w)| *w).collect();
        let avg = weighted_average(&params, &weights)?;
        let model = pool.model_mut(m);
        model.params = avg;
        model.trained = true;
    }
    Ok(())
}
