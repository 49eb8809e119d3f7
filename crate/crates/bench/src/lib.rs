//! Fixtures shared by the benchmarks in `benches/`.

use fairdrift::federation::ModelPool;
use fairdrift::model::init_params;
use fairdrift::{
    build_schedule, build_stream, Architecture, Dataset, DriftSchedule, Scenario, StreamGrid,
    TrainConfig,
};

pub fn arch(hidden: usize) -> Architecture {
    let d = Dataset::synthetic();
    Architecture::new(d.feature_dim(), hidden, d.classes()).expect("valid architecture")
}

pub fn train_config() -> TrainConfig {
    TrainConfig {
        epochs: 5,
        batch_size: 32,
        learning_rate: 0.1,
        seed: 0,
    }
}

/// Ten clients on scenario 4.1 with `size` examples per timestep.
pub fn stream(size: usize) -> (DriftSchedule, StreamGrid) {
    let schedule = build_schedule(Scenario::S4_1, 10, 10).expect("canonical scenario");
    let streams = build_stream(&Dataset::synthetic(), &schedule, 0.1, size, 0).expect("stream");
    (schedule, streams)
}

/// A pool of `models` trained-flagged models with the first `timesteps`
/// batches of each client spread round-robin over them.
pub fn pool(streams: &StreamGrid, models: usize, timesteps: usize, hidden: usize) -> ModelPool<'_> {
    let a = arch(hidden);
    let mut pool = ModelPool::new(streams.len(), init_params(a, 0).expect("init"));
    let mut ids = vec![0];
    for m in 1..models {
        ids.push(pool.insert(init_params(a, m as u64).expect("init"), true));
    }
    for (k, row) in streams.iter().enumerate() {
        let id = ids[k % models];
        for batch in &row[..timesteps] {
            pool.retain(k, batch.timestep, id, batch);
        }
        pool.set_current(k, id);
    }
    pool
}
