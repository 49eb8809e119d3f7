use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use super::ConceptId;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// Every client stays on concept A.
    None,
    S4_1,
    S4_2,
    S4_3,
    S4_4,
    S4_5,
}

impl Scenario {
    pub const CANONICAL: [Scenario; 5] = [
        Scenario::S4_1,
        Scenario::S4_2,
        Scenario::S4_3,
        Scenario::S4_4,
        Scenario::S4_5,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::None => "none",
            Scenario::S4_1 => "4.1",
            Scenario::S4_2 => "4.2",
            Scenario::S4_3 => "4.3",
            Scenario::S4_4 => "4.4",
            Scenario::S4_5 => "4.5",
        }
    }

    /// Rows are clients, columns timesteps.
    fn grid(self) -> Option<[&'static str; 10]> {
        let rows = match self {
            Scenario::None => return None,
            // B then C arrive in sequence.
            Scenario::S4_1 => [
                "AABBBBCCCC", "AABBBBCCCC", "AABBBBCCCC", "AABBBBCCCC", "AABBBBCCCC",
                "AAAACCCCCC", "AAAACCCCCC", "AAAACCCCCC", "AAAACCCCCC", "AAAACCCCCC",
            ],
            // Same three concepts with A and B recurring.
            Scenario::S4_2 => [
                "AABBCCAAAA", "AABBCCAAAA", "AABBCCAAAA", "AABBCCAAAA", "AABBCCAAAA",
                "AAAAAABBBB", "AAAAAABBBB", "AAAAAABBBB", "AAAAAAAAAA", "AAAAAAAAAA",
            ],
            // B and C first appear in the same timestep.
            Scenario::S4_3 => [
                "AABBBBDDAA", "AABBBBDDAA", "AABBBBDDAA", "AACCCCAAAA", "AACCCCAAAA",
                "AACCCCAAAA", "AAAABBCCCC", "AAAABBCCCC", "AAAABBCCCC", "AAAADDDDBB",
            ],
            Scenario::S4_4 => [
                "AABBBCCCDD", "AABBBCCCDD", "AAACCCDDDE", "AAACCCDDDE", "AABBBBEEEE",
                "AABBBBEEEE", "AAADDBBBAA", "AAADDBBBAA", "AACAAEEECC", "AACAAEEECC",
            ],
            // Irregular per-client patterns over all five concepts.
            Scenario::S4_5 => [
                "ABBCDDDEAA", "AAAEECCBBD", "ACCBBBBDDE", "AAAADEECCC", "ABBBCCCCEE",
                "AAADDBBEEC", "AEEAACCDBB", "AAACCCCAEE", "ADDEBBBCCA", "AAAAADDDCC",
            ],
        };
        Some(rows)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" | "0" => Ok(Scenario::None),
            "4.1" => Ok(Scenario::S4_1),
            "4.2" => Ok(Scenario::S4_2),
            "4.3" => Ok(Scenario::S4_3),
            "4.4" => Ok(Scenario::S4_4),
            "4.5" => Ok(Scenario::S4_5),
            other => Err(Error::config(format!(
                "unknown scenario {other:?} (expected none, 4.1 .. 4.5)"
            ))),
        }
    }
}

/// Concept grid indexed `[client][timestep]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DriftSchedule {
    scenario: Scenario,
    grid: Vec<Vec<ConceptId>>,
    drift_events: usize,
    drift_timesteps: usize,
}

impl DriftSchedule {
    /// Validates a grid and derives its drift counts.
    pub fn from_grid(scenario: Scenario, grid: Vec<Vec<ConceptId>>) -> Result<Self> {
        let width = grid.first().map(Vec::len).unwrap_or(0);
        if grid.is_empty() || width == 0 {
            return Err(Error::config("schedule needs at least one client and one timestep"));
        }
        if grid.iter().any(|row| row.len() != width) {
            return Err(Error::config("schedule rows differ in length"));
        }
        if grid.iter().any(|row| row[0] != ConceptId::A) {
            return Err(Error::config("every client must start on concept A"));
        }
        let (drift_events, drift_timesteps) = count_drifts(&grid);
        Ok(Self {
            scenario,
            grid,
            drift_events,
            drift_timesteps,
        })
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn clients(&self) -> usize {
        self.grid.len()
    }

    pub fn timesteps(&self) -> usize {
        self.grid[0].len()
    }

    pub fn concept(&self, client: usize, timestep: usize) -> ConceptId {
        self.grid[client][timestep]
    }

    pub fn row(&self, client: usize) -> &[ConceptId] {
        &self.grid[client]
    }

    pub fn drift_events(&self) -> usize {
        self.drift_events
    }

    pub fn drift_timesteps(&self) -> usize {
        self.drift_timesteps
    }

    pub fn distinct_concepts(&self) -> BTreeSet<ConceptId> {
        self.grid.iter().flatten().copied().collect()
    }

    /// Timesteps at which at least one client changes concept.
    pub fn drift_timestep_list(&self) -> Vec<usize> {
        (1..self.timesteps())
            .filter(|&t| self.grid.iter().any(|row| row[t] != row[t - 1]))
            .collect()
    }

    pub fn first_drift_timestep(&self) -> Option<usize> {
        self.drift_timestep_list().first().copied()
    }
}

fn count_drifts(grid: &[Vec<ConceptId>]) -> (usize, usize) {
    let width = grid[0].len();
    let mut events = 0;
    let mut timesteps = 0;
    for t in 1..width {
        let changes = grid.iter().filter(|row| row[t] != row[t - 1]).count();
        events += changes;
        timesteps += (changes > 0) as usize;
    }
    (events, timesteps)
}

/// The concept grid for `scenario`. Canonical scenarios are fixed 10x10 grids;
/// `none` accepts any size.
pub fn build_schedule(scenario: Scenario, clients: usize, timesteps: usize) -> Result<DriftSchedule> {
    match scenario.grid() {
        None => {
            if clients == 0 || timesteps == 0 {
                return Err(Error::config("schedule needs at least one client and one timestep"));
            }
            DriftSchedule::from_grid(scenario, vec![vec![ConceptId::A; timesteps]; clients])
        }
        Some(rows) => {
            if clients != rows.len() || timesteps != rows[0].len() {
                return Err(Error::config(format!(
                    "scenario {scenario} is defined for K={} and T={}, got K={clients}, T={timesteps}",
                    rows.len(),
                    rows[0].len()
                )));
            }
            let grid = rows
                .iter()
                .map(|row| {
                    row.chars()
                        .map(|c| c.to_string().parse())
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            DriftSchedule::from_grid(scenario, grid)
        }
    }
}
