use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Group id of the unprivileged group (the one that drifts).
pub const UNPRIVILEGED: u8 = 0;
/// Group id of the privileged group.
pub const PRIVILEGED: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: usize,
    pub group: u8,
}

/// One of the five concepts a client's data can follow. `A` is the base
/// distribution; the others swap one label pair for the unprivileged group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConceptId {
    A,
    B,
    C,
    D,
    E,
}

impl ConceptId {
    pub const ALL: [ConceptId; 5] = [
        ConceptId::A,
        ConceptId::B,
        ConceptId::C,
        ConceptId::D,
        ConceptId::E,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn symbol(self) -> char {
        (b'A' + self as u8) as char
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

impl FromStr for ConceptId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" => Ok(ConceptId::A),
            "B" => Ok(ConceptId::B),
            "C" => Ok(ConceptId::C),
            "D" => Ok(ConceptId::D),
            "E" => Ok(ConceptId::E),
            other => Err(Error::config(format!("unknown concept {other:?}"))),
        }
    }
}

/// Label pair swapped by each drifted concept. Pairs are disjoint per concept,
/// so applying a concept twice is the identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SwapTable {
    pairs: [Option<(usize, usize)>; 5],
}

impl SwapTable {
    /// Digit pairs used for MNIST-style data: B (1,2), C (2,3), D (3,4), E (4,5).
    pub fn digits() -> Self {
        Self {
            pairs: [None, Some((1, 2)), Some((2, 3)), Some((3, 4)), Some((4, 5))],
        }
    }

    /// The same pairs shifted down by one, for 5-class zero-indexed labels.
    pub fn zero_indexed() -> Self {
        Self {
            pairs: [None, Some((0, 1)), Some((1, 2)), Some((2, 3)), Some((3, 4))],
        }
    }

    pub fn pair(&self, c: ConceptId) -> Option<(usize, usize)> {
        self.pairs[c.index()]
    }

    /// Largest label any pair touches, plus one.
    pub fn min_classes(&self) -> usize {
        self.pairs
            .iter()
            .flatten()
            .map(|&(a, b)| a.max(b) + 1)
            .max()
            .unwrap_or(0)
    }

    pub(crate) fn swap_label(&self, label: usize, group: u8, c: ConceptId) -> usize {
        if group != UNPRIVILEGED {
            return label;
        }
        match self.pair(c) {
            Some((a, b)) if label == a => b,
            Some((a, b)) if label == b => a,
            _ => label,
        }
    }
}

/// Relabels `e` under concept `c`: unprivileged examples whose label is in the
/// concept's pair get the partner label; everything else passes through.
pub fn apply_concept(e: &Example, c: ConceptId, table: &SwapTable) -> Example {
    Example {
        features: e.features.clone(),
        label: table.swap_label(e.label, e.group, c),
        group: e.group,
    }
}
