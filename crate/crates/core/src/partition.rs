//! Initial-pool construction from environment labels and CAN dynamics.
//!
//! Every clip lands in one of twelve cells: a static cell from lighting and
//! weather (`DS`, `DR`, `NS`, `NR`) crossed with a dynamic cell from how
//! eventful its CAN trace is:
//!
//! * `B`: in the top fraction by both acceleration spread and total yaw,
//! * `N`: in neither top fraction,
//! * `S`: everything else (valuable by exactly one score).
//!
//! The first batch is drawn from the cells in proportion to their sizes.

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CanTrace, ClipMeta, CorpusIndex, Lighting, Weather};

#[derive(Debug, Error, PartialEq)]
pub enum PartitionError {
    #[error("selection ratio {0} is outside (0, 1)")]
    InvalidLambda(f64),
    #[error("cannot partition an empty corpus")]
    EmptyCorpus,
    #[error("pool holds {available} clips, {requested} requested")]
    InsufficientPool { requested: usize, available: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StaticCell {
    #[serde(rename = "DS")]
    DaySunny,
    #[serde(rename = "DR")]
    DayRainy,
    #[serde(rename = "NS")]
    NightSunny,
    #[serde(rename = "NR")]
    NightRainy,
}

impl StaticCell {
    pub const ALL: [StaticCell; 4] = [Self::DaySunny, Self::DayRainy, Self::NightSunny, Self::NightRainy];

    pub fn code(self) -> &'static str {
        match self {
            Self::DaySunny => "DS",
            Self::DayRainy => "DR",
            Self::NightSunny => "NS",
            Self::NightRainy => "NR",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DynamicCell {
    /// Valuable by both scores.
    #[serde(rename = "B")]
    Both,
    /// Valuable by exactly one score.
    #[serde(rename = "S")]
    Single,
    /// Valuable by neither.
    #[serde(rename = "N")]
    Neither,
}

impl DynamicCell {
    pub const ALL: [DynamicCell; 3] = [Self::Both, Self::Single, Self::Neither];

    pub fn code(self) -> &'static str {
        match self {
            Self::Both => "B",
            Self::Single => "S",
            Self::Neither => "N",
        }
    }
}

/// One of the twelve cells. Ordering is the canonical cell order
/// DS-B, DS-S, DS-N, DR-B, ..., NR-N, which also breaks allocation ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub static_cell: StaticCell,
    pub dynamic_cell: DynamicCell,
}

impl Cell {
    pub fn all() -> impl Iterator<Item = Cell> {
        StaticCell::ALL.into_iter().flat_map(|s| {
            DynamicCell::ALL.into_iter().map(move |d| Cell {
                static_cell: s,
                dynamic_cell: d,
            })
        })
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.static_cell.code(), self.dynamic_cell.code())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicScores {
    pub clip_id: String,
    pub acc_score: f64,
    pub yaw_score: f64,
}

/// Population standard deviation of lateral acceleration.
pub fn acc_score(trace: &CanTrace) -> f64 {
    let xs = &trace.accel_y;
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Cumulative absolute yaw deflection.
pub fn yaw_score(trace: &CanTrace) -> f64 {
    trace.yaw_delta.iter().map(|y| y.abs()).sum()
}

pub fn dynamic_scores(trace: &CanTrace) -> DynamicScores {
    DynamicScores {
        clip_id: trace.clip_id.clone(),
        acc_score: acc_score(trace),
        yaw_score: yaw_score(trace),
    }
}

/// Size of the "valuable" set for `n` clips: `ceil(lambda * n)`, at least 1.
///
/// The product is nudged down by 1e-9 before the ceiling so that values
/// like `0.1 * 30` (which is `3.0000000000000004` in binary) count as 3.
pub fn valuable_count(n: usize, lambda: f64) -> usize {
    let raw = (lambda * n as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(n)
}

fn check_lambda(lambda: f64) -> Result<(), PartitionError> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(PartitionError::InvalidLambda(lambda))
    }
}

/// Ids of the top `k` clips by `key`, descending, ties by ascending id.
fn top_ids<'a>(scores: &'a [DynamicScores], k: usize, key: impl Fn(&DynamicScores) -> f64) -> Vec<&'a str> {
    let mut order: Vec<&DynamicScores> = scores.iter().collect();
    order.sort_by(|a, b| key(b).total_cmp(&key(a)).then_with(|| a.clip_id.cmp(&b.clip_id)));
    order.into_iter().take(k).map(|s| s.clip_id.as_str()).collect()
}

/// Assigns every clip to B, S or N.
pub fn dynamic_partition(
    scores: &[DynamicScores],
    lambda: f64,
) -> Result<BTreeMap<String, DynamicCell>, PartitionError> {
    check_lambda(lambda)?;
    if scores.is_empty() {
        return Err(PartitionError::EmptyCorpus);
    }
    let k = valuable_count(scores.len(), lambda);
    let acc_v: std::collections::BTreeSet<&str> = top_ids(scores, k, |s| s.acc_score).into_iter().collect();
    let yaw_v: std::collections::BTreeSet<&str> = top_ids(scores, k, |s| s.yaw_score).into_iter().collect();
    Ok(scores
        .iter()
        .map(|s| {
            let id = s.clip_id.as_str();
            let cell = match (acc_v.contains(id), yaw_v.contains(id)) {
                (true, true) => DynamicCell::Both,
                (false, false) => DynamicCell::Neither,
                _ => DynamicCell::Single,
            };
            (s.clip_id.clone(), cell)
        })
        .collect())
}

pub fn static_partition(meta: &ClipMeta) -> StaticCell {
    match (meta.lighting, meta.weather) {
        (Lighting::Day, Weather::Sunny) => StaticCell::DaySunny,
        (Lighting::Day, Weather::Rainy) => StaticCell::DayRainy,
        (Lighting::Night, Weather::Sunny) => StaticCell::NightSunny,
        (Lighting::Night, Weather::Rainy) => StaticCell::NightRainy,
    }
}

/// A clip's place in the partition, with the scores that put it there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionEntry {
    pub clip_id: String,
    pub static_cell: StaticCell,
    pub dynamic_cell: DynamicCell,
    pub acc_score: f64,
    pub yaw_score: f64,
}

impl PartitionEntry {
    pub fn cell(&self) -> Cell {
        Cell {
            static_cell: self.static_cell,
            dynamic_cell: self.dynamic_cell,
        }
    }
}

/// Total assignment of clips to the twelve cells.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionTable {
    entries: BTreeMap<String, PartitionEntry>,
}

impl PartitionTable {
    pub fn from_entries(entries: impl IntoIterator<Item = PartitionEntry>) -> Self {
        Self {
            entries: entries.into_iter().map(|e| (e.clip_id.clone(), e)).collect(),
        }
    }

    /// Entries in ascending clip-id order.
    pub fn entries(&self) -> impl Iterator<Item = &PartitionEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn cell_of(&self, clip_id: &str) -> Option<Cell> {
        self.entries.get(clip_id).map(PartitionEntry::cell)
    }

    /// Members of every cell (empty cells included), ids ascending.
    pub fn cells(&self) -> BTreeMap<Cell, Vec<&str>> {
        let mut out: BTreeMap<Cell, Vec<&str>> = Cell::all().map(|c| (c, Vec::new())).collect();
        for e in self.entries.values() {
            out.get_mut(&e.cell()).expect("all cells present").push(&e.clip_id);
        }
        out
    }

    /// Cell sizes in canonical cell order.
    pub fn cell_counts(&self) -> Vec<(Cell, usize)> {
        self.cells().into_iter().map(|(c, ids)| (c, ids.len())).collect()
    }
}

pub fn build_partition(corpus: &CorpusIndex, lambda: f64) -> Result<PartitionTable, PartitionError> {
    let scores: Vec<DynamicScores> = corpus.records().map(|r| dynamic_scores(&r.can)).collect();
    let dynamic = dynamic_partition(&scores, lambda)?;
    let entries = corpus.records().zip(scores).map(|(rec, s)| PartitionEntry {
        static_cell: static_partition(&rec.meta),
        dynamic_cell: dynamic[&s.clip_id],
        acc_score: s.acc_score,
        yaw_score: s.yaw_score,
        clip_id: s.clip_id,
    });
    Ok(PartitionTable::from_entries(entries))
}

/// Splits `n_itr` across groups in proportion to their sizes.
///
/// Quotas are the floors of the exact proportional shares, with leftover
/// units handed out by largest fractional remainder; equal remainders go to
/// the group listed first. A quota never exceeds its group's size; any
/// excess is re-spread over the remaining groups by the same rule.
pub fn proportional_allocation<K: Clone>(counts: &[(K, usize)], n_itr: usize) -> Result<Vec<(K, usize)>, PartitionError> {
    let available: usize = counts.iter().map(|(_, c)| c).sum();
    if available < n_itr {
        return Err(PartitionError::InsufficientPool {
            requested: n_itr,
            available,
        });
    }
    let mut quota = vec![0usize; counts.len()];
    let mut capped = vec![false; counts.len()];
    let mut remaining = n_itr;
    while remaining > 0 {
        let open: Vec<usize> = (0..counts.len()).filter(|&i| !capped[i] && counts[i].1 > 0).collect();
        let open_total: usize = open.iter().map(|&i| counts[i].1).sum();
        // Integer arithmetic keeps the shares exact: share_i = remaining * c_i / open_total.
        let mut give: Vec<(usize, usize, usize)> = open
            .iter()
            .map(|&i| {
                let num = remaining * counts[i].1;
                (i, num / open_total, num % open_total)
            })
            .collect();
        let floors: usize = give.iter().map(|g| g.1).sum();
        let mut by_remainder: Vec<usize> = (0..give.len()).collect();
        by_remainder.sort_by(|&a, &b| give[b].2.cmp(&give[a].2).then(give[a].0.cmp(&give[b].0)));
        for &g in by_remainder.iter().take(remaining - floors) {
            give[g].1 += 1;
        }
        let mut handed = 0;
        for (i, share, _) in give {
            let room = counts[i].1 - quota[i];
            let take = share.min(room);
            quota[i] += take;
            handed += take;
            if quota[i] == counts[i].1 {
                capped[i] = true;
            }
        }
        remaining -= handed;
    }
    Ok(counts.iter().zip(quota).map(|((k, _), q)| (k.clone(), q)).collect())
}

fn cell_seed(seed: u64, cell: Cell) -> u64 {
    // FNV-1a over the cell name, folded into the run seed through splitmix64.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in cell.to_string().bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Draws the first batch: each cell contributes its proportional quota,
/// sampled uniformly without replacement from an independent stream per
/// cell. Returns ids sorted ascending.
pub fn initial_select(table: &PartitionTable, n_itr: usize, seed: u64) -> Result<Vec<String>, PartitionError> {
    let cells = table.cells();
    let counts: Vec<(Cell, usize)> = cells.iter().map(|(c, ids)| (*c, ids.len())).collect();
    let quotas = proportional_allocation(&counts, n_itr)?;
    let mut out = Vec::with_capacity(n_itr);
    for (cell, q) in quotas {
        if q == 0 {
            continue;
        }
        let members = &cells[&cell];
        let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(seed, cell));
        let picks = rand::seq::index::sample(&mut rng, members.len(), q);
        out.extend(picks.into_iter().map(|i| members[i].to_string()));
    }
    out.sort();
    Ok(out)
}
