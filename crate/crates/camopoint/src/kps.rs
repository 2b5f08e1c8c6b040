//! Key-point selection: stratify scored candidates into confidence levels,
//! greedily spread positive points over the object, and pair each with its
//! two nearest low-confidence points as contrastive negatives.

use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::grid::{CandidateGrid, CandidatePoint};
use crate::ppt::ScoreGrid;

#[derive(Debug, Error)]
pub enum KpsError {
    #[error("{scores} scores for {candidates} candidates")]
    LengthMismatch { scores: usize, candidates: usize },
    #[error("no candidates to select from")]
    NoCandidates,
    #[error("requested positive count K must be >= 1")]
    BadK,
}

/// Confidence-level boundaries. Defaults follow the four-level scheme:
/// `L1: p > l1`, `L2: l2 <= p <= l1`, `L3: l3 <= p < l2`, `L4: p < l3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            l1: 0.9,
            l2: 0.75,
            l3: 0.5,
        }
    }
}

/// A candidate together with its predicted score.
pub type ScoredPoint = (CandidatePoint, f64);

/// The four disjoint confidence levels covering all candidates.
#[derive(Debug, Clone, Default)]
pub struct LevelPartition {
    pub l1: Vec<ScoredPoint>,
    pub l2: Vec<ScoredPoint>,
    pub l3: Vec<ScoredPoint>,
    pub l4: Vec<ScoredPoint>,
}

impl LevelPartition {
    pub fn total(&self) -> usize {
        self.l1.len() + self.l2.len() + self.l3.len() + self.l4.len()
    }

    fn all(&self) -> impl Iterator<Item = &ScoredPoint> {
        self.l1
            .iter()
            .chain(&self.l2)
            .chain(&self.l3)
            .chain(&self.l4)
    }
}

/// One positive point with its up-to-two paired negative points.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTriple {
    pub pp: CandidatePoint,
    pub nps: Vec<CandidatePoint>,
}

/// The ordered triples selected for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSelection {
    pub triples: Vec<PromptTriple>,
    /// The requested positive count K (the selection may be shorter).
    pub k: usize,
}

impl PromptSelection {
    pub fn positives(&self) -> impl Iterator<Item = &CandidatePoint> {
        self.triples.iter().map(|t| &t.pp)
    }

    pub fn negatives(&self) -> impl Iterator<Item = &CandidatePoint> {
        self.triples.iter().flat_map(|t| t.nps.iter())
    }
}

// Serializes as {"triples": [{"pp": [x, y], "nps": [[x, y], ...]}, ...]}
// with coordinates rounded to integers only here, at the interface boundary.
impl Serialize for PromptSelection {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            triples: Triples<'a>,
        }
        struct Triples<'a>(&'a [PromptTriple]);
        struct TripleRepr<'a>(&'a PromptTriple);
        struct Points<'a>(&'a [CandidatePoint]);

        impl Serialize for Triples<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                let mut seq = s.serialize_seq(Some(self.0.len()))?;
                for t in self.0 {
                    seq.serialize_element(&TripleRepr(t))?;
                }
                seq.end()
            }
        }
        impl Serialize for TripleRepr<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                #[derive(Serialize)]
                struct T<'a> {
                    pp: [i64; 2],
                    nps: Points<'a>,
                }
                T {
                    pp: round_xy(&self.0.pp),
                    nps: Points(&self.0.nps),
                }
                .serialize(s)
            }
        }
        impl Serialize for Points<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                let mut seq = s.serialize_seq(Some(self.0.len()))?;
                for p in self.0 {
                    seq.serialize_element(&round_xy(p))?;
                }
                seq.end()
            }
        }

        Repr {
            triples: Triples(&self.triples),
        }
        .serialize(serializer)
    }
}

fn round_xy(p: &CandidatePoint) -> [i64; 2] {
    [p.x.round() as i64, p.y.round() as i64]
}

/// Euclidean distance between two candidates' pixel-center coordinates.
pub fn distance(a: &CandidatePoint, b: &CandidatePoint) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    (dx * dx + dy * dy).sqrt()
}

/// Sorts candidates into the four confidence levels.
pub fn stratify(
    scores: &ScoreGrid,
    grid: &CandidateGrid,
    thresholds: &Thresholds,
) -> Result<LevelPartition, KpsError> {
    if scores.values.len() != grid.points.len() {
        return Err(KpsError::LengthMismatch {
            scores: scores.values.len(),
            candidates: grid.points.len(),
        });
    }
    let mut part = LevelPartition::default();
    for (point, &p) in grid.points.iter().zip(&scores.values) {
        let entry = (*point, p);
        if p > thresholds.l1 {
            part.l1.push(entry);
        } else if p >= thresholds.l2 {
            part.l2.push(entry);
        } else if p >= thresholds.l3 {
            part.l3.push(entry);
        } else {
            part.l4.push(entry);
        }
    }
    Ok(part)
}

/// Tie order shared by every arg-max/arg-min below: prefer the higher
/// score, then the lower row-major index.
fn preferred(a: &ScoredPoint, b: &ScoredPoint) -> bool {
    if a.1 != b.1 {
        return a.1 > b.1;
    }
    a.0.index < b.0.index
}

/// Greedy positive-point selection.
///
/// The first pick of a level scan is its highest-scoring point; every later
/// pick maximizes the summed distance to all previously selected positives.
/// L1 is drained before L2. When both are empty, falls back to the single
/// highest-scoring candidate overall.
pub fn select_positive(
    levels: &LevelPartition,
    k: usize,
) -> Result<Vec<CandidatePoint>, KpsError> {
    if k == 0 {
        return Err(KpsError::BadK);
    }
    if levels.total() == 0 {
        return Err(KpsError::NoCandidates);
    }
    let mut selected: Vec<CandidatePoint> = Vec::with_capacity(k);
    for level in [&levels.l1, &levels.l2] {
        if selected.len() == k {
            break;
        }
        let mut pool: Vec<ScoredPoint> = level.clone();
        // Summed distance from each pool entry to the already-selected set,
        // accumulated in selection order.
        let mut acc: Vec<f64> = pool
            .iter()
            .map(|(c, _)| selected.iter().map(|p| distance(c, p)).sum())
            .collect();
        while !pool.is_empty() && selected.len() < k {
            let mut best = 0;
            for i in 1..pool.len() {
                let better = if selected.is_empty() {
                    preferred(&pool[i], &pool[best])
                } else if acc[i] != acc[best] {
                    acc[i] > acc[best]
                } else {
                    preferred(&pool[i], &pool[best])
                };
                if better {
                    best = i;
                }
            }
            let (point, _) = pool.swap_remove(best);
            acc.swap_remove(best);
            for (entry, a) in pool.iter().zip(acc.iter_mut()) {
                *a += distance(&entry.0, &point);
            }
            selected.push(point);
        }
    }
    if selected.is_empty() {
        // L1 and L2 are both empty: emit the single best-scoring candidate.
        let best = levels
            .all()
            .fold(None::<&ScoredPoint>, |best, entry| match best {
                Some(b) if !preferred(entry, b) => Some(b),
                _ => Some(entry),
            })
            .expect("partition is non-empty");
        selected.push(best.0);
    }
    Ok(selected)
}

/// Pairs each positive, in order, with its two nearest points from the L4
/// pool, removing them as they are consumed. Exhausted pools yield triples
/// with fewer (possibly zero) negatives.
pub fn pair_negatives(
    pps: &[CandidatePoint],
    levels: &LevelPartition,
    k: usize,
) -> PromptSelection {
    let mut pool: Vec<ScoredPoint> = levels.l4.clone();
    // A positive produced by the fallback path can itself sit in L4; it must
    // not be paired with itself.
    pool.retain(|(c, _)| !pps.iter().any(|p| p.index == c.index));
    let mut triples = Vec::with_capacity(pps.len());
    for pp in pps {
        let mut nps = Vec::with_capacity(2);
        for _ in 0..2 {
            if pool.is_empty() {
                break;
            }
            let mut best = 0;
            let mut best_d = distance(&pool[0].0, pp);
            for i in 1..pool.len() {
                let d = distance(&pool[i].0, pp);
                if d < best_d || (d == best_d && preferred(&pool[i], &pool[best])) {
                    best = i;
                    best_d = d;
                }
            }
            let (point, _) = pool.swap_remove(best);
            nps.push(point);
        }
        triples.push(PromptTriple { pp: *pp, nps });
    }
    PromptSelection { triples, k }
}

/// Full selection: stratify, pick K positives, pair negatives.
pub fn select_prompts(
    scores: &ScoreGrid,
    grid: &CandidateGrid,
    k: usize,
    thresholds: &Thresholds,
) -> Result<PromptSelection, KpsError> {
    let levels = stratify(scores, grid, thresholds)?;
    let pps = select_positive(&levels, k)?;
    Ok(pair_negatives(&pps, &levels, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::generate_candidates;

    fn grid_with_scores(m: usize, scores: Vec<f64>) -> (CandidateGrid, ScoreGrid) {
        let grid = generate_candidates((m * 32) as u32, (m * 32) as u32, m).unwrap();
        assert_eq!(scores.len(), grid.len());
        (grid, ScoreGrid { values: scores })
    }

    fn point_at(index: usize, x: f64, y: f64) -> CandidatePoint {
        CandidatePoint {
            index,
            row: 0,
            col: index,
            x,
            y,
        }
    }

    #[test]
    fn stratify_boundaries_follow_the_inequalities() {
        let (grid, scores) = grid_with_scores(3, vec![0.95, 0.90, 0.75, 0.50, 0.49, 0.3, 0.91, 0.749999, 0.0]);
        let part = stratify(&scores, &grid, &Thresholds::default()).unwrap();
        let level_of = |idx: usize| -> u8 {
            if part.l1.iter().any(|(c, _)| c.index == idx) {
                1
            } else if part.l2.iter().any(|(c, _)| c.index == idx) {
                2
            } else if part.l3.iter().any(|(c, _)| c.index == idx) {
                3
            } else {
                4
            }
        };
        assert_eq!(level_of(0), 1); // 0.95
        assert_eq!(level_of(1), 2); // 0.90 (boundary, inclusive in L2)
        assert_eq!(level_of(2), 2); // 0.75 (boundary, inclusive in L2)
        assert_eq!(level_of(3), 3); // 0.50 (boundary, inclusive in L3)
        assert_eq!(level_of(4), 4); // 0.49
        assert_eq!(level_of(5), 4); // 0.3
        assert_eq!(level_of(6), 1); // 0.91
        assert_eq!(level_of(7), 3); // 0.749999
        assert_eq!(level_of(8), 4); // 0.0
        assert_eq!(part.total(), 9);
    }

    #[test]
    fn stratify_all_low_scores_land_in_l4() {
        let (grid, scores) = grid_with_scores(2, vec![0.3; 4]);
        let part = stratify(&scores, &grid, &Thresholds::default()).unwrap();
        assert!(part.l1.is_empty() && part.l2.is_empty() && part.l3.is_empty());
        assert_eq!(part.l4.len(), 4);
    }

    #[test]
    fn stratify_rejects_length_mismatch() {
        let grid = generate_candidates(64, 64, 2).unwrap();
        let scores = ScoreGrid { values: vec![0.5; 3] };
        assert!(matches!(
            stratify(&scores, &grid, &Thresholds::default()),
            Err(KpsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn distance_basics() {
        let a = point_at(0, 0.0, 0.0);
        let b = point_at(1, 3.0, 4.0);
        assert_eq!(distance(&a, &a), 0.0);
        assert_eq!(distance(&a, &b), 5.0);
        assert_eq!(distance(&a, &b), distance(&b, &a));
    }

    #[test]
    fn single_l1_point_is_selected_regardless_of_k() {
        let levels = LevelPartition {
            l1: vec![(point_at(3, 10.0, 10.0), 0.95)],
            ..Default::default()
        };
        let pps = select_positive(&levels, 5).unwrap();
        assert_eq!(pps.len(), 1);
        assert_eq!(pps[0].index, 3);
    }

    #[test]
    fn second_pick_maximizes_summed_distance() {
        // Three equal-score points on a line; the first pick is the lowest
        // index, the second the farthest point.
        let levels = LevelPartition {
            l1: vec![
                (point_at(0, 0.0, 5.0), 0.95),
                (point_at(1, 100.0, 5.0), 0.95),
                (point_at(2, 200.0, 5.0), 0.95),
            ],
            ..Default::default()
        };
        let pps = select_positive(&levels, 2).unwrap();
        assert_eq!(pps[0].index, 0);
        assert_eq!(pps[1].index, 2); // sum 200 beats sum 100
    }

    #[test]
    fn fallback_picks_single_highest_score() {
        let levels = LevelPartition {
            l3: vec![
                (point_at(0, 0.0, 0.0), 0.6),
                (point_at(1, 9.0, 9.0), 0.55),
            ],
            ..Default::default()
        };
        let pps = select_positive(&levels, 4).unwrap();
        assert_eq!(pps.len(), 1);
        assert_eq!(pps[0].index, 0);
    }

    #[test]
    fn no_candidates_is_an_error() {
        assert!(matches!(
            select_positive(&LevelPartition::default(), 1),
            Err(KpsError::NoCandidates)
        ));
    }

    #[test]
    fn negatives_are_the_two_nearest() {
        let pp = point_at(0, 50.0, 50.0);
        let levels = LevelPartition {
            l4: vec![
                (point_at(1, 10.0, 50.0), 0.1),
                (point_at(2, 90.0, 50.0), 0.2),
                (point_at(3, 50.0, 200.0), 0.3),
            ],
            ..Default::default()
        };
        let sel = pair_negatives(&[pp], &levels, 1);
        let ids: Vec<usize> = sel.triples[0].nps.iter().map(|p| p.index).collect();
        assert_eq!(ids, vec![1, 2]); // distances 40, 40 beat 150
    }

    #[test]
    fn small_l4_pool_is_consumed_with_removal() {
        let levels = LevelPartition {
            l4: vec![
                (point_at(10, 0.0, 0.0), 0.1),
                (point_at(11, 1.0, 0.0), 0.1),
            ],
            ..Default::default()
        };
        let sel = pair_negatives(&[point_at(0, 0.0, 1.0)], &levels, 1);
        assert_eq!(sel.triples[0].nps.len(), 2);

        // Two positives over four L4 points: the first consumes its nearest
        // two, the second gets the remainder.
        let levels = LevelPartition {
            l4: vec![
                (point_at(20, 0.0, 0.0), 0.1),
                (point_at(21, 1.0, 0.0), 0.1),
                (point_at(22, 100.0, 0.0), 0.1),
                (point_at(23, 101.0, 0.0), 0.1),
            ],
            ..Default::default()
        };
        let pps = [point_at(0, 0.5, 1.0), point_at(1, 100.5, 1.0)];
        let sel = pair_negatives(&pps, &levels, 2);
        let first: Vec<usize> = sel.triples[0].nps.iter().map(|p| p.index).collect();
        let second: Vec<usize> = sel.triples[1].nps.iter().map(|p| p.index).collect();
        assert_eq!(first, vec![20, 21]);
        assert_eq!(second, vec![22, 23]);
    }

    #[test]
    fn empty_l4_gives_positive_only_triples() {
        let levels = LevelPartition {
            l1: vec![(point_at(0, 1.0, 1.0), 0.99)],
            ..Default::default()
        };
        let pps = select_positive(&levels, 1).unwrap();
        let sel = pair_negatives(&pps, &levels, 1);
        assert_eq!(sel.triples.len(), 1);
        assert!(sel.triples[0].nps.is_empty());
    }

    #[test]
    fn selection_serializes_with_rounded_coordinates() {
        let sel = PromptSelection {
            triples: vec![PromptTriple {
                pp: point_at(0, 10.6, 20.4),
                nps: vec![point_at(1, 1.5, 2.5)],
            }],
            k: 1,
        };
        let json = serde_json::to_value(&sel).unwrap();
        assert_eq!(
            json,
            serde_json::json!({"triples": [{"pp": [11, 20], "nps": [[2, 3]]}]})
        );
    }

    #[test]
    fn full_selection_composes_the_three_stages() {
        // All cells high except the four corners; K = 1 picks the global
        // best (tie-broken to index 0) and pairs the two nearest corners.
        let m = 4;
        let mut scores = vec![0.95; 16];
        for idx in [0usize, 3, 12, 15] {
            scores[idx] = 0.1;
        }
        // Make one interior cell the clear maximum to avoid tie ambiguity in
        // the reading of the test.
        scores[5] = 0.99;
        let (grid, scores) = grid_with_scores(m, scores);
        let sel = select_prompts(&scores, &grid, 1, &Thresholds::default()).unwrap();
        assert_eq!(sel.triples.len(), 1);
        assert_eq!(sel.triples[0].pp.index, 5);
        let mut nps: Vec<usize> = sel.triples[0].nps.iter().map(|p| p.index).collect();
        nps.sort_unstable();
        assert_eq!(nps, vec![0, 3]); // corners nearest to cell (1,1)
    }

    #[test]
    fn uniform_low_scores_fall_back_and_still_pair() {
        let (grid, scores) = grid_with_scores(3, vec![0.3; 9]);
        let sel = select_prompts(&scores, &grid, 5, &Thresholds::default()).unwrap();
        assert_eq!(sel.triples.len(), 1);
        // Highest score ties everywhere; lowest index wins.
        assert_eq!(sel.triples[0].pp.index, 0);
        assert_eq!(sel.triples[0].nps.len(), 2);
        // The fallback positive must not pair with itself.
        assert!(sel.triples[0].nps.iter().all(|p| p.index != 0));
    }
}
