//! Exact masked nearest-patch search.
//!
//! The cost of a query against a candidate is
//! `alpha * MSE(bound) + (1 - alpha) * MSE(unbound)` where both MSE terms
//! divide by the full patch element count. It is evaluated as a weighted sum
//! of per-frame costs `sum_c w_c (q_c - p_c)^2`, accumulated over the window
//! in frame order and divided by `Ps * D`. The single-query scan and the
//! batched search share this evaluation, so their selections agree exactly.
//! Ties go to the lowest database index, i.e. the lowest (motion, start).

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::patch::{PatchDatabase, PatchError};

/// Per-channel weight `alpha` on bound channels and `1 - alpha` elsewhere.
pub fn channel_weights(mask: &[bool], alpha: f64) -> Vec<f64> {
    mask.iter().map(|&m| if m { alpha } else { 1.0 - alpha }).collect()
}

#[inline]
pub fn frame_cost(a: &[f64], b: &[f64], weights: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((x, y), w) in a.iter().zip(b).zip(weights) {
        let d = x - y;
        acc += w * d * d;
    }
    acc
}

fn row_slice<'a>(view: &'a ArrayView2<'_, f64>, r: usize, scratch: &'a mut Vec<f64>) -> &'a [f64] {
    let row = view.row(r);
    match row.to_slice() {
        Some(s) => s,
        None => {
            scratch.clear();
            scratch.extend(row.iter());
            scratch
        }
    }
}

/// Masked cost between two equally shaped windows.
pub fn patch_cost(query: ArrayView2<'_, f64>, candidate: ArrayView2<'_, f64>, weights: &[f64]) -> f64 {
    let n = (query.nrows() * query.ncols()) as f64;
    let (mut sa, mut sb) = (Vec::new(), Vec::new());
    let mut sum = 0.0;
    for k in 0..query.nrows() {
        let a = row_slice(&query, k, &mut sa);
        let b = row_slice(&candidate, k, &mut sb);
        sum += frame_cost(a, b, weights);
    }
    sum / n
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    /// Index into the database's patch list.
    pub index: usize,
    pub cost: f64,
}

fn check_width(width: usize, db: &PatchDatabase, weights: &[f64]) -> Result<(), PatchError> {
    if db.is_empty() {
        return Err(PatchError::EmptyDatabase);
    }
    if width != db.width() || weights.len() != db.width() {
        return Err(PatchError::ShapeMismatch {
            expected: db.width(),
            found: if width != db.width() { width } else { weights.len() },
        });
    }
    Ok(())
}

/// Best database patch for one query window.
pub fn match_patch(
    query: ArrayView2<'_, f64>,
    db: &PatchDatabase,
    mask: &[bool],
    alpha: f64,
) -> Result<Match, PatchError> {
    match_patch_weighted(query, db, &channel_weights(mask, alpha))
}

pub fn match_patch_weighted(
    query: ArrayView2<'_, f64>,
    db: &PatchDatabase,
    weights: &[f64],
) -> Result<Match, PatchError> {
    check_width(query.ncols(), db, weights)?;
    if query.nrows() != db.patch_size() {
        return Err(PatchError::ShapeMismatch {
            expected: db.patch_size(),
            found: query.nrows(),
        });
    }
    let ps = db.patch_size();
    let n = (ps * db.width()) as f64;
    let mut scratch = Vec::new();
    let rows: Vec<Vec<f64>> = (0..ps).map(|k| row_slice(&query, k, &mut scratch).to_vec()).collect();
    let mut best = Match {
        index: 0,
        cost: f64::INFINITY,
    };
    for (i, r) in db.refs().iter().enumerate() {
        let motion = db.motion(r.motion);
        let mut sum = 0.0;
        let mut abandoned = false;
        for (k, q) in rows.iter().enumerate() {
            let row = motion.row(r.start + k);
            sum += frame_cost(q, row.as_slice().expect("database rows are contiguous"), weights);
            if sum / n >= best.cost {
                abandoned = true;
                break;
            }
        }
        if !abandoned {
            best = Match { index: i, cost: sum / n };
        }
    }
    Ok(best)
}

const BLOCK: usize = 128;

/// Best database patch for every window of `frames` starting at `starts`.
///
/// Work is split into blocks of queries and of database patches; each block
/// tabulates the frame costs once and sums them along window diagonals. The
/// result does not depend on the number of worker threads.
pub fn match_all(
    frames: &Array2<f64>,
    starts: &[usize],
    db: &PatchDatabase,
    weights: &[f64],
) -> Result<Vec<Match>, PatchError> {
    check_width(frames.ncols(), db, weights)?;
    let ps = db.patch_size();
    if let Some(&s) = starts.iter().find(|&&s| s + ps > frames.nrows()) {
        return Err(PatchError::TooShort {
            motion: None,
            frames: frames.nrows() - s.min(frames.nrows()),
            patch_size: ps,
        });
    }
    let frames = frames.as_standard_layout();

    // Database blocks never straddle two motions.
    let refs = db.refs();
    let mut db_blocks: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < refs.len() {
        let mut j = i + 1;
        while j < refs.len() && j - i < BLOCK && refs[j].motion == refs[i].motion {
            j += 1;
        }
        db_blocks.push((i, j));
        i = j;
    }
    let query_blocks: Vec<(usize, usize)> = (0..starts.len())
        .step_by(BLOCK)
        .map(|a| (a, (a + BLOCK).min(starts.len())))
        .collect();

    let tasks: Vec<(usize, usize)> = (0..query_blocks.len())
        .flat_map(|q| (0..db_blocks.len()).map(move |d| (q, d)))
        .collect();
    let n = (ps * db.width()) as f64;
    let partial: Vec<Vec<Match>> = tasks
        .par_iter()
        .map(|&(qb, dbb)| {
            let (qa, qz) = query_blocks[qb];
            let (da, dz) = db_blocks[dbb];
            let qs = &starts[qa..qz];
            let block_refs = &refs[da..dz];
            let motion = db.motion(block_refs[0].motion);
            let r0 = *qs.iter().min().unwrap();
            let r1 = qs.iter().max().unwrap() + ps;
            let c0 = block_refs[0].start;
            let c1 = block_refs[block_refs.len() - 1].start + ps;
            let cols = c1 - c0;
            let mut table = vec![0.0; (r1 - r0) * cols];
            for r in r0..r1 {
                let a = frames.row(r);
                let a = a.as_slice().unwrap();
                let out = &mut table[(r - r0) * cols..(r - r0 + 1) * cols];
                for (c, slot) in (c0..c1).zip(out.iter_mut()) {
                    let b = motion.row(c);
                    *slot = frame_cost(a, b.as_slice().expect("database rows are contiguous"), weights);
                }
            }
            qs.iter()
                .map(|&q| {
                    let mut best = Match {
                        index: 0,
                        cost: f64::INFINITY,
                    };
                    for (offset, r) in block_refs.iter().enumerate() {
                        let mut sum = 0.0;
                        for k in 0..ps {
                            sum += table[(q + k - r0) * cols + (r.start + k - c0)];
                        }
                        let cost = sum / n;
                        if cost < best.cost {
                            best = Match {
                                index: da + offset,
                                cost,
                            };
                        }
                    }
                    best
                })
                .collect()
        })
        .collect();

    let mut best = vec![
        Match {
            index: 0,
            cost: f64::INFINITY
        };
        starts.len()
    ];
    // Tasks are ordered by query block, then by database block, so a strict
    // comparison keeps the lowest index among equal costs.
    for (&(qb, _), matches) in tasks.iter().zip(partial) {
        let (qa, _) = query_blocks[qb];
        for (k, m) in matches.into_iter().enumerate() {
            if m.cost < best[qa + k].cost {
                best[qa + k] = m;
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{FeatureMode, Motion, NormalizationStats};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_motion(rng: &mut ChaCha8Rng, frames: usize, width: usize) -> Motion {
        let f = Array2::from_shape_fn((frames, width), |_| rng.random_range(-1.0..1.0));
        Motion::new(f, 30.0, FeatureMode::Rotation6d).unwrap()
    }

    // Direct evaluation of the two masked MSE terms.
    fn oracle(query: ArrayView2<f64>, db: &PatchDatabase, mask: &[bool], alpha: f64) -> (usize, f64) {
        let n = (query.nrows() * query.ncols()) as f64;
        let mut best = (usize::MAX, f64::INFINITY);
        for i in 0..db.len() {
            let p = db.patch(i);
            let (mut bound, mut unbound) = (0.0, 0.0);
            for ((idx, q), v) in query.indexed_iter().zip(p.iter()) {
                let d = (q - v).powi(2);
                if mask[idx.1] {
                    bound += d;
                } else {
                    unbound += d;
                }
            }
            let cost = alpha * bound / n + (1.0 - alpha) * unbound / n;
            if cost < best.1 {
                best = (i, cost);
            }
        }
        best
    }

    #[test]
    fn finds_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_motion(&mut rng, 30, 15);
        let db = PatchDatabase::build(std::slice::from_ref(&m), 5, 1, &NormalizationStats::identity(15)).unwrap();
        let q = db.patch(7).to_owned();
        let hit = match_patch(q.view(), &db, &[true; 15], 0.85).unwrap();
        assert_eq!(hit.index, 7);
        assert_eq!(hit.cost, 0.0);
    }

    #[test]
    fn single_candidate_and_tie_break() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_motion(&mut rng, 5, 9);
        let db = PatchDatabase::build(&[m], 5, 1, &NormalizationStats::identity(9)).unwrap();
        let q = Array2::from_elem((5, 9), 3.0);
        for alpha in [0.0, 0.5, 1.0] {
            assert_eq!(match_patch(q.view(), &db, &[false; 9], alpha).unwrap().index, 0);
        }

        let mut a = Array2::<f64>::zeros((5, 9));
        let mut b = a.clone();
        a.column_mut(8).fill(1.0);
        b.column_mut(8).fill(-1.0);
        let a = Motion::new(a, 30.0, FeatureMode::Rotation6d).unwrap();
        let b = Motion::new(b, 30.0, FeatureMode::Rotation6d).unwrap();
        let mut mask = [true; 9];
        mask[8] = false;
        let db = PatchDatabase::build(&[b, a], 5, 1, &NormalizationStats::identity(9)).unwrap();
        let q = Array2::from_elem((5, 9), 0.0);
        let hit = match_patch(q.view(), &db, &mask, 1.0).unwrap();
        assert_eq!(hit.index, 0);
        assert_eq!(db.refs()[hit.index].motion, 0);
    }

    #[test]
    fn empty_database_rejected() {
        assert!(PatchDatabase::build(&[], 5, 1, &NormalizationStats::identity(9)).is_err());
    }

    #[test]
    fn agrees_with_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let width = 3 + 6 * 4;
        let targets: Vec<Motion> = (0..3).map(|_| random_motion(&mut rng, 80, width)).collect();
        let db = PatchDatabase::build(&targets, 11, 1, &NormalizationStats::identity(width)).unwrap();
        let mask: Vec<bool> = (0..width).map(|c| c % 3 != 0).collect();
        let weights = channel_weights(&mask, 0.85);
        let query = random_motion(&mut rng, 60, width).features;
        let starts: Vec<usize> = (0..50).collect();
        let batched = match_all(&query, &starts, &db, &weights).unwrap();
        for (&s, b) in starts.iter().zip(&batched) {
            let window = query.slice(ndarray::s![s..s + 11, ..]);
            let single = match_patch(window, &db, &mask, 0.85).unwrap();
            let (oi, oc) = oracle(window, &db, &mask, 0.85);
            assert_eq!(single, *b);
            assert_eq!(single.index, oi);
            assert!((single.cost - oc).abs() < 1e-12);
        }
    }

    #[test]
    fn thread_count_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let width = 15;
        let targets: Vec<Motion> = (0..2).map(|_| random_motion(&mut rng, 300, width)).collect();
        let db = PatchDatabase::build(&targets, 7, 1, &NormalizationStats::identity(width)).unwrap();
        let weights = channel_weights(&[true; 15], 0.7);
        let query = random_motion(&mut rng, 300, width).features;
        let starts: Vec<usize> = (0..294).collect();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| match_all(&query, &starts, &db, &weights).unwrap())
        };
        assert_eq!(run(1), run(4));
    }
}
