//! Histogram accumulation and regularized best-split search.

use rayon::prelude::*;

use super::binning::BinnedMatrix;
use super::BoostParams;

/// Per-bin gradient/hessian/count sums.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BinStats {
    pub g: f64,
    pub h: f64,
    pub count: u32,
}

impl BinStats {
    #[inline]
    fn add(&mut self, g: f64, h: f64) {
        self.g += g;
        self.h += h;
        self.count += 1;
    }
}

/// Gradient/hessian/count totals of one tree node.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NodeStats {
    pub g: f64,
    pub h: f64,
    pub count: usize,
}

impl NodeStats {
    pub fn from_rows(rows: &[u32], grad: &[f64], hess: &[f64]) -> NodeStats {
        let mut s = NodeStats {
            count: rows.len(),
            ..Default::default()
        };
        for &r in rows {
            s.g += grad[r as usize];
            s.h += hess[r as usize];
        }
        s
    }

    /// Optimal leaf weight `-G / (H + lambda)`.
    pub fn leaf_weight(&self, lambda: f64) -> f64 {
        -self.g / (self.h + lambda)
    }
}

/// The winning split for a node: bins `0..=bin` (plus missing when
/// `missing_left`) go left.
#[derive(Debug, Clone)]
pub struct SplitCandidate {
    pub feature: usize,
    /// Position of `feature` in the node's active-column list.
    pub pos: usize,
    pub bin: usize,
    pub threshold: f64,
    pub missing_left: bool,
    pub gain: f64,
    pub left: NodeStats,
    pub right: NodeStats,
}

/// One histogram per active column; the slot past the last value bin
/// holds the missing mass.
pub type Histograms = Vec<Vec<BinStats>>;

const PARALLEL_HIST_CELLS: usize = 65_536;

/// Accumulate per-feature histograms over the given rows. Each feature
/// is summed sequentially in row order, so the result does not depend
/// on the worker count.
pub fn build_histograms(
    binned: &BinnedMatrix,
    grad: &[f64],
    hess: &[f64],
    rows: &[u32],
    active_cols: &[usize],
) -> Histograms {
    let one_feature = |&f: &usize| {
        let mut hist = vec![BinStats::default(); binned.n_bins(f) + 1];
        for &r in rows {
            let r = r as usize;
            hist[binned.bin(r, f) as usize].add(grad[r], hess[r]);
        }
        hist
    };
    if rows.len() * active_cols.len() >= PARALLEL_HIST_CELLS {
        active_cols.par_iter().map(one_feature).collect()
    } else {
        active_cols.iter().map(one_feature).collect()
    }
}

/// Sibling histograms by subtraction: `parent - child`, reusing the
/// parent's buffers.
pub fn subtract_histograms(mut parent: Histograms, child: &Histograms) -> Histograms {
    for (p, c) in parent.iter_mut().zip(child) {
        for (pb, cb) in p.iter_mut().zip(c) {
            pb.g -= cb.g;
            pb.h -= cb.h;
            pb.count -= cb.count;
        }
    }
    parent
}

#[inline]
fn objective(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

/// Scan all features, bin boundaries, and missing directions for the
/// highest-gain split. Ties resolve to the lowest feature index, lowest
/// bin, left missing direction. Returns `None` when no candidate beats
/// zero gain under the constraints.
pub fn best_split(
    hist: &Histograms,
    node: &NodeStats,
    binned: &BinnedMatrix,
    active_cols: &[usize],
    params: &BoostParams,
) -> Option<SplitCandidate> {
    let lambda = params.lambda;
    let parent_obj = objective(node.g, node.h, lambda);
    let min_count = params.min_samples_leaf.max(1);
    let mut best: Option<SplitCandidate> = None;

    for (pos, &feature) in active_cols.iter().enumerate() {
        let bins = &hist[pos];
        let n_bins = binned.n_bins(feature);
        if n_bins < 2 {
            continue; // constant or all-missing feature
        }
        let missing = bins[n_bins];
        // Without missing mass the two directions coincide; trying only
        // "left" preserves the tie-break and halves the scan.
        let directions: &[bool] = if missing.count == 0 { &[true] } else { &[true, false] };
        let mut left = BinStats::default();
        for boundary in 0..n_bins - 1 {
            left.g += bins[boundary].g;
            left.h += bins[boundary].h;
            left.count += bins[boundary].count;
            for &missing_left in directions {
                let (mg, mh, mc) = if missing_left {
                    (missing.g, missing.h, missing.count)
                } else {
                    (0.0, 0.0, 0)
                };
                let lg = left.g + mg;
                let lh = left.h + mh;
                let lc = left.count + mc;
                let rg = node.g - lg;
                let rh = node.h - lh;
                let rc = node.count - lc as usize;
                if (lc as usize) < min_count || rc < min_count {
                    continue;
                }
                if lh < params.min_child_weight || rh < params.min_child_weight {
                    continue;
                }
                let gain =
                    0.5 * (objective(lg, lh, lambda) + objective(rg, rh, lambda) - parent_obj)
                        - params.gamma;
                let improves = match &best {
                    None => gain > 0.0,
                    Some(b) => gain > b.gain,
                };
                if improves {
                    best = Some(SplitCandidate {
                        feature,
                        pos,
                        bin: boundary,
                        threshold: binned.edges[feature][boundary],
                        missing_left,
                        gain,
                        left: NodeStats {
                            g: lg,
                            h: lh,
                            count: lc as usize,
                        },
                        right: NodeStats {
                            g: rg,
                            h: rh,
                            count: rc,
                        },
                    });
                }
            }
        }
    }
    best
}

/// Route the node's rows through a chosen split, preserving row order.
pub fn partition_rows(
    rows: &[u32],
    binned: &BinnedMatrix,
    split: &SplitCandidate,
) -> (Vec<u32>, Vec<u32>) {
    let mut left = Vec::with_capacity(split.left.count);
    let mut right = Vec::with_capacity(split.right.count);
    let missing_id = binned.missing_id(split.feature);
    for &r in rows {
        let bin = binned.bin(r as usize, split.feature);
        let goes_left = if bin == missing_id {
            split.missing_left
        } else {
            (bin as usize) <= split.bin
        };
        if goes_left {
            left.push(r);
        } else {
            right.push(r);
        }
    }
    (left, right)
}
