//! Two-objective Pareto front bookkeeping and hypervolume computation.
//!
//! Both coordinates are maximized. Raw observations carry (score delta,
//! impressions delta); before they enter a front the second coordinate is
//! re-expressed as impression headroom (budget minus delta), so that "up and
//! to the right" is better in both axes and the hypervolume against a
//! dominated reference point measures the quality of the trade-off surface.

use serde::{Deserialize, Serialize};

use crate::real::Real;

/// One observation (or prediction) of the two competing objectives.
///
/// `score_delta` is the ads-score change in percent; `impressions_delta` is
/// the ad-impressions change in percent. Inside a [`ParetoFront`] the second
/// field holds headroom instead (see [`ObjectivePair::with_headroom`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectivePair<R> {
    pub score_delta: R,
    pub impressions_delta: R,
}

impl<R: Real> ObjectivePair<R> {
    pub fn new(score_delta: R, impressions_delta: R) -> Self {
        Self {
            score_delta,
            impressions_delta,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.score_delta.is_finite() && self.impressions_delta.is_finite()
    }

    /// Re-expresses the pair for front bookkeeping: the score coordinate is
    /// kept and the impressions coordinate becomes remaining headroom
    /// `budget − impressions_delta`, so both coordinates are
    /// bigger-is-better.
    pub fn with_headroom(&self, budget: R) -> Self {
        Self {
            score_delta: self.score_delta,
            impressions_delta: budget - self.impressions_delta,
        }
    }

    /// Weak Pareto domination (maximize/maximize): at least as good in both
    /// coordinates and strictly better in one.
    pub fn dominates(&self, other: &Self) -> bool {
        self.score_delta >= other.score_delta
            && self.impressions_delta >= other.impressions_delta
            && (self.score_delta > other.score_delta
                || self.impressions_delta > other.impressions_delta)
    }
}

/// Mutually non-dominated points plus the reference point their hypervolume
/// is measured against.
///
/// Points are stored sorted by first coordinate descending (so second
/// coordinate strictly ascending), which is the order the sweep in
/// [`hypervolume_2d`] and the staircase walk in [`hvi`] expect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront<R> {
    points: Vec<ObjectivePair<R>>,
    ref_point: ObjectivePair<R>,
}

impl<R: Real> ParetoFront<R> {
    /// Filters `points` down to the non-dominated subset, dropping points
    /// that fail to beat `ref_point` in either coordinate.
    pub fn new(points: &[ObjectivePair<R>], ref_point: ObjectivePair<R>) -> Self {
        let mut kept = pareto_filter(points);
        kept.retain(|p| {
            p.score_delta > ref_point.score_delta
                || p.impressions_delta > ref_point.impressions_delta
        });
        Self {
            points: kept,
            ref_point,
        }
    }

    pub fn empty(ref_point: ObjectivePair<R>) -> Self {
        Self {
            points: Vec::new(),
            ref_point,
        }
    }

    pub fn points(&self) -> &[ObjectivePair<R>] {
        &self.points
    }

    pub fn ref_point(&self) -> ObjectivePair<R> {
        self.ref_point
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// True when some front point weakly dominates `candidate` or equals it.
    pub fn dominates(&self, candidate: &ObjectivePair<R>) -> bool {
        self.points.iter().any(|p| {
            p.score_delta >= candidate.score_delta
                && p.impressions_delta >= candidate.impressions_delta
        })
    }
}

/// Maximal non-dominated subset of `points` under maximize/maximize
/// domination. Output is ordered by first coordinate descending (ties were
/// either duplicates or dominated); exact duplicates are deduplicated.
pub fn pareto_filter<R: Real>(points: &[ObjectivePair<R>]) -> Vec<ObjectivePair<R>> {
    let mut sorted: Vec<ObjectivePair<R>> = points.to_vec();
    // Descending by first coordinate, then descending by second so that for
    // equal scores the best headroom comes first and shadows the rest.
    sorted.sort_by(|a, b| {
        b.score_delta
            .partial_cmp(&a.score_delta)
            .expect("finite objective")
            .then(
                b.impressions_delta
                    .partial_cmp(&a.impressions_delta)
                    .expect("finite objective"),
            )
    });
    let mut kept: Vec<ObjectivePair<R>> = Vec::new();
    for p in sorted {
        // Every earlier point has score >= p's, so p survives only by
        // strictly improving the best headroom seen so far; equality in both
        // coordinates is a duplicate.
        match kept.last() {
            Some(last) if p.impressions_delta <= last.impressions_delta => {}
            _ => kept.push(p),
        }
    }
    kept
}

/// Area of the union of rectangles spanned by `ref_point` and each front
/// point, via a single descending-x sweep. Points that do not strictly beat
/// the reference in both coordinates enclose no area and are skipped.
pub fn hypervolume_2d<R: Real>(front: &ParetoFront<R>) -> R {
    let r = front.ref_point();
    let mut area = R::zero();
    let mut prev_y = r.impressions_delta;
    for p in front.points() {
        // Stored order: score descending, headroom ascending.
        if p.score_delta > r.score_delta && p.impressions_delta > prev_y {
            area += (p.score_delta - r.score_delta) * (p.impressions_delta - prev_y);
            prev_y = p.impressions_delta;
        }
    }
    area
}

/// Hypervolume improvement of `candidate` over `front`: the area inside
/// `[ref, candidate]` not already covered by the front's rectangles.
///
/// Equals `hypervolume_2d(front ∪ {candidate}) − hypervolume_2d(front)` but
/// is computed directly by walking the front's staircase, never negative,
/// and exactly zero for dominated candidates.
pub fn hvi<R: Real>(candidate: &ObjectivePair<R>, front: &ParetoFront<R>) -> R {
    let r = front.ref_point();
    if candidate.score_delta <= r.score_delta || candidate.impressions_delta <= r.impressions_delta
    {
        return R::zero();
    }
    if front.dominates(candidate) {
        return R::zero();
    }
    // Integrate the uncovered width over y in [ref.y, candidate.y]. The
    // covered width at height y is set by the largest score among front
    // points whose headroom reaches y; front order (score desc, headroom
    // asc) makes that the first point from the bottom of the list whose
    // headroom is >= y, so walking the list ascending in headroom sweeps the
    // segments in order.
    let cx = candidate.score_delta;
    let cy = candidate.impressions_delta;
    let mut area = R::zero();
    let mut seg_lo = r.impressions_delta;
    for p in front.points() {
        if seg_lo >= cy {
            break;
        }
        // Segment (seg_lo, p.y] has covering score p.x (points before this
        // one have smaller headroom, points after have smaller score).
        let seg_hi = p.impressions_delta.min(cy);
        if seg_hi > seg_lo {
            let covered = p.score_delta.max(r.score_delta);
            if cx > covered {
                area += (cx - covered) * (seg_hi - seg_lo);
            }
            seg_lo = seg_hi;
        }
    }
    // Above the tallest front point nothing is covered.
    if cy > seg_lo {
        area += (cx - r.score_delta) * (cy - seg_lo);
    }
    area.max(R::zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pair(x: f64, y: f64) -> ObjectivePair<f64> {
        ObjectivePair::new(x, y)
    }

    /// O(n^2) pairwise-domination oracle.
    fn brute_force_filter(points: &[ObjectivePair<f64>]) -> Vec<ObjectivePair<f64>> {
        let mut kept: Vec<ObjectivePair<f64>> = Vec::new();
        for (i, p) in points.iter().enumerate() {
            let dominated = points.iter().any(|q| q.dominates(p));
            let duplicate_earlier = points[..i].iter().any(|q| q == p);
            if !dominated && !duplicate_earlier {
                kept.push(*p);
            }
        }
        kept.sort_by(|a, b| b.score_delta.partial_cmp(&a.score_delta).unwrap());
        kept
    }

    /// Exact rectangle-union area by coordinate compression: every cell of
    /// the grid induced by the point coordinates is either fully covered or
    /// fully uncovered, so summing covered cells is exact.
    fn grid_union_area(points: &[ObjectivePair<f64>], r: ObjectivePair<f64>) -> f64 {
        let live: Vec<_> = points
            .iter()
            .filter(|p| p.score_delta > r.score_delta && p.impressions_delta > r.impressions_delta)
            .collect();
        let mut xs: Vec<f64> = live.iter().map(|p| p.score_delta).collect();
        let mut ys: Vec<f64> = live.iter().map(|p| p.impressions_delta).collect();
        xs.push(r.score_delta);
        ys.push(r.impressions_delta);
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs.dedup();
        ys.dedup();
        let mut area = 0.0;
        for wx in xs.windows(2) {
            for wy in ys.windows(2) {
                let covered = live
                    .iter()
                    .any(|p| p.score_delta >= wx[1] && p.impressions_delta >= wy[1]);
                if covered {
                    area += (wx[1] - wx[0]) * (wy[1] - wy[0]);
                }
            }
        }
        area
    }

    fn front_of(points: &[ObjectivePair<f64>], r: ObjectivePair<f64>) -> ParetoFront<f64> {
        ParetoFront::new(points, r)
    }

    #[test]
    fn filter_drops_strictly_dominated() {
        let out = pareto_filter(&[pair(1.0, 1.0), pair(0.0, 0.0)]);
        assert_eq!(out, vec![pair(1.0, 1.0)]);
    }

    #[test]
    fn filter_keeps_incomparable_pair() {
        let out = pareto_filter(&[pair(1.0, 0.0), pair(0.0, 1.0)]);
        assert_eq!(out, vec![pair(1.0, 0.0), pair(0.0, 1.0)]);
    }

    #[test]
    fn filter_deduplicates() {
        let out = pareto_filter(&[pair(1.0, 1.0), pair(1.0, 1.0), pair(2.0, 0.0)]);
        assert_eq!(out, vec![pair(2.0, 0.0), pair(1.0, 1.0)]);
    }

    #[test]
    fn filter_handles_ties_in_first_coordinate() {
        let out = pareto_filter(&[pair(1.0, 2.0), pair(1.0, 3.0), pair(1.0, 1.0)]);
        assert_eq!(out, vec![pair(1.0, 3.0)]);
    }

    #[test]
    fn filter_matches_brute_force_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..30 {
            let points: Vec<ObjectivePair<f64>> = (0..50)
                .map(|_| pair(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
                .collect();
            assert_eq!(pareto_filter(&points), brute_force_filter(&points));
        }
    }

    #[test]
    fn hypervolume_empty_front_is_zero() {
        let f = ParetoFront::<f64>::empty(pair(0.0, 0.0));
        assert_eq!(hypervolume_2d(&f), 0.0);
    }

    #[test]
    fn hypervolume_single_rectangle() {
        let f = front_of(&[pair(2.0, 3.0)], pair(0.0, 0.0));
        assert_abs_diff_eq!(hypervolume_2d(&f), 6.0, epsilon = 1e-12);
    }

    #[test]
    fn hypervolume_three_point_staircase() {
        let f = front_of(&[pair(1.0, 3.0), pair(2.0, 2.0), pair(3.0, 1.0)], pair(0.0, 0.0));
        assert_abs_diff_eq!(hypervolume_2d(&f), 6.0, epsilon = 1e-12);
    }

    #[test]
    fn hypervolume_three_point_staircase_monte_carlo() {
        // Independent randomized check of the same area: rejection-sample
        // the bounding box and count hits inside any rectangle.
        let points = [pair(1.0, 3.0), pair(2.0, 2.0), pair(3.0, 1.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 4_000_000usize;
        let mut hits = 0usize;
        for _ in 0..n {
            let x = rng.gen_range(0.0..3.0);
            let y = rng.gen_range(0.0..3.0);
            if points.iter().any(|p| p.score_delta >= x && p.impressions_delta >= y) {
                hits += 1;
            }
        }
        let estimate = 9.0 * hits as f64 / n as f64;
        let exact = hypervolume_2d(&front_of(&points, pair(0.0, 0.0)));
        assert!(
            (estimate - exact).abs() / exact < 1e-2,
            "monte carlo {estimate} vs sweep {exact}"
        );
    }

    #[test]
    fn hypervolume_matches_grid_oracle_on_random_fronts() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..100 {
            let points: Vec<ObjectivePair<f64>> = (0..rng.gen_range(1..=10))
                .map(|_| pair(rng.gen_range(-1.0..4.0), rng.gen_range(-1.0..4.0)))
                .collect();
            let r = pair(rng.gen_range(-2.0..-1.0), rng.gen_range(-2.0..-1.0));
            let hv = hypervolume_2d(&front_of(&points, r));
            let oracle = grid_union_area(&points, r);
            assert_abs_diff_eq!(hv, oracle, epsilon = 1e-10);
        }
    }

    #[test]
    fn hypervolume_ignores_points_below_reference() {
        let f = front_of(&[pair(2.0, 3.0), pair(5.0, -1.0)], pair(0.0, 0.0));
        assert_abs_diff_eq!(hypervolume_2d(&f), 6.0, epsilon = 1e-12);
    }

    #[test]
    fn hvi_dominated_candidate_is_exactly_zero() {
        let f = front_of(&[pair(2.0, 2.0)], pair(0.0, 0.0));
        assert_eq!(hvi(&pair(1.0, 1.0), &f), 0.0);
        assert_eq!(hvi(&pair(2.0, 2.0), &f), 0.0);
        assert_eq!(hvi(&pair(2.0, 1.0), &f), 0.0);
    }

    #[test]
    fn hvi_into_empty_front_is_full_rectangle() {
        let f = ParetoFront::<f64>::empty(pair(0.0, 0.0));
        assert_abs_diff_eq!(hvi(&pair(1.0, 1.0), &f), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn hvi_candidate_below_reference_is_zero() {
        let f = front_of(&[pair(1.0, 1.0)], pair(0.0, 0.0));
        assert_eq!(hvi(&pair(-1.0, 5.0), &f), 0.0);
        assert_eq!(hvi(&pair(5.0, -1.0), &f), 0.0);
    }

    #[test]
    fn hvi_matches_recompute_from_scratch_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for _ in 0..500 {
            let points: Vec<ObjectivePair<f64>> = (0..rng.gen_range(0..=8))
                .map(|_| pair(rng.gen_range(-1.0..3.0), rng.gen_range(-1.0..3.0)))
                .collect();
            let r = pair(-1.5, -1.5);
            let front = front_of(&points, r);
            let c = pair(rng.gen_range(-2.0..3.5), rng.gen_range(-2.0..3.5));
            let fast = hvi(&c, &front);
            let mut extended = points.clone();
            extended.push(c);
            let slow = hypervolume_2d(&front_of(&extended, r)) - hypervolume_2d(&front);
            assert_abs_diff_eq!(fast, slow, epsilon = 1e-10);
        }
    }

    #[test]
    fn with_headroom_flips_impressions_axis() {
        let raw = pair(0.8, 1.2);
        let h = raw.with_headroom(1.5);
        assert_abs_diff_eq!(h.score_delta, 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(h.impressions_delta, 0.3, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn hvi_is_never_negative(
            xs in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 0..8),
            cx in -3.0f64..3.0,
            cy in -3.0f64..3.0,
        ) {
            let points: Vec<_> = xs.iter().map(|&(x, y)| pair(x, y)).collect();
            let front = front_of(&points, pair(-4.0, -4.0));
            prop_assert!(hvi(&pair(cx, cy), &front) >= 0.0);
        }

        #[test]
        fn hvi_zero_iff_dominated(
            xs in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..8),
            cx in -3.0f64..3.0,
            cy in -3.0f64..3.0,
        ) {
            let points: Vec<_> = xs.iter().map(|&(x, y)| pair(x, y)).collect();
            let front = front_of(&points, pair(-4.0, -4.0));
            let c = pair(cx, cy);
            let improvement = hvi(&c, &front);
            if front.dominates(&c) {
                prop_assert!(improvement <= 1e-12);
            } else {
                // Non-dominated and above ref: must claim strictly new area.
                prop_assert!(improvement > 0.0);
            }
        }

        #[test]
        fn hypervolume_monotone_under_insertion(
            xs in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 0..8),
            cx in -3.0f64..3.0,
            cy in -3.0f64..3.0,
        ) {
            let points: Vec<_> = xs.iter().map(|&(x, y)| pair(x, y)).collect();
            let r = pair(-4.0, -4.0);
            let before = hypervolume_2d(&front_of(&points, r));
            let mut extended = points.clone();
            extended.push(pair(cx, cy));
            let after = hypervolume_2d(&front_of(&extended, r));
            prop_assert!(after >= before - 1e-12);
        }

        #[test]
        fn hypervolume_translation_covariance(
            xs in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..8),
            dx in -5.0f64..5.0,
            dy in -5.0f64..5.0,
        ) {
            let points: Vec<_> = xs.iter().map(|&(x, y)| pair(x, y)).collect();
            let r = pair(-4.0, -4.0);
            let base = hypervolume_2d(&front_of(&points, r));
            let shifted_points: Vec<_> = points
                .iter()
                .map(|p| pair(p.score_delta + dx, p.impressions_delta + dy))
                .collect();
            let shifted = hypervolume_2d(&front_of(&shifted_points, pair(r.score_delta + dx, r.impressions_delta + dy)));
            prop_assert!((base - shifted).abs() <= 1e-10);
        }

        #[test]
        fn filter_output_is_mutually_non_dominated(
            xs in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 0..40),
        ) {
            let points: Vec<_> = xs.iter().map(|&(x, y)| pair(x, y)).collect();
            let kept = pareto_filter(&points);
            for (i, p) in kept.iter().enumerate() {
                for (j, q) in kept.iter().enumerate() {
                    if i != j {
                        prop_assert!(!p.dominates(q));
                        prop_assert!(p != q);
                    }
                }
            }
        }
    }
}
