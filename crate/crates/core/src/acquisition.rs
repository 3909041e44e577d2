//! Candidate generation inside a trust region and acquisition scoring:
//! optimistic hypervolume improvement minus a dual-weighted constraint
//! penalty.

pub mod pareto;

use rand::Rng;

use crate::dual::DualState;
use crate::gp::{GpError, GpModel};
use crate::real::Real;
use crate::sim::{ContextVector, PolicyVector};
use crate::trust_region::{GlobalBounds, RegionBox, TrustRegion};

use pareto::{hvi, ObjectivePair, ParetoFront};

/// Draws `n` candidate policies inside `region`: candidate 0 is the box
/// center, the rest fill the box by Latin-hypercube stratification (each
/// dimension's remaining candidates occupy one uniform stratum each, in a
/// seeded random order).
///
/// All randomness is consumed as `f64` in a fixed order, so the layout is
/// identical for every scalar type given the same generator state.
pub fn generate_candidates<R: Real>(
    region: &RegionBox<R>,
    n: usize,
    rng: &mut impl Rng,
) -> Vec<PolicyVector<R>> {
    assert!(n >= 1, "candidate count must be at least 1");
    let dim = region.dim();
    let mut candidates = vec![region.center()];
    let m = n - 1;
    if m == 0 {
        return candidates;
    }
    // Per-dimension stratum assignment: a Fisher–Yates permutation of
    // 0..m, then one uniform offset within each stratum.
    let mut coords = vec![vec![R::zero(); dim]; m];
    for d in 0..dim {
        let mut strata: Vec<usize> = (0..m).collect();
        for i in (1..m).rev() {
            let j = rng.gen_range(0..=i);
            strata.swap(i, j);
        }
        let lo = region.lower[d];
        let span = region.upper[d] - lo;
        let m_r = R::of(m as f64);
        for (candidate, stratum) in coords.iter_mut().zip(strata) {
            let offset = rng.gen_range(0.0..1.0);
            let unit = (R::of(stratum as f64) + R::of(offset)) / m_r;
            candidate[d] = lo + span * unit;
        }
    }
    candidates.extend(coords.into_iter().map(PolicyVector));
    candidates
}

/// Scores one candidate policy.
///
/// With `μ, σ` the posterior mean and standard deviation of each model at
/// the assembled input, the optimistic objective pair is
/// `(μ_f + β·σ_f, budget_1 − (μ_c,1 − β·σ_c,1))` and the score is its
/// hypervolume improvement over `front` minus
/// `η · Σ_i λ_i · max(0, μ_c,i − budget_i)`.
///
/// `extra_features` is appended verbatim after θ⊕z when assembling model
/// inputs: per-cohort models pass an empty slice, the pooled baseline passes
/// its cohort indicator.
#[allow(clippy::too_many_arguments)]
pub fn acquisition_score<R: Real>(
    theta: &PolicyVector<R>,
    z: &ContextVector<R>,
    extra_features: &[R],
    f_gp: &GpModel<R>,
    c_gps: &[GpModel<R>],
    duals: &DualState<R>,
    front: &ParetoFront<R>,
    budgets: &[R],
    beta: R,
) -> Result<R, GpError> {
    assert_eq!(
        c_gps.len(),
        budgets.len(),
        "one constraint model per budget"
    );
    assert_eq!(
        duals.lambda.len(),
        budgets.len(),
        "one multiplier per budget"
    );
    let mut input = Vec::with_capacity(theta.dim() + z.dim() + extra_features.len());
    input.extend_from_slice(theta.as_slice());
    input.extend_from_slice(z.as_slice());
    input.extend_from_slice(extra_features);

    let f = f_gp.predict(&input)?;
    let optimistic_f = f.mean + beta * f.variance.sqrt();

    let mut penalty = R::zero();
    let mut optimistic_headroom = R::zero();
    for (i, (c_gp, budget)) in c_gps.iter().zip(budgets).enumerate() {
        let c = c_gp.predict(&input)?;
        let sigma = c.variance.sqrt();
        if i == 0 {
            optimistic_headroom = *budget - (c.mean - beta * sigma);
        }
        penalty += duals.lambda[i] * (c.mean - *budget).max(R::zero());
    }
    let candidate = ObjectivePair::new(optimistic_f, optimistic_headroom);
    Ok(hvi(&candidate, front) - duals.eta * penalty)
}

/// Argmax of [`acquisition_score`] over a generated candidate set, ties
/// broken toward the lowest candidate index. The chosen policy always lies
/// inside the region box.
#[allow(clippy::too_many_arguments)]
pub fn select_policy<R: Real>(
    tr: &TrustRegion<R>,
    bounds: &GlobalBounds<R>,
    z: &ContextVector<R>,
    extra_features: &[R],
    f_gp: &GpModel<R>,
    c_gps: &[GpModel<R>],
    duals: &DualState<R>,
    front: &ParetoFront<R>,
    budgets: &[R],
    n_candidates: usize,
    beta: R,
    rng: &mut impl Rng,
) -> Result<PolicyVector<R>, GpError> {
    let region = tr.region_bounds(bounds);
    let mut candidates = generate_candidates(&region, n_candidates, rng);
    let mut best_index = 0usize;
    let mut best_score = R::neg_infinity();
    for (i, theta) in candidates.iter().enumerate() {
        let score = acquisition_score(
            theta, z, extra_features, f_gp, c_gps, duals, front, budgets, beta,
        )?;
        if score > best_score {
            best_score = score;
            best_index = i;
        }
    }
    Ok(candidates.swap_remove(best_index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::KernelSpec;
    use crate::rng::{derive_rng, StreamPurpose};
    use approx::assert_abs_diff_eq;
    use pareto::pareto_filter;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_box(dim: usize) -> RegionBox<f64> {
        RegionBox {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    #[test]
    fn single_candidate_is_the_center() {
        let region = RegionBox {
            lower: vec![0.2, 0.4],
            upper: vec![0.6, 0.8],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = generate_candidates(&region, 1, &mut rng);
        assert_eq!(out.len(), 1);
        assert_abs_diff_eq!(out[0].as_slice()[0], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(out[0].as_slice()[1], 0.6, epsilon = 1e-15);
    }

    #[test]
    fn candidates_stay_inside_the_box() {
        let region = RegionBox {
            lower: vec![0.1, -2.0, 5.0],
            upper: vec![0.3, 2.0, 9.0],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            for c in generate_candidates(&region, 100, &mut rng) {
                assert!(region.contains(&c), "candidate {c:?} escaped the box");
            }
        }
    }

    #[test]
    fn same_seed_reproduces_candidates() {
        let region = unit_box(3);
        let a = generate_candidates(&region, 64, &mut ChaCha8Rng::seed_from_u64(7));
        let b = generate_candidates(&region, 64, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
        let c = generate_candidates(&region, 64, &mut ChaCha8Rng::seed_from_u64(8));
        assert_ne!(a, c);
    }

    #[test]
    fn latin_hypercube_covers_every_stratum_once() {
        let region = unit_box(2);
        let n = 33;
        let m = n - 1;
        let candidates = generate_candidates(&region, n, &mut ChaCha8Rng::seed_from_u64(5));
        for d in 0..2 {
            let mut counts = vec![0usize; m];
            for c in &candidates[1..] {
                let stratum = ((c.as_slice()[d] * m as f64).floor() as usize).min(m - 1);
                counts[stratum] += 1;
            }
            assert!(counts.iter().all(|&k| k == 1), "dim {d} counts {counts:?}");
        }
    }

    fn toy_models() -> (GpModel<f64>, GpModel<f64>) {
        // Inputs are theta (1-d) ++ z (1-d); targets chosen so the score
        // model rises with theta and the impressions model rises faster.
        let x = vec![
            vec![0.0, 0.0],
            vec![0.25, 0.0],
            vec![0.5, 0.0],
            vec![0.75, 0.0],
            vec![1.0, 0.0],
        ];
        let score: Vec<f64> = x.iter().map(|p| 2.0 * p[0]).collect();
        let impressions: Vec<f64> = x.iter().map(|p| 3.0 * p[0]).collect();
        let kernel = KernelSpec::rbf_iso(0.8, 1.0);
        let f_gp = GpModel::fit(&x, &score, kernel.clone(), 1e-6, 0.0).unwrap();
        let c_gp = GpModel::fit(&x, &impressions, kernel, 1e-6, 0.0).unwrap();
        (f_gp, c_gp)
    }

    #[test]
    fn zero_lambda_zero_beta_reduces_to_mean_hvi() {
        let (f_gp, c_gp) = toy_models();
        let duals = DualState::new(1, 0.05, 1.0);
        let front = ParetoFront::empty(ObjectivePair::new(-1.0, -1.0));
        let theta = PolicyVector(vec![0.5]);
        let z = ContextVector(vec![0.0]);
        let budgets = [1.5];
        let got = acquisition_score(
            &theta,
            &z,
            &[],
            &f_gp,
            std::slice::from_ref(&c_gp),
            &duals,
            &front,
            &budgets,
            0.0,
        )
        .unwrap();
        let f = f_gp.predict(&[0.5, 0.0]).unwrap();
        let c = c_gp.predict(&[0.5, 0.0]).unwrap();
        let expected = hvi(
            &ObjectivePair::new(f.mean, 1.5 - c.mean),
            &front,
        );
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
    }

    #[test]
    fn penalty_is_inactive_below_budget() {
        let (f_gp, c_gp) = toy_models();
        let duals = DualState {
            lambda: vec![10.0],
            epsilon: 0.05,
            eta: 1.0,
        };
        let front = ParetoFront::empty(ObjectivePair::new(-1.0, -1.0));
        let theta = PolicyVector(vec![0.1]);
        let z = ContextVector(vec![0.0]);
        // Budget far above any predicted impressions: hinge must contribute
        // exactly nothing even with huge multipliers.
        let with_budget = |budget: f64| {
            acquisition_score(
                &theta,
                &z,
                &[],
                &f_gp,
                std::slice::from_ref(&c_gp),
                &duals,
                &front,
                &[budget],
                0.0,
            )
            .unwrap()
        };
        let c = c_gp.predict(&[0.1, 0.0]).unwrap();
        let f = f_gp.predict(&[0.1, 0.0]).unwrap();
        let slack = with_budget(100.0);
        let expected = hvi(&ObjectivePair::new(f.mean, 100.0 - c.mean), &front);
        assert_abs_diff_eq!(slack, expected, epsilon = 1e-12);
    }

    #[test]
    fn score_matches_hand_composed_formula() {
        let (f_gp, c_gp) = toy_models();
        let duals = DualState {
            lambda: vec![0.7],
            epsilon: 0.05,
            eta: 2.0,
        };
        let existing = [
            ObjectivePair::new(0.5, 0.9),
            ObjectivePair::new(1.0, 0.4),
        ];
        let front = ParetoFront::new(&existing, ObjectivePair::new(-1.0, -1.0));
        let theta = PolicyVector(vec![0.8]);
        let z = ContextVector(vec![0.0]);
        let beta = 1.3;
        let budget = 1.0;
        let got = acquisition_score(
            &theta,
            &z,
            &[],
            &f_gp,
            std::slice::from_ref(&c_gp),
            &duals,
            &front,
            &[budget],
            beta,
        )
        .unwrap();
        let f = f_gp.predict(&[0.8, 0.0]).unwrap();
        let c = c_gp.predict(&[0.8, 0.0]).unwrap();
        let optimistic = ObjectivePair::new(
            f.mean + beta * f.variance.sqrt(),
            budget - (c.mean - beta * c.variance.sqrt()),
        );
        let expected =
            hvi(&optimistic, &front) - 2.0 * 0.7 * (c.mean - budget).max(0.0);
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
    }

    #[test]
    fn acquisition_rejects_dimension_mismatch() {
        let (f_gp, c_gp) = toy_models();
        let duals = DualState::new(1, 0.05, 1.0);
        let front = ParetoFront::empty(ObjectivePair::new(-1.0, -1.0));
        let out = acquisition_score(
            &PolicyVector(vec![0.5, 0.5]),
            &ContextVector(vec![0.0]),
            &[],
            &f_gp,
            std::slice::from_ref(&c_gp),
            &duals,
            &front,
            &[1.5],
            1.0,
        );
        assert!(matches!(out, Err(GpError::WrongDimension { .. })));
    }

    type SelectFixture = (
        TrustRegion<f64>,
        GlobalBounds<f64>,
        GpModel<f64>,
        GpModel<f64>,
        DualState<f64>,
        ParetoFront<f64>,
    );

    fn select_setup() -> SelectFixture {
        let bounds = GlobalBounds::unit(1);
        let tr = TrustRegion::spanning(0, &bounds);
        let (f_gp, c_gp) = toy_models();
        let duals = DualState::new(1, 0.05, 1.0);
        let front = ParetoFront::empty(ObjectivePair::new(-1.0, -1.0));
        (tr, bounds, f_gp, c_gp, duals, front)
    }

    #[test]
    fn singleton_candidate_set_returns_that_candidate() {
        let (tr, bounds, f_gp, c_gp, duals, front) = select_setup();
        let z = ContextVector(vec![0.0]);
        let mut rng = derive_rng(3, StreamPurpose::Candidates, 1, 0);
        let theta = select_policy(
            &tr,
            &bounds,
            &z,
            &[],
            &f_gp,
            std::slice::from_ref(&c_gp),
            &duals,
            &front,
            &[1.5],
            1,
            1.0,
            &mut rng,
        )
        .unwrap();
        assert_eq!(theta, PolicyVector(vec![0.5]));
    }

    #[test]
    fn constant_scores_tie_break_to_box_center() {
        // A constant-target GP predicts the same value everywhere, and a
        // front already dominating every optimistic candidate zeroes the
        // HVI, so all scores tie and candidate 0 must win.
        let x = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        let kernel = KernelSpec::rbf_iso(1.0, 1.0);
        let f_gp = GpModel::fit(&x, &[0.0, 0.0], kernel.clone(), 1e-6, 0.0).unwrap();
        let c_gp = GpModel::fit(&x, &[0.0, 0.0], kernel, 1e-6, 0.0).unwrap();
        let bounds = GlobalBounds::unit(1);
        let tr = TrustRegion::spanning(0, &bounds);
        let duals = DualState::new(1, 0.05, 1.0);
        let front = ParetoFront::new(
            &[ObjectivePair::new(50.0, 50.0)],
            ObjectivePair::new(-1.0, -1.0),
        );
        let z = ContextVector(vec![0.0]);
        let mut rng = derive_rng(4, StreamPurpose::Candidates, 1, 0);
        let theta = select_policy(
            &tr,
            &bounds,
            &z,
            &[],
            &f_gp,
            std::slice::from_ref(&c_gp),
            &duals,
            &front,
            &[1.5],
            32,
            0.0,
            &mut rng,
        )
        .unwrap();
        assert_eq!(theta, PolicyVector(vec![0.5]));
    }

    #[test]
    fn select_policy_matches_exhaustive_scoring_oracle() {
        let (tr, bounds, f_gp, c_gp, duals, front) = select_setup();
        let z = ContextVector(vec![0.0]);
        let budgets = [1.2];
        let beta = 0.8;
        let n = 64;
        let chosen = select_policy(
            &tr,
            &bounds,
            &z,
            &[],
            &f_gp,
            std::slice::from_ref(&c_gp),
            &duals,
            &front,
            &budgets,
            n,
            beta,
            &mut derive_rng(9, StreamPurpose::Candidates, 1, 0),
        )
        .unwrap();
        // Regenerate the same candidates and score them independently.
        let candidates = generate_candidates(
            &tr.region_bounds(&bounds),
            n,
            &mut derive_rng(9, StreamPurpose::Candidates, 1, 0),
        );
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, c) in candidates.iter().enumerate() {
            let s = acquisition_score(
                c,
                &z,
                &[],
                &f_gp,
                std::slice::from_ref(&c_gp),
                &duals,
                &front,
                &budgets,
                beta,
            )
            .unwrap();
            if s > best_score {
                best_score = s;
                best = i;
            }
        }
        assert_eq!(chosen, candidates[best]);
        assert!(tr.region_bounds(&bounds).contains(&chosen));
    }

    #[test]
    fn positive_scaling_of_scores_keeps_the_argmax() {
        // Scaling both objectives' units by a positive constant scales every
        // acquisition score positively, so the selected index is unchanged.
        let (tr, bounds, f_gp, c_gp, duals, front) = select_setup();
        let z = ContextVector(vec![0.0]);
        let candidates = generate_candidates(
            &tr.region_bounds(&bounds),
            48,
            &mut derive_rng(13, StreamPurpose::Candidates, 1, 0),
        );
        let score_of = |theta: &PolicyVector<f64>| {
            acquisition_score(
                theta,
                &z,
                &[],
                &f_gp,
                std::slice::from_ref(&c_gp),
                &duals,
                &front,
                &[1.2],
                0.7,
            )
            .unwrap()
        };
        let argmax = |scores: &[f64]| {
            let mut best = 0;
            for (i, s) in scores.iter().enumerate() {
                if *s > scores[best] {
                    best = i;
                }
            }
            best
        };
        let base: Vec<f64> = candidates.iter().map(score_of).collect();
        let scaled: Vec<f64> = base.iter().map(|s| 3.7 * s).collect();
        assert_eq!(argmax(&base), argmax(&scaled));
    }

    proptest! {
        #[test]
        fn generated_candidates_always_inside_box(
            seed in 0u64..500,
            n in 1usize..40,
        ) {
            let region = RegionBox {
                lower: vec![0.25, -1.0],
                upper: vec![0.75, 1.0],
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for c in generate_candidates(&region, n, &mut rng) {
                prop_assert!(region.contains(&c));
            }
        }

        #[test]
        fn filter_then_score_never_panics(
            xs in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 0..10),
        ) {
            let points: Vec<_> = xs.iter().map(|&(x, y)| ObjectivePair::new(x, y)).collect();
            let filtered = pareto_filter(&points);
            let front = ParetoFront::new(&filtered, ObjectivePair::new(-3.0, -3.0));
            let _ = hvi(&ObjectivePair::new(0.0, 0.0), &front);
        }
    }
}
