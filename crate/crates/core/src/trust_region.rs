//! Per-cohort adaptive trust regions inside the global policy box.
//!
//! Each cohort owns one isotropic axis-aligned box that doubles after a
//! streak of successes and halves after a streak of failures; a region that
//! would shrink below its floor restarts at its initial size (the caller
//! recenters it on the incumbent). Edge lengths are expressed in normalized
//! units: length 1.0 spans the entire global box in every dimension.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::Real;
use crate::sim::PolicyVector;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrustRegionError {
    #[error("center component {component} = {value} is outside the global bounds")]
    CenterOutOfBounds { component: usize, value: f64 },
    #[error("center has {got} dimensions, bounds have {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// The global policy space Θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalBounds<R> {
    pub lower: Vec<R>,
    pub upper: Vec<R>,
}

impl<R: Real> GlobalBounds<R> {
    /// The unit box `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Self {
        Self {
            lower: vec![R::zero(); dim],
            upper: vec![R::one(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn midpoint(&self) -> PolicyVector<R> {
        PolicyVector(
            self.lower
                .iter()
                .zip(&self.upper)
                .map(|(l, u)| (*l + *u) / R::of(2.0))
                .collect(),
        )
    }

    pub fn contains(&self, theta: &PolicyVector<R>) -> bool {
        theta.dim() == self.dim()
            && theta
                .as_slice()
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(t, (l, u))| *t >= *l && *t <= *u)
    }

    fn check_center(&self, center: &PolicyVector<R>) -> Result<(), TrustRegionError> {
        if center.dim() != self.dim() {
            return Err(TrustRegionError::DimensionMismatch {
                expected: self.dim(),
                got: center.dim(),
            });
        }
        for (i, ((t, l), u)) in center
            .as_slice()
            .iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .enumerate()
        {
            if *t < *l || *t > *u {
                return Err(TrustRegionError::CenterOutOfBounds {
                    component: i,
                    value: t.to_f64_lossy(),
                });
            }
        }
        Ok(())
    }
}

/// An axis-aligned candidate box, produced by [`TrustRegion::region_bounds`].
#[derive(Debug, Clone, PartialEq)]
pub struct RegionBox<R> {
    pub lower: Vec<R>,
    pub upper: Vec<R>,
}

impl<R: Real> RegionBox<R> {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn center(&self) -> PolicyVector<R> {
        PolicyVector(
            self.lower
                .iter()
                .zip(&self.upper)
                .map(|(l, u)| (*l + *u) / R::of(2.0))
                .collect(),
        )
    }

    pub fn contains(&self, theta: &PolicyVector<R>) -> bool {
        theta.dim() == self.dim()
            && theta
                .as_slice()
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(t, (l, u))| *t >= *l && *t <= *u)
    }
}

/// Size thresholds and streak limits governing one region's automaton.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustRegionParams<R> {
    pub length_init: R,
    pub length_min: R,
    pub length_max: R,
    pub tau_succ: u32,
    pub tau_fail: u32,
}

impl<R: Real> Default for TrustRegionParams<R> {
    fn default() -> Self {
        Self {
            length_init: R::of(0.4),
            length_min: R::of(0.05),
            length_max: R::one(),
            tau_succ: 3,
            tau_fail: 5,
        }
    }
}

/// One cohort's trust region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustRegion<R> {
    pub cohort_id: usize,
    pub center: PolicyVector<R>,
    /// Current normalized edge length.
    pub length: R,
    pub length_min: R,
    pub length_max: R,
    pub length_init: R,
    pub success_streak: u32,
    pub failure_streak: u32,
    pub tau_succ: u32,
    pub tau_fail: u32,
    pub restart_count: u32,
}

impl<R: Real> TrustRegion<R> {
    pub fn new(
        cohort_id: usize,
        center: PolicyVector<R>,
        params: TrustRegionParams<R>,
        bounds: &GlobalBounds<R>,
    ) -> Result<Self, TrustRegionError> {
        bounds.check_center(&center)?;
        Ok(Self {
            cohort_id,
            center,
            length: params.length_init,
            length_min: params.length_min,
            length_max: params.length_max,
            length_init: params.length_init,
            success_streak: 0,
            failure_streak: 0,
            tau_succ: params.tau_succ,
            tau_fail: params.tau_fail,
            restart_count: 0,
        })
    }

    /// A region that covers the global box exactly (used by baselines that
    /// sample the full space).
    pub fn spanning(cohort_id: usize, bounds: &GlobalBounds<R>) -> Self {
        Self {
            cohort_id,
            center: bounds.midpoint(),
            length: R::one(),
            length_min: R::of(0.05),
            length_max: R::one(),
            length_init: R::one(),
            success_streak: 0,
            failure_streak: 0,
            tau_succ: u32::MAX,
            tau_fail: u32::MAX,
            restart_count: 0,
        }
    }

    /// The candidate box: `center ± (length/2) · span`, clipped into the
    /// global bounds. A normalized length of 1.0 therefore spans each
    /// dimension fully.
    pub fn region_bounds(&self, bounds: &GlobalBounds<R>) -> RegionBox<R> {
        let half = self.length / R::of(2.0);
        let mut lower = Vec::with_capacity(bounds.dim());
        let mut upper = Vec::with_capacity(bounds.dim());
        for ((c, l), u) in self
            .center
            .as_slice()
            .iter()
            .zip(&bounds.lower)
            .zip(&bounds.upper)
        {
            let span = *u - *l;
            lower.push((*c - half * span).max(*l));
            upper.push((*c + half * span).min(*u));
        }
        RegionBox { lower, upper }
    }

    /// Advances the success/failure automaton by one observed outcome.
    ///
    /// A success streak of `tau_succ` doubles the edge (capped at
    /// `length_max`); a failure streak of `tau_fail` halves it, and a halving
    /// that would cross `length_min` restarts the region at `length_init`
    /// and bumps `restart_count` — the caller is expected to recenter.
    pub fn update_on_outcome(mut self, success: bool) -> Self {
        if success {
            self.success_streak += 1;
            self.failure_streak = 0;
            if self.success_streak >= self.tau_succ {
                self.length = (self.length * R::of(2.0)).min(self.length_max);
                self.success_streak = 0;
            }
        } else {
            self.failure_streak += 1;
            self.success_streak = 0;
            if self.failure_streak >= self.tau_fail {
                let halved = self.length / R::of(2.0);
                if halved < self.length_min {
                    self.length = self.length_init;
                    self.restart_count += 1;
                } else {
                    self.length = halved;
                }
                self.failure_streak = 0;
            }
        }
        self
    }

    /// Moves the region onto `best`, leaving every other field untouched.
    pub fn recenter(
        mut self,
        best: PolicyVector<R>,
        bounds: &GlobalBounds<R>,
    ) -> Result<Self, TrustRegionError> {
        bounds.check_center(&best)?;
        self.center = best;
        Ok(self)
    }
}
