//! Strategy switching on two time scales.
//!
//! The player holds a stationary strategy for a stretch of re-scaled time
//! `T(q)` attached to an anchor point `q` near the current average. Anchors
//! are created lazily: the first time an average is not covered by any
//! existing ball `B(q, rho(q)/2)`, a new anchor is solved for at that point and
//! appended, so the insertion order is the selection priority. Inside the
//! target the fallback strategy is played one step at a time.

use std::collections::HashMap;

use crate::error::ControllerError;
use crate::game_model::{GameModel, StationaryStrategy};
use crate::scalar::{dist, KahanSum, Scalar};
use crate::solver::{separating_strategy, RviOptions, SeparationStatus};
use crate::target_geometry::{ConvexTarget, RewardGeometry, MEMBERSHIP_TOL};

/// Hold time as a fraction of `rho / v_max`: midpoint of `(1/4, 1/3)`.
pub const HOLD_TIME_FRACTION: f64 = 7.0 / 24.0;
/// Lipschitz constant multiplier: `c = 3 * diam(K)`.
pub const RHO_LIPSCHITZ_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Hold each anchor strategy for its re-scaled hold time.
    TwoTimeScale,
    /// Re-select only when the chain visits the reference state.
    ReturnTime,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerParams {
    /// Fraction of the distance to the target allowed as anchor radius.
    pub beta: f64,
    pub membership_tol: f64,
    pub solver_tol: f64,
    pub scheme: Scheme,
    pub reference_state: usize,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            beta: 0.5,
            membership_tol: MEMBERSHIP_TOL,
            solver_tol: crate::solver::RVI_TOL,
            scheme: Scheme::TwoTimeScale,
            reference_state: 0,
        }
    }
}

impl ControllerParams {
    pub fn validate(&self) -> Result<(), ControllerError> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(ControllerError::InvalidParameter(format!(
                "beta {} not in (0, 1)",
                self.beta
            )));
        }
        if !(self.membership_tol >= 0.0) || !self.membership_tol.is_finite() {
            return Err(ControllerError::InvalidParameter(
                "membership_tol must be finite and >= 0".into(),
            ));
        }
        if !(self.solver_tol > 0.0) || !self.solver_tol.is_finite() {
            return Err(ControllerError::InvalidParameter("solver_tol must be positive".into()));
        }
        Ok(())
    }

    pub fn rvi_options(&self) -> RviOptions {
        RviOptions {
            tol: self.solver_tol,
            ..RviOptions::default()
        }
    }
}

/// A cover point with the strategy the player commits to near it.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorEntry<T> {
    pub q: Vec<T>,
    pub rho: T,
    pub hold_time: T,
    pub strategy: StationaryStrategy<T>,
    /// Insertion order; lower wins when several balls cover a point.
    pub index: usize,
    pub margin: T,
    /// Distance from `q` to the target.
    pub distance: T,
}

impl<T: Scalar> AnchorEntry<T> {
    /// Checks `rho <= dist(q, D)`, `rho/(4 v) < T < rho/(3 v)` and a positive
    /// margin.
    pub fn satisfies_invariants(&self, geometry: &RewardGeometry<T>) -> bool {
        let v = geometry.v_max;
        self.rho > T::zero()
            && self.rho <= self.distance
            && self.rho / (T::lit(4.0) * v) < self.hold_time
            && self.hold_time < self.rho / (T::lit(3.0) * v)
            && self.margin > T::zero()
    }

    pub fn covers(&self, x: &[T]) -> bool {
        dist(x, &self.q) < self.rho / T::lit(2.0)
    }
}

/// Radius around `q` on which the separating strategy found at `q` keeps a
/// margin of at least `margin / 2`: `min(margin / (2c), beta * dist(q, D))`
/// with `c = 3 diam(K)`.
pub fn compute_rho<T: Scalar>(
    geometry: &RewardGeometry<T>,
    distance_to_target: T,
    margin: T,
    beta: T,
) -> Result<T, ControllerError> {
    if !(margin > T::zero()) {
        return Err(ControllerError::InvalidParameter(format!(
            "margin {} must be positive",
            margin.as_f64()
        )));
    }
    if !(distance_to_target > T::zero()) {
        return Err(ControllerError::InvalidParameter(
            "anchor must lie outside the target".into(),
        ));
    }
    let c = T::lit(RHO_LIPSCHITZ_FACTOR) * geometry.diam_k;
    let lipschitz_bound = if c > T::zero() {
        margin / (T::lit(2.0) * c)
    } else {
        T::infinity()
    };
    Ok(lipschitz_bound.min(beta * distance_to_target))
}

/// `T(q) = (7/24) rho / v_max`.
pub fn compute_hold_time<T: Scalar>(rho: T, geometry: &RewardGeometry<T>) -> Result<T, ControllerError> {
    if !(geometry.v_max > T::zero()) {
        return Err(ControllerError::Degenerate(
            "v_max is zero (all rewards coincide)".into(),
        ));
    }
    if !(rho > T::zero()) {
        return Err(ControllerError::InvalidParameter("rho must be positive".into()));
    }
    Ok(T::lit(HOLD_TIME_FRACTION) * rho / geometry.v_max)
}

/// Smallest `m` with `sum_{i=start}^{m-1} 1/i > hold_time`.
pub fn next_switch_step<T: Scalar>(start: u64, hold_time: T) -> u64 {
    assert!(start >= 1, "switch steps start at 1");
    let mut acc = KahanSum::new();
    let mut i = start;
    loop {
        acc.add(T::one() / T::from_u64(i).unwrap());
        i += 1;
        if acc.value() > hold_time {
            return i;
        }
    }
}

/// Lazily built cover of the complement of the target.
///
/// Anchors are bucketed by radius level into square grids whose cell side is
/// at least the covering radius, so a covering anchor of any level sits in
/// one of the `3^d` cells around the query.
#[derive(Debug, Clone, Default)]
pub struct AnchorCover<T> {
    anchors: Vec<AnchorEntry<T>>,
    grid: HashMap<(i32, Vec<i64>), Vec<usize>>,
    levels: Vec<i32>,
}

/// Above this dimension the grid neighborhood is larger than a plain scan.
const GRID_MAX_DIM: usize = 6;

impl<T: Scalar> AnchorCover<T> {
    pub fn new() -> Self {
        Self {
            anchors: Vec::new(),
            grid: HashMap::new(),
            levels: Vec::new(),
        }
    }

    pub fn anchors(&self) -> &[AnchorEntry<T>] {
        &self.anchors
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    fn level_of(radius: T) -> i32 {
        radius.as_f64().log2().ceil() as i32
    }

    fn cell(x: &[T], level: i32) -> Vec<i64> {
        let side = 2f64.powi(level);
        x.iter().map(|v| (v.as_f64() / side).floor() as i64).collect()
    }

    /// Lowest-index anchor whose half-radius ball contains `x`.
    pub fn lookup(&self, x: &[T]) -> Option<usize> {
        if x.len() > GRID_MAX_DIM {
            return self.anchors.iter().position(|a| a.covers(x));
        }
        let mut best: Option<usize> = None;
        let mut offsets = vec![-1i64; x.len()];
        for &level in &self.levels {
            let center = Self::cell(x, level);
            loop {
                let key: Vec<i64> = center.iter().zip(&offsets).map(|(c, o)| c + o).collect();
                if let Some(bucket) = self.grid.get(&(level, key)) {
                    for &i in bucket {
                        if best.is_none_or(|b| i < b) && self.anchors[i].covers(x) {
                            best = Some(i);
                        }
                    }
                }
                // Odometer over {-1, 0, 1}^d.
                let mut k = 0;
                while k < offsets.len() {
                    if offsets[k] < 1 {
                        offsets[k] += 1;
                        break;
                    }
                    offsets[k] = -1;
                    k += 1;
                }
                if k == offsets.len() {
                    break;
                }
            }
        }
        best
    }

    fn push(&mut self, entry: AnchorEntry<T>) -> usize {
        let index = self.anchors.len();
        if entry.q.len() <= GRID_MAX_DIM {
            let level = Self::level_of(entry.rho / T::lit(2.0));
            if !self.levels.contains(&level) {
                self.levels.push(level);
            }
            self.grid
                .entry((level, Self::cell(&entry.q, level)))
                .or_default()
                .push(index);
        }
        self.anchors.push(entry);
        index
    }

    /// Returns the covering anchor of smallest index, creating one at `x`
    /// when no ball covers it.
    pub fn lookup_or_create(
        &mut self,
        model: &GameModel<T>,
        target: &ConvexTarget<T>,
        geometry: &RewardGeometry<T>,
        params: &ControllerParams,
        x: &[T],
    ) -> Result<usize, ControllerError> {
        if let Some(i) = self.lookup(x) {
            return Ok(i);
        }
        let sep = separating_strategy(model, target, x, T::lit(params.membership_tol), &params.rvi_options())?;
        if sep.status == SeparationStatus::AssumptionViolated {
            return Err(ControllerError::AssumptionViolated {
                point: x.iter().map(|v| v.as_f64()).collect(),
                margin: sep.margin.as_f64(),
            });
        }
        let rho = compute_rho(geometry, sep.distance, sep.margin, T::lit(params.beta))?;
        let hold_time = compute_hold_time(rho, geometry)?;
        let entry = AnchorEntry {
            q: x.to_vec(),
            rho,
            hold_time,
            strategy: sep.strategy,
            index: self.anchors.len(),
            margin: sep.margin,
            distance: sep.distance,
        };
        debug_assert!(entry.satisfies_invariants(geometry));
        Ok(self.push(entry))
    }
}

/// One entry of the switch log.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchRecord<T> {
    /// First step played with the new strategy.
    pub step: u64,
    /// Anchor selected, `None` when the average was inside the target.
    pub anchor: Option<usize>,
    /// Re-scaled time `t(step - 1)` of the average the decision used.
    pub time: T,
    /// Distance of that average to the target.
    pub distance: T,
}

/// What the controller decided for one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepDecision {
    pub switched: bool,
    pub anchor: Option<usize>,
}

/// Per-run mutable controller state.
#[derive(Debug, Clone)]
pub struct Controller<'a, T> {
    model: &'a GameModel<T>,
    target: &'a ConvexTarget<T>,
    geometry: RewardGeometry<T>,
    params: ControllerParams,
    cover: AnchorCover<T>,
    fallback: StationaryStrategy<T>,
    active: Option<usize>,
    next_switch: u64,
    /// `t(n - 1)` for the step about to be played.
    clock: KahanSum<T>,
    last_step: u64,
    switch_log: Vec<SwitchRecord<T>>,
}

impl<'a, T: Scalar> Controller<'a, T> {
    pub fn new(
        model: &'a GameModel<T>,
        target: &'a ConvexTarget<T>,
        geometry: RewardGeometry<T>,
        params: ControllerParams,
    ) -> Result<Self, ControllerError> {
        params.validate()?;
        if target.dim() != model.dim() {
            return Err(ControllerError::InvalidParameter(format!(
                "target dimension {} differs from reward dimension {}",
                target.dim(),
                model.dim()
            )));
        }
        if params.scheme == Scheme::ReturnTime && params.reference_state >= model.states() {
            return Err(ControllerError::InvalidParameter(format!(
                "reference state {} out of range",
                params.reference_state
            )));
        }
        Ok(Self {
            model,
            target,
            geometry,
            params,
            cover: AnchorCover::new(),
            fallback: StationaryStrategy::uniform(model.states(), model.player_actions()),
            active: None,
            next_switch: 1,
            clock: KahanSum::new(),
            last_step: 0,
            switch_log: Vec::new(),
        })
    }

    pub fn params(&self) -> &ControllerParams {
        &self.params
    }

    pub fn geometry(&self) -> &RewardGeometry<T> {
        &self.geometry
    }

    pub fn anchors(&self) -> &[AnchorEntry<T>] {
        self.cover.anchors()
    }

    pub fn switch_log(&self) -> &[SwitchRecord<T>] {
        &self.switch_log
    }

    pub fn next_switch_step(&self) -> u64 {
        self.next_switch
    }

    pub fn active_anchor(&self) -> Option<usize> {
        self.active
    }

    /// The strategy currently emitted.
    pub fn strategy(&self) -> &StationaryStrategy<T> {
        match self.active {
            Some(i) => &self.cover.anchors()[i].strategy,
            None => &self.fallback,
        }
    }

    /// Decides the strategy for step `n`, given the running average
    /// `x_prev = x_{n-1}` the player has observed and the current state.
    /// Steps must be presented consecutively from 1.
    pub fn on_step(&mut self, n: u64, x_prev: &[T], state: usize) -> Result<StepDecision, ControllerError> {
        assert_eq!(n, self.last_step + 1, "controller steps must be consecutive from 1");
        if n > 1 {
            self.clock.add(T::one() / T::from_u64(n - 1).unwrap());
        }
        self.last_step = n;
        let due = match self.params.scheme {
            Scheme::TwoTimeScale => n >= self.next_switch,
            Scheme::ReturnTime => state == self.params.reference_state,
        };
        if !due {
            return Ok(StepDecision {
                switched: false,
                anchor: self.active,
            });
        }
        let distance = self.target.distance(x_prev)?;
        if distance <= T::lit(self.params.membership_tol) {
            self.active = None;
            self.next_switch = n + 1;
        } else {
            let i = self
                .cover
                .lookup_or_create(self.model, self.target, &self.geometry, &self.params, x_prev)?;
            self.active = Some(i);
            self.next_switch = next_switch_step(n, self.cover.anchors()[i].hold_time);
        }
        self.switch_log.push(SwitchRecord {
            step: n,
            anchor: self.active,
            time: self.clock.value(),
            distance,
        });
        Ok(StepDecision {
            switched: true,
            anchor: self.active,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target_geometry::compute_vmax;
    use approx::assert_abs_diff_eq;

    fn geometry(v: f64) -> RewardGeometry<f64> {
        RewardGeometry { v_max: v, diam_k: v }
    }

    fn repeated_game() -> GameModel<f64> {
        let payoff = vec![
            vec![vec![-1.0, -1.0], vec![-1.0, -1.0]],
            vec![vec![1.0, 1.0], vec![-2.0, 2.0]],
        ];
        let kernel = vec![vec![vec![vec![1.0]; 2]; 2]];
        GameModel::from_nested(&kernel, &[payoff]).unwrap()
    }

    #[test]
    fn rho_examples() {
        assert_abs_diff_eq!(compute_rho(&geometry(1.0), 0.2, 1e9, 0.5).unwrap(), 0.1);
        assert_abs_diff_eq!(
            compute_rho(&geometry(1.0), 100.0, 0.06, 0.5).unwrap(),
            0.01,
            epsilon = 1e-15
        );
        let mut last = f64::INFINITY;
        for d in [1e-1, 1e-3, 1e-6, 1e-9] {
            let r = compute_rho(&geometry(1.0), d, 1.0, 0.5).unwrap();
            assert!(r <= 0.5 * d && r < last);
            last = r;
        }
        assert!(compute_rho(&geometry(1.0), 1.0, 0.0, 0.5).is_err());
        assert!(compute_rho(&geometry(1.0), 1.0, -1.0, 0.5).is_err());
    }

    #[test]
    fn hold_time_examples() {
        let t = compute_hold_time(0.12, &geometry(1.0)).unwrap();
        assert_abs_diff_eq!(t, 0.035, epsilon = 1e-15);
        assert!(0.03 < t && t < 0.04);
        assert_abs_diff_eq!(compute_hold_time(0.24, &geometry(2.0)).unwrap(), 0.035, epsilon = 1e-15);
        assert!(compute_hold_time(1e-12, &geometry(1.0)).unwrap() < 1e-12);
        assert!(matches!(
            compute_hold_time(0.1, &geometry(0.0)),
            Err(ControllerError::Degenerate(_))
        ));
    }

    #[test]
    fn schedule_examples() {
        // 1/10 + 1/11 + 1/12 = 0.2742 <= 0.3 < 0.3512 after adding 1/13.
        assert_eq!(next_switch_step(10, 0.3), 14);
        // A single term already exceeds a hold time below 1/s.
        assert_eq!(next_switch_step(100, 0.005), 101);
        assert_eq!(next_switch_step(1, 0.0), 2);
    }

    #[test]
    fn cover_creates_then_hits() {
        let model = repeated_game();
        let target = ConvexTarget::negative_orthant(2);
        let geo = compute_vmax(&model);
        let params = ControllerParams::default();
        let mut cover = AnchorCover::new();
        let i = cover
            .lookup_or_create(&model, &target, &geo, &params, &[0.5, 0.5])
            .unwrap();
        assert_eq!(i, 0);
        assert_eq!(cover.anchors()[0].q, vec![0.5, 0.5]);
        assert!(cover.anchors()[0].satisfies_invariants(&geo));
        let j = cover
            .lookup_or_create(&model, &target, &geo, &params, &[0.5, 0.5])
            .unwrap();
        assert_eq!(j, 0);
        assert_eq!(cover.len(), 1);
    }

    #[test]
    fn cover_prefers_lowest_index() {
        let model = repeated_game();
        let target = ConvexTarget::negative_orthant(2);
        let geo = compute_vmax(&model);
        let params = ControllerParams::default();
        let mut cover = AnchorCover::new();
        cover
            .lookup_or_create(&model, &target, &geo, &params, &[0.5, 0.5])
            .unwrap();
        let half = cover.anchors()[0].rho / 2.0;
        // Just outside the first ball: creates anchor 1 whose ball overlaps.
        let x1 = [0.5 + half * 1.01, 0.5];
        assert_eq!(cover.lookup_or_create(&model, &target, &geo, &params, &x1).unwrap(), 1);
        // A point covered by both balls resolves to index 0.
        let both = [0.5 + half * 0.9, 0.5];
        assert!(cover.anchors()[0].covers(&both) && cover.anchors()[1].covers(&both));
        assert_eq!(cover.lookup(&both), Some(0));
    }

    #[test]
    fn grid_lookup_matches_scan() {
        let model = repeated_game();
        let target = ConvexTarget::negative_orthant(2);
        let geo = compute_vmax(&model);
        let params = ControllerParams::default();
        let mut cover = AnchorCover::new();
        let mut state = 12345u64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 3.0 - 1.0
        };
        for _ in 0..400 {
            let x = [next(), next()];
            if target.distance(&x).unwrap() > 1e-6 {
                cover.lookup_or_create(&model, &target, &geo, &params, &x).unwrap();
            }
        }
        for _ in 0..2000 {
            let x = [next(), next()];
            let scan = cover.anchors().iter().position(|a| a.covers(&x));
            assert_eq!(cover.lookup(&x), scan);
        }
    }

    #[test]
    fn inside_target_switches_every_step() {
        let model = repeated_game();
        let target = ConvexTarget::negative_orthant(2);
        let mut c = Controller::new(&model, &target, compute_vmax(&model), ControllerParams::default()).unwrap();
        for n in 1..=100 {
            let d = c.on_step(n, &[-1.0, -1.0], 0).unwrap();
            assert!(d.switched);
            assert_eq!(d.anchor, None);
            assert_eq!(c.next_switch_step(), n + 1);
        }
        assert_eq!(c.strategy(), &StationaryStrategy::uniform(1, 2));
    }

    #[test]
    fn outside_target_holds_strategy() {
        let model = repeated_game();
        let target = ConvexTarget::negative_orthant(2);
        let geo = compute_vmax(&model);
        let mut c = Controller::new(&model, &target, geo, ControllerParams::default()).unwrap();
        let x = [1.0, 1.0];
        let mut n = 1;
        while n < 5_000 {
            let d = c.on_step(n, &x, 0).unwrap();
            if n == 1 {
                assert!(d.switched);
            }
            n += 1;
        }
        let log = c.switch_log();
        assert!(log.len() > 2);
        let hold = c.anchors()[0].hold_time;
        for w in log.windows(2) {
            assert_eq!(w[1].step, next_switch_step(w[0].step, hold));
            let elapsed = w[1].time - w[0].time;
            assert!(elapsed > hold && elapsed <= hold + 1.0 / w[0].step as f64 + 1e-15);
        }
        assert_eq!(c.anchors().len(), 1);
    }

    #[test]
    fn return_time_scheme_switches_on_visits() {
        let model = repeated_game();
        let target = ConvexTarget::negative_orthant(2);
        let params = ControllerParams {
            scheme: Scheme::ReturnTime,
            ..ControllerParams::default()
        };
        let mut c = Controller::new(&model, &target, compute_vmax(&model), params).unwrap();
        for n in 1..=10 {
            assert!(c.on_step(n, &[1.0, 1.0], 0).unwrap().switched);
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let model = repeated_game();
        let target = ConvexTarget::negative_orthant(2);
        let geo = compute_vmax(&model);
        for beta in [0.0, 1.0, -0.5] {
            let p = ControllerParams {
                beta,
                ..ControllerParams::default()
            };
            assert!(Controller::new(&model, &target, geo, p).is_err());
        }
        let p = ControllerParams {
            scheme: Scheme::ReturnTime,
            reference_state: 3,
            ..ControllerParams::default()
        };
        assert!(Controller::new(&model, &target, geo, p).is_err());
        let wrong = ConvexTarget::negative_orthant(3);
        assert!(Controller::new(&model, &wrong, geo, ControllerParams::default()).is_err());
    }
}
