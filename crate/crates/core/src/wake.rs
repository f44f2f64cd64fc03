//! Turbine layouts and the Jensen (park) wake model.
//!
//! Wind direction follows the meteorological convention: `θ` is the compass
//! bearing the wind blows *from* (0° = north, 90° = east), with `+y` pointing
//! north and `+x` east. The downwind unit vector is `(sin θ', cos θ')` with
//! `θ' = θ + 180°`.
//!
//! A turbine is waked by every turbine strictly upwind of it whose wake cone
//! (radius `r0 + α·D` at downwind distance `D`) contains its hub. Fractional
//! deficits from several upwind turbines combine as a root sum of squares.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Turbine<F> {
    pub x: F,
    pub y: F,
}

impl<F: Scalar> Turbine<F> {
    pub fn new(x: F, y: F) -> Self {
        Turbine { x, y }
    }

    pub fn distance_squared(&self, other: &Self) -> F {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    fn canonical_cmp(&self, other: &Self) -> Ordering {
        let x = self.x.as_f64().total_cmp(&other.x.as_f64());
        x.then_with(|| self.y.as_f64().total_cmp(&other.y.as_f64()))
    }
}

/// A wind farm: an unordered set of turbine positions.
///
/// Turbines are kept in canonical (lexicographic `x`, then `y`) order, so two
/// layouts holding the same positions compare equal whatever order they were
/// built from, and per-turbine results line up with [`Layout::turbines`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<Turbine<F>>", into = "Vec<Turbine<F>>")]
#[serde(bound(
    serialize = "F: Scalar + Serialize",
    deserialize = "F: Scalar + Deserialize<'de>"
))]
pub struct Layout<F> {
    turbines: Vec<Turbine<F>>,
}

impl<F: Scalar> Layout<F> {
    pub fn new(mut turbines: Vec<Turbine<F>>) -> Self {
        turbines.sort_by(Turbine::canonical_cmp);
        Layout { turbines }
    }

    pub fn from_xy(points: &[(F, F)]) -> Self {
        Self::new(points.iter().map(|&(x, y)| Turbine::new(x, y)).collect())
    }

    pub fn empty() -> Self {
        Layout { turbines: vec![] }
    }

    pub fn turbines(&self) -> &[Turbine<F>] {
        &self.turbines
    }

    pub fn len(&self) -> usize {
        self.turbines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turbines.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.turbines
            .iter()
            .all(|t| t.x.is_finite() && t.y.is_finite())
    }

    /// Smallest pairwise distance, `None` for fewer than two turbines.
    pub fn min_pairwise_distance(&self) -> Option<F> {
        let mut best: Option<F> = None;
        for (i, a) in self.turbines.iter().enumerate() {
            for b in &self.turbines[i + 1..] {
                let d = a.distance_squared(b);
                best = Some(best.map_or(d, |m| m.min(d)));
            }
        }
        best.map(|d| d.sqrt())
    }

    /// Checks that no two turbines are closer than `min_spacing`.
    pub fn check_spacing(&self, min_spacing: F) -> Result<()> {
        match self.min_pairwise_distance() {
            Some(d) if d < min_spacing => Err(Error::param(format!(
                "turbines {d} m apart, minimum spacing is {min_spacing} m"
            ))),
            _ => Ok(()),
        }
    }

    pub fn translated(&self, dx: F, dy: F) -> Self {
        Self::new(
            self.turbines
                .iter()
                .map(|t| Turbine::new(t.x + dx, t.y + dy))
                .collect(),
        )
    }
}

impl<F: Scalar> From<Vec<Turbine<F>>> for Layout<F> {
    fn from(t: Vec<Turbine<F>>) -> Self {
        Layout::new(t)
    }
}

impl<F: Scalar> From<Layout<F>> for Vec<Turbine<F>> {
    fn from(l: Layout<F>) -> Self {
        l.turbines
    }
}

/// Jensen model parameters as configured. `decay_constant` may be omitted and
/// derived from hub height and surface roughness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WakeConfig<F> {
    pub rotor_radius: F,
    pub thrust_coefficient: F,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay_constant: Option<F>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hub_height: Option<F>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface_roughness: Option<F>,
}

/// Decay constant: the configured value, else `0.5 / ln(z / z0)`.
pub fn resolve_alpha<F: Scalar>(config: &WakeConfig<F>) -> Result<F> {
    if let Some(alpha) = config.decay_constant {
        if !(alpha >= F::zero()) || !alpha.is_finite() {
            return Err(Error::param(format!(
                "decay constant must be finite and non-negative, got {alpha}"
            )));
        }
        return Ok(alpha);
    }
    match (config.hub_height, config.surface_roughness) {
        (Some(z), Some(z0)) => {
            if !(z0 > F::zero()) || !(z > z0) {
                return Err(Error::param(format!(
                    "need hub height > surface roughness > 0, got z = {z}, z0 = {z0}"
                )));
            }
            Ok(F::lit(0.5) / (z / z0).ln())
        }
        _ => Err(Error::param(
            "wake decay constant missing: give decay_constant or both hub_height and surface_roughness",
        )),
    }
}

/// A validated Jensen wake model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JensenWake<F> {
    pub rotor_radius: F,
    pub alpha: F,
    pub thrust_coefficient: F,
    /// `1 − √(1 − C_T)`, the fractional deficit right behind the rotor.
    initial_deficit: F,
}

impl<F: Scalar> WakeConfig<F> {
    pub fn resolve(&self) -> Result<JensenWake<F>> {
        JensenWake::new(self)
    }
}

impl<F: Scalar> JensenWake<F> {
    pub fn new(config: &WakeConfig<F>) -> Result<Self> {
        let r0 = config.rotor_radius;
        if !(r0 > F::zero()) || !r0.is_finite() {
            return Err(Error::param(format!(
                "rotor radius must be positive, got {r0}"
            )));
        }
        let ct = config.thrust_coefficient;
        if !(ct >= F::zero() && ct < F::one()) {
            return Err(Error::param(format!(
                "thrust coefficient must lie in [0, 1), got {ct}"
            )));
        }
        let alpha = resolve_alpha(config)?;
        Ok(JensenWake {
            rotor_radius: r0,
            alpha,
            thrust_coefficient: ct,
            initial_deficit: F::one() - (F::one() - ct).sqrt(),
        })
    }

    /// Wake cone radius `r0 + α·D` at downwind distance `D`.
    pub fn cone_radius(&self, distance: F) -> Result<F> {
        if !(distance >= F::zero()) {
            return Err(Error::param(format!(
                "downwind distance must be non-negative, got {distance}"
            )));
        }
        Ok(self.cone_radius_unchecked(distance))
    }

    #[inline]
    fn cone_radius_unchecked(&self, distance: F) -> F {
        self.rotor_radius + self.alpha * distance
    }

    /// Fractional velocity deficit `(1 − √(1 − C_T)) / (1 + αD/r0)²`.
    #[inline]
    pub fn deficit(&self, distance: F) -> F {
        let spread = F::one() + self.alpha * distance / self.rotor_radius;
        self.initial_deficit / (spread * spread)
    }

    /// Wind speed at distance `D` behind a single turbine facing `v0`.
    pub fn single_wake_speed(&self, v0: F, distance: F) -> Result<F> {
        if !(v0 >= F::zero()) {
            return Err(Error::param(format!(
                "free-stream speed must be non-negative, got {v0}"
            )));
        }
        if !(distance >= F::zero()) {
            return Err(Error::param(format!(
                "downwind distance must be non-negative, got {distance}"
            )));
        }
        Ok(v0 * (F::one() - self.deficit(distance)))
    }

    /// Per-turbine speed as a fraction of the free stream for wind from `direction_deg`.
    ///
    /// The fraction does not depend on the free-stream speed, so callers
    /// integrating over many speeds can compute it once per direction.
    pub fn wake_factors(&self, turbines: &[Turbine<F>], direction_deg: F) -> Vec<F> {
        let (dx, dy) = downwind_unit(direction_deg);
        let n = turbines.len();
        let mut factors = Vec::with_capacity(n);
        for j in 0..n {
            let mut sum_sq = F::zero();
            for i in 0..n {
                if i == j {
                    continue;
                }
                let ex = turbines[j].x - turbines[i].x;
                let ey = turbines[j].y - turbines[i].y;
                let downwind = ex * dx + ey * dy;
                if !(downwind > F::zero()) {
                    continue;
                }
                let crosswind = (ex * dy - ey * dx).abs();
                if crosswind < self.cone_radius_unchecked(downwind) {
                    let d = self.deficit(downwind);
                    sum_sq = sum_sq + d * d;
                }
            }
            let f = F::one() - sum_sq.sqrt();
            factors.push(f.max(F::zero()).min(F::one()));
        }
        factors
    }

    /// Effective wind speed at each turbine of `turbines`, in the given order.
    pub fn effective_speeds_of(
        &self,
        turbines: &[Turbine<F>],
        v0: F,
        direction_deg: F,
    ) -> Vec<F> {
        self.wake_factors(turbines, direction_deg)
            .into_iter()
            .map(|f| v0 * f)
            .collect()
    }

    /// Effective wind speed at each turbine, aligned with [`Layout::turbines`].
    pub fn effective_speeds(&self, layout: &Layout<F>, v0: F, direction_deg: F) -> Vec<F> {
        self.effective_speeds_of(layout.turbines(), v0, direction_deg)
    }
}

/// Downwind unit vector `(sin θ', cos θ')`, `θ' = θ + 180°`.
pub fn downwind_unit<F: Scalar>(direction_deg: F) -> (F, F) {
    let bearing = (direction_deg + F::lit(180.0)).to_radians();
    (bearing.sin(), bearing.cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn config(ct: f64, alpha: f64) -> WakeConfig<f64> {
        WakeConfig {
            rotor_radius: 41.0,
            thrust_coefficient: ct,
            decay_constant: Some(alpha),
            hub_height: None,
            surface_roughness: None,
        }
    }

    #[test]
    fn alpha_passthrough_and_derived() {
        assert_eq!(resolve_alpha(&config(0.8, 0.1)).unwrap(), 0.1);
        let mut c = config(0.8, 0.1);
        c.decay_constant = None;
        c.surface_roughness = Some(0.3);
        c.hub_height = Some(0.3 * std::f64::consts::E);
        assert!((resolve_alpha(&c).unwrap() - 0.5).abs() < 1e-15);
        c.hub_height = Some(60.0);
        // 0.5 / ln(200)
        assert!((resolve_alpha(&c).unwrap() - 0.094_369_582_908_877).abs() < 1e-12);
    }

    #[test]
    fn alpha_errors() {
        let mut c = config(0.8, 0.1);
        c.decay_constant = None;
        assert!(resolve_alpha(&c).is_err());
        c.hub_height = Some(0.2);
        c.surface_roughness = Some(0.3);
        assert!(resolve_alpha(&c).is_err());
        c.hub_height = Some(0.3);
        assert!(resolve_alpha(&c).is_err());
    }

    #[test]
    fn cone_radius_values() {
        let w = config(0.8, 0.1).resolve().unwrap();
        assert_eq!(w.cone_radius(0.0).unwrap(), 41.0);
        assert!((w.cone_radius(100.0).unwrap() - 51.0).abs() < 1e-12);
        assert!(w.cone_radius(-1.0).is_err());
        let flat = config(0.8, 0.0).resolve().unwrap();
        assert_eq!(flat.cone_radius(1e4).unwrap(), 41.0);
    }

    #[test]
    fn single_wake_limits() {
        let none = config(0.0, 0.1).resolve().unwrap();
        for d in [0.0, 10.0, 500.0] {
            assert_eq!(none.single_wake_speed(10.0, d).unwrap(), 10.0);
        }
        let w = config(0.75, 0.1).resolve().unwrap();
        assert_eq!(w.single_wake_speed(10.0, 0.0).unwrap(), 5.0);
        assert!(config(1.0, 0.1).resolve().is_err());
    }

    #[test]
    fn single_wake_hand_value() {
        let w = config(0.8, 0.09438).resolve().unwrap();
        let spread: f64 = 1.0 + 0.09438 * 500.0 / 41.0;
        let expected = 10.0 * (1.0 - (1.0 - 0.2f64.sqrt()) / (spread * spread));
        assert!((w.single_wake_speed(10.0, 500.0).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn aligned_pair_and_perpendicular_line() {
        let w = config(0.8, 0.1).resolve().unwrap();
        // wind from the north: the southern turbine is downwind.
        let pair = [Turbine::new(0.0, 0.0), Turbine::new(0.0, -500.0)];
        let v = w.effective_speeds_of(&pair, 10.0, 0.0);
        assert_eq!(v[0], 10.0);
        assert!((v[1] - w.single_wake_speed(10.0, 500.0).unwrap()).abs() < 1e-9);

        let line = [
            Turbine::new(0.0, 0.0),
            Turbine::new(300.0, 0.0),
            Turbine::new(600.0, 0.0),
        ];
        assert_eq!(w.effective_speeds_of(&line, 8.0, 0.0), vec![8.0; 3]);
        assert_eq!(w.effective_speeds_of(&line[..1], 8.0, 33.0), vec![8.0]);
    }

    #[test]
    fn layout_equality_ignores_order() {
        let a = Layout::from_xy(&[(1.0, 2.0), (0.0, 5.0), (3.0, -1.0)]);
        let b = Layout::from_xy(&[(3.0, -1.0), (1.0, 2.0), (0.0, 5.0)]);
        assert_eq!(a, b);
        assert!(a.check_spacing(1.0).is_ok());
        assert!(a.check_spacing(10.0).is_err());
    }

    proptest! {
        #[test]
        fn speeds_bounded_and_translation_invariant(
            pts in prop::collection::vec((-2000.0f64..2000.0, -2000.0f64..2000.0), 1..8),
            theta in 0.0f64..360.0,
            shift in (-1e3f64..1e3, -1e3f64..1e3),
        ) {
            let w = config(0.8, 0.08).resolve().unwrap();
            let layout = Layout::from_xy(&pts);
            let v = w.effective_speeds(&layout, 12.0, theta);
            prop_assert!(v.iter().all(|&s| (0.0..=12.0).contains(&s)));
            let moved = layout.translated(shift.0, shift.1);
            let vm = w.effective_speeds(&moved, 12.0, theta);
            for (a, b) in v.iter().zip(&vm) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn permutation_permutes_outputs(
            pts in prop::collection::vec((-1000.0f64..1000.0, -1000.0f64..1000.0), 2..7),
            theta in 0.0f64..360.0,
        ) {
            let w = config(0.8, 0.08).resolve().unwrap();
            let t: Vec<_> = pts.iter().map(|&(x, y)| Turbine::new(x, y)).collect();
            let mut rev = t.clone();
            rev.reverse();
            let v = w.effective_speeds_of(&t, 9.0, theta);
            let vr = w.effective_speeds_of(&rev, 9.0, theta);
            let n = t.len();
            for i in 0..n {
                prop_assert!((v[i] - vr[n - 1 - i]).abs() < 1e-12);
            }
        }

        #[test]
        fn downstream_speed_monotone_in_distance(d1 in 0.0f64..3000.0, extra in 0.0f64..3000.0) {
            let w = config(0.8, 0.08).resolve().unwrap();
            let near = w.single_wake_speed(10.0, d1).unwrap();
            let far = w.single_wake_speed(10.0, d1 + extra).unwrap();
            prop_assert!(far >= near);
        }
    }
}
