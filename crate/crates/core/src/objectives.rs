//! The two layout objectives: expected power (maximised) and installation
//! cost (minimised).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::wake::{JensenWake, Layout, WakeConfig};
use crate::wind_stats::{WindDistribution, DIRECTIONS};

/// Logistic-ratio power curve `a·(1 + m·e^(−v/τ)) / (1 + n·e^(−v/τ))` above cut-in.
///
/// There are no built-in defaults: the values must come from the turbine or
/// site study being modelled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerCurveParams<F> {
    /// kW
    pub a: F,
    pub m: F,
    pub n: F,
    /// m/s
    pub tau: F,
    /// m/s
    pub cut_in: F,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerCurve<F> {
    params: PowerCurveParams<F>,
}

impl<F: Scalar> PowerCurve<F> {
    /// Validates the parameters for speeds up to `v_max`.
    pub fn new(params: PowerCurveParams<F>, v_max: F) -> Result<Self> {
        let p = params;
        if !(p.a > F::zero()) || !(p.tau > F::zero()) || !(p.cut_in >= F::zero()) {
            return Err(Error::param(format!(
                "power curve needs a > 0, tau > 0 and cut_in >= 0 (got a = {}, tau = {}, cut_in = {})",
                p.a, p.tau, p.cut_in
            )));
        }
        if ![p.a, p.m, p.n, p.tau, p.cut_in].iter().all(|x| x.is_finite()) {
            return Err(Error::param("power curve parameters must be finite"));
        }
        // 1 + n·e^(−v/τ) is monotone in v, so checking the ends of the active range suffices.
        let lo = p.cut_in.min(v_max);
        for v in [lo, v_max] {
            if !(F::one() + p.n * (-v / p.tau).exp() > F::zero()) {
                return Err(Error::param(format!(
                    "power curve denominator vanishes at v = {v}"
                )));
            }
        }
        Ok(PowerCurve { params })
    }

    pub fn params(&self) -> &PowerCurveParams<F> {
        &self.params
    }

    /// kW at speed `v`; zero below cut-in, curve value from cut-in upwards.
    #[inline]
    pub fn power(&self, v: F) -> F {
        let p = &self.params;
        if v < p.cut_in {
            return F::zero();
        }
        let e = (-v / p.tau).exp();
        p.a * (F::one() + p.m * e) / (F::one() + p.n * e)
    }
}

/// Power-curve value at `v`, validating `params` against `v` itself.
pub fn power_curve<F: Scalar>(v: F, params: &PowerCurveParams<F>) -> Result<F> {
    if !(v >= F::zero()) {
        return Err(Error::param(format!("wind speed must be non-negative, got {v}")));
    }
    Ok(PowerCurve::new(*params, v)?.power(v))
}

/// Installation cost `|X|·(2/3 + 1/3·exp(−0.00174·|X|²))`.
pub fn cost<F: Scalar>(turbines: usize) -> F {
    let n = F::from_usize_lossy(turbines);
    let third = F::one() / F::lit(3.0);
    n * (F::lit(2.0) * third + third * (F::lit(-0.00174) * n * n).exp())
}

pub fn layout_cost<F: Scalar>(layout: &Layout<F>) -> F {
    cost(layout.len())
}

/// Objective values of a layout. `power` is maximised and `cost` minimised.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector<F> {
    pub power: F,
    pub cost: F,
}

impl<F: Scalar> ObjectiveVector<F> {
    /// Minimisation form `(−power, cost)`.
    pub fn canonical(&self) -> [F; 2] {
        [-self.power, self.cost]
    }

    pub fn from_canonical(c: &[F]) -> Self {
        ObjectiveVector {
            power: -c[0],
            cost: c[1],
        }
    }
}

/// Everything needed to evaluate a layout.
#[derive(Debug, Clone)]
pub struct Evaluator<F> {
    distribution: WindDistribution<F>,
    wake: JensenWake<F>,
    curve: PowerCurve<F>,
}

impl<F: Scalar> Evaluator<F> {
    pub fn new(
        distribution: WindDistribution<F>,
        wake: &WakeConfig<F>,
        params: PowerCurveParams<F>,
    ) -> Result<Self> {
        let curve = PowerCurve::new(params, F::from_usize_lossy(distribution.v_max()))?;
        Ok(Evaluator {
            distribution,
            wake: wake.resolve()?,
            curve,
        })
    }

    pub fn distribution(&self) -> &WindDistribution<F> {
        &self.distribution
    }

    pub fn wake(&self) -> &JensenWake<F> {
        &self.wake
    }

    pub fn curve(&self) -> &PowerCurve<F> {
        &self.curve
    }

    /// Expected farm power: the sum over turbines and grid cells of
    /// `P_curve(v_j) · p(v, θ)`, where `v_j` is the waked speed at turbine `j`.
    ///
    /// Directions are processed in parallel; per-direction partial sums are
    /// added in direction order so the result is reproducible.
    pub fn expected_power(&self, layout: &Layout<F>) -> Result<F> {
        if layout.is_empty() {
            return Ok(F::zero());
        }
        if !layout.all_finite() {
            return Err(Error::param("layout has non-finite coordinates"));
        }
        let dist = &self.distribution;
        let turbines = layout.turbines();
        let partial: Vec<F> = (0..DIRECTIONS)
            .into_par_iter()
            .map(|theta| {
                let speeds_present = (0..=dist.v_max()).any(|v| dist.probability(v, theta) > F::zero());
                if !speeds_present {
                    return F::zero();
                }
                let factors = self
                    .wake
                    .wake_factors(turbines, F::from_usize_lossy(theta));
                let mut acc = F::zero();
                for v in 0..=dist.v_max() {
                    let p = dist.probability(v, theta);
                    if !(p > F::zero()) {
                        continue;
                    }
                    let v0 = F::from_usize_lossy(v);
                    let farm: F = factors.iter().map(|&f| self.curve.power(v0 * f)).sum();
                    acc = acc + farm * p;
                }
                acc
            })
            .collect();
        Ok(partial.into_iter().sum())
    }

    pub fn evaluate(&self, layout: &Layout<F>) -> Result<ObjectiveVector<F>> {
        Ok(ObjectiveVector {
            power: self.expected_power(layout)?,
            cost: layout_cost(layout),
        })
    }
}
