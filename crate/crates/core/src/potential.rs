//! Lennard-Jones type bond potentials.
//!
//! A potential is an extended-real function of the bond strain `z` that is
//! `+∞` for `z` at or below its hard-core offset, strictly convex and
//! decreasing up to a unique well at `δ` with depth `J(δ) < 0`, and decays to
//! zero for large strains. The classical member of the family is
//!
//! ```text
//! J(z) = ε (δ/z)^6 [ (δ/z)^6 − 2 ]
//! ```
//!
//! Besides evaluation this module provides the tangent-line approximation
//! that replaces the singular branch below a knot `z*` by a straight line,
//! the uniform slope bound of those tangents, and numerical checks that a
//! potential belongs to a class `(α, b, d, Ψ)`.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};
use crate::extended::ExtReal;

/// Slack allowed on discrete second differences when testing convexity.
pub const TOL_CONVEX: f64 = 1e-9;
/// Strain tolerance of the minimizer search for general potentials.
pub const MINIMIZER_TOL: f64 = 1e-12;
/// Number of quasi-random pairs used by the Hölder estimate.
pub const HOLDER_PAIRS: usize = 10_000;
/// The Hölder estimate samples the tail `(δ, HOLDER_SPAN·δ]`.
pub const HOLDER_SPAN: f64 = 50.0;

/// Convex envelope `Ψ(z) = coeff · z^(−power)` for `z > 0`, `+∞` otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Psi {
    #[serde(default = "Psi::default_coeff")]
    pub coeff: f64,
    #[serde(default = "Psi::default_power")]
    pub power: f64,
}

impl Psi {
    fn default_coeff() -> f64 {
        1.0
    }

    fn default_power() -> f64 {
        12.0
    }

    pub fn inverse_power(coeff: f64, power: f64) -> Self {
        Psi { coeff, power }
    }

    pub fn eval(&self, z: f64) -> ExtReal {
        if z <= 0.0 {
            ExtReal::PosInf
        } else {
            ExtReal::from_f64(self.coeff * z.powf(-self.power))
        }
    }

    pub fn id(&self) -> String {
        format!("{}*z^-{}", self.coeff, self.power)
    }
}

impl Default for Psi {
    fn default() -> Self {
        Psi { coeff: 1.0, power: 12.0 }
    }
}

/// Constants `(α, b, d, Ψ)` of a Lennard-Jones type class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassParams {
    pub alpha: f64,
    pub b: f64,
    pub d: f64,
    #[serde(default)]
    pub psi: Psi,
}

impl ClassParams {
    pub fn new(alpha: f64, b: f64, d: f64, psi: Psi) -> Result<Self> {
        let c = ClassParams { alpha, b, d, psi };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            errs.push(format!("alpha = {} not in (0, 1]", self.alpha));
        }
        if !(self.b > 0.0) {
            errs.push(format!("b = {} must be positive", self.b));
        }
        if !(self.d >= 1.0) || !self.d.is_finite() {
            errs.push(format!("d = {} must be finite and >= 1", self.d));
        }
        if !(self.psi.coeff > 0.0) || !(self.psi.power > 0.0) {
            errs.push("psi must have positive coefficient and power".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn inv_d(&self) -> f64 {
        1.0 / self.d
    }

    /// Class constants covering every classical potential with well position
    /// in `delta` and depth in `epsilon`.
    ///
    /// The sandwich `Ψ/d − d ≤ J ≤ d·max{Ψ, z}` with `Ψ = c·z^-12` needs
    /// `d² ≥ 2·max(εδ¹²)/min(εδ¹²)` and `d ≥ 2·max ε`; `c = max(εδ¹²)/d`.
    pub fn covering_classical(delta: (f64, f64), epsilon: (f64, f64)) -> Self {
        const MARGIN: f64 = 1.05;
        let a_min = epsilon.0 * delta.0.powi(12);
        let a_max = epsilon.1 * delta.1.powi(12);
        let d = [
            (2.0 * a_max / a_min).sqrt(),
            2.0 * epsilon.1,
            delta.1,
            1.0 / delta.0,
            1.0,
        ]
        .into_iter()
        .fold(1.0, f64::max)
            * MARGIN;
        ClassParams {
            alpha: 1.0,
            b: epsilon.1 + 1.0,
            d,
            psi: Psi::inverse_power(a_max / d, 12.0),
        }
    }

    /// `(K/d)·Ψ(z) − K·d`, the lower bound every homogenized density obeys.
    pub fn energy_floor(&self, k: usize, z: f64) -> ExtReal {
        let k = k as f64;
        match self.psi.eval(z) {
            ExtReal::Finite(p) => ExtReal::Finite(k / self.d * p - k * self.d),
            ExtReal::PosInf => ExtReal::PosInf,
        }
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-registered member of the class, given as an evaluator with an
/// optional analytic derivative. Values `≥ f64::MAX`, `+inf` or NaN returned
/// by the evaluator are read as `+∞`.
pub struct GeneralPotential {
    name: String,
    eval: ScalarFn,
    derivative: Option<ScalarFn>,
    domain_start: f64,
    well: f64,
    depth: f64,
}

impl fmt::Debug for GeneralPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneralPotential")
            .field("name", &self.name)
            .field("analytic_derivative", &self.derivative.is_some())
            .field("domain_start", &self.domain_start)
            .field("well", &self.well)
            .finish()
    }
}

impl GeneralPotential {
    /// Registers a potential defined on `(domain_start, ∞)` and locates its
    /// well by golden-section search refined by bisection on the derivative.
    pub fn register(
        name: impl Into<String>,
        domain_start: f64,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: Option<Box<dyn Fn(f64) -> f64 + Send + Sync>>,
    ) -> Result<Arc<Self>> {
        let mut p = GeneralPotential {
            name: name.into(),
            eval: Arc::new(eval),
            derivative: derivative.map(|d| Arc::from(d) as ScalarFn),
            domain_start,
            well: f64::NAN,
            depth: f64::NAN,
        };
        let (well, depth) = p.locate_well()?;
        p.well = well;
        p.depth = depth;
        Ok(Arc::new(p))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn has_analytic_derivative(&self) -> bool {
        self.derivative.is_some()
    }

    fn raw(&self, z: f64) -> f64 {
        if z <= self.domain_start {
            return f64::INFINITY;
        }
        let v = (self.eval)(z);
        if v.is_nan() || v >= f64::MAX {
            f64::INFINITY
        } else {
            v
        }
    }

    fn slope(&self, z: f64) -> f64 {
        match &self.derivative {
            Some(d) => d(z),
            None => {
                let h = 1e-7 * z.abs().max(1.0);
                let lo = (z - h).max(self.domain_start + 0.5 * (z - self.domain_start));
                (self.raw(z + h) - self.raw(lo)) / (z + h - lo)
            }
        }
    }

    fn curvature(&self, z: f64) -> f64 {
        let h = 1e-4 * z.abs().max(1.0);
        let h = h.min(0.5 * (z - self.domain_start));
        match &self.derivative {
            Some(d) => (d(z + h) - d(z - h)) / (2.0 * h),
            None => (self.raw(z + h) - 2.0 * self.raw(z) + self.raw(z - h)) / (h * h),
        }
    }

    fn locate_well(&self) -> Result<(f64, f64)> {
        // Coarse log-spaced scan of the offset from the hard core.
        let samples: Vec<f64> = (0..=400)
            .map(|k| self.domain_start + 1e-4 * 10f64.powf(k as f64 * 8.0 / 400.0))
            .collect();
        let (kbest, _) = samples
            .iter()
            .enumerate()
            .map(|(k, &x)| (k, self.raw(x)))
            .fold((0, f64::INFINITY), |acc, (k, v)| if v < acc.1 { (k, v) } else { acc });
        if kbest == 0 || kbest == samples.len() - 1 {
            return Err(Error::NonConvergence(format!(
                "no interior well found for potential {}",
                self.name
            )));
        }
        let (mut a, mut b) = (samples[kbest - 1], samples[kbest + 1]);
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let (mut fc, mut fd) = (self.raw(c), self.raw(d));
        let mut iter = 0;
        while (b - a) > MINIMIZER_TOL * b.abs().max(1.0) {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_phi * (b - a);
                fc = self.raw(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_phi * (b - a);
                fd = self.raw(d);
            }
            iter += 1;
            if iter > 500 {
                return Err(Error::NonConvergence(format!(
                    "golden-section search for {} did not converge",
                    self.name
                )));
            }
        }
        // Golden section stalls at ~sqrt(eps) in strain; the derivative sign
        // pins the well down further.
        let mut lo = (0.5 * (a + b) - 1e-6).max(self.domain_start + 1e-12);
        let mut hi = 0.5 * (a + b) + 1e-6;
        if self.slope(lo) < 0.0 && self.slope(hi) > 0.0 {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if self.slope(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= MINIMIZER_TOL {
                    break;
                }
            }
        } else {
            lo = a;
            hi = b;
        }
        let well = 0.5 * (lo + hi);
        Ok((well, self.raw(well)))
    }
}

/// One bond potential.
#[derive(Clone, Debug)]
pub enum PotentialSpec {
    /// `J(z) = ε (δ/z)^6 [(δ/z)^6 − 2]`.
    ClassicalLj { delta: f64, epsilon: f64 },
    /// Classical potential with a hard core: `J(z) = J_LJ(z − shift)`.
    /// The well sits at `shift + delta`.
    ShiftedLj { delta: f64, epsilon: f64, shift: f64 },
    General(Arc<GeneralPotential>),
}

impl PartialEq for PotentialSpec {
    fn eq(&self, other: &Self) -> bool {
        use PotentialSpec::*;
        match (self, other) {
            (ClassicalLj { delta: a, epsilon: b }, ClassicalLj { delta: c, epsilon: d }) => {
                a == c && b == d
            }
            (
                ShiftedLj { delta: a, epsilon: b, shift: s },
                ShiftedLj { delta: c, epsilon: d, shift: t },
            ) => a == c && b == d && s == t,
            (General(a), General(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

#[inline]
fn lj_parts(delta: f64, x: f64) -> f64 {
    let r = delta / x;
    let r2 = r * r;
    r2 * r2 * r2
}

impl PotentialSpec {
    pub fn classical(delta: f64, epsilon: f64) -> Result<Self> {
        let p = PotentialSpec::ClassicalLj { delta, epsilon };
        p.validate()?;
        Ok(p)
    }

    pub fn shifted(delta: f64, epsilon: f64, shift: f64) -> Result<Self> {
        let p = PotentialSpec::ShiftedLj { delta, epsilon, shift };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        match *self {
            PotentialSpec::ClassicalLj { delta, epsilon } => {
                if !(delta > 0.0 && delta.is_finite()) {
                    errs.push(format!("delta = {delta} must be positive"));
                }
                if !(epsilon > 0.0 && epsilon.is_finite()) {
                    errs.push(format!("epsilon = {epsilon} must be positive"));
                }
            }
            PotentialSpec::ShiftedLj { delta, epsilon, shift } => {
                if !(delta > 0.0 && delta.is_finite()) {
                    errs.push(format!("delta = {delta} must be positive"));
                }
                if !(epsilon > 0.0 && epsilon.is_finite()) {
                    errs.push(format!("epsilon = {epsilon} must be positive"));
                }
                if !(shift >= 0.0 && shift.is_finite()) {
                    errs.push(format!("shift = {shift} must be nonnegative"));
                }
            }
            PotentialSpec::General(ref g) => {
                if !(g.depth < 0.0) {
                    errs.push(format!("potential {} has no negative well", g.name));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    /// Hard-core offset: the potential is `+∞` at and below this strain.
    pub fn shift(&self) -> f64 {
        match *self {
            PotentialSpec::ClassicalLj { .. } => 0.0,
            PotentialSpec::ShiftedLj { shift, .. } => shift,
            PotentialSpec::General(ref g) => g.domain_start,
        }
    }

    /// `(δ, ε)` for the classical and shifted forms.
    pub fn lj_params(&self) -> Option<(f64, f64)> {
        match *self {
            PotentialSpec::ClassicalLj { delta, epsilon }
            | PotentialSpec::ShiftedLj { delta, epsilon, .. } => Some((delta, epsilon)),
            PotentialSpec::General(_) => None,
        }
    }

    /// Energy at strain `z`; NaN is rejected.
    pub fn eval(&self, z: f64) -> Result<ExtReal> {
        if z.is_nan() {
            return Err(Error::Domain("NaN strain".into()));
        }
        Ok(self.value(z))
    }

    /// Energy at strain `z` without input validation.
    #[inline]
    pub fn value(&self, z: f64) -> ExtReal {
        match *self {
            PotentialSpec::ClassicalLj { delta, epsilon } => {
                if z <= 0.0 {
                    return ExtReal::PosInf;
                }
                let t = lj_parts(delta, z);
                ExtReal::from_f64(epsilon * t * (t - 2.0))
            }
            PotentialSpec::ShiftedLj { delta, epsilon, shift } => {
                let x = z - shift;
                if x <= 0.0 {
                    return ExtReal::PosInf;
                }
                let t = lj_parts(delta, x);
                ExtReal::from_f64(epsilon * t * (t - 2.0))
            }
            PotentialSpec::General(ref g) => ExtReal::from_f64(g.raw(z)),
        }
    }

    /// `J′(z)` for `z` inside the domain.
    #[inline]
    pub fn derivative(&self, z: f64) -> f64 {
        match *self {
            PotentialSpec::ClassicalLj { delta, epsilon } => {
                let t = lj_parts(delta, z);
                -12.0 * epsilon * t * (t - 1.0) / z
            }
            PotentialSpec::ShiftedLj { delta, epsilon, shift } => {
                let x = z - shift;
                let t = lj_parts(delta, x);
                -12.0 * epsilon * t * (t - 1.0) / x
            }
            PotentialSpec::General(ref g) => g.slope(z),
        }
    }

    /// `J″(z)` for `z` inside the domain.
    #[inline]
    pub fn second_derivative(&self, z: f64) -> f64 {
        match *self {
            PotentialSpec::ClassicalLj { delta, epsilon } => {
                let t = lj_parts(delta, z);
                12.0 * epsilon * t * (13.0 * t - 7.0) / (z * z)
            }
            PotentialSpec::ShiftedLj { delta, epsilon, shift } => {
                let x = z - shift;
                let t = lj_parts(delta, x);
                12.0 * epsilon * t * (13.0 * t - 7.0) / (x * x)
            }
            PotentialSpec::General(ref g) => g.curvature(z),
        }
    }

    /// Strain of the unique minimizer.
    #[inline]
    pub fn well(&self) -> f64 {
        match *self {
            PotentialSpec::ClassicalLj { delta, .. } => delta,
            PotentialSpec::ShiftedLj { delta, shift, .. } => shift + delta,
            PotentialSpec::General(ref g) => g.well,
        }
    }

    /// `J(δ)`.
    #[inline]
    pub fn well_depth(&self) -> f64 {
        match *self {
            PotentialSpec::ClassicalLj { epsilon, .. }
            | PotentialSpec::ShiftedLj { epsilon, .. } => -epsilon,
            PotentialSpec::General(ref g) => g.depth,
        }
    }

    /// The minimizer `(δ, J(δ))`. Closed form for the Lennard-Jones forms;
    /// general potentials carry the result of the search done at
    /// registration.
    pub fn minimizer(&self) -> Result<(f64, f64)> {
        let (w, v) = (self.well(), self.well_depth());
        if w.is_finite() && v.is_finite() {
            Ok((w, v))
        } else {
            Err(Error::NonConvergence("minimizer not available".into()))
        }
    }

    /// Smallest element of the subdifferential at `z_star`, which must lie in
    /// `(0, 1/d)`.
    pub fn subgradient_min(&self, class: &ClassParams, z_star: f64) -> Result<f64> {
        if !(z_star > self.shift() && z_star < class.inv_d() + self.shift()) {
            return precondition(format!(
                "knot {z_star} outside the convex branch window ({}, {})",
                self.shift(),
                self.shift() + class.inv_d()
            ));
        }
        if z_star >= self.well() {
            return precondition(format!(
                "knot {z_star} is not below the well {}",
                self.well()
            ));
        }
        Ok(self.derivative(z_star))
    }

    /// The same potential family with well position and depth rescaled.
    pub fn scaled(&self, delta_scale: f64, epsilon_scale: f64) -> PotentialSpec {
        match *self {
            PotentialSpec::ClassicalLj { delta, epsilon } => PotentialSpec::ClassicalLj {
                delta: delta * delta_scale,
                epsilon: epsilon * epsilon_scale,
            },
            PotentialSpec::ShiftedLj { delta, epsilon, shift } => PotentialSpec::ShiftedLj {
                delta: delta * delta_scale,
                epsilon: epsilon * epsilon_scale,
                shift,
            },
            PotentialSpec::General(_) => self.clone(),
        }
    }

    /// Hölder coefficient of order `alpha` on the tail `(δ, 50δ]`, estimated
    /// as the largest difference quotient over a quasi-random pair sample.
    pub fn holder_coefficient(&self, alpha: f64) -> f64 {
        match *self {
            PotentialSpec::ClassicalLj { delta, epsilon }
            | PotentialSpec::ShiftedLj { delta, epsilon, .. } => {
                // J(x) = ε g(x/δ): the coefficient scales as ε δ^-α.
                epsilon * delta.powf(-alpha) * unit_lj_holder(alpha)
            }
            PotentialSpec::General(_) => {
                let lo = self.well();
                let hi = self.shift() + HOLDER_SPAN * (self.well() - self.shift());
                holder_on(|x| self.value(x).to_f64(), lo, hi, alpha)
            }
        }
    }
}

/// Largest `|f(x) − f(y)| / |x − y|^α` over an R2 low-discrepancy sample of
/// pairs in `(lo, hi]²`.
fn holder_on(f: impl Fn(f64) -> f64, lo: f64, hi: f64, alpha: f64) -> f64 {
    // Additive recurrence on the plastic number.
    const G: f64 = 1.324_717_957_244_746;
    let (a1, a2) = (1.0 / G, 1.0 / (G * G));
    let width = hi - lo;
    let mut best: f64 = 0.0;
    for k in 1..=HOLDER_PAIRS {
        let u = (0.5 + a1 * k as f64).fract();
        let v = (0.5 + a2 * k as f64).fract();
        let (x, y) = (lo + width * (1.0 - u), lo + width * (1.0 - v));
        if x == y {
            continue;
        }
        let q = (f(x) - f(y)).abs() / (x - y).abs().powf(alpha);
        if q.is_finite() {
            best = best.max(q);
        }
    }
    best
}

fn unit_lj_holder(alpha: f64) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<u64, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().expect("holder cache poisoned").get(&alpha.to_bits()) {
        return *v;
    }
    let g = |t: f64| {
        let s = t.powi(-6);
        s * (s - 2.0)
    };
    let v = holder_on(g, 1.0, HOLDER_SPAN, alpha);
    cache.lock().expect("holder cache poisoned").insert(alpha.to_bits(), v);
    v
}

/// Tangent-line approximation of a potential below a knot `z*`:
///
/// ```text
/// J^{z*}(z) = m (z − z*) + J(z*)   for z < z*
///           = J(z)                 for z ≥ z*
/// ```
///
/// with `m` the smallest subgradient of `J` at `z*`.
#[derive(Clone, Debug, PartialEq)]
pub struct ApproxPotential {
    pub base: PotentialSpec,
    pub z_star: f64,
    pub slope_m: f64,
    knot_value: f64,
}

impl ApproxPotential {
    pub fn new(base: PotentialSpec, class: &ClassParams, z_star: f64) -> Result<Self> {
        let slope_m = base.subgradient_min(class, z_star)?;
        let knot_value = base.value(z_star).unwrap_finite();
        Ok(ApproxPotential { base, z_star, slope_m, knot_value })
    }

    #[inline]
    pub fn value(&self, z: f64) -> ExtReal {
        if z < self.z_star {
            ExtReal::Finite(self.slope_m * (z - self.z_star) + self.knot_value)
        } else {
            self.base.value(z)
        }
    }

    #[inline]
    pub fn derivative(&self, z: f64) -> f64 {
        if z < self.z_star {
            self.slope_m
        } else {
            self.base.derivative(z)
        }
    }

    #[inline]
    pub fn second_derivative(&self, z: f64) -> f64 {
        if z < self.z_star {
            0.0
        } else {
            self.base.second_derivative(z)
        }
    }
}

/// Deterministic bound `M(z*)` with `m ≤ −M(z*)` for every member of the
/// class, clamped at zero where the bound is vacuous:
///
/// ```text
/// M(z*) = −[d·max{Ψ(1/d), 1/d} − (Ψ(z*)/d − d)] / (1/d − z*)
/// ```
pub fn slope_lower_bound(class: &ClassParams, z_star: f64) -> f64 {
    let inv_d = class.inv_d();
    if !(z_star < inv_d) {
        return 0.0;
    }
    let psi_star = match class.psi.eval(z_star) {
        ExtReal::Finite(v) => v,
        ExtReal::PosInf => return f64::INFINITY,
    };
    let top = class.d * class.psi.eval(inv_d).unwrap_finite().max(inv_d);
    let bound = -(top - (psi_star / class.d - class.d)) / (inv_d - z_star);
    bound.max(0.0)
}

/// Upper bound on the Lipschitz constant of any class member on `(ρ, δ)`
/// that depends only on `d` and `Ψ`.
///
/// Convexity puts `|J′(ρ)|` below the secant slope over `[ρ/2, ρ]`, and the
/// sandwich bounds both secant end values.
pub fn lipschitz_bound(class: &ClassParams, rho: f64) -> f64 {
    if !(rho > 0.0) {
        return f64::INFINITY;
    }
    let half = 0.5 * rho;
    let upper = class.d * class.psi.eval(half).to_f64().max(half);
    let lower = class.psi.eval(rho).to_f64() / class.d - class.d;
    ((upper - lower) / half).max(0.0)
}

/// Empirical Lipschitz constant of `spec` on `(ρ, δ)` from consecutive
/// quotients on a uniform grid of `points` nodes.
pub fn empirical_lipschitz(spec: &PotentialSpec, rho: f64, points: usize) -> f64 {
    let lo = rho.max(spec.shift() + f64::EPSILON);
    let hi = spec.well();
    if !(lo < hi) || points < 2 {
        return 0.0;
    }
    let h = (hi - lo) / (points - 1) as f64;
    let mut best: f64 = 0.0;
    let mut prev = spec.value(lo + 0.0).to_f64();
    for k in 1..points {
        let x = lo + h * k as f64;
        let v = spec.value(x).to_f64();
        best = best.max(((v - prev) / h).abs());
        prev = v;
    }
    best
}

/// Conditions checked by [`check_class_membership`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MembershipCondition {
    WellInRange,
    NegativeWell,
    TailBound,
    SandwichLower,
    SandwichUpper,
    ConvexBelowWell,
    Decay,
}

impl MembershipCondition {
    pub fn label(&self) -> &'static str {
        match self {
            MembershipCondition::WellInRange => "δ ∈ (1/d,d)",
            MembershipCondition::NegativeWell => "J(δ) < 0",
            MembershipCondition::TailBound => "sup|J| on (δ,∞) < b",
            MembershipCondition::SandwichLower => "Ψ/d − d ≤ J",
            MembershipCondition::SandwichUpper => "J ≤ d·max{Ψ,|z|}",
            MembershipCondition::ConvexBelowWell => "convex on (shift,δ)",
            MembershipCondition::Decay => "|J(z_max)| < 0.01·ε",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MembershipCheck {
    pub condition: MembershipCondition,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct MembershipReport {
    pub checks: Vec<MembershipCheck>,
}

impl MembershipReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<MembershipCondition> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.condition).collect()
    }

    pub fn get(&self, cond: MembershipCondition) -> Option<&MembershipCheck> {
        self.checks.iter().find(|c| c.condition == cond)
    }
}

/// Uniform grid with step `1e-3` covering `(shift, shift + 4d]`.
pub fn membership_grid(spec: &PotentialSpec, class: &ClassParams) -> Vec<f64> {
    let step = 1e-3;
    let s = spec.shift();
    let n = (4.0 * class.d / step).ceil() as usize;
    (1..=n).map(|k| s + step * k as f64).collect()
}

/// Grid checks of the class conditions for one potential.
pub fn check_class_membership(
    spec: &PotentialSpec,
    class: &ClassParams,
    grid: &[f64],
) -> Result<MembershipReport> {
    class.validate()?;
    let shift = spec.shift();
    if grid.len() < 3 {
        return precondition("membership grid needs at least three points");
    }
    let max_gap = grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return precondition("membership grid must be strictly increasing");
    }
    if max_gap > 1e-3 + 1e-12 || grid[0] - shift > 1e-3 + 1e-12 {
        return precondition("membership grid resolution coarser than 1e-3");
    }
    if *grid.last().unwrap() < shift + 4.0 * class.d - 1e-9 {
        return precondition("membership grid does not reach shift + 4d");
    }

    let (well, depth) = spec.minimizer()?;
    let eps = depth.abs();
    let d = class.d;
    let mut checks = Vec::new();
    let mut push = |condition, passed, detail: String| {
        checks.push(MembershipCheck { condition, passed, detail })
    };

    let well_rel = well - shift;
    push(
        MembershipCondition::WellInRange,
        well_rel > 1.0 / d && well_rel < d,
        format!("δ = {well_rel}, (1/d, d) = ({}, {d})", 1.0 / d),
    );
    push(MembershipCondition::NegativeWell, depth < 0.0, format!("J(δ) = {depth}"));

    let tail = grid
        .iter()
        .filter(|&&z| z > well)
        .map(|&z| spec.value(z).to_f64().abs())
        .fold(0.0, f64::max);
    push(
        MembershipCondition::TailBound,
        tail < class.b,
        format!("sup |J| = {tail}, b = {}", class.b),
    );

    let mut worst_lower: Option<f64> = None;
    let mut worst_upper: Option<f64> = None;
    for &z in grid {
        let x = z - shift;
        let j = spec.value(z);
        let psi = class.psi.eval(x);
        if let (ExtReal::Finite(j), ExtReal::Finite(p)) = (j, psi) {
            if p / d - d > j + 1e-12 * j.abs().max(1.0) {
                worst_lower.get_or_insert(z);
            }
            if j > d * p.max(x.abs()) * (1.0 + 1e-12) {
                worst_upper.get_or_insert(z);
            }
        } else if j.is_infinite() && psi.is_finite() {
            worst_upper.get_or_insert(z);
        }
    }
    push(
        MembershipCondition::SandwichLower,
        worst_lower.is_none(),
        worst_lower.map_or("holds on grid".into(), |z| format!("violated at z = {z}")),
    );
    push(
        MembershipCondition::SandwichUpper,
        worst_upper.is_none(),
        worst_upper.map_or("holds on grid".into(), |z| format!("violated at z = {z}")),
    );

    let below: Vec<f64> = grid.iter().copied().filter(|&z| z < well).collect();
    let mut convex_violation = None;
    for w in below.windows(3) {
        let (a, b, c) = (spec.value(w[0]), spec.value(w[1]), spec.value(w[2]));
        if let (ExtReal::Finite(a), ExtReal::Finite(b), ExtReal::Finite(c)) = (a, b, c) {
            let scale = a.abs().max(b.abs()).max(c.abs()).max(1.0);
            if a - 2.0 * b + c < -TOL_CONVEX * scale {
                convex_violation = Some(w[1]);
                break;
            }
        }
    }
    push(
        MembershipCondition::ConvexBelowWell,
        convex_violation.is_none(),
        convex_violation.map_or("second differences nonnegative".into(), |z| {
            format!("negative second difference at z = {z}")
        }),
    );

    let z_max = *grid.last().unwrap();
    let tail_val = spec.value(z_max).to_f64().abs();
    push(
        MembershipCondition::Decay,
        tail_val < 0.01 * eps,
        format!("|J({z_max})| = {tail_val}"),
    );

    Ok(MembershipReport { checks })
}

/// Named general potentials that configs may refer to.
#[derive(Clone, Debug, Default)]
pub struct PotentialRegistry {
    entries: HashMap<String, Arc<GeneralPotential>>,
}

impl PotentialRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry preloaded with `lj12_6` (`z^-12 − 2 z^-6` with analytic
    /// derivative) and `lj12_6_fd` (same function, derivative by central
    /// differences).
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        let f = |z: f64| {
            let s = z.powi(-6);
            s * (s - 2.0)
        };
        let df = |z: f64| {
            let s = z.powi(-6);
            -12.0 * s * (s - 1.0) / z
        };
        r.insert(
            GeneralPotential::register("lj12_6", 0.0, f, Some(Box::new(df)))
                .expect("builtin potential is well formed"),
        );
        r.insert(
            GeneralPotential::register("lj12_6_fd", 0.0, f, None)
                .expect("builtin potential is well formed"),
        );
        r
    }

    pub fn insert(&mut self, p: Arc<GeneralPotential>) {
        self.entries.insert(p.name.clone(), p);
    }

    pub fn get(&self, name: &str) -> Option<PotentialSpec> {
        self.entries.get(name).map(|p| PotentialSpec::General(p.clone()))
    }
}

/// JSON form of a potential (`kind`, `delta`, `epsilon`, `shift`, `name`,
/// optional `class`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialRecord {
    pub kind: PotentialKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<ClassParams>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    ClassicalLj,
    ShiftedLj,
    RegisteredGeneral,
}

impl PotentialRecord {
    pub fn to_spec(&self, registry: &PotentialRegistry) -> Result<PotentialSpec> {
        let need = |v: Option<f64>, key: &str| {
            v.ok_or_else(|| Error::Validation(vec![format!("missing key `{key}`")]))
        };
        let spec = match self.kind {
            PotentialKind::ClassicalLj => {
                PotentialSpec::classical(need(self.delta, "delta")?, need(self.epsilon, "epsilon")?)?
            }
            PotentialKind::ShiftedLj => PotentialSpec::shifted(
                need(self.delta, "delta")?,
                need(self.epsilon, "epsilon")?,
                need(self.shift, "shift")?,
            )?,
            PotentialKind::RegisteredGeneral => {
                let name = self
                    .name
                    .as_deref()
                    .ok_or_else(|| Error::Validation(vec!["missing key `name`".into()]))?;
                registry
                    .get(name)
                    .ok_or_else(|| Error::Validation(vec![format!("unknown potential `{name}`")]))?
            }
        };
        if let Some(class) = &self.class {
            class.validate()?;
        }
        Ok(spec)
    }

    pub fn from_spec(spec: &PotentialSpec) -> Self {
        match *spec {
            PotentialSpec::ClassicalLj { delta, epsilon } => PotentialRecord {
                kind: PotentialKind::ClassicalLj,
                delta: Some(delta),
                epsilon: Some(epsilon),
                shift: None,
                name: None,
                class: None,
            },
            PotentialSpec::ShiftedLj { delta, epsilon, shift } => PotentialRecord {
                kind: PotentialKind::ShiftedLj,
                delta: Some(delta),
                epsilon: Some(epsilon),
                shift: Some(shift),
                name: None,
                class: None,
            },
            PotentialSpec::General(ref g) => PotentialRecord {
                kind: PotentialKind::RegisteredGeneral,
                delta: None,
                epsilon: None,
                shift: None,
                name: Some(g.name.clone()),
                class: None,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn lj(delta: f64, eps: f64) -> PotentialSpec {
        PotentialSpec::classical(delta, eps).unwrap()
    }

    fn inv12(d: f64) -> ClassParams {
        ClassParams::new(1.0, 5.0, d, Psi::default()).unwrap()
    }

    #[test]
    fn eval_examples() {
        let p = lj(2.0, 1.0);
        assert_eq!(p.eval(2.0).unwrap(), ExtReal::Finite(-1.0));
        assert_eq!(p.eval(-0.5).unwrap(), ExtReal::PosInf);
        assert_eq!(p.eval(0.0).unwrap(), ExtReal::PosInf);
        assert_relative_eq!(p.eval(4.0).unwrap().unwrap_finite(), -127.0 / 4096.0, epsilon = 1e-15);
        assert!(matches!(p.eval(f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn minimizer_examples() {
        assert_eq!(lj(2.0, 1.0).minimizer().unwrap(), (2.0, -1.0));
        assert_eq!(lj(1.0, 3.0).minimizer().unwrap(), (1.0, -3.0));
    }

    #[test]
    fn general_minimizer_matches_scan_oracle() {
        let reg = PotentialRegistry::with_builtins();
        for name in ["lj12_6", "lj12_6_fd"] {
            let p = reg.get(name).unwrap();
            // Oracle: dense scan then parabola-free refinement by shrinking windows.
            let f = |z: f64| z.powi(-12) - 2.0 * z.powi(-6);
            let (mut lo, mut hi) = (0.5, 3.0);
            for _ in 0..60 {
                let xs: Vec<f64> = (0..=20).map(|k| lo + (hi - lo) * k as f64 / 20.0).collect();
                let k = (0..xs.len())
                    .min_by(|&a, &b| f(xs[a]).partial_cmp(&f(xs[b])).unwrap())
                    .unwrap();
                lo = xs[k.saturating_sub(1)];
                hi = xs[(k + 1).min(20)];
            }
            let oracle = 0.5 * (lo + hi);
            let (w, v) = p.minimizer().unwrap();
            assert!((w - oracle).abs() < 1e-9, "{name}: {w} vs {oracle}");
            assert!((w - 1.0).abs() < 1e-9);
            assert_relative_eq!(v, -1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn subgradient_examples() {
        let class = inv12(8.0);
        let m = lj(2.0, 1.0).subgradient_min(&class, 0.5 * 0.2).unwrap();
        let z: f64 = 0.1;
        assert_relative_eq!(m, 12.0 * (2f64.powi(6) / z.powi(7) - 2f64.powi(12) / z.powi(13)), max_relative = 1e-12);

        // Literal example from the kernel contract: z* = 0.5 for δ = 2.
        let wide = ClassParams::new(1.0, 5.0, 1.5, Psi::default()).unwrap();
        let m = lj(2.0, 1.0).subgradient_min(&wide, 0.5).unwrap();
        let expected = 12.0 * (2f64.powi(6) / 0.5f64.powi(7) - 2f64.powi(12) / 0.5f64.powi(13));
        assert_relative_eq!(m, expected, max_relative = 1e-12);
        assert!(m < -1e5);

        let narrow = ClassParams::new(1.0, 5.0, 1.1, Psi::default()).unwrap();
        let p = lj(1.0, 1.0);
        let m = p.subgradient_min(&narrow, 0.9).unwrap();
        let h = 1e-7;
        let fd = (p.value(0.9 + h).unwrap_finite() - p.value(0.9 - h).unwrap_finite()) / (2.0 * h);
        assert!(((m - fd) / fd).abs() < 1e-6);

        assert!(matches!(
            lj(2.0, 1.0).subgradient_min(&class, 1.9),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn approximation_examples() {
        let class = ClassParams::new(1.0, 5.0, 2.4, Psi::default()).unwrap();
        let a = ApproxPotential::new(lj(2.0, 1.0), &class, 0.4).unwrap();
        assert_eq!(a.value(0.4), lj(2.0, 1.0).value(0.4));
        assert!(a.value(0.2) < lj(2.0, 1.0).value(0.2));
        assert_eq!(a.value(1.7), lj(2.0, 1.0).value(1.7));
        assert!(a.value(-3.0).is_finite());
    }

    #[test]
    fn approximations_stay_below_and_agree_above_knots() {
        let class = ClassParams::new(1.0, 5.0, 2.4, Psi::default()).unwrap();
        let base = lj(2.0, 1.0);
        let lo = ApproxPotential::new(base.clone(), &class, 0.1).unwrap();
        let hi = ApproxPotential::new(base.clone(), &class, 0.4).unwrap();
        for k in 0..2000 {
            let z = -1.0 + k as f64 * 0.004;
            let exact = base.value(z);
            for a in [&lo, &hi] {
                assert!(a.value(z) <= exact);
                if z >= a.z_star {
                    assert_eq!(a.value(z), exact);
                }
            }
        }
    }

    #[test]
    fn slope_bound_examples() {
        let class = inv12(8.0);
        let at = |z: f64| slope_lower_bound(&class, z);
        assert!(at(1e-3) > at(1e-2) && at(1e-2) > at(5e-2));
        assert!(at(1e-6) > 1e60);
        // Vacuous near 1/d: numerator d·max(Ψ(1/d),1/d) dominates.
        assert_eq!(at(0.12), 0.0);
        // Direct arithmetic at z* = 0.05.
        let inv_d = 0.125f64;
        let top = 8.0 * inv_d.powi(-12);
        let expected = -(top - (0.05f64.powi(-12) / 8.0 - 8.0)) / (inv_d - 0.05);
        assert_relative_eq!(at(0.05), expected.max(0.0), max_relative = 1e-12);
        assert!(at(0.05) > 0.0);
    }

    #[test]
    fn slope_bound_dominates_class_members() {
        let class = ClassParams::covering_classical((1.0, 2.0), (3.0, 4.0));
        for (d, e) in [(1.0, 3.0), (2.0, 4.0), (1.5, 3.5), (1.0, 4.0), (2.0, 3.0)] {
            let p = lj(d, e);
            for k in 1..40 {
                let z = class.inv_d() * k as f64 / 41.0;
                let m = p.subgradient_min(&class, z).unwrap();
                assert!(m <= -slope_lower_bound(&class, z) * (1.0 - 1e-12), "δ={d} z*={z}");
            }
        }
    }

    #[test]
    fn membership_examples() {
        let p = lj(2.0, 1.0);
        // With Ψ = z^-12 and d = 8 the upper sandwich fails near z → 0+:
        // J ~ 4096 z^-12 > 8 z^-12.
        let c8 = inv12(8.0);
        let r = check_class_membership(&p, &c8, &membership_grid(&p, &c8)).unwrap();
        assert_eq!(r.failed(), vec![MembershipCondition::SandwichUpper]);

        let c = ClassParams::new(1.0, 5.0, 8.0, Psi::inverse_power(4096.0, 12.0)).unwrap();
        let r = check_class_membership(&p, &c, &membership_grid(&p, &c)).unwrap();
        assert!(r.passed(), "{r:?}");

        let c15 = ClassParams::new(1.0, 5.0, 1.5, Psi::inverse_power(4096.0, 12.0)).unwrap();
        let r = check_class_membership(&p, &c15, &membership_grid(&p, &c15)).unwrap();
        assert!(r.failed().contains(&MembershipCondition::WellInRange));

        let q = lj(1.0, 3.0);
        let c1 = ClassParams::new(1.0, 1.0, 8.0, Psi::default()).unwrap();
        let r = check_class_membership(&q, &c1, &membership_grid(&q, &c1)).unwrap();
        assert!(r.failed().contains(&MembershipCondition::TailBound));
    }

    #[test]
    fn covering_class_admits_box_corners() {
        let class = ClassParams::covering_classical((1.0, 2.0), (3.0, 4.0));
        for (d, e) in [(1.0, 3.0), (1.0, 4.0), (2.0, 3.0), (2.0, 4.0), (1.5, 3.5)] {
            let p = lj(d, e);
            let r = check_class_membership(&p, &class, &membership_grid(&p, &class)).unwrap();
            assert!(r.passed(), "δ={d} ε={e}: {:?}", r.failed());
        }
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let p = lj(2.0, 1.0);
        let c = inv12(8.0);
        let grid: Vec<f64> = (1..=320).map(|k| 0.1 * k as f64).collect();
        assert!(matches!(check_class_membership(&p, &c, &grid), Err(Error::Precondition(_))));
    }

    #[test]
    fn lipschitz_bound_dominates_empirical() {
        let class = ClassParams::covering_classical((1.0, 2.0), (3.0, 4.0));
        for (d, e) in [(1.0, 3.0), (2.0, 4.0), (1.3, 3.9)] {
            let p = lj(d, e);
            for rho in [0.05, 0.2, 0.5, 0.9] {
                let emp = empirical_lipschitz(&p, rho, 1000);
                assert!(emp <= lipschitz_bound(&class, rho), "δ={d} ρ={rho}");
            }
        }
    }

    #[test]
    fn blow_up_rate_matches_repulsive_core() {
        let (delta, eps) = (2.0, 1.5);
        let p = lj(delta, eps);
        let z = delta * 1e-2;
        let ratio = p.value(z).unwrap_finite() * z.powi(12) / (eps * delta.powi(12));
        assert_relative_eq!(ratio, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn shifted_potential_moves_the_core() {
        let p = PotentialSpec::shifted(1.0, 2.0, 0.5).unwrap();
        assert_eq!(p.value(0.5), ExtReal::PosInf);
        assert_eq!(p.value(1.5), ExtReal::Finite(-2.0));
        assert_eq!(p.minimizer().unwrap(), (1.5, -2.0));
    }

    #[test]
    fn holder_scaling_matches_direct_sampling() {
        let p = lj(1.7, 3.2);
        let direct = holder_on(|x| p.value(x).to_f64(), 1.7, 1.7 * HOLDER_SPAN, 1.0);
        assert_relative_eq!(p.holder_coefficient(1.0), direct, max_relative = 1e-9);
    }

    #[test]
    fn record_round_trip() {
        let reg = PotentialRegistry::with_builtins();
        let json = r#"{"kind":"shifted_lj","delta":1.0,"epsilon":2.0,"shift":0.25,
                       "class":{"alpha":1.0,"b":3.0,"d":4.0,"psi":{"coeff":2.0}}}"#;
        let rec: PotentialRecord = serde_json::from_str(json).unwrap();
        let spec = rec.to_spec(&reg).unwrap();
        assert_eq!(spec, PotentialSpec::shifted(1.0, 2.0, 0.25).unwrap());
        assert_eq!(rec.class.unwrap().psi.power, 12.0);
        let bad = r#"{"kind":"classical_lj","delta":1.0,"epsilon":2.0,"colour":1}"#;
        assert!(serde_json::from_str::<PotentialRecord>(bad).is_err());
        let general = r#"{"kind":"registered_general","name":"lj12_6"}"#;
        let rec: PotentialRecord = serde_json::from_str(general).unwrap();
        assert!(rec.to_spec(&reg).is_ok());
        let missing = r#"{"kind":"registered_general","name":"nope"}"#;
        let rec: PotentialRecord = serde_json::from_str(missing).unwrap();
        assert!(rec.to_spec(&reg).is_err());
    }

    proptest! {
        #[test]
        fn derivative_matches_central_differences(
            delta in 0.5f64..3.0, eps in 0.5f64..5.0, frac in 0.2f64..0.98,
        ) {
            let p = lj(delta, eps);
            let z = frac * delta;
            let h = 1e-7 * z.max(1.0);
            let fd = (p.value(z + h).unwrap_finite() - p.value(z - h).unwrap_finite()) / (2.0 * h);
            let d = p.derivative(z);
            prop_assert!(((d - fd) / d).abs() < 1e-6, "z={} d={} fd={}", z, d, fd);
            prop_assert!(d < 0.0);
        }

        #[test]
        fn convex_branch_second_differences_nonnegative(
            delta in 0.5f64..3.0, eps in 0.5f64..5.0,
        ) {
            let p = lj(delta, eps);
            let h = delta / 500.0;
            for k in 1..498 {
                let z = h * k as f64;
                let (a, b, c) = (p.value(z - h), p.value(z), p.value(z + h));
                if let (ExtReal::Finite(a), ExtReal::Finite(b), ExtReal::Finite(c)) = (a, b, c) {
                    let scale = a.abs().max(1.0);
                    prop_assert!(a - 2.0 * b + c >= -TOL_CONVEX * scale);
                }
            }
        }
    }
}
