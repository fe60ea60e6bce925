//! Stationary ergodic random media: index-keyed assignments `i ↦ J_j(ω, i, ·)`.
//!
//! Randomness is counter based. The draw at lattice index `i` is a pure
//! function of `(seed, i)`, so any index (negative ones included) can be
//! queried in any order from any thread with identical results. Shifting a
//! model re-roots the lattice without touching the draws, which makes the
//! group law `τ_{a+b} = τ_a τ_b` hold exactly.

use std::sync::{Arc, Mutex};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};
use crate::potential::{ClassParams, PotentialRecord, PotentialRegistry, PotentialSpec};

/// Rectangle of classical Lennard-Jones parameters `[δ_lo, δ_hi] × [ε_lo, ε_hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamBox {
    pub delta: [f64; 2],
    pub epsilon: [f64; 2],
}

/// Rescaling of the base potential for one interaction order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderScale {
    #[serde(default = "one")]
    pub delta: f64,
    #[serde(default = "one")]
    pub epsilon: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for OrderScale {
    fn default() -> Self {
        OrderScale { delta: 1.0, epsilon: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Law {
    /// Independent draws from a finite list of potentials.
    IidDiscrete { support: Vec<(PotentialSpec, f64)> },
    /// Independent classical potentials with `(δ, ε)` uniform on a box.
    IidUniformBox { bounds: ParamBox },
    /// Potentials read off a hidden stationary Markov chain on a finite
    /// state set.
    MarkovShift { states: Vec<PotentialSpec>, transition: Vec<Vec<f64>> },
}

/// Deliberately broken generators used as negative controls.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fixture {
    /// A sequential LCG started from the raw seed whose first output is
    /// returned unmixed. Marginals at index 0 differ from the rest.
    SequentialRng,
}

/// Law of a random chain together with its interaction range `K`.
///
/// All orders `j = 1..K` share the base potential drawn at index `i`;
/// order `j` applies `order_scale[j-1]` to it.
#[derive(Clone, Debug, PartialEq)]
pub struct DistributionSpec {
    pub law: Law,
    pub k: usize,
    pub order_scale: Vec<OrderScale>,
    pub class: ClassParams,
    pub fixture: Option<Fixture>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Delta,
    Epsilon,
    JAtDelta,
    HolderCoeff,
}

impl DistributionSpec {
    fn assemble(law: Law, k: usize, class: Option<ClassParams>) -> Result<Self> {
        let mut spec = DistributionSpec {
            law,
            k,
            order_scale: vec![OrderScale::default(); k],
            class: ClassParams::covering_classical((1.0, 1.0), (1.0, 1.0)),
            fixture: None,
        };
        spec.class = match class {
            Some(c) => c,
            None => spec.covering_class(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn iid_discrete(
        support: Vec<(PotentialSpec, f64)>,
        k: usize,
        class: Option<ClassParams>,
    ) -> Result<Self> {
        Self::assemble(Law::IidDiscrete { support }, k, class)
    }

    pub fn uniform_box(bounds: ParamBox, k: usize, class: Option<ClassParams>) -> Result<Self> {
        Self::assemble(Law::IidUniformBox { bounds }, k, class)
    }

    pub fn markov_shift(
        states: Vec<PotentialSpec>,
        transition: Vec<Vec<f64>>,
        k: usize,
        class: Option<ClassParams>,
    ) -> Result<Self> {
        Self::assemble(Law::MarkovShift { states, transition }, k, class)
    }

    /// Every bond carries the same classical potential.
    pub fn deterministic(delta: f64, epsilon: f64, k: usize) -> Result<Self> {
        Self::iid_discrete(vec![(PotentialSpec::classical(delta, epsilon)?, 1.0)], k, None)
    }

    /// Independent `δ` and `ε`, each drawn from a finite list of
    /// `(value, probability)` pairs.
    pub fn independent_product(
        deltas: &[(f64, f64)],
        epsilons: &[(f64, f64)],
        k: usize,
    ) -> Result<Self> {
        let mut support = Vec::new();
        for &(d, pd) in deltas {
            for &(e, pe) in epsilons {
                support.push((PotentialSpec::classical(d, e)?, pd * pe));
            }
        }
        Self::iid_discrete(support, k, None)
    }

    pub fn with_order_scale(mut self, scales: Vec<OrderScale>) -> Result<Self> {
        self.order_scale = scales;
        self.class = self.covering_class();
        self.validate()?;
        Ok(self)
    }

    pub fn with_class(mut self, class: ClassParams) -> Result<Self> {
        self.class = class;
        self.validate()?;
        Ok(self)
    }

    pub fn with_fixture(mut self, fixture: Option<Fixture>) -> Self {
        self.fixture = fixture;
        self
    }

    /// `(well offset, depth)` ranges over every potential the law can produce.
    fn parameter_ranges(&self) -> ((f64, f64), (f64, f64)) {
        let base: Vec<(f64, f64)> = match &self.law {
            Law::IidDiscrete { support } => support
                .iter()
                .map(|(p, _)| (p.well() - p.shift(), -p.well_depth()))
                .collect(),
            Law::MarkovShift { states, .. } => states
                .iter()
                .map(|p| (p.well() - p.shift(), -p.well_depth()))
                .collect(),
            Law::IidUniformBox { bounds } => vec![
                (bounds.delta[0], bounds.epsilon[0]),
                (bounds.delta[1], bounds.epsilon[1]),
            ],
        };
        let mut dr = (f64::INFINITY, f64::NEG_INFINITY);
        let mut er = (f64::INFINITY, f64::NEG_INFINITY);
        for s in &self.order_scale {
            for &(d, e) in &base {
                dr = (dr.0.min(d * s.delta), dr.1.max(d * s.delta));
                er = (er.0.min(e * s.epsilon), er.1.max(e * s.epsilon));
            }
        }
        (dr, er)
    }

    /// Class constants covering every potential of the law.
    pub fn covering_class(&self) -> ClassParams {
        let (dr, er) = self.parameter_ranges();
        if dr.0.is_finite() && er.0.is_finite() && dr.0 > 0.0 && er.0 > 0.0 {
            ClassParams::covering_classical(dr, er)
        } else {
            ClassParams::covering_classical((1.0, 1.0), (1.0, 1.0))
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.k == 0 {
            errs.push("K must be at least 1".into());
        }
        if self.order_scale.len() != self.k {
            errs.push(format!(
                "order_scale has {} entries for K = {}",
                self.order_scale.len(),
                self.k
            ));
        }
        for s in &self.order_scale {
            if !(s.delta > 0.0 && s.epsilon > 0.0) {
                errs.push("order scales must be positive".into());
            }
        }
        if let Err(Error::Validation(e)) = self.class.validate() {
            errs.extend(e);
        }
        let check_prob = |probs: &[f64], what: &str, errs: &mut Vec<String>| {
            if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                errs.push(format!("{what}: probabilities must be nonnegative"));
            }
            let total: f64 = probs.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                errs.push(format!("{what}: probabilities sum to {total}, not 1"));
            }
        };
        match &self.law {
            Law::IidDiscrete { support } => {
                if support.is_empty() {
                    errs.push("discrete support is empty".into());
                }
                let probs: Vec<f64> = support.iter().map(|s| s.1).collect();
                check_prob(&probs, "support", &mut errs);
            }
            Law::IidUniformBox { bounds } => {
                for (name, r) in [("delta", bounds.delta), ("epsilon", bounds.epsilon)] {
                    if !(r[0] > 0.0 && r[0] <= r[1] && r[1].is_finite()) {
                        errs.push(format!("box {name} range {r:?} invalid"));
                    }
                }
            }
            Law::MarkovShift { states, transition } => {
                if states.is_empty() {
                    errs.push("markov chain has no states".into());
                }
                if transition.len() != states.len()
                    || transition.iter().any(|r| r.len() != states.len())
                {
                    errs.push("transition matrix shape does not match the state count".into());
                } else {
                    for (s, row) in transition.iter().enumerate() {
                        check_prob(row, &format!("transition row {s}"), &mut errs);
                    }
                    if !is_primitive(transition) {
                        errs.push("transition matrix is not irreducible and aperiodic".into());
                    }
                }
            }
        }
        let (dr, _) = self.parameter_ranges();
        let d = self.class.d;
        if dr.0.is_finite() && !(dr.0 > 1.0 / d && dr.1 < d) {
            errs.push(format!(
                "well positions [{}, {}] leave (1/d, d) = ({}, {d})",
                dr.0,
                dr.1,
                1.0 / d
            ));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    /// Exact expectation of an order-1 quantity.
    pub fn expectation(&self, q: Quantity) -> Result<f64> {
        let s = self.order_scale[0];
        let of = |p: &PotentialSpec| -> Result<f64> {
            match q {
                Quantity::Delta => Ok(p.scaled(s.delta, s.epsilon).well()),
                Quantity::Epsilon => Ok(-p.scaled(s.delta, s.epsilon).well_depth()),
                Quantity::JAtDelta => Ok(p.scaled(s.delta, s.epsilon).well_depth()),
                Quantity::HolderCoeff => {
                    Err(Error::Unsupported("no closed form for the Hölder coefficient".into()))
                }
            }
        };
        match &self.law {
            Law::IidDiscrete { support } => {
                support.iter().map(|(p, w)| Ok(w * of(p)?)).sum()
            }
            Law::MarkovShift { states, transition } => {
                let pi = stationary_distribution(transition);
                states.iter().zip(&pi).map(|(p, w)| Ok(w * of(p)?)).sum()
            }
            Law::IidUniformBox { bounds } => {
                let md = 0.5 * (bounds.delta[0] + bounds.delta[1]) * s.delta;
                let me = 0.5 * (bounds.epsilon[0] + bounds.epsilon[1]) * s.epsilon;
                match q {
                    Quantity::Delta => Ok(md),
                    Quantity::Epsilon => Ok(me),
                    Quantity::JAtDelta => Ok(-me),
                    Quantity::HolderCoeff => {
                        Err(Error::Unsupported("no closed form for the Hölder coefficient".into()))
                    }
                }
            }
        }
    }

    pub fn to_record(&self) -> DistributionRecord {
        let (kind, support, bounds, transition) = match &self.law {
            Law::IidDiscrete { support } => (
                DistributionKind::IidDiscrete,
                support
                    .iter()
                    .map(|(p, w)| SupportEntry {
                        potential: PotentialRecord::from_spec(p),
                        probability: Some(*w),
                    })
                    .collect(),
                None,
                Vec::new(),
            ),
            Law::IidUniformBox { bounds } => {
                (DistributionKind::IidUniformBox, Vec::new(), Some(*bounds), Vec::new())
            }
            Law::MarkovShift { states, transition } => (
                DistributionKind::MarkovShift,
                states
                    .iter()
                    .map(|p| SupportEntry { potential: PotentialRecord::from_spec(p), probability: None })
                    .collect(),
                None,
                transition.clone(),
            ),
        };
        DistributionRecord {
            kind,
            support,
            bounds,
            transition,
            k: self.k,
            order_scale: Some(self.order_scale.clone()),
            class: Some(self.class),
            fixture: self.fixture,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionKind {
    IidDiscrete,
    IidUniformBox,
    MarkovShift,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportEntry {
    pub potential: PotentialRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
}

/// JSON form of a [`DistributionSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionRecord {
    pub kind: DistributionKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub support: Vec<SupportEntry>,
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub bounds: Option<ParamBox>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transition: Vec<Vec<f64>>,
    #[serde(rename = "K", default = "default_k")]
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order_scale: Option<Vec<OrderScale>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<ClassParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<Fixture>,
}

fn default_k() -> usize {
    1
}

impl DistributionRecord {
    pub fn to_spec(&self, registry: &PotentialRegistry) -> Result<DistributionSpec> {
        let law = match self.kind {
            DistributionKind::IidDiscrete => {
                let mut support = Vec::new();
                for e in &self.support {
                    let p = e.probability.ok_or_else(|| {
                        Error::Validation(vec!["support entry without probability".into()])
                    })?;
                    support.push((e.potential.to_spec(registry)?, p));
                }
                Law::IidDiscrete { support }
            }
            DistributionKind::IidUniformBox => Law::IidUniformBox {
                bounds: self
                    .bounds
                    .ok_or_else(|| Error::Validation(vec!["missing key `box`".into()]))?,
            },
            DistributionKind::MarkovShift => Law::MarkovShift {
                states: self
                    .support
                    .iter()
                    .map(|e| e.potential.to_spec(registry))
                    .collect::<Result<_>>()?,
                transition: self.transition.clone(),
            },
        };
        let mut spec = DistributionSpec {
            law,
            k: self.k,
            order_scale: self.order_scale.clone().unwrap_or_else(|| vec![OrderScale::default(); self.k]),
            class: ClassParams::covering_classical((1.0, 1.0), (1.0, 1.0)),
            fixture: self.fixture,
        };
        spec.class = self.class.unwrap_or_else(|| spec.covering_class());
        spec.validate()?;
        Ok(spec)
    }
}

/// Ready-made media used throughout the examples and tests.
pub mod catalog {
    use super::*;

    /// `(δ, ε)` uniform on `[1,2] × [3,4]`; `E[δ] = 1.5`, `E[ε] = 3.5`.
    pub fn uniform_box(k: usize) -> DistributionSpec {
        DistributionSpec::uniform_box(ParamBox { delta: [1.0, 2.0], epsilon: [3.0, 4.0] }, k, None)
            .expect("catalog medium is valid")
    }

    /// Independent `δ ∈ {1 (0.9), 6 (0.1)}` and `ε ∈ {3 (0.9), 8 (0.1)}`;
    /// the same means as [`uniform_box`].
    pub fn two_valued(k: usize) -> DistributionSpec {
        DistributionSpec::independent_product(&[(1.0, 0.9), (6.0, 0.1)], &[(3.0, 0.9), (8.0, 0.1)], k)
            .expect("catalog medium is valid")
    }

    /// Two hidden states `(δ, ε) = (1, 3)` and `(2, 4)` with transition
    /// matrix `[[0.9, 0.1], [0.2, 0.8]]`; stationary law `(2/3, 1/3)`.
    pub fn markov_two_state(k: usize) -> DistributionSpec {
        DistributionSpec::markov_shift(
            vec![
                PotentialSpec::classical(1.0, 3.0).unwrap(),
                PotentialSpec::classical(2.0, 4.0).unwrap(),
            ],
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            k,
            None,
        )
        .expect("catalog medium is valid")
    }

    pub fn deterministic(delta: f64, epsilon: f64, k: usize) -> DistributionSpec {
        DistributionSpec::deterministic(delta, epsilon, k).expect("catalog medium is valid")
    }
}

/// `P` is primitive iff some power `P^m`, `m ≤ (n−1)² + 1`, is entrywise
/// positive.
fn is_primitive(p: &[Vec<f64>]) -> bool {
    let n = p.len();
    let adj: Vec<Vec<bool>> = p.iter().map(|r| r.iter().map(|&x| x > 0.0).collect()).collect();
    let mut pow = adj.clone();
    let bound = (n - 1) * (n - 1) + 1;
    for _ in 0..bound {
        if pow.iter().all(|r| r.iter().all(|&b| b)) {
            return true;
        }
        let mut next = vec![vec![false; n]; n];
        for i in 0..n {
            for k in 0..n {
                if pow[i][k] {
                    for j in 0..n {
                        next[i][j] |= adj[k][j];
                    }
                }
            }
        }
        pow = next;
    }
    pow.iter().all(|r| r.iter().all(|&b| b))
}

/// Stationary distribution by power iteration.
pub fn stationary_distribution(p: &[Vec<f64>]) -> Vec<f64> {
    let n = p.len();
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..1_000_000 {
        let mut next = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                next[j] += pi[i] * p[i][j];
            }
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);
        let change: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if change < 1e-15 {
            break;
        }
    }
    pi
}

/// Two uniforms in `[0, 1)` keyed by `(seed, i)`.
fn uniforms(seed: u64, i: i64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zigzag = ((i << 1) ^ (i >> 63)) as u64;
    rng.set_word_pos(zigzag as u128 * 4);
    let a = rng.next_u64();
    let b = rng.next_u64();
    (to_unit(a), to_unit(b))
}

fn to_unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Negative-control generator: an LCG stepped `|i|` times from the raw seed,
/// whose index-0 output is the seed itself.
fn sequential_uniforms(seed: u64, i: i64) -> (f64, f64) {
    const A: u64 = 6364136223846793005;
    const C: u64 = 1442695040888963407;
    let mut x = seed;
    for _ in 0..(2 * i.unsigned_abs()) {
        x = x.wrapping_mul(A).wrapping_add(C);
    }
    let y = x.wrapping_mul(A).wrapping_add(C);
    (to_unit(x), to_unit(y))
}

fn pick(cumulative: &[f64], u: f64) -> usize {
    cumulative.iter().position(|&c| u < c).unwrap_or(cumulative.len() - 1)
}

#[derive(Debug, Default)]
struct MarkovPath {
    forward: Vec<usize>,
    backward: Vec<usize>,
}

#[derive(Debug)]
struct Realization {
    seed: u64,
    markov: Mutex<MarkovPath>,
}

#[derive(Debug)]
struct Prepared {
    spec: DistributionSpec,
    cumulative: Vec<f64>,
    forward_cum: Vec<Vec<f64>>,
    backward_cum: Vec<Vec<f64>>,
}

fn cumsum(w: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = w
        .iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    out
}

/// One realization `ω` of a random chain, re-rooted at some lattice offset.
#[derive(Clone, Debug)]
pub struct ChainModel {
    prepared: Arc<Prepared>,
    realization: Arc<Realization>,
    offset: i64,
}

impl PartialEq for ChainModel {
    fn eq(&self, other: &Self) -> bool {
        self.prepared.spec == other.prepared.spec
            && self.realization.seed == other.realization.seed
            && self.offset == other.offset
    }
}

impl ChainModel {
    pub fn build(spec: DistributionSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let (cumulative, forward_cum, backward_cum) = match &spec.law {
            Law::IidDiscrete { support } => {
                (cumsum(&support.iter().map(|s| s.1).collect::<Vec<_>>()), vec![], vec![])
            }
            Law::IidUniformBox { .. } => (vec![], vec![], vec![]),
            Law::MarkovShift { transition, .. } => {
                let pi = stationary_distribution(transition);
                let n = pi.len();
                let reversed: Vec<Vec<f64>> = (0..n)
                    .map(|s| (0..n).map(|t| pi[t] * transition[t][s] / pi[s]).collect())
                    .collect();
                (
                    cumsum(&pi),
                    transition.iter().map(|r| cumsum(r)).collect(),
                    reversed.iter().map(|r| cumsum(r)).collect(),
                )
            }
        };
        Ok(ChainModel {
            prepared: Arc::new(Prepared { spec, cumulative, forward_cum, backward_cum }),
            realization: Arc::new(Realization { seed, markov: Mutex::new(MarkovPath::default()) }),
            offset: 0,
        })
    }

    pub fn spec(&self) -> &DistributionSpec {
        &self.prepared.spec
    }

    pub fn class(&self) -> &ClassParams {
        &self.prepared.spec.class
    }

    pub fn k(&self) -> usize {
        self.prepared.spec.k
    }

    pub fn seed(&self) -> u64 {
        self.realization.seed
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    /// Same law, fresh realization.
    pub fn with_seed(&self, seed: u64) -> ChainModel {
        ChainModel {
            prepared: self.prepared.clone(),
            realization: Arc::new(Realization { seed, markov: Mutex::new(MarkovPath::default()) }),
            offset: 0,
        }
    }

    /// The model seen from lattice site `k`: `shift(m, k).potential_at(i)`
    /// equals `m.potential_at(i + k)`.
    pub fn shift(&self, k: i64) -> ChainModel {
        ChainModel { offset: self.offset + k, ..self.clone() }
    }

    fn draw(&self, i: i64) -> (f64, f64) {
        match self.prepared.spec.fixture {
            Some(Fixture::SequentialRng) => sequential_uniforms(self.realization.seed, i),
            None => uniforms(self.realization.seed, i),
        }
    }

    fn markov_state(&self, i: i64) -> usize {
        let prep = &self.prepared;
        let mut path = self.realization.markov.lock().expect("markov cache poisoned");
        if path.forward.is_empty() {
            let s0 = pick(&prep.cumulative, self.draw(0).0);
            path.forward.push(s0);
        }
        if i >= 0 {
            while path.forward.len() <= i as usize {
                let t = path.forward.len() as i64;
                let prev = *path.forward.last().unwrap();
                path.forward.push(pick(&prep.forward_cum[prev], self.draw(t).0));
            }
            path.forward[i as usize]
        } else {
            let need = i.unsigned_abs() as usize;
            while path.backward.len() < need {
                let t = -(path.backward.len() as i64) - 1;
                let next = *path.backward.last().unwrap_or(&path.forward[0]);
                path.backward.push(pick(&prep.backward_cum[next], self.draw(t).0));
            }
            path.backward[need - 1]
        }
    }

    fn base_at(&self, g: i64) -> PotentialSpec {
        match &self.prepared.spec.law {
            Law::IidDiscrete { support } => {
                if support.len() == 1 {
                    return support[0].0.clone();
                }
                support[pick(&self.prepared.cumulative, self.draw(g).0)].0.clone()
            }
            Law::IidUniformBox { bounds } => {
                let (u, v) = self.draw(g);
                PotentialSpec::ClassicalLj {
                    delta: bounds.delta[0] + u * (bounds.delta[1] - bounds.delta[0]),
                    epsilon: bounds.epsilon[0] + v * (bounds.epsilon[1] - bounds.epsilon[0]),
                }
            }
            Law::MarkovShift { states, .. } => states[self.markov_state(g)].clone(),
        }
    }

    /// `J_j(ω, i, ·)` for `1 ≤ j ≤ K`.
    pub fn potential_at(&self, i: i64, j: usize) -> Result<PotentialSpec> {
        if j == 0 || j > self.k() {
            return precondition(format!("order {j} outside 1..={}", self.k()));
        }
        Ok(self.order_potential(i, j))
    }

    pub(crate) fn order_potential(&self, i: i64, j: usize) -> PotentialSpec {
        let s = self.prepared.spec.order_scale[j - 1];
        let base = self.base_at(i + self.offset);
        if s.delta == 1.0 && s.epsilon == 1.0 {
            base
        } else {
            base.scaled(s.delta, s.epsilon)
        }
    }

    /// All orders at site `i`, `[J_1, …, J_K]`.
    pub fn potentials_at(&self, i: i64) -> Vec<PotentialSpec> {
        let base = self.base_at(i + self.offset);
        self.prepared
            .spec
            .order_scale
            .iter()
            .map(|s| base.scaled(s.delta, s.epsilon))
            .collect()
    }

    /// Mean of `q` for order `j` over the sites `i ∈ N·[a, b) ∩ ℤ`.
    pub fn sample_average(&self, q: Quantity, j: usize, n: usize, window: (f64, f64)) -> Result<f64> {
        let (lo, hi) = window_indices(n, window)?;
        if j == 0 || j > self.k() {
            return precondition(format!("order {j} outside 1..={}", self.k()));
        }
        let alpha = self.class().alpha;
        let mut total = 0.0;
        for i in lo..hi {
            let p = self.order_potential(i, j);
            total += match q {
                Quantity::Delta => p.well(),
                Quantity::Epsilon => -p.well_depth(),
                Quantity::JAtDelta => p.well_depth(),
                Quantity::HolderCoeff => p.holder_coefficient(alpha),
            };
        }
        Ok(total / (hi - lo) as f64)
    }
}

/// Integer range `[⌈Na⌉, ⌈Nb⌉)` of sites in the scaled window `N·[a, b)`.
pub fn window_indices(n: usize, window: (f64, f64)) -> Result<(i64, i64)> {
    let (a, b) = window;
    if n == 0 || !(a < b) || !a.is_finite() || !b.is_finite() {
        return precondition(format!("invalid window [{a}, {b}) at N = {n}"));
    }
    let nf = n as f64;
    let lo = (nf * a).ceil() as i64;
    let hi = (nf * b).ceil() as i64;
    if hi <= lo {
        return precondition(format!("window [{a}, {b}) contains no sites at N = {n}"));
    }
    Ok((lo, hi))
}

/// Running means of the Hölder coefficient over growing windows.
#[derive(Clone, Debug, Serialize)]
pub struct HolderAudit {
    pub sizes: Vec<usize>,
    pub means: Vec<f64>,
    /// Set when the running mean keeps growing with the sample size, a sign
    /// that the coefficient may fail to be integrable.
    pub growing: bool,
}

pub fn holder_audit(model: &ChainModel, j: usize, sizes: &[usize]) -> Result<HolderAudit> {
    let means = sizes
        .iter()
        .map(|&n| model.sample_average(Quantity::HolderCoeff, j, n, (0.0, 1.0)))
        .collect::<Result<Vec<_>>>()?;
    let growing = means.len() >= 3
        && means.windows(2).all(|w| w[1] > w[0] * (1.0 + 1e-3))
        && means.last().unwrap() > &(means[0] * 1.1);
    if growing {
        log::warn!("Hölder coefficient average grows with the sample size: {means:?}");
    }
    Ok(HolderAudit { sizes: sizes.to_vec(), means, growing })
}

/// Outcome of the marginal-stationarity check across lattice sites.
#[derive(Clone, Debug, Serialize)]
pub struct StationarityReport {
    pub sites: Vec<i64>,
    pub ks_statistics: Vec<f64>,
    pub critical_value: f64,
    pub passed: bool,
}

/// Compares the law of `δ` at each site with the law at the first site via
/// two-sample Kolmogorov-Smirnov tests over `seeds` realizations.
pub fn stationarity_check(spec: &DistributionSpec, seeds: u64, sites: &[i64]) -> Result<StationarityReport> {
    if sites.len() < 2 || seeds < 2 {
        return precondition("stationarity check needs two sites and two seeds");
    }
    let base = ChainModel::build(spec.clone(), 0)?;
    let samples: Vec<Vec<f64>> = sites
        .iter()
        .map(|&i| (0..seeds).map(|s| base.with_seed(s).order_potential(i, 1).well()).collect())
        .collect();
    let crit = crate::stats::ks_critical_01(seeds as usize, seeds as usize);
    let ks: Vec<f64> = samples[1..]
        .iter()
        .map(|s| crate::stats::ks_two_sample(&samples[0], s))
        .collect();
    let passed = ks.iter().all(|&d| d < crit);
    Ok(StationarityReport { sites: sites.to_vec(), ks_statistics: ks, critical_value: crit, passed })
}
