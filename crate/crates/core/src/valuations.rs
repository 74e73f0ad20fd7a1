//! Explicit XOS valuations and exact value, XOS and demand oracles.
//!
//! A valuation is stored as its full family of additive functions, so every
//! oracle is answered exactly by scanning the family.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A set of good indices. Ordered, so iteration is always ascending.
pub type Bundle = BTreeSet<usize>;

/// Builds a bundle from any iterator of good indices.
pub fn bundle<I: IntoIterator<Item = usize>>(goods: I) -> Bundle {
    goods.into_iter().collect()
}

pub(crate) fn check_bundle(goods: &Bundle, m: usize) -> Result<()> {
    match goods.iter().next_back() {
        Some(&g) if g >= m => Err(Error::GoodOutOfRange { index: g, m }),
        _ => Ok(()),
    }
}

/// Nonnegative per-good weights; the value of a bundle is the sum of its weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveFunction {
    weights: Vec<f64>,
}

impl AdditiveFunction {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some((g, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::invalid(format!(
                "weight of good {g} is {w}; weights must be finite and nonnegative"
            )));
        }
        Ok(AdditiveFunction { weights })
    }

    /// Unit weight on every good of `support`, zero elsewhere.
    pub fn indicator(m: usize, support: &[usize]) -> Result<Self> {
        let mut weights = vec![0.0; m];
        for &g in support {
            if g >= m {
                return Err(Error::GoodOutOfRange { index: g, m });
            }
            weights[g] = 1.0;
        }
        Ok(AdditiveFunction { weights })
    }

    pub fn arity(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn weight(&self, good: usize) -> f64 {
        self.weights[good]
    }

    pub fn value_of<I: IntoIterator<Item = usize>>(&self, goods: I) -> f64 {
        goods.into_iter().map(|g| self.weights[g]).sum()
    }

    pub fn value(&self, goods: &Bundle) -> f64 {
        self.value_of(goods.iter().copied())
    }
}

/// Pointwise maximum of a nonempty family of additive functions over `m` goods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XosValuation {
    family: Vec<AdditiveFunction>,
}

impl XosValuation {
    pub fn new(family: Vec<AdditiveFunction>) -> Result<Self> {
        let Some(first) = family.first() else {
            return Err(Error::invalid("XOS family must be nonempty"));
        };
        let m = first.arity();
        if let Some(k) = family.iter().position(|f| f.arity() != m) {
            return Err(Error::DimensionMismatch(format!(
                "family member {k} has arity {} but member 0 has arity {m}",
                family[k].arity()
            )));
        }
        Ok(XosValuation { family })
    }

    /// Single-function family, i.e. an additive valuation.
    pub fn additive(weights: Vec<f64>) -> Result<Self> {
        XosValuation::new(vec![AdditiveFunction::new(weights)?])
    }

    /// Family given as raw weight rows.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        XosValuation::new(
            rows.into_iter()
                .map(AdditiveFunction::new)
                .collect::<Result<_>>()?,
        )
    }

    pub fn arity(&self) -> usize {
        self.family[0].arity()
    }

    pub fn family(&self) -> &[AdditiveFunction] {
        &self.family
    }

    /// `max_f f(S)` for goods yielded by a cloneable iterator.
    pub fn value_of<I>(&self, goods: I) -> f64
    where
        I: IntoIterator<Item = usize>,
        I::IntoIter: Clone,
    {
        let goods = goods.into_iter();
        self.family
            .iter()
            .map(|f| f.value_of(goods.clone()))
            .fold(0.0, f64::max)
    }

    /// Value oracle. Panics if a good index is out of range; see
    /// [`XosValuation::checked_value`].
    pub fn value(&self, goods: &Bundle) -> f64 {
        self.value_of(goods.iter().copied())
    }

    pub fn checked_value(&self, goods: &Bundle) -> Result<f64> {
        check_bundle(goods, self.arity())?;
        Ok(self.value(goods))
    }

    /// Value of a single good.
    pub fn single(&self, good: usize) -> f64 {
        self.family
            .iter()
            .map(|f| f.weight(good))
            .fold(0.0, f64::max)
    }

    /// XOS oracle: index of a family member attaining `v(S)`, lowest index on ties.
    pub fn xos_index(&self, goods: &Bundle) -> usize {
        let mut best = 0;
        let mut best_value = f64::NEG_INFINITY;
        for (k, f) in self.family.iter().enumerate() {
            let value = f.value(goods);
            if value > best_value {
                best = k;
                best_value = value;
            }
        }
        best
    }

    /// XOS oracle returning the maximizing additive function itself.
    pub fn xos_query(&self, goods: &Bundle) -> &AdditiveFunction {
        &self.family[self.xos_index(goods)]
    }

    pub fn checked_xos_query(&self, goods: &Bundle) -> Result<&AdditiveFunction> {
        check_bundle(goods, self.arity())?;
        Ok(self.xos_query(goods))
    }

    /// Demand oracle: a bundle maximizing `v(S) − Σ_{g∈S} p_g`.
    ///
    /// For each family member `f` the best bundle is `{g : f(g) > p_g}`; its
    /// surplus is the optimum of `f(S) − p(S)` and the maximum over `f` is the
    /// optimum of `v(S) − p(S)`. Goods with `f(g) = p_g` are left out, and the
    /// lowest family index wins ties between members.
    pub fn demand(&self, prices: &PriceVector) -> Bundle {
        assert_eq!(prices.len(), self.arity(), "price vector arity");
        let mut best: Option<(f64, usize)> = None;
        for (k, f) in self.family.iter().enumerate() {
            let surplus: f64 = f
                .weights
                .iter()
                .zip(prices.as_slice())
                .filter(|(w, p)| **w > **p)
                .map(|(w, p)| w - p)
                .sum();
            if best.map_or(true, |(s, _)| surplus > s) {
                best = Some((surplus, k));
            }
        }
        let (_, k) = best.expect("family is nonempty");
        let f = &self.family[k];
        f.weights
            .iter()
            .zip(prices.as_slice())
            .enumerate()
            .filter(|(_, (w, p))| **w > **p)
            .map(|(g, _)| g)
            .collect()
    }

    pub fn checked_demand(&self, prices: &PriceVector) -> Result<Bundle> {
        if prices.len() != self.arity() {
            return Err(Error::DimensionMismatch(format!(
                "{} prices for {} goods",
                prices.len(),
                self.arity()
            )));
        }
        Ok(self.demand(prices))
    }
}

/// `n` agents sharing `m` goods, one XOS valuation each.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    m: usize,
    valuations: Vec<XosValuation>,
}

impl Instance {
    pub fn new(m: usize, valuations: Vec<XosValuation>) -> Result<Self> {
        if valuations.is_empty() {
            return Err(Error::invalid("an instance needs at least one agent"));
        }
        if let Some(i) = valuations.iter().position(|v| v.arity() != m) {
            return Err(Error::DimensionMismatch(format!(
                "agent {i} valuation has arity {} but the instance has {m} goods",
                valuations[i].arity()
            )));
        }
        Ok(Instance { m, valuations })
    }

    /// Additive instance from an `n × m` weight matrix.
    pub fn additive(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        Instance::new(
            m,
            rows.into_iter()
                .map(XosValuation::additive)
                .collect::<Result<_>>()?,
        )
    }

    pub fn n(&self) -> usize {
        self.valuations.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn valuations(&self) -> &[XosValuation] {
        &self.valuations
    }

    pub fn valuation(&self, agent: usize) -> &XosValuation {
        &self.valuations[agent]
    }

    pub fn all_goods(&self) -> Bundle {
        (0..self.m).collect()
    }

    /// The instance restricted to the listed agents (same goods).
    pub fn sub_instance(&self, agents: &[usize]) -> Result<Instance> {
        Instance::new(
            self.m,
            agents.iter().map(|&i| self.valuations[i].clone()).collect(),
        )
    }
}

/// Per-good prices; entries are nonnegative and may be `+∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceVector {
    prices: Vec<f64>,
}

impl PriceVector {
    pub fn new(prices: Vec<f64>) -> Result<Self> {
        if let Some(g) = prices.iter().position(|p| p.is_nan() || *p < 0.0) {
            return Err(Error::invalid(format!(
                "price of good {g} is {}; prices must be nonnegative",
                prices[g]
            )));
        }
        Ok(PriceVector { prices })
    }

    pub fn zeros(m: usize) -> Self {
        PriceVector {
            prices: vec![0.0; m],
        }
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.prices
    }

    pub fn get(&self, good: usize) -> f64 {
        self.prices[good]
    }

    /// Total price of a bundle.
    pub fn total(&self, goods: &Bundle) -> f64 {
        goods.iter().map(|&g| self.prices[g]).sum()
    }
}

/// `v̂(S) = min(1/√n, β·v(S))` over a borrowed valuation.
#[derive(Debug, Clone, Copy)]
pub struct CappedView<'a> {
    base: &'a XosValuation,
    beta: f64,
    cap: f64,
}

impl<'a> CappedView<'a> {
    pub fn new(base: &'a XosValuation, beta: f64, n: usize) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::invalid(format!(
                "scaling factor must be positive and finite, got {beta}"
            )));
        }
        if n == 0 {
            return Err(Error::invalid("agent count must be at least 1"));
        }
        Ok(CappedView {
            base,
            beta,
            cap: 1.0 / (n as f64).sqrt(),
        })
    }

    pub fn base(&self) -> &'a XosValuation {
        self.base
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// The cap `1/√n`.
    pub fn cap(&self) -> f64 {
        self.cap
    }

    /// Caps an already-computed underlying value.
    #[inline]
    pub fn from_raw(&self, raw: f64) -> f64 {
        self.cap.min(self.beta * raw)
    }

    pub fn value(&self, goods: &Bundle) -> f64 {
        self.from_raw(self.base.value(goods))
    }

    pub fn value_of<I>(&self, goods: I) -> f64
    where
        I: IntoIterator<Item = usize>,
        I::IntoIter: Clone,
    {
        self.from_raw(self.base.value_of(goods))
    }

    pub fn single(&self, good: usize) -> f64 {
        self.from_raw(self.base.single(good))
    }
}
