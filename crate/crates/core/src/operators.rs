//! Nodal, pool and activation operators with their analytic derivatives,
//! and the 28-entry operator-set library.
//!
//! An operator set is indexed as `pool * 14 + act * 7 + nodal`; index 0
//! (summation, tanh, multiplication) is the plain convolutional neuron.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{OnnError, Result};

/// Below this |y| the sinc operator switches to its series expansion.
pub const SINC_GUARD: f64 = 1e-6;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Nodal {
    Mul,
    Cubic,
    Harmonic,
    Exp,
    Dog,
    Sinc,
    Chirp,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pool {
    Sum,
    Median,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Activation {
    Tanh,
    LinCut,
}

impl Nodal {
    pub const ALL: [Nodal; 7] = [
        Nodal::Mul,
        Nodal::Cubic,
        Nodal::Harmonic,
        Nodal::Exp,
        Nodal::Dog,
        Nodal::Sinc,
        Nodal::Chirp,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Result<Self> {
        Self::ALL
            .get(id)
            .copied()
            .ok_or_else(|| OnnError::invalid(format!("nodal id {id} not in [0, 6]")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Nodal::Mul => "mul",
            Nodal::Cubic => "cubic",
            Nodal::Harmonic => "sin",
            Nodal::Exp => "exp",
            Nodal::Dog => "dog",
            Nodal::Sinc => "sinc",
            Nodal::Chirp => "chirp",
        }
    }

    /// `Ψ(y, w)`. Inputs are assumed finite.
    #[inline]
    pub fn eval(self, y: f64, w: f64, p: &OperatorParams) -> f64 {
        match self {
            Nodal::Mul => w * y,
            Nodal::Cubic => p.k_cubic * w * y * y * y,
            Nodal::Harmonic => (p.k_harmonic * w * y).sin(),
            Nodal::Exp => (w * y).exp() - 1.0,
            Nodal::Dog => w * y * (-p.k_dog * w * w * y * y).exp(),
            Nodal::Sinc => {
                let k = p.k_harmonic;
                if y.abs() < SINC_GUARD {
                    let a = k * w * y;
                    k * w * (1.0 - a * a / 6.0)
                } else {
                    (k * w * y).sin() / y
                }
            }
            Nodal::Chirp => (p.k_chirp * w * y * y).sin(),
        }
    }

    /// `(∂Ψ/∂w, ∂Ψ/∂y)`.
    #[inline]
    pub fn grad(self, y: f64, w: f64, p: &OperatorParams) -> (f64, f64) {
        match self {
            Nodal::Mul => (y, w),
            Nodal::Cubic => {
                let k = p.k_cubic;
                (k * y * y * y, 3.0 * k * w * y * y)
            }
            Nodal::Harmonic => {
                let k = p.k_harmonic;
                let c = (k * w * y).cos();
                (k * y * c, k * w * c)
            }
            Nodal::Exp => {
                let e = (w * y).exp();
                (y * e, w * e)
            }
            Nodal::Dog => {
                let s = w * w * y * y;
                let g = (1.0 - 2.0 * p.k_dog * s) * (-p.k_dog * s).exp();
                (y * g, w * g)
            }
            Nodal::Sinc => {
                let k = p.k_harmonic;
                let a = k * w * y;
                let dw = if y.abs() < SINC_GUARD { k * (1.0 - a * a / 2.0) } else { k * a.cos() };
                // (a cos a - sin a) / y² cancels badly for small a; use its series.
                let dy = if a.abs() < 0.1 {
                    let a2 = a * a;
                    let g = -1.0 / 3.0 + a2 / 30.0 - a2 * a2 / 840.0 + a2 * a2 * a2 / 45360.0;
                    g * k * k * k * w * w * w * y
                } else {
                    (a * a.cos() - a.sin()) / (y * y)
                };
                (dw, dy)
            }
            Nodal::Chirp => {
                let k = p.k_chirp;
                let c = (k * w * y * y).cos();
                (k * y * y * c, 2.0 * k * w * y * c)
            }
        }
    }
}

impl Pool {
    pub const ALL: [Pool; 2] = [Pool::Sum, Pool::Median];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Result<Self> {
        Self::ALL
            .get(id)
            .copied()
            .ok_or_else(|| OnnError::invalid(format!("pool id {id} not in [0, 1]")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Pool::Sum => "sum",
            Pool::Median => "median",
        }
    }

    /// Pooled value and, for the median, the index of the selected term.
    /// `terms` must be non-empty.
    #[inline]
    pub fn eval(self, terms: &[f64]) -> (f64, Option<usize>) {
        match self {
            Pool::Sum => (terms.iter().sum(), None),
            Pool::Median => {
                let i = median_index(terms);
                (terms[i], Some(i))
            }
        }
    }
}

/// Index of the lower-middle order statistic; among equal values the lowest
/// index wins.
pub fn median_index(terms: &[f64]) -> usize {
    median_index_with(terms, &mut Vec::with_capacity(terms.len()))
}

/// [`median_index`] with caller-provided scratch space.
pub(crate) fn median_index_with(terms: &[f64], order: &mut Vec<usize>) -> usize {
    debug_assert!(!terms.is_empty());
    order.clear();
    order.extend(0..terms.len());
    let k = (terms.len() - 1) / 2;
    order.select_nth_unstable_by(k, |&a, &b| terms[a].total_cmp(&terms[b]).then(a.cmp(&b)));
    let value = terms[order[k]];
    terms.iter().position(|&v| v == value).unwrap_or(order[k])
}

impl Activation {
    pub const ALL: [Activation; 2] = [Activation::Tanh, Activation::LinCut];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Result<Self> {
        Self::ALL
            .get(id)
            .copied()
            .ok_or_else(|| OnnError::invalid(format!("activation id {id} not in [0, 1]")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::LinCut => "lin-cut",
        }
    }

    #[inline]
    pub fn eval(self, x: f64, p: &OperatorParams) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::LinCut => (x / p.cut).clamp(-1.0, 1.0),
        }
    }

    #[inline]
    pub fn grad(self, x: f64, p: &OperatorParams) -> f64 {
        match self {
            Activation::Tanh => {
                let f = x.tanh();
                1.0 - f * f
            }
            Activation::LinCut => {
                if x.abs() <= p.cut {
                    1.0 / p.cut
                } else {
                    0.0
                }
            }
        }
    }
}

/// Constants of the nodal and activation operators.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorParams {
    /// `K` of the harmonic and sinc operators.
    pub k_harmonic: f64,
    pub k_dog: f64,
    pub k_chirp: f64,
    pub k_cubic: f64,
    /// Saturation threshold of lin-cut.
    pub cut: f64,
}

impl Default for OperatorParams {
    fn default() -> Self {
        OperatorParams {
            k_harmonic: FRAC_PI_2,
            k_dog: 1.0,
            k_chirp: FRAC_PI_2,
            k_cubic: FRAC_PI_2,
            cut: 1.0,
        }
    }
}

impl OperatorParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("k_harmonic", self.k_harmonic),
            ("k_dog", self.k_dog),
            ("k_chirp", self.k_chirp),
            ("k_cubic", self.k_cubic),
            ("cut", self.cut),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(OnnError::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// A (pool, activation, nodal) triple.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct OperatorSet {
    pub pool: Pool,
    pub act: Activation,
    pub nodal: Nodal,
}

pub const LIBRARY_SIZE: usize = 28;

impl OperatorSet {
    /// Summation, tanh, multiplication: a convolutional neuron.
    pub const CNN: OperatorSet = OperatorSet {
        pool: Pool::Sum,
        act: Activation::Tanh,
        nodal: Nodal::Mul,
    };

    pub fn new(pool: Pool, act: Activation, nodal: Nodal) -> Self {
        OperatorSet { pool, act, nodal }
    }

    pub fn index(self) -> usize {
        self.pool.id() * 14 + self.act.id() * 7 + self.nodal.id()
    }

    pub fn from_index(index: usize) -> Result<Self> {
        if index >= LIBRARY_SIZE {
            return Err(OnnError::invalid(format!(
                "operator set index {index} not in [0, {}]",
                LIBRARY_SIZE - 1
            )));
        }
        Ok(OperatorSet {
            pool: Pool::from_id(index / 14)?,
            act: Activation::from_id(index / 7 % 2)?,
            nodal: Nodal::from_id(index % 7)?,
        })
    }

    /// All 28 sets in index order.
    pub fn library() -> impl Iterator<Item = OperatorSet> {
        (0..LIBRARY_SIZE).map(|i| OperatorSet::from_index(i).expect("index in range"))
    }
}

impl fmt::Display for OperatorSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{{{},{},{}}} ({}/{}/{})",
            self.index(),
            self.pool.id(),
            self.act.id(),
            self.nodal.id(),
            self.pool.name(),
            self.act.name(),
            self.nodal.name()
        )
    }
}

impl Serialize for OperatorSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u64(self.index() as u64)
    }
}

impl<'de> Deserialize<'de> for OperatorSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let index = usize::deserialize(d)?;
        OperatorSet::from_index(index).map_err(serde::de::Error::custom)
    }
}

pub fn set_to_index(set: OperatorSet) -> usize {
    set.index()
}

pub fn index_to_set(index: usize) -> Result<OperatorSet> {
    OperatorSet::from_index(index)
}

fn check_finite(values: &[f64]) -> Result<()> {
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(OnnError::NonFinite(format!("operator input {v}")));
    }
    Ok(())
}

pub fn nodal_eval(id: Nodal, y: f64, w: f64, params: &OperatorParams) -> Result<f64> {
    check_finite(&[y, w])?;
    Ok(id.eval(y, w, params))
}

/// Returns `(∂Ψ/∂w, ∂Ψ/∂y)`.
pub fn nodal_grad(id: Nodal, y: f64, w: f64, params: &OperatorParams) -> Result<(f64, f64)> {
    check_finite(&[y, w])?;
    Ok(id.grad(y, w, params))
}

pub fn pool_eval(id: Pool, terms: &[f64]) -> Result<(f64, Option<usize>)> {
    if terms.is_empty() {
        return Err(OnnError::invalid("pool over an empty term list"));
    }
    Ok(id.eval(terms))
}

/// Derivative of the pooled value with respect to `terms[term_index]`.
pub fn pool_grad(id: Pool, terms: &[f64], term_index: usize) -> Result<f64> {
    if term_index >= terms.len() {
        return Err(OnnError::invalid(format!(
            "term index {term_index} out of range for {} terms",
            terms.len()
        )));
    }
    Ok(match id {
        Pool::Sum => 1.0,
        Pool::Median => {
            if median_index(terms) == term_index {
                1.0
            } else {
                0.0
            }
        }
    })
}

pub fn act_eval(id: Activation, x: f64, params: &OperatorParams) -> f64 {
    id.eval(x, params)
}

pub fn act_grad(id: Activation, x: f64, params: &OperatorParams) -> f64 {
    id.grad(x, params)
}
