//! Model parameters: the recurrent update weights for both update rules.
//!
//! Each side (user update, item update) owns four blocks: a temporal-drift
//! vector, a self-evolution matrix, a co-evolution matrix, and an optional
//! context projection. The user side corresponds to the W blocks of the
//! update rule, the item side to the V blocks.

use crate::linalg;
use crate::math;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use rand::Rng;

/// Elementwise nonlinearity applied by every embedding update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => math::tanh(x),
            Activation::Sigmoid => math::sigmoid(x),
        }
    }

    /// Derivative expressed through the activation output `y = apply(x)`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(alloc::format!("unknown activation `{other}`")),
        }
    }
}

/// The four weight blocks of one update rule (row-major storage).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSet {
    /// Length k; scales the time gap since the entity's previous event.
    pub drift: Vec<f64>,
    /// k x k; maps the entity's own previous embedding.
    pub self_evo: Vec<f64>,
    /// k x k; maps the counterpart's pre-event embedding.
    pub co_evo: Vec<f64>,
    /// k x d; maps the event context (empty when d = 0).
    pub context: Vec<f64>,
}

impl BlockSet {
    pub fn zeros(k: usize, d: usize) -> Self {
        BlockSet {
            drift: vec![0.0; k],
            self_evo: vec![0.0; k * k],
            co_evo: vec![0.0; k * k],
            context: vec![0.0; k * d],
        }
    }

    fn random<R: Rng>(k: usize, d: usize, half_width: f64, rng: &mut R) -> Self {
        let mut draw = |len: usize| -> Vec<f64> {
            (0..len)
                .map(|_| rng.gen_range(-half_width..=half_width))
                .collect()
        };
        BlockSet {
            drift: draw(k),
            self_evo: draw(k * k),
            co_evo: draw(k * k),
            context: draw(k * d),
        }
    }

    /// Pre-activation `drift*dt + self_evo*own + co_evo*other + context*q`.
    pub(crate) fn pre_activation(
        &self,
        k: usize,
        dt: f64,
        own: &[f64],
        other: &[f64],
        q: Option<&[f64]>,
        out: &mut [f64],
    ) {
        for (o, &w) in out.iter_mut().zip(&self.drift) {
            *o = w * dt;
        }
        linalg::matvec_acc(out, &self.self_evo, own, k, k);
        linalg::matvec_acc(out, &self.co_evo, other, k, k);
        if let Some(q) = q {
            linalg::matvec_acc(out, &self.context, q, k, q.len());
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.drift.len() + self.self_evo.len() + self.co_evo.len() + self.context.len()
    }

    pub(crate) fn for_each_block(&self, mut f: impl FnMut(&[f64])) {
        f(&self.drift);
        f(&self.self_evo);
        f(&self.co_evo);
        f(&self.context);
    }

    pub(crate) fn for_each_block_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        f(&mut self.drift);
        f(&mut self.self_evo);
        f(&mut self.co_evo);
        f(&mut self.context);
    }
}

/// Full parameter set: user-side blocks, item-side blocks, activation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    k: usize,
    d: usize,
    pub activation: Activation,
    pub user: BlockSet,
    pub item: BlockSet,
}

impl ModelParams {
    pub fn zeros(k: usize, d: usize, activation: Activation) -> Self {
        ModelParams {
            k,
            d,
            activation,
            user: BlockSet::zeros(k, d),
            item: BlockSet::zeros(k, d),
        }
    }

    /// All entries i.i.d. uniform on `[-half_width, half_width]`.
    pub fn random_uniform<R: Rng>(
        k: usize,
        d: usize,
        activation: Activation,
        half_width: f64,
        rng: &mut R,
    ) -> Self {
        ModelParams {
            k,
            d,
            activation,
            user: BlockSet::random(k, d, half_width, rng),
            item: BlockSet::random(k, d, half_width, rng),
        }
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn context_dim(&self) -> usize {
        self.d
    }

    /// Total number of scalar parameters.
    pub fn len(&self) -> usize {
        self.user.len() + self.item.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = true;
        self.user
            .for_each_block(|b| ok &= b.iter().all(|x| x.is_finite()));
        self.item
            .for_each_block(|b| ok &= b.iter().all(|x| x.is_finite()));
        ok
    }

    /// Flattens every block into one vector, user blocks first, each side in
    /// drift / self-evolution / co-evolution / context order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.len());
        self.user.for_each_block(|b| flat.extend_from_slice(b));
        self.item.for_each_block(|b| flat.extend_from_slice(b));
        flat
    }

    /// Overwrites every block from a flat vector laid out as in [`Self::to_flat`].
    pub fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.len(), "flat parameter length mismatch");
        let mut offset = 0;
        let mut take = |b: &mut [f64]| {
            b.copy_from_slice(&flat[offset..offset + b.len()]);
            offset += b.len();
        };
        self.user.for_each_block_mut(&mut take);
        self.item.for_each_block_mut(&mut take);
    }
}
