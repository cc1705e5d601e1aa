//! Per-window computation graphs and exact reverse-mode gradients.
//!
//! A window's objective is assembled from three node kinds: embedding
//! updates (one per event per side), clamped inner products, and the scalar
//! loss terms built on them (negative log-intensities for happened events,
//! closed-form survival contributions for monitored dimensions). Embeddings
//! entering the window are constants, so gradients never flow across window
//! boundaries; backward traversal yields derivatives with respect to every
//! parameter block only.

use crate::event::Event;
use crate::linalg;
use crate::math;
use crate::params::{BlockSet, ModelParams};
use crate::process::INNER_PRODUCT_CAP;
use crate::state::DynamicState;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Time epsilon substituted for a zero gap before taking `log` when two
/// events of one dimension collide on the same timestamp.
pub const DEGENERATE_GAP_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphError {
    /// A non-finite value was produced; reports the node kind that held it.
    NonFinite { node_kind: &'static str },
}

impl fmt::Display for GraphError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphError::NonFinite { node_kind } => {
                write!(f, "non-finite value in {node_kind} node")
            }
        }
    }
}

impl core::error::Error for GraphError {}

/// Gradients with respect to every parameter block, shapes matching
/// [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradBundle {
    pub user: BlockSet,
    pub item: BlockSet,
}

impl GradBundle {
    pub fn zeros(k: usize, d: usize) -> Self {
        GradBundle {
            user: BlockSet::zeros(k, d),
            item: BlockSet::zeros(k, d),
        }
    }

    /// Flat layout identical to [`ModelParams::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.user.len() + self.item.len());
        self.user.for_each_block(|b| flat.extend_from_slice(b));
        self.item.for_each_block(|b| flat.extend_from_slice(b));
        flat
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = true;
        self.user
            .for_each_block(|b| ok &= b.iter().all(|x| x.is_finite()));
        self.item
            .for_each_block(|b| ok &= b.iter().all(|x| x.is_finite()));
        ok
    }

    /// Euclidean norm over all entries.
    pub fn global_norm(&self) -> f64 {
        let mut sq = 0.0;
        let mut add = |b: &[f64]| sq += b.iter().map(|x| x * x).sum::<f64>();
        self.user.for_each_block(&mut add);
        self.item.for_each_block(&mut add);
        math::sqrt(sq)
    }
}

/// A survival dimension to monitor, with its estimator weight (1 for event
/// dimensions, the inverse sampling fraction for sampled ones).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalDim {
    pub user: usize,
    pub item: usize,
    pub weight: f64,
}

impl SurvivalDim {
    pub fn new(user: usize, item: usize, weight: f64) -> Self {
        SurvivalDim { user, item, weight }
    }
}

/// Reference to an embedding value: either a window constant or the output
/// of an in-window update node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VecRef {
    Const(usize),
    Node(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    User,
    Item,
}

#[derive(Debug, Clone)]
struct UpdateNode {
    side: Side,
    /// Gap since this entity's previous event (drift input).
    dt: f64,
    own: VecRef,
    other: VecRef,
    context: Option<Vec<f64>>,
    out: Vec<f64>,
}

#[derive(Debug, Clone)]
struct IpNode {
    user_ref: VecRef,
    item_ref: VecRef,
    /// Clamped inner product; `exp(value)` is the segment's compatibility.
    value: f64,
    clamped: bool,
}

#[derive(Debug, Clone, Copy)]
struct EventTerm {
    ip: usize,
    ln_gap: f64,
}

#[derive(Debug, Clone, Copy)]
struct SurvivalTerm {
    ip: usize,
    /// `weight * len^2 / 2 * exp(ip)` for this segment.
    value: f64,
}

/// Counters surfaced to the training trace.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GraphStats {
    /// Inner products that hit the `INNER_PRODUCT_CAP` clamp.
    pub clamped_inner_products: usize,
    /// Observed events whose gap collapsed to zero and got the epsilon guard.
    pub degenerate_gaps: usize,
}

/// Topologically ordered record of one window's computation.
#[derive(Debug, Clone)]
pub struct CompGraph {
    params: ModelParams,
    consts: Vec<Vec<f64>>,
    updates: Vec<UpdateNode>,
    ips: Vec<IpNode>,
    event_terms: Vec<EventTerm>,
    survival_terms: Vec<SurvivalTerm>,
    stats: GraphStats,
}

impl CompGraph {
    fn values(&self, r: VecRef) -> &[f64] {
        match r {
            VecRef::Const(c) => &self.consts[c],
            VecRef::Node(n) => &self.updates[n].out,
        }
    }

    /// `-sum log lambda` over the window's happened events.
    pub fn event_term(&self) -> f64 {
        self.event_terms
            .iter()
            .map(|t| -(self.ips[t.ip].value + t.ln_gap))
            .sum()
    }

    /// Weighted survival mass over the monitored dimensions.
    pub fn survival_term(&self) -> f64 {
        self.survival_terms.iter().map(|t| t.value).sum()
    }

    pub fn total_loss(&self) -> f64 {
        self.event_term() + self.survival_term()
    }

    pub fn stats(&self) -> GraphStats {
        self.stats
    }

    pub fn update_count(&self) -> usize {
        self.updates.len()
    }

    pub fn inner_product_count(&self) -> usize {
        self.ips.len()
    }

    pub fn event_term_count(&self) -> usize {
        self.event_terms.len()
    }

    pub fn survival_segment_count(&self) -> usize {
        self.survival_terms.len()
    }

    /// Reverse traversal: returns the window loss and exact gradients for
    /// every parameter block, window-entry embeddings held constant.
    pub fn backward(&self) -> Result<(f64, GradBundle), GraphError> {
        let k = self.params.k();
        for node in &self.updates {
            if node.out.iter().any(|x| !x.is_finite()) {
                return Err(GraphError::NonFinite {
                    node_kind: "embedding-update",
                });
            }
        }
        for ip in &self.ips {
            if !ip.value.is_finite() {
                return Err(GraphError::NonFinite {
                    node_kind: "inner-product",
                });
            }
        }
        let loss = self.total_loss();
        if !loss.is_finite() {
            return Err(GraphError::NonFinite {
                node_kind: "loss-term",
            });
        }

        let mut grads = GradBundle::zeros(k, self.params.context_dim());
        let mut vec_grads: Vec<Vec<f64>> = vec![vec![0.0; k]; self.updates.len()];
        let mut ip_grads = vec![0.0; self.ips.len()];

        // Seed scalar gradients from the loss terms.
        for t in &self.event_terms {
            ip_grads[t.ip] -= 1.0;
        }
        for t in &self.survival_terms {
            // d/dv of factor * exp(v) is the term value itself.
            ip_grads[t.ip] += t.value;
        }

        // Inner products only read update outputs or constants, so they can
        // all be pushed into vector gradients before walking updates.
        for (idx, ip) in self.ips.iter().enumerate() {
            let g = ip_grads[idx];
            if g == 0.0 || ip.clamped {
                continue; // clamped nodes have zero local derivative
            }
            if let VecRef::Node(a) = ip.user_ref {
                let item_vals = self.values(ip.item_ref).to_vec();
                linalg::axpy(&mut vec_grads[a], g, &item_vals);
            }
            if let VecRef::Node(b) = ip.item_ref {
                let user_vals = self.values(ip.user_ref).to_vec();
                linalg::axpy(&mut vec_grads[b], g, &user_vals);
            }
        }

        let mut grad_pre = vec![0.0; k];
        for idx in (0..self.updates.len()).rev() {
            if vec_grads[idx].iter().all(|&x| x == 0.0) {
                continue;
            }
            let node = &self.updates[idx];
            for j in 0..k {
                grad_pre[j] =
                    vec_grads[idx][j] * self.params.activation.derivative_from_output(node.out[j]);
            }
            let (param_blocks, grad_blocks) = match node.side {
                Side::User => (&self.params.user, &mut grads.user),
                Side::Item => (&self.params.item, &mut grads.item),
            };
            linalg::axpy(&mut grad_blocks.drift, node.dt, &grad_pre);
            let own_vals = self.values(node.own).to_vec();
            let other_vals = self.values(node.other).to_vec();
            linalg::outer_acc(&mut grad_blocks.self_evo, &grad_pre, &own_vals);
            linalg::outer_acc(&mut grad_blocks.co_evo, &grad_pre, &other_vals);
            if let Some(q) = &node.context {
                linalg::outer_acc(&mut grad_blocks.context, &grad_pre, q);
            }
            if let VecRef::Node(a) = node.own {
                linalg::matvec_t_acc(&mut vec_grads[a], &param_blocks.self_evo, &grad_pre, k, k);
            }
            if let VecRef::Node(b) = node.other {
                linalg::matvec_t_acc(&mut vec_grads[b], &param_blocks.co_evo, &grad_pre, k, k);
            }
        }

        if !grads.all_finite() {
            return Err(GraphError::NonFinite {
                node_kind: "gradient",
            });
        }
        Ok((loss, grads))
    }
}

struct GraphBuilder<'a> {
    entry: &'a DynamicState,
    graph: CompGraph,
    /// Interned entry-row constants, one per first-touched entity.
    user_const: Vec<Option<usize>>,
    item_const: Vec<Option<usize>>,
    /// Per-entity (time, ref-after-update) history within the window.
    user_history: Vec<Vec<(f64, VecRef)>>,
    item_history: Vec<Vec<(f64, VecRef)>>,
    last_user_t: Vec<f64>,
    last_item_t: Vec<f64>,
}

impl<'a> GraphBuilder<'a> {
    fn new(entry: &'a DynamicState, params: &ModelParams) -> Self {
        let m = entry.num_users();
        let n = entry.num_items();
        GraphBuilder {
            entry,
            graph: CompGraph {
                params: params.clone(),
                consts: Vec::new(),
                updates: Vec::new(),
                ips: Vec::new(),
                event_terms: Vec::new(),
                survival_terms: Vec::new(),
                stats: GraphStats::default(),
            },
            user_const: vec![None; m],
            item_const: vec![None; n],
            user_history: vec![Vec::new(); m],
            item_history: vec![Vec::new(); n],
            last_user_t: (0..m).map(|u| entry.last_user_time(u)).collect(),
            last_item_t: (0..n).map(|i| entry.last_item_time(i)).collect(),
        }
    }

    fn user_entry_ref(&mut self, u: usize) -> VecRef {
        let idx = *self.user_const[u].get_or_insert_with(|| {
            self.graph
                .consts
                .push(self.entry.user_embedding(u).to_vec());
            self.graph.consts.len() - 1
        });
        VecRef::Const(idx)
    }

    fn item_entry_ref(&mut self, i: usize) -> VecRef {
        let idx = *self.item_const[i].get_or_insert_with(|| {
            self.graph
                .consts
                .push(self.entry.item_embedding(i).to_vec());
            self.graph.consts.len() - 1
        });
        VecRef::Const(idx)
    }

    /// Reference in force at time `t` (right-continuous over the window).
    fn user_ref_at(&mut self, u: usize, t: f64) -> VecRef {
        let idx = self.user_history[u].partition_point(|&(time, _)| time <= t);
        if idx == 0 {
            self.user_entry_ref(u)
        } else {
            self.user_history[u][idx - 1].1
        }
    }

    fn item_ref_at(&mut self, i: usize, t: f64) -> VecRef {
        let idx = self.item_history[i].partition_point(|&(time, _)| time <= t);
        if idx == 0 {
            self.item_entry_ref(i)
        } else {
            self.item_history[i][idx - 1].1
        }
    }

    fn current_user_ref(&mut self, u: usize) -> VecRef {
        match self.user_history[u].last() {
            Some(&(_, r)) => r,
            None => self.user_entry_ref(u),
        }
    }

    fn current_item_ref(&mut self, i: usize) -> VecRef {
        match self.item_history[i].last() {
            Some(&(_, r)) => r,
            None => self.item_entry_ref(i),
        }
    }

    fn add_ip(&mut self, user_ref: VecRef, item_ref: VecRef) -> usize {
        let raw = linalg::dot(self.graph.values(user_ref), self.graph.values(item_ref));
        let value = raw.clamp(-INNER_PRODUCT_CAP, INNER_PRODUCT_CAP);
        let clamped = value != raw;
        if clamped {
            self.graph.stats.clamped_inner_products += 1;
        }
        self.graph.ips.push(IpNode {
            user_ref,
            item_ref,
            value,
            clamped,
        });
        self.graph.ips.len() - 1
    }

    fn add_update(
        &mut self,
        side: Side,
        dt: f64,
        own: VecRef,
        other: VecRef,
        context: Option<&[f64]>,
    ) -> usize {
        let k = self.graph.params.k();
        let blocks = match side {
            Side::User => &self.graph.params.user,
            Side::Item => &self.graph.params.item,
        };
        let mut pre = vec![0.0; k];
        blocks.pre_activation(
            k,
            dt,
            self.graph.values(own),
            self.graph.values(other),
            context,
            &mut pre,
        );
        let out: Vec<f64> = pre
            .iter()
            .map(|&x| self.graph.params.activation.apply(x))
            .collect();
        self.graph.updates.push(UpdateNode {
            side,
            dt,
            own,
            other,
            context: context.map(<[f64]>::to_vec),
            out,
        });
        self.graph.updates.len() - 1
    }

    fn push_event(&mut self, e: &Event) {
        let (u, i) = e.dim();
        debug_assert!(
            e.time >= self.last_user_t[u] && e.time >= self.last_item_t[i],
            "window events must not precede the entry frontier"
        );
        let f_ref = self.current_user_ref(u);
        let g_ref = self.current_item_ref(i);

        // Log-intensity of the happened event, at pre-event embeddings.
        let t_prime = self.last_user_t[u].max(self.last_item_t[i]);
        let mut gap = e.time - t_prime;
        if gap <= 0.0 {
            gap = DEGENERATE_GAP_EPS;
            self.graph.stats.degenerate_gaps += 1;
        }
        let ip = self.add_ip(f_ref, g_ref);
        self.graph.event_terms.push(EventTerm {
            ip,
            ln_gap: math::ln(gap),
        });

        // Both updates read the pre-event references captured above.
        let q = e.context.as_deref();
        let dt_u = e.time - self.last_user_t[u];
        let dt_i = e.time - self.last_item_t[i];
        let user_node = self.add_update(Side::User, dt_u, f_ref, g_ref, q);
        let item_node = self.add_update(Side::Item, dt_i, g_ref, f_ref, q);
        self.user_history[u].push((e.time, VecRef::Node(user_node)));
        self.item_history[i].push((e.time, VecRef::Node(item_node)));
        self.last_user_t[u] = e.time;
        self.last_item_t[i] = e.time;
    }

    fn push_survival(&mut self, events: &[Event], dim: &SurvivalDim) {
        let span_start = events[0].time;
        let span_end = events[events.len() - 1].time;
        let mut breaks = Vec::with_capacity(events.len() + 2);
        breaks.push(span_start);
        for e in events {
            if e.user == dim.user || e.item == dim.item {
                breaks.push(e.time);
            }
        }
        breaks.push(span_end);
        breaks.dedup();
        for pair in breaks.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b <= a {
                continue;
            }
            let f_ref = self.user_ref_at(dim.user, a);
            let g_ref = self.item_ref_at(dim.item, a);
            let ip = self.add_ip(f_ref, g_ref);
            let len = b - a;
            let factor = dim.weight * len * len / 2.0;
            let value = factor * math::exp(self.graph.ips[ip].value);
            self.graph.survival_terms.push(SurvivalTerm { ip, value });
        }
    }
}

/// Builds the computation graph of one window: every embedding update, one
/// log-intensity term per event, and the survival contributions of
/// `survival_dims` over the window span `[t_1, t_M]`.
///
/// `entry` must be the replayed state of all events preceding the window;
/// its embeddings enter the graph as constants (truncation boundary).
pub fn build_window_graph(
    events: &[Event],
    entry: &DynamicState,
    params: &ModelParams,
    survival_dims: &[SurvivalDim],
) -> CompGraph {
    let mut b = GraphBuilder::new(entry, params);
    for e in events {
        b.push_event(e);
    }
    if !events.is_empty() {
        for dim in survival_dims {
            b.push_survival(events, dim);
        }
    }
    b.graph
}
