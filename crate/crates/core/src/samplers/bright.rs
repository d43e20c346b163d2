//! Firefly auxiliary variables over the observed non-edges.
//!
//! Every observed non-edge carries a binary θ. Bright dyads (θ = 1) enter the
//! restricted non-edge likelihood; dark ones only contribute through the
//! per-category counts used by the τ update. Edges have θ = 1 structurally and
//! are never stored here.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::model::{sq_dist, GlpmState};
use crate::network::{dyad_count, Dyad, Network};

const NOT_TRACKED: u32 = u32::MAX;

/// Indexed partition of the observed non-edges into bright and dark sets.
#[derive(Debug, Clone, PartialEq)]
pub struct BrightSet {
    /// Per category.
    bright: Vec<Vec<Dyad>>,
    dark: Vec<Vec<Dyad>>,
    /// Position of each tracked dyad inside its list, by linear dyad index.
    slot: Vec<u32>,
    lit: Vec<bool>,
}

impl BrightSet {
    /// Every observed non-edge dark.
    pub fn all_dark(network: &Network) -> Self {
        Self::from_fn(network, |_| false)
    }

    pub fn all_bright(network: &Network) -> Self {
        Self::from_fn(network, |_| true)
    }

    /// `θ_ij = is_bright(dyad)` for every observed non-edge.
    pub fn from_fn(network: &Network, mut is_bright: impl FnMut(Dyad) -> bool) -> Self {
        let c = network.num_categories();
        let mut set = BrightSet {
            bright: vec![Vec::new(); c],
            dark: vec![Vec::new(); c],
            slot: vec![NOT_TRACKED; dyad_count(network.node_count())],
            lit: vec![false; dyad_count(network.node_count())],
        };
        for cat in 0..c {
            let list = network.non_edges_in_category(cat).expect("category in range");
            for &d in list {
                let idx = d.index();
                let target = if is_bright(d) {
                    set.lit[idx] = true;
                    &mut set.bright[cat]
                } else {
                    &mut set.dark[cat]
                };
                set.slot[idx] = target.len() as u32;
                target.push(d);
            }
        }
        set
    }

    /// `θ ~ Bernoulli(τ_c)` independently per observed non-edge.
    pub fn sample<R: Rng + ?Sized>(network: &Network, tau: &[f64], rng: &mut R) -> Self {
        Self::from_fn(network, |d| rng.random::<f64>() < tau[network.category(d)])
    }

    pub fn num_categories(&self) -> usize {
        self.bright.len()
    }

    /// θ for a tracked non-edge; `None` for edges and unobserved dyads.
    pub fn theta(&self, d: Dyad) -> Option<bool> {
        let idx = d.index();
        (self.slot.get(idx).copied()? != NOT_TRACKED).then(|| self.lit[idx])
    }

    pub fn is_bright(&self, d: Dyad) -> bool {
        self.lit.get(d.index()).copied().unwrap_or(false)
    }

    /// Bright dyads of one category (order reflects the update history).
    pub fn bright_in(&self, category: usize) -> &[Dyad] {
        &self.bright[category]
    }

    pub fn dark_in(&self, category: usize) -> &[Dyad] {
        &self.dark[category]
    }

    pub fn bright_iter(&self) -> impl Iterator<Item = (usize, Dyad)> + '_ {
        self.bright
            .iter()
            .enumerate()
            .flat_map(|(c, list)| list.iter().map(move |&d| (c, d)))
    }

    pub fn bright_count_per_category(&self) -> Vec<usize> {
        self.bright.iter().map(Vec::len).collect()
    }

    pub fn dark_count_per_category(&self) -> Vec<usize> {
        self.dark.iter().map(Vec::len).collect()
    }

    pub fn bright_count(&self) -> usize {
        self.bright.iter().map(Vec::len).sum()
    }

    pub fn tracked_count(&self) -> usize {
        self.bright_count() + self.dark.iter().map(Vec::len).sum::<usize>()
    }

    /// Bright dyads sorted canonically, independent of update history.
    pub fn canonical_bright(&self) -> Vec<Dyad> {
        let mut all: Vec<Dyad> = self.bright.iter().flatten().copied().collect();
        all.sort_unstable();
        all
    }

    /// Moves a tracked dyad to the other side. Panics if `d` is not tracked.
    pub fn set(&mut self, d: Dyad, category: usize, bright: bool) {
        let idx = d.index();
        assert_ne!(self.slot[idx], NOT_TRACKED, "dyad {d:?} is not an observed non-edge");
        if self.lit[idx] == bright {
            return;
        }
        let (from, to) = if bright {
            (&mut self.dark[category], &mut self.bright[category])
        } else {
            (&mut self.bright[category], &mut self.dark[category])
        };
        let pos = self.slot[idx] as usize;
        from.swap_remove(pos);
        if let Some(moved) = from.get(pos) {
            self.slot[moved.index()] = pos as u32;
        }
        self.slot[idx] = to.len() as u32;
        to.push(d);
        self.lit[idx] = bright;
    }

    /// Invariant check used by tests: lists, slots and flags agree with `network`.
    pub fn is_consistent_with(&self, network: &Network) -> bool {
        if self.num_categories() != network.num_categories() {
            return false;
        }
        for c in 0..self.num_categories() {
            let expected = network.non_edges_in_category(c).expect("category in range").len();
            if self.bright[c].len() + self.dark[c].len() != expected {
                return false;
            }
            for (lit, list) in [(true, &self.bright[c]), (false, &self.dark[c])] {
                for (pos, d) in list.iter().enumerate() {
                    let idx = d.index();
                    if network.category(*d) != c
                        || self.lit[idx] != lit
                        || self.slot[idx] as usize != pos
                        || network.status(*d) != crate::network::DyadStatus::NonEdge
                    {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// Probability that a dark dyad at squared distance `s` is brightened by one
/// sweep: proposed with probability `τ`, accepted with `1 − e^{−s/2}`.
#[inline]
pub fn brighten_probability(tau: f64, s: f64) -> f64 {
    tau * -(-0.5 * s).exp_m1()
}

/// Probability that a bright dyad is darkened by one sweep. The 1 → 0 move is
/// always accepted, so this is just the probability of proposing θ′ = 0.
#[inline]
pub fn darken_probability(tau: f64) -> f64 {
    1.0 - tau
}

/// Exact conditional `P(θ = 1 | A = 0, s, τ)`.
pub fn bright_conditional(tau: f64, s: f64) -> f64 {
    brighten_probability(tau, s) / (1.0 - tau * (-0.5 * s).exp())
}

/// One Firefly sweep: every observed non-edge proposes `θ′ ~ Bernoulli(τ_c)`.
///
/// Proposals are realized per category as a binomial count of selected dyads
/// drawn without replacement, so the cost scales with the number of moves
/// rather than the number of non-edges. Returns `(brightened, darkened)`.
pub fn flymc_sweep<R: Rng + ?Sized>(
    state: &GlpmState,
    network: &Network,
    bright: &mut BrightSet,
    rng: &mut R,
) -> (usize, usize) {
    debug_assert_eq!(network.num_categories(), bright.num_categories());
    let z = &state.positions;
    let mut to_bright = Vec::new();
    let mut to_dark = Vec::new();
    let (mut brightened, mut darkened) = (0, 0);
    for c in 0..bright.num_categories() {
        let tau = state.tau[c];
        to_bright.clear();
        to_dark.clear();

        // 1 → 0: no accept-reject step.
        let nb = bright.bright[c].len();
        let k = binomial(nb, darken_probability(tau), rng);
        for pos in index::sample(rng, nb, k) {
            to_dark.push(bright.bright[c][pos]);
        }

        // 0 → 1: propose with τ, accept with 1 − e^{−s/2}.
        let nd = bright.dark[c].len();
        let k = binomial(nd, tau, rng);
        for pos in index::sample(rng, nd, k) {
            let d = bright.dark[c][pos];
            let accept = -(-0.5 * sq_dist(z, d.i, d.j)).exp_m1();
            if rng.random::<f64>() < accept {
                to_bright.push(d);
            }
        }

        for &d in &to_dark {
            bright.set(d, c, false);
        }
        for &d in &to_bright {
            bright.set(d, c, true);
        }
        brightened += to_bright.len();
        darkened += to_dark.len();
    }
    (brightened, darkened)
}

fn binomial<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> usize {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n as u64, p).expect("p in (0, 1)").sample(rng) as usize
}
