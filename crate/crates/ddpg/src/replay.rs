//! Fixed-capacity experience replay with uniform sampling.

use ndarray::{Array1, Array2};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// A sampled minibatch laid out row-per-transition.
#[derive(Debug, Clone)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    pub dones: Array1<f64>,
}

impl Batch {
    pub fn from_transitions<'a, I>(transitions: I) -> Self
    where
        I: IntoIterator<Item = &'a Transition>,
    {
        let items: Vec<&Transition> = transitions.into_iter().collect();
        assert!(!items.is_empty(), "empty batch");
        let n = items.len();
        let ds = items[0].state.len();
        let da = items[0].action.len();
        let mut states = Array2::zeros((n, ds));
        let mut actions = Array2::zeros((n, da));
        let mut next_states = Array2::zeros((n, ds));
        let mut rewards = Array1::zeros(n);
        let mut dones = Array1::zeros(n);
        for (i, t) in items.iter().enumerate() {
            states.row_mut(i).assign(&Array1::from(t.state.clone()));
            actions.row_mut(i).assign(&Array1::from(t.action.clone()));
            next_states.row_mut(i).assign(&Array1::from(t.next_state.clone()));
            rewards[i] = t.reward;
            dones[i] = if t.done { 1.0 } else { 0.0 };
        }
        Self {
            states,
            actions,
            rewards,
            next_states,
            dones,
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Ring buffer: once full, each insertion overwrites the oldest transition.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::new(),
            next: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, transition: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(transition);
        } else {
            self.items[self.next] = transition;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.items.get(index)
    }

    /// Indices drawn uniformly with replacement; `None` until the buffer holds
    /// at least `batch_size` transitions.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Option<Vec<usize>> {
        if batch_size == 0 || self.items.len() < batch_size {
            return None;
        }
        Some((0..batch_size).map(|_| rng.random_range(0..self.items.len())).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Option<Batch> {
        let idx = self.sample_indices(batch_size, rng)?;
        Some(Batch::from_transitions(idx.iter().map(|&i| &self.items[i])))
    }
}
