use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use super::heap::{Heap, HeapKind};
use crate::{Error, Result};

/// Per-UE effective training weights, all strictly positive and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights(Vec<f64>);

impl Weights {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("weight vector is empty".into()));
        }
        if let Some(bad) = values.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::Domain(format!("weights must be positive, got {bad}")));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PilotAssignment {
    /// Pilot index of each UE.
    pub pilot_of: Vec<usize>,
    /// Accumulated weight per pilot.
    pub loads: Vec<f64>,
}

impl PilotAssignment {
    /// Builds an assignment and its loads from per-UE pilots.
    pub fn from_pilots(pilot_of: Vec<usize>, num_pilots: usize, w: &[f64]) -> Result<Self> {
        if pilot_of.len() != w.len() {
            return Err(Error::Domain(format!(
                "{} pilots for {} weights",
                pilot_of.len(),
                w.len()
            )));
        }
        let mut loads = vec![0.0; num_pilots];
        for (j, &i) in pilot_of.iter().enumerate() {
            *loads
                .get_mut(i)
                .ok_or(Error::IncompleteAssignment(j))? += w[j];
        }
        Ok(Self { pilot_of, loads })
    }

    pub fn num_ues(&self) -> usize {
        self.pilot_of.len()
    }

    pub fn num_pilots(&self) -> usize {
        self.loads.len()
    }

    pub fn shares_pilot(&self, a: usize, b: usize) -> bool {
        self.pilot_of[a] == self.pilot_of[b]
    }

    /// Binary `tau x U` matrix with one 1 per column.
    pub fn upsilon(&self) -> DMatrix<u8> {
        let mut u = DMatrix::zeros(self.num_pilots(), self.num_ues());
        for (j, &i) in self.pilot_of.iter().enumerate() {
            u[(i, j)] = 1;
        }
        u
    }
}

/// Largest total weight on any single pilot.
pub fn assignment_cost(a: &PilotAssignment, w: &Weights) -> Result<f64> {
    let recomputed = PilotAssignment::from_pilots(a.pilot_of.clone(), a.num_pilots(), w.as_slice())?;
    Ok(recomputed.loads.iter().copied().fold(0.0, f64::max))
}

/// UE indices sorted by non-increasing weight, lower index first on ties.
fn weight_order(w: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..w.len()).collect();
    idx.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
    idx
}

/// Operation counts from one heap assignment run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HeapStats {
    pub extractions: usize,
    pub comparisons: usize,
}

/// Heap-based greedy balancing with an explicit initial pilot permutation.
///
/// The `tau` heaviest UEs receive `initial[0..tau]` in weight order. Every
/// remaining UE, heaviest first, joins the currently lightest pilot.
/// With fewer UEs than pilots each UE gets a distinct pilot.
pub fn assign_pilots_heap_with(
    w: &Weights,
    initial: &[usize],
    stats: Option<&mut HeapStats>,
) -> Result<PilotAssignment> {
    let tau = initial.len();
    check_permutation(initial)?;
    let w = w.as_slice();
    let mut by_weight = Heap::generate(HeapKind::Max, w.iter().copied().zip(0..));
    let mut pilot_of = vec![usize::MAX; w.len()];

    let mut seeds = Vec::with_capacity(tau);
    for &pilot in initial.iter().take(w.len()) {
        let (b, j) = by_weight.extract()?;
        pilot_of[j] = pilot;
        seeds.push((b, pilot));
    }
    let mut extractions = seeds.len();

    let mut by_load = Heap::generate(HeapKind::Min, seeds);
    while !by_weight.is_empty() {
        let (b, j) = by_weight.extract()?;
        extractions += 1;
        let (load, &pilot) = by_load.peek()?;
        pilot_of[j] = pilot;
        by_load.replace_root(load + b, pilot)?;
    }
    if let Some(stats) = stats {
        *stats = HeapStats {
            extractions,
            comparisons: by_weight.comparisons() + by_load.comparisons(),
        };
    }
    if let Some(j) = pilot_of.iter().position(|&p| p == usize::MAX) {
        return Err(Error::IncompleteAssignment(j));
    }
    PilotAssignment::from_pilots(pilot_of, tau, w)
}

/// Heap assignment with a uniformly random initial pilot permutation.
pub fn assign_pilots_heap<R: Rng + ?Sized>(
    w: &Weights,
    tau: usize,
    rng: &mut R,
) -> Result<PilotAssignment> {
    assign_pilots_heap_with(w, &random_permutation(tau, rng)?, None)
}

/// Reference implementation: sort once, then scan all loads per UE.
pub fn assign_pilots_naive(w: &Weights, initial: &[usize]) -> Result<PilotAssignment> {
    check_permutation(initial)?;
    let tau = initial.len();
    let w = w.as_slice();
    let order = weight_order(w);
    let mut pilot_of = vec![0; w.len()];
    let mut loads = vec![0.0; tau];
    for (rank, &j) in order.iter().enumerate() {
        let pilot = if rank < tau {
            initial[rank]
        } else {
            let mut best = 0;
            for i in 1..tau {
                if loads[i] < loads[best] {
                    best = i;
                }
            }
            best
        };
        pilot_of[j] = pilot;
        loads[pilot] += w[j];
    }
    PilotAssignment::from_pilots(pilot_of, tau, w)
}

/// Each UE independently picks a uniform pilot.
pub fn assign_pilots_random<R: Rng + ?Sized>(
    w: &Weights,
    tau: usize,
    rng: &mut R,
) -> Result<PilotAssignment> {
    if tau == 0 {
        return Err(Error::Domain("need at least one pilot".into()));
    }
    let pilot_of = (0..w.len()).map(|_| rng.random_range(0..tau)).collect();
    PilotAssignment::from_pilots(pilot_of, tau, w.as_slice())
}

/// Exact minimum of [`assignment_cost`] by pruned exhaustive search.
pub fn brute_force_optimal(w: &Weights, tau: usize) -> Result<(f64, PilotAssignment)> {
    if tau == 0 {
        return Err(Error::Domain("need at least one pilot".into()));
    }
    let size = (tau as f64).powi(w.len() as i32);
    if size > 1e7 {
        return Err(Error::InstanceTooLarge(size));
    }
    let order = weight_order(w.as_slice());
    let sorted: Vec<f64> = order.iter().map(|&j| w.as_slice()[j]).collect();

    struct Search<'a> {
        w: &'a [f64],
        loads: Vec<f64>,
        current: Vec<usize>,
        best_cost: f64,
        best: Vec<usize>,
    }
    impl Search<'_> {
        fn go(&mut self, depth: usize, used: usize) {
            let cost = self.loads.iter().copied().fold(0.0, f64::max);
            if cost >= self.best_cost {
                return;
            }
            if depth == self.w.len() {
                self.best_cost = cost;
                self.best.clone_from(&self.current);
                return;
            }
            // pilots are interchangeable, so only open one new pilot at a time
            let limit = (used + 1).min(self.loads.len());
            for i in 0..limit {
                self.loads[i] += self.w[depth];
                self.current[depth] = i;
                self.go(depth + 1, used.max(i + 1));
                self.loads[i] -= self.w[depth];
            }
        }
    }

    let mut s = Search {
        w: &sorted,
        loads: vec![0.0; tau],
        current: vec![0; sorted.len()],
        best_cost: f64::INFINITY,
        best: Vec::new(),
    };
    s.go(0, 0);
    let mut pilot_of = vec![0; w.len()];
    for (rank, &j) in order.iter().enumerate() {
        pilot_of[j] = s.best[rank];
    }
    let a = PilotAssignment::from_pilots(pilot_of, tau, w.as_slice())?;
    Ok((s.best_cost, a))
}

/// Classical worst-case ratio of longest-processing-time scheduling.
pub fn lpt_bound(tau: usize) -> f64 {
    4.0 / 3.0 - 1.0 / (3.0 * tau as f64)
}

pub fn random_permutation<R: Rng + ?Sized>(tau: usize, rng: &mut R) -> Result<Vec<usize>> {
    if tau == 0 {
        return Err(Error::Domain("need at least one pilot".into()));
    }
    let mut perm: Vec<usize> = (0..tau).collect();
    perm.shuffle(rng);
    Ok(perm)
}

fn check_permutation(p: &[usize]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::Domain("need at least one pilot".into()));
    }
    let mut seen = vec![false; p.len()];
    for &i in p {
        if i >= p.len() || std::mem::replace(&mut seen[i], true) {
            return Err(Error::Domain(format!("{p:?} is not a pilot permutation")));
        }
    }
    Ok(())
}
