//! Exact absorption probabilities for small networks.
//!
//! The reachable state space is enumerated breadth-first and the absorption
//! probabilities of the embedded jump chain are obtained by Gaussian
//! elimination. Works over any [`Scalar`], so with [`crate::Exact`] rates the
//! answer is an exact rational.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use thiserror::Error;

use crate::crn::{CountVector, Crn, CrnError};
use crate::scalar::Scalar;
use crate::ssa::{guards_settled, settle_guards};

pub const DEFAULT_STATE_CAP: usize = 1_000_000;

/// Residual bound accepted from the linear solve.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

/// Systems up to this many transient states are solved densely.
const DENSE_LIMIT: usize = 1500;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("reachable state space exceeds {cap} states; use simulation instead")]
    TooLarge { cap: usize },
    #[error("state {state} cannot reach an absorbing state")]
    NoAbsorption { state: CountVector },
    #[error("linear system is singular")]
    Singular,
    #[error("solution residual {residual:e} exceeds tolerance")]
    Residual { residual: f64 },
    #[error(transparent)]
    Crn(#[from] CrnError),
}

/// Reachable part of the CTMC. State 0 is the initial state.
#[derive(Debug, Clone)]
pub struct StateSpace<T> {
    states: Vec<CountVector>,
    transitions: Vec<Vec<(usize, T)>>,
    index: HashMap<CountVector, usize>,
}

impl<T: Scalar> StateSpace<T> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[CountVector] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &CountVector {
        &self.states[i]
    }

    pub fn index_of(&self, state: &CountVector) -> Option<usize> {
        self.index.get(state).copied()
    }

    /// Outgoing `(successor, rate)` pairs, parallel reactions merged.
    pub fn transitions(&self, i: usize) -> &[(usize, T)] {
        &self.transitions[i]
    }

    pub fn is_absorbing(&self, i: usize) -> bool {
        self.transitions[i].is_empty()
    }

    pub fn transition_count(&self) -> usize {
        self.transitions.iter().map(Vec::len).sum()
    }

    pub fn total_rate(&self, i: usize) -> T {
        self.transitions[i]
            .iter()
            .fold(T::zero(), |acc, (_, r)| acc + r.clone())
    }

    /// Jump probabilities out of state `i`; empty for absorbing states.
    pub fn embedded_row(&self, i: usize) -> Vec<(usize, T)> {
        let total = self.total_rate(i);
        self.transitions[i]
            .iter()
            .map(|(j, r)| (*j, r.clone() / total.clone()))
            .collect()
    }
}

/// Breadth-first closure of `initial` under the reactions of `crn`.
pub fn enumerate<T: Scalar>(
    crn: &Crn<T>,
    initial: &CountVector,
    volume: &T,
    cap: usize,
) -> Result<StateSpace<T>, OracleError> {
    enumerate_inner(crn, initial, volume, cap, None)
}

/// Like [`enumerate`], but states in which the `watched` counts can no longer
/// change are made absorbing. This is what makes games with an opponent that
/// never stops firing (a catalyst toggle, say) amenable to the oracle.
pub fn enumerate_settled<T: Scalar>(
    crn: &Crn<T>,
    initial: &CountVector,
    volume: &T,
    cap: usize,
    watched: &[usize],
) -> Result<StateSpace<T>, OracleError> {
    enumerate_inner(crn, initial, volume, cap, Some(watched))
}

fn enumerate_inner<T: Scalar>(
    crn: &Crn<T>,
    initial: &CountVector,
    volume: &T,
    cap: usize,
    watched: Option<&[usize]>,
) -> Result<StateSpace<T>, OracleError> {
    if initial.dim() != crn.species().len() {
        return Err(CrnError::DimensionMismatch {
            expected: crn.species().len(),
            found: initial.dim(),
        }
        .into());
    }
    if cap == 0 {
        return Err(OracleError::TooLarge { cap });
    }
    let guards = watched.map(|w| settle_guards(crn, w));
    let mut states = vec![initial.clone()];
    let mut index = HashMap::from([(initial.clone(), 0usize)]);
    let mut transitions = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let x = states[i].clone();
        let mut out: Vec<(usize, T)> = Vec::new();
        let settled = guards.as_ref().is_some_and(|g| guards_settled(g, &x));
        if !settled {
            for j in 0..crn.reactions().len() {
                let a = crn.propensity(j, &x, volume)?;
                if a.is_zero() {
                    continue;
                }
                let y = crn.reaction(j).apply(&x);
                let target = match index.get(&y) {
                    Some(&t) => t,
                    None => {
                        if states.len() >= cap {
                            return Err(OracleError::TooLarge { cap });
                        }
                        let t = states.len();
                        states.push(y.clone());
                        index.insert(y, t);
                        queue.push_back(t);
                        t
                    }
                };
                match out.iter_mut().find(|(t, _)| *t == target) {
                    Some((_, rate)) => *rate = rate.clone() + a,
                    None => out.push((target, a)),
                }
            }
        }
        // BFS pops indices in insertion order.
        debug_assert_eq!(transitions.len(), i);
        transitions.push(out);
    }
    Ok(StateSpace {
        states,
        transitions,
        index,
    })
}

/// Solution of an absorption problem.
#[derive(Debug, Clone)]
pub struct Absorption<T> {
    /// Probability, from each state of the space, of being absorbed in a
    /// state satisfying the predicate.
    pub probabilities: Vec<T>,
    /// Max-norm residual of the solved system, in `f64`.
    pub residual: f64,
}

impl<T: Clone> Absorption<T> {
    /// Probability from the initial state.
    pub fn initial(&self) -> T {
        self.probabilities[0].clone()
    }
}

/// First-step analysis on the embedded jump chain.
pub fn absorption_probabilities<T, P>(space: &StateSpace<T>, predicate: P) -> Result<Absorption<T>, OracleError>
where
    T: Scalar,
    P: Fn(&CountVector) -> bool,
{
    check_absorbing_reachable(space)?;
    let n = space.len();
    let mut slot = vec![usize::MAX; n];
    let transient: Vec<usize> = (0..n).filter(|&i| !space.is_absorbing(i)).collect();
    for (k, &i) in transient.iter().enumerate() {
        slot[i] = k;
    }
    let target: Vec<bool> = (0..n)
        .map(|i| space.is_absorbing(i) && predicate(space.state(i)))
        .collect();

    // (I - Q) p = b over transient states.
    let mut rows: Vec<Vec<(usize, T)>> = Vec::with_capacity(transient.len());
    let mut rhs: Vec<T> = Vec::with_capacity(transient.len());
    for (k, &i) in transient.iter().enumerate() {
        let mut row: BTreeMap<usize, T> = BTreeMap::new();
        row.insert(k, T::one());
        let mut b = T::zero();
        for (j, p) in space.embedded_row(i) {
            if space.is_absorbing(j) {
                if target[j] {
                    b = b + p;
                }
            } else {
                let e = row.entry(slot[j]).or_insert_with(T::zero);
                *e = e.clone() - p;
            }
        }
        rows.push(row.into_iter().collect());
        rhs.push(b);
    }

    let solution = if transient.len() <= DENSE_LIMIT {
        solve_dense(&rows, &rhs)?
    } else {
        solve_sparse(&rows, &rhs)?
    };
    let residual = residual(&rows, &rhs, &solution);
    if residual.is_nan() || residual > RESIDUAL_TOLERANCE {
        return Err(OracleError::Residual { residual });
    }

    let probabilities = (0..n)
        .map(|i| {
            if space.is_absorbing(i) {
                if target[i] {
                    T::one()
                } else {
                    T::zero()
                }
            } else {
                solution[slot[i]].clone()
            }
        })
        .collect();
    Ok(Absorption {
        probabilities,
        residual,
    })
}

fn check_absorbing_reachable<T: Scalar>(space: &StateSpace<T>) -> Result<(), OracleError> {
    let n = space.len();
    let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for &(j, _) in space.transitions(i) {
            reverse[j].push(i);
        }
    }
    let mut seen = vec![false; n];
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| space.is_absorbing(i)).collect();
    for &i in &queue {
        seen[i] = true;
    }
    while let Some(j) = queue.pop_front() {
        for &i in &reverse[j] {
            if !seen[i] {
                seen[i] = true;
                queue.push_back(i);
            }
        }
    }
    match seen.iter().position(|s| !s) {
        Some(i) => Err(OracleError::NoAbsorption {
            state: space.state(i).clone(),
        }),
        None => Ok(()),
    }
}

fn residual<T: Scalar>(rows: &[Vec<(usize, T)>], rhs: &[T], x: &[T]) -> f64 {
    rows.iter()
        .zip(rhs)
        .map(|(row, b)| {
            let ax = row
                .iter()
                .fold(T::zero(), |acc, (j, a)| acc + a.clone() * x[*j].clone());
            (ax - b.clone()).abs().to_f64()
        })
        .fold(0.0, f64::max)
}

/// Dense Gaussian elimination with partial pivoting.
fn solve_dense<T: Scalar>(rows: &[Vec<(usize, T)>], rhs: &[T]) -> Result<Vec<T>, OracleError> {
    let n = rows.len();
    let mut a: Vec<Vec<T>> = rows
        .iter()
        .map(|row| {
            let mut dense = vec![T::zero(); n];
            for (j, v) in row {
                dense[*j] = v.clone();
            }
            dense
        })
        .collect();
    let mut b = rhs.to_vec();
    for k in 0..n {
        let pivot = (k..n)
            .max_by(|&i, &j| {
                a[i][k]
                    .abs()
                    .partial_cmp(&a[j][k].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("non-empty range");
        if a[pivot][k].is_zero() {
            return Err(OracleError::Singular);
        }
        a.swap(k, pivot);
        b.swap(k, pivot);
        let (upper, lower) = a.split_at_mut(k + 1);
        let pivot_row = &upper[k];
        for (offset, row) in lower.iter_mut().enumerate() {
            if row[k].is_zero() {
                continue;
            }
            let f = row[k].clone() / pivot_row[k].clone();
            for j in k..n {
                if !pivot_row[j].is_zero() {
                    row[j] = row[j].clone() - f.clone() * pivot_row[j].clone();
                }
            }
            b[k + 1 + offset] = b[k + 1 + offset].clone() - f * b[k].clone();
        }
    }
    let mut x = vec![T::zero(); n];
    for k in (0..n).rev() {
        let mut s = b[k].clone();
        for j in k + 1..n {
            if !a[k][j].is_zero() {
                s = s - a[k][j].clone() * x[j].clone();
            }
        }
        x[k] = s / a[k][k].clone();
    }
    Ok(x)
}

/// Sparse elimination in the natural (breadth-first) order with diagonal
/// pivots. `I - Q` is a nonsingular M-matrix once every state can reach
/// absorption, so the diagonal pivots stay positive.
fn solve_sparse<T: Scalar>(rows: &[Vec<(usize, T)>], rhs: &[T]) -> Result<Vec<T>, OracleError> {
    let n = rows.len();
    let mut a: Vec<BTreeMap<usize, T>> = rows.iter().map(|r| r.iter().cloned().collect()).collect();
    let mut cols: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (i, row) in a.iter().enumerate() {
        for &j in row.keys() {
            cols[j].insert(i);
        }
    }
    let mut b = rhs.to_vec();
    for k in 0..n {
        let pivot = a[k].get(&k).cloned().unwrap_or_else(T::zero);
        if pivot <= T::zero() {
            return Err(OracleError::Singular);
        }
        let below: Vec<usize> = cols[k].range(k + 1..).copied().collect();
        if below.is_empty() {
            continue;
        }
        let pivot_row: Vec<(usize, T)> = a[k].range(k + 1..).map(|(j, v)| (*j, v.clone())).collect();
        for i in below {
            let f = a[i].remove(&k).expect("column index in sync") / pivot.clone();
            cols[k].remove(&i);
            for (j, v) in &pivot_row {
                let e = a[i].entry(*j).or_insert_with(|| {
                    cols[*j].insert(i);
                    T::zero()
                });
                *e = e.clone() - f.clone() * v.clone();
            }
            b[i] = b[i].clone() - f * b[k].clone();
        }
    }
    let mut x = vec![T::zero(); n];
    for k in (0..n).rev() {
        let mut s = b[k].clone();
        for (j, v) in a[k].range(k + 1..) {
            s = s - v.clone() * x[*j].clone();
        }
        x[k] = s / a[k][&k].clone();
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crn::CrnBuilder;
    use crate::scalar::Exact;
    use num_traits::{One, Zero};

    fn r_net<T: Scalar>(one: T) -> Crn<T> {
        CrnBuilder::new()
            .reaction(&[("X", 2), ("Y", 1)], &[("X", 3)], one.clone())
            .reaction(&[("X", 1), ("Y", 2)], &[("Y", 3)], one)
            .build()
            .unwrap()
    }

    fn x_took_over(s: &CountVector) -> bool {
        s[1] == 0
    }

    fn exact(n: i64, d: i64) -> Exact {
        Exact::new(n.into(), d.into())
    }

    #[test]
    fn r_from_3_2_has_six_states() {
        let crn = r_net(1.0);
        let space = enumerate(&crn, &[3, 2].into(), &1.0, DEFAULT_STATE_CAP).unwrap();
        let mut got: Vec<_> = space.states().iter().map(|s| (s[0], s[1])).collect();
        got.sort();
        assert_eq!(got, [(0, 5), (1, 4), (2, 3), (3, 2), (4, 1), (5, 0)]);
        assert_eq!(space.state(0), &CountVector::from([3, 2]));
        let absorbing: Vec<_> = (0..space.len())
            .filter(|&i| space.is_absorbing(i))
            .map(|i| (space.state(i)[0], space.state(i)[1]))
            .collect();
        assert_eq!(absorbing.len(), 2);
        assert!(absorbing.contains(&(5, 0)) && absorbing.contains(&(0, 5)));
    }

    #[test]
    fn r_from_2_1_single_transition() {
        let space = enumerate(&r_net(1.0), &[2, 1].into(), &1.0, 10).unwrap();
        assert_eq!(space.len(), 2);
        assert_eq!(space.state(1), &CountVector::from([3, 0]));
        assert_eq!(space.transitions(0), &[(1, 2.0)]);
        assert_eq!(space.transition_count(), 1);
    }

    #[test]
    fn empty_network_single_absorbing_state() {
        let crn: Crn<f64> = Crn::empty();
        let space = enumerate(&crn, &CountVector::zeros(0), &1.0, 10).unwrap();
        assert_eq!(space.len(), 1);
        assert!(space.is_absorbing(0));
        let p = absorption_probabilities(&space, |_| true).unwrap();
        assert_eq!(p.initial(), 1.0);
    }

    #[test]
    fn exact_absorption_values() {
        let crn = r_net(Exact::one());
        let one = Exact::one();
        let cases = [([3u64, 2u64], exact(3, 4)), ([2, 2], exact(1, 2)), ([4, 1], Exact::one())];
        for (init, want) in cases {
            let space = enumerate(&crn, &init.into(), &one, DEFAULT_STATE_CAP).unwrap();
            let p = absorption_probabilities(&space, x_took_over).unwrap();
            assert_eq!(p.initial(), want, "from {init:?}");
            assert_eq!(p.residual, 0.0);
        }
    }

    #[test]
    fn float_absorption_values() {
        let crn = r_net(1.0);
        for (init, want) in [([3u64, 2u64], 0.75f64), ([2, 2], 0.5), ([4, 1], 1.0)] {
            let space = enumerate(&crn, &init.into(), &1.0, DEFAULT_STATE_CAP).unwrap();
            let p = absorption_probabilities(&space, x_took_over).unwrap();
            assert!((p.initial() - want).abs() < 1e-12, "{init:?}: {}", p.initial());
            assert!(p.residual <= RESIDUAL_TOLERANCE);
        }
    }

    #[test]
    fn hand_check_first_step() {
        // p(3,2) = 2/3 p(4,1) + 1/3 p(2,3), p(2,3) = 1/3 p(3,2), p(4,1) = 1
        let crn = r_net(Exact::one());
        let space = enumerate(&crn, &[3, 2].into(), &Exact::one(), 100).unwrap();
        let p = absorption_probabilities(&space, x_took_over).unwrap();
        let at = |s: [u64; 2]| p.probabilities[space.index_of(&s.into()).unwrap()].clone();
        assert_eq!(at([4, 1]), Exact::one());
        assert_eq!(at([2, 3]), at([3, 2]) / Exact::from_integer(3.into()));
        assert_eq!(at([1, 4]), Exact::zero());
    }

    #[test]
    fn cap_is_enforced() {
        let crn = r_net(1.0);
        let err = enumerate(&crn, &[3, 2].into(), &1.0, 5).unwrap_err();
        assert!(matches!(err, OracleError::TooLarge { cap: 5 }));
        assert!(enumerate(&crn, &[3, 2].into(), &1.0, 6).is_ok());
    }

    #[test]
    fn cycle_without_absorption_is_rejected() {
        let toggle: Crn<f64> = CrnBuilder::new()
            .reaction(&[("A", 1)], &[("B", 1)], 1.0)
            .reaction(&[("B", 1)], &[("A", 1)], 1.0)
            .build()
            .unwrap();
        let space = enumerate(&toggle, &[1, 0].into(), &1.0, 10).unwrap();
        let err = absorption_probabilities(&space, |_| true).unwrap_err();
        assert!(matches!(err, OracleError::NoAbsorption { .. }));
    }

    #[test]
    fn settled_states_absorb_under_a_catalyst_toggle() {
        let game: Crn<Exact> = CrnBuilder::new()
            .reaction(&[("X", 2), ("Y", 1), ("A", 1)], &[("X", 3), ("A", 1)], Exact::one())
            .reaction(&[("X", 1), ("Y", 2), ("B", 1)], &[("Y", 3), ("B", 1)], Exact::one())
            .reaction(&[("A", 1)], &[("B", 1)], Exact::from_integer(5.into()))
            .reaction(&[("B", 1)], &[("A", 1)], Exact::from_integer(5.into()))
            .build()
            .unwrap();
        let init: CountVector = [3, 2, 1, 1].into();
        let plain = enumerate(&game, &init, &Exact::one(), 1000).unwrap();
        assert!(absorption_probabilities(&plain, x_took_over).is_err());
        let space = enumerate_settled(&game, &init, &Exact::one(), 1000, &[0, 1]).unwrap();
        let p = absorption_probabilities(&space, x_took_over).unwrap();
        let q = absorption_probabilities(&space, |s| s[0] == 0).unwrap();
        assert_eq!(p.initial() + q.initial(), Exact::one());
        assert!(p.initial() > Exact::zero() && p.initial() < Exact::one());
    }

    #[test]
    fn dense_and_sparse_agree() {
        let crn = r_net(1.0);
        let space = enumerate(&crn, &[40, 31].into(), &1.0, DEFAULT_STATE_CAP).unwrap();
        let transient: Vec<usize> = (0..space.len()).filter(|&i| !space.is_absorbing(i)).collect();
        let slot: HashMap<usize, usize> = transient.iter().enumerate().map(|(k, &i)| (i, k)).collect();
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut rhs: Vec<f64> = Vec::new();
        for &i in &transient {
            let mut row = vec![(slot[&i], 1.0)];
            let mut b = 0.0;
            for (j, p) in space.embedded_row(i) {
                match slot.get(&j) {
                    Some(&k) => row.push((k, -p)),
                    None if x_took_over(space.state(j)) => b += p,
                    None => {}
                }
            }
            row.sort_by_key(|e| e.0);
            rows.push(row);
            rhs.push(b);
        }
        let d = solve_dense(&rows, &rhs).unwrap();
        let s = solve_sparse(&rows, &rhs).unwrap();
        for (a, b) in d.iter().zip(&s) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn embedded_rows_are_stochastic() {
        let crn = r_net(1.0);
        let space = enumerate(&crn, &[9, 8].into(), &1.0, DEFAULT_STATE_CAP).unwrap();
        for i in 0..space.len() {
            if !space.is_absorbing(i) {
                let sum: f64 = space.embedded_row(i).iter().map(|(_, p)| p).sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
    }
}
