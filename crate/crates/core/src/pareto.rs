//! Dominance relations, non-dominated sorting and the bounded Pareto archive.
//!
//! Objective vectors are stored in maximization sense throughout: a larger
//! value is always better. Minimization problems are negated when a
//! [`Solution`] is built from an evaluation and negated back for reporting.

use serde::{Deserialize, Serialize};

use crate::density::FrontRanker;
use crate::error::{Error, Result};
use crate::rewards::unit_violation;

/// Raw constraint values at or below this are treated as satisfied.
pub const FEASIBILITY_TOL: f64 = 1e-12;

/// A candidate design together with its objectives and constraint state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub x: Vec<f64>,
    /// Objectives in maximization sense.
    pub obj: Vec<f64>,
    /// Raw constraint values, positive when violated.
    pub g: Vec<f64>,
    /// Scalar constraint violation, zero iff feasible.
    pub cv: f64,
}

impl Solution {
    /// Builds a solution whose violation is the unit-weight squared overshoot of `g`.
    pub fn new(x: Vec<f64>, obj: Vec<f64>, g: Vec<f64>) -> Self {
        let cv = unit_violation(&g);
        Solution { x, obj, g, cv }
    }

    pub fn unconstrained(x: Vec<f64>, obj: Vec<f64>) -> Self {
        Solution {
            x,
            obj,
            g: Vec::new(),
            cv: 0.0,
        }
    }

    /// Uses a caller-computed violation. `cv` is clamped at zero.
    pub fn with_cv(x: Vec<f64>, obj: Vec<f64>, g: Vec<f64>, cv: f64) -> Self {
        Solution {
            x,
            obj,
            g,
            cv: cv.max(0.0),
        }
    }

    /// Builds a solution from minimization-sense objectives.
    pub fn from_minimization(x: Vec<f64>, f: &[f64], g: Vec<f64>) -> Self {
        Solution::new(x, f.iter().map(|v| -v).collect(), g)
    }

    pub fn is_feasible(&self) -> bool {
        self.cv == 0.0
    }

    /// Objectives in minimization sense.
    pub fn minimization_objectives(&self) -> Vec<f64> {
        self.obj.iter().map(|v| -v).collect()
    }
}

/// `true` iff `a` is at least as good as `b` everywhere and strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> Result<bool> {
    if a.len() != b.len() {
        return Err(Error::usage(format!(
            "objective vectors differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    Ok(dominates_unchecked(a, b))
}

#[inline]
pub(crate) fn dominates_unchecked(a: &[f64], b: &[f64]) -> bool {
    debug_assert_eq!(a.len(), b.len());
    let mut strict = false;
    for (&ai, &bi) in a.iter().zip(b) {
        if ai < bi {
            return false;
        }
        if ai > bi {
            strict = true;
        }
    }
    strict
}

/// Feasibility first, then smaller violation, then plain dominance.
pub fn constrained_dominates(a: &Solution, b: &Solution) -> bool {
    match (a.is_feasible(), b.is_feasible()) {
        (true, false) => true,
        (false, true) => false,
        (false, false) => a.cv < b.cv,
        (true, true) => dominates_unchecked(&a.obj, &b.obj),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    #[default]
    Plain,
    Constrained,
}

impl Relation {
    pub fn dominates(self, a: &Solution, b: &Solution) -> bool {
        match self {
            Relation::Plain => dominates_unchecked(&a.obj, &b.obj),
            Relation::Constrained => constrained_dominates(a, b),
        }
    }

    /// Whether `a` makes `b` redundant: it dominates `b`, or is an exact duplicate.
    pub fn covers(self, a: &Solution, b: &Solution) -> bool {
        if self.dominates(a, b) {
            return true;
        }
        match self {
            Relation::Plain => a.obj == b.obj,
            Relation::Constrained => a.cv == b.cv && (!a.is_feasible() || a.obj == b.obj),
        }
    }
}

/// Fast non-dominated sorting over an arbitrary dominance predicate.
///
/// Indices within each front are ascending.
pub fn sort_fronts<F>(n: usize, dominates: F) -> Vec<Vec<usize>>
where
    F: Fn(usize, usize) -> bool,
{
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut counts = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates(i, j) {
                dominated_by[i].push(j);
                counts[j] += 1;
            } else if dominates(j, i) {
                dominated_by[j].push(i);
                counts[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| counts[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by[i] {
                counts[j] -= 1;
                if counts[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::replace(&mut current, next));
    }
    fronts
}

pub fn non_dominated_sort(pop: &[Solution], relation: Relation) -> Result<Vec<Vec<usize>>> {
    if pop.is_empty() {
        return Err(Error::usage("cannot sort an empty population"));
    }
    Ok(sort_fronts(pop.len(), |i, j| relation.dominates(&pop[i], &pop[j])))
}

/// Indices of the non-dominated members of `pop`, dropping later exact duplicates.
pub fn non_dominated_indices(pop: &[Solution], relation: Relation) -> Vec<usize> {
    let mut keep: Vec<usize> = Vec::new();
    for (i, s) in pop.iter().enumerate() {
        if keep.iter().any(|&k| relation.covers(&pop[k], s)) {
            continue;
        }
        keep.retain(|&k| !relation.dominates(s, &pop[k]));
        keep.push(i);
    }
    keep.sort_unstable();
    keep
}

/// Non-dominated union of several solution sets.
pub fn merge_fronts<'a, I>(sets: I, relation: Relation) -> Vec<Solution>
where
    I: IntoIterator<Item = &'a [Solution]>,
{
    let all: Vec<Solution> = sets.into_iter().flat_map(|s| s.iter().cloned()).collect();
    non_dominated_indices(&all, relation)
        .into_iter()
        .map(|i| all[i].clone())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InsertOutcome {
    /// The candidate was dominated by (or duplicated) an archive member.
    Dominated,
    /// Position of the candidate in the density ranking, best first. A
    /// position at or beyond the capacity means it was truncated away.
    Rank(usize),
}

/// A bounded buffer of mutually non-dominated solutions.
#[derive(Clone, Debug)]
pub struct ParetoArchive {
    capacity: Option<usize>,
    relation: Relation,
    members: Vec<Solution>,
}

impl ParetoArchive {
    pub fn new(capacity: usize, relation: Relation) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::usage("archive capacity must be positive"));
        }
        Ok(ParetoArchive {
            capacity: Some(capacity),
            relation,
            members: Vec::new(),
        })
    }

    pub fn unbounded(relation: Relation) -> Self {
        ParetoArchive {
            capacity: None,
            relation,
            members: Vec::new(),
        }
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn relation(&self) -> Relation {
        self.relation
    }

    pub fn members(&self) -> &[Solution] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn into_members(self) -> Vec<Solution> {
        self.members
    }

    /// Whether some member dominates or duplicates `s`.
    pub fn covers(&self, s: &Solution) -> bool {
        self.members.iter().any(|m| self.relation.covers(m, s))
    }

    /// Inserts `s`, removing members it dominates, without ranking or truncation.
    /// Returns whether `s` was kept.
    pub fn insert_unranked(&mut self, s: Solution) -> bool {
        if self.covers(&s) {
            return false;
        }
        let relation = self.relation;
        self.members.retain(|m| !relation.dominates(&s, m));
        self.members.push(s);
        true
    }

    /// Inserts `s`, re-ranks all members with `ranker` and truncates to capacity.
    pub fn insert(&mut self, s: Solution, ranker: &dyn FrontRanker) -> Result<InsertOutcome> {
        if self.covers(&s) {
            return Ok(InsertOutcome::Dominated);
        }
        let relation = self.relation;
        self.members.retain(|m| !relation.dominates(&s, m));
        self.members.push(s);
        let new_index = self.members.len() - 1;

        let objectives: Vec<&[f64]> = self.members.iter().map(|m| m.obj.as_slice()).collect();
        let rank = ranker.rank(&objectives)?;
        let position = rank
            .order
            .iter()
            .position(|&i| i == new_index)
            .expect("density rank is a permutation");

        let keep = self.capacity.unwrap_or(usize::MAX).min(self.members.len());
        let mut slots: Vec<Option<Solution>> = self.members.drain(..).map(Some).collect();
        self.members = rank.order[..keep]
            .iter()
            .map(|&i| slots[i].take().expect("index appears once"))
            .collect();
        Ok(InsertOutcome::Rank(position))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::CrowdingRanker;

    fn sol(obj: &[f64]) -> Solution {
        Solution::unconstrained(vec![], obj.to_vec())
    }

    fn sol_cv(obj: &[f64], cv: f64) -> Solution {
        Solution::with_cv(vec![], obj.to_vec(), vec![cv], cv)
    }

    #[test]
    fn dominance_examples() {
        assert!(dominates(&[2.0, 3.0], &[1.0, 2.0]).unwrap());
        assert!(!dominates(&[1.0, 2.0], &[1.0, 2.0]).unwrap());
        assert!(!dominates(&[3.0, 1.0], &[1.0, 3.0]).unwrap());
        assert!(dominates(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn constrained_dominance_examples() {
        assert!(constrained_dominates(&sol_cv(&[0.0, 0.0], 0.0), &sol_cv(&[5.0, 5.0], 0.5)));
        assert!(!constrained_dominates(&sol_cv(&[0.0, 0.0], 0.2), &sol_cv(&[0.0, 0.0], 0.1)));
        assert!(constrained_dominates(&sol_cv(&[2.0, 2.0], 0.0), &sol_cv(&[1.0, 1.0], 0.0)));
    }

    #[test]
    fn solution_feasibility_tracks_constraints() {
        let s = Solution::new(vec![], vec![0.0, 0.0], vec![-1.0, 0.0, 1e-13]);
        assert!(s.is_feasible());
        let s = Solution::new(vec![], vec![0.0, 0.0], vec![-1.0, 0.5]);
        assert!(!s.is_feasible());
        assert!((s.cv - 0.25).abs() < 1e-15);
    }

    #[test]
    fn sort_small_population() {
        let pop = vec![sol(&[1.0, 1.0]), sol(&[2.0, 2.0]), sol(&[0.0, 3.0])];
        let fronts = non_dominated_sort(&pop, Relation::Plain).unwrap();
        assert_eq!(fronts, vec![vec![1, 2], vec![0]]);

        let fronts = non_dominated_sort(&pop[..1], Relation::Plain).unwrap();
        assert_eq!(fronts, vec![vec![0]]);

        let antichain = vec![sol(&[0.0, 2.0]), sol(&[1.0, 1.0]), sol(&[2.0, 0.0])];
        assert_eq!(
            non_dominated_sort(&antichain, Relation::Plain).unwrap(),
            vec![vec![0, 1, 2]]
        );
        assert!(non_dominated_sort(&[], Relation::Plain).is_err());
    }

    #[test]
    fn archive_insert_examples() {
        let ranker = CrowdingRanker;
        let mut a = ParetoArchive::new(4, Relation::Plain).unwrap();
        a.insert(sol(&[1.0, 1.0]), &ranker).unwrap();
        let out = a.insert(sol(&[2.0, 2.0]), &ranker).unwrap();
        assert_eq!(out, InsertOutcome::Rank(0));
        assert_eq!(a.members().len(), 1);
        assert_eq!(a.members()[0].obj, vec![2.0, 2.0]);

        let out = a.insert(sol(&[1.0, 1.0]), &ranker).unwrap();
        assert_eq!(out, InsertOutcome::Dominated);
        assert_eq!(a.members().len(), 1);

        let mut a = ParetoArchive::new(2, Relation::Plain).unwrap();
        a.insert(sol(&[0.0, 2.0]), &ranker).unwrap();
        a.insert(sol(&[2.0, 0.0]), &ranker).unwrap();
        let out = a.insert(sol(&[1.0, 1.0]), &ranker).unwrap();
        assert_eq!(out, InsertOutcome::Rank(2));
        assert_eq!(a.len(), 2);
        assert!(a.members().iter().all(|m| m.obj != vec![1.0, 1.0]));
    }

    #[test]
    fn duplicates_are_rejected() {
        let mut a = ParetoArchive::new(4, Relation::Plain).unwrap();
        a.insert(sol(&[1.0, 0.0]), &CrowdingRanker).unwrap();
        assert_eq!(
            a.insert(sol(&[1.0, 0.0]), &CrowdingRanker).unwrap(),
            InsertOutcome::Dominated
        );
        assert_eq!(a.len(), 1);
    }

    #[test]
    fn constrained_archive_prefers_feasible() {
        let mut a = ParetoArchive::new(4, Relation::Constrained).unwrap();
        a.insert(sol_cv(&[5.0, 5.0], 0.3), &CrowdingRanker).unwrap();
        let out = a.insert(sol_cv(&[0.0, 0.0], 0.0), &CrowdingRanker).unwrap();
        assert_eq!(out, InsertOutcome::Rank(0));
        assert_eq!(a.len(), 1);
        assert!(a.members()[0].is_feasible());
        let out = a.insert(sol_cv(&[9.0, 9.0], 0.1), &CrowdingRanker).unwrap();
        assert_eq!(out, InsertOutcome::Dominated);
    }

    #[test]
    fn merge_keeps_only_non_dominated() {
        let a = vec![sol(&[1.0, 0.0]), sol(&[0.0, 1.0])];
        let b = vec![sol(&[0.5, 0.5]), sol(&[2.0, 0.0]), sol(&[0.0, 1.0])];
        let merged = merge_fronts([a.as_slice(), b.as_slice()], Relation::Plain);
        let objs: Vec<_> = merged.iter().map(|s| s.obj.clone()).collect();
        assert_eq!(objs, vec![vec![0.0, 1.0], vec![0.5, 0.5], vec![2.0, 0.0]]);
    }
}
