//! Branch-and-bound over small integer assignments whose continuous part is
//! a convex QP.
//!
//! Integer variables take values from finite admissible lists. A fixed
//! (partial) assignment contributes linear equalities to a QP template via a
//! [`CouplingRule`]; the QP with only the equalities implied by a partial
//! assignment is a relaxation of every completion, so its optimum is a valid
//! lower bound for pruning.

use nalgebra::{DMatrix, DVector};

use super::{QpProblem, QpSettings, QpSolution, QpSolver, QpStatus};
use crate::exec::Execution;

pub trait CouplingRule: Send + Sync {
    /// Cheap feasibility test on an assignment prefix. Must accept every
    /// prefix of a feasible complete assignment.
    fn partial_ok(&self, assigned: &[i64]) -> bool;

    fn complete_ok(&self, assignment: &[i64]) -> bool {
        self.partial_ok(assignment)
    }

    /// Equalities `A x = b` over the `n` continuous variables implied by the
    /// assigned prefix.
    fn equalities(&self, assigned: &[i64], n: usize) -> (DMatrix<f64>, DVector<f64>);

    /// Whether to spend a QP solve on a lower bound after `depth` variables
    /// have been fixed.
    fn wants_bound(&self, _depth: usize) -> bool {
        true
    }
}

pub struct MiqpProblem<'a> {
    pub template: QpProblem,
    /// Admissible values per integer variable; sorted ascending on use.
    pub admissible: Vec<Vec<i64>>,
    pub rule: &'a dyn CouplingRule,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct MiqpSettings {
    pub qp: QpSettings,
    pub execution: Execution,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MiqpStatus {
    Optimal,
    Infeasible,
}

#[derive(Clone, Debug)]
pub struct MiqpResult {
    pub status: MiqpStatus,
    pub assignment: Vec<i64>,
    pub solution: Option<QpSolution>,
    pub nodes: usize,
    pub qp_solves: usize,
}

impl MiqpResult {
    pub fn objective(&self) -> Option<f64> {
        self.solution.as_ref().map(|s| s.objective)
    }
}

fn tie_tol(cost: f64) -> f64 {
    1e-9 * cost.abs().max(1.0)
}

/// True when `cost` beats `best` by more than the tie tolerance. Candidates
/// are visited in lexicographic order, so ties keep the smaller assignment.
fn improves(cost: f64, best: Option<f64>) -> bool {
    match best {
        None => true,
        Some(b) => cost < b - tie_tol(b),
    }
}

impl MiqpProblem<'_> {
    fn sorted_lists(&self) -> Vec<Vec<i64>> {
        self.admissible
            .iter()
            .map(|l| {
                let mut l = l.clone();
                l.sort_unstable();
                l.dedup();
                l
            })
            .collect()
    }

    fn restricted(&self, assigned: &[i64]) -> QpProblem {
        let n = self.template.dim();
        let (a, b) = self.rule.equalities(assigned, n);
        self.template
            .clone()
            .with_equalities(a, b)
            .expect("coupling rule produced equalities of the wrong shape")
    }

    /// Solves the QP for a complete assignment; `None` unless optimal.
    fn leaf(&self, solver: &mut QpSolver, assignment: &[i64]) -> Option<QpSolution> {
        let sol = solver.solve(&self.restricted(assignment));
        sol.is_optimal().then_some(sol)
    }

    /// All complete assignments accepted by the rule, in lexicographic order.
    pub fn feasible_assignments(&self) -> Vec<Vec<i64>> {
        let lists = self.sorted_lists();
        let mut out = Vec::new();
        let mut cur = Vec::with_capacity(lists.len());
        fn rec(p: &MiqpProblem, lists: &[Vec<i64>], cur: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
            if cur.len() == lists.len() {
                if p.rule.complete_ok(cur) {
                    out.push(cur.clone());
                }
                return;
            }
            for &v in &lists[cur.len()] {
                cur.push(v);
                if p.rule.partial_ok(cur) {
                    rec(p, lists, cur, out);
                }
                cur.pop();
            }
        }
        rec(self, &lists, &mut cur, &mut out);
        out
    }
}

/// Depth-first branch-and-bound in lexicographic order.
pub fn solve_miqp(p: &MiqpProblem, settings: &MiqpSettings) -> MiqpResult {
    struct Search<'p, 'a> {
        p: &'p MiqpProblem<'a>,
        lists: Vec<Vec<i64>>,
        solver: QpSolver,
        best: Option<(Vec<i64>, QpSolution)>,
        nodes: usize,
        qp_solves: usize,
    }

    impl Search<'_, '_> {
        fn best_cost(&self) -> Option<f64> {
            self.best.as_ref().map(|(_, s)| s.objective)
        }

        fn visit(&mut self, cur: &mut Vec<i64>) {
            self.nodes += 1;
            let depth = cur.len();
            if depth == self.lists.len() {
                if !self.p.rule.complete_ok(cur) {
                    return;
                }
                self.qp_solves += 1;
                if let Some(sol) = self.p.leaf(&mut self.solver, cur) {
                    if improves(sol.objective, self.best_cost()) {
                        self.best = Some((cur.clone(), sol));
                    }
                }
                return;
            }
            for k in 0..self.lists[depth].len() {
                cur.push(self.lists[depth][k]);
                if self.p.rule.partial_ok(cur) && !self.prune(cur) {
                    self.visit(cur);
                }
                cur.pop();
            }
        }

        fn prune(&mut self, cur: &[i64]) -> bool {
            let depth = cur.len();
            if depth == self.lists.len() || !self.p.rule.wants_bound(depth) {
                return false;
            }
            self.qp_solves += 1;
            let relax = self.solver.solve(&self.p.restricted(cur));
            match relax.status {
                QpStatus::PrimalInfeasible => true,
                QpStatus::MaxIterations => false,
                QpStatus::Optimal => match self.best_cost() {
                    // slack absorbs solver error in the bound
                    Some(best) => {
                        let bound = relax.objective - 1e-7 * relax.objective.abs().max(1.0);
                        !improves(bound, Some(best))
                    }
                    None => false,
                },
            }
        }
    }

    let mut search = Search {
        p,
        lists: p.sorted_lists(),
        solver: QpSolver::new(settings.qp),
        best: None,
        nodes: 0,
        qp_solves: 0,
    };
    let mut cur = Vec::new();
    search.visit(&mut cur);
    finish(search.best, search.nodes, search.qp_solves)
}

/// Exhaustive enumeration of every feasible assignment. Candidate QPs are
/// independent and are solved under `settings.execution`; the reduction is
/// sequential so the answer does not depend on the strategy.
pub fn enumerate_miqp(p: &MiqpProblem, settings: &MiqpSettings) -> MiqpResult {
    let candidates = p.feasible_assignments();
    let qp = settings.qp;
    let solutions = settings.execution.map(&candidates, |a| {
        let mut solver = QpSolver::new(qp);
        p.leaf(&mut solver, a)
    });
    let mut best: Option<(Vec<i64>, QpSolution)> = None;
    for (a, sol) in candidates.iter().zip(solutions) {
        if let Some(sol) = sol {
            if improves(sol.objective, best.as_ref().map(|(_, s)| s.objective)) {
                best = Some((a.clone(), sol));
            }
        }
    }
    let n = candidates.len();
    finish(best, n, n)
}

fn finish(best: Option<(Vec<i64>, QpSolution)>, nodes: usize, qp_solves: usize) -> MiqpResult {
    match best {
        Some((assignment, sol)) => MiqpResult {
            status: MiqpStatus::Optimal,
            assignment,
            solution: Some(sol),
            nodes,
            qp_solves,
        },
        None => MiqpResult {
            status: MiqpStatus::Infeasible,
            assignment: Vec::new(),
            solution: None,
            nodes,
            qp_solves,
        },
    }
}
