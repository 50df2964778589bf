//! Histories, the prefix-closed restricted game and per-type stage matrices.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::defaults::ContinuationTable;
use crate::environment::{GoalId, NodeId, Scenario};

/// Separator used in the string form of a history.
pub const HISTORY_SEP: char = '>';

/// A public history: the Attacker's positions from the start node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct History(pub Vec<NodeId>);

impl History {
    pub fn time(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn last(&self) -> NodeId {
        *self.0.last().expect("histories are nonempty")
    }

    /// `self` is an initial segment of `other` (reflexive).
    pub fn is_prefix_of(&self, other: &History) -> bool {
        self.0.len() <= other.0.len() && other.0[..self.0.len()] == self.0[..]
    }

    pub fn to_key(&self, s: &Scenario) -> String {
        let names: Vec<&str> = self.0.iter().map(|&v| s.name(v)).collect();
        names.join(&HISTORY_SEP.to_string())
    }

    pub fn parse(key: &str, s: &Scenario) -> Option<History> {
        key.split(HISTORY_SEP)
            .map(|name| s.node(name))
            .collect::<Option<Vec<_>>>()
            .map(History)
    }
}

/// Free-function form of [`History::is_prefix_of`].
pub fn is_prefix(a: &History, b: &History) -> bool {
    a.is_prefix_of(b)
}

/// Index of a history inside a [`RestrictedGame`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HistId(pub usize);

impl fmt::Display for HistId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "h{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistoryClass {
    Interior,
    GoalTerminal,
    Frontier,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("history {0} is not in the restricted game")]
    NotInGame(String),
    #[error("history {history} is not a frontier history for goal {goal}")]
    NotFrontier { history: String, goal: String },
    #[error("goal {goal} is unreachable from the end of frontier history {history}")]
    UnreachableGoal { history: String, goal: String },
}

/// Rows are Defender allocations (all goals in order), columns the
/// Attacker's successor nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct StageMatrix {
    pub columns: Vec<NodeId>,
    pub entries: Vec<Vec<f64>>,
}

impl StageMatrix {
    pub fn rows(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, defender: GoalId, col: usize) -> f64 {
        self.entries[defender.0][col]
    }
}

const TERMINAL: u8 = 1;
const LEGAL: u8 = 2;
const VARS: u8 = 4;

#[derive(Debug, Clone)]
struct HistNode {
    parent: Option<HistId>,
    last: NodeId,
    depth: usize,
    children: Vec<HistId>,
}

/// A prefix-closed, finite set of histories with per-type bookkeeping.
///
/// For each type the game tracks whether a history is goal-terminal (some
/// position equals the goal), legal (every move is in that type's action
/// set) and *active*: legal, reachable from its goal-viable parent and either
/// non-terminal or the root. Sequence-form variables exist exactly at active
/// histories. Moves into nodes from which the goal can no longer be reached
/// are never active.
#[derive(Debug, Clone)]
pub struct RestrictedGame<'a> {
    scenario: &'a Scenario,
    defaults: Arc<ContinuationTable>,
    nodes: Vec<HistNode>,
    flags: Vec<u8>,
}

impl<'a> RestrictedGame<'a> {
    /// All legal histories up to time `horizon`; branches where no type is
    /// active are not extended.
    pub fn init(scenario: &'a Scenario, defaults: impl Into<Arc<ContinuationTable>>, horizon: usize) -> Self {
        let defaults = defaults.into();
        let mut rg = RestrictedGame {
            scenario,
            defaults,
            nodes: Vec::new(),
            flags: Vec::new(),
        };
        rg.push_root();
        let mut level = vec![HistId(0)];
        for _ in 0..horizon {
            let mut next_level = Vec::new();
            for h in level {
                if rg.any_active(h) {
                    next_level.extend(rg.add_children(h));
                }
            }
            level = next_level;
        }
        rg
    }

    /// Rebuilds a game from an explicit prefix-closed list of histories.
    pub fn from_histories(
        scenario: &'a Scenario,
        defaults: impl Into<Arc<ContinuationTable>>,
        histories: &[History],
    ) -> Result<Self, GameError> {
        let defaults = defaults.into();
        let mut rg = RestrictedGame {
            scenario,
            defaults,
            nodes: Vec::new(),
            flags: Vec::new(),
        };
        rg.push_root();
        let mut sorted: Vec<&History> = histories.iter().collect();
        sorted.sort_by_key(|h| h.0.len());
        for h in sorted {
            let key = h.to_key(scenario);
            if h.0.first() != Some(&scenario.start()) {
                return Err(GameError::NotInGame(key));
            }
            if h.0.len() == 1 {
                continue;
            }
            let parent = History(h.0[..h.0.len() - 1].to_vec());
            let pid = rg.find(&parent).ok_or_else(|| GameError::NotInGame(key.clone()))?;
            let last = h.last();
            if rg.child(pid, last).is_some() {
                continue;
            }
            if !rg.successors(pid).contains(&last) {
                return Err(GameError::NotInGame(key));
            }
            rg.push_child(pid, last);
        }
        let lasts: Vec<NodeId> = rg.nodes.iter().map(|n| n.last).collect();
        for node in &mut rg.nodes {
            node.children.sort_by_key(|c| lasts[c.0]);
        }
        Ok(rg)
    }

    pub fn scenario(&self) -> &'a Scenario {
        self.scenario
    }

    pub fn defaults(&self) -> &ContinuationTable {
        &self.defaults
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> HistId {
        HistId(0)
    }

    pub fn ids(&self) -> impl DoubleEndedIterator<Item = HistId> + '_ {
        (0..self.nodes.len()).map(HistId)
    }

    pub fn parent(&self, h: HistId) -> Option<HistId> {
        self.nodes[h.0].parent
    }

    pub fn children(&self, h: HistId) -> &[HistId] {
        &self.nodes[h.0].children
    }

    pub fn child(&self, h: HistId, next: NodeId) -> Option<HistId> {
        self.nodes[h.0]
            .children
            .iter()
            .copied()
            .find(|c| self.nodes[c.0].last == next)
    }

    pub fn last(&self, h: HistId) -> NodeId {
        self.nodes[h.0].last
    }

    pub fn depth(&self, h: HistId) -> usize {
        self.nodes[h.0].depth
    }

    pub fn history(&self, h: HistId) -> History {
        let mut seq = Vec::with_capacity(self.nodes[h.0].depth + 1);
        let mut cur = Some(h);
        while let Some(id) = cur {
            seq.push(self.nodes[id.0].last);
            cur = self.nodes[id.0].parent;
        }
        seq.reverse();
        History(seq)
    }

    pub fn key(&self, h: HistId) -> String {
        self.history(h).to_key(self.scenario)
    }

    pub fn find(&self, history: &History) -> Option<HistId> {
        let (first, rest) = history.0.split_first()?;
        if *first != self.last(self.root()) {
            return None;
        }
        rest.iter()
            .try_fold(self.root(), |h, &next| self.child(h, next))
    }

    fn flag(&self, h: HistId, g: GoalId) -> u8 {
        self.flags[h.0 * self.scenario.goal_count() + g.0]
    }

    /// Some position of `h` is the goal of type `g`.
    pub fn is_goal_terminal(&self, h: HistId, g: GoalId) -> bool {
        self.flag(h, g) & TERMINAL != 0
    }

    /// Every move of `h` is allowed for type `g`.
    pub fn is_legal(&self, h: HistId, g: GoalId) -> bool {
        self.flag(h, g) & LEGAL != 0
    }

    /// Type `g` carries sequence-form variables at `h`.
    pub fn has_vars(&self, h: HistId, g: GoalId) -> bool {
        self.flag(h, g) & VARS != 0
    }

    /// Type `g` has variables at `h` and has not yet arrived.
    pub fn is_active(&self, h: HistId, g: GoalId) -> bool {
        self.has_vars(h, g) && !self.is_goal_terminal(h, g)
    }

    fn any_active(&self, h: HistId) -> bool {
        self.scenario.goals().any(|g| self.is_active(h, g))
    }

    pub fn classify(&self, g: GoalId, h: HistId) -> HistoryClass {
        if self.is_goal_terminal(h, g) {
            HistoryClass::GoalTerminal
        } else if self.nodes[h.0].children.is_empty() {
            HistoryClass::Frontier
        } else {
            HistoryClass::Interior
        }
    }

    /// [`RestrictedGame::classify`] for an explicit history.
    pub fn classify_history(&self, g: GoalId, history: &History) -> Result<HistoryClass, GameError> {
        let h = self
            .find(history)
            .ok_or_else(|| GameError::NotInGame(history.to_key(self.scenario)))?;
        Ok(self.classify(g, h))
    }

    /// Frontier histories at which type `g` is active.
    pub fn active_frontier(&self, g: GoalId) -> impl Iterator<Item = HistId> + '_ {
        self.ids()
            .filter(move |&h| self.is_active(h, g) && self.nodes[h.0].children.is_empty())
    }

    /// Columns of type `g`'s stage matrix at `h`: its action set, restricted
    /// to successors from which the goal stays reachable.
    pub fn columns(&self, g: GoalId, h: HistId) -> Vec<NodeId> {
        let at = self.last(h);
        if self.is_goal_terminal(h, g) {
            return self.scenario.action_set(g, at);
        }
        self.scenario
            .action_set(g, at)
            .into_iter()
            .filter(|&v| self.defaults.viable(g, v))
            .collect()
    }

    /// Continuation cost of type `g` at a frontier history.
    pub fn continuation_cost(&self, g: GoalId, h: HistId) -> Result<f64, GameError> {
        if self.classify(g, h) != HistoryClass::Frontier {
            return Err(GameError::NotFrontier {
                history: self.key(h),
                goal: self.scenario.goal_name(g).to_string(),
            });
        }
        let v = self.defaults.value(g, self.last(h));
        if v.is_finite() {
            Ok(v)
        } else {
            Err(GameError::UnreachableGoal {
                history: self.key(h),
                goal: self.scenario.goal_name(g).to_string(),
            })
        }
    }

    /// Stage-cost matrix of type `g` at `h`.
    ///
    /// The traversal weight lands on the row that allocates to `g`; the
    /// initial allocation is added to every entry at the root; at frontier
    /// histories each column also carries the continuation value of its
    /// successor. Goal-terminal histories (other than the root) give zeros.
    pub fn stage_matrix(&self, g: GoalId, h: HistId) -> StageMatrix {
        let s = self.scenario;
        let at = self.last(h);
        let columns = self.columns(g, h);
        let rows = s.goal_count();
        let base = if h == self.root() { s.allocation(g) } else { 0.0 };
        if self.is_goal_terminal(h, g) {
            return StageMatrix {
                entries: vec![vec![base; columns.len()]; rows],
                columns,
            };
        }
        let frontier = self.nodes[h.0].children.is_empty();
        let mut entries = vec![vec![base; columns.len()]; rows];
        for (c, &next) in columns.iter().enumerate() {
            let tail = if frontier { self.defaults.value(g, next) } else { 0.0 };
            let w = s.weight(at, next).unwrap_or(0.0);
            for (a, row) in entries.iter_mut().enumerate() {
                row[c] += tail;
                if a == g.0 {
                    row[c] += w;
                }
            }
        }
        StageMatrix { columns, entries }
    }

    /// Successor nodes created when `h` is extended: the union of the action
    /// sets of the types for which `h` is legal.
    pub fn successors(&self, h: HistId) -> Vec<NodeId> {
        let s = self.scenario;
        let at = self.last(h);
        let mut out: Vec<NodeId> = s.out_edges(at).iter().map(|&(v, _)| v).collect();
        if let Some(g) = s.goal_at(at) {
            if self.is_legal(h, g) && !out.contains(&at) {
                out.push(at);
                out.sort();
            }
        }
        out
    }

    /// Adds one step below each listed history that has no children yet.
    /// Returns the number of histories added.
    pub fn expand(&mut self, frontier: &[HistId]) -> usize {
        let mut sorted = frontier.to_vec();
        sorted.sort();
        sorted.dedup();
        let before = self.nodes.len();
        for h in sorted {
            if self.nodes[h.0].children.is_empty() {
                self.add_children(h);
            }
        }
        self.nodes.len() - before
    }

    fn push_root(&mut self) {
        let s = self.scenario;
        let start = s.start();
        self.nodes.push(HistNode {
            parent: None,
            last: start,
            depth: 0,
            children: Vec::new(),
        });
        for g in s.goals() {
            let mut f = LEGAL;
            if s.goal_node(g) == start {
                f |= TERMINAL;
            }
            if self.defaults.viable(g, start) {
                f |= VARS;
            }
            self.flags.push(f);
        }
    }

    fn push_child(&mut self, parent: HistId, next: NodeId) -> HistId {
        let s = self.scenario;
        let id = HistId(self.nodes.len());
        let depth = self.nodes[parent.0].depth + 1;
        let at = self.nodes[parent.0].last;
        for g in s.goals() {
            let pf = self.flag(parent, g);
            let mut f = 0;
            if pf & TERMINAL != 0 || s.goal_node(g) == next {
                f |= TERMINAL;
            }
            if pf & LEGAL != 0 && s.action_set(g, at).contains(&next) {
                f |= LEGAL;
            }
            let parent_active = pf & VARS != 0 && pf & TERMINAL == 0;
            if parent_active && f & LEGAL != 0 && f & TERMINAL == 0 && self.defaults.viable(g, next) {
                f |= VARS;
            }
            self.flags.push(f);
        }
        self.nodes.push(HistNode {
            parent: Some(parent),
            last: next,
            depth,
            children: Vec::new(),
        });
        self.nodes[parent.0].children.push(id);
        id
    }

    fn add_children(&mut self, h: HistId) -> Vec<HistId> {
        self.successors(h)
            .into_iter()
            .map(|v| self.push_child(h, v))
            .collect()
    }

    /// Checks prefix closure and the child index.
    pub fn check_prefix_closed(&self) -> bool {
        self.ids().all(|h| {
            let hist = self.history(h);
            (1..=hist.0.len()).all(|n| self.find(&History(hist.0[..n].to_vec())).is_some())
                && self.find(&hist) == Some(h)
        })
    }
}
