//! Classic discrete planners (vanilla, weighted, best-first and beam A*) with
//! optional guidance costs, and the Dijkstra ground-truth oracle.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt;
use std::str::FromStr;

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{heuristic, GridError, GridMap, GuidanceMap, Node, ProblemInstance};

/// g_ratio of vanilla A*.
pub const VANILLA_G_RATIO: f32 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error("g_ratio must lie in [0, 1], got {0}")]
    InvalidGRatio(f32),
    #[error("beam width must be positive")]
    ZeroBeamWidth,
    #[error("policy expects guidance: {expected}, but guidance was {}", if *.got { "supplied" } else { "missing" })]
    GuidanceMismatch { expected: bool, got: bool },
    #[error("guidance is {got_w}x{got_h} but the map is {want_w}x{want_h}")]
    DimensionMismatch {
        want_w: usize,
        want_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchVariant {
    Vanilla,
    Weighted,
    BestFirst,
    Beam,
}

impl SearchVariant {
    pub const ALL: [SearchVariant; 4] = [
        SearchVariant::Vanilla,
        SearchVariant::Weighted,
        SearchVariant::BestFirst,
        SearchVariant::Beam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SearchVariant::Vanilla => "vanilla",
            SearchVariant::Weighted => "weighted",
            SearchVariant::BestFirst => "best_first",
            SearchVariant::Beam => "beam",
        }
    }
}

impl fmt::Display for SearchVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SearchVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vanilla" => Ok(SearchVariant::Vanilla),
            "weighted" => Ok(SearchVariant::Weighted),
            "best_first" | "best-first" => Ok(SearchVariant::BestFirst),
            "beam" => Ok(SearchVariant::Beam),
            other => Err(format!("unknown search variant `{other}`")),
        }
    }
}

/// Node-selection rule of a planner.
///
/// The variant is derived from the parameters rather than stored, so a
/// policy with `g_ratio == 0` is always best-first and one with
/// `g_ratio == 0.5` and no guidance is always vanilla.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchPolicy {
    g_ratio: f32,
    beam_width: Option<usize>,
    use_guidance: bool,
    placement: GuidancePlacement,
}

impl SearchPolicy {
    pub fn vanilla() -> Self {
        Self {
            g_ratio: VANILLA_G_RATIO,
            beam_width: None,
            use_guidance: false,
            placement: GuidancePlacement::Heuristic,
        }
    }

    pub fn weighted(g_ratio: f32) -> Result<Self, SearchError> {
        check_g_ratio(g_ratio)?;
        Ok(Self {
            g_ratio,
            beam_width: None,
            use_guidance: false,
            placement: GuidancePlacement::Heuristic,
        })
    }

    pub fn best_first() -> Self {
        Self {
            g_ratio: 0.0,
            beam_width: None,
            use_guidance: false,
            placement: GuidancePlacement::Heuristic,
        }
    }

    pub fn beam(g_ratio: f32, beam_width: usize) -> Result<Self, SearchError> {
        check_g_ratio(g_ratio)?;
        if beam_width == 0 {
            return Err(SearchError::ZeroBeamWidth);
        }
        Ok(Self {
            g_ratio,
            beam_width: Some(beam_width),
            use_guidance: false,
            placement: GuidancePlacement::Heuristic,
        })
    }

    /// Builds the policy a named variant stands for. `g_ratio` is ignored by
    /// vanilla and best-first; `beam_width` is only read by beam.
    pub fn for_variant(
        variant: SearchVariant,
        g_ratio: f32,
        beam_width: usize,
    ) -> Result<Self, SearchError> {
        match variant {
            SearchVariant::Vanilla => Ok(Self::vanilla()),
            SearchVariant::Weighted => Self::weighted(g_ratio),
            SearchVariant::BestFirst => Ok(Self::best_first()),
            SearchVariant::Beam => Self::beam(g_ratio, beam_width),
        }
    }

    pub fn with_guidance(mut self, use_guidance: bool) -> Self {
        self.use_guidance = use_guidance;
        self
    }

    pub fn with_placement(mut self, placement: GuidancePlacement) -> Self {
        self.placement = placement;
        self
    }

    pub fn placement(&self) -> GuidancePlacement {
        self.placement
    }

    pub fn g_ratio(&self) -> f32 {
        self.g_ratio
    }

    pub fn beam_width(&self) -> Option<usize> {
        self.beam_width
    }

    pub fn use_guidance(&self) -> bool {
        self.use_guidance
    }

    pub fn variant(&self) -> SearchVariant {
        if self.beam_width.is_some() {
            SearchVariant::Beam
        } else if self.g_ratio == 0.0 {
            SearchVariant::BestFirst
        } else if self.g_ratio == VANILLA_G_RATIO && !self.use_guidance {
            SearchVariant::Vanilla
        } else {
            SearchVariant::Weighted
        }
    }
}

fn check_g_ratio(g_ratio: f32) -> Result<(), SearchError> {
    if (0.0..=1.0).contains(&g_ratio) {
        Ok(())
    } else {
        Err(SearchError::InvalidGRatio(g_ratio))
    }
}

/// Where guidance costs enter the selection score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidancePlacement {
    /// `f = g_ratio * g + (1 - g_ratio) * (h + c)`: a per-node term next to the heuristic.
    #[default]
    Heuristic,
    /// `g` accumulates the cost of every entered node.
    CostToCome,
}

impl GuidancePlacement {
    pub fn name(self) -> &'static str {
        match self {
            GuidancePlacement::Heuristic => "heuristic",
            GuidancePlacement::CostToCome => "cost_to_come",
        }
    }

    /// Part of `cost` charged on entering a node.
    #[inline]
    pub fn entry_cost<T: Float>(self, cost: T) -> T {
        match self {
            GuidancePlacement::Heuristic => T::zero(),
            GuidancePlacement::CostToCome => cost,
        }
    }

    /// Heuristic term of the score of a node with heuristic `h` and guidance `cost`.
    #[inline]
    pub fn heuristic_term<T: Float>(self, h: T, cost: T) -> T {
        match self {
            GuidancePlacement::Heuristic => h + cost,
            GuidancePlacement::CostToCome => h,
        }
    }
}

impl fmt::Display for GuidancePlacement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GuidancePlacement {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "heuristic" => Ok(GuidancePlacement::Heuristic),
            "cost_to_come" | "cost-to-come" | "g" => Ok(GuidancePlacement::CostToCome),
            other => Err(format!("unknown guidance placement `{other}`")),
        }
    }
}

/// Cost-to-come after entering a cell with guidance cost `cost` from a
/// node whose cost-to-come is `g_parent`. Shared by the classic and the
/// differentiable planner so that both produce bit-identical scores.
#[inline]
pub fn step_cost<T: Float>(g_parent: T, cost: T) -> T {
    g_parent + T::one() + cost
}

/// Selection score `g_ratio * g + (1 - g_ratio) * h`.
#[inline]
pub fn f_score<T: Float>(g_ratio: T, g: T, h: T) -> T {
    g_ratio * g + (T::one() - g_ratio) * h
}

/// Open-list key: lower score first, then row-major index (lexicographic
/// `(row, col)`).
#[derive(Debug, Clone, Copy)]
struct OpenKey {
    f: f32,
    index: usize,
}

impl PartialEq for OpenKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for OpenKey {}

impl PartialOrd for OpenKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OpenKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.f
            .total_cmp(&other.f)
            .then(self.index.cmp(&other.index))
    }
}

/// Outcome of one planning episode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchTrace {
    pub width: usize,
    pub height: usize,
    /// Every popped node (row-major).
    pub closed: Vec<bool>,
    /// Nodes on the returned path (row-major); all false on failure.
    pub path: Vec<bool>,
    /// Popped nodes in pop order.
    pub expanded: Vec<Node>,
    /// Path from start to goal; empty on failure.
    pub path_nodes: Vec<Node>,
    pub explorations: usize,
    pub path_length: usize,
    pub success: bool,
}

/// Runs the planner described by `policy` on `instance`.
pub fn plan(
    instance: &ProblemInstance,
    policy: &SearchPolicy,
    guidance: Option<&GuidanceMap>,
) -> Result<SearchTrace, SearchError> {
    if policy.use_guidance != guidance.is_some() {
        return Err(SearchError::GuidanceMismatch {
            expected: policy.use_guidance,
            got: guidance.is_some(),
        });
    }
    let map = &instance.map;
    if let Some(g) = guidance {
        check_dims(map, g.width(), g.height())?;
    }
    map.check_free(instance.start)?;
    map.check_free(instance.goal)?;
    Ok(plan_with_costs(
        map,
        instance.start,
        instance.goal,
        policy.g_ratio,
        policy.beam_width,
        guidance.map(|g| (g.values(), policy.placement)),
    ))
}

pub(crate) fn check_dims(map: &GridMap, width: usize, height: usize) -> Result<(), SearchError> {
    if map.width() != width || map.height() != height {
        return Err(SearchError::DimensionMismatch {
            want_w: map.width(),
            want_h: map.height(),
            got_w: width,
            got_h: height,
        });
    }
    Ok(())
}

/// Core A* loop on validated inputs, with optional guidance costs and their placement.
pub(crate) fn plan_with_costs(
    map: &GridMap,
    start: Node,
    goal: Node,
    g_ratio: f32,
    beam_width: Option<usize>,
    guidance: Option<(&[f32], GuidancePlacement)>,
) -> SearchTrace {
    let n = map.len();
    let mut g = vec![0.0f32; n];
    let mut f = vec![0.0f32; n];
    let mut parent = vec![usize::MAX; n];
    let mut in_open = vec![false; n];
    let mut closed = vec![false; n];
    let mut open: BTreeSet<OpenKey> = BTreeSet::new();
    let mut expanded = Vec::new();

    let start_i = map.index(start);
    let goal_i = map.index(goal);
    let (costs, placement) = guidance.unwrap_or((&[], GuidancePlacement::Heuristic));
    let cost = |i: usize| costs.get(i).copied().unwrap_or(0.0);
    let h = |i: usize| placement.heuristic_term(heuristic(map.node(i), goal) as f32, cost(i));

    f[start_i] = f_score(g_ratio, 0.0, h(start_i));
    open.insert(OpenKey {
        f: f[start_i],
        index: start_i,
    });
    in_open[start_i] = true;

    let mut success = false;
    while let Some(key) = open.pop_first() {
        let u = key.index;
        in_open[u] = false;
        closed[u] = true;
        expanded.push(map.node(u));
        if u == goal_i {
            success = true;
            break;
        }
        let g_u = g[u];
        map.for_each_neighbor(u, |w| {
            if closed[w] {
                return;
            }
            let g_new = step_cost(g_u, placement.entry_cost(cost(w)));
            if in_open[w] {
                if g_new < g[w] {
                    open.remove(&OpenKey { f: f[w], index: w });
                } else {
                    return;
                }
            }
            g[w] = g_new;
            f[w] = f_score(g_ratio, g_new, h(w));
            parent[w] = u;
            in_open[w] = true;
            open.insert(OpenKey { f: f[w], index: w });
        });
        if let Some(width) = beam_width {
            while open.len() > width {
                let worst = open.pop_last().expect("open list is non-empty");
                in_open[worst.index] = false;
            }
        }
    }

    let mut path = vec![false; n];
    let mut path_nodes = Vec::new();
    if success {
        let mut cur = goal_i;
        loop {
            path[cur] = true;
            path_nodes.push(map.node(cur));
            if cur == start_i {
                break;
            }
            cur = parent[cur];
        }
        path_nodes.reverse();
    }
    SearchTrace {
        width: map.width(),
        height: map.height(),
        explorations: expanded.len(),
        closed,
        path,
        expanded,
        path_length: path_nodes.len().saturating_sub(1),
        path_nodes,
        success,
    }
}

/// Exact shortest path found by the oracle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleSolution {
    /// Number of moves.
    pub length: usize,
    /// Start to goal, inclusive.
    pub path: Vec<Node>,
    /// Row-major path membership map.
    pub path_map: Vec<bool>,
}

/// Exhaustive Dijkstra over unit-cost 8-connected moves.
///
/// Returns `Ok(None)` when the goal is unreachable. Among equally short
/// paths the canonical one is obtained by walking back from the goal and
/// always stepping to the lexicographically smallest predecessor.
pub fn dijkstra_oracle(
    map: &GridMap,
    start: Node,
    goal: Node,
) -> Result<Option<OracleSolution>, GridError> {
    map.check_free(start)?;
    map.check_free(goal)?;
    let dist = distances_from(map, start);
    let goal_i = map.index(goal);
    let Some(length) = dist[goal_i] else {
        return Ok(None);
    };
    let mut path = vec![goal];
    let mut cur = goal_i;
    while dist[cur] != Some(0) {
        let want = dist[cur].map(|d| d - 1);
        let mut prev = None;
        map.for_each_neighbor(cur, |j| {
            if prev.is_none() && dist[j] == want {
                prev = Some(j);
            }
        });
        cur = prev.expect("a finite distance always has a predecessor");
        path.push(map.node(cur));
    }
    path.reverse();
    let mut path_map = vec![false; map.len()];
    for n in &path {
        path_map[map.index(*n)] = true;
    }
    Ok(Some(OracleSolution {
        length,
        path,
        path_map,
    }))
}

/// Single-source shortest move counts; `None` for unreachable cells.
pub fn distances_from(map: &GridMap, source: Node) -> Vec<Option<usize>> {
    let mut dist: Vec<Option<usize>> = vec![None; map.len()];
    let mut heap = BinaryHeap::new();
    let s = map.index(source);
    dist[s] = Some(0);
    heap.push(Reverse((0usize, s)));
    while let Some(Reverse((d, u))) = heap.pop() {
        if dist[u].is_some_and(|best| d > best) {
            continue;
        }
        map.for_each_neighbor(u, |w| {
            let nd = d + 1;
            if dist[w].is_none_or(|best| nd < best) {
                dist[w] = Some(nd);
                heap.push(Reverse((nd, w)));
            }
        });
    }
    dist
}
