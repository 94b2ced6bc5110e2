//! Differentiable A*.
//!
//! The forward pass runs ordinary A* node selection, but at every step it
//! also evaluates a softmax over the open list of `-f / tau`, where
//! `f = g_ratio * g + (1 - g_ratio) * h` and `g` accumulates unit step costs
//! plus the guidance cost of every entered cell. The closed-list map `C` is
//! built from those selection weights:
//!
//! * **hard** mode adds the one-hot argmax selection to `C` in the forward
//!   pass and routes the gradient through the softmax (straight-through);
//! * **soft** mode adds the softmax weights themselves and clamps at 1.
//!
//! In both modes the discrete search (open list, expansions, parents) follows
//! the argmax selection, so the hard forward pass is exactly the classic
//! planner of [`crate::search`] with identical scores and tie-breaking.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{heuristic, GridMap, Node, ProblemInstance};
use crate::search::{check_dims, f_score, step_cost, GuidancePlacement, SearchError};
use crate::tensor::{BackwardOp, Element, Tensor, TensorError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffAstarError {
    #[error("guidance has {got} values but the map has {want} cells")]
    DimensionMismatch { want: usize, got: usize },
    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),
    #[error("g_ratio must lie in [0, 1], got {0}")]
    InvalidGRatio(f64),
    #[error("map has no traversable cells")]
    NoTraversableCells,
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    Soft,
    Hard,
}

/// How the softmax temperature is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauSpec {
    /// Constant temperature.
    Fixed(f64),
    /// Learned as `tau = exp(theta)`, starting from `init`.
    Trainable { init: f64 },
}

impl TauSpec {
    /// `sqrt(map width)`.
    pub fn default_for_width(width: usize) -> f64 {
        (width as f64).sqrt()
    }

    pub fn initial_value(&self) -> f64 {
        match *self {
            TauSpec::Fixed(v) | TauSpec::Trainable { init: v } => v,
        }
    }
}

impl fmt::Display for TauSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TauSpec::Fixed(v) => write!(f, "{v}"),
            TauSpec::Trainable { init } => write!(f, "train:{init}"),
        }
    }
}

impl FromStr for TauSpec {
    type Err = String;

    /// `<value>`, `train` (trainable from the map-width default, resolved
    /// later as `NaN`) or `train:<init>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |v: &str| {
            v.parse::<f64>()
                .map_err(|e| format!("bad temperature `{v}`: {e}"))
        };
        match s.split_once(':') {
            Some(("train", init)) => Ok(TauSpec::Trainable { init: parse(init)? }),
            None if s == "train" => Ok(TauSpec::Trainable { init: f64::NAN }),
            None => Ok(TauSpec::Fixed(parse(s)?)),
            _ => Err(format!("bad temperature spec `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffAstarConfig {
    pub g_ratio: f64,
    pub tau: TauSpec,
    pub mode: SelectionMode,
    /// Defaults to the number of traversable cells.
    pub max_steps: Option<usize>,
    #[serde(default)]
    pub placement: GuidancePlacement,
}

impl DiffAstarConfig {
    /// Hard mode with `tau = sqrt(width)`.
    pub fn new(g_ratio: f64, width: usize) -> Self {
        Self {
            g_ratio,
            tau: TauSpec::Fixed(TauSpec::default_for_width(width)),
            mode: SelectionMode::Hard,
            max_steps: None,
            placement: GuidancePlacement::Heuristic,
        }
    }
}

/// Temperature used for one forward pass.
#[derive(Debug, Clone)]
pub enum Temperature<T: Element> {
    Fixed(T),
    /// One-element tensor holding `log tau`.
    Learned(Tensor<T>),
}

impl<T: Element> Temperature<T> {
    pub fn value(&self) -> Result<T, TensorError> {
        match self {
            Temperature::Fixed(t) => Ok(*t),
            Temperature::Learned(log_tau) => Ok(log_tau.item()?.exp()),
        }
    }
}

/// One node selection: the open list at that moment, with each node's
/// parent, score and softmax weight.
#[derive(Debug, Clone)]
pub struct SelectionStep<T> {
    pub open: Vec<usize>,
    parents: Vec<usize>,
    f: Vec<T>,
    pub weights: Vec<T>,
    pub selected: usize,
}

#[derive(Debug, Clone)]
pub struct SoftTrace<T: Element = f32> {
    /// `H x W` closed-list map connected to the guidance (and temperature) graph.
    pub closed: Tensor<T>,
    pub history: Vec<SelectionStep<T>>,
    /// Binary closed map of the discrete search.
    pub hard_closed: Vec<bool>,
    pub hard_path: Vec<bool>,
    pub hard_path_nodes: Vec<Node>,
    pub hard_explorations: usize,
    pub path_length: usize,
    pub success: bool,
}

impl<T: Element> SoftTrace<T> {
    /// Dense selection-weight map of step `t`.
    pub fn selection_map(&self, t: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.hard_closed.len()];
        let step = &self.history[t];
        for (&v, &w) in step.open.iter().zip(&step.weights) {
            out[v] = w;
        }
        out
    }
}

const NO_PARENT: usize = usize::MAX;

struct DiffAstarBackward<T> {
    steps: Vec<SelectionStep<T>>,
    /// Popped nodes in order with their final parents.
    pops: Vec<(usize, usize)>,
    start: usize,
    g_ratio: T,
    placement: GuidancePlacement,
    tau: T,
    /// Soft mode: cells whose accumulated weight was clamped to 1.
    clamped: Vec<bool>,
    learned_tau: bool,
}

impl<T: Element> BackwardOp<T> for DiffAstarBackward<T> {
    fn name(&self) -> &'static str {
        "differentiable_astar"
    }

    fn backward(&self, grad_out: &[T], _output: &[T], inputs: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        let n = grad_out.len();
        let upstream: Vec<T> = grad_out
            .iter()
            .zip(&self.clamped)
            .map(|(&g, &c)| if c { T::zero() } else { g })
            .collect();
        let mut d_cost = vec![T::zero(); n];
        let mut d_g_final = vec![T::zero(); n];
        let mut d_tau = T::zero();
        let tau2 = self.tau * self.tau;

        for step in &self.steps {
            let dot: T = step
                .open
                .iter()
                .zip(&step.weights)
                .map(|(&v, &s)| s * upstream[v])
                .sum();
            for (k, &v) in step.open.iter().enumerate() {
                let s = step.weights[k];
                // logit z = -f / tau
                let d_logit = s * (upstream[v] - dot);
                d_tau = d_tau + d_logit * step.f[k] / tau2;
                let d_f = -d_logit / self.tau;
                if self.placement == GuidancePlacement::Heuristic {
                    d_cost[v] = d_cost[v] + (T::one() - self.g_ratio) * d_f;
                    continue;
                }
                if v == self.start {
                    continue;
                }
                let d_g = self.g_ratio * d_f;
                d_cost[v] = d_cost[v] + d_g;
                let p = step.parents[k];
                if p != self.start {
                    d_g_final[p] = d_g_final[p] + d_g;
                }
            }
        }
        for &(u, parent) in self.pops.iter().rev() {
            if u == self.start {
                continue;
            }
            let d = d_g_final[u];
            d_cost[u] = d_cost[u] + d;
            if parent != self.start {
                d_g_final[parent] = d_g_final[parent] + d;
            }
        }
        let mut grads = vec![Some(d_cost)];
        if self.learned_tau && inputs.len() > 1 {
            // tau = exp(theta)
            grads.push(Some(vec![d_tau * self.tau]));
        }
        grads
    }
}

fn argmin_open<T: Element>(open: &[usize], f: &[T]) -> usize {
    let mut best = 0;
    for k in 1..open.len() {
        let better = match f[k].partial_cmp(&f[best]) {
            Some(std::cmp::Ordering::Less) => true,
            Some(std::cmp::Ordering::Equal) => open[k] < open[best],
            _ => false,
        };
        if better {
            best = k;
        }
    }
    best
}

/// Runs differentiable A* on `instance` with per-cell `guidance` costs
/// (any shape with `H * W` elements, row-major).
pub fn differentiable_plan<T: Element>(
    guidance: &Tensor<T>,
    instance: &ProblemInstance,
    config: &DiffAstarConfig,
    temperature: &Temperature<T>,
) -> Result<SoftTrace<T>, DiffAstarError> {
    let map: &GridMap = &instance.map;
    let n = map.len();
    if guidance.numel() != n {
        return Err(DiffAstarError::DimensionMismatch {
            want: n,
            got: guidance.numel(),
        });
    }
    if !(0.0..=1.0).contains(&config.g_ratio) {
        return Err(DiffAstarError::InvalidGRatio(config.g_ratio));
    }
    check_dims(map, map.width(), map.height())?;
    map.check_free(instance.start).map_err(SearchError::from)?;
    map.check_free(instance.goal).map_err(SearchError::from)?;
    let tau = temperature.value()?;
    if !(tau > T::zero() && tau.is_finite()) {
        return Err(DiffAstarError::InvalidTemperature(
            tau.to_f64().unwrap_or(f64::NAN),
        ));
    }
    let max_steps = config.max_steps.unwrap_or_else(|| map.free_count());
    let g_ratio = T::from_f64_lossy(config.g_ratio);
    let costs = guidance.to_vec();

    let start = map.index(instance.start);
    let goal = map.index(instance.goal);
    let h: Vec<T> = (0..n)
        .map(|i| T::from_usize(heuristic(map.node(i), instance.goal)).expect("small integer"))
        .collect();
    let mut g = vec![T::zero(); n];
    let mut parent = vec![NO_PARENT; n];
    let mut in_open = vec![false; n];
    let mut closed = vec![false; n];
    let mut open = vec![start];
    in_open[start] = true;
    let mut acc = vec![T::zero(); n];
    let mut steps = Vec::new();
    let mut pops = Vec::new();
    let mut success = false;

    while !open.is_empty() && steps.len() < max_steps {
        let f: Vec<T> = open
            .iter()
            .map(|&v| {
                f_score(
                    g_ratio,
                    g[v],
                    config.placement.heuristic_term(h[v], costs[v]),
                )
            })
            .collect();
        let best = argmin_open(&open, &f);
        let selected = open[best];

        // softmax(-f / tau), shifted by the smallest score
        let f_min = f[best];
        let e: Vec<T> = f.iter().map(|&fv| (-(fv - f_min) / tau).exp()).collect();
        let z: T = e.iter().copied().sum();
        let weights: Vec<T> = e.into_iter().map(|v| v / z).collect();

        match config.mode {
            SelectionMode::Hard => acc[selected] = acc[selected] + T::one(),
            SelectionMode::Soft => {
                for (&v, &w) in open.iter().zip(&weights) {
                    acc[v] = acc[v] + w;
                }
            }
        }
        steps.push(SelectionStep {
            parents: open.iter().map(|&v| parent[v]).collect(),
            open: open.clone(),
            f,
            weights,
            selected,
        });

        open.swap_remove(best);
        in_open[selected] = false;
        closed[selected] = true;
        pops.push((selected, parent[selected]));
        if selected == goal {
            success = true;
            break;
        }
        let g_u = g[selected];
        map.for_each_neighbor(selected, |w| {
            if closed[w] {
                return;
            }
            let g_new = step_cost(g_u, config.placement.entry_cost(costs[w]));
            if in_open[w] {
                if g_new >= g[w] {
                    return;
                }
            } else {
                in_open[w] = true;
                open.push(w);
            }
            g[w] = g_new;
            parent[w] = selected;
        });
    }

    let one = T::one();
    let clamped: Vec<bool> = match config.mode {
        SelectionMode::Soft => acc.iter().map(|&a| a > one).collect(),
        SelectionMode::Hard => vec![false; n],
    };
    let out: Vec<T> = acc.iter().map(|&a| a.min(one)).collect();

    let mut hard_path = vec![false; n];
    let mut hard_path_nodes = Vec::new();
    if success {
        let mut cur = goal;
        loop {
            hard_path[cur] = true;
            hard_path_nodes.push(map.node(cur));
            if cur == start {
                break;
            }
            cur = parent[cur];
        }
        hard_path_nodes.reverse();
    }

    let mut inputs = vec![guidance.clone()];
    let learned_tau = matches!(temperature, Temperature::Learned(_));
    if let Temperature::Learned(log_tau) = temperature {
        inputs.push(log_tau.clone());
    }
    let closed_tensor = Tensor::from_op(
        &[map.height(), map.width()],
        out,
        inputs,
        DiffAstarBackward {
            steps: steps.clone(),
            pops: pops.clone(),
            start,
            g_ratio,
            placement: config.placement,
            tau,
            clamped,
            learned_tau,
        },
    )?;

    Ok(SoftTrace {
        closed: closed_tensor,
        history: steps,
        hard_explorations: pops.len(),
        hard_closed: closed,
        path_length: hard_path_nodes.len().saturating_sub(1),
        hard_path,
        hard_path_nodes,
        success,
    })
}

/// Mean L1 distance between the closed-list map and the ground-truth path
/// map, normalized by the number of traversable cells.
pub fn closed_list_loss<T: Element>(
    trace: &SoftTrace<T>,
    ground_truth_path: &[bool],
    map: &GridMap,
) -> Result<Tensor<T>, DiffAstarError> {
    if ground_truth_path.len() != trace.closed.numel() || map.len() != trace.closed.numel() {
        return Err(TensorError::ShapeMismatch {
            op: "closed_list_loss",
            detail: format!(
                "closed map has {} cells, path map {}, grid {}",
                trace.closed.numel(),
                ground_truth_path.len(),
                map.len()
            ),
        }
        .into());
    }
    let free = map.free_count();
    if free == 0 {
        return Err(DiffAstarError::NoTraversableCells);
    }
    let target = Tensor::from_vec(
        trace.closed.shape(),
        // obstacles are never closed, so masking the target restricts the sum to V
        ground_truth_path
            .iter()
            .zip(map.cells())
            .map(|(&p, &free)| if p && free { T::one() } else { T::zero() })
            .collect(),
    )?;
    Ok(trace
        .closed
        .l1_diff(&target)?
        .sum()
        .scale(1.0 / free as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GuidanceMap;
    use crate::search::{dijkstra_oracle, plan, SearchPolicy};

    fn inst(map: GridMap, s: (usize, usize), g: (usize, usize)) -> ProblemInstance {
        ProblemInstance::solve(map, s.into(), g.into()).unwrap()
    }

    #[test]
    fn adjacent_start_goal_pops_twice() {
        let i = inst(GridMap::empty(6, 6).unwrap(), (3, 3), (3, 4));
        let guidance = Tensor::<f32>::full(&[6, 6], 0.5).unwrap();
        let cfg = DiffAstarConfig::new(0.5, 6);
        let t = differentiable_plan(&guidance, &i, &cfg, &Temperature::Fixed(2.0)).unwrap();
        assert!(t.success);
        assert_eq!(t.hard_explorations, 2);
        assert_eq!(t.hard_path_nodes, vec![Node::new(3, 3), Node::new(3, 4)]);
        assert_eq!(t.closed.data().iter().filter(|&&v| v == 1.0).count(), 2);
    }

    #[test]
    fn hard_mode_matches_classic_planner_on_a_wall_map() {
        let map = GridMap::from_ascii(
            "........
             ..####..
             .....#..
             ####.#..
             .....#..
             .#####..
             ........
             ........",
        )
        .unwrap();
        let i = inst(map, (2, 0), (4, 0));
        let values: Vec<f32> = (0..64)
            .map(|k| ((k * 29 % 17) as f32 + 0.5) / 18.0)
            .collect();
        let gm = GuidanceMap::new(8, 8, values.clone()).unwrap();
        for (g_ratio, placement) in [0.0f32, 0.2, 0.5, 1.0].into_iter().flat_map(|g| {
            [
                (g, GuidancePlacement::Heuristic),
                (g, GuidancePlacement::CostToCome),
            ]
        }) {
            let policy = SearchPolicy::weighted(g_ratio)
                .unwrap()
                .with_guidance(true)
                .with_placement(placement);
            let classic = plan(&i, &policy, Some(&gm)).unwrap();
            let mut cfg = DiffAstarConfig::new(g_ratio as f64, 8);
            cfg.placement = placement;
            let guidance = Tensor::<f32>::from_vec(&[8, 8], values.clone()).unwrap();
            let t = differentiable_plan(&guidance, &i, &cfg, &Temperature::Fixed(2.0)).unwrap();
            assert_eq!(
                t.hard_closed, classic.closed,
                "g_ratio {g_ratio} {placement}"
            );
            assert_eq!(t.hard_path, classic.path);
            assert_eq!(t.hard_explorations, classic.explorations);
            let binarized: Vec<bool> = t.closed.data().iter().map(|&v| v > 0.5).collect();
            assert_eq!(binarized, classic.closed);
        }
    }

    #[test]
    fn selection_weights_sum_to_one_and_flatten_at_high_temperature() {
        let i = inst(GridMap::empty(8, 8).unwrap(), (0, 0), (7, 5));
        let guidance = Tensor::<f64>::full(&[8, 8], 0.3).unwrap();
        let mut cfg = DiffAstarConfig::new(0.2, 8);
        cfg.mode = SelectionMode::Soft;
        let t = differentiable_plan(&guidance, &i, &cfg, &Temperature::Fixed(1e6)).unwrap();
        for step in &t.history {
            let s: f64 = step.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-5);
            let uniform = 1.0 / step.open.len() as f64;
            assert!(step.weights.iter().all(|&w| (w - uniform).abs() < 1e-3));
            assert!(step.weights.iter().all(|&w| w >= 0.0));
        }
        let dense = t.selection_map(1);
        assert!((dense.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn loss_examples() {
        let map = GridMap::empty(8, 8).unwrap();
        let i = inst(map.clone(), (0, 0), (0, 1));
        let guidance = Tensor::<f32>::full(&[8, 8], 0.5).unwrap();
        let cfg = DiffAstarConfig::new(0.5, 8);
        let t = differentiable_plan(&guidance, &i, &cfg, &Temperature::Fixed(2.0)).unwrap();
        let exact = closed_list_loss(&t, &t.hard_closed, &map).unwrap();
        assert_eq!(exact.item().unwrap(), 0.0);

        let path = t.hard_closed.clone();
        let extra: Vec<usize> = (0..64).filter(|&k| !path[k]).take(3).collect();
        let mut closed = t.closed.to_vec();
        for &k in &extra {
            closed[k] = 1.0;
        }
        let fake = SoftTrace {
            closed: Tensor::from_vec(&[8, 8], closed).unwrap(),
            ..t.clone()
        };
        let l = closed_list_loss(&fake, &path, &map)
            .unwrap()
            .item()
            .unwrap();
        assert_eq!(l, 3.0 / 64.0);
        assert_eq!(l, 0.046875);
    }

    #[test]
    fn loss_counts_only_traversable_cells() {
        let mut map = GridMap::empty(8, 8).unwrap();
        map.set(Node::new(7, 7), false);
        let i = inst(map.clone(), (0, 0), (0, 3));
        let oracle = dijkstra_oracle(&map, i.start, i.goal).unwrap().unwrap();
        let guidance = Tensor::<f64>::full(&[8, 8], 0.5).unwrap();
        let cfg = DiffAstarConfig::new(0.5, 8);
        let t = differentiable_plan(&guidance, &i, &cfg, &Temperature::Fixed(2.0)).unwrap();
        let l = closed_list_loss(&t, &oracle.path_map, &map)
            .unwrap()
            .item()
            .unwrap();
        let mismatches = t
            .hard_closed
            .iter()
            .zip(&oracle.path_map)
            .filter(|(a, b)| a != b)
            .count();
        assert!((l - mismatches as f64 / 63.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_and_temperature_errors() {
        let i = inst(GridMap::empty(8, 8).unwrap(), (0, 0), (0, 3));
        let cfg = DiffAstarConfig::new(0.5, 8);
        let bad = Tensor::<f32>::full(&[4, 4], 0.5).unwrap();
        assert!(matches!(
            differentiable_plan(&bad, &i, &cfg, &Temperature::Fixed(2.0)),
            Err(DiffAstarError::DimensionMismatch { want: 64, got: 16 })
        ));
        let ok = Tensor::<f32>::full(&[8, 8], 0.5).unwrap();
        assert!(matches!(
            differentiable_plan(&ok, &i, &cfg, &Temperature::Fixed(0.0)),
            Err(DiffAstarError::InvalidTemperature(_))
        ));
    }

    #[test]
    fn step_budget_exhaustion_reports_failure() {
        let i = inst(GridMap::empty(8, 8).unwrap(), (0, 0), (7, 7));
        let mut cfg = DiffAstarConfig::new(0.5, 8);
        cfg.max_steps = Some(3);
        let guidance = Tensor::<f64>::full(&[8, 8], 0.5).unwrap();
        let t = differentiable_plan(&guidance, &i, &cfg, &Temperature::Fixed(2.0)).unwrap();
        assert!(!t.success);
        assert_eq!(t.hard_explorations, 3);
        let l = closed_list_loss(&t, &[false; 64], &i.map).unwrap();
        assert!(l.item().unwrap().is_finite());
    }

    fn soft_config(placement: GuidancePlacement) -> DiffAstarConfig {
        let mut cfg = DiffAstarConfig::new(0.4, 8);
        cfg.mode = SelectionMode::Soft;
        cfg.placement = placement;
        cfg
    }

    fn soft_loss(
        cfg: &DiffAstarConfig,
        values: &[f64],
        log_tau: f64,
        i: &ProblemInstance,
        gt: &[bool],
    ) -> f64 {
        let g = Tensor::from_vec(&[8, 8], values.to_vec()).unwrap();
        let temp = Temperature::Learned(Tensor::from_vec(&[1], vec![log_tau]).unwrap());
        let t = differentiable_plan(&g, i, cfg, &temp).unwrap();
        closed_list_loss(&t, gt, &i.map).unwrap().item().unwrap()
    }

    #[test]
    fn soft_mode_gradients_match_finite_differences() {
        let map = GridMap::from_ascii(
            "........
             ...#....
             ...#....
             ...#.#..
             .....#..
             ..###...
             ........
             ........",
        )
        .unwrap();
        let i = inst(map, (1, 1), (6, 6));
        let gt = dijkstra_oracle(&i.map, i.start, i.goal)
            .unwrap()
            .unwrap()
            .path_map;
        let values: Vec<f64> = (0..64)
            .map(|k| ((k * 37 % 23) as f64 + 0.3) / 24.0)
            .collect();
        let log_tau0 = 1.1f64;

        for placement in [GuidancePlacement::Heuristic, GuidancePlacement::CostToCome] {
            let cfg = soft_config(placement);
            let g = Tensor::parameter(&[8, 8], values.clone()).unwrap();
            let log_tau = Tensor::parameter(&[1], vec![log_tau0]).unwrap();
            let t =
                differentiable_plan(&g, &i, &cfg, &Temperature::Learned(log_tau.clone())).unwrap();
            closed_list_loss(&t, &gt, &i.map)
                .unwrap()
                .backward()
                .unwrap();
            let analytic = g.grad().unwrap();

            let eps = 1e-6;
            for k in 0..64 {
                let (mut p, mut m) = (values.clone(), values.clone());
                p[k] += eps;
                m[k] -= eps;
                let num = (soft_loss(&cfg, &p, log_tau0, &i, &gt)
                    - soft_loss(&cfg, &m, log_tau0, &i, &gt))
                    / (2.0 * eps);
                let err = (analytic[k] - num).abs() / analytic[k].abs().max(num.abs()).max(1e-7);
                assert!(
                    err < 1e-3,
                    "{placement} cell {k}: analytic {} numeric {num}",
                    analytic[k]
                );
            }
            let num = (soft_loss(&cfg, &values, log_tau0 + eps, &i, &gt)
                - soft_loss(&cfg, &values, log_tau0 - eps, &i, &gt))
                / (2.0 * eps);
            let a = log_tau.grad().unwrap()[0];
            assert!(
                (a - num).abs() / a.abs().max(1e-7) < 1e-3,
                "{placement} log tau: {a} vs {num}"
            );
        }
    }

    #[test]
    fn tau_spec_parsing() {
        assert_eq!("2.5".parse::<TauSpec>().unwrap(), TauSpec::Fixed(2.5));
        assert_eq!(
            "train:3".parse::<TauSpec>().unwrap(),
            TauSpec::Trainable { init: 3.0 }
        );
        assert!(
            matches!("train".parse::<TauSpec>().unwrap(), TauSpec::Trainable { init } if init.is_nan())
        );
        assert!("warm".parse::<TauSpec>().is_err());
    }
}
