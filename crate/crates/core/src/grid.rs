//! Grid geometry shared by every planner: occupancy maps, 8-connected
//! neighborhoods, the Chebyshev heuristic and problem instances.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::search::dijkstra_oracle;

/// Smallest accepted side length of a map.
pub const MIN_SIDE: usize = 4;

/// Row/column offsets of the 8-neighborhood in scan order
/// (NW, N, NE, W, E, SW, S, SE).
pub const NEIGHBOR_OFFSETS: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GridError {
    #[error("map must be at least {MIN_SIDE}x{MIN_SIDE}, got {width}x{height}")]
    TooSmall { width: usize, height: usize },
    #[error("cell buffer has {got} entries, expected {expected}")]
    CellCount { expected: usize, got: usize },
    #[error("node {0} is outside the map")]
    OutOfBounds(Node),
    #[error("node {0} lies on an obstacle")]
    NodeOnObstacle(Node),
    #[error("start and goal are the same node {0}")]
    StartEqualsGoal(Node),
    #[error("goal {goal} is unreachable from {start}")]
    UnreachableGoal { start: Node, goal: Node },
    #[error("stored optimal length {stored} disagrees with oracle length {oracle}")]
    StaleGroundTruth { stored: usize, oracle: usize },
}

/// A cell coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Node {
    pub row: usize,
    pub col: usize,
}

impl Node {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

impl From<(usize, usize)> for Node {
    fn from((row, col): (usize, usize)) -> Self {
        Self { row, col }
    }
}

/// Binary occupancy grid stored row-major; `true` marks a traversable cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridMap {
    width: usize,
    height: usize,
    cells: Vec<bool>,
}

impl GridMap {
    pub fn new(width: usize, height: usize, cells: Vec<bool>) -> Result<Self, GridError> {
        if width < MIN_SIDE || height < MIN_SIDE {
            return Err(GridError::TooSmall { width, height });
        }
        if cells.len() != width * height {
            return Err(GridError::CellCount {
                expected: width * height,
                got: cells.len(),
            });
        }
        Ok(Self {
            width,
            height,
            cells,
        })
    }

    /// An obstacle-free map.
    pub fn empty(width: usize, height: usize) -> Result<Self, GridError> {
        Self::new(width, height, vec![true; width * height])
    }

    /// Parses rows of `.` (free) and `#` (obstacle). Whitespace around rows is ignored.
    pub fn from_ascii(text: &str) -> Result<Self, GridError> {
        let rows: Vec<&str> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let cells: Vec<bool> = rows
            .iter()
            .flat_map(|r| r.chars().map(|c| c != '#'))
            .collect();
        Self::new(width, height, cells)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn in_bounds(&self, node: Node) -> bool {
        node.row < self.height && node.col < self.width
    }

    /// Row-major flat index of `node`. The node must be in bounds.
    #[inline]
    pub fn index(&self, node: Node) -> usize {
        node.row * self.width + node.col
    }

    #[inline]
    pub fn node(&self, index: usize) -> Node {
        Node::new(index / self.width, index % self.width)
    }

    /// `false` for obstacles and for out-of-bounds nodes.
    pub fn is_free(&self, node: Node) -> bool {
        self.in_bounds(node) && self.cells[self.index(node)]
    }

    pub fn set(&mut self, node: Node, free: bool) {
        let i = self.index(node);
        self.cells[i] = free;
    }

    pub fn free_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// Traversable 8-connected neighbors of `node` in scan order.
    pub fn neighbors(&self, node: Node) -> Result<Vec<Node>, GridError> {
        self.check_free(node)?;
        let mut out = Vec::with_capacity(8);
        self.for_each_neighbor(self.index(node), |i| out.push(self.node(i)));
        Ok(out)
    }

    /// Calls `visit` with the flat index of every traversable neighbor of the
    /// cell at `index`, in scan order. No validation of `index` itself.
    #[inline]
    pub fn for_each_neighbor(&self, index: usize, mut visit: impl FnMut(usize)) {
        let row = (index / self.width) as isize;
        let col = (index % self.width) as isize;
        for (dr, dc) in NEIGHBOR_OFFSETS {
            let r = row + dr;
            let c = col + dc;
            if r < 0 || c < 0 || r >= self.height as isize || c >= self.width as isize {
                continue;
            }
            let j = r as usize * self.width + c as usize;
            if self.cells[j] {
                visit(j);
            }
        }
    }

    pub(crate) fn check_free(&self, node: Node) -> Result<(), GridError> {
        if !self.in_bounds(node) {
            return Err(GridError::OutOfBounds(node));
        }
        if !self.cells[self.index(node)] {
            return Err(GridError::NodeOnObstacle(node));
        }
        Ok(())
    }

    /// Renders the map in the format accepted by [`GridMap::from_ascii`].
    pub fn to_ascii(&self) -> String {
        let mut s = String::with_capacity((self.width + 1) * self.height);
        for row in self.cells.chunks(self.width) {
            s.extend(row.iter().map(|&c| if c { '.' } else { '#' }));
            s.push('\n');
        }
        s
    }
}

/// Per-cell guidance cost, row-major, values in (0, 1) when produced by the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl GuidanceMap {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self, GridError> {
        if values.len() != width * height {
            return Err(GridError::CellCount {
                expected: width * height,
                got: values.len(),
            });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn uniform(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, node: Node) -> f32 {
        self.values[node.row * self.width + node.col]
    }
}

/// Chebyshev distance, the exact move count between two nodes on an empty map.
#[inline]
pub fn heuristic(a: Node, b: Node) -> usize {
    a.row.abs_diff(b.row).max(a.col.abs_diff(b.col))
}

/// Start/goal query on a map together with its shortest path length in moves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemInstance {
    pub map: GridMap,
    pub start: Node,
    pub goal: Node,
    pub optimal_length: usize,
}

impl ProblemInstance {
    /// Builds an instance, filling `optimal_length` from the Dijkstra oracle.
    pub fn solve(map: GridMap, start: Node, goal: Node) -> Result<Self, GridError> {
        check_endpoints(&map, start, goal)?;
        let oracle = dijkstra_oracle(&map, start, goal)?;
        let optimal_length = oracle
            .map(|o| o.length)
            .ok_or(GridError::UnreachableGoal { start, goal })?;
        Ok(Self {
            map,
            start,
            goal,
            optimal_length,
        })
    }

    pub fn width(&self) -> usize {
        self.map.width()
    }

    pub fn height(&self) -> usize {
        self.map.height()
    }
}

fn check_endpoints(map: &GridMap, start: Node, goal: Node) -> Result<(), GridError> {
    map.check_free(start)?;
    map.check_free(goal)?;
    if start == goal {
        return Err(GridError::StartEqualsGoal(start));
    }
    Ok(())
}

/// Checks every instance invariant and recomputes the stored ground truth.
pub fn validate_instance(instance: ProblemInstance) -> Result<ProblemInstance, GridError> {
    check_endpoints(&instance.map, instance.start, instance.goal)?;
    let oracle = dijkstra_oracle(&instance.map, instance.start, instance.goal)?.ok_or(
        GridError::UnreachableGoal {
            start: instance.start,
            goal: instance.goal,
        },
    )?;
    if oracle.length != instance.optimal_length {
        return Err(GridError::StaleGroundTruth {
            stored: instance.optimal_length,
            oracle: oracle.length,
        });
    }
    Ok(instance)
}
