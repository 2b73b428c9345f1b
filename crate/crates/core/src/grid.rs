//! Gridworld specifications and their conversion to MDPs and state graphs.
//!
//! Coordinates are `(x, y)` with `(1, 1)` the bottom-left cell and
//! `(width, height)` the top-right one. Non-wall cells become states, indexed
//! row by row starting from the bottom row (`y = 1`), left to right.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::scalar::Scalar;
use crate::spectral::StateGraph;

pub const DEFAULT_GOAL_REWARD: f64 = 10.0;
pub const MINE_REWARD_MIN: i32 = -5;
pub const MINE_REWARD_MAX: i32 = -1;

/// Three-room layout: 60 columns, 21 rows, walls at these columns.
pub const THREE_ROOM_WIDTH: usize = 60;
pub const THREE_ROOM_HEIGHT: usize = 21;
pub const THREE_ROOM_WALL_COLUMNS: [usize; 2] = [21, 41];
pub const THREE_ROOM_DOOR_ROW: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellKind {
    Normal,
    Wall,
    Goal,
    Mine,
}

impl CellKind {
    pub fn symbol(self) -> char {
        match self {
            CellKind::Normal => '.',
            CellKind::Wall => '#',
            CellKind::Goal => 'G',
            CellKind::Mine => 'M',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        Some(match c {
            '.' => CellKind::Normal,
            '#' => CellKind::Wall,
            'G' => CellKind::Goal,
            'M' => CellKind::Mine,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub kind: CellKind,
    /// Reward paid on entering the cell. Ignored for walls.
    pub reward: f64,
}

impl Cell {
    pub const NORMAL: Cell = Cell {
        kind: CellKind::Normal,
        reward: 0.0,
    };
    pub const WALL: Cell = Cell {
        kind: CellKind::Wall,
        reward: 0.0,
    };
}

/// Moves available in every gridworld, in action-index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Up = 0,
    Down = 1,
    Right = 2,
    Left = 3,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Right, Action::Left];

    fn delta(self) -> (i64, i64) {
        match self {
            Action::Up => (0, 1),
            Action::Down => (0, -1),
            Action::Right => (1, 0),
            Action::Left => (-1, 0),
        }
    }
}

/// Description of a rectangular gridworld.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    width: usize,
    height: usize,
    /// Row-major from the bottom row: index `(y - 1) * width + (x - 1)`.
    cells: Vec<Cell>,
    /// Seed used to generate the layout, when it was random.
    pub seed: Option<u64>,
}

impl GridSpec {
    /// Grid of normal zero-reward cells.
    pub fn open(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid dimensions {width}×{height} must be positive"
            )));
        }
        Ok(Self {
            width,
            height,
            cells: vec![Cell::NORMAL; width * height],
            seed: None,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    fn offset(&self, x: usize, y: usize) -> usize {
        assert!(
            (1..=self.width).contains(&x) && (1..=self.height).contains(&y),
            "cell ({x}, {y}) outside {}×{} grid",
            self.width,
            self.height
        );
        (y - 1) * self.width + (x - 1)
    }

    pub fn cell(&self, x: usize, y: usize) -> Cell {
        self.cells[self.offset(x, y)]
    }

    pub fn set_cell(&mut self, x: usize, y: usize, cell: Cell) {
        let i = self.offset(x, y);
        self.cells[i] = cell;
    }

    /// Coordinates of every state, in state-index order.
    pub fn state_coords(&self) -> Vec<(usize, usize)> {
        (1..=self.height)
            .flat_map(|y| (1..=self.width).map(move |x| (x, y)))
            .filter(|&(x, y)| self.cell(x, y).kind != CellKind::Wall)
            .collect()
    }

    /// Maps each cell offset to its state index (`None` for walls).
    fn state_index_table(&self) -> Vec<Option<usize>> {
        let mut next = 0;
        self.cells
            .iter()
            .map(|c| {
                (c.kind != CellKind::Wall).then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect()
    }

    pub fn state_index(&self, x: usize, y: usize) -> Option<usize> {
        self.state_index_table()[self.offset(x, y)]
    }

    pub fn n_states(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| c.kind != CellKind::Wall)
            .count()
    }

    pub fn goal(&self) -> Option<(usize, usize)> {
        self.state_coords()
            .into_iter()
            .find(|&(x, y)| self.cell(x, y).kind == CellKind::Goal)
    }

    /// Per-state cell rewards in state-index order.
    pub fn state_rewards(&self) -> Vec<f64> {
        self.state_coords()
            .into_iter()
            .map(|(x, y)| self.cell(x, y).reward)
            .collect()
    }

    /// Checks the structural invariants: at most one goal, mine rewards in
    /// `[-5, -1]`, finite rewards.
    pub fn validate(&self) -> Result<()> {
        if self.cells.len() != self.width * self.height {
            return Err(Error::InvalidArgument(
                "cell count does not match dimensions".into(),
            ));
        }
        let goals = self
            .cells
            .iter()
            .filter(|c| c.kind == CellKind::Goal)
            .count();
        if goals > 1 {
            return Err(Error::InvalidArgument(format!(
                "{goals} goals; at most one allowed"
            )));
        }
        for c in &self.cells {
            if !c.reward.is_finite() {
                return Err(Error::NonFinite(format!("cell reward {}", c.reward)));
            }
            if c.kind == CellKind::Mine
                && !(MINE_REWARD_MIN as f64..=MINE_REWARD_MAX as f64).contains(&c.reward)
            {
                return Err(Error::InvalidArgument(format!(
                    "mine reward {} outside [{MINE_REWARD_MIN}, {MINE_REWARD_MAX}]",
                    c.reward
                )));
            }
        }
        if self.n_states() == 0 {
            return Err(Error::InvalidArgument("grid has no open cells".into()));
        }
        Ok(())
    }

    fn neighbour(&self, x: usize, y: usize, action: Action) -> Option<(usize, usize)> {
        let (dx, dy) = action.delta();
        let nx = x as i64 + dx;
        let ny = y as i64 + dy;
        if nx < 1 || ny < 1 || nx > self.width as i64 || ny > self.height as i64 {
            return None;
        }
        let (nx, ny) = (nx as usize, ny as usize);
        (self.cell(nx, ny).kind != CellKind::Wall).then_some((nx, ny))
    }

    /// Lays `values` (state-index order) out as `height` rows of `width`
    /// entries, top row first, `None` on walls.
    pub fn layout<V: Copy>(&self, values: &[V]) -> Vec<Vec<Option<V>>> {
        let table = self.state_index_table();
        (1..=self.height)
            .rev()
            .map(|y| {
                (1..=self.width)
                    .map(|x| table[self.offset(x, y)].map(|s| values[s]))
                    .collect()
            })
            .collect()
    }

    /// Serialises to the text map format: one line per row (top row first)
    /// using `.`, `#`, `G`, `M`, a blank line, then `key=value` lines for
    /// the seed and every non-zero cell reward.
    pub fn to_map_string(&self) -> String {
        let mut out = String::new();
        for y in (1..=self.height).rev() {
            for x in 1..=self.width {
                out.push(self.cell(x, y).kind.symbol());
            }
            out.push('\n');
        }
        out.push('\n');
        if let Some(seed) = self.seed {
            let _ = writeln!(out, "seed={seed}");
        }
        for y in 1..=self.height {
            for x in 1..=self.width {
                let c = self.cell(x, y);
                if c.reward != 0.0 || c.reward.is_sign_negative() {
                    // `{:?}` prints the shortest representation that parses back exactly.
                    let _ = writeln!(out, "reward.{x}.{y}={:?}", c.reward);
                }
            }
        }
        out
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<CellKind>> = Vec::new();
        let mut lines = text.lines().enumerate();
        for (i, line) in lines.by_ref() {
            let line = line.trim_end();
            if line.is_empty() {
                if rows.is_empty() {
                    continue;
                }
                break;
            }
            let row = line
                .chars()
                .map(|c| {
                    CellKind::from_symbol(c).ok_or_else(|| Error::Parse {
                        line: i + 1,
                        message: format!("unknown map symbol {c:?}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: format!("row has {} cells, expected {}", row.len(), first.len()),
                    });
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Parse {
                line: 1,
                message: "empty map".into(),
            });
        }
        let height = rows.len();
        let width = rows[0].len();
        let mut spec = GridSpec::open(width, height)?;
        for (r, row) in rows.iter().enumerate() {
            let y = height - r;
            for (c, &kind) in row.iter().enumerate() {
                spec.set_cell(c + 1, y, Cell { kind, reward: 0.0 });
            }
        }
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if key == "seed" {
                spec.seed = Some(value.parse().map_err(|e| err(format!("seed: {e}")))?);
            } else if let Some(coords) = key.strip_prefix("reward.") {
                let (x, y) = coords
                    .split_once('.')
                    .and_then(|(x, y)| Some((x.parse::<usize>().ok()?, y.parse::<usize>().ok()?)))
                    .ok_or_else(|| err(format!("bad reward key {key:?}")))?;
                if !(1..=width).contains(&x) || !(1..=height).contains(&y) {
                    return Err(err(format!("reward cell ({x}, {y}) outside grid")));
                }
                let reward: f64 = value.parse().map_err(|e| err(format!("reward: {e}")))?;
                let kind = spec.cell(x, y).kind;
                spec.set_cell(x, y, Cell { kind, reward });
            } else {
                return Err(err(format!("unknown key {key:?}")));
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// `n × n` open grid with the goal in the top-right corner.
pub fn make_open_goal_grid(n: usize, goal_reward: f64) -> Result<GridSpec> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("grid side {n} < 2")));
    }
    let mut spec = GridSpec::open(n, n)?;
    spec.set_cell(
        n,
        n,
        Cell {
            kind: CellKind::Goal,
            reward: goal_reward,
        },
    );
    Ok(spec)
}

/// Three rooms side by side, 60 columns by 21 rows, separated by wall columns
/// with a single-cell door in the middle row. The goal sits in the
/// bottom-right corner.
pub fn make_three_room() -> GridSpec {
    make_three_room_with_door(THREE_ROOM_DOOR_ROW).expect("default door row is valid")
}

/// [`make_three_room`] with both doors on row `door_row`.
pub fn make_three_room_with_door(door_row: usize) -> Result<GridSpec> {
    if !(1..=THREE_ROOM_HEIGHT).contains(&door_row) {
        return Err(Error::InvalidArgument(format!(
            "door row {door_row} outside 1..=21"
        )));
    }
    let mut spec = GridSpec::open(THREE_ROOM_WIDTH, THREE_ROOM_HEIGHT)?;
    for &x in &THREE_ROOM_WALL_COLUMNS {
        for y in 1..=THREE_ROOM_HEIGHT {
            if y != door_row {
                spec.set_cell(x, y, Cell::WALL);
            }
        }
    }
    spec.set_cell(
        THREE_ROOM_WIDTH,
        1,
        Cell {
            kind: CellKind::Goal,
            reward: DEFAULT_GOAL_REWARD,
        },
    );
    Ok(spec)
}

/// Start cell of the three-room task: top-left of the first room.
pub fn three_room_start() -> (usize, usize) {
    (1, THREE_ROOM_HEIGHT)
}

/// Plain 21×60 grid where the cells that are walls in the three-room layout
/// pay `penalty`. Every other cell is an ordinary zero-reward cell; there is
/// no goal.
pub fn make_wall_penalty_grid(penalty: f64) -> Result<GridSpec> {
    if !(penalty < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "penalty {penalty} must be negative"
        )));
    }
    let rooms = make_three_room();
    let mut spec = GridSpec::open(rooms.width, rooms.height)?;
    for y in 1..=spec.height {
        for x in 1..=spec.width {
            if rooms.cell(x, y).kind == CellKind::Wall {
                spec.set_cell(
                    x,
                    y,
                    Cell {
                        kind: CellKind::Normal,
                        reward: penalty,
                    },
                );
            }
        }
    }
    Ok(spec)
}

/// `n × n` goal grid with `n_mines` mines at distinct non-goal cells, each
/// paying an integer reward drawn uniformly from `{-5, …, -1}`.
pub fn make_mine_grid(n: usize, n_mines: usize, seed: u64) -> Result<GridSpec> {
    let mut spec = make_open_goal_grid(n, DEFAULT_GOAL_REWARD)?;
    let capacity = n * n - 2;
    if n_mines > capacity {
        return Err(Error::InvalidArgument(format!(
            "{n_mines} mines do not fit; at most {capacity}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Candidate cells exclude the goal (the last offset).
    let mut picks = index::sample(&mut rng, n * n - 1, n_mines).into_vec();
    picks.sort_unstable();
    for offset in picks {
        let reward = rng.gen_range(MINE_REWARD_MIN..=MINE_REWARD_MAX) as f64;
        spec.cells[offset] = Cell {
            kind: CellKind::Mine,
            reward,
        };
    }
    if n_mines > 0 {
        spec.seed = Some(seed);
    }
    Ok(spec)
}

/// Deterministic four-action MDP of a grid. Moves into walls or off the grid
/// stay put; the goal self-loops under every action. The reward of a move is
/// the reward of the cell it lands in.
pub fn grid_to_mdp<T: Scalar>(spec: &GridSpec, alpha: T) -> Result<TabularMdp<T>> {
    spec.validate()?;
    let coords = spec.state_coords();
    let table = spec.state_index_table();
    let n = coords.len();
    let mut transitions = vec![Vec::with_capacity(n); Action::ALL.len()];
    let mut rewards = DMatrix::zeros(n, Action::ALL.len());
    for (s, &(x, y)) in coords.iter().enumerate() {
        let is_goal = spec.cell(x, y).kind == CellKind::Goal;
        for action in Action::ALL {
            let (nx, ny) = if is_goal {
                (x, y)
            } else {
                spec.neighbour(x, y, action).unwrap_or((x, y))
            };
            let next = table[spec.offset(nx, ny)].expect("landing cell is open");
            transitions[action as usize].push(vec![(next, T::one())]);
            rewards[(s, action as usize)] = T::lit(spec.cell(nx, ny).reward);
        }
    }
    TabularMdp::new(transitions, rewards, alpha)
}

/// Undirected 4-neighbour graph over the open cells, carrying the cell
/// rewards.
pub fn build_state_graph<T: Scalar>(spec: &GridSpec) -> Result<StateGraph<T>> {
    spec.validate()?;
    let coords = spec.state_coords();
    let table = spec.state_index_table();
    let neighbours = coords
        .iter()
        .map(|&(x, y)| {
            Action::ALL
                .iter()
                .filter_map(|&a| spec.neighbour(x, y, a))
                .map(|(nx, ny)| table[spec.offset(nx, ny)].expect("open cell"))
                .collect()
        })
        .collect();
    let rewards =
        DVector::from_iterator(coords.len(), spec.state_rewards().into_iter().map(T::lit));
    StateGraph::from_neighbours(neighbours, rewards)
}

/// Shaping potential, one value per state.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialFunction<T: Scalar> {
    pub psi: DVector<T>,
}

impl<T: Scalar> PotentialFunction<T> {
    pub fn new(psi: DVector<T>) -> Result<Self> {
        if let Some(v) = psi.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("potential {v}")));
        }
        Ok(Self { psi })
    }
}

/// Column-major ramp `ψ(x, y) = (x − 1)·N + y` on a square open grid:
/// increases with every up or right move.
pub fn potential_psi<T: Scalar>(spec: &GridSpec) -> Result<PotentialFunction<T>> {
    if spec.width != spec.height {
        return Err(Error::InvalidArgument(format!(
            "potential needs a square grid, got {}×{}",
            spec.width, spec.height
        )));
    }
    if spec.cells.iter().any(|c| c.kind == CellKind::Wall) {
        return Err(Error::InvalidArgument(
            "potential needs a grid without walls".into(),
        ));
    }
    let n = spec.width;
    let psi = spec
        .state_coords()
        .into_iter()
        .map(|(x, y)| T::from_usize_lossy((x - 1) * n + y));
    PotentialFunction::new(DVector::from_iterator(spec.n_states(), psi))
}
