//! Gridworld builders producing [`TabularEnv`]s.
//!
//! Cells are indexed `x + y * width`. Moves that would leave the grid keep
//! the agent in place. With probability `slip_prob` the chosen move is
//! replaced by a uniformly random one of the four moves.

use super::tabular::fix_rows;
use super::{EnvError, TabularEnv, TabularMDP};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridAction {
    Right = 0,
    Left = 1,
    Down = 2,
    Up = 3,
}

impl GridAction {
    pub const ALL: [GridAction; 4] = [
        GridAction::Right,
        GridAction::Left,
        GridAction::Down,
        GridAction::Up,
    ];

    fn delta(self) -> (i64, i64) {
        match self {
            GridAction::Right => (1, 0),
            GridAction::Left => (-1, 0),
            GridAction::Down => (0, 1),
            GridAction::Up => (0, -1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridworldConfig {
    pub width: usize,
    pub height: usize,
    pub goal: (usize, usize),
    pub start: (usize, usize),
    pub slip_prob: f64,
    /// Goal is absorbing and ends the episode.
    pub terminal_goal: bool,
    pub horizon: usize,
    pub gamma: f64,
}

impl Default for GridworldConfig {
    fn default() -> Self {
        Self {
            width: 5,
            height: 5,
            goal: (4, 4),
            start: (0, 0),
            slip_prob: 0.0,
            terminal_goal: true,
            horizon: 50,
            gamma: 0.99,
        }
    }
}

/// Two goals visited alternately; the state carries which one is next.
#[derive(Debug, Clone, PartialEq)]
pub struct PatrolConfig {
    pub width: usize,
    pub height: usize,
    pub goals: [(usize, usize); 2],
    pub start: (usize, usize),
    pub slip_prob: f64,
    pub horizon: usize,
    pub gamma: f64,
}

impl Default for PatrolConfig {
    fn default() -> Self {
        Self {
            width: 5,
            height: 5,
            goals: [(4, 0), (0, 4)],
            start: (0, 0),
            slip_prob: 0.0,
            horizon: 60,
            gamma: 0.99,
        }
    }
}

pub struct Gridworld;

fn move_cell(width: usize, height: usize, cell: usize, action: GridAction) -> usize {
    let (x, y) = ((cell % width) as i64, (cell / width) as i64);
    let (dx, dy) = action.delta();
    let nx = (x + dx).clamp(0, width as i64 - 1);
    let ny = (y + dy).clamp(0, height as i64 - 1);
    (nx + ny * width as i64) as usize
}

fn check_cell(width: usize, height: usize, c: (usize, usize), what: &str) -> Result<usize, EnvError> {
    if c.0 >= width || c.1 >= height {
        return Err(EnvError::Invalid(format!(
            "{what} {c:?} outside {width}x{height} grid"
        )));
    }
    Ok(c.0 + c.1 * width)
}

/// Distribution over next cells from `cell` under `action` with slipping.
fn cell_dist(width: usize, height: usize, slip: f64, cell: usize, action: GridAction) -> Vec<f64> {
    let mut dist = vec![0.0; width * height];
    dist[move_cell(width, height, cell, action)] += 1.0 - slip;
    for alt in GridAction::ALL {
        dist[move_cell(width, height, cell, alt)] += slip / 4.0;
    }
    dist
}

impl Gridworld {
    /// Single-goal gridworld; reward `R(s, a) = P(s' = goal | s, a)`.
    pub fn build(cfg: &GridworldConfig) -> Result<TabularEnv, EnvError> {
        let (w, h) = (cfg.width, cfg.height);
        if w == 0 || h == 0 {
            return Err(EnvError::Invalid("empty grid".into()));
        }
        if !(0.0..=1.0).contains(&cfg.slip_prob) {
            return Err(EnvError::Invalid("slip_prob must lie in [0, 1]".into()));
        }
        let goal = check_cell(w, h, cfg.goal, "goal")?;
        let start = check_cell(w, h, cfg.start, "start")?;
        let n = w * h;
        let na = GridAction::ALL.len();
        let mut p = Vec::with_capacity(n * na * n);
        let mut r = Vec::with_capacity(n * na);
        for cell in 0..n {
            for action in GridAction::ALL {
                let dist = if cfg.terminal_goal && cell == goal {
                    super::one_hot(goal, n)
                } else {
                    cell_dist(w, h, cfg.slip_prob, cell, action)
                };
                r.push(if cfg.terminal_goal && cell == goal {
                    0.0
                } else {
                    dist[goal]
                });
                p.extend(dist);
            }
        }
        fix_rows(&mut p, n);
        let mut terminal = vec![false; n];
        terminal[goal] = cfg.terminal_goal;
        let mdp = TabularMDP::new(n, na, p, r, super::one_hot(start, n), Some(terminal))?;
        TabularEnv::new("gridworld", mdp, cfg.horizon, cfg.gamma)
    }

    /// Cyclic patrol: state index `cell + phase * width * height`, where
    /// `phase` names the goal to visit next. Entering it pays 1 and flips
    /// the phase. No terminal states.
    pub fn patrol(cfg: &PatrolConfig) -> Result<TabularEnv, EnvError> {
        let (w, h) = (cfg.width, cfg.height);
        if w == 0 || h == 0 {
            return Err(EnvError::Invalid("empty grid".into()));
        }
        let goals = [
            check_cell(w, h, cfg.goals[0], "goal")?,
            check_cell(w, h, cfg.goals[1], "goal")?,
        ];
        if goals[0] == goals[1] {
            return Err(EnvError::Invalid("patrol goals must differ".into()));
        }
        let start = check_cell(w, h, cfg.start, "start")?;
        let cells = w * h;
        let n = 2 * cells;
        let na = GridAction::ALL.len();
        let mut p = Vec::with_capacity(n * na * n);
        let mut r = Vec::with_capacity(n * na);
        for phase in 0..2 {
            for cell in 0..cells {
                for action in GridAction::ALL {
                    let dist = cell_dist(w, h, cfg.slip_prob, cell, action);
                    let mut row = vec![0.0; n];
                    for (next, &pr) in dist.iter().enumerate() {
                        let next_phase = if next == goals[phase] { 1 - phase } else { phase };
                        row[next + next_phase * cells] += pr;
                    }
                    r.push(dist[goals[phase]]);
                    p.extend(row);
                }
            }
        }
        fix_rows(&mut p, n);
        let mdp = TabularMDP::new(n, na, p, r, super::one_hot(start, n), None)?;
        TabularEnv::new("patrol", mdp, cfg.horizon, cfg.gamma)
    }
}
