use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{RewardTable, TabularMdp};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum EnvFamily {
    /// Line of `n` states, actions left/right, start in the middle.
    Chain { n: usize },
    /// Grid with a cliff along the bottom row between start and goal.
    Cliff { width: usize, height: usize },
    /// Square grid split by one wall row and one wall column, each with two
    /// doors.
    FourRooms { size: usize },
}

fn default_gamma() -> f64 {
    0.98
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    #[serde(flatten)]
    pub family: EnvFamily,
    #[serde(default)]
    pub slip: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

impl EnvSpec {
    pub fn chain(n: usize, slip: f64) -> Self {
        Self { family: EnvFamily::Chain { n }, slip, gamma: default_gamma() }
    }

    pub fn cliff(width: usize, height: usize, slip: f64) -> Self {
        Self { family: EnvFamily::Cliff { width, height }, slip, gamma: default_gamma() }
    }

    pub fn four_rooms(size: usize, slip: f64) -> Self {
        Self { family: EnvFamily::FourRooms { size }, slip, gamma: default_gamma() }
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            EnvFamily::Chain { .. } => "chain",
            EnvFamily::Cliff { .. } => "cliff",
            EnvFamily::FourRooms { .. } => "four_rooms",
        }
    }

    pub fn with_slip(&self, slip: f64) -> Self {
        Self { slip, ..self.clone() }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.slip) {
            return Err(Error::BadSpec(format!("slip {} outside [0, 1)", self.slip)));
        }
        match self.family {
            EnvFamily::Chain { n } if n < 2 => Err(Error::BadSpec("chain needs n >= 2".into())),
            EnvFamily::Cliff { width, height } if width < 3 || height < 2 => {
                Err(Error::BadSpec("cliff needs width >= 3 and height >= 2".into()))
            }
            EnvFamily::FourRooms { size } if size < 5 => {
                Err(Error::BadSpec("four_rooms needs size >= 5".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Grid actions: up, right, down, left.
const MOVES: [(isize, isize); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

/// Free cells of a grid and their state indices in row-major order.
struct Grid {
    height: usize,
    width: usize,
    index: Vec<Option<usize>>,
    cells: Vec<(usize, usize)>,
}

impl Grid {
    fn new(height: usize, width: usize, wall: impl Fn(usize, usize) -> bool) -> Self {
        let mut index = vec![None; height * width];
        let mut cells = Vec::new();
        for r in 0..height {
            for c in 0..width {
                if !wall(r, c) {
                    index[r * width + c] = Some(cells.len());
                    cells.push((r, c));
                }
            }
        }
        Self { height, width, index, cells }
    }

    fn state(&self, r: usize, c: usize) -> Option<usize> {
        self.index[r * self.width + c]
    }

    /// Cell reached by `action`; bumping into a wall or the border stays put.
    fn step(&self, s: usize, action: usize) -> usize {
        let (r, c) = self.cells[s];
        let (dr, dc) = MOVES[action];
        let (nr, nc) = (r as isize + dr, c as isize + dc);
        if nr < 0 || nc < 0 || nr >= self.height as isize || nc >= self.width as isize {
            return s;
        }
        self.state(nr as usize, nc as usize).unwrap_or(s)
    }
}

/// Kernel where action `a` has its own effect with probability `1 - slip`
/// and each other action's effect with probability `slip / (A - 1)`.
fn slip_kernel(n_states: usize, n_actions: usize, slip: f64, effect: impl Fn(usize, usize) -> usize) -> Vec<f64> {
    let mut kernel = vec![0.0; n_states * n_actions * n_states];
    let other = if n_actions > 1 { slip / (n_actions - 1) as f64 } else { 0.0 };
    for s in 0..n_states {
        for a in 0..n_actions {
            let row = &mut kernel[(s * n_actions + a) * n_states..(s * n_actions + a + 1) * n_states];
            for b in 0..n_actions {
                row[effect(s, b)] += if a == b { 1.0 - slip } else { other };
            }
        }
    }
    kernel
}

fn point_mass(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

fn indicator(name: &str, n: usize, cells: &[(usize, f64)]) -> Result<RewardTable> {
    let mut r = vec![0.0; n];
    for &(s, v) in cells {
        r[s] = v;
    }
    RewardTable::new(name, r)
}

/// Builds the nominal MDP and its named tasks. Construction is
/// deterministic.
pub fn build_env(spec: &EnvSpec) -> Result<(TabularMdp, BTreeMap<String, RewardTable>)> {
    spec.validate()?;
    let mut tasks = BTreeMap::new();
    let mdp = match spec.family {
        EnvFamily::Chain { n } => {
            let effect = |s: usize, a: usize| if a == 0 { s.saturating_sub(1) } else { (s + 1).min(n - 1) };
            let kernel = slip_kernel(n, 2, spec.slip, effect);
            tasks.insert("left_end".into(), indicator("left_end", n, &[(0, 1.0)])?);
            tasks.insert("right_end".into(), indicator("right_end", n, &[(n - 1, 1.0)])?);
            TabularMdp::new(n, 2, kernel, point_mass(n, n / 2), spec.gamma)?
        }
        EnvFamily::Cliff { width, height } => {
            let grid = Grid::new(height, width, |_, _| false);
            let n = grid.cells.len();
            let bottom = height - 1;
            let start = grid.state(bottom, 0).expect("free cell");
            let goal = grid.state(bottom, width - 1).expect("free cell");
            let cliff: Vec<usize> = (1..width - 1).filter_map(|c| grid.state(bottom, c)).collect();
            let mut kernel = slip_kernel(n, 4, spec.slip, |s, a| grid.step(s, a));
            // falling in sends the agent back to the start
            for &s in &cliff {
                for a in 0..4 {
                    let row = &mut kernel[(s * 4 + a) * n..(s * 4 + a + 1) * n];
                    row.iter_mut().for_each(|x| *x = 0.0);
                    row[start] = 1.0;
                }
            }
            let penalty: Vec<(usize, f64)> = cliff.iter().map(|&s| (s, -1.0)).collect();
            let top_right = grid.state(0, width - 1).expect("free cell");
            tasks.insert(
                "goal".into(),
                indicator("goal", n, &[penalty.as_slice(), &[(goal, 1.0)]].concat())?,
            );
            tasks.insert(
                "top_right".into(),
                indicator("top_right", n, &[penalty.as_slice(), &[(top_right, 1.0)]].concat())?,
            );
            TabularMdp::new(n, 4, kernel, point_mass(n, start), spec.gamma)?
        }
        EnvFamily::FourRooms { size } => {
            let mid = size / 2;
            let doors = [size / 4, size - 1 - size / 4];
            let grid = Grid::new(size, size, |r, c| {
                (r == mid && !doors.contains(&c)) || (c == mid && !doors.contains(&r))
            });
            let n = grid.cells.len();
            let kernel = slip_kernel(n, 4, spec.slip, |s, a| grid.step(s, a));
            let corners = [
                ("top_left", 0, 0),
                ("top_right", 0, size - 1),
                ("bottom_left", size - 1, 0),
                ("bottom_right", size - 1, size - 1),
            ];
            for (name, r, c) in corners {
                let s = grid.state(r, c).expect("corners are free");
                tasks.insert(name.into(), indicator(name, n, &[(s, 1.0)])?);
            }
            TabularMdp::new(n, 4, kernel, vec![1.0 / n as f64; n], spec.gamma)?
        }
    };
    Ok((mdp, tasks))
}

/// Grid coordinates of each state of a four-rooms or cliff environment, in
/// state order. `None` for the chain.
pub fn grid_cells(spec: &EnvSpec) -> Option<Vec<(usize, usize)>> {
    match spec.family {
        EnvFamily::Chain { .. } => None,
        EnvFamily::Cliff { width, height } => Some(Grid::new(height, width, |_, _| false).cells),
        EnvFamily::FourRooms { size } => {
            let mid = size / 2;
            let doors = [size / 4, size - 1 - size / 4];
            Some(
                Grid::new(size, size, |r, c| {
                    (r == mid && !doors.contains(&c)) || (c == mid && !doors.contains(&r))
                })
                .cells,
            )
        }
    }
}
