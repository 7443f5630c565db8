use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EnvError, EnvParams, Step};

/// Width of the color vector rendered for each cell.
pub const PALETTE_DIM: usize = 4;

// Domain separators so layout and palette draws never share a stream.
const LAYOUT_DOMAIN: u64 = 0x4c41_594f_5554_0000;
const PALETTE_DOMAIN: u64 = 0x5041_4c45_5454_4500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellType {
    Empty = 0,
    Wall = 1,
    Goal = 2,
    Agent = 3,
}

/// Wall pattern plus start and goal cells. Shared by every level of the
/// same layout class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub size: usize,
    pub walls: Vec<bool>,
    pub start: usize,
    pub goal: usize,
}

impl Layout {
    /// Deterministic layout for `class`: border walls, random interior walls,
    /// start and goal at least `size / 2 + 1` moves apart.
    pub fn for_class(size: usize, class: u64) -> Layout {
        assert!(size >= 4, "grid must be at least 4x4");
        let mut rng = ChaCha8Rng::seed_from_u64(LAYOUT_DOMAIN ^ class);
        let min_distance = size / 2 + 1;
        loop {
            let mut walls = vec![false; size * size];
            for r in 0..size {
                for c in 0..size {
                    let border = r == 0 || c == 0 || r == size - 1 || c == size - 1;
                    walls[r * size + c] = border || rng.gen_bool(0.2);
                }
            }
            let open: Vec<usize> = (0..size * size).filter(|&i| !walls[i]).collect();
            if open.len() < 2 {
                continue;
            }
            let start = open[rng.gen_range(0..open.len())];
            let goal = open[rng.gen_range(0..open.len())];
            if start == goal {
                continue;
            }
            let layout = Layout {
                size,
                walls,
                start,
                goal,
            };
            match layout.distance(start, goal) {
                Some(d) if d >= min_distance => return layout,
                _ => continue,
            }
        }
    }

    /// Breadth-first shortest path length in moves.
    pub fn distance(&self, from: usize, to: usize) -> Option<usize> {
        let n = self.size;
        let mut dist = vec![usize::MAX; n * n];
        let mut queue = VecDeque::new();
        dist[from] = 0;
        queue.push_back(from);
        while let Some(cell) = queue.pop_front() {
            if cell == to {
                return Some(dist[cell]);
            }
            for action in 0..PaletteGrid::NUM_ACTIONS {
                let next = self.neighbor(cell, action);
                if dist[next] == usize::MAX {
                    dist[next] = dist[cell] + 1;
                    queue.push_back(next);
                }
            }
        }
        None
    }

    /// Cell reached by `action` from `cell`; walls block movement.
    pub fn neighbor(&self, cell: usize, action: usize) -> usize {
        let n = self.size;
        let (r, c) = (cell / n, cell % n);
        let (nr, nc) = match action {
            0 => (r.wrapping_sub(1), c),
            1 => (r + 1, c),
            2 => (r, c.wrapping_sub(1)),
            _ => (r, c + 1),
        };
        if nr >= n || nc >= n || self.walls[nr * n + nc] {
            cell
        } else {
            nr * n + nc
        }
    }
}

/// N x N gridworld with four moves (up, down, left, right), a goal worth
/// `goal_reward`, and a per-level color palette.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaletteGrid {
    level_seed: u64,
    layout: Layout,
    palette: [[f32; PALETTE_DIM]; 4],
    agent: usize,
    steps: u32,
    done: bool,
    time_limit: u32,
    goal_reward: f32,
}

impl PaletteGrid {
    pub const NUM_ACTIONS: usize = 4;

    pub fn obs_dim_for(size: usize) -> usize {
        size * size * (PALETTE_DIM + 1)
    }

    pub fn new(level_seed: u64, params: &EnvParams) -> Self {
        let class = level_seed % params.layout_pool.max(1) as u64;
        let layout = Layout::for_class(params.grid_size, class);
        let mut rng = ChaCha8Rng::seed_from_u64(PALETTE_DOMAIN ^ level_seed);
        let mut palette = [[0.0f32; PALETTE_DIM]; 4];
        for color in &mut palette {
            for v in color.iter_mut() {
                *v = rng.gen::<f32>();
            }
        }
        let agent = layout.start;
        Self {
            level_seed,
            layout,
            palette,
            agent,
            steps: 0,
            done: false,
            time_limit: params.time_limit,
            goal_reward: params.goal_reward,
        }
    }

    pub fn level_seed(&self) -> u64 {
        self.level_seed
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn palette(&self) -> &[[f32; PALETTE_DIM]; 4] {
        &self.palette
    }

    pub fn agent(&self) -> usize {
        self.agent
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn obs_dim(&self) -> usize {
        Self::obs_dim_for(self.layout.size)
    }

    pub fn reset(&mut self) {
        self.agent = self.layout.start;
        self.steps = 0;
        self.done = false;
    }

    pub fn cell_type(&self, cell: usize) -> CellType {
        if cell == self.agent {
            CellType::Agent
        } else if cell == self.layout.goal {
            CellType::Goal
        } else if self.layout.walls[cell] {
            CellType::Wall
        } else {
            CellType::Empty
        }
    }

    /// Per-cell palette colors followed by a one-hot agent position channel.
    pub fn write_observation(&self, out: &mut [f32]) {
        let cells = self.layout.size * self.layout.size;
        debug_assert_eq!(out.len(), cells * (PALETTE_DIM + 1));
        let (colors, position) = out.split_at_mut(cells * PALETTE_DIM);
        for cell in 0..cells {
            let color = &self.palette[self.cell_type(cell) as usize];
            colors[cell * PALETTE_DIM..(cell + 1) * PALETTE_DIM].copy_from_slice(color);
        }
        position.fill(0.0);
        position[self.agent] = 1.0;
    }

    pub fn step(&mut self, action: usize) -> Result<Step, EnvError> {
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        if action >= Self::NUM_ACTIONS {
            return Err(EnvError::InvalidAction {
                action,
                actions: Self::NUM_ACTIONS,
            });
        }
        self.agent = self.layout.neighbor(self.agent, action);
        self.steps += 1;
        if self.agent == self.layout.goal {
            self.done = true;
            return Ok(Step {
                reward: self.goal_reward,
                done: true,
                truncated: false,
            });
        }
        let truncated = self.steps >= self.time_limit;
        self.done = truncated;
        Ok(Step {
            reward: 0.0,
            done: truncated,
            truncated,
        })
    }
}
