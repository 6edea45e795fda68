//! Exploration maps for grid navigation searches.

use std::collections::BTreeSet;

use expose_core::env::gridnav::Cell;
use expose_core::env::GridInstance;
use expose_core::tree::StatsDump;
use expose_core::StateKey;

const FREE: [u8; 3] = [255, 255, 255];
const OBSTACLE: [u8; 3] = [0, 0, 0];
const VISITED: [u8; 3] = [160, 160, 160];
const AGENT: [u8; 3] = [30, 90, 220];
const GOAL: [u8; 3] = [40, 170, 60];

#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationMap {
    pub width: usize,
    pub height: usize,
    pub agent: Cell,
    pub goal: Cell,
    obstacles: Vec<bool>,
    visited: BTreeSet<Cell>,
    /// Dump keys that do not decode to a cell of this instance.
    pub foreign_keys: usize,
}

impl ExplorationMap {
    /// `agent` defaults to the instance start.
    pub fn new(grid: &GridInstance, dump: &StatsDump, agent: Option<Cell>) -> Self {
        let mut visited = BTreeSet::new();
        let mut foreign_keys = 0;
        for hex in &dump.visited {
            match StateKey::from_hex(hex).and_then(|k| grid.decode(&k)) {
                Some(state) => {
                    visited.insert(state.agent);
                }
                None => foreign_keys += 1,
            }
        }
        let (width, height) = (grid.width(), grid.height());
        let obstacles = (0..height)
            .flat_map(|r| (0..width).map(move |c| Cell::new(r, c)))
            .map(|c| grid.is_obstacle(c))
            .collect();
        Self {
            width,
            height,
            agent: agent.unwrap_or_else(|| grid.start()),
            goal: grid.goal(),
            obstacles,
            visited,
            foreign_keys,
        }
    }

    pub fn visited_cells(&self) -> usize {
        self.visited.len()
    }

    pub fn is_visited(&self, cell: Cell) -> bool {
        self.visited.contains(&cell)
    }

    fn colour(&self, cell: Cell) -> [u8; 3] {
        if cell == self.agent {
            AGENT
        } else if cell == self.goal {
            GOAL
        } else if self.obstacles[cell.row * self.width + cell.col] {
            OBSTACLE
        } else if self.visited.contains(&cell) {
            VISITED
        } else {
            FREE
        }
    }

    /// `A` agent, `G` goal, `#` obstacle, `+` visited, `.` free.
    pub fn to_ascii(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for r in 0..self.height {
            for c in 0..self.width {
                let cell = Cell::new(r, c);
                out.push(match self.colour(cell) {
                    AGENT => 'A',
                    GOAL => 'G',
                    OBSTACLE => '#',
                    VISITED => '+',
                    _ => '.',
                });
            }
            out.push('\n');
        }
        out
    }

    /// Binary PPM with each cell drawn as a `scale`×`scale` block.
    pub fn to_ppm(&self, scale: usize) -> Vec<u8> {
        let scale = scale.max(1);
        let (w, h) = (self.width * scale, self.height * scale);
        let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
        out.reserve(w * h * 3);
        for y in 0..h {
            for x in 0..w {
                out.extend_from_slice(&self.colour(Cell::new(y / scale, x / scale)));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use expose_core::Environment;

    fn grid() -> GridInstance {
        let mut obstacles = vec![false; 12];
        obstacles[5] = true;
        GridInstance::new(4, 3, obstacles, Cell::new(0, 0), Cell::new(2, 3), 1).unwrap()
    }

    #[test]
    fn empty_dump_shows_only_the_layout() {
        let g = grid();
        let map = ExplorationMap::new(
            &g,
            &StatsDump {
                nodes: vec![],
                visited: vec![],
            },
            None,
        );
        assert_eq!(map.to_ascii(), "A...\n.#..\n...G\n");
        assert_eq!(map.visited_cells(), 0);
    }

    #[test]
    fn visited_cells_come_from_keys() {
        let g = grid();
        let keys = [Cell::new(0, 1), Cell::new(1, 2), Cell::new(0, 1)].map(|agent| {
            g.encode(&expose_core::env::gridnav::GridState { agent })
                .to_hex()
        });
        let dump = StatsDump {
            nodes: vec![],
            visited: keys.into_iter().chain(["zz".to_string()]).collect(),
        };
        let map = ExplorationMap::new(&g, &dump, None);
        assert_eq!(map.visited_cells(), 2);
        assert_eq!(map.foreign_keys, 1);
        assert_eq!(map.to_ascii(), "A+..\n.#+.\n...G\n");
        let ppm = map.to_ppm(2);
        assert!(ppm.starts_with(b"P6\n8 6\n255\n"));
        assert_eq!(ppm.len(), "P6\n8 6\n255\n".len() + 8 * 6 * 3);
    }
}
