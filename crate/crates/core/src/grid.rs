//! Stochastic grid world with noisy, range-limited sensors.
//!
//! Cells are `(x, y)` with `x` growing east and `y` growing north; the state
//! index of a cell is `y * width + x`. Actions are north, south, east, west
//! and stay. A move goes the intended way with probability `1 - 2 * slip` and
//! slips to each perpendicular direction with probability `slip`; any move
//! that would leave the grid keeps the agent in place. A cell inside a
//! sensor's range emits that sensor's symbol with its hit probability and the
//! null symbol `"0"` otherwise; uncovered cells always emit `"0"`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::hmm::ObservationModel;
use crate::mdp::Mdp;
use crate::objective::SecretSpec;

pub const NULL_SYMBOL: &str = "0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    North,
    South,
    East,
    West,
    Stay,
}

impl Action {
    pub const ALL: [Action; 5] = [Action::North, Action::South, Action::East, Action::West, Action::Stay];

    pub fn name(self) -> &'static str {
        match self {
            Action::North => "north",
            Action::South => "south",
            Action::East => "east",
            Action::West => "west",
            Action::Stay => "stay",
        }
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Action::North => (0, 1),
            Action::South => (0, -1),
            Action::East => (1, 0),
            Action::West => (-1, 0),
            Action::Stay => (0, 0),
        }
    }

    fn perpendicular(self) -> [Action; 2] {
        match self {
            Action::North | Action::South => [Action::East, Action::West],
            Action::East | Action::West => [Action::North, Action::South],
            Action::Stay => [Action::Stay, Action::Stay],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sensor {
    pub cells: Vec<Cell>,
    pub symbol: String,
    pub hit_prob: f64,
}

impl Sensor {
    /// Sensor covering the rectangle `[x0, x1] x [y0, y1]`.
    pub fn rect(symbol: &str, hit_prob: f64, x0: usize, x1: usize, y0: usize, y1: usize) -> Self {
        let cells = (y0..=y1).flat_map(|y| (x0..=x1).map(move |x| Cell::new(x, y))).collect();
        Self { cells, symbol: symbol.to_string(), hit_prob }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    /// Probability of slipping to each perpendicular direction.
    pub slip: f64,
    pub sensors: Vec<Sensor>,
    pub secret_cells: Vec<Cell>,
    pub goal_cells: Vec<Cell>,
    /// Support and weights of the initial distribution.
    pub initial: Vec<(Cell, f64)>,
    /// Reward for every step spent on a goal cell.
    pub goal_reward: f64,
    pub discount: f64,
}

impl GridSpec {
    /// The shipped 6x6 layout with a single start cell in the south-west
    /// corner.
    ///
    /// ```text
    ///  y=5  .  .  r  r  .  .
    ///  y=4  .  .  r  r  .  .
    ///  y=3  b  b  S  G  y  y
    ///  y=2  b  b  G  S  y  y
    ///  y=1  .  .  g  g  .  .
    ///  y=0  @  .  g  g  .  .
    ///      x=0 1  2  3  4  5
    /// ```
    ///
    /// `S` secret, `G` goal, `@` start; letters are sensor ranges.
    pub fn default_layout() -> Self {
        Self {
            width: 6,
            height: 6,
            slip: 0.1,
            sensors: vec![
                Sensor::rect("b", 0.9, 0, 1, 2, 3),
                Sensor::rect("r", 0.9, 2, 3, 4, 5),
                Sensor::rect("y", 0.9, 4, 5, 2, 3),
                Sensor::rect("g", 0.9, 2, 3, 0, 1),
            ],
            secret_cells: vec![Cell::new(2, 3), Cell::new(3, 2)],
            goal_cells: vec![Cell::new(2, 2), Cell::new(3, 3)],
            initial: vec![(Cell::new(0, 0), 1.0)],
            goal_reward: 0.1,
            discount: 0.95,
        }
    }

    /// The default layout with a uniform start over the four corners.
    pub fn default_four_corners() -> Self {
        let mut spec = Self::default_layout();
        spec.initial = [(0, 0), (0, 5), (5, 0), (5, 5)]
            .into_iter()
            .map(|(x, y)| (Cell::new(x, y), 0.25))
            .collect();
        spec
    }

    pub fn n_states(&self) -> usize {
        self.width * self.height
    }

    pub fn state_of(&self, cell: Cell) -> usize {
        cell.y * self.width + cell.x
    }

    pub fn cell_of(&self, state: usize) -> Cell {
        Cell::new(state % self.width, state / self.width)
    }

    fn check_cell(&self, cell: Cell, what: &str) -> Result<()> {
        if cell.x >= self.width || cell.y >= self.height {
            return Err(Error::InvalidModel(format!(
                "{what} cell ({}, {}) outside {}x{} grid",
                cell.x, cell.y, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidModel("grid must have at least one cell".into()));
        }
        if !(0.0..0.5).contains(&self.slip) {
            return Err(Error::InvalidModel(format!("slip {} outside [0, 0.5)", self.slip)));
        }
        for c in &self.secret_cells {
            self.check_cell(*c, "secret")?;
        }
        for c in &self.goal_cells {
            self.check_cell(*c, "goal")?;
        }
        if self.initial.is_empty() {
            return Err(Error::InvalidModel("initial distribution has empty support".into()));
        }
        for (c, w) in &self.initial {
            self.check_cell(*c, "initial")?;
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::InvalidModel(format!("initial weight {w} is not a probability")));
            }
        }
        let total: f64 = self.initial.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidModel(format!("initial weights sum to {total}")));
        }
        for (i, s) in self.sensors.iter().enumerate() {
            if !(0.0..=1.0).contains(&s.hit_prob) {
                return Err(Error::InvalidModel(format!("sensor {:?} hit probability {}", s.symbol, s.hit_prob)));
            }
            if s.symbol == NULL_SYMBOL {
                return Err(Error::InvalidModel("sensor symbol \"0\" is reserved for the null reading".into()));
            }
            if self.sensors[..i].iter().any(|o| o.symbol == s.symbol) {
                return Err(Error::InvalidModel(format!("duplicate sensor symbol {:?}", s.symbol)));
            }
            for c in &s.cells {
                self.check_cell(*c, "sensor")?;
            }
        }
        Ok(())
    }
}

/// A built grid world: the MDP, the observer's emission model and the layout
/// that produced them.
#[derive(Debug, Clone)]
pub struct GridWorld {
    pub spec: GridSpec,
    pub mdp: Mdp,
    pub obs: ObservationModel,
}

impl GridWorld {
    pub fn secret(&self) -> SecretSpec {
        let states: Vec<usize> = self.spec.secret_cells.iter().map(|c| self.spec.state_of(*c)).collect();
        SecretSpec::new(self.spec.n_states(), &states).expect("cells validated at build time")
    }

    pub fn goal_states(&self) -> Vec<usize> {
        self.spec.goal_cells.iter().map(|c| self.spec.state_of(*c)).collect()
    }

    pub fn state_name(&self, state: usize) -> String {
        let c = self.spec.cell_of(state);
        format!("c{}_{}", c.x, c.y)
    }
}

fn step(spec: &GridSpec, from: Cell, action: Action) -> Cell {
    let (dx, dy) = action.delta();
    let x = from.x as isize + dx;
    let y = from.y as isize + dy;
    if x < 0 || y < 0 || x >= spec.width as isize || y >= spec.height as isize {
        from
    } else {
        Cell::new(x as usize, y as usize)
    }
}

/// `build_gridworld(spec)`
pub fn build_gridworld(spec: &GridSpec) -> Result<GridWorld> {
    spec.validate()?;
    let n = spec.n_states();
    let k = Action::ALL.len();

    let mut transition = vec![0.0; n * k * n];
    for s in 0..n {
        let here = spec.cell_of(s);
        for (a, &action) in Action::ALL.iter().enumerate() {
            let row = &mut transition[(s * k + a) * n..(s * k + a + 1) * n];
            if action == Action::Stay {
                row[s] = 1.0;
                continue;
            }
            row[spec.state_of(step(spec, here, action))] += 1.0 - 2.0 * spec.slip;
            for side in action.perpendicular() {
                row[spec.state_of(step(spec, here, side))] += spec.slip;
            }
        }
    }

    let mut initial = vec![0.0; n];
    for (c, w) in &spec.initial {
        initial[spec.state_of(*c)] += w;
    }
    let total: f64 = initial.iter().sum();
    initial.iter_mut().for_each(|p| *p /= total);

    let mut reward = vec![0.0; n * k];
    for c in &spec.goal_cells {
        let s = spec.state_of(*c);
        reward[s * k..(s + 1) * k].iter_mut().for_each(|r| *r = spec.goal_reward);
    }
    let mdp = Mdp::new(n, k, transition, initial, reward, spec.discount)?;

    let mut symbols = vec![NULL_SYMBOL.to_string()];
    symbols.extend(spec.sensors.iter().map(|s| s.symbol.clone()));
    let m = symbols.len();
    let mut coverage: Vec<Option<usize>> = vec![None; n];
    for (idx, sensor) in spec.sensors.iter().enumerate() {
        for c in &sensor.cells {
            let s = spec.state_of(*c);
            match coverage[s] {
                Some(other) if other != idx => return Err(Error::OverlappingSensors { x: c.x, y: c.y }),
                _ => coverage[s] = Some(idx),
            }
        }
    }
    let mut emission = vec![0.0; n * m];
    for s in 0..n {
        match coverage[s] {
            Some(idx) => {
                let p = spec.sensors[idx].hit_prob;
                emission[s * m + idx + 1] = p;
                emission[s * m] = 1.0 - p;
            }
            None => emission[s * m] = 1.0,
        }
    }
    let obs = ObservationModel::new(n, symbols, emission)?;
    Ok(GridWorld { spec: spec.clone(), mdp, obs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_east_slips_north_and_south() {
        let world = build_gridworld(&GridSpec::default_layout()).unwrap();
        let spec = &world.spec;
        let from = spec.state_of(Cell::new(2, 2));
        let east = 2;
        let row = world.mdp.transition_row(from, east);
        assert!((row[spec.state_of(Cell::new(3, 2))] - 0.8).abs() < 1e-15);
        assert!((row[spec.state_of(Cell::new(2, 3))] - 0.1).abs() < 1e-15);
        assert!((row[spec.state_of(Cell::new(2, 1))] - 0.1).abs() < 1e-15);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn boundary_keeps_mass() {
        let world = build_gridworld(&GridSpec::default_layout()).unwrap();
        let spec = &world.spec;
        let corner = spec.state_of(Cell::new(0, 0));
        // south from the corner: blocked, lateral west blocked, lateral east moves
        let row = world.mdp.transition_row(corner, 1);
        assert!((row[corner] - 0.9).abs() < 1e-15);
        assert!((row[spec.state_of(Cell::new(1, 0))] - 0.1).abs() < 1e-15);
        for s in 0..spec.n_states() {
            for a in 0..5 {
                let total: f64 = world.mdp.transition_row(s, a).iter().sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sensor_and_null_emissions() {
        let world = build_gridworld(&GridSpec::default_layout()).unwrap();
        let spec = &world.spec;
        let blue = world.obs.symbol_index("b").unwrap();
        let null = world.obs.symbol_index("0").unwrap();
        let covered = spec.state_of(Cell::new(0, 2));
        assert!((world.obs.emission(covered, blue) - 0.9).abs() < 1e-15);
        assert!((world.obs.emission(covered, null) - 0.1).abs() < 1e-15);
        let open = spec.state_of(Cell::new(0, 0));
        assert_eq!(world.obs.emission(open, null), 1.0);
        for s in 0..spec.n_states() {
            assert!((world.obs.emission_row(s).iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn goal_reward_every_action() {
        let world = build_gridworld(&GridSpec::default_layout()).unwrap();
        let g = world.goal_states()[0];
        for a in 0..5 {
            assert_eq!(world.mdp.reward(g, a), 0.1);
        }
        assert_eq!(world.mdp.reward(0, 0), 0.0);
    }

    #[test]
    fn overlapping_sensors_rejected() {
        let mut spec = GridSpec::default_layout();
        spec.sensors.push(Sensor::rect("w", 0.5, 1, 1, 3, 3));
        assert_eq!(build_gridworld(&spec).unwrap_err(), Error::OverlappingSensors { x: 1, y: 3 });
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = GridSpec::default_layout();
        spec.slip = 0.5;
        assert!(build_gridworld(&spec).is_err());
        let mut spec = GridSpec::default_layout();
        spec.goal_cells.push(Cell::new(6, 0));
        assert!(build_gridworld(&spec).is_err());
        let mut spec = GridSpec::default_layout();
        spec.sensors[0].symbol = "0".into();
        assert!(build_gridworld(&spec).is_err());
        let mut spec = GridSpec::default_layout();
        spec.initial = vec![(Cell::new(0, 0), 0.5)];
        assert!(build_gridworld(&spec).is_err());
    }

    #[test]
    fn four_corner_start() {
        let world = build_gridworld(&GridSpec::default_four_corners()).unwrap();
        let mu0 = world.mdp.initial();
        assert_eq!(mu0.iter().filter(|&&p| p > 0.0).count(), 4);
        assert_eq!(mu0[0], 0.25);
        assert_eq!(mu0[35], 0.25);
    }
}
