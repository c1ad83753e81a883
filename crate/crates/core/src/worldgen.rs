//! Procedural cluttered occupancy-grid worlds, shortest-path metadata and
//! the plain-text world file format.
//!
//! Cell `(col, row)` covers `[col·res, (col+1)·res) × [row·res, (row+1)·res)`
//! in the world frame; row 0 has the smallest y.
//!
//! World file layout:
//!
//! ```text
//! id: world_0007
//! resolution: 0.15
//! width: 5
//! height: 5
//! start: 0.375 0.225 1.5707963267948966
//! goal: 0.375 0.675
//! lstar: 0.45
//!
//! #...#
//! #...#
//! #.#.#
//! #...#
//! #...#
//! ```
//!
//! `lstar` may be `none`. The first grid line is row 0.

use std::fmt::Write as _;
use std::fs;
use std::path::Path as FsPath;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Pose};
use crate::planning::{cell_of, inflate, plan_astar};
use crate::sim::Footprint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub id: String,
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    /// Row-major occupancy, `true` = occupied.
    pub cells: Vec<bool>,
    pub start: Pose,
    pub goal: Point2,
    /// Shortest start→goal path length on the inflated grid, meters.
    pub lstar: Option<f64>,
}

impl World {
    /// All-free world with start at cell (0,0) facing +x and goal at the
    /// opposite corner cell.
    pub fn empty(id: &str, width: usize, height: usize, resolution: f64) -> World {
        World {
            id: id.to_string(),
            resolution,
            width,
            height,
            cells: vec![false; width * height],
            start: Pose::new(0.5 * resolution, 0.5 * resolution, 0.0),
            goal: Point2::new(
                (width as f64 - 0.5) * resolution,
                (height as f64 - 0.5) * resolution,
            ),
            lstar: None,
        }
    }

    pub fn is_occupied(&self, col: usize, row: usize) -> bool {
        self.cells[row * self.width + col]
    }

    pub fn set_occupied(&mut self, col: usize, row: usize, occupied: bool) {
        self.cells[row * self.width + col] = occupied;
    }

    /// Occupancy of a signed cell index; anything outside the grid counts
    /// as occupied.
    pub fn occupied_or_outside(&self, col: isize, row: isize) -> bool {
        if col < 0 || row < 0 || col >= self.width as isize || row >= self.height as isize {
            return true;
        }
        self.is_occupied(col as usize, row as usize)
    }

    pub fn size_m(&self) -> (f64, f64) {
        (
            self.width as f64 * self.resolution,
            self.height as f64 * self.resolution,
        )
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.cell_of(p).is_some()
    }

    pub fn cell_of(&self, p: Point2) -> Option<(usize, usize)> {
        cell_of(p, self.resolution, self.width, self.height)
    }

    pub fn cell_center(&self, col: usize, row: usize) -> Point2 {
        Point2::new(
            (col as f64 + 0.5) * self.resolution,
            (row as f64 + 0.5) * self.resolution,
        )
    }

    fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0) || !self.resolution.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "resolution {} must be > 0",
                self.resolution
            )));
        }
        if self.cells.len() != self.width * self.height {
            return Err(Error::InvalidConfig(format!(
                "cells length {} != {}×{}",
                self.cells.len(),
                self.width,
                self.height
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldgenConfig {
    pub seed: u64,
    pub fill_probability: f64,
    pub smoothing_iterations: usize,
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    /// Obstacles are cleared within this distance of start and goal, m.
    pub corridor_margin: f64,
    /// Inflation radius for the connectivity check and L*, m.
    pub robot_radius: f64,
    pub max_attempts: usize,
}

impl Default for WorldgenConfig {
    fn default() -> Self {
        WorldgenConfig {
            seed: 0,
            fill_probability: 0.25,
            smoothing_iterations: 2,
            width: 30,
            height: 30,
            resolution: 0.15,
            corridor_margin: 0.6,
            robot_radius: Footprint::default().circumscribed_radius(),
            max_attempts: 100,
        }
    }
}

impl WorldgenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.fill_probability) {
            return bad(format!("fill_probability {} outside [0,1]", self.fill_probability));
        }
        if self.width < 10 || self.height < 10 {
            return bad(format!("grid {}×{} smaller than 10×10", self.width, self.height));
        }
        if !(self.resolution > 0.0) {
            return bad(format!("resolution {} must be > 0", self.resolution));
        }
        if !(self.robot_radius >= 0.0) || !(self.corridor_margin >= 0.0) {
            return bad("robot_radius and corridor_margin must be >= 0".into());
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be >= 1".into());
        }
        Ok(())
    }
}

/// Generate a cluttered world: random fill, cellular-automaton smoothing,
/// border walls, cleared start/goal areas. Regenerates until start and goal
/// are connected on the grid inflated by `robot_radius`.
pub fn generate_world(cfg: &WorldgenConfig) -> Result<World> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (w, h, res) = (cfg.width, cfg.height, cfg.resolution);
    // start near the bottom, goal near the top, both on cell centers
    let mid = w / 2;
    let margin_rows = ((cfg.corridor_margin / res).ceil() as usize).clamp(1, h / 4);
    let start_cell = (mid, margin_rows.min(h - 1));
    let goal_cell = (mid, h - 1 - margin_rows);

    for _ in 0..cfg.max_attempts {
        let mut cells = vec![false; w * h];
        for c in cells.iter_mut() {
            *c = rng.random::<f64>() < cfg.fill_probability;
        }
        for _ in 0..cfg.smoothing_iterations {
            cells = smooth(&cells, w, h);
        }
        for r in 0..h {
            cells[r * w] = true;
            cells[r * w + w - 1] = true;
        }
        for c in 0..w {
            cells[c] = true;
            cells[(h - 1) * w + c] = true;
        }
        let mut world = World {
            id: format!("world_{:04}", cfg.seed),
            resolution: res,
            width: w,
            height: h,
            cells,
            start: Pose::new(0.0, 0.0, std::f64::consts::FRAC_PI_2),
            goal: Point2::default(),
            lstar: None,
        };
        let sp = world.cell_center(start_cell.0, start_cell.1);
        let gp = world.cell_center(goal_cell.0, goal_cell.1);
        world.start.x = sp.x;
        world.start.y = sp.y;
        world.goal = gp;
        clear_disk(&mut world, sp, cfg.corridor_margin);
        clear_disk(&mut world, gp, cfg.corridor_margin);
        if let Ok(l) = shortest_path_length(&world, cfg.robot_radius) {
            world.lstar = Some(l);
            return Ok(world);
        }
    }
    Err(Error::ConnectivityFailure {
        attempts: cfg.max_attempts,
    })
}

/// One smoothing pass: a cell with at least 5 occupied neighbours becomes
/// occupied, one with at most 1 becomes free, anything else keeps its state.
/// Neighbours outside the grid count as free.
fn smooth(cells: &[bool], w: usize, h: usize) -> Vec<bool> {
    let mut out = cells.to_vec();
    for r in 0..h {
        for c in 0..w {
            let mut n = 0;
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (rr, cc) = (r as isize + dr, c as isize + dc);
                    if rr >= 0
                        && cc >= 0
                        && rr < h as isize
                        && cc < w as isize
                        && cells[rr as usize * w + cc as usize]
                    {
                        n += 1;
                    }
                }
            }
            if n >= 5 {
                out[r * w + c] = true;
            } else if n <= 1 {
                out[r * w + c] = false;
            }
        }
    }
    out
}

fn clear_disk(world: &mut World, center: Point2, radius: f64) {
    for r in 0..world.height {
        for c in 0..world.width {
            // keep the border walls
            if c == 0 || r == 0 || c == world.width - 1 || r == world.height - 1 {
                continue;
            }
            if world.cell_center(c, r).dist(&center) <= radius {
                world.set_occupied(c, r, false);
            }
        }
    }
}

/// Length in meters of the cheapest 8-connected start→goal cell path on the
/// grid inflated by `footprint_radius`.
pub fn shortest_path_length(world: &World, footprint_radius: f64) -> Result<f64> {
    world.validate()?;
    let start = world.cell_of(world.start.position()).ok_or(Error::NoPath)?;
    let goal = world.cell_of(world.goal).ok_or(Error::NoPath)?;
    let costmap = inflate(world, footprint_radius);
    Ok(plan_astar(&costmap, start, goal)?.cost)
}

/// Compute L* and store it in the world.
pub fn annotate_lstar(world: &mut World, footprint_radius: f64) -> Result<f64> {
    let l = shortest_path_length(world, footprint_radius)?;
    world.lstar = Some(l);
    Ok(l)
}

pub fn world_to_string(world: &World) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "id: {}", world.id);
    let _ = writeln!(s, "resolution: {}", world.resolution);
    let _ = writeln!(s, "width: {}", world.width);
    let _ = writeln!(s, "height: {}", world.height);
    let _ = writeln!(
        s,
        "start: {} {} {}",
        world.start.x, world.start.y, world.start.theta
    );
    let _ = writeln!(s, "goal: {} {}", world.goal.x, world.goal.y);
    match world.lstar {
        Some(l) => {
            let _ = writeln!(s, "lstar: {l}");
        }
        None => s.push_str("lstar: none\n"),
    }
    s.push('\n');
    for r in 0..world.height {
        for c in 0..world.width {
            s.push(if world.is_occupied(c, r) { '#' } else { '.' });
        }
        s.push('\n');
    }
    s
}

fn parse_floats<const N: usize>(line: usize, key: &str, v: &str) -> Result<[f64; N]> {
    let parts: Vec<&str> = v.split_whitespace().collect();
    if parts.len() != N {
        return Err(Error::parse(
            line,
            format!("`{key}` expects {N} numbers, got {}", parts.len()),
        ));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p
            .parse()
            .map_err(|_| Error::parse(line, format!("`{key}`: bad number `{p}`")))?;
    }
    Ok(out)
}

pub fn world_from_str(text: &str) -> Result<World> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut id = None;
    let mut resolution = None;
    let mut width = None;
    let mut height = None;
    let mut start = None;
    let mut goal = None;
    let mut lstar = None;
    let mut last_line = 0;
    for (n, line) in lines.by_ref() {
        last_line = n;
        if line.trim().is_empty() {
            break;
        }
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| Error::parse(n, format!("expected `key: value`, got `{line}`")))?;
        let value = value.trim();
        match key.trim() {
            "id" => id = Some(value.to_string()),
            "resolution" => resolution = Some(parse_floats::<1>(n, "resolution", value)?[0]),
            "width" => {
                width = Some(
                    value
                        .parse::<usize>()
                        .map_err(|_| Error::parse(n, "`width` must be an integer"))?,
                )
            }
            "height" => {
                height = Some(
                    value
                        .parse::<usize>()
                        .map_err(|_| Error::parse(n, "`height` must be an integer"))?,
                )
            }
            "start" => start = Some(parse_floats::<3>(n, "start", value)?),
            "goal" => goal = Some(parse_floats::<2>(n, "goal", value)?),
            "lstar" => {
                lstar = if value == "none" {
                    None
                } else {
                    Some(parse_floats::<1>(n, "lstar", value)?[0])
                }
            }
            other => return Err(Error::parse(n, format!("unknown key `{other}`"))),
        }
    }
    let missing = |k: &str| Error::parse(last_line, format!("missing header `{k}`"));
    let id = id.ok_or_else(|| missing("id"))?;
    let resolution = resolution.ok_or_else(|| missing("resolution"))?;
    let width = width.ok_or_else(|| missing("width"))?;
    let height = height.ok_or_else(|| missing("height"))?;
    let start = start.ok_or_else(|| missing("start"))?;
    let goal = goal.ok_or_else(|| missing("goal"))?;
    if !(resolution > 0.0) {
        return Err(Error::parse(last_line, "resolution must be > 0"));
    }

    let mut cells = Vec::with_capacity(width * height);
    let mut rows = 0;
    for (n, line) in lines {
        if line.is_empty() {
            continue;
        }
        if rows == height {
            return Err(Error::parse(n, format!("more than {height} grid rows")));
        }
        if line.chars().count() != width {
            return Err(Error::parse(
                n,
                format!("row has {} cells, expected {width}", line.chars().count()),
            ));
        }
        for ch in line.chars() {
            cells.push(match ch {
                '#' => true,
                '.' => false,
                other => return Err(Error::parse(n, format!("bad cell char `{other}`"))),
            });
        }
        rows += 1;
        last_line = n;
    }
    if rows != height {
        return Err(Error::parse(
            last_line,
            format!("grid has {rows} rows, expected {height}"),
        ));
    }
    Ok(World {
        id,
        resolution,
        width,
        height,
        cells,
        start: Pose::new(start[0], start[1], start[2]),
        goal: Point2::new(goal[0], goal[1]),
        lstar,
    })
}

pub fn save_world(world: &World, path: impl AsRef<FsPath>) -> Result<()> {
    fs::write(path, world_to_string(world))?;
    Ok(())
}

pub fn load_world(path: impl AsRef<FsPath>) -> Result<World> {
    world_from_str(&fs::read_to_string(path)?)
}

/// Load every `*.world` file in a directory, sorted by file name.
pub fn load_world_dir(dir: impl AsRef<FsPath>) -> Result<Vec<World>> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "world"))
        .collect();
    paths.sort();
    paths.iter().map(load_world).collect()
}

/// Default split: 234 of 300 worlds for training.
pub const DEFAULT_TRAIN_FRACTION: f64 = 234.0 / 300.0;

/// Deterministic shuffled partition into `(train, test)`; the train set gets
/// `round(train_fraction · n)` worlds. Both halves keep the input order.
pub fn split_worlds<T: Clone>(worlds: &[T], train_fraction: f64, seed: u64) -> (Vec<T>, Vec<T>) {
    let n = worlds.len();
    let n_train = ((train_fraction.clamp(0.0, 1.0) * n as f64).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_train = vec![false; n];
    for &i in &order[..n_train] {
        is_train[i] = true;
    }
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(n - n_train);
    for (w, t) in worlds.iter().zip(is_train) {
        if t {
            train.push(w.clone());
        } else {
            test.push(w.clone());
        }
    }
    (train, test)
}
