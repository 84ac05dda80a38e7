//! Vehicle mobility: a Manhattan-grid walker with per-trip speeds, position
//! traces from CSV, and RSU placement at the most-visited intersections.

use std::collections::BTreeMap;
use std::path::Path;

use rand_core::RngCore;

use crate::config::{RsuPlacement, SimConfig};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pos {
    pub x: f64,
    pub y: f64,
}

impl Pos {
    pub fn dist(&self, other: &Pos) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// Street grid: intersections every `block` meters inside the area.
#[derive(Clone, Debug)]
pub struct Grid {
    pub block: f64,
    pub cols: u32,
    pub rows: u32,
}

impl Grid {
    pub fn new(width: f64, height: f64, block: f64) -> Grid {
        Grid {
            block,
            cols: (width / block).floor() as u32 + 1,
            rows: (height / block).floor() as u32 + 1,
        }
    }

    pub fn intersection(&self, col: u32, row: u32) -> Pos {
        Pos { x: col as f64 * self.block, y: row as f64 * self.block }
    }

    pub fn intersections(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.rows).flat_map(move |r| (0..self.cols).map(move |c| (c, r)))
    }

    fn neighbors(&self, col: u32, row: u32) -> Vec<(u32, u32)> {
        let mut out = Vec::with_capacity(4);
        if col > 0 {
            out.push((col - 1, row));
        }
        if col + 1 < self.cols {
            out.push((col + 1, row));
        }
        if row > 0 {
            out.push((col, row - 1));
        }
        if row + 1 < self.rows {
            out.push((col, row + 1));
        }
        out
    }
}

/// One vehicle walking the grid: straight with probability 1/2 at each
/// intersection, otherwise turn; u-turns only at dead ends.
#[derive(Clone, Debug)]
pub struct GridWalker {
    from: (u32, u32),
    to: (u32, u32),
    progress_m: f64,
    pub speed_mps: f64,
}

impl GridWalker {
    pub fn spawn(grid: &Grid, speed_mps: f64, rng: &mut impl RngCore) -> GridWalker {
        let col = rng.next_u32() % grid.cols;
        let row = rng.next_u32() % grid.rows;
        let from = (col, row);
        let n = grid.neighbors(col, row);
        let to = n[(rng.next_u32() as usize) % n.len()];
        GridWalker { from, to, progress_m: 0.0, speed_mps }
    }

    pub fn pos(&self, grid: &Grid) -> Pos {
        let a = grid.intersection(self.from.0, self.from.1);
        let b = grid.intersection(self.to.0, self.to.1);
        let t = (self.progress_m / grid.block).clamp(0.0, 1.0);
        Pos { x: a.x + (b.x - a.x) * t, y: a.y + (b.y - a.y) * t }
    }

    pub fn step(&mut self, grid: &Grid, dt_s: f64, rng: &mut impl RngCore) {
        self.progress_m += self.speed_mps * dt_s;
        while self.progress_m >= grid.block {
            self.progress_m -= grid.block;
            let arrived = self.to;
            let back = self.from;
            self.from = arrived;
            let straight = (
                (2 * arrived.0).wrapping_sub(back.0),
                (2 * arrived.1).wrapping_sub(back.1),
            );
            let options = grid.neighbors(arrived.0, arrived.1);
            let turns: Vec<(u32, u32)> = options
                .iter()
                .copied()
                .filter(|&n| n != back && n != straight)
                .collect();
            let can_go_straight =
                straight.0 < grid.cols && straight.1 < grid.rows && options.contains(&straight);
            let roll = rng.next_u32();
            self.to = if can_go_straight && (roll & 1 == 0 || turns.is_empty()) {
                straight
            } else if !turns.is_empty() {
                turns[(roll as usize >> 1) % turns.len()]
            } else {
                back // dead end
            };
        }
    }
}

/// Parsed trace: per vehicle, time-sorted position fixes.
#[derive(Clone, Debug, Default)]
pub struct Trace {
    pub vehicles: Vec<TraceVehicle>,
}

#[derive(Clone, Debug)]
pub struct TraceVehicle {
    pub id: String,
    /// (time_us, position), time-sorted.
    pub fixes: Vec<(u64, Pos)>,
}

impl Trace {
    /// Parse the `vehicle_id,time_s,x_m,y_m` CSV. Any malformed row is fatal
    /// and reported with its line number.
    pub fn parse_file(path: &Path) -> Result<Trace, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read trace {}: {e}", path.display()))?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<Trace, String> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "vehicle_id,time_s,x_m,y_m" => {}
            Some((_, h)) => {
                return Err(format!(
                    "trace line 1: bad header '{}', want 'vehicle_id,time_s,x_m,y_m'",
                    h.trim()
                ))
            }
            None => return Err("trace is empty".to_string()),
        }
        let mut per: BTreeMap<String, Vec<(u64, Pos)>> = BTreeMap::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(format!("trace line {lineno}: expected 4 columns"));
            }
            let time_s: f64 = cols[1]
                .trim()
                .parse()
                .map_err(|_| format!("trace line {lineno}: bad time '{}'", cols[1]))?;
            let x: f64 = cols[2]
                .trim()
                .parse()
                .map_err(|_| format!("trace line {lineno}: bad x '{}'", cols[2]))?;
            let y: f64 = cols[3]
                .trim()
                .parse()
                .map_err(|_| format!("trace line {lineno}: bad y '{}'", cols[3]))?;
            if time_s < 0.0 {
                return Err(format!("trace line {lineno}: negative time"));
            }
            per.entry(cols[0].trim().to_string())
                .or_default()
                .push((crate::config::to_us(time_s), Pos { x, y }));
        }
        let mut vehicles = Vec::new();
        for (id, mut fixes) in per {
            fixes.sort_by_key(|f| f.0);
            vehicles.push(TraceVehicle { id, fixes });
        }
        Ok(Trace { vehicles })
    }
}

impl TraceVehicle {
    /// Step-function position: the latest fix at or before `t`.
    pub fn pos_at(&self, t: u64) -> Option<Pos> {
        if self.fixes.is_empty() || t < self.fixes[0].0 {
            return None;
        }
        let idx = self.fixes.partition_point(|f| f.0 <= t);
        Some(self.fixes[idx - 1].1)
    }

    pub fn span(&self) -> (u64, u64) {
        (self.fixes[0].0, self.fixes[self.fixes.len() - 1].0)
    }
}

/// RSU positions for the configured placement mode.
///
/// `visit_counts`, keyed by intersection, comes from a dry mobility pass
/// (or trace scan). Top-intersections picks the most-visited sites whose
/// pairwise distance exceeds twice the radio range, skipping conflicts
/// greedily; if fewer sites are feasible the rest are dropped with a warning.
pub fn place_rsus(
    cfg: &SimConfig,
    grid: &Grid,
    visit_counts: &BTreeMap<(u32, u32), u64>,
) -> Vec<Pos> {
    let count = cfg.rsu_count as usize;
    if count == 0 {
        return Vec::new();
    }
    match cfg.rsu_placement {
        RsuPlacement::Explicit => {
            cfg.rsu_positions.iter().map(|&(x, y)| Pos { x, y }).collect()
        }
        RsuPlacement::Grid => {
            let rows = (count as f64).sqrt().ceil() as usize;
            let cols = count.div_ceil(rows);
            let mut out = Vec::with_capacity(count);
            'outer: for r in 0..rows {
                for c in 0..cols {
                    if out.len() == count {
                        break 'outer;
                    }
                    out.push(Pos {
                        x: (c as f64 + 0.5) * cfg.area_width_m / cols as f64,
                        y: (r as f64 + 0.5) * cfg.area_height_m / rows as f64,
                    });
                }
            }
            out
        }
        RsuPlacement::TopIntersections => {
            let mut ranked: Vec<((u32, u32), u64)> = grid
                .intersections()
                .map(|cr| (cr, visit_counts.get(&cr).copied().unwrap_or(0)))
                .collect();
            // Most visited first; grid order breaks ties deterministically.
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            let min_dist = 2.0 * cfg.radio_range_m;
            let mut out: Vec<Pos> = Vec::new();
            for ((c, r), _) in ranked {
                if out.len() == count {
                    break;
                }
                let p = grid.intersection(c, r);
                if out.iter().all(|q| q.dist(&p) > min_dist) {
                    out.push(p);
                }
            }
            if out.len() < count {
                eprintln!(
                    "warning: only {} of {} RSU sites feasible with non-overlapping ranges",
                    out.len(),
                    count
                );
            }
            out
        }
    }
}

/// Visit counts for a synthetic dry pass: walk `vehicles` walkers for
/// `steps` seconds and tally the nearest intersection whenever a walker is
/// within a quarter block of one.
pub fn dry_pass_visits(
    grid: &Grid,
    vehicles: u32,
    steps: u32,
    speed: f64,
    rng: &mut impl RngCore,
) -> BTreeMap<(u32, u32), u64> {
    let mut counts = BTreeMap::new();
    let mut walkers: Vec<GridWalker> =
        (0..vehicles).map(|_| GridWalker::spawn(grid, speed, rng)).collect();
    for _ in 0..steps {
        for w in &mut walkers {
            w.step(grid, 1.0, rng);
            let p = w.pos(grid);
            let col = (p.x / grid.block).round() as u32;
            let row = (p.y / grid.block).round() as u32;
            let snap = grid.intersection(col.min(grid.cols - 1), row.min(grid.rows - 1));
            if snap.dist(&p) <= grid.block * 0.25 {
                *counts.entry((col.min(grid.cols - 1), row.min(grid.rows - 1))).or_default() += 1;
            }
        }
    }
    counts
}

/// Visit counts from a trace: fixes snapped to the grid.
pub fn trace_visits(grid: &Grid, trace: &Trace) -> BTreeMap<(u32, u32), u64> {
    let mut counts = BTreeMap::new();
    for v in &trace.vehicles {
        for (_, p) in &v.fixes {
            let col = ((p.x / grid.block).round() as u32).min(grid.cols - 1);
            let row = ((p.y / grid.block).round() as u32).min(grid.rows - 1);
            *counts.entry((col, row)).or_default() += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha12Rng;
    use rand_core::SeedableRng;

    fn test_cfg() -> SimConfig {
        crate::config::SimConfig::parse_str(
            "vehicles = 4\nduration_s = 60\nbandwidth_bytes_per_s = 25600\ntau_p_s = 60\ngamma_crl_s = 3600\n",
        )
        .unwrap()
    }

    #[test]
    fn walker_stays_inside_the_area() {
        let grid = Grid::new(1000.0, 1000.0, 250.0);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut w = GridWalker::spawn(&grid, 13.0, &mut rng);
        for _ in 0..5_000 {
            w.step(&grid, 1.0, &mut rng);
            let p = w.pos(&grid);
            assert!((0.0..=1000.0).contains(&p.x), "x = {}", p.x);
            assert!((0.0..=1000.0).contains(&p.y), "y = {}", p.y);
        }
    }

    #[test]
    fn walker_moves_at_its_speed() {
        let grid = Grid::new(2000.0, 2000.0, 250.0);
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let mut w = GridWalker::spawn(&grid, 10.0, &mut rng);
        let a = w.pos(&grid);
        w.step(&grid, 1.0, &mut rng);
        let b = w.pos(&grid);
        // Straight-line displacement can shrink at turns but never exceeds
        // the path length.
        assert!(a.dist(&b) <= 10.0 + 1e-9);
    }

    #[test]
    fn trace_parsing_and_lookup() {
        let t = Trace::parse_str(
            "vehicle_id,time_s,x_m,y_m\nv1,0,100,200\nv1,2,150,200\nv2,1,0,0\n",
        )
        .unwrap();
        assert_eq!(t.vehicles.len(), 2);
        let v1 = &t.vehicles[0];
        assert_eq!(v1.id, "v1");
        assert_eq!(v1.pos_at(0), Some(Pos { x: 100.0, y: 200.0 }));
        assert_eq!(v1.pos_at(1_999_999), Some(Pos { x: 100.0, y: 200.0 }));
        assert_eq!(v1.pos_at(2_000_000), Some(Pos { x: 150.0, y: 200.0 }));
    }

    #[test]
    fn trace_errors_carry_line_numbers() {
        let e = Trace::parse_str("vehicle_id,time_s,x_m,y_m\nv1,zzz,1,2\n").unwrap_err();
        assert!(e.contains("line 2"), "{e}");
        let e = Trace::parse_str("wrong,header\n").unwrap_err();
        assert!(e.contains("line 1"), "{e}");
    }

    #[test]
    fn explicit_placement_passes_through() {
        let mut cfg = test_cfg();
        cfg.rsu_placement = RsuPlacement::Explicit;
        cfg.rsu_count = 2;
        cfg.rsu_positions = vec![(10.0, 20.0), (30.0, 40.0)];
        let grid = Grid::new(2000.0, 2000.0, 250.0);
        let got = place_rsus(&cfg, &grid, &BTreeMap::new());
        assert_eq!(got, vec![Pos { x: 10.0, y: 20.0 }, Pos { x: 30.0, y: 40.0 }]);
    }

    #[test]
    fn zero_count_places_nothing() {
        let mut cfg = test_cfg();
        cfg.rsu_count = 0;
        let grid = Grid::new(2000.0, 2000.0, 250.0);
        assert!(place_rsus(&cfg, &grid, &BTreeMap::new()).is_empty());
    }

    // Brute-force oracle on a 4x4 grid: top-k by count honoring the spacing
    // constraint, in the same deterministic order.
    #[test]
    fn top_intersections_match_bruteforce() {
        let mut cfg = test_cfg();
        cfg.area_width_m = 750.0;
        cfg.area_height_m = 750.0;
        cfg.rsu_count = 3;
        cfg.radio_range_m = 100.0;
        let grid = Grid::new(750.0, 750.0, 250.0);
        let mut counts = BTreeMap::new();
        for (i, cr) in grid.intersections().enumerate() {
            counts.insert(cr, ((i * 7) % 13) as u64);
        }
        let got = place_rsus(&cfg, &grid, &counts);

        // Oracle: sort all sites, greedily take feasible ones.
        let mut ranked: Vec<((u32, u32), u64)> =
            counts.iter().map(|(k, v)| (*k, *v)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut want: Vec<Pos> = Vec::new();
        for ((c, r), _) in ranked {
            if want.len() == 3 {
                break;
            }
            let p = grid.intersection(c, r);
            if want.iter().all(|q| q.dist(&p) > 200.0) {
                want.push(p);
            }
        }
        assert_eq!(got, want);
        for i in 0..got.len() {
            for j in i + 1..got.len() {
                assert!(got[i].dist(&got[j]) > 200.0);
            }
        }
    }
}
