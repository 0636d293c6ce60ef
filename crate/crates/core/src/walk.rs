//! The constant-speed walk: Exp(1) holding times, neighbour `y` chosen with
//! probability `w(x,y)/n(x)`, frozen forever on isolated vertices. Also the
//! additive functional `A(t)` counting time spent on the strong cluster, the
//! time-changed walk, and exit times.

use rand::Rng;
use rand_distr::Exp1;

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::geometry::{giant_cluster, ClusterLabeling};
use crate::lattice::{axis_of, is_positive, Direction, LatticeSpec};

const CHUNK: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub vertex: usize,
    /// Direction of the jump that led here.
    pub dir: Direction,
}

/// Piecewise-constant càdlàg path stored as a chunked event list.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    start: usize,
    chunks: Vec<Vec<Event>>,
    horizon: f64,
    len: usize,
}

impl Trajectory {
    pub fn new(start: usize, horizon: f64) -> Self {
        Trajectory { start, chunks: Vec::new(), horizon, len: 0 }
    }

    /// Builds a trajectory from explicit jumps. Times must increase strictly
    /// and stay within the horizon.
    pub fn scripted(spec: &LatticeSpec, start: usize, jumps: &[(f64, Direction)], horizon: f64) -> Result<Self> {
        let mut tr = Trajectory::new(start, horizon);
        let mut x = start;
        let mut last = 0.0;
        for &(t, dir) in jumps {
            if !(t > last || (tr.len == 0 && t >= 0.0)) || t > horizon {
                return Err(Error::Parameter(format!("jump time {t} out of order or past the horizon")));
            }
            x = spec
                .neighbor(x, dir)
                .ok_or_else(|| Error::Domain(format!("jump {dir} leaves the box at {x}")))?;
            tr.push(Event { time: t, vertex: x, dir });
            last = t;
        }
        Ok(tr)
    }

    fn push(&mut self, e: Event) {
        if self.chunks.last().is_none_or(|c| c.len() == CHUNK) {
            self.chunks.push(Vec::with_capacity(CHUNK.min(1024)));
        }
        self.chunks.last_mut().expect("chunk").push(e);
        self.len += 1;
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn num_jumps(&self) -> usize {
        self.len
    }

    pub fn events(&self) -> impl Iterator<Item = &Event> + '_ {
        self.chunks.iter().flatten()
    }

    pub fn final_vertex(&self) -> usize {
        self.chunks.last().and_then(|c| c.last()).map_or(self.start, |e| e.vertex)
    }

    /// Index of the last event with time `<= t`, if any.
    fn last_event_at(&self, t: f64) -> Option<(usize, usize)> {
        let ci = self.chunks.partition_point(|c| c[0].time <= t);
        if ci == 0 {
            return None;
        }
        let c = &self.chunks[ci - 1];
        let ei = c.partition_point(|e| e.time <= t);
        Some((ci - 1, ei - 1))
    }

    /// `X(t)` for `0 <= t <= horizon`.
    pub fn position_at(&self, t: f64) -> Result<usize> {
        if t < 0.0 || t > self.horizon {
            return Err(Error::HorizonExceeded { requested: t, available: self.horizon });
        }
        Ok(self.last_event_at(t).map_or(self.start, |(c, e)| self.chunks[c][e].vertex))
    }

    /// Number of jumps in `[0, t]`.
    pub fn jumps_until(&self, t: f64) -> usize {
        match self.last_event_at(t) {
            None => 0,
            Some((c, e)) => c * CHUNK + e + 1,
        }
    }

    /// Unwrapped displacement `X(t) - X(0)` obtained by summing the steps.
    pub fn displacement_at(&self, spec: &LatticeSpec, t: f64) -> Vec<i64> {
        let mut disp = vec![0i64; spec.dim()];
        for e in self.events().take_while(|e| e.time <= t) {
            apply_step(&mut disp, e.dir);
        }
        disp
    }
}

#[inline]
pub fn apply_step(disp: &mut [i64], dir: Direction) {
    let k = axis_of(dir);
    if is_positive(dir) {
        disp[k] += 1;
    } else {
        disp[k] -= 1;
    }
}

/// Picks the next jump from `x`, or `None` when `x` is isolated.
#[inline]
pub fn choose_jump<R: Rng + ?Sized>(env: &Environment, x: usize, rng: &mut R) -> Option<(Direction, usize)> {
    let spec = env.spec();
    let nd = 2 * spec.dim() as u8;
    let mut cond = [0.0f64; 16];
    let mut total = 0.0;
    for dir in 0..nd {
        let c = env.conductance_dir(x, dir);
        cond[dir as usize] = c;
        total += c;
    }
    if total <= 0.0 {
        return None;
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut chosen = None;
    for dir in 0..nd {
        let c = cond[dir as usize];
        if c > 0.0 {
            chosen = Some(dir);
            acc += c;
            if u < acc {
                break;
            }
        }
    }
    let dir = chosen?;
    spec.neighbor(x, dir).map(|y| (dir, y))
}

#[inline]
pub fn holding_time<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample::<f64, _>(Exp1)
}

/// Exact simulation of the walk from `x0` up to `horizon`.
pub fn simulate_walk<R: Rng + ?Sized>(env: &Environment, x0: usize, horizon: f64, rng: &mut R) -> Result<Trajectory> {
    env.spec().check_vertex(x0)?;
    if horizon <= 0.0 || !horizon.is_finite() {
        return Err(Error::Parameter(format!("horizon must be positive, got {horizon}")));
    }
    let mut tr = Trajectory::new(x0, horizon);
    let mut x = x0;
    let mut t = 0.0;
    loop {
        t += holding_time(rng);
        if t > horizon {
            break;
        }
        match choose_jump(env, x, rng) {
            Some((dir, y)) => {
                tr.push(Event { time: t, vertex: y, dir });
                x = y;
            }
            None => break,
        }
    }
    Ok(tr)
}

/// A walk advanced one jump at a time without recording its path. Draws
/// random numbers in the same order as [`simulate_walk`].
#[derive(Debug, Clone)]
pub struct WalkCursor<'a> {
    env: &'a Environment,
    vertex: usize,
    time: f64,
    next: f64,
    disp: Vec<i64>,
    jumps: u64,
}

impl<'a> WalkCursor<'a> {
    pub fn new<R: Rng + ?Sized>(env: &'a Environment, x0: usize, rng: &mut R) -> Result<Self> {
        env.spec().check_vertex(x0)?;
        Ok(WalkCursor { env, vertex: x0, time: 0.0, next: holding_time(rng), disp: vec![0; env.spec().dim()], jumps: 0 })
    }

    pub fn vertex(&self) -> usize {
        self.vertex
    }

    /// Time of the last jump (zero before the first).
    pub fn time(&self) -> f64 {
        self.time
    }

    /// Time of the pending jump; infinite once the walk is frozen.
    pub fn next_jump_time(&self) -> f64 {
        self.next
    }

    /// Displacement from the start, unwrapped on a torus.
    pub fn displacement(&self) -> &[i64] {
        &self.disp
    }

    pub fn jumps(&self) -> u64 {
        self.jumps
    }

    /// Performs the pending jump. Returns the new vertex, or `None` if the
    /// current vertex is isolated, after which the walk stays frozen.
    pub fn jump<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<usize> {
        if !self.next.is_finite() {
            return None;
        }
        match choose_jump(self.env, self.vertex, rng) {
            Some((dir, y)) => {
                apply_step(&mut self.disp, dir);
                self.vertex = y;
                self.time = self.next;
                self.jumps += 1;
                self.next += holding_time(rng);
                Some(y)
            }
            None => {
                self.next = f64::INFINITY;
                None
            }
        }
    }

    /// Jumps until the next jump would happen after `t`.
    pub fn advance_to<R: Rng + ?Sized>(&mut self, t: f64, rng: &mut R) {
        while self.next <= t {
            if self.jump(rng).is_none() {
                break;
            }
        }
    }
}

/// The additive functional `A(t) = int_0^t 1{X(s) in C^xi} ds` on a recorded
/// trajectory, with its right-continuous inverse.
#[derive(Debug, Clone)]
pub struct TimeChange {
    seg_start: Vec<f64>,
    seg_vertex: Vec<usize>,
    in_strong: Vec<bool>,
    /// `A` at the end of each segment (nondecreasing).
    a_end: Vec<f64>,
    horizon: f64,
}

impl TimeChange {
    pub fn new(traj: &Trajectory, in_cxi: &[bool]) -> Self {
        let n = traj.num_jumps() + 1;
        let mut seg_start = Vec::with_capacity(n);
        let mut seg_vertex = Vec::with_capacity(n);
        seg_start.push(0.0);
        seg_vertex.push(traj.start());
        for e in traj.events() {
            seg_start.push(e.time);
            seg_vertex.push(e.vertex);
        }
        let in_strong: Vec<bool> = seg_vertex.iter().map(|&v| in_cxi[v]).collect();
        let mut a_end = Vec::with_capacity(n);
        let mut a = 0.0;
        for i in 0..n {
            let end = if i + 1 < n { seg_start[i + 1] } else { traj.horizon() };
            if in_strong[i] {
                a += end - seg_start[i];
            }
            a_end.push(a);
        }
        TimeChange { seg_start, seg_vertex, in_strong, a_end, horizon: traj.horizon() }
    }

    fn segment_at(&self, t: f64) -> usize {
        self.seg_start.partition_point(|&s| s <= t).saturating_sub(1)
    }

    /// `A(t)` for `0 <= t <= horizon`.
    pub fn a(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.horizon);
        let i = self.segment_at(t);
        let before = if i == 0 { 0.0 } else { self.a_end[i - 1] };
        if self.in_strong[i] {
            before + (t - self.seg_start[i])
        } else {
            before
        }
    }

    pub fn total(&self) -> f64 {
        *self.a_end.last().expect("at least one segment")
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `inf {u : A(u) > s}` for `0 <= s < A(horizon)`.
    pub fn inverse(&self, s: f64) -> Result<f64> {
        if s < 0.0 || s >= self.total() {
            return Err(Error::HorizonExceeded { requested: s, available: self.total() });
        }
        let i = self.a_end.partition_point(|&a| a <= s);
        let before = if i == 0 { 0.0 } else { self.a_end[i - 1] };
        debug_assert!(self.in_strong[i]);
        Ok(self.seg_start[i] + (s - before))
    }

    /// Position of the time-changed walk at intrinsic time `s`.
    pub fn position(&self, s: f64) -> Result<usize> {
        if s < 0.0 || s >= self.total() {
            return Err(Error::HorizonExceeded { requested: s, available: self.total() });
        }
        let i = self.a_end.partition_point(|&a| a <= s);
        Ok(self.seg_vertex[i])
    }

    /// Jumps of the time-changed walk as `(intrinsic time, new vertex)`;
    /// returning to the vertex it left from a hole is not a jump.
    pub fn jumps(&self) -> Vec<(f64, usize)> {
        let mut out = Vec::new();
        let mut cur: Option<usize> = None;
        for i in 0..self.seg_start.len() {
            if !self.in_strong[i] {
                continue;
            }
            let v = self.seg_vertex[i];
            let before = if i == 0 { 0.0 } else { self.a_end[i - 1] };
            match cur {
                None => cur = Some(v),
                Some(c) if c != v => {
                    out.push((before, v));
                    cur = Some(v);
                }
                _ => {}
            }
        }
        out
    }
}

/// Builds the time change from the labeling of the strong subgraph; its
/// largest cluster plays the role of `C^xi`.
pub fn build_time_change(traj: &Trajectory, env: &Environment, labeling: &ClusterLabeling) -> Result<TimeChange> {
    if labeling.num_vertices() != env.spec().num_vertices() {
        return Err(Error::Consistency("labeling does not match the environment".into()));
    }
    let g = giant_cluster(labeling);
    Ok(TimeChange::new(traj, &labeling.membership(g.id)))
}

pub fn time_changed_position(tc: &TimeChange, s: f64) -> Result<usize> {
    tc.position(s)
}

/// A region given in displacement coordinates relative to the start.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    /// Closed Euclidean ball `|z - center| <= radius`.
    Ball { center: Vec<f64>, radius: f64 },
    /// Closed box `lo <= z <= hi` componentwise.
    Box { lo: Vec<i64>, hi: Vec<i64> },
}

impl Region {
    pub fn ball(dim: usize, radius: f64) -> Self {
        Region::Ball { center: vec![0.0; dim], radius }
    }

    pub fn contains(&self, disp: &[i64]) -> bool {
        match self {
            Region::Ball { center, radius } => {
                let d2: f64 = disp.iter().zip(center).map(|(&z, &c)| (z as f64 - c).powi(2)).sum();
                d2 <= radius * radius
            }
            Region::Box { lo, hi } => disp.iter().zip(lo.iter().zip(hi)).all(|(&z, (&a, &b))| a <= z && z <= b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExitTime {
    Exited(f64),
    NotExited,
}

impl ExitTime {
    pub fn time(self) -> Option<f64> {
        match self {
            ExitTime::Exited(t) => Some(t),
            ExitTime::NotExited => None,
        }
    }
}

/// First jump time at which the walk stands outside `region`.
pub fn exit_time(traj: &Trajectory, spec: &LatticeSpec, region: &Region) -> Result<ExitTime> {
    let mut disp = vec![0i64; spec.dim()];
    if !region.contains(&disp) {
        return Err(Error::Domain("trajectory starts outside the region".into()));
    }
    for e in traj.events() {
        apply_step(&mut disp, e.dir);
        if !region.contains(&disp) {
            return Ok(ExitTime::Exited(e.time));
        }
    }
    Ok(ExitTime::NotExited)
}

/// Exit time of the time-changed walk, measured on its own clock: the first
/// visit of `X` to a strong-cluster vertex outside `region`.
pub fn exit_time_time_changed(traj: &Trajectory, tc: &TimeChange, spec: &LatticeSpec, in_cxi: &[bool], region: &Region) -> Result<ExitTime> {
    let mut disp = vec![0i64; spec.dim()];
    if !region.contains(&disp) {
        return Err(Error::Domain("trajectory starts outside the region".into()));
    }
    for e in traj.events() {
        apply_step(&mut disp, e.dir);
        if in_cxi[e.vertex] && !region.contains(&disp) {
            return Ok(ExitTime::Exited(tc.a(e.time)));
        }
    }
    Ok(ExitTime::NotExited)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cursor_follows_the_recorded_path() {
        use crate::law::ConductanceLaw;
        let spec = LatticeSpec::torus(2, 12).unwrap();
        let env = crate::sample_environment(&spec, &ConductanceLaw::ZeroUniformMixture { q: 0.8 }, 2).unwrap();
        let x0 = spec.origin();
        let tr = simulate_walk(&env, x0, 50.0, &mut crate::rng::stream(1, 0, 0)).unwrap();
        let mut rng = crate::rng::stream(1, 0, 0);
        let mut c = WalkCursor::new(&env, x0, &mut rng).unwrap();
        c.advance_to(50.0, &mut rng);
        assert_eq!(c.vertex(), tr.final_vertex());
        assert_eq!(c.jumps() as usize, tr.num_jumps());
        assert_eq!(c.displacement(), tr.displacement_at(&spec, 50.0).as_slice());
    }
    use crate::env::sample_environment;
    use crate::geometry::{decompose, label_clusters};
    use crate::law::ConductanceLaw;
    use crate::rng;

    fn torus(side: usize) -> LatticeSpec {
        LatticeSpec::torus(2, side).unwrap()
    }

    #[test]
    fn isolated_start_is_frozen() {
        let spec = torus(5);
        let mut env = Environment::constant(&spec, 1.0).unwrap();
        let nbrs: Vec<usize> = spec.neighbors(7).map(|(_, w, _)| w).collect();
        for y in nbrs {
            env.set_conductance(7, y, 0.0).unwrap();
        }
        let mut r = rng::stream(1, rng::domain::WALKER, 0);
        let tr = simulate_walk(&env, 7, 50.0, &mut r).unwrap();
        assert_eq!(tr.num_jumps(), 0);
        assert_eq!(tr.position_at(49.0).unwrap(), 7);
        let ex = exit_time(&tr, &spec, &Region::ball(2, 0.5)).unwrap();
        assert_eq!(ex, ExitTime::NotExited);
    }

    #[test]
    fn rejects_nonpositive_horizon() {
        let spec = torus(5);
        let env = Environment::constant(&spec, 1.0).unwrap();
        let mut r = rng::stream(1, rng::domain::WALKER, 0);
        assert!(simulate_walk(&env, 0, 0.0, &mut r).is_err());
    }

    #[test]
    fn trajectory_invariants() {
        let spec = torus(20);
        let env = sample_environment(&spec, &ConductanceLaw::ZeroUniformMixture { q: 0.7 }, 4).unwrap();
        let lab = label_clusters(&spec, &env.threshold_mask(0.0));
        for rep in 0..20 {
            let mut r = rng::stream(9, rng::domain::WALKER, rep);
            let x0 = (rep as usize * 37) % 400;
            let tr = simulate_walk(&env, x0, 200.0, &mut r).unwrap();
            let mut prev_t = 0.0;
            let mut prev = x0;
            for e in tr.events() {
                assert!(e.time > prev_t && e.time <= 200.0);
                assert!(env.conductance(prev, e.vertex).unwrap() > 0.0);
                assert_eq!(lab.label(prev), lab.label(e.vertex));
                prev_t = e.time;
                prev = e.vertex;
            }
        }
    }

    #[test]
    fn scripted_time_change() {
        // strong cluster everywhere except vertex h = (2,1); the walk sits at
        // a on [0,1), in the hole on [1,2), then at b on [2,3]
        let spec = LatticeSpec::free(2, 5).unwrap();
        let a = spec.index(&[1, 1]).unwrap();
        let h = spec.index(&[2, 1]).unwrap();
        let b = spec.index(&[3, 1]).unwrap();
        let tr = Trajectory::scripted(&spec, a, &[(1.0, 0), (2.0, 0)], 3.0).unwrap();
        let mut in_cxi = vec![true; 25];
        in_cxi[h] = false;
        let tc = TimeChange::new(&tr, &in_cxi);
        assert_eq!(tc.a(3.0), 2.0);
        assert_eq!(tc.a(1.5), 1.0);
        assert_eq!(tc.inverse(1.5).unwrap(), 2.5);
        assert_eq!(tc.position(1.5).unwrap(), tr.position_at(2.5).unwrap());
        assert_eq!(tc.position(1.5).unwrap(), b);
        assert_eq!(tc.jumps(), vec![(1.0, b)]);
        assert!(matches!(tc.position(2.0), Err(Error::HorizonExceeded { .. })));
    }

    #[test]
    fn reentry_at_same_vertex_is_not_a_jump() {
        let spec = LatticeSpec::free(2, 5).unwrap();
        let a = spec.index(&[1, 1]).unwrap();
        let h = spec.index(&[2, 1]).unwrap();
        let tr = Trajectory::scripted(&spec, a, &[(1.0, 0), (2.0, 1)], 3.0).unwrap();
        let mut in_cxi = vec![true; 25];
        in_cxi[h] = false;
        let tc = TimeChange::new(&tr, &in_cxi);
        assert!(tc.jumps().is_empty());
        assert_eq!(tc.position(1.5).unwrap(), a);
    }

    #[test]
    fn no_holes_means_identity_time_change() {
        let spec = torus(8);
        let env = Environment::constant(&spec, 1.0).unwrap();
        let mut r = rng::stream(3, rng::domain::WALKER, 0);
        let tr = simulate_walk(&env, 0, 30.0, &mut r).unwrap();
        let lab = label_clusters(&spec, &env.threshold_mask(0.5));
        let tc = build_time_change(&tr, &env, &lab).unwrap();
        for k in 0..30 {
            let t = k as f64 + 0.37;
            assert_eq!(tc.a(t), t);
            assert_eq!(tc.position(t).unwrap(), tr.position_at(t).unwrap());
        }
    }

    #[test]
    fn time_change_contracts_and_stays_on_strong_cluster() {
        let spec = torus(24);
        let env = sample_environment(&spec, &ConductanceLaw::ZeroUniformMixture { q: 0.8 }, 2).unwrap();
        let hs = decompose(&env, 0.25).unwrap();
        let start = (0..spec.num_vertices()).find(|&v| hs.in_cxi[v]).unwrap();
        for rep in 0..100 {
            let mut r = rng::stream(5, rng::domain::WALKER, rep);
            let tr = simulate_walk(&env, start, 60.0, &mut r).unwrap();
            let tc = TimeChange::new(&tr, &hs.in_cxi);
            let frac = tc.total() / tr.horizon();
            assert!((0.0..=1.0).contains(&frac));
            let grid: Vec<f64> = (0..=40).map(|k| 1.5 * k as f64).collect();
            for w in grid.windows(2) {
                let d = tc.a(w[1]) - tc.a(w[0]);
                assert!(d >= 0.0 && d <= w[1] - w[0] + 1e-12);
            }
            let mut s = 0.0;
            while s < tc.total() {
                let v = tc.position(s).unwrap();
                assert!(hs.in_cxi[v]);
                let u = tc.inverse(s).unwrap();
                assert!(tc.a(u) <= s + 1e-9 && u >= s - 1e-12);
                s += 0.7;
            }
        }
    }

    #[test]
    fn exit_at_third_jump_of_a_scripted_path() {
        let spec = torus(10);
        // +e1, +e2, +e1: distances 1, sqrt2, sqrt5 from the start
        let tr = Trajectory::scripted(&spec, 0, &[(0.5, 0), (1.25, 2), (2.0, 0)], 5.0).unwrap();
        let ex = exit_time(&tr, &spec, &Region::ball(2, 2.0)).unwrap();
        assert_eq!(ex, ExitTime::Exited(2.0));
        let big = exit_time(&tr, &spec, &Region::ball(2, 100.0)).unwrap();
        assert_eq!(big, ExitTime::NotExited);
        let off = Region::Ball { center: vec![10.0, 0.0], radius: 1.0 };
        assert!(matches!(exit_time(&tr, &spec, &off), Err(Error::Domain(_))));
    }

    #[test]
    fn position_and_jump_count_queries() {
        let spec = torus(10);
        let tr = Trajectory::scripted(&spec, 0, &[(0.5, 0), (1.25, 2)], 5.0).unwrap();
        assert_eq!(tr.position_at(0.0).unwrap(), 0);
        assert_eq!(tr.position_at(0.5).unwrap(), 1);
        assert_eq!(tr.jumps_until(1.0), 1);
        assert_eq!(tr.jumps_until(4.0), 2);
        assert_eq!(tr.displacement_at(&spec, 5.0), vec![1, 1]);
        assert!(tr.position_at(6.0).is_err());
    }
}
