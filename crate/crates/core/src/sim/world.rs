use std::collections::{BTreeMap, VecDeque};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::arrivals::ArrivalStream;
use super::config::SimConfig;
use super::following::{
    controller, decision_distance, follow_cap, stopping_cap, time_gap_cap, time_to_reach,
};
use super::metrics::{CycleRecord, LegSummary, MetricsReport};
use super::trace::{self, TokenEvent};
use super::Technique;
use crate::energy::{EnergyLedger, StepEnergy};
use crate::game::{resolve_conflict, CreditLedger, Mode, TripCost};
use crate::planner::{plan_with_margin, Coordination, KinematicState, Window};
use crate::signal::{queue_clear_time, Approach, Indication, SignalConfig, SignalState};
use crate::token::{detect_conflicts, TokenTable, Vin};
use crate::{Error, Result};

/// Below this speed a vehicle counts as stopped.
pub const STOP_SPEED: f64 = 0.1;
/// A new stop is only counted after the vehicle exceeded this speed.
pub const REARM_SPEED: f64 = 1.0;

const STREAM_ARRIVALS: u64 = 1;
const STREAM_MODES: u64 = 2;
const STREAM_GAMES: u64 = 3;
const STREAM_LIGHT: u64 = 4;
const STREAM_REPLAN: u64 = 5;

#[derive(Debug, Clone)]
pub struct Vehicle {
    pub vin: Vin,
    pub route: usize,
    pub leg: usize,
    pub segment: usize,
    pub lane: usize,
    /// Metres from the start of the segment.
    pub position: f64,
    pub speed: f64,
    pub command: f64,
    pub mode: Mode,
    pub activated: bool,
    /// `(green cycle, slot)` of a granted token.
    pub token: Option<(i64, u32)>,
    /// `(green cycle, slot)` admitted at the stop line without a token.
    pub permit: Option<(i64, u32)>,
    /// Reached the stop line decision point without a right to cross.
    pub held: bool,
    pub stops: u32,
    pub cost: TripCost,
    pub energy: EnergyLedger,
    pub spawn_time: f64,
    deferred: Option<i64>,
    reaction: f64,
    lane_cooldown: f64,
    armed: bool,
    prev_speed: f64,
    leg_idle: f64,
    leg_stops: u32,
    leg_energy: f64,
}

impl Vehicle {
    fn has_right(&self) -> bool {
        self.token.is_some() || self.permit.is_some()
    }
}

/// Placement of a scripted vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleSpec {
    pub route: usize,
    pub leg: usize,
    pub lane: usize,
    pub position: f64,
    pub speed: f64,
    pub mode: Mode,
    pub credits: i64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub vin: Vin,
    pub speed: f64,
    /// Metres to the stop line.
    pub distance: f64,
}

#[derive(Debug, Clone)]
struct Probe {
    segment: usize,
    limit: usize,
    tracked: Vec<Vin>,
    samples: Vec<TrajectorySample>,
}

/// Stop-line state of one segment: signal, green-cycle bookkeeping and the
/// slot table shared by tokens and admissions.
#[derive(Debug, Clone)]
struct Stopline {
    light: usize,
    approach: Approach,
    label: String,
    signal: SignalConfig,
    length: f64,
    lanes: usize,
    cycle: i64,
    green_start: f64,
    capacity: u32,
    table: TokenTable,
    state: SignalState,
    queue: usize,
    count: usize,
}

impl Stopline {
    fn slot_at(&self, time: f64) -> u32 {
        let k = ((time - self.green_start) * self.signal.departure_rate).floor() as i64 + 1;
        k.max(1) as u32
    }

    fn green_end(&self) -> f64 {
        self.green_start + self.state.green_duration
    }

    /// Seconds from now until the end of the green the table refers to.
    fn green_end_from_now(&self) -> f64 {
        match self.state.indication {
            Indication::Green { remaining, .. } => remaining,
            Indication::Red { remaining } => remaining + self.state.green_duration,
        }
    }
}

#[derive(Debug, Clone)]
struct Route {
    segments: Vec<usize>,
    stream: ArrivalStream,
    pending: VecDeque<(f64, Mode)>,
}

/// A running simulation of one technique on one network.
pub struct World {
    config: SimConfig,
    technique: Technique,
    step: u64,
    stoplines: Vec<Stopline>,
    routes: Vec<Route>,
    vehicles: Vec<Vehicle>,
    next_vin: u64,
    rng_arrivals: ChaCha8Rng,
    rng_modes: ChaCha8Rng,
    rng_games: ChaCha8Rng,
    rng_light: ChaCha8Rng,
    rng_replan: ChaCha8Rng,
    mode_dist: WeightedIndex<f64>,
    ledger: CreditLedger,
    intersections: Vec<LegSummary>,
    total: LegSummary,
    spawned: u64,
    completed: u64,
    cycles: BTreeMap<(usize, i64), CycleRecord>,
    trace: Option<Vec<String>>,
    probe: Option<Probe>,
    /// `lanes[segment][lane]`: vehicle indices, front first.
    lanes: Vec<Vec<Vec<usize>>>,
    /// Rank of each vehicle inside its lane list.
    rank: Vec<usize>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl World {
    pub fn new(config: SimConfig, technique: Technique) -> Result<World> {
        config.validate()?;
        let seed = config.seed;
        let mut rng_arrivals = stream(seed, STREAM_ARRIVALS);
        let stoplines = config
            .network
            .segments
            .iter()
            .map(|seg| {
                let signal = config.light_signal(seg.light);
                let cycle = signal.green_cycle(0.0, seg.approach);
                let capacity = signal.max_tokens(seg.approach);
                Stopline {
                    light: seg.light,
                    approach: seg.approach,
                    label: trace::approach_label(seg.light, seg.approach),
                    length: seg.length,
                    lanes: seg.lanes,
                    cycle,
                    green_start: signal.green_start(cycle, seg.approach),
                    capacity,
                    table: TokenTable::new(signal.departure_rate, capacity, cycle),
                    state: signal.state_at(0.0, seg.approach),
                    signal,
                    queue: 0,
                    count: 0,
                }
            })
            .collect::<Vec<_>>();
        let routes = config
            .network
            .routes
            .iter()
            .enumerate()
            .map(|(i, r)| Route {
                segments: r.segments.clone(),
                stream: ArrivalStream::new(
                    config.arrivals,
                    config.route_rate(i),
                    &mut rng_arrivals,
                ),
                pending: VecDeque::new(),
            })
            .collect();
        let w = &config.modes;
        let mode_dist = WeightedIndex::new([w.relaxed, w.normal, w.rush])
            .map_err(|e| Error::config("modes", e.to_string()))?;
        let lanes = config
            .network
            .segments
            .iter()
            .map(|s| vec![Vec::new(); s.lanes])
            .collect();
        Ok(World {
            intersections: vec![LegSummary::default(); config.network.lights.len()],
            technique,
            step: 0,
            stoplines,
            routes,
            vehicles: Vec::new(),
            next_vin: 1,
            rng_arrivals,
            rng_modes: stream(seed, STREAM_MODES),
            rng_games: stream(seed, STREAM_GAMES),
            rng_light: stream(seed, STREAM_LIGHT),
            rng_replan: stream(seed, STREAM_REPLAN),
            mode_dist,
            ledger: CreditLedger::new(),
            total: LegSummary::default(),
            spawned: 0,
            completed: 0,
            cycles: BTreeMap::new(),
            trace: None,
            probe: None,
            lanes,
            rank: Vec::new(),
            config,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn technique(&self) -> Technique {
        self.technique
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.config.dt
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn vehicle(&self, vin: Vin) -> Option<&Vehicle> {
        self.index_of(vin).map(|i| &self.vehicles[i])
    }

    pub fn ledger(&self) -> &CreditLedger {
        &self.ledger
    }

    pub fn token_table(&self, segment: usize) -> &TokenTable {
        &self.stoplines[segment].table
    }

    /// Waiting vehicles on `segment` as of the last step.
    pub fn queue_length(&self, segment: usize) -> usize {
        self.stoplines[segment].queue
    }

    pub fn signal_state(&self, segment: usize) -> SignalState {
        let s = &self.stoplines[segment];
        s.signal.state_at(self.time(), s.approach)
    }

    pub fn cycle_records(&self) -> Vec<CycleRecord> {
        self.cycles.values().copied().collect()
    }

    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace_lines(&self) -> &[String] {
        self.trace.as_deref().unwrap_or(&[])
    }

    /// Records speed samples of the first `limit` vehicles activated on
    /// `segment`, from activation until they cross its stop line.
    pub fn track(&mut self, segment: usize, limit: usize) {
        self.probe = Some(Probe {
            segment,
            limit,
            tracked: Vec::new(),
            samples: Vec::new(),
        });
    }

    pub fn trajectories(&self) -> &[TrajectorySample] {
        self.probe
            .as_ref()
            .map(|p| p.samples.as_slice())
            .unwrap_or(&[])
    }

    pub fn tracked(&self) -> &[Vin] {
        self.probe
            .as_ref()
            .map(|p| p.tracked.as_slice())
            .unwrap_or(&[])
    }

    fn index_of(&self, vin: Vin) -> Option<usize> {
        self.vehicles.binary_search_by_key(&vin, |v| v.vin).ok()
    }

    /// Places a vehicle directly on the network; it counts as spawned.
    pub fn insert_vehicle(&mut self, spec: VehicleSpec) -> Result<Vin> {
        let route = self
            .routes
            .get(spec.route)
            .ok_or_else(|| Error::config("vehicle.route", "unknown route"))?;
        let segment = *route
            .segments
            .get(spec.leg)
            .ok_or_else(|| Error::config("vehicle.leg", "route has no such leg"))?;
        let st = &self.stoplines[segment];
        if spec.lane >= st.lanes {
            return Err(Error::config("vehicle.lane", "segment has no such lane"));
        }
        if !(spec.position >= 0.0 && spec.position < st.length) {
            return Err(Error::config("vehicle.position", "must lie on the segment"));
        }
        if !(spec.speed >= 0.0 && spec.speed <= self.config.v_max) {
            return Err(Error::config("vehicle.speed", "must lie in [0, v_max]"));
        }
        let vin = self.push_vehicle(
            spec.route,
            spec.leg,
            spec.lane,
            spec.position,
            spec.speed,
            spec.mode,
        );
        self.ledger.set(vin, spec.credits);
        Ok(vin)
    }

    fn push_vehicle(
        &mut self,
        route: usize,
        leg: usize,
        lane: usize,
        position: f64,
        speed: f64,
        mode: Mode,
    ) -> Vin {
        let vin = Vin(self.next_vin);
        self.next_vin += 1;
        let t = self.time();
        let segment = self.routes[route].segments[leg];
        self.vehicles.push(Vehicle {
            vin,
            route,
            leg,
            segment,
            lane,
            position,
            speed,
            command: speed,
            mode,
            activated: false,
            token: None,
            permit: None,
            held: false,
            stops: 0,
            cost: TripCost::new(),
            energy: EnergyLedger::new(),
            spawn_time: t,
            deferred: None,
            reaction: 0.0,
            lane_cooldown: 0.0,
            armed: speed > REARM_SPEED,
            prev_speed: speed,
            leg_idle: 0.0,
            leg_stops: 0,
            leg_energy: 0.0,
        });
        self.spawned += 1;
        self.record_arrival(segment, t, position);
        vin
    }

    /// Counts a free-flow arrival at the stop line against the red it
    /// falls in.
    fn record_arrival(&mut self, segment: usize, t: f64, position: f64) {
        let st = &self.stoplines[segment];
        let at = t + (st.length - position) / self.config.cruise_speed;
        if st.signal.state_at(at, st.approach).is_green() {
            return;
        }
        let cycle = st.signal.green_cycle(at, st.approach);
        self.cycles
            .entry((segment, cycle))
            .or_insert(CycleRecord {
                segment,
                cycle,
                ..CycleRecord::default()
            })
            .arrivals_during_red += 1;
    }

    fn emit(&mut self, line: impl FnOnce() -> String) {
        if let Some(t) = self.trace.as_mut() {
            t.push(line());
        }
    }

    /// Runs until the configured duration has elapsed.
    pub fn run_to_end(&mut self) {
        let steps = self.config.steps();
        while self.step < steps {
            self.step();
        }
    }

    pub fn step(&mut self) {
        let t = self.time();
        self.roll_cycles(t);
        self.rebuild_lanes();
        self.spawn_due(t);
        self.admit(t);
        if self.technique == Technique::Csof {
            self.allocate_tokens(t);
        }
        self.plan(t);
        self.change_lanes();
        self.advance(t);
        self.step += 1;
    }

    fn roll_cycles(&mut self, t: f64) {
        for s in 0..self.stoplines.len() {
            let st = &self.stoplines[s];
            let cycle = st.signal.green_cycle(t, st.approach);
            if cycle != st.cycle {
                let old = st.cycle;
                let waiting = self
                    .vehicles
                    .iter()
                    .filter(|v| v.segment == s && (v.held || v.speed < STOP_SPEED || v.has_right()))
                    .count() as u32;
                self.cycles
                    .entry((s, old))
                    .or_insert(CycleRecord {
                        segment: s,
                        cycle: old,
                        ..CycleRecord::default()
                    })
                    .queue_at_green_end = waiting;
                let st = &mut self.stoplines[s];
                let expired = st.table.roll(cycle);
                st.cycle = cycle;
                st.green_start = st.signal.green_start(cycle, st.approach);
                if self.trace.is_some() {
                    let label = self.stoplines[s].label.clone();
                    for (vin, tau) in expired {
                        self.emit(|| trace::token_line(t, &label, TokenEvent::Expire, vin, tau));
                    }
                }
            }
            let st = &mut self.stoplines[s];
            st.state = st.signal.state_at(t, st.approach);
        }
        for v in &mut self.vehicles {
            let cycle = self.stoplines[v.segment].cycle;
            if v.token.is_some_and(|(c, _)| c != cycle) {
                v.token = None;
            }
            if v.permit.is_some_and(|(c, _)| c != cycle) {
                v.permit = None;
            }
            if v.deferred.is_some_and(|c| c != cycle) {
                v.deferred = None;
            }
        }
    }

    fn rebuild_lanes(&mut self) {
        for seg in &mut self.lanes {
            for lane in seg.iter_mut() {
                lane.clear();
            }
        }
        for st in &mut self.stoplines {
            st.count = 0;
        }
        for (i, v) in self.vehicles.iter().enumerate() {
            self.lanes[v.segment][v.lane].push(i);
            self.stoplines[v.segment].count += 1;
        }
        let vehicles = &self.vehicles;
        for seg in &mut self.lanes {
            for lane in seg.iter_mut() {
                lane.sort_by(|&a, &b| {
                    vehicles[b]
                        .position
                        .total_cmp(&vehicles[a].position)
                        .then(vehicles[a].vin.cmp(&vehicles[b].vin))
                });
            }
        }
        self.rank.clear();
        self.rank.resize(self.vehicles.len(), 0);
        for seg in &self.lanes {
            for lane in seg {
                for (r, &i) in lane.iter().enumerate() {
                    self.rank[i] = r;
                }
            }
        }
    }

    fn density_speed_cap(&self, segment: usize) -> f64 {
        let st = &self.stoplines[segment];
        let density = st.count as f64 / (st.length / 1000.0 * st.lanes as f64);
        let d = density.min(self.config.max_density);
        let v = self.config.v_max * (1.0 - d / self.config.max_density);
        v.max(self.config.v_min)
    }

    fn spawn_due(&mut self, t: f64) {
        for r in 0..self.routes.len() {
            while let Some(at) = self.routes[r].stream.pop_due(t, &mut self.rng_arrivals) {
                let mode = Mode::ALL[self.mode_dist.sample(&mut self.rng_modes)];
                self.routes[r].pending.push_back((at, mode));
            }
            while let Some(&(_, mode)) = self.routes[r].pending.front() {
                let segment = self.routes[r].segments[0];
                let st = &self.stoplines[segment];
                let density = (st.count + 1) as f64 / (st.length / 1000.0 * st.lanes as f64);
                if density > self.config.density_cap * self.config.max_density {
                    break;
                }
                let vp = &self.config.vehicle;
                let mut best: Option<(usize, f64, f64)> = None;
                for lane in 0..st.lanes {
                    let (gap, tail_speed) = match self.lanes[segment][lane].last() {
                        Some(&i) => (
                            self.vehicles[i].position - vp.length,
                            self.vehicles[i].speed,
                        ),
                        None => (f64::INFINITY, self.config.cruise_speed),
                    };
                    if best.is_none_or(|(_, g, _)| gap > g) {
                        best = Some((lane, gap, tail_speed));
                    }
                }
                let Some((lane, gap, tail_speed)) = best else {
                    break;
                };
                if gap < vp.min_gap + 1.0 {
                    break;
                }
                let cap = if gap.is_finite() {
                    follow_cap(gap, tail_speed >= STOP_SPEED, false, vp, self.config.dt)
                } else {
                    f64::INFINITY
                };
                let speed = self.config.cruise_speed.min(cap);
                self.routes[r].pending.pop_front();
                self.push_vehicle(r, 0, lane, 0.0, speed, mode);
                let i = self.vehicles.len() - 1;
                self.lanes[segment][lane].push(i);
                self.rank.push(self.lanes[segment][lane].len() - 1);
                self.stoplines[segment].count += 1;
            }
        }
    }

    /// Stop-line admission: decides which front vehicles may cross in the
    /// current green and releases waiting vehicles one slot at a time.
    fn admit(&mut self, t: f64) {
        let vp = self.config.vehicle.clone();
        let dt = self.config.dt;
        for s in 0..self.stoplines.len() {
            let mut fronts: Vec<usize> = Vec::with_capacity(self.lanes[s].len());
            for lane in &self.lanes[s] {
                if let Some(&i) = lane.iter().find(|&&i| !self.vehicles[i].has_right()) {
                    fronts.push(i);
                }
            }
            fronts.sort_by(|&a, &b| {
                self.vehicles[b]
                    .position
                    .total_cmp(&self.vehicles[a].position)
                    .then(self.vehicles[a].vin.cmp(&self.vehicles[b].vin))
            });
            let st = &self.stoplines[s];
            let green = st.state.is_green();
            let length = st.length;
            let mut permits: Vec<(usize, u32)> = Vec::new();
            if green {
                let green_end = st.green_end();
                let mut taken: Vec<u32> = Vec::new();
                let free = |st: &Stopline, taken: &Vec<u32>, k: u32| {
                    st.table.is_free(k) && !taken.contains(&k)
                };
                for &i in &fronts {
                    let v = &self.vehicles[i];
                    let d = length - v.position;
                    if v.held || d > decision_distance(v.speed, &vp, dt) {
                        continue;
                    }
                    let arrival = t + d / v.speed.max(STOP_SPEED);
                    let k = st.slot_at(arrival);
                    if arrival < green_end && k <= st.capacity && free(st, &taken, k) {
                        taken.push(k);
                        permits.push((i, k));
                    } else {
                        self.vehicles[i].held = true;
                    }
                }
                let now = st.slot_at(t);
                if now <= st.capacity && free(st, &taken, now) {
                    let head = fronts.iter().copied().find(|&i| self.vehicles[i].held);
                    if let Some(i) = head {
                        let v = &self.vehicles[i];
                        let need =
                            time_to_reach(length - v.position, v.speed, self.config.v_max, &vp);
                        if t + need < green_end {
                            permits.push((i, now));
                        }
                    }
                }
            } else {
                for &i in &fronts {
                    let v = &self.vehicles[i];
                    if length - v.position <= decision_distance(v.speed, &vp, dt) {
                        self.vehicles[i].held = true;
                    }
                }
            }
            let cycle = self.stoplines[s].cycle;
            if green {
                // The owner of the current slot cannot use it while stuck
                // behind a held lane head, so the head takes the slot and
                // the owner is moved to another one.
                let now = self.stoplines[s].slot_at(t);
                let owner = self.stoplines[s].table.owner(now);
                let taken = self.stoplines[s].table.is_blocked(now)
                    || permits.iter().any(|&(_, k)| k == now);
                if let (Some(owner), false) = (owner, taken) {
                    for lane in 0..self.lanes[s].len() {
                        let list = &self.lanes[s][lane];
                        let Some(h) = list.iter().position(|&i| !self.vehicles[i].has_right())
                        else {
                            continue;
                        };
                        let head = list[h];
                        let Some(j) = list[h + 1..]
                            .iter()
                            .copied()
                            .find(|&j| self.vehicles[j].vin == owner)
                        else {
                            continue;
                        };
                        if !self.vehicles[head].held || permits.iter().any(|&(i, _)| i == head) {
                            continue;
                        }
                        let d = length - self.vehicles[j].position;
                        let reach = (d / self.density_speed_cap(s), d / self.config.v_min);
                        let st = &mut self.stoplines[s];
                        let state = st.state;
                        let moved = st.table.reassign(owner, now, reach, &state);
                        self.vehicles[j].token = moved.map(|k| (st.cycle, k));
                        if self.trace.is_some() {
                            let label = self.stoplines[s].label.clone();
                            let line = match moved {
                                Some(k) => {
                                    trace::token_line(t, &label, TokenEvent::Reassign, owner, k)
                                }
                                None => {
                                    trace::token_line(t, &label, TokenEvent::Release, owner, now)
                                }
                            };
                            self.emit(|| line);
                        }
                        permits.push((head, now));
                        break;
                    }
                }
            }
            for (i, k) in permits {
                self.stoplines[s].table.block(k);
                let v = &mut self.vehicles[i];
                v.permit = Some((cycle, k));
                v.held = false;
                if self.trace.is_some() {
                    let (vin, label) = (v.vin, self.stoplines[s].label.clone());
                    self.emit(|| trace::token_line(t, &label, TokenEvent::Permit, vin, k));
                }
            }
            let queue = self.lanes[s]
                .iter()
                .flatten()
                .filter(|&&i| {
                    let v = &self.vehicles[i];
                    !v.has_right() && (v.held || v.speed < STOP_SPEED)
                })
                .count();
            let st = &mut self.stoplines[s];
            st.queue = queue;
            st.state = st.state.with_queue(queue);
        }
    }

    fn allocate_tokens(&mut self, t: f64) {
        let mut touched = vec![false; self.stoplines.len()];
        // Vehicles behind a moving one without a right cannot reach the
        // line first, so they do not compete for slots yet. Queued vehicles
        // are already covered by the queue reservation.
        let mut shadowed = vec![false; self.vehicles.len()];
        for lane in self.lanes.iter().flatten() {
            let approaching = |&i: &usize| {
                let v = &self.vehicles[i];
                !v.has_right() && !v.held && v.speed >= STOP_SPEED
            };
            if let Some(h) = lane.iter().position(approaching) {
                for &i in &lane[h + 1..] {
                    shadowed[i] = true;
                }
            }
        }
        for i in 0..self.vehicles.len() {
            let v = &self.vehicles[i];
            let st = &self.stoplines[v.segment];
            if shadowed[i]
                || !v.activated
                || v.has_right()
                || v.held
                || v.deferred == Some(st.cycle)
            {
                continue;
            }
            let d = st.length - v.position;
            if d <= 0.0 {
                continue;
            }
            let tti = (d / v.speed.max(self.config.v_min)).max(self.lane_floor(i) + 1e-6);
            let (vin, s) = (v.vin, v.segment);
            let state = st.state;
            if let Some(tau) = self.stoplines[s].table.allocate(vin, tti, &state) {
                touched[s] = true;
                if self.trace.is_some() {
                    let label = self.stoplines[s].label.clone();
                    self.emit(|| trace::token_line(t, &label, TokenEvent::Claim, vin, tau));
                }
            }
        }
        for (s, _) in touched.iter().enumerate().filter(|(_, t)| **t) {
            self.resolve_segment(s, t);
        }
    }

    fn resolve_segment(&mut self, s: usize, t: f64) {
        let groups = detect_conflicts(&self.stoplines[s].table.requests());
        let granted = self.stoplines[s].table.settle_uncontested();
        if self.trace.is_some() {
            let label = self.stoplines[s].label.clone();
            for (vin, tau) in granted {
                self.emit(|| trace::token_line(t, &label, TokenEvent::Grant, vin, tau));
            }
        }
        let cycle = self.stoplines[s].cycle;
        for (tau, group) in groups {
            let vehicles = &self.vehicles;
            let mode_of = |vin: Vin| {
                vehicles
                    .binary_search_by_key(&vin, |v| v.vin)
                    .map(|i| vehicles[i].mode)
                    .unwrap_or(Mode::Normal)
            };
            let Ok(tournament) = resolve_conflict(
                &group,
                mode_of,
                &mut self.ledger,
                &mut self.rng_games,
                &mut self.rng_light,
            ) else {
                continue;
            };
            self.stoplines[s].table.settle(tau, tournament.holder);
            if let Some(tr) = self.trace.as_mut() {
                tr.push(trace::conflict_line(t, tau, &tournament));
            }
            for &loser in &tournament.losers {
                let reach = match self.index_of(loser) {
                    Some(i) if self.vehicles[i].segment == s => {
                        let floor = self.lane_floor(i);
                        let v = &mut self.vehicles[i];
                        v.deferred = Some(cycle);
                        v.token = None;
                        let d = self.stoplines[s].length - v.position;
                        let vmax = self.density_speed_cap(s);
                        Some(((d / vmax).max(floor), d / self.config.v_min))
                    }
                    _ => None,
                };
                let st = &mut self.stoplines[s];
                let state = st.state;
                let outcome = match reach {
                    Some(r) => st.table.reassign(loser, tau, r, &state),
                    None => {
                        st.table.release(loser);
                        None
                    }
                };
                if self.trace.is_some() {
                    let label = self.stoplines[s].label.clone();
                    let line = match outcome {
                        Some(k) => trace::token_line(t, &label, TokenEvent::Reassign, loser, k),
                        None => trace::token_line(t, &label, TokenEvent::Deny, loser, tau),
                    };
                    self.emit(|| line);
                }
            }
        }
        for lane in &self.lanes[s] {
            for &i in lane {
                self.vehicles[i].token = None;
            }
        }
        for (vin, tau) in self.stoplines[s].table.holdings() {
            if let Some(i) = self.index_of(vin) {
                let v = &mut self.vehicles[i];
                if v.segment == s {
                    v.token = Some((cycle, tau));
                }
            }
        }
    }

    fn plan(&mut self, t: f64) {
        let cfg = &self.config;
        let margin = cfg.window_margin;
        let replan = cfg.replan_probability;
        let caps: Vec<f64> = (0..self.stoplines.len())
            .map(|s| self.density_speed_cap(s))
            .collect();
        let mut released: Vec<(usize, Vin, u32)> = Vec::new();
        let mut activated_now: Vec<(usize, usize)> = Vec::new();
        for i in 0..self.vehicles.len() {
            let v = &self.vehicles[i];
            let st = &self.stoplines[v.segment];
            let d = st.length - v.position;
            let vmax = caps[v.segment];
            if !v.activated && d <= cfg.activation_distance {
                let segment = v.segment;
                self.vehicles[i].activated = true;
                activated_now.push((i, segment));
            }
            let v = &self.vehicles[i];
            if !v.activated {
                self.vehicles[i].command = cfg.cruise_speed.min(vmax);
                continue;
            }
            if v.permit.is_some() {
                self.vehicles[i].command = vmax;
                continue;
            }
            if replan > 0.0 && self.rng_replan.random::<f64>() < replan {
                continue;
            }
            let k = KinematicState {
                speed: v.speed.min(vmax),
                distance_to_stop: d,
                v_min: cfg.v_min,
                v_max: vmax,
            };
            let green_end = st.green_end_from_now();
            let windows = v.token.map(|(_, tau)| {
                let (lo, hi) = st.table.window_from_now(tau, &st.state);
                (
                    Window::new(lo, hi).clip_hi(green_end),
                    Window::new(lo.max(0.0), green_end),
                )
            });
            let p = match self.technique {
                Technique::Csof => {
                    let queue_clear =
                        queue_clear_time(st.queue, st.state.departure_rate).unwrap_or(0.0);
                    let attempt = |token: Option<Window>| {
                        plan_with_margin(
                            &k,
                            &st.state,
                            Coordination::Cooperative { token },
                            queue_clear,
                            margin,
                        )
                    };
                    let arrives = |w: &Window, speed: f64| speed > 0.0 && w.contains(d / speed);
                    match (windows, v.token) {
                        (Some((slot, rest)), Some((_, tau))) => {
                            // The slot window is the target; a holder pushed
                            // out of it keeps its right while it can still
                            // cross before the green ends.
                            let exact = attempt(Some(slot));
                            if arrives(&slot, exact.speed) {
                                exact
                            } else {
                                let late = attempt(Some(rest));
                                if arrives(&rest, late.speed) {
                                    late
                                } else {
                                    released.push((v.segment, v.vin, tau));
                                    exact
                                }
                            }
                        }
                        _ if v.deferred == Some(st.cycle) => plan_with_margin(
                            &k,
                            &st.state,
                            Coordination::Denied,
                            queue_clear,
                            margin,
                        ),
                        _ => attempt(None),
                    }
                }
                Technique::Ncso => {
                    plan_with_margin(&k, &st.state, Coordination::Independent, 0.0, margin)
                }
            };
            self.vehicles[i].command = p.speed;
        }
        for (s, vin, tau) in released {
            self.stoplines[s].table.release(vin);
            if let Some(i) = self.index_of(vin) {
                self.vehicles[i].token = None;
            }
            if self.trace.is_some() {
                let label = self.stoplines[s].label.clone();
                self.emit(|| trace::token_line(t, &label, TokenEvent::Release, vin, tau));
            }
        }
        if let Some(probe) = self.probe.as_mut() {
            for (i, s) in activated_now {
                if s == probe.segment && probe.tracked.len() < probe.limit {
                    let v = &self.vehicles[i];
                    probe.tracked.push(v.vin);
                    probe.samples.push(TrajectorySample {
                        t,
                        vin: v.vin,
                        speed: v.speed,
                        distance: self.stoplines[s].length - v.position,
                    });
                }
            }
        }
    }

    /// Leader in the same lane, or the tail of the same lane on the next
    /// segment for a vehicle allowed to cross. Returns `(gap, leader)`.
    fn leader(&self, i: usize, can_pass: bool) -> Option<(f64, usize)> {
        let v = &self.vehicles[i];
        let len = self.config.vehicle.length;
        let r = self.rank[i];
        if r > 0 {
            let j = self.lanes[v.segment][v.lane][r - 1];
            return Some((self.vehicles[j].position - len - v.position, j));
        }
        if !can_pass {
            return None;
        }
        let route = &self.routes[v.route];
        let next = *route.segments.get(v.leg + 1)?;
        let lane = v.lane.min(self.stoplines[next].lanes - 1);
        let &j = self.lanes[next][lane].last()?;
        let to_line = self.stoplines[v.segment].length - v.position;
        Some((to_line + self.vehicles[j].position - len, j))
    }

    /// Earliest arrival (seconds from now) that keeps slots increasing
    /// from the front of the lane: the end of the latest slot held ahead.
    fn lane_floor(&self, i: usize) -> f64 {
        let v = &self.vehicles[i];
        let st = &self.stoplines[v.segment];
        let list = &self.lanes[v.segment][v.lane];
        let rank = list.iter().position(|&j| j == i).unwrap_or(0);
        list[..rank]
            .iter()
            .filter_map(|&j| st.table.token_of(self.vehicles[j].vin))
            .map(|k| st.table.window_from_now(k, &st.state).1)
            .fold(0.0, f64::max)
    }

    fn can_pass(&self, v: &Vehicle) -> bool {
        self.stoplines[v.segment].state.is_green() && v.has_right()
    }

    fn change_lanes(&mut self) {
        let vp = self.config.vehicle.clone();
        let dt = self.config.dt;
        for i in 0..self.vehicles.len() {
            let v = &self.vehicles[i];
            let st = &self.stoplines[v.segment];
            if st.lanes < 2 || v.lane_cooldown > 0.0 || v.held {
                continue;
            }
            let d = st.length - v.position;
            if d <= decision_distance(v.speed, &vp, dt) + vp.time_gap * v.speed {
                continue;
            }
            // Followers still on the previous segment are not indexed here;
            // past this point any of them is at least a full time gap back.
            if v.position < vp.time_gap * self.config.v_max + vp.length {
                continue;
            }
            let r = self.rank[i];
            if r == 0 {
                continue;
            }
            let lane_list = &self.lanes[v.segment][v.lane];
            let ahead = &self.vehicles[lane_list[r - 1]];
            let gap = ahead.position - vp.length - v.position;
            if v.command <= time_gap_cap(gap, vp.time_gap) + 0.5 {
                continue;
            }
            let mut choice = None;
            for target in [v.lane.wrapping_sub(1), v.lane + 1] {
                if target >= st.lanes {
                    continue;
                }
                let list = &self.lanes[v.segment][target];
                let at = list.partition_point(|&j| self.vehicles[j].position > v.position);
                let lead_gap = if at > 0 {
                    self.vehicles[list[at - 1]].position - vp.length - v.position
                } else {
                    f64::INFINITY
                };
                let (follow_gap, follow_speed) = match list.get(at) {
                    Some(&j) => (
                        v.position - vp.length - self.vehicles[j].position,
                        self.vehicles[j].speed,
                    ),
                    None => (f64::INFINITY, 0.0),
                };
                let floor = vp.min_gap + 1.0;
                if lead_gap >= (vp.time_gap * v.speed).max(floor)
                    && lead_gap > gap + 5.0
                    && follow_gap >= (vp.time_gap * follow_speed).max(floor)
                {
                    choice = Some((target, at));
                    break;
                }
            }
            if let Some((target, at)) = choice {
                let seg = self.vehicles[i].segment;
                let from = self.vehicles[i].lane;
                self.lanes[seg][from].remove(r);
                self.lanes[seg][target].insert(at, i);
                for lane in [from, target] {
                    for (k, &j) in self.lanes[seg][lane].iter().enumerate() {
                        self.rank[j] = k;
                    }
                }
                let v = &mut self.vehicles[i];
                v.lane = target;
                v.lane_cooldown = vp.lane_change_cooldown;
            }
        }
    }

    fn advance(&mut self, t: f64) {
        let cfg = &self.config;
        let vp = cfg.vehicle.clone();
        let dt = cfg.dt;
        let n = self.vehicles.len();
        let mut next = vec![0.0; n];
        let mut passing = vec![false; n];
        for i in 0..n {
            let v = &self.vehicles[i];
            let can_pass = self.can_pass(v);
            passing[i] = can_pass;
            let mut reacting = v.reaction > 0.0;
            let mut cap = f64::INFINITY;
            if let Some((gap, j)) = self.leader(i, can_pass) {
                let lead = &self.vehicles[j];
                if lead.speed < lead.prev_speed - vp.comfort_accel * dt - 1e-9 {
                    reacting = true;
                    self.vehicles[i].reaction = vp.reaction_time;
                }
                // The time gap is enforced at once; the reaction delay only
                // keeps the follower from speeding up.
                let lead = &self.vehicles[j];
                cap = follow_cap(gap, lead.speed >= STOP_SPEED, false, &vp, dt);
            }
            let v = &self.vehicles[i];
            if !can_pass {
                let to_line = self.stoplines[v.segment].length - v.position;
                cap = cap.min(stopping_cap(to_line, &vp, dt));
            }
            let mut target = controller(v.speed, v.command, &vp, dt);
            if reacting {
                target = target.min(v.speed);
            }
            next[i] = target.min(cap).clamp(0.0, cfg.v_max);
        }

        let deadband = vp.comfort_accel * dt / 2.0;
        let mut done = vec![false; n];
        let mut crossed: Vec<usize> = Vec::new();
        for i in 0..n {
            let params = &self.config.energy;
            let v = &mut self.vehicles[i];
            let speed = next[i];
            let step_energy = StepEnergy::compute(
                params,
                v.speed,
                speed,
                speed * dt,
                0.0,
                t - v.spawn_time,
                dt,
                deadband,
            );
            v.energy.record(&step_energy);
            v.leg_energy += step_energy.total();
            v.prev_speed = v.speed;
            v.speed = speed;
            v.position += speed * dt;
            v.reaction = (v.reaction - dt).max(0.0);
            v.lane_cooldown = (v.lane_cooldown - dt).max(0.0);
            let stopped = speed < STOP_SPEED;
            v.cost.observe(v.leg, stopped, dt);
            if stopped {
                v.leg_idle += dt;
                if v.armed {
                    v.armed = false;
                    v.stops += 1;
                    v.leg_stops += 1;
                }
            } else if speed > REARM_SPEED {
                v.armed = true;
            }
            let st = &self.stoplines[v.segment];
            if let Some(p) = self.probe.as_mut() {
                if v.segment == p.segment && p.tracked.contains(&v.vin) {
                    p.samples.push(TrajectorySample {
                        t: t + dt,
                        vin: v.vin,
                        speed,
                        distance: (st.length - v.position).max(0.0),
                    });
                }
            }
            if v.position >= st.length {
                debug_assert!(passing[i], "vehicle {} crossed without a right", v.vin);
                crossed.push(i);
            }
        }

        for i in crossed {
            let s = self.vehicles[i].segment;
            let cycle = self.stoplines[s].cycle;
            if let Some((_, k)) = self.vehicles[i].token {
                let vin = self.vehicles[i].vin;
                self.stoplines[s].table.release(vin);
                self.stoplines[s].table.block(k);
            }
            self.cycles
                .entry((s, cycle))
                .or_insert(CycleRecord {
                    segment: s,
                    cycle,
                    ..CycleRecord::default()
                })
                .departures_during_green += 1;
            let light = self.stoplines[s].light;
            let (idle, stops, energy) = {
                let v = &self.vehicles[i];
                (v.leg_idle, v.leg_stops, v.leg_energy)
            };
            self.intersections[light].record(idle, stops, energy);
            self.total.record(idle, stops, energy);
            if self.trace.is_some() {
                let v = &self.vehicles[i];
                let (vin, tau) = (v.vin, v.token.or(v.permit).map(|(_, k)| k).unwrap_or(0));
                let label = self.stoplines[s].label.clone();
                self.emit(|| trace::token_line(t + dt, &label, TokenEvent::Cross, vin, tau));
            }
            let length = self.stoplines[s].length;
            let route = self.vehicles[i].route;
            let leg = self.vehicles[i].leg + 1;
            if leg < self.routes[route].segments.len() {
                let next_seg = self.routes[route].segments[leg];
                let lanes = self.stoplines[next_seg].lanes;
                let v = &mut self.vehicles[i];
                v.leg = leg;
                v.segment = next_seg;
                v.position -= length;
                v.lane = v.lane.min(lanes - 1);
                v.activated = false;
                v.token = None;
                v.permit = None;
                v.held = false;
                v.deferred = None;
                v.leg_idle = 0.0;
                v.leg_stops = 0;
                v.leg_energy = 0.0;
                let position = v.position;
                self.record_arrival(next_seg, t + dt, position);
            } else {
                done[i] = true;
                self.completed += 1;
            }
        }
        if done.iter().any(|d| *d) {
            let mut k = 0;
            self.vehicles.retain(|_| {
                let keep = !done[k];
                k += 1;
                keep
            });
        }
    }

    pub fn report(&self) -> MetricsReport {
        MetricsReport {
            technique: self.technique,
            seed: self.config.seed,
            intersections: self.intersections.clone(),
            total: self.total,
            spawned: self.spawned,
            completed: self.completed,
            in_network: self.vehicles.len() as u64,
        }
    }

    /// Checks conservation, speed bounds and same-lane spacing.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if self.spawned != self.completed + self.vehicles.len() as u64 {
            return Err(format!(
                "spawned {} != completed {} + in network {}",
                self.spawned,
                self.completed,
                self.vehicles.len()
            ));
        }
        let len = self.config.vehicle.length;
        let mut by_lane: BTreeMap<(usize, usize), Vec<&Vehicle>> = BTreeMap::new();
        for v in &self.vehicles {
            if !(v.speed >= 0.0 && v.speed <= self.config.v_max + 1e-9) {
                return Err(format!("vehicle {} speed {}", v.vin, v.speed));
            }
            by_lane.entry((v.segment, v.lane)).or_default().push(v);
        }
        for ((seg, lane), mut list) in by_lane {
            list.sort_by(|a, b| b.position.total_cmp(&a.position));
            for pair in list.windows(2) {
                let gap = pair[0].position - len - pair[1].position;
                if gap < -1e-6 {
                    return Err(format!(
                        "overlap on segment {seg} lane {lane}: {} and {} gap {gap:.3}",
                        pair[0].vin, pair[1].vin
                    ));
                }
            }
        }
        Ok(())
    }
}
