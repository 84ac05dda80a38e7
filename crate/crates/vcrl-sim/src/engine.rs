//! Deterministic discrete-event simulator of vehicles, RSUs, a unit-disk
//! broadcast channel, and adversaries.
//!
//! One engine runs one scenario in one mode. All randomness flows from
//! per-purpose ChaCha streams derived from the run seed, events are ordered
//! by (time, class, sequence), and node containers are index-addressed, so
//! identical (config, seed) pairs replay bit-identically.
//!
//! Cost model: base-piece validation is the only budgeted computation —
//! signature verification (baseline) or a Bloom membership test
//! (vehicle-centric) runs in a bounded FIFO at `cost / cpu_crl_share`,
//! modeling the CPU slice left for revocation handling next to
//! safety-critical message processing. Delta buffering, MAC checks at key
//! disclosure, and request verification are orders of magnitude cheaper and
//! are not budgeted.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::rc::Rc;

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};

use vcrl_core::authority::RevocationAuthority;
use vcrl_core::bloom::Fingerprint;
use vcrl_core::credentials::{issue_batch, IssueParams, Pseudonym};
use vcrl_core::crypto::{SchemeId, SigningKey, VerifyingKey};
use vcrl_core::params::{DisclosureMode, ProtocolParams};
use vcrl_core::ratelimit::TokenBucket;
use vcrl_core::vehicle::{PieceRequest, VehicleConfig, VehicleCrlState};
use vcrl_core::wire::{self, KeyDisclosure};

use crate::config::{Adversary, Mobility, Mode, SimConfig};
use crate::metrics::{MetricsLog, VehicleKind, VehicleMetrics};
use crate::mobility::{dry_pass_visits, place_rsus, trace_visits, Grid, GridWalker, Pos, Trace};

const GAMMA_CRL_INDEX: u32 = 1;

#[derive(Clone, Debug)]
enum Msg {
    Fp(Rc<Fingerprint>, usize),
    /// Fingerprint riding in a carrier pseudonym on a CAM: validating the
    /// CAM already authenticated it, so acceptance costs nothing extra.
    CarrierFp(Rc<Fingerprint>, usize),
    Base(Rc<[u8]>),
    BaselinePiece(Rc<[u8]>),
    Delta(Rc<[u8]>),
    Key(KeyDisclosure),
    Request(Rc<PieceRequest>, usize),
}

impl Msg {
    fn wire_len(&self) -> usize {
        match self {
            Msg::Fp(_, len) | Msg::CarrierFp(_, len) | Msg::Request(_, len) => *len,
            Msg::Base(b) | Msg::BaselinePiece(b) | Msg::Delta(b) => b.len(),
            Msg::Key(_) => 39,
        }
    }
}

#[derive(Clone, Debug)]
enum EventKind {
    MetricTick,
    MobilityStep,
    TripStart(u32),
    TripEnd(u32),
    RsuFp(u32),
    RsuPiece(u32),
    RsuDelta(u32),
    RsuKey(u32),
    DeltaBuild(u32),
    Cam(u32),
    Request(u32),
    Adversary(u32),
    Deliver { to: u32, sender: u32, msg: Msg },
    ProcDone { v: u32, sender: u32, msg: Msg },
    SendAnswer { v: u32, msg: Msg },
}

impl EventKind {
    fn class(&self) -> u8 {
        match self {
            EventKind::MetricTick => 0,
            EventKind::MobilityStep => 1,
            EventKind::TripStart(_) => 2,
            EventKind::TripEnd(_) => 13,
            EventKind::DeltaBuild(_) => 3,
            EventKind::RsuFp(_) => 4,
            EventKind::RsuPiece(_) => 5,
            EventKind::RsuDelta(_) => 6,
            EventKind::RsuKey(_) => 7,
            EventKind::Cam(_) => 8,
            EventKind::Request(_) => 9,
            EventKind::Adversary(_) => 10,
            EventKind::SendAnswer { .. } => 11,
            EventKind::Deliver { .. } => 12,
            EventKind::ProcDone { .. } => 14,
        }
    }
}

struct Event {
    time: u64,
    class: u8,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.class, self.seq) == (other.time, other.class, other.seq)
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.class, self.seq).cmp(&(other.time, other.class, other.seq))
    }
}

struct Rsu {
    pos: Pos,
    budget: TokenBucket,
    piece_rr: usize,
    delta_rr: usize,
}

#[derive(Default)]
struct BaselineState {
    total: Option<u16>,
    received: BTreeSet<u16>,
}

struct Vehicle {
    kind: VehicleKind,
    trip_start: u64,
    trip_end: u64,
    active: bool,
    walker: Option<GridWalker>,
    trace_idx: Option<usize>,
    pos: Pos,
    crl: VehicleCrlState,
    baseline: BaselineState,
    pseudonyms: Vec<Pseudonym>,
    holder: SigningKey,
    budget: TokenBucket,
    busy_until: u64,
    qlen: u32,
    m: VehicleMetrics,
}

impl Vehicle {
    fn cognizant(&self, mode: Mode) -> bool {
        match mode {
            Mode::VehicleCentric => self.crl.is_cognizant(),
            Mode::Baseline => self.baseline.total.is_some_and(|t| {
                self.baseline.received.len() == t as usize
            }),
        }
    }

    /// Pseudonym valid at `t` (credentials cover the whole sim window).
    fn pseudonym_at(&self, t: u64) -> Option<&Pseudonym> {
        self.pseudonyms.iter().find(|p| p.is_valid_at(t))
    }
}

pub struct Engine {
    cfg: SimConfig,
    mode: Mode,
    params: ProtocolParams,
    seed: u64,
    t0: u64,
    t_end: u64,
    grid: Grid,
    trace: Option<Trace>,
    events: BinaryHeap<Reverse<Event>>,
    seq: u64,
    now: u64,
    rsus: Vec<Rsu>,
    vehicles: Vec<Vehicle>,
    auth: RevocationAuthority,
    pca_pub: VerifyingKey,
    fingerprint: Option<Rc<Fingerprint>>,
    fp_bytes: Rc<[u8]>,
    base_pieces: Vec<Rc<[u8]>>,
    baseline_pieces: Vec<Rc<[u8]>>,
    deltas: BTreeMap<u32, Vec<Rc<[u8]>>>,
    rng_channel: ChaCha12Rng,
    rng_proto: ChaCha12Rng,
    rng_adversary: ChaCha12Rng,
    cognizant_count: u32,
    started_count: u32,
    series: Vec<(u64, u32, u32)>,
    /// CRL-class bytes sent per (node, second); honest nodes only.
    pub tx_audit: BTreeMap<(u32, u64), u64>,
    rows: Vec<VehicleMetrics>,
    /// (serial, interval, receive-validated) audit trail for the
    /// no-phantom-knowledge check, populated only in `audit_mode`.
    pub audit_mode: bool,
    pub validated_inputs: BTreeSet<(u32, [u8; 32])>,
}

pub fn run_simulation(cfg: &SimConfig, mode: Mode, seed: u64) -> Result<MetricsLog, String> {
    let mut engine = Engine::new(cfg.clone(), mode, seed)?;
    engine.run();
    Ok(engine.into_log())
}

impl Engine {
    pub fn new(cfg: SimConfig, mode: Mode, seed: u64) -> Result<Engine, String> {
        let params = cfg.params().map_err(|e| e.to_string())?;
        if cfg.duration_us() > params.gamma_crl {
            return Err("duration_s must not exceed gamma_crl_s (one CRL epoch per run)".into());
        }
        let t0 = params.gamma_crl_start(GAMMA_CRL_INDEX);
        let t_end = t0 + cfg.duration_us();

        let mut rng_ledger = ChaCha12Rng::seed_from_u64(seed ^ 0xA1A1_0001);
        let mut rng_roles = ChaCha12Rng::seed_from_u64(seed ^ 0xB2B2_0002);
        let mut rng_mobility = ChaCha12Rng::seed_from_u64(seed ^ 0xC3C3_0003);
        let mut rng_issue = ChaCha12Rng::seed_from_u64(seed ^ 0xD4D4_0004);
        let rng_channel = ChaCha12Rng::seed_from_u64(seed ^ 0xE5E5_0005);
        let rng_proto = ChaCha12Rng::seed_from_u64(seed ^ 0xF6F6_0006);
        let rng_adversary = ChaCha12Rng::seed_from_u64(seed ^ 0x0707_0007);
        let mut rng_drypass = ChaCha12Rng::seed_from_u64(seed ^ 0x1818_0008);

        // Synthetic fleet ledger: revoked pseudonyms uniform over the day.
        let pca_key = SigningKey::generate(SchemeId::Mock, &mut rng_ledger);
        let pca_pub = pca_key.verifying_key();
        let mut auth = RevocationAuthority::new(params, pca_key.clone(), cfg.fp_target_p);
        let fleet_holder =
            SigningKey::generate(SchemeId::Mock, &mut rng_ledger).verifying_key();
        let day_us: u64 = 86_400_000_000;
        let revoked_total =
            (cfg.fleet_pseudonyms_per_day as f64 * cfg.revocation_rate).round() as u64;
        let slots_per_day = (day_us / params.gamma) as u32;
        let mut revoked_ids = Vec::with_capacity(revoked_total as usize);
        for _ in 0..revoked_total {
            let slot = rng_ledger.next_u32() % slots_per_day;
            let id = auth
                .issue(slot, false, None, fleet_holder.clone(), &mut rng_ledger)
                .map_err(|e| e.to_string())?;
            let first = auth.batch(id).unwrap().first_interval(&params);
            auth.revoke(id, first, 0).map_err(|e| e.to_string())?;
            revoked_ids.push(id);
        }

        // Base CRL for the simulated Γ_CRL (schedule included); built in
        // both modes so the key schedule exists, used as pieces only in
        // vehicle-centric mode.
        let base = auth
            .build_base_crl(GAMMA_CRL_INDEX, cfg.bandwidth_bytes_per_s, t0, &mut rng_ledger)
            .map_err(|e| e.to_string())?;
        let base_pieces: Vec<Rc<[u8]>> = base
            .pieces
            .iter()
            .map(|p| Rc::from(wire::encode_crl_piece(p).into_boxed_slice()))
            .collect();
        let fp_bytes: Rc<[u8]> =
            Rc::from(wire::encode_fingerprint(&base.fingerprint).into_boxed_slice());
        let fingerprint = Rc::new(base.fingerprint);

        // Baseline: the full-day CRL, one signed piece per bandwidth unit.
        let baseline_pieces = if mode == Mode::Baseline {
            build_baseline_pieces(&auth, &revoked_ids, &cfg, &pca_key)?
        } else {
            Vec::new()
        };

        // Mobility substrate and RSU placement.
        let grid = Grid::new(cfg.area_width_m, cfg.area_height_m, cfg.block_m);
        let trace = match &cfg.mobility {
            Mobility::Trace { path } => Some(Trace::parse_file(path)?),
            Mobility::Manhattan { .. } => None,
        };
        let visits = match &trace {
            Some(t) => trace_visits(&grid, t),
            None => dry_pass_visits(
                &grid,
                cfg.vehicles.min(60),
                cfg.duration_s.min(300.0) as u32,
                11.0,
                &mut rng_drypass,
            ),
        };
        let rsu_positions = place_rsus(&cfg, &grid, &visits);
        let rsus = rsu_positions
            .into_iter()
            .map(|pos| Rsu {
                pos,
                budget: TokenBucket::new(
                    cfg.bandwidth_bytes_per_s as f64,
                    cfg.bandwidth_bytes_per_s as f64,
                    t0,
                ),
                piece_rr: 0,
                delta_rr: 0,
            })
            .collect::<Vec<_>>();

        // Vehicle roles: adversaries first, then carriers, deterministic
        // shuffle shared across modes.
        let n_vehicles = match &trace {
            Some(t) => t.vehicles.len() as u32,
            None => cfg.vehicles,
        };
        let mut order: Vec<u32> = (0..n_vehicles).collect();
        for i in (1..order.len()).rev() {
            let j = (rng_roles.next_u32() as usize) % (i + 1);
            order.swap(i, j);
        }
        let (adv_kind, adv_count) = match cfg.adversary {
            Adversary::None => (None, 0),
            Adversary::Selfish { fraction } => (
                Some(VehicleKind::Selfish),
                (fraction * n_vehicles as f64).round() as usize,
            ),
            Adversary::Dos { fraction, .. } => (
                Some(VehicleKind::Dos),
                (fraction * n_vehicles as f64).round() as usize,
            ),
            Adversary::DeltaFlood { fraction, .. } => (
                Some(VehicleKind::DeltaFlood),
                (fraction * n_vehicles as f64).round() as usize,
            ),
        };
        let carrier_count = (cfg.carrier_fraction * n_vehicles as f64).round() as usize;
        let mut kinds = vec![VehicleKind::Honest; n_vehicles as usize];
        for (rank, vid) in order.iter().enumerate() {
            kinds[*vid as usize] = if rank < adv_count {
                adv_kind.unwrap_or(VehicleKind::Honest)
            } else if rank < adv_count + carrier_count {
                VehicleKind::Carrier
            } else {
                VehicleKind::Honest
            };
        }

        let mut vehicles = Vec::with_capacity(n_vehicles as usize);
        for vid in 0..n_vehicles {
            let kind = kinds[vid as usize];
            // Trips and walks come from the mobility stream alone so both
            // modes see identical traffic.
            let (trip_start, trip_end, walker, trace_idx, pos) = match &trace {
                Some(t) => {
                    let tv = &t.vehicles[vid as usize];
                    let (s, e) = tv.span();
                    let pos = tv.fixes[0].1;
                    (t0 + s, (t0 + e).min(t_end), None, Some(vid as usize), pos)
                }
                None => {
                    let Mobility::Manhattan { speed_min, speed_max } = cfg.mobility else {
                        unreachable!("trace handled above");
                    };
                    let u = (rng_mobility.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
                    let start = t0 + (u * cfg.trip_start_window_s * 1e6) as u64;
                    let e = (rng_mobility.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
                    let dur_s = (-cfg.trip_duration_mean_s * (1.0 - e).ln())
                        .max(cfg.min_trip_s);
                    let end = (start + (dur_s * 1e6) as u64).min(t_end);
                    let su = (rng_mobility.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
                    let speed = speed_min + su * (speed_max - speed_min);
                    let walker = GridWalker::spawn(&grid, speed, &mut rng_mobility);
                    let pos = walker.pos(&grid);
                    (start, end, Some(walker), None, pos)
                }
            };

            let is_carrier = kind == VehicleKind::Carrier && mode == Mode::VehicleCentric;
            let holder = SigningKey::generate(SchemeId::Mock, &mut rng_issue);
            let batch = issue_batch(
                IssueParams {
                    gamma_index: GAMMA_CRL_INDEX,
                    tau_p: params.tau_p,
                    gamma_len: params.gamma_crl,
                    is_carrier,
                    fingerprint: is_carrier.then_some(&*fingerprint),
                    holder_public_key: holder.verifying_key(),
                    ticket_id: vid as u64,
                },
                &mut rng_issue,
                &pca_key,
            )
            .map_err(|e| e.to_string())?;

            let mut vcfg = VehicleConfig::new(params, pca_pub.clone(), cfg.bandwidth_bytes_per_s);
            vcfg.disclosure_mode = DisclosureMode::Optimized;
            vcfg.max_drift = (cfg.clock_max_drift_ms * 1e3) as u64;
            vcfg.delta_buffer_cap_bytes = cfg.delta_buffer_cap_bytes;
            vcfg.sender_rate_bytes_per_sec =
                cfg.rate_limit_factor * cfg.bandwidth_bytes_per_s as f64;
            vcfg.sender_burst_bytes = vcfg.sender_rate_bytes_per_sec;
            vehicles.push(Vehicle {
                kind,
                trip_start,
                trip_end,
                active: false,
                walker,
                trace_idx,
                pos,
                crl: VehicleCrlState::new(vcfg),
                baseline: BaselineState::default(),
                pseudonyms: batch.pseudonyms,
                holder,
                budget: TokenBucket::new(
                    cfg.bandwidth_bytes_per_s as f64,
                    cfg.bandwidth_bytes_per_s as f64,
                    t0,
                ),
                busy_until: t0,
                qlen: 0,
                m: VehicleMetrics {
                    vehicle_id: vid,
                    kind,
                    trip_start_us: trip_start,
                    trip_end_us: trip_end,
                    cognizant_at_us: None,
                    pieces_received: 0,
                    pieces_duplicate: 0,
                    pieces_rejected: 0,
                    queue_dropped: 0,
                    delta_buffered: 0,
                    delta_accepted: 0,
                    delta_forged: 0,
                    delta_rate_limited: 0,
                    keys_received: 0,
                    requests_sent: 0,
                    answers_sent: 0,
                    delta_validated: Vec::new(),
                },
            });
        }

        let mut engine = Engine {
            cfg,
            mode,
            params,
            seed,
            t0,
            t_end,
            grid,
            trace,
            events: BinaryHeap::new(),
            seq: 0,
            now: t0,
            rsus,
            vehicles,
            auth,
            pca_pub,
            fingerprint: Some(fingerprint),
            fp_bytes,
            base_pieces,
            baseline_pieces,
            deltas: BTreeMap::new(),
            rng_channel,
            rng_proto,
            rng_adversary,
            cognizant_count: 0,
            started_count: 0,
            series: Vec::new(),
            tx_audit: BTreeMap::new(),
            rows: Vec::new(),
            audit_mode: false,
            validated_inputs: BTreeSet::new(),
        };
        engine.schedule_initial();
        // Delta construction for events arriving mid-window.
        if engine.cfg.delta_events_per_interval > 0 && mode == Mode::VehicleCentric {
            engine.schedule_delta_events(&mut rng_ledger)?;
        }
        Ok(engine)
    }

    fn schedule_initial(&mut self) {
        self.push(self.t0, EventKind::MetricTick);
        self.push(self.t0, EventKind::MobilityStep);
        let fp_int = crate::config::to_us(self.cfg.fingerprint_tx_interval_s);
        let piece_int = crate::config::to_us(self.cfg.piece_tx_interval_s);
        let key_int = crate::config::to_us(self.cfg.key_tx_interval_s);
        for r in 0..self.rsus.len() as u32 {
            let stagger = r as u64 * 37_000;
            if self.mode == Mode::VehicleCentric {
                self.push(self.t0 + stagger % fp_int.max(1), EventKind::RsuFp(r));
                self.push(self.t0 + stagger % key_int.max(1), EventKind::RsuKey(r));
            }
            self.push(self.t0 + (stagger + 11_000) % piece_int.max(1), EventKind::RsuPiece(r));
        }
        for v in 0..self.vehicles.len() as u32 {
            let start = self.vehicles[v as usize].trip_start;
            let end = self.vehicles[v as usize].trip_end;
            self.push(start, EventKind::TripStart(v));
            self.push(end, EventKind::TripEnd(v));
        }
    }

    fn schedule_delta_events(&mut self, rng: &mut ChaCha12Rng) -> Result<(), String> {
        let n = self.params.intervals_per_gamma_crl();
        let mut first_build = None;
        for local in 2..=n {
            let window_start = self
                .params
                .disclosure_time(GAMMA_CRL_INDEX, local, DisclosureMode::Optimized)
                .saturating_sub(self.params.tau_p);
            let build_at = window_start.max(self.t0 + 2);
            if build_at >= self.t_end {
                break;
            }
            let abs = self.params.absolute_interval(GAMMA_CRL_INDEX, local);
            let holder = self.pca_pub.clone();
            for _ in 0..self.cfg.delta_events_per_interval {
                let gamma_index =
                    (self.params.interval_start(abs) / self.params.gamma) as u32;
                let id = self
                    .auth
                    .issue(gamma_index, false, None, holder.clone(), rng)
                    .map_err(|e| e.to_string())?;
                self.auth.revoke(id, abs, build_at - 1).map_err(|e| e.to_string())?;
            }
            self.push(build_at, EventKind::DeltaBuild(local));
            first_build.get_or_insert(build_at);
        }
        if let Some(t) = first_build {
            for r in 0..self.rsus.len() as u32 {
                self.push(t + 1 + r as u64 * 29_000, EventKind::RsuDelta(r));
            }
        }
        Ok(())
    }

    fn push(&mut self, time: u64, kind: EventKind) {
        let class = kind.class();
        self.seq += 1;
        self.events.push(Reverse(Event { time, class, seq: self.seq, kind }));
    }

    pub fn run(&mut self) {
        while let Some(Reverse(ev)) = self.events.pop() {
            if ev.time > self.t_end {
                break;
            }
            self.now = ev.time;
            self.dispatch(ev.kind);
        }
        // Any vehicle still marked active had trip_end == t_end.
        for v in 0..self.vehicles.len() {
            if self.vehicles[v].active {
                self.finish_trip(v as u32);
            }
        }
    }

    pub fn into_log(self) -> MetricsLog {
        let mut rows = self.rows;
        rows.sort_by_key(|r| r.vehicle_id);
        MetricsLog {
            mode: match self.mode {
                Mode::VehicleCentric => "vehicle_centric",
                Mode::Baseline => "baseline",
            },
            seed: self.seed,
            signature_scheme: "mock",
            vehicles: rows,
            cognizant_series: self.series,
            total_pieces: match self.mode {
                Mode::VehicleCentric => {
                    self.fingerprint.as_ref().map_or(0, |f| f.piece_count)
                }
                Mode::Baseline => self.baseline_pieces.len() as u32,
            },
        }
    }

    fn dispatch(&mut self, kind: EventKind) {
        match kind {
            EventKind::MetricTick => self.on_metric_tick(),
            EventKind::MobilityStep => self.on_mobility_step(),
            EventKind::TripStart(v) => self.on_trip_start(v),
            EventKind::TripEnd(v) => {
                if self.vehicles[v as usize].active {
                    self.finish_trip(v);
                }
            }
            EventKind::RsuFp(r) => self.on_rsu_fp(r),
            EventKind::RsuPiece(r) => self.on_rsu_piece(r),
            EventKind::RsuDelta(r) => self.on_rsu_delta(r),
            EventKind::RsuKey(r) => self.on_rsu_key(r),
            EventKind::DeltaBuild(local) => self.on_delta_build(local),
            EventKind::Cam(v) => self.on_cam(v),
            EventKind::Request(v) => self.on_request_tick(v),
            EventKind::Adversary(v) => self.on_adversary(v),
            EventKind::Deliver { to, sender, msg } => self.on_deliver(to, sender, msg),
            EventKind::ProcDone { v, sender, msg } => self.on_proc_done(v, sender, msg),
            EventKind::SendAnswer { v, msg } => self.on_send_answer(v, msg),
        }
    }

    // ---- time-driven sources ----

    fn on_metric_tick(&mut self) {
        let sec = (self.now - self.t0) / 1_000_000;
        self.series.push((sec, self.cognizant_count, self.started_count));
        self.push(self.now + 1_000_000, EventKind::MetricTick);
    }

    fn on_mobility_step(&mut self) {
        let rel = self.now - self.t0;
        for v in &mut self.vehicles {
            if !v.active {
                continue;
            }
            if let Some(w) = &mut v.walker {
                w.step(&self.grid, 1.0, &mut self.rng_channel);
                v.pos = w.pos(&self.grid);
            } else if let (Some(idx), Some(trace)) = (v.trace_idx, self.trace.as_ref()) {
                if let Some(p) = trace.vehicles[idx].pos_at(rel) {
                    v.pos = p;
                }
            }
        }
        self.push(self.now + 1_000_000, EventKind::MobilityStep);
    }

    fn on_trip_start(&mut self, v: u32) {
        let vi = v as usize;
        self.vehicles[vi].active = true;
        self.started_count += 1;
        let jitter = (self.rng_proto.next_u32() % 500_000) as u64;
        self.push(self.now + 200_000 + jitter, EventKind::Request(v));
        if self.mode == Mode::VehicleCentric && self.vehicles[vi].kind == VehicleKind::Carrier {
            let cam_int = crate::config::to_us(1.0 / self.cfg.cam_rate_hz.max(0.01));
            self.push(self.now + jitter % cam_int.max(1), EventKind::Cam(v));
        }
        match (self.vehicles[vi].kind, &self.cfg.adversary) {
            (VehicleKind::Dos, Adversary::Dos { bogus_interval_s, .. })
            | (VehicleKind::DeltaFlood, Adversary::DeltaFlood { bogus_interval_s, .. }) => {
                let int = crate::config::to_us(*bogus_interval_s);
                self.push(self.now + jitter % int.max(1), EventKind::Adversary(v));
            }
            _ => {}
        }
    }

    fn finish_trip(&mut self, v: u32) {
        let vi = v as usize;
        self.vehicles[vi].active = false;
        let mut m = self.vehicles[vi].m.clone();
        let c = self.vehicles[vi].crl.counters;
        if self.mode == Mode::VehicleCentric {
            m.pieces_received = c.pieces_accepted;
            m.pieces_duplicate = c.pieces_duplicate;
            m.pieces_rejected = c.pieces_rejected_bf + c.pieces_rejected_malformed;
            m.delta_buffered = c.delta_buffered;
            m.delta_accepted = c.delta_accepted;
            m.delta_forged = c.delta_forged;
            m.delta_rate_limited = c.delta_rejected_rate;
            m.keys_received = c.keys_accepted;
        }
        self.rows.push(m);
    }

    fn on_rsu_fp(&mut self, r: u32) {
        let len = self.fp_bytes.len();
        if self.rsus[r as usize].budget.try_consume(len as f64, self.now) {
            let fp = self.fingerprint.clone().expect("fingerprint built");
            self.broadcast_from_rsu(r, Msg::Fp(fp, len));
        }
        let next = self.now + crate::config::to_us(self.cfg.fingerprint_tx_interval_s);
        self.push(next, EventKind::RsuFp(r));
    }

    fn on_rsu_piece(&mut self, r: u32) {
        let pieces = match self.mode {
            Mode::VehicleCentric => &self.base_pieces,
            Mode::Baseline => &self.baseline_pieces,
        };
        if !pieces.is_empty() {
            let idx = self.rsus[r as usize].piece_rr % pieces.len();
            let bytes = pieces[idx].clone();
            if self.rsus[r as usize].budget.try_consume(bytes.len() as f64, self.now) {
                self.rsus[r as usize].piece_rr += 1;
                let msg = match self.mode {
                    Mode::VehicleCentric => Msg::Base(bytes),
                    Mode::Baseline => Msg::BaselinePiece(bytes),
                };
                self.broadcast_from_rsu(r, msg);
            }
        }
        let next = self.now + crate::config::to_us(self.cfg.piece_tx_interval_s);
        self.push(next, EventKind::RsuPiece(r));
    }

    fn on_rsu_delta(&mut self, r: u32) {
        // Pieces for interval i circulate from mid(i-2) to mid(i-1).
        let active: Vec<Rc<[u8]>> = self
            .deltas
            .iter()
            .filter(|(local, _)| {
                let disclose = self.params.disclosure_time(
                    GAMMA_CRL_INDEX,
                    **local,
                    DisclosureMode::Optimized,
                );
                self.now < disclose && self.now + self.params.tau_p >= disclose
            })
            .flat_map(|(_, pieces)| pieces.iter().cloned())
            .collect();
        if !active.is_empty() {
            let idx = self.rsus[r as usize].delta_rr % active.len();
            let bytes = active[idx].clone();
            if self.rsus[r as usize].budget.try_consume(bytes.len() as f64, self.now) {
                self.rsus[r as usize].delta_rr += 1;
                self.broadcast_from_rsu(r, Msg::Delta(bytes));
            }
        }
        let next = self.now + crate::config::to_us(self.cfg.delta_piece_tx_interval_s);
        self.push(next, EventKind::RsuDelta(r));
    }

    fn on_rsu_key(&mut self, r: u32) {
        let n = self.params.intervals_per_gamma_crl();
        let mut latest = None;
        for local in (1..=n).rev() {
            if let Ok(key) =
                self.auth
                    .disclose_key(GAMMA_CRL_INDEX, local, self.now, DisclosureMode::Optimized)
            {
                latest = Some((local, key));
                break;
            }
        }
        if let Some((local, key)) = latest {
            let kd = KeyDisclosure {
                gamma_crl_index: GAMMA_CRL_INDEX,
                interval_index: local,
                key,
            };
            if self.rsus[r as usize].budget.try_consume(39.0, self.now) {
                self.broadcast_from_rsu(r, Msg::Key(kd));
            }
        }
        let next = self.now + crate::config::to_us(self.cfg.key_tx_interval_s);
        self.push(next, EventKind::RsuKey(r));
    }

    fn on_delta_build(&mut self, local: u32) {
        let Some(schedule) = self.auth.schedule(GAMMA_CRL_INDEX) else {
            return;
        };
        let Some(key) = schedule.key(local).copied() else {
            return;
        };
        match self.auth.gen_delta_crl(
            GAMMA_CRL_INDEX,
            local,
            &key,
            self.cfg.bandwidth_bytes_per_s,
            self.now,
        ) {
            Ok(pieces) if !pieces.is_empty() => {
                let encoded = pieces
                    .iter()
                    .map(|p| Rc::from(wire::encode_delta_piece(p).into_boxed_slice()))
                    .collect();
                self.deltas.insert(local, encoded);
            }
            _ => {}
        }
    }

    fn on_cam(&mut self, v: u32) {
        let vi = v as usize;
        if !self.vehicles[vi].active {
            return;
        }
        // The CAM itself rides the safety-beacon budget; only the carried
        // fingerprint matters to this simulation.
        if let Some(fp) = self.fingerprint.clone() {
            let len = self.fp_bytes.len();
            self.broadcast_from_vehicle(v, Msg::CarrierFp(fp, len), false);
        }
        let cam_int = crate::config::to_us(1.0 / self.cfg.cam_rate_hz.max(0.01));
        self.push(self.now + cam_int.max(1), EventKind::Cam(v));
    }

    fn on_request_tick(&mut self, v: u32) {
        let vi = v as usize;
        if !self.vehicles[vi].active {
            return;
        }
        if !self.vehicles[vi].cognizant(self.mode) {
            let psn = self.vehicles[vi].pseudonym_at(self.now).cloned();
            if let Some(psn) = psn {
                let req = match self.mode {
                    Mode::VehicleCentric => self.vehicles[vi]
                        .crl
                        .make_piece_request(psn, &self.vehicles[vi].holder),
                    Mode::Baseline => {
                        let missing: Vec<u16> = match self.vehicles[vi].baseline.total {
                            Some(total) => (0..total)
                                .filter(|i| !self.vehicles[vi].baseline.received.contains(i))
                                .collect(),
                            None => Vec::new(), // "anything you have"
                        };
                        Some(PieceRequest::build(
                            GAMMA_CRL_INDEX,
                            1,
                            missing,
                            psn,
                            &self.vehicles[vi].holder,
                        ))
                    }
                };
                if let Some(req) = req {
                    let enc_len = wire::encode_piece_request(&req).len();
                    if self.vehicles[vi].budget.try_consume(enc_len as f64, self.now) {
                        self.vehicles[vi].m.requests_sent += 1;
                        self.broadcast_from_vehicle(v, Msg::Request(Rc::new(req), enc_len), true);
                    }
                }
            }
            let next = self.now + crate::config::to_us(self.cfg.request_interval_s);
            self.push(next, EventKind::Request(v));
        } else {
            // Re-check later: a version bump can reset cognizance.
            let next = self.now + 4 * crate::config::to_us(self.cfg.request_interval_s);
            self.push(next, EventKind::Request(v));
        }
    }

    fn on_adversary(&mut self, v: u32) {
        let vi = v as usize;
        if !self.vehicles[vi].active {
            return;
        }
        let plan = match (self.vehicles[vi].kind, &self.cfg.adversary) {
            (VehicleKind::Dos, Adversary::Dos { bogus_interval_s, .. }) => {
                Some((false, *bogus_interval_s))
            }
            (VehicleKind::DeltaFlood, Adversary::DeltaFlood { bogus_interval_s, .. }) => {
                Some((true, *bogus_interval_s))
            }
            _ => None,
        };
        let Some((is_delta, interval)) = plan else {
            return;
        };
        // Clogging attackers ignore the bandwidth contract.
        let msg = if is_delta { self.bogus_delta() } else { self.bogus_piece() };
        self.broadcast_from_vehicle(v, msg, false);
        self.push(self.now + crate::config::to_us(interval), EventKind::Adversary(v));
    }

    fn bogus_piece(&mut self) -> Msg {
        match self.mode {
            Mode::VehicleCentric => {
                let len = self.base_pieces.first().map_or(1024, |p| p.len());
                let mut bytes = vec![0u8; len];
                self.rng_adversary.fill_bytes(&mut bytes);
                Msg::Base(Rc::from(bytes.into_boxed_slice()))
            }
            Mode::Baseline => {
                let len = self.baseline_pieces.first().map_or(1024, |p| p.len());
                let inner = len.saturating_sub(4 + 3 + 16).max(16);
                let mut piece = vec![0u8; inner];
                self.rng_adversary.fill_bytes(&mut piece);
                let mut sig = [0u8; 16];
                self.rng_adversary.fill_bytes(&mut sig);
                Msg::BaselinePiece(Rc::from(
                    encode_signed_wrapper(&piece, SchemeId::Mock, &sig).into_boxed_slice(),
                ))
            }
        }
    }

    fn bogus_delta(&mut self) -> Msg {
        let local = self
            .params
            .local_interval(GAMMA_CRL_INDEX, self.params.interval_of(self.now) + 1)
            .unwrap_or(1);
        let mut serials = Vec::with_capacity(8);
        for _ in 0..8 {
            let mut s = [0u8; 32];
            self.rng_adversary.fill_bytes(&mut s);
            serials.push(vcrl_core::crypto::Digest(s));
        }
        let mut junk = [0u8; 32];
        self.rng_adversary.fill_bytes(&mut junk);
        let piece = vcrl_core::authority::DeltaCrlPiece {
            gamma_crl_index: GAMMA_CRL_INDEX,
            interval_index: local,
            piece_index: 0,
            total_pieces: 1,
            serials,
            disclosed_prev_key: vcrl_core::crypto::Digest(junk),
            mac: vcrl_core::crypto::Digest(junk),
        };
        Msg::Delta(Rc::from(wire::encode_delta_piece(&piece).into_boxed_slice()))
    }

    // ---- channel ----

    fn broadcast_from_rsu(&mut self, r: u32, msg: Msg) {
        let pos = self.rsus[r as usize].pos;
        self.record_tx(r, msg.wire_len());
        self.broadcast(pos, u32::MAX - r, msg);
    }

    /// `budgeted` marks protocol-compliant senders for the channel audit.
    fn broadcast_from_vehicle(&mut self, v: u32, msg: Msg, budgeted: bool) {
        let pos = self.vehicles[v as usize].pos;
        if budgeted {
            self.record_tx(self.rsus.len() as u32 + v, msg.wire_len());
        }
        self.broadcast(pos, v, msg);
    }

    fn record_tx(&mut self, node: u32, bytes: usize) {
        let sec = (self.now - self.t0) / 1_000_000;
        *self.tx_audit.entry((node, sec)).or_default() += bytes as u64;
    }

    fn broadcast(&mut self, from: Pos, sender: u32, msg: Msg) {
        let airtime =
            (msg.wire_len() as f64 * 8.0 / (self.cfg.phys_rate_mbps * 1e6) * 1e6) as u64;
        let arrive = self.now + airtime.max(1);
        let range = self.cfg.radio_range_m;
        for vi in 0..self.vehicles.len() {
            if vi as u32 == sender {
                continue;
            }
            if !self.vehicles[vi].active {
                continue;
            }
            if self.vehicles[vi].pos.dist(&from) > range {
                continue;
            }
            if self.cfg.loss_prob > 0.0 {
                let roll = (self.rng_channel.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
                if roll < self.cfg.loss_prob {
                    continue;
                }
            }
            self.push(
                arrive,
                EventKind::Deliver { to: vi as u32, sender, msg: msg.clone() },
            );
        }
    }

    // ---- reception ----

    fn on_deliver(&mut self, to: u32, sender: u32, msg: Msg) {
        let vi = to as usize;
        if !self.vehicles[vi].active {
            return;
        }
        match msg {
            Msg::Fp(fp, _) | Msg::CarrierFp(fp, _) => {
                if self.mode == Mode::VehicleCentric {
                    self.vehicles[vi].crl.handle_fingerprint(&fp, self.now);
                    self.note_cognizant(to);
                }
            }
            Msg::Base(_) | Msg::BaselinePiece(_) => {
                // Pieces with no fingerprint on hand are dropped for free in
                // vehicle-centric mode; everything else pays the validation
                // cost in the bounded processing queue.
                if self.mode == Mode::VehicleCentric
                    && self.vehicles[vi].crl.fingerprint().is_none()
                {
                    return;
                }
                let cost_ms = match self.mode {
                    Mode::VehicleCentric => self.cfg.bf_check_cost_ms,
                    Mode::Baseline => self.cfg.verify_cost_ms,
                };
                let effective = (cost_ms * 1e3 / self.cfg.cpu_crl_share) as u64;
                if self.vehicles[vi].qlen >= self.cfg.proc_queue_cap {
                    self.vehicles[vi].m.queue_dropped += 1;
                    return;
                }
                self.vehicles[vi].qlen += 1;
                let start = self.vehicles[vi].busy_until.max(self.now);
                let done = start + effective;
                self.vehicles[vi].busy_until = done;
                self.push(done, EventKind::ProcDone { v: to, sender, msg });
            }
            Msg::Delta(bytes) => {
                if self.mode != Mode::VehicleCentric {
                    return;
                }
                let before = self.vehicles[vi].crl.counters.delta_accepted;
                self.vehicles[vi].crl.buffer_delta_piece(&bytes, sender as u64, self.now);
                let after = self.vehicles[vi].crl.counters.delta_accepted;
                if after > before {
                    // A carried key settled a previous interval's buffer.
                    if let Ok(piece) = wire::decode_delta_piece(&bytes) {
                        let iv = piece.interval_index.saturating_sub(1);
                        self.vehicles[vi].m.delta_validated.push((iv, self.now));
                        self.note_validated_delta(to, iv);
                    }
                }
            }
            Msg::Key(kd) => {
                if self.mode != Mode::VehicleCentric {
                    return;
                }
                if let Some((accepted, _)) =
                    self.vehicles[vi].crl.handle_key_disclosure(&kd, self.now)
                {
                    if accepted > 0 {
                        self.vehicles[vi]
                            .m
                            .delta_validated
                            .push((kd.interval_index, self.now));
                        self.note_validated_delta(to, kd.interval_index);
                    }
                }
            }
            Msg::Request(req, _) => self.on_peer_request(to, &req),
        }
    }

    fn on_proc_done(&mut self, v: u32, sender: u32, msg: Msg) {
        let vi = v as usize;
        self.vehicles[vi].qlen = self.vehicles[vi].qlen.saturating_sub(1);
        if !self.vehicles[vi].active {
            return;
        }
        let _ = sender;
        match (self.mode, msg) {
            (Mode::VehicleCentric, Msg::Base(bytes)) => {
                let accepted = self.vehicles[vi].crl.handle_piece(&bytes, self.now);
                if accepted {
                    if self.audit_mode {
                        if let Ok(piece) = wire::decode_crl_piece(&bytes) {
                            for entry in &piece.entries {
                                for (sn, iv) in
                                    vcrl_core::credentials::expand_entry_with_intervals(entry)
                                {
                                    self.validated_inputs.insert((iv, sn.0));
                                }
                            }
                        }
                    }
                    self.note_cognizant(v);
                }
            }
            (Mode::Baseline, Msg::BaselinePiece(bytes)) => {
                let Some((piece_bytes, scheme, sig)) = decode_signed_wrapper(&bytes) else {
                    self.vehicles[vi].m.pieces_rejected += 1;
                    return;
                };
                let sig = vcrl_core::crypto::Signature { scheme, bytes: sig.to_vec() };
                if !self.pca_pub.verify(piece_bytes, &sig) {
                    self.vehicles[vi].m.pieces_rejected += 1;
                    return;
                }
                let Ok(piece) = wire::decode_crl_piece(piece_bytes) else {
                    self.vehicles[vi].m.pieces_rejected += 1;
                    return;
                };
                let bl = &mut self.vehicles[vi].baseline;
                bl.total.get_or_insert(piece.total_pieces);
                if bl.received.insert(piece.piece_index) {
                    self.vehicles[vi].m.pieces_received += 1;
                    self.note_cognizant(v);
                } else {
                    self.vehicles[vi].m.pieces_duplicate += 1;
                }
            }
            _ => {}
        }
    }

    fn on_peer_request(&mut self, v: u32, req: &PieceRequest) {
        let vi = v as usize;
        let kind = self.vehicles[vi].kind;
        if kind == VehicleKind::Selfish || kind == VehicleKind::Dos || kind == VehicleKind::DeltaFlood
        {
            return;
        }
        let picked: Option<Msg> = match self.mode {
            Mode::VehicleCentric => {
                let piece = self.vehicles[vi].crl.answer_request(req, self.now, &mut self.rng_proto);
                piece
                    .map(|p| p.piece_index as usize)
                    .and_then(|idx| self.base_pieces.get(idx).cloned())
                    .map(Msg::Base)
            }
            Mode::Baseline => {
                if !req.requester.verify(&self.pca_pub)
                    || !req.requester.is_valid_at(self.now)
                    || !req.requester.public_key.verify(
                        &wire::piece_request_signed_payload(req),
                        &req.signature,
                    )
                {
                    return;
                }
                let held = &self.vehicles[vi].baseline.received;
                let candidates: Vec<u16> = if req.missing.is_empty() {
                    held.iter().copied().collect()
                } else {
                    req.missing.iter().copied().filter(|i| held.contains(i)).collect()
                };
                if candidates.is_empty() {
                    None
                } else {
                    let pick =
                        candidates[(self.rng_proto.next_u32() as usize) % candidates.len()];
                    self.baseline_pieces.get(pick as usize).cloned().map(Msg::BaselinePiece)
                }
            }
        };
        if let Some(msg) = picked {
            let jitter =
                (self.rng_proto.next_u64() % (crate::config::to_us(self.cfg.response_jitter_ms / 1e3).max(1))) as u64;
            self.push(self.now + 1 + jitter, EventKind::SendAnswer { v, msg });
        }
    }

    fn on_send_answer(&mut self, v: u32, msg: Msg) {
        let vi = v as usize;
        if !self.vehicles[vi].active {
            return;
        }
        let len = msg.wire_len();
        if self.vehicles[vi].budget.try_consume(len as f64, self.now) {
            self.vehicles[vi].m.answers_sent += 1;
            self.broadcast_from_vehicle(v, msg, true);
        }
    }

    fn note_cognizant(&mut self, v: u32) {
        let vi = v as usize;
        if self.vehicles[vi].m.cognizant_at_us.is_none()
            && self.vehicles[vi].cognizant(self.mode)
        {
            self.vehicles[vi].m.cognizant_at_us = Some(self.now);
            if self.vehicles[vi].kind.measured() {
                self.cognizant_count += 1;
            }
        }
    }

    /// Audit: pull the serials whose delta pieces just MAC-validated.
    fn note_validated_delta(&mut self, v: u32, _interval: u32) {
        if self.audit_mode {
            for (iv, d) in self.vehicles[v as usize].crl.drain_accept_log() {
                self.validated_inputs.insert((iv, d.0));
            }
        }
    }

    pub fn enable_audit(&mut self) {
        self.audit_mode = true;
        for v in &mut self.vehicles {
            v.crl.enable_accept_log();
        }
    }

    pub fn vehicles_store_check(&self) -> bool {
        // Every stored serial appeared in some received, validated message.
        for v in &self.vehicles {
            for (iv, d) in v.crl.store_iter() {
                if !self.validated_inputs.contains(&(iv, d.0)) {
                    return false;
                }
            }
        }
        true
    }
}

fn encode_signed_wrapper(piece: &[u8], scheme: SchemeId, sig: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + piece.len() + 3 + sig.len());
    out.extend_from_slice(&(piece.len() as u32).to_be_bytes());
    out.extend_from_slice(piece);
    out.push(scheme.wire_id());
    out.extend_from_slice(&(sig.len() as u16).to_be_bytes());
    out.extend_from_slice(sig);
    out
}

fn decode_signed_wrapper(bytes: &[u8]) -> Option<(&[u8], SchemeId, &[u8])> {
    if bytes.len() < 7 {
        return None;
    }
    let len = u32::from_be_bytes(bytes[0..4].try_into().ok()?) as usize;
    let piece = bytes.get(4..4 + len)?;
    let rest = &bytes[4 + len..];
    if rest.len() < 3 {
        return None;
    }
    let scheme = SchemeId::from_wire_id(rest[0])?;
    let sig_len = u16::from_be_bytes(rest[1..3].try_into().ok()?) as usize;
    let sig = rest.get(3..3 + sig_len)?;
    if 3 + sig_len != rest.len() {
        return None;
    }
    Some((piece, scheme, sig))
}

/// Baseline full-day CRL: the entries of every revoked batch, split under
/// the byte budget (per-piece signature included), each piece individually
/// signed by the PCA.
fn build_baseline_pieces(
    auth: &RevocationAuthority,
    revoked_ids: &[u64],
    cfg: &SimConfig,
    pca_key: &SigningKey,
) -> Result<Vec<Rc<[u8]>>, String> {
    let params = *auth.params();
    let mut entries = Vec::with_capacity(revoked_ids.len());
    for id in revoked_ids {
        let batch = auth.batch(*id).ok_or("missing batch")?;
        entries.push(
            vcrl_core::credentials::make_revocation_entry(batch, 1, &params)
                .map_err(|e| e.to_string())?,
        );
    }
    entries.sort_by(|a, b| {
        (a.first_interval, a.first_revoked_serial).cmp(&(b.first_interval, b.first_revoked_serial))
    });
    if entries.is_empty() {
        return Ok(Vec::new());
    }

    let budget = cfg.bandwidth_bytes_per_s as usize;
    let scheme = pca_key.scheme();
    let wrapped_len = |count: usize| {
        4 + wire::crl_piece_wire_len(count, scheme) + wire::signature_wire_len(scheme)
    };
    if wrapped_len(1) > budget {
        return Err("bandwidth below a single-entry signed piece".into());
    }
    let count = entries.len();
    let mut n = (count * wire::ENTRY_WIRE_LEN).div_ceil(budget).max(1);
    while wrapped_len(count.div_ceil(n)) > budget {
        n += 1;
    }
    let base = count / n;
    let rem = count % n;
    let mut out = Vec::with_capacity(n);
    let mut it = entries.into_iter();
    for piece_index in 0..n {
        let take = base + usize::from(piece_index < rem);
        let piece = vcrl_core::authority::CrlPiece {
            gamma_crl_index: 0,
            crl_version: 1,
            piece_index: piece_index as u16,
            total_pieces: n as u16,
            entries: it.by_ref().take(take).collect(),
            tesla_anchor: vcrl_core::crypto::Digest([0; 32]),
            anchor_signature: vcrl_core::crypto::Signature {
                scheme,
                bytes: Vec::new(),
            },
        };
        let piece_bytes = wire::encode_crl_piece(&piece);
        let sig = pca_key.sign(&piece_bytes);
        out.push(Rc::from(
            encode_signed_wrapper(&piece_bytes, sig.scheme, &sig.bytes).into_boxed_slice(),
        ));
    }
    Ok(out)
}
