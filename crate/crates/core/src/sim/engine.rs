//! The discrete-event scheduler and the wiring between carts, serial legs,
//! modems, network links, the store server and gates.

use std::collections::{BTreeMap, BTreeSet};

use super::link::{Channel, LinkConfig, SerialLeg};
use super::report::{
    CartReport, FrameRecord, GateRecord, Metrics, Outcome, SessionRecord, SimReport, StoreDump,
};
use super::rng::SplitMix64;
use super::scenario::{Action, Scenario};
use crate::atlink::{
    Driver, DriverOutput, LinkOp, LinkResult, Modem, ModemInput, ModemOutput, NetEvent,
    TransportAction,
};
use crate::cart::{compute_total, CartEffect, CartEvent, CartFsm, NetWait, Phase, TraceEntry};
use crate::display::{checkout_stage, frame_to_ascii, render};
use crate::gate::{tag_request, verdict_for, Verdict};
use crate::store::schema::UserDoc;
use crate::store::{valid_doc_id, Db, Store};
use crate::wire::{
    parse_http_request, serialize_http_request, serialize_http_response, HttpResponse, Parsed,
};

/// How long the simulated TCP stack waits for a connection to be accepted.
pub const CONNECT_TIMEOUT_MS: u64 = 1_000;
/// How long a gate waits for the store before failing closed.
pub const GATE_TIMEOUT_MS: u64 = 1_000;

#[derive(Debug, Clone)]
enum Msg {
    Connect,
    Accept,
    Data(Vec<u8>),
    Close,
}

impl Msg {
    fn size(&self) -> usize {
        match self {
            Msg::Data(d) => d.len(),
            _ => 0,
        }
    }
}

#[derive(Debug)]
enum Ev {
    Cart(usize, CartEvent),
    DriverTimer(usize),
    ToModem(usize, Vec<u8>),
    ToDriver(usize, Vec<u8>),
    ToServer(usize, u64, Msg),
    FromServer(usize, u64, Msg),
    ConnectTimeout(usize, u64),
    GatePass(usize, String),
    GateArrive(usize, u64, String),
    GateReply(usize, u64, HttpResponse),
    GateTimeout(usize, u64),
    Net(String, String, f64),
}

struct Conn {
    id: u64,
    accepted: bool,
}

struct OpenSession {
    start: u64,
    user: String,
    total: i64,
    items: usize,
}

struct CartHost {
    id: String,
    fsm: CartFsm,
    driver: Driver,
    modem: Modem,
    conn: Option<Conn>,
    next_conn: u64,
    to_modem: SerialLeg,
    to_driver: SerialLeg,
    up: Channel,
    down: Channel,
    /// Queue key of the pending driver deadline event.
    timer: Option<(u64, u64)>,
    connect_timer: Option<(u64, u64)>,
    http_in_flight: bool,
    session: Option<OpenSession>,
    trace: Vec<TraceEntry>,
    frames: Vec<FrameRecord>,
}

struct GateHost {
    lane: String,
    up: Channel,
    down: Channel,
    next: u64,
    /// Outstanding lookups: id -> (pass time, uid, timeout key).
    pending: BTreeMap<u64, (u64, String, (u64, u64))>,
}

pub struct Simulation {
    name: String,
    seed: u64,
    horizon: u64,
    now: u64,
    seq: u64,
    queue: BTreeMap<(u64, u64), Ev>,
    links: BTreeMap<String, LinkConfig>,
    carts: Vec<CartHost>,
    gates: Vec<GateHost>,
    store: Store,
    server_addr: (String, u16),
    server: BTreeMap<(usize, u64), Vec<u8>>,
    verdicts: Vec<GateRecord>,
    sessions: Vec<SessionRecord>,
    violations: Vec<String>,
    seeded_tags: Vec<String>,
    money_before: i64,
}

/// Cash plus everything already spent, summed over all users.
fn money(store: &Store) -> i64 {
    store
        .live_docs(Db::Users)
        .iter()
        .filter_map(|(_, body, _)| UserDoc::from_json(body))
        .map(|u| u.cash + u.history.iter().map(|r| r.total).sum::<i64>())
        .sum()
}

impl Simulation {
    /// Builds the world for a validated scenario.
    pub fn new(scenario: &Scenario, seed: u64) -> Self {
        let store = Store::new();
        store
            .seed(scenario.users(), scenario.tags(), true)
            .expect("scenario seeds are validated on load");
        let config = scenario.cart_config();
        let channel = |link: &str, who: &str, dir: &str| {
            let link_seed = scenario.link(link).seed;
            Channel::new(SplitMix64::fork(
                seed ^ link_seed.rotate_left(32),
                &format!("{link}/{who}/{dir}"),
            ))
        };
        let carts = scenario
            .carts
            .iter()
            .map(|id| CartHost {
                id: id.clone(),
                fsm: CartFsm::new(config.clone()),
                driver: Driver::new(config.server_host.clone(), config.server_port),
                modem: Modem::new(vec![(
                    scenario.wifi.ssid.clone(),
                    scenario.wifi.password.clone(),
                )]),
                conn: None,
                next_conn: 0,
                to_modem: SerialLeg::default(),
                to_driver: SerialLeg::default(),
                up: channel("store", id, "up"),
                down: channel("store", id, "down"),
                timer: None,
                connect_timer: None,
                http_in_flight: false,
                session: None,
                trace: Vec::new(),
                frames: Vec::new(),
            })
            .collect();
        let gates = scenario
            .gates
            .iter()
            .map(|lane| GateHost {
                lane: lane.clone(),
                up: channel("gate", lane, "up"),
                down: channel("gate", lane, "down"),
                next: 0,
                pending: BTreeMap::new(),
            })
            .collect();
        let links = ["store", "gate"]
            .into_iter()
            .map(|name| (name.to_string(), scenario.link(name)))
            .collect();
        let mut sim = Self {
            name: scenario.name.clone(),
            seed,
            horizon: scenario.horizon_ms,
            now: 0,
            seq: 0,
            queue: BTreeMap::new(),
            links,
            carts,
            gates,
            money_before: money(&store),
            seeded_tags: scenario.tags().iter().map(|t| t.uid.clone()).collect(),
            store,
            server_addr: (config.server_host.clone(), config.server_port),
            server: BTreeMap::new(),
            verdicts: Vec::new(),
            sessions: Vec::new(),
            violations: Vec::new(),
        };
        for c in 0..sim.carts.len() {
            sim.schedule(0, Ev::Cart(c, CartEvent::PowerOn));
        }
        let cart_index: BTreeMap<&str, usize> = scenario
            .carts
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let gate_index: BTreeMap<&str, usize> = scenario
            .gates
            .iter()
            .enumerate()
            .map(|(i, g)| (g.as_str(), i))
            .collect();
        for ev in &scenario.events {
            let target = ev.target.as_deref().unwrap_or("");
            let cart = || cart_index[target];
            let event = match &ev.action {
                Action::SwipeCard { uid } => Ev::Cart(cart(), CartEvent::CardSwiped(uid.clone())),
                Action::SwipeTag { uid } => Ev::Cart(cart(), CartEvent::TagSwiped(uid.clone())),
                Action::Button { button } => Ev::Cart(cart(), CartEvent::Button(*button)),
                Action::GatePass { uid } => Ev::GatePass(gate_index[target], uid.clone()),
                Action::Net { link, field, value } => Ev::Net(link.clone(), field.clone(), *value),
            };
            sim.schedule(ev.t, event);
        }
        sim
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    fn schedule(&mut self, at: u64, ev: Ev) -> (u64, u64) {
        let key = (at.max(self.now), self.seq);
        self.queue.insert(key, ev);
        self.seq += 1;
        key
    }

    fn cancel(&mut self, key: Option<(u64, u64)>) {
        if let Some(key) = key {
            self.queue.remove(&key);
        }
    }

    /// Runs to quiescence or the horizon and builds the report.
    pub fn run(self) -> SimReport {
        self.run_with_store().0
    }

    /// Like [`Simulation::run`], also handing back the final store.
    pub fn run_with_store(mut self) -> (SimReport, Store) {
        let mut deadline = false;
        while let Some(entry) = self.queue.first_entry() {
            let (at, _) = *entry.key();
            if at > self.horizon {
                deadline = true;
                break;
            }
            let ev = entry.remove();
            self.now = at;
            self.dispatch(ev);
        }
        self.finish(deadline)
    }

    fn dispatch(&mut self, ev: Ev) {
        match ev {
            Ev::Cart(c, event) => self.cart_event(c, event),
            Ev::DriverTimer(c) => {
                let host = &mut self.carts[c];
                host.timer = None;
                let out = host.driver.on_timer(self.now);
                self.driver_out(c, out);
            }
            Ev::ToModem(c, bytes) => {
                let out = self.carts[c].modem.feed_serial(&bytes);
                self.modem_out(c, out);
            }
            Ev::ToDriver(c, bytes) => {
                let out = self.carts[c].driver.on_serial(&bytes, self.now);
                self.driver_out(c, out);
            }
            Ev::ToServer(c, conn, msg) => self.server_msg(c, conn, msg),
            Ev::FromServer(c, conn, msg) => {
                let host = &mut self.carts[c];
                let Some(current) = host.conn.as_mut().filter(|k| k.id == conn) else {
                    return;
                };
                let event = match msg {
                    Msg::Accept if !current.accepted => {
                        current.accepted = true;
                        let timer = host.connect_timer.take();
                        self.cancel(timer);
                        NetEvent::Connected
                    }
                    Msg::Data(d) => NetEvent::Data(d),
                    Msg::Close => {
                        host.conn = None;
                        NetEvent::Closed
                    }
                    Msg::Accept | Msg::Connect => return,
                };
                let out = self.carts[c].modem.step(ModemInput::Net(event));
                self.modem_out(c, out);
            }
            Ev::ConnectTimeout(c, conn) => {
                let host = &mut self.carts[c];
                if host
                    .conn
                    .as_ref()
                    .is_some_and(|k| k.id == conn && !k.accepted)
                {
                    host.conn = None;
                    host.connect_timer = None;
                    self.send_up(c, conn, Msg::Close);
                    let out = self.carts[c]
                        .modem
                        .step(ModemInput::Net(NetEvent::ConnectFailed));
                    self.modem_out(c, out);
                }
            }
            Ev::GatePass(g, uid) => self.gate_pass(g, uid),
            Ev::GateArrive(g, id, uid) => {
                let resp = self.store.handle_request(&tag_request(&uid));
                let size = serialize_http_response(&resp).len();
                let cfg = &self.links["gate"];
                if let Some(at) = self.gates[g].down.send(cfg, self.now, size) {
                    self.schedule(at, Ev::GateReply(g, id, resp));
                }
            }
            Ev::GateReply(g, id, resp) => {
                if let Some((at, uid, timeout)) = self.gates[g].pending.remove(&id) {
                    self.cancel(Some(timeout));
                    let (verdict, reason) = verdict_for(Ok(&resp));
                    self.record_verdict(g, at, uid, verdict, reason);
                }
            }
            Ev::GateTimeout(g, id) => {
                if let Some((at, uid, _)) = self.gates[g].pending.remove(&id) {
                    let reason = Some("fail-closed: store unreachable".to_string());
                    self.record_verdict(g, at, uid, Verdict::Alarm, reason);
                }
            }
            Ev::Net(link, field, value) => {
                if let Some(cfg) = self.links.get_mut(&link) {
                    if let Err(e) = cfg.set(&field, value) {
                        self.violations
                            .push(format!("t={} net change rejected: {e}", self.now));
                    }
                }
            }
        }
    }

    fn record_verdict(
        &mut self,
        g: usize,
        at: u64,
        uid: String,
        verdict: Verdict,
        reason: Option<String>,
    ) {
        self.verdicts.push(GateRecord {
            at,
            lane: self.gates[g].lane.clone(),
            uid,
            verdict,
            reason,
            latency_ms: self.now - at,
        });
    }

    fn gate_pass(&mut self, g: usize, uid: String) {
        if !valid_doc_id(&uid) {
            let reason = Some("fail-closed: unreadable uid".to_string());
            self.record_verdict(g, self.now, uid, Verdict::Alarm, reason);
            return;
        }
        let id = self.gates[g].next;
        self.gates[g].next += 1;
        let size = serialize_http_request(&tag_request(&uid)).len();
        let sent = self.gates[g].up.send(&self.links["gate"], self.now, size);
        if let Some(at) = sent {
            self.schedule(at, Ev::GateArrive(g, id, uid.clone()));
        }
        let timeout = self.schedule(self.now + GATE_TIMEOUT_MS, Ev::GateTimeout(g, id));
        self.gates[g].pending.insert(id, (self.now, uid, timeout));
    }

    fn send_up(&mut self, c: usize, conn: u64, msg: Msg) {
        let cfg = &self.links["store"];
        if let Some(at) = self.carts[c].up.send(cfg, self.now, msg.size()) {
            self.schedule(at, Ev::ToServer(c, conn, msg));
        }
    }

    fn send_down(&mut self, c: usize, conn: u64, msg: Msg) {
        let cfg = &self.links["store"];
        if let Some(at) = self.carts[c].down.send(cfg, self.now, msg.size()) {
            self.schedule(at, Ev::FromServer(c, conn, msg));
        }
    }

    /// The store's HTTP front end: one buffer per connection, requests
    /// answered in order, connection kept open until the client closes it.
    fn server_msg(&mut self, c: usize, conn: u64, msg: Msg) {
        match msg {
            Msg::Connect => {
                self.server.insert((c, conn), Vec::new());
                self.send_down(c, conn, Msg::Accept);
            }
            Msg::Data(data) => {
                let Some(buf) = self.server.get_mut(&(c, conn)) else {
                    return;
                };
                buf.extend_from_slice(&data);
                let mut replies = Vec::new();
                let mut close = false;
                loop {
                    match parse_http_request(buf) {
                        Parsed::Complete(req, used) => {
                            buf.drain(..used);
                            replies.push(self.store.handle_request(&req));
                        }
                        Parsed::NeedMore => break,
                        Parsed::Malformed(reason) => {
                            let body =
                                format!("{{\"error\":\"bad_request\",\"reason\":{reason:?}}}");
                            replies.push(HttpResponse::new(400).with_body(body.into_bytes()));
                            close = true;
                            break;
                        }
                    }
                }
                if close {
                    self.server.remove(&(c, conn));
                }
                for resp in replies {
                    self.send_down(c, conn, Msg::Data(serialize_http_response(&resp)));
                }
                if close {
                    self.send_down(c, conn, Msg::Close);
                }
            }
            Msg::Close => {
                self.server.remove(&(c, conn));
            }
            Msg::Accept => {}
        }
    }

    fn modem_out(&mut self, c: usize, out: ModemOutput) {
        if !out.serial.is_empty() {
            let at = self.carts[c].to_driver.send(self.now, out.serial.len());
            self.schedule(at, Ev::ToDriver(c, out.serial));
        }
        for action in out.transport {
            match action {
                TransportAction::Open { host, port } => {
                    let cart = &mut self.carts[c];
                    let id = cart.next_conn;
                    cart.next_conn += 1;
                    cart.conn = Some(Conn {
                        id,
                        accepted: false,
                    });
                    let old = cart.connect_timer.take();
                    self.cancel(old);
                    // Anything but the store's address is unroutable and
                    // just times out.
                    if (host, port) == self.server_addr {
                        self.send_up(c, id, Msg::Connect);
                    }
                    let key =
                        self.schedule(self.now + CONNECT_TIMEOUT_MS, Ev::ConnectTimeout(c, id));
                    self.carts[c].connect_timer = Some(key);
                }
                TransportAction::Send(data) => {
                    if let Some(conn) = self.carts[c].conn.as_ref().filter(|k| k.accepted) {
                        let id = conn.id;
                        self.send_up(c, id, Msg::Data(data));
                    }
                }
                TransportAction::Close => {
                    if let Some(conn) = self.carts[c].conn.take() {
                        self.send_up(c, conn.id, Msg::Close);
                    }
                }
            }
        }
    }

    fn driver_out(&mut self, c: usize, out: DriverOutput) {
        if !out.write.is_empty() {
            let at = self.carts[c].to_modem.send(self.now, out.write.len());
            self.schedule(at, Ev::ToModem(c, out.write));
        }
        let host = &mut self.carts[c];
        let deadline = host.driver.deadline();
        if host.timer.map(|(at, _)| at) != deadline {
            let old = host.timer.take();
            self.cancel(old);
            if let Some(at) = deadline {
                let key = self.schedule(at, Ev::DriverTimer(c));
                self.carts[c].timer = Some(key);
            }
        }
        if let Some(done) = out.done {
            let event = match done {
                Ok(LinkResult::Ready) => CartEvent::LinkUp,
                Ok(LinkResult::Response(resp)) => CartEvent::NetReply(resp),
                Err(reason) => CartEvent::NetFail(reason),
            };
            self.cart_event(c, event);
        }
    }

    fn cart_event(&mut self, c: usize, event: CartEvent) {
        let now = self.now;
        let host = &mut self.carts[c];
        let before = host.fsm.phase().clone();
        let effects = host.fsm.handle(now, &event);
        let after = host.fsm.phase().clone();
        host.trace
            .push(TraceEntry::new(now, &event, &after, &effects));

        if matches!(
            event,
            CartEvent::NetReply(_)
                | CartEvent::NetFail(_)
                | CartEvent::Button(crate::cart::Button::Reset)
        ) {
            host.http_in_flight = false;
        }

        match (&before, &after, &event) {
            (
                Phase::AwaitCard,
                Phase::AwaitNet(NetWait::UserLookup),
                CartEvent::CardSwiped(uid),
            ) => {
                host.session = Some(OpenSession {
                    start: now,
                    user: uid.clone(),
                    total: 0,
                    items: 0,
                });
            }
            (Phase::Scanning, Phase::Paying { .. }, _) => {
                if let Some(s) = &mut host.session {
                    s.total = compute_total(host.fsm.items());
                    s.items = host.fsm.items().len();
                }
            }
            (Phase::Paying { .. }, Phase::AwaitCard, _) => {
                if let Some(s) = host.session.take() {
                    self.sessions.push(SessionRecord {
                        cart: host.id.clone(),
                        user: s.user,
                        started_at: s.start,
                        ended_at: now,
                        duration_ms: now - s.start,
                        total: s.total,
                        items: s.items,
                    });
                }
            }
            (_, Phase::Boot | Phase::Fault(_), _)
            | (Phase::AwaitNet(NetWait::UserLookup), Phase::AwaitCard, _) => host.session = None,
            _ => {}
        }

        for effect in effects {
            match effect {
                CartEffect::SendHttp(req) => {
                    let host = &mut self.carts[c];
                    if host.http_in_flight {
                        self.violations.push(format!(
                            "t={now} cart {}: second request before a reply",
                            host.id
                        ));
                    }
                    host.http_in_flight = true;
                    let op = LinkOp::Http {
                        request: serialize_http_request(&req),
                    };
                    let out = host.driver.start(op, now);
                    self.driver_out(c, out);
                }
                CartEffect::Link(op) => {
                    let out = self.carts[c].driver.start(op, now);
                    self.driver_out(c, out);
                }
                CartEffect::Render(view) => {
                    self.carts[c].frames.push(FrameRecord {
                        at: now,
                        view: view.label().to_string(),
                        stage: checkout_stage(&view),
                        ascii: frame_to_ascii(&render(&view)),
                    });
                }
                CartEffect::WakeAt(at) => {
                    self.schedule(at, Ev::Cart(c, CartEvent::Tick));
                }
                CartEffect::Beep | CartEffect::Log(_) => {}
            }
        }
    }

    fn check_conservation(&mut self) {
        let after = money(&self.store);
        if after != self.money_before {
            self.violations.push(format!(
                "money not conserved: {} before, {} after (cash plus history totals)",
                self.money_before, after
            ));
        }
        let mut bought: BTreeMap<String, usize> = BTreeMap::new();
        for (id, body, _) in self.store.live_docs(Db::Users) {
            let Some(user) = UserDoc::from_json(&body) else {
                self.violations
                    .push(format!("user {id} has an unreadable body"));
                continue;
            };
            if user.cash < 0 {
                self.violations
                    .push(format!("user {id} has negative cash {}", user.cash));
            }
            for record in &user.history {
                for item in &record.items {
                    *bought.entry(item.uid.clone()).or_default() += 1;
                }
            }
        }
        let seeded: BTreeSet<&str> = self.seeded_tags.iter().map(String::as_str).collect();
        for uid in &self.seeded_tags {
            let live = self
                .store
                .get_record(Db::Tags, uid)
                .is_some_and(|d| !d.deleted);
            let sold = bought.get(uid).copied().unwrap_or(0);
            match (live, sold) {
                (true, 0) | (false, 1) => {}
                _ => self.violations.push(format!(
                    "tag {uid}: live={live} but recorded in {sold} purchase(s)"
                )),
            }
        }
        for uid in bought.keys().filter(|u| !seeded.contains(u.as_str())) {
            self.violations
                .push(format!("purchase history names unknown tag {uid}"));
        }
    }

    fn finish(mut self, deadline: bool) -> (SimReport, Store) {
        let mut stuck = Vec::new();
        for host in &self.carts {
            let phase = host.fsm.phase();
            if deadline || !phase.is_stable() || host.driver.busy() {
                stuck.push(format!(
                    "cart {}: phase {phase:?}, driver busy {}, modem {:?}",
                    host.id,
                    host.driver.busy(),
                    host.modem.phase()
                ));
            }
        }
        for gate in &self.gates {
            for (at, uid, _) in gate.pending.values() {
                stuck.push(format!(
                    "gate {}: lookup of {uid} from t={at} unanswered",
                    gate.lane
                ));
            }
        }
        if deadline {
            stuck.push(format!("{} events still queued", self.queue.len()));
        } else if !stuck.is_empty() {
            self.violations
                .push("simulation went quiet with unsettled entities".to_string());
        }
        self.check_conservation();

        let faulted = self
            .carts
            .iter()
            .any(|h| matches!(h.fsm.phase(), Phase::Fault(_)));
        let outcome = if deadline {
            Outcome::DeadlineExceeded
        } else if faulted {
            Outcome::Fault
        } else if !self.violations.is_empty() {
            Outcome::Violation
        } else {
            Outcome::Ok
        };

        let sessions = self.sessions.len();
        let mean_checkout_ms = if sessions == 0 {
            0
        } else {
            self.sessions.iter().map(|s| s.duration_ms).sum::<u64>() / sessions as u64
        };
        let channels = self
            .carts
            .iter()
            .flat_map(|h| [&h.up, &h.down])
            .chain(self.gates.iter().flat_map(|g| [&g.up, &g.down]));
        let (sent, dropped) = channels.fold((0, 0), |(s, d), ch| (s + ch.sent, d + ch.dropped));
        let metrics = Metrics {
            sessions,
            mean_checkout_ms,
            alarms: self
                .verdicts
                .iter()
                .filter(|v| v.verdict == Verdict::Alarm)
                .count(),
            conflicts_retried: self.carts.iter().map(|h| u64::from(h.fsm.conflicts)).sum(),
            store_conflicts: self.store.conflict_count(),
            net_retries: self.carts.iter().map(|h| u64::from(h.fsm.retries)).sum(),
            messages_sent: sent,
            messages_dropped: dropped,
        };
        let store = StoreDump::of(&self.store);
        let carts = self
            .carts
            .into_iter()
            .map(|h| CartReport {
                final_phase: h.fsm.phase().label().to_string(),
                retries: h.fsm.retries,
                conflicts: h.fsm.conflicts,
                id: h.id,
                trace: h.trace,
                frames: h.frames,
            })
            .collect();
        let report = SimReport {
            scenario: self.name,
            seed: self.seed,
            exit_code: outcome.exit_code(),
            outcome,
            end_ms: self.now,
            carts,
            gates: self.verdicts,
            sessions: self.sessions,
            metrics,
            store,
            violations: self.violations,
            stuck,
        };
        (report, self.store)
    }
}

/// Runs `scenario` with `seed` to completion.
pub fn run(scenario: &Scenario, seed: u64) -> SimReport {
    Simulation::new(scenario, seed).run()
}
