//! Cart firmware as a pure event-step function.
//!
//! [`CartFsm::handle`] consumes one [`CartEvent`] and returns the effects the
//! host must carry out: HTTP requests, link bring-up operations, screen
//! renders and timer wake-ups. The host feeds the outcome back as further
//! events. At most one request (HTTP or link) is outstanding at any time.

mod direct;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::atlink::LinkOp;
use crate::display::DisplayView;
use crate::store::schema::{valid_tag_uid, PurchaseRecord, PurchasedItem, TagDoc, UserDoc};
use crate::store::valid_doc_id;
use crate::wire::{json_parse, HttpRequest, HttpResponse, JsonValue, Method};

pub use direct::{Backend, DirectCart};

/// How long the user card stays on screen before scanning starts.
pub const SHOW_USER_MS: u64 = 5_000;
/// How long notices ("UNKNOWN TAG", "PAYMENT COMPLETE", ...) stay up.
pub const NOTICE_MS: u64 = 2_000;
/// Retries after the first failed attempt of any request.
pub const MAX_RETRIES: u32 = 3;
pub const RETRY_BACKOFF_MS: u64 = 500;
/// Conflict-driven re-submissions of the payment commit.
pub const MAX_PAY_CONFLICTS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CartConfig {
    pub ssid: String,
    pub password: String,
    pub server_host: String,
    pub server_port: u16,
}

impl Default for CartConfig {
    fn default() -> Self {
        Self {
            ssid: "market1".into(),
            password: "market1-pass".into(),
            server_host: "184.173.163.133".into(),
            server_port: 80,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Button {
    Up,
    Down,
    Delete,
    Pay,
    Reset,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CartEvent {
    PowerOn,
    /// Timer wake-up; the current time is passed to [`CartFsm::handle`].
    Tick,
    CardSwiped(String),
    TagSwiped(String),
    Button(Button),
    NetReply(HttpResponse),
    NetFail(String),
    /// The outstanding link operation (reset, join, connect) succeeded.
    LinkUp,
}

impl CartEvent {
    pub fn label(&self) -> String {
        match self {
            CartEvent::PowerOn => "power_on".into(),
            CartEvent::Tick => "tick".into(),
            CartEvent::CardSwiped(uid) => format!("card {uid}"),
            CartEvent::TagSwiped(uid) => format!("tag {uid}"),
            CartEvent::Button(b) => format!("button {}", format!("{b:?}").to_lowercase()),
            CartEvent::NetReply(resp) => format!("reply {}", resp.status),
            CartEvent::NetFail(reason) => format!("netfail {reason}"),
            CartEvent::LinkUp => "link_up".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CartEffect {
    SendHttp(HttpRequest),
    Link(LinkOp),
    Render(DisplayView),
    Beep,
    Log(String),
    /// Deliver a [`CartEvent::Tick`] at this time.
    WakeAt(u64),
}

impl CartEffect {
    pub fn label(&self) -> String {
        match self {
            CartEffect::SendHttp(req) => format!("http {} {}", req.method, req.path),
            CartEffect::Link(op) => match op {
                LinkOp::Init => "link init".into(),
                LinkOp::JoinAp { ssid, .. } => format!("link join {ssid}"),
                LinkOp::Connect { host, port } => format!("link connect {host}:{port}"),
                LinkOp::Http { .. } => "link http".into(),
            },
            CartEffect::Render(view) => format!("render {}", view.label()),
            CartEffect::Beep => "beep".into(),
            CartEffect::Log(text) => format!("log {text}"),
            CartEffect::WakeAt(t) => format!("wake {t}"),
        }
    }
}

/// One handled event, as recorded by hosts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub at: u64,
    pub event: String,
    pub phase: String,
    pub effects: Vec<String>,
}

impl TraceEntry {
    pub fn new(at: u64, event: &CartEvent, phase: &Phase, effects: &[CartEffect]) -> Self {
        Self {
            at,
            event: event.label(),
            phase: phase.label().to_string(),
            effects: effects.iter().map(CartEffect::label).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetWait {
    UserLookup,
    TagLookup,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Phase {
    Boot,
    JoiningWifi,
    ConnectingServer,
    AwaitCard,
    ShowingUser {
        until: u64,
    },
    Scanning,
    AwaitNet(NetWait),
    /// Step 0 is the user commit; steps 1..of are tag deletions.
    Paying {
        step: usize,
        of: usize,
    },
    Fault(String),
}

impl Phase {
    pub fn label(&self) -> &'static str {
        match self {
            Phase::Boot => "Boot",
            Phase::JoiningWifi => "JoiningWifi",
            Phase::ConnectingServer => "ConnectingServer",
            Phase::AwaitCard => "AwaitCard",
            Phase::ShowingUser { .. } => "ShowingUser",
            Phase::Scanning => "Scanning",
            Phase::AwaitNet(_) => "AwaitNet",
            Phase::Paying { .. } => "Paying",
            Phase::Fault(_) => "Fault",
        }
    }

    /// Phases the cart can rest in indefinitely without a pending request.
    pub fn is_stable(&self) -> bool {
        matches!(
            self,
            Phase::AwaitCard | Phase::ShowingUser { .. } | Phase::Scanning | Phase::Fault(_)
        )
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CartItem {
    pub uid: String,
    pub name: String,
    pub cost: i64,
    /// Tag revision captured at scan time.
    pub rev: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserSession {
    pub doc: UserDoc,
    pub rev: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Purpose {
    Init,
    Join,
    Connect,
    UserLookup,
    TagLookup(String),
    PayCommit,
    PayRefresh,
    TagDelete(usize),
    TagRefresh(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Request {
    Link(LinkOp),
    Http(HttpRequest),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Pending {
    purpose: Purpose,
    request: Request,
    failures: u32,
    retry_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Payment {
    record: PurchaseRecord,
    put_conflicts: u32,
    refreshed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Overlay {
    view: DisplayView,
    until: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CartFsm {
    config: CartConfig,
    phase: Phase,
    user: Option<UserSession>,
    items: Vec<CartItem>,
    selected: Option<usize>,
    scroll: usize,
    pending: Option<Pending>,
    payment: Option<Payment>,
    overlay: Option<Overlay>,
    /// Requests re-issued after a failure, over the cart's lifetime.
    pub retries: u32,
    /// 409 replies received, over the cart's lifetime.
    pub conflicts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InsufficientFunds {
    pub total: i64,
    pub cash: i64,
}

pub fn compute_total(items: &[CartItem]) -> i64 {
    items.iter().map(|i| i.cost).sum()
}

fn purchased(items: &[CartItem]) -> Vec<PurchasedItem> {
    items
        .iter()
        .map(|i| PurchasedItem {
            uid: i.uid.clone(),
            name: i.name.clone(),
            cost: i.cost,
        })
        .collect()
}

/// New user body for a purchase made at `now`: cash reduced by the total and
/// one history record appended. `_rev` names the session revision as base.
pub fn build_pay_update(
    user: &UserSession,
    items: &[CartItem],
    now: u64,
) -> Result<JsonValue, InsufficientFunds> {
    let total = compute_total(items);
    if total > user.doc.cash {
        return Err(InsufficientFunds {
            total,
            cash: user.doc.cash,
        });
    }
    let mut doc = user.doc.clone();
    doc.cash -= total;
    doc.history.push(PurchaseRecord {
        at: now as i64,
        items: purchased(items),
        total,
    });
    let mut body = doc.to_json();
    body.insert("_rev", user.rev.as_str());
    Ok(body)
}

fn scroll_to(selected: usize, scroll: usize) -> usize {
    let window = crate::display::WINDOW;
    if selected < scroll {
        selected
    } else if selected >= scroll + window {
        selected + 1 - window
    } else {
        scroll
    }
}

impl CartFsm {
    pub fn new(config: CartConfig) -> Self {
        Self {
            config,
            phase: Phase::Boot,
            user: None,
            items: Vec::new(),
            selected: None,
            scroll: 0,
            pending: None,
            payment: None,
            overlay: None,
            retries: 0,
            conflicts: 0,
        }
    }

    pub fn config(&self) -> &CartConfig {
        &self.config
    }

    pub fn phase(&self) -> &Phase {
        &self.phase
    }

    pub fn user(&self) -> Option<&UserSession> {
        self.user.as_ref()
    }

    pub fn items(&self) -> &[CartItem] {
        &self.items
    }

    pub fn selected(&self) -> Option<usize> {
        self.selected
    }

    pub fn scroll(&self) -> usize {
        self.scroll
    }

    /// True while a request is on the wire (not waiting out a backoff).
    pub fn awaiting_reply(&self) -> bool {
        self.pending.as_ref().is_some_and(|p| p.retry_at.is_none())
    }

    /// Moves the selection up one row, clamped at the top.
    pub fn select_prev(&mut self) {
        if let Some(sel) = self.selected {
            let sel = sel.saturating_sub(1);
            self.selected = Some(sel);
            self.scroll = scroll_to(sel, self.scroll);
        }
    }

    /// Moves the selection down one row, clamped at the bottom.
    pub fn select_next(&mut self) {
        if let Some(sel) = self.selected {
            let sel = (sel + 1).min(self.items.len() - 1);
            self.selected = Some(sel);
            self.scroll = scroll_to(sel, self.scroll);
        }
    }

    /// Removes the selected item from the local list. The store is not
    /// touched; tags are only deleted there at payment.
    pub fn delete_selected(&mut self) {
        let Some(sel) = self.selected else {
            return;
        };
        self.items.remove(sel);
        if self.items.is_empty() {
            self.selected = None;
            self.scroll = 0;
            return;
        }
        let sel = sel.min(self.items.len() - 1);
        self.selected = Some(sel);
        let max_scroll = self.items.len().saturating_sub(crate::display::WINDOW);
        self.scroll = scroll_to(sel, self.scroll.min(max_scroll));
    }

    fn list_view(&self) -> DisplayView {
        let rows: Vec<(&str, i64)> = self
            .items
            .iter()
            .map(|i| (i.name.as_str(), i.cost))
            .collect();
        DisplayView::item_list(&rows, self.selected, self.scroll)
    }

    /// What the phase itself shows, ignoring notices.
    fn base_view(&self) -> DisplayView {
        match &self.phase {
            Phase::Boot => DisplayView::Splash,
            Phase::JoiningWifi => DisplayView::WifiStatus {
                ssid: self.config.ssid.clone(),
                joined: false,
            },
            Phase::ConnectingServer => DisplayView::ServerStatus {
                host: self.config.server_host.clone(),
                port: self.config.server_port,
                connected: false,
            },
            Phase::AwaitCard | Phase::AwaitNet(NetWait::UserLookup) => DisplayView::SwipeCardPrompt,
            Phase::ShowingUser { .. } => match &self.user {
                Some(u) => DisplayView::UserCard {
                    name: u.doc.name.clone(),
                    cash: u.doc.cash,
                },
                None => DisplayView::SwipeCardPrompt,
            },
            Phase::Scanning | Phase::AwaitNet(NetWait::TagLookup) => self.list_view(),
            Phase::Paying { .. } => DisplayView::Paying,
            Phase::Fault(_) => DisplayView::Notice("NETWORK FAULT PRESS RESET".into()),
        }
    }

    /// What the screen currently shows.
    pub fn view(&self) -> DisplayView {
        match &self.overlay {
            Some(o) => o.view.clone(),
            None => self.base_view(),
        }
    }

    fn http_request(&self, method: Method, path: String) -> HttpRequest {
        HttpRequest::new(method, path).header("Host", self.config.server_host.clone())
    }

    fn issue(&mut self, purpose: Purpose, request: Request, fx: &mut Vec<CartEffect>) {
        fx.push(match &request {
            Request::Link(op) => CartEffect::Link(op.clone()),
            Request::Http(req) => CartEffect::SendHttp(req.clone()),
        });
        self.pending = Some(Pending {
            purpose,
            request,
            failures: 0,
            retry_at: None,
        });
    }

    fn notice(&mut self, now: u64, view: DisplayView, fx: &mut Vec<CartEffect>) {
        let until = now + NOTICE_MS;
        fx.push(CartEffect::Render(view.clone()));
        fx.push(CartEffect::WakeAt(until));
        self.overlay = Some(Overlay { view, until });
    }

    fn render(&self, fx: &mut Vec<CartEffect>) {
        fx.push(CartEffect::Render(self.view()));
    }

    fn fault(&mut self, reason: String, fx: &mut Vec<CartEffect>) {
        fx.push(CartEffect::Log(format!("fault: {reason}")));
        self.phase = Phase::Fault(reason);
        self.pending = None;
        self.overlay = None;
        self.render(fx);
    }

    fn power_up(&mut self, fx: &mut Vec<CartEffect>) {
        self.phase = Phase::Boot;
        self.render(fx);
        self.issue(Purpose::Init, Request::Link(LinkOp::Init), fx);
    }

    /// Pure transition: returns the next state and the effects.
    pub fn step(&self, now: u64, event: &CartEvent) -> (CartFsm, Vec<CartEffect>) {
        let mut next = self.clone();
        let fx = next.handle(now, event);
        (next, fx)
    }

    /// In-place transition.
    pub fn handle(&mut self, now: u64, event: &CartEvent) -> Vec<CartEffect> {
        let mut fx = Vec::new();
        match event {
            CartEvent::Button(Button::Reset) => {
                *self = CartFsm {
                    retries: self.retries,
                    conflicts: self.conflicts,
                    ..CartFsm::new(self.config.clone())
                };
                fx.push(CartEffect::Log("reset".into()));
                self.power_up(&mut fx);
            }
            CartEvent::PowerOn => {
                if self.phase == Phase::Boot && self.pending.is_none() {
                    self.power_up(&mut fx);
                }
            }
            CartEvent::Tick => self.on_tick(now, &mut fx),
            CartEvent::LinkUp => {
                if self.awaiting_reply() {
                    self.on_link_up(&mut fx);
                }
            }
            CartEvent::NetReply(resp) => {
                let http = self
                    .pending
                    .as_ref()
                    .is_some_and(|p| matches!(p.request, Request::Http(_)));
                if http && self.awaiting_reply() {
                    self.on_reply(now, resp, &mut fx);
                }
            }
            CartEvent::NetFail(reason) => {
                if self.awaiting_reply() {
                    self.on_failure(now, reason.clone(), &mut fx);
                }
            }
            CartEvent::CardSwiped(uid) => {
                if self.phase == Phase::AwaitCard && self.pending.is_none() {
                    if valid_doc_id(uid) {
                        self.overlay = None;
                        self.phase = Phase::AwaitNet(NetWait::UserLookup);
                        let req = self.http_request(Method::Get, format!("/users/{uid}"));
                        self.issue(Purpose::UserLookup, Request::Http(req), &mut fx);
                    } else {
                        self.notice(now, DisplayView::Notice("UNKNOWN CARD".into()), &mut fx);
                    }
                }
            }
            CartEvent::TagSwiped(uid) => {
                if self.phase == Phase::Scanning && self.pending.is_none() {
                    self.on_tag(now, uid, &mut fx);
                }
            }
            CartEvent::Button(button) => {
                if self.phase == Phase::Scanning && self.pending.is_none() {
                    self.on_button(now, *button, &mut fx);
                }
            }
        }
        fx
    }

    fn on_tick(&mut self, now: u64, fx: &mut Vec<CartEffect>) {
        if let Some(p) = &mut self.pending {
            if p.retry_at.is_some_and(|t| t <= now) {
                p.retry_at = None;
                self.retries += 1;
                fx.push(match &p.request {
                    Request::Link(op) => CartEffect::Link(op.clone()),
                    Request::Http(req) => CartEffect::SendHttp(req.clone()),
                });
            }
        }
        let mut dirty = false;
        if self.overlay.as_ref().is_some_and(|o| o.until <= now) {
            self.overlay = None;
            dirty = true;
        }
        if let Phase::ShowingUser { until } = self.phase {
            if until <= now {
                self.phase = Phase::Scanning;
                dirty = true;
            }
        }
        if dirty {
            self.render(fx);
        }
    }

    fn on_failure(&mut self, now: u64, reason: String, fx: &mut Vec<CartEffect>) {
        let Some(p) = &mut self.pending else {
            return;
        };
        p.failures += 1;
        if p.failures > MAX_RETRIES {
            let purpose = format!("{:?}", p.purpose);
            self.fault(
                format!("{purpose} failed after {MAX_RETRIES} retries: {reason}"),
                fx,
            );
            return;
        }
        let at = now + RETRY_BACKOFF_MS;
        p.retry_at = Some(at);
        fx.push(CartEffect::Log(format!(
            "retry {} after: {reason}",
            p.failures
        )));
        fx.push(CartEffect::WakeAt(at));
    }

    fn on_link_up(&mut self, fx: &mut Vec<CartEffect>) {
        let Some(p) = self.pending.take() else {
            return;
        };
        match p.purpose {
            Purpose::Init => {
                self.phase = Phase::JoiningWifi;
                self.render(fx);
                let op = LinkOp::JoinAp {
                    ssid: self.config.ssid.clone(),
                    password: self.config.password.clone(),
                };
                self.issue(Purpose::Join, Request::Link(op), fx);
            }
            Purpose::Join => {
                self.phase = Phase::ConnectingServer;
                self.render(fx);
                let op = LinkOp::Connect {
                    host: self.config.server_host.clone(),
                    port: self.config.server_port,
                };
                self.issue(Purpose::Connect, Request::Link(op), fx);
            }
            Purpose::Connect => {
                self.phase = Phase::AwaitCard;
                self.render(fx);
            }
            // A link acknowledgement cannot answer an HTTP request.
            _ => self.pending = Some(p),
        }
    }

    fn on_tag(&mut self, now: u64, uid: &str, fx: &mut Vec<CartEffect>) {
        if self.items.iter().any(|i| i.uid == uid) {
            fx.push(CartEffect::Log(format!("duplicate tag {uid} ignored")));
            self.notice(now, DisplayView::Notice("ALREADY IN CART".into()), fx);
            return;
        }
        if !valid_tag_uid(uid) {
            self.notice(now, DisplayView::Notice("UNKNOWN TAG".into()), fx);
            return;
        }
        self.overlay = None;
        self.phase = Phase::AwaitNet(NetWait::TagLookup);
        let req = self.http_request(Method::Get, format!("/tags/{uid}"));
        self.issue(Purpose::TagLookup(uid.to_string()), Request::Http(req), fx);
    }

    fn on_button(&mut self, now: u64, button: Button, fx: &mut Vec<CartEffect>) {
        match button {
            Button::Up | Button::Down | Button::Delete => {
                if self.items.is_empty() {
                    return;
                }
                match button {
                    Button::Up => self.select_prev(),
                    Button::Down => self.select_next(),
                    _ => self.delete_selected(),
                }
                self.overlay = None;
                self.render(fx);
            }
            Button::Pay => {
                if self.items.is_empty() {
                    return;
                }
                self.start_payment(now, fx);
            }
            Button::Reset => unreachable!("reset is handled for every phase"),
        }
    }

    fn start_payment(&mut self, now: u64, fx: &mut Vec<CartEffect>) {
        let user = self.user.as_ref().expect("scanning implies a user");
        match build_pay_update(user, &self.items, now) {
            Err(InsufficientFunds { total, cash }) => {
                fx.push(CartEffect::Log(format!(
                    "insufficient funds: {total} > {cash}"
                )));
                self.notice(now, DisplayView::Notice("INSUFFICIENT FUNDS".into()), fx);
            }
            Ok(body) => {
                let record = PurchaseRecord {
                    at: now as i64,
                    items: purchased(&self.items),
                    total: compute_total(&self.items),
                };
                self.payment = Some(Payment {
                    record,
                    put_conflicts: 0,
                    refreshed: false,
                });
                self.overlay = None;
                self.phase = Phase::Paying {
                    step: 0,
                    of: self.items.len() + 1,
                };
                self.render(fx);
                self.send_commit(body, fx);
            }
        }
    }

    fn send_commit(&mut self, body: JsonValue, fx: &mut Vec<CartEffect>) {
        let id = self
            .user
            .as_ref()
            .expect("paying implies a user")
            .doc
            .id
            .clone();
        let req = self
            .http_request(Method::Put, format!("/users/{id}"))
            .header("Content-Type", "application/json")
            .with_body(body.to_canonical_string().into_bytes());
        self.issue(Purpose::PayCommit, Request::Http(req), fx);
    }

    fn send_delete(&mut self, idx: usize, fx: &mut Vec<CartEffect>) {
        let item = &self.items[idx];
        let req = self.http_request(
            Method::Delete,
            format!("/tags/{}?rev={}", item.uid, item.rev),
        );
        self.phase = Phase::Paying {
            step: idx + 1,
            of: self.items.len() + 1,
        };
        self.issue(Purpose::TagDelete(idx), Request::Http(req), fx);
    }

    fn next_delete(&mut self, idx: usize, now: u64, fx: &mut Vec<CartEffect>) {
        if let Some(p) = &mut self.payment {
            p.refreshed = false;
        }
        if idx + 1 < self.items.len() {
            self.send_delete(idx + 1, fx);
            return;
        }
        let total = self.payment.as_ref().map_or(0, |p| p.record.total);
        fx.push(CartEffect::Log(format!("payment complete, total {total}")));
        fx.push(CartEffect::Beep);
        self.user = None;
        self.items.clear();
        self.selected = None;
        self.scroll = 0;
        self.payment = None;
        self.phase = Phase::AwaitCard;
        self.notice(now, DisplayView::Done, fx);
    }

    fn on_reply(&mut self, now: u64, resp: &HttpResponse, fx: &mut Vec<CartEffect>) {
        let Some(pending) = self.pending.take() else {
            return;
        };
        let body = json_parse(&resp.body).ok();
        let rev_of = |b: &Option<JsonValue>, key: &str| {
            b.as_ref()
                .and_then(|b| b.get(key))
                .and_then(JsonValue::as_str)
                .map(str::to_string)
        };
        if resp.status == 409 {
            self.conflicts += 1;
        }
        match (&pending.purpose, resp.status) {
            (Purpose::UserLookup, 200) => {
                let user = body.as_ref().and_then(UserDoc::from_json);
                match (user, rev_of(&body, "_rev")) {
                    (Some(doc), Some(rev)) => {
                        let until = now + SHOW_USER_MS;
                        self.user = Some(UserSession { doc, rev });
                        self.phase = Phase::ShowingUser { until };
                        fx.push(CartEffect::Beep);
                        self.render(fx);
                        fx.push(CartEffect::WakeAt(until));
                    }
                    _ => {
                        self.phase = Phase::AwaitCard;
                        self.notice(now, DisplayView::Notice("BAD USER RECORD".into()), fx);
                    }
                }
            }
            (Purpose::UserLookup, 404) => {
                self.phase = Phase::AwaitCard;
                self.notice(now, DisplayView::Notice("UNKNOWN CARD".into()), fx);
            }
            (Purpose::TagLookup(uid), 200) => {
                let tag = body.as_ref().and_then(TagDoc::from_json);
                self.phase = Phase::Scanning;
                match (tag, rev_of(&body, "_rev")) {
                    (Some(tag), Some(rev)) if tag.uid == *uid => {
                        self.items.push(CartItem {
                            uid: tag.uid,
                            name: tag.name,
                            cost: tag.cost,
                            rev,
                        });
                        if self.selected.is_none() {
                            self.selected = Some(0);
                        }
                        fx.push(CartEffect::Beep);
                        self.render(fx);
                    }
                    _ => self.notice(now, DisplayView::Notice("UNKNOWN TAG".into()), fx),
                }
            }
            (Purpose::TagLookup(_), 404) => {
                self.phase = Phase::Scanning;
                self.notice(now, DisplayView::Notice("UNKNOWN TAG".into()), fx);
            }
            (Purpose::PayCommit, 201) => {
                let payment = self.payment.as_ref().expect("commit implies payment");
                let record = payment.record.clone();
                let user = self.user.as_mut().expect("commit implies user");
                user.doc.cash -= record.total;
                user.doc.history.push(record);
                if let Some(rev) = rev_of(&body, "rev") {
                    user.rev = rev;
                }
                fx.push(CartEffect::Log("payment committed".into()));
                self.send_delete(0, fx);
            }
            (Purpose::PayCommit, 409) => {
                let payment = self.payment.as_mut().expect("commit implies payment");
                payment.put_conflicts += 1;
                if payment.put_conflicts > MAX_PAY_CONFLICTS {
                    self.fault("payment commit kept conflicting".into(), fx);
                    return;
                }
                let id = self
                    .user
                    .as_ref()
                    .expect("commit implies user")
                    .doc
                    .id
                    .clone();
                let req = self.http_request(Method::Get, format!("/users/{id}"));
                self.issue(Purpose::PayRefresh, Request::Http(req), fx);
            }
            (Purpose::PayRefresh, 200) => {
                let doc = body.as_ref().and_then(UserDoc::from_json);
                let (Some(doc), Some(rev)) = (doc, rev_of(&body, "_rev")) else {
                    self.fault("unreadable user record during payment".into(), fx);
                    return;
                };
                let record = self
                    .payment
                    .as_ref()
                    .expect("refresh implies payment")
                    .record
                    .clone();
                let already = doc.history.iter().any(|r| *r == record);
                self.user = Some(UserSession { doc, rev });
                if already {
                    // An earlier attempt committed but its reply was lost.
                    fx.push(CartEffect::Log("payment already committed".into()));
                    self.send_delete(0, fx);
                    return;
                }
                let user = self.user.as_ref().expect("just set");
                match build_pay_update(user, &self.items, record.at as u64) {
                    Ok(body) => self.send_commit(body, fx),
                    Err(InsufficientFunds { total, cash }) => {
                        fx.push(CartEffect::Log(format!(
                            "insufficient funds: {total} > {cash}"
                        )));
                        self.payment = None;
                        self.phase = Phase::Scanning;
                        self.notice(now, DisplayView::Notice("INSUFFICIENT FUNDS".into()), fx);
                    }
                }
            }
            (Purpose::PayRefresh, 404) => {
                self.fault("user record disappeared during payment".into(), fx);
            }
            (Purpose::TagDelete(idx), 200 | 404) | (Purpose::TagRefresh(idx), 404) => {
                let idx = *idx;
                self.next_delete(idx, now, fx);
            }
            (Purpose::TagDelete(idx), 409) => {
                let idx = *idx;
                let payment = self.payment.as_mut().expect("delete implies payment");
                if payment.refreshed {
                    self.fault(format!("tag {} kept conflicting", self.items[idx].uid), fx);
                    return;
                }
                payment.refreshed = true;
                let req = self.http_request(Method::Get, format!("/tags/{}", self.items[idx].uid));
                self.issue(Purpose::TagRefresh(idx), Request::Http(req), fx);
            }
            (Purpose::TagRefresh(idx), 200) => {
                let idx = *idx;
                match rev_of(&body, "_rev") {
                    Some(rev) => {
                        self.items[idx].rev = rev;
                        self.send_delete(idx, fx);
                    }
                    None => self.fault("unreadable tag record during payment".into(), fx),
                }
            }
            (_, status) => {
                self.pending = Some(pending);
                self.on_failure(now, format!("unexpected status {status}"), fx);
            }
        }
    }
}
