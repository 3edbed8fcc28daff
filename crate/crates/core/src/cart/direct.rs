//! A cart wired straight to an in-process store.
//!
//! Link operations succeed at once and HTTP requests are serialized, parsed
//! and answered by the store in the same call. Used by the panel bridge and
//! by tests that exercise the firmware without a simulated network.

use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;

use super::{CartConfig, CartEffect, CartEvent, CartFsm, TraceEntry};
use crate::display::DisplayView;
use crate::store::Store;
use crate::wire::{
    parse_http_request, parse_http_response, serialize_http_request, serialize_http_response,
    HttpRequest, HttpResponse, Parsed,
};

/// Answers one store request.
pub type Backend = Arc<dyn Fn(&HttpRequest) -> HttpResponse + Send + Sync>;

pub struct DirectCart {
    fsm: CartFsm,
    backend: Backend,
    wakes: BTreeSet<u64>,
    now: u64,
    view: DisplayView,
    trace: Vec<TraceEntry>,
    /// When set, every HTTP request fails as if the server were unreachable.
    pub offline: bool,
}

impl DirectCart {
    pub fn new(config: CartConfig, store: Arc<Store>) -> Self {
        Self::with_backend(config, Arc::new(move |req| store.handle_request(req)))
    }

    pub fn with_backend(config: CartConfig, backend: Backend) -> Self {
        Self {
            fsm: CartFsm::new(config),
            backend,
            wakes: BTreeSet::new(),
            now: 0,
            view: DisplayView::Splash,
            trace: Vec::new(),
            offline: false,
        }
    }

    pub fn fsm(&self) -> &CartFsm {
        &self.fsm
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    /// The last view the firmware rendered.
    pub fn view(&self) -> &DisplayView {
        &self.view
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    fn exchange(&self, req: &HttpRequest) -> CartEvent {
        if self.offline {
            return CartEvent::NetFail("server unreachable".into());
        }
        let bytes = serialize_http_request(req);
        let Parsed::Complete(req, _) = parse_http_request(&bytes) else {
            return CartEvent::NetFail("request did not parse".into());
        };
        let bytes = serialize_http_response(&(self.backend)(&req));
        match parse_http_response(&bytes) {
            Parsed::Complete(resp, _) => CartEvent::NetReply(resp),
            _ => CartEvent::NetFail("response did not parse".into()),
        }
    }

    /// Fires due timers up to `now`, then handles `event` and everything
    /// it triggers. Returns the effects of the whole cascade.
    pub fn deliver(&mut self, now: u64, event: CartEvent) -> Vec<CartEffect> {
        let mut all = self.advance(now);
        all.extend(self.cascade(now, event));
        all
    }

    /// Fires timers due at or before `now`, each at its own time.
    pub fn advance(&mut self, now: u64) -> Vec<CartEffect> {
        let mut all = Vec::new();
        while let Some(&t) = self.wakes.first() {
            if t > now {
                break;
            }
            self.wakes.remove(&t);
            all.extend(self.cascade(t, CartEvent::Tick));
        }
        self.now = self.now.max(now);
        all
    }

    fn cascade(&mut self, now: u64, event: CartEvent) -> Vec<CartEffect> {
        let mut all = Vec::new();
        let mut queue = VecDeque::from([event]);
        while let Some(event) = queue.pop_front() {
            let fx = self.fsm.handle(now, &event);
            self.trace
                .push(TraceEntry::new(now, &event, self.fsm.phase(), &fx));
            for effect in &fx {
                match effect {
                    CartEffect::SendHttp(req) => queue.push_back(self.exchange(req)),
                    CartEffect::Link(_) => queue.push_back(CartEvent::LinkUp),
                    CartEffect::Render(view) => self.view = view.clone(),
                    CartEffect::WakeAt(t) => {
                        self.wakes.insert(*t);
                    }
                    CartEffect::Beep | CartEffect::Log(_) => {}
                }
            }
            all.extend(fx);
        }
        all
    }
}
