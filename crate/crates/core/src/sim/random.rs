//! Seeded random fleet scenarios.
//!
//! Every cart gets its own slice of the tag catalog (a physical item can
//! only be in one basket) while users are shared, so concurrent payments
//! against the same account happen. Sessions start in loosely aligned
//! slots to make those collisions likely.

use super::link::LinkConfig;
use super::rng::SplitMix64;
use super::scenario::{Action, Scenario, ScenarioEvent, SeedSource};
use crate::cart::Button;
use crate::store::schema::{TagSeed, UserSeed};

const PRODUCTS: [&str; 12] = [
    "Milk", "Bread", "Apples", "Cheese", "Eggs", "Rice", "Tea", "Coffee", "Butter", "Pasta",
    "Honey", "Yogurt",
];

/// Time between session slots; long enough for a slow checkout to finish.
const SLOT_MS: u64 = 30_000;

#[derive(Debug, Clone, PartialEq)]
pub struct FleetSpec {
    pub carts: usize,
    pub tags: usize,
    pub users: usize,
    pub max_items: usize,
    pub store_link: LinkConfig,
    /// Append a gate sweep over every tag after the carts are done.
    pub gate_sweep: bool,
}

impl Default for FleetSpec {
    fn default() -> Self {
        Self {
            carts: 10,
            tags: 200,
            users: 6,
            max_items: 6,
            store_link: LinkConfig::default(),
            gate_sweep: true,
        }
    }
}

pub fn user_uid(i: usize) -> String {
    format!("{:08X}", 0xC0DE_0000u32 as usize + i)
}

pub fn tag_uid(i: usize) -> String {
    format!("04{:012X}", 0x00A0_0000_0000u64 as usize + i)
}

fn event(t: u64, target: &str, action: Action) -> ScenarioEvent {
    ScenarioEvent {
        t,
        target: Some(target.to_string()),
        action,
    }
}

pub fn random_scenario(spec: &FleetSpec, seed: u64) -> Scenario {
    let mut rng = SplitMix64::fork(seed, "fleet");
    let carts: Vec<String> = (1..=spec.carts).map(|i| format!("cart{i:02}")).collect();
    let users: Vec<UserSeed> = (0..spec.users.max(1))
        .map(|i| UserSeed {
            uid: user_uid(i),
            name: format!("Shopper {i}"),
            cash: rng.range(500, 6000) as i64,
        })
        .collect();
    let tags: Vec<TagSeed> = (0..spec.tags)
        .map(|i| TagSeed {
            uid: tag_uid(i),
            name: format!("{} {i}", PRODUCTS[i % PRODUCTS.len()]),
            cost: rng.range(20, 900) as i64,
        })
        .collect();

    // Shuffle and deal the catalog out to the carts.
    let mut order: Vec<usize> = (0..tags.len()).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.below(i as u64 + 1) as usize);
    }
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); carts.len()];
    for (n, i) in order.into_iter().enumerate() {
        pools[n % carts.len()].push(i);
    }

    let mut events = Vec::new();
    let mut end = 0;
    for (cart, pool) in carts.iter().zip(pools) {
        let mut pool = pool.into_iter();
        let mut slot = 0u64;
        loop {
            let mut t = 1_000 + slot * SLOT_MS + rng.below(400);
            slot += 1;
            let user = &users[rng.below(users.len() as u64) as usize].uid;
            events.push(event(t, cart, Action::SwipeCard { uid: user.clone() }));
            t += 5_200 + rng.below(300);

            let want = rng.range(1, spec.max_items.max(1) as u64) as usize;
            let picked: Vec<usize> = pool.by_ref().take(want).collect();
            if picked.is_empty() {
                events.pop();
                break;
            }
            for (n, &i) in picked.iter().enumerate() {
                events.push(event(
                    t,
                    cart,
                    Action::SwipeTag {
                        uid: tags[i].uid.clone(),
                    },
                ));
                t += rng.range(250, 900);
                if n > 0 && rng.chance(0.15) {
                    let again = tags[picked[rng.below(n as u64) as usize]].uid.clone();
                    events.push(event(t, cart, Action::SwipeTag { uid: again }));
                    t += rng.range(250, 600);
                }
            }
            for _ in 0..rng.below(4) {
                let button = match rng.below(5) {
                    0 | 1 => Button::Down,
                    2 | 3 => Button::Up,
                    _ => Button::Delete,
                };
                events.push(event(t, cart, Action::Button { button }));
                t += rng.range(150, 500);
            }
            // Resets only happen before payment: a reboot while paying can
            // strand tags that were charged but not yet removed.
            let button = if rng.chance(0.1) {
                Button::Reset
            } else {
                Button::Pay
            };
            events.push(event(t, cart, Action::Button { button }));
            end = end.max(t);
        }
    }
    events.sort_by_key(|e| e.t);

    let mut gates = Vec::new();
    if spec.gate_sweep {
        gates.push("exit".to_string());
        let start = end + SLOT_MS;
        for (n, tag) in tags.iter().enumerate() {
            events.push(event(
                start + n as u64 * 10,
                "exit",
                Action::GatePass {
                    uid: tag.uid.clone(),
                },
            ));
        }
        end = start + tags.len() as u64 * 10;
    }

    let mut scenario = Scenario::new(&[]);
    scenario.name = format!("fleet-{seed}");
    scenario.carts = carts;
    scenario.gates = gates;
    scenario
        .links
        .insert("store".into(), spec.store_link.clone());
    scenario.seed.users = SeedSource::Inline(users);
    scenario.seed.tags = SeedSource::Inline(tags);
    scenario.strict = true;
    scenario.horizon_ms = end + 10 * SLOT_MS;
    scenario.events = events;
    scenario
}
