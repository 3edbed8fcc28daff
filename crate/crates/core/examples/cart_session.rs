//! A cart wired directly to an in-memory store: swipe a card, scan three
//! tags, scroll, pay. Prints the screen after each step.

use std::sync::Arc;

use smartcart::cart::{Button, CartConfig, CartEvent, DirectCart, SHOW_USER_MS};
use smartcart::display::{frame_to_ascii, render};
use smartcart::store::{Db, Store, TagSeed, UserSeed};

fn show(cart: &DirectCart, what: &str) {
    println!("{what}  [{}]", cart.fsm().phase().label());
    for line in frame_to_ascii(&render(cart.view())).lines() {
        println!("  |{line}|");
    }
}

fn main() {
    let store = Arc::new(Store::new());
    let user = UserSeed {
        uid: "6C92D391".into(),
        name: "Yerlan Berdaliyev".into(),
        cash: 5000,
    };
    let tags = [
        ("04A1B2C3D4E5F6", "Milk", 350),
        ("04A1B2C3D4E5F7", "Bread", 120),
        ("04A1B2C3D4E5F8", "Apples", 480),
    ]
    .map(|(uid, name, cost)| TagSeed {
        uid: uid.into(),
        name: name.into(),
        cost,
    });
    store.seed(&[user], &tags, false).expect("seed");

    let mut cart = DirectCart::new(CartConfig::default(), Arc::clone(&store));
    let mut now = 0;
    cart.deliver(now, CartEvent::PowerOn);
    now += 1000;
    cart.advance(now);
    show(&cart, "powered on");

    cart.deliver(now, CartEvent::CardSwiped("6C92D391".into()));
    show(&cart, "card swiped");
    now += SHOW_USER_MS;
    cart.advance(now);

    for tag in &tags {
        now += 1000;
        cart.deliver(now, CartEvent::TagSwiped(tag.uid.clone()));
    }
    show(&cart, "three tags");
    for _ in 0..2 {
        cart.deliver(now, CartEvent::Button(Button::Down));
    }
    show(&cart, "scrolled down");

    cart.deliver(now, CartEvent::Button(Button::Pay));
    now += 5000;
    cart.advance(now);
    show(&cart, "paid");

    let (user, rev) = store.get_doc(Db::Users, "6C92D391").expect("user exists");
    println!("user now {} at rev {rev}", user.to_canonical_string());
    println!("live tags left: {}", store.live_docs(Db::Tags).len());
}
