//! RFID smart-cart checkout system.

pub mod atlink;
pub mod cart;
pub mod cli;
pub mod client;
pub mod display;
pub mod gate;
pub mod server;
pub mod sim;
pub mod store;
pub mod wire;
