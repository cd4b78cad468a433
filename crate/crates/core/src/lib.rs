//! Multi-platform ride-sharing market simulator.
//!
//! Requests, trips and vehicles form a request-trip-vehicle graph; a market
//! structure restricts that graph, an exact assignment solver matches
//! vehicles to trips, and market mechanisms (trading, auctions, cooperative
//! profit allocation) move requests and money between platforms.

pub mod network;
pub mod model;
pub mod rtv;
pub mod solve;
pub mod mechanisms;
pub mod engine;
pub mod io;

#[cfg(test)]
mod testkit;
