//! Analysis toolkit for WoW-like MMORPG traffic in packet traces.
//!
//! The pipeline reads libpcap captures, reassembles TCP flows, detects the
//! game protocol with a two-step signature check, dissects logon / auth /
//! movement / object-update messages, attributes connections to users,
//! classifies users as solitary (Tigers) or locally grouped (Lions), and
//! computes the traffic and behavior statistics the reports are built from.

pub mod analytics;
pub mod capture;
pub mod dissect;
pub mod dpd;
pub mod fmt;
pub mod pipeline;
pub mod protocol;
pub mod report;
pub mod session;
pub mod time;
