//! Fair bilateral negotiation support: utility spaces and fairness analytics,
//! an alternating-offers engine with opponent modelling, and a reflective loop
//! that keeps a human in charge of every change to the session.

pub mod analytics;
pub mod domain;
pub mod opponent;
pub mod protocol;
pub mod reflection;
pub mod session;
