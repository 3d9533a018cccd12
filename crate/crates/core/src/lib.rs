//! Multi-agent traffic signal control lab.
//!
//! A queue-based mesoscopic simulator ([`mesosim`]) is wrapped as a
//! decentralized partially observable multi-agent environment ([`env`]).
//! Rule-based controllers live in [`baselines`], the learning agents in
//! [`marl`] on top of the small dense network engine in [`nn`]. The
//! [`harness`] runs training and evaluation and [`envserver`] exposes
//! environments to external processes over TCP.

pub mod netgraph;
pub mod mesosim;
pub mod env;
pub mod baselines;
pub mod nn;
pub mod marl;
pub mod harness;
pub mod envserver;
pub mod cli;
