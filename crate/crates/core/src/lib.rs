// Copyright 2026 The permafrost-trust Authors.
// SPDX-License-Identifier: Apache-2.0

//! Discrete-event simulator for the trustworthiness of a redundant
//! permafrost telemetry network.
//!
//! Measuring spots are instrumented by redundant sensors that report over a
//! shared LoRa channel to one of five concentrators, which forward over an
//! intermittent NVIS backhaul to a control center. Nine operating modes
//! combine an optional reputation layer and an optional agreement layer,
//! each in a classical or quantum-assisted variant. The figure of merit is
//! the Successful Transaction Rate (STR): the share of (spot, round)
//! transactions whose correct value reaches the control center in time.

pub mod consensus;
pub mod engine;
pub mod harness;
pub mod metrics;
pub mod netmodel;
pub mod quantum;
pub mod social;
pub mod telemetry;
