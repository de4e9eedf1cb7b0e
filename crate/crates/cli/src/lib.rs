// SPDX-License-Identifier: Apache-2.0

//! Operator front end for the inspection backend: dataset catalog, demo
//! generator, streaming HTTP API, session transport and the `amdt` command.

pub mod catalog;
pub mod commands;
pub mod demo;
pub mod error;
pub mod http;
pub mod server;
pub mod session;

pub use error::{CliError, ExitClass};
