//! Command-line front end: training and evaluation entry points,
//! labelled-fraction sweeps with report files, corpus generation and an
//! interactive chat REPL.

pub mod chat;
pub mod commands;
pub mod config;
pub mod sweep;

use dialog_core::Error;

/// Process exit code for an error, per the documented contract:
/// 1 usage/config error, 2 run failure, 3 data error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 1,
        Error::Io(_)
        | Error::Json(_)
        | Error::Schema { .. }
        | Error::UnknownLabel { .. }
        | Error::Query(_) => 3,
        _ => 2,
    }
}
