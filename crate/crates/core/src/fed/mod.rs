//! Federated training with centralized and distributed backdoor attacks.

mod client;
mod config;
mod log;
mod run;

pub use client::{client_update, train_local, ClientState, ClientUpdate, LocalTraining, Role};
pub use config::{AttackMode, PoisonFailure, ScenarioConfig};
pub use log::{csv_header, csv_row, fmt_sig6, to_csv, to_jsonl, RoundLog};
pub use run::{fedavg, run_federation, Federation, RunOutput};
