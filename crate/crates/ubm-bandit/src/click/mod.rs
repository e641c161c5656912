//! Click-model simulators, session logs, and EM weight fitting.
//!
//! A session shows a user an ordered list of items and records which were
//! clicked. The browsing model behind this crate says position `k` is
//! examined with probability `w[k][k']` (where `k'` is the last click so
//! far) and an examined item is clicked with its attractiveness `γ`. This
//! module provides that generative law and three alternatives for baseline
//! comparisons, plus the EM procedure that recovers `w` and `γ` from logs.

mod em;
mod session;
mod simulate;

pub use em::{em_fit_ubm, fit_dcm_satisfaction, UbmFit};
pub use session::{
    read_sessions_tsv, write_sessions_tsv, yandex_to_sessions, AttractivenessTable,
    SessionRecord, YandexImport,
};
pub use simulate::{
    exact_click_marginals, simulate_session, simulate_session_seeded, ubm_click_prob, ClickModel,
};
