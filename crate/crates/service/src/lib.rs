//! Human labeling service: serves batches of chart comparisons, checks each
//! batch with a swapped duplicate task, and keeps pairs that three distinct
//! sessions judged the same way.
//!
//! | route | |
//! |---|---|
//! | `GET /api/batch?session=ID` | lease and return 11 tasks |
//! | `POST /api/batch` | submit one choice per task |
//! | `GET /api/progress` | pair and batch counters |
//! | `GET /api/health` | liveness |
//! | `GET /api/dataset` | unanimously labeled pairs as JSONL |

pub mod error;
pub mod http;
pub mod store;

pub use error::ServiceError;
pub use http::{router, serve, system_clock, AppState, Clock};
pub use store::{
    read_log, replay, BatchView, ChoiceRecord, Position, Progress, Store, StoreConfig, SubmitOutcome,
    Submission, TaskChoice, Verdict,
};
