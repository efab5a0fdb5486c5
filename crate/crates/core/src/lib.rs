//! Seminar theme management: moderated theme proposals, capacity- and
//! quota-checked selection, moderated uploads and a presentation-week
//! planner that keeps weekly load as even as the deadlines allow.

pub mod error;
pub mod fixture;
pub mod model;
pub mod ops;
pub mod password;
pub mod persistence;
pub mod rules;
pub mod scheduler;
pub mod sim;
pub mod state;

pub use error::{Error, Result};
pub use model::*;
pub use password::PasswordHasher;
pub use persistence::{Store, StoreConfig};
pub use scheduler::{plan_schedule, ScheduleInstance, ScheduleItem, ScheduleResult};
pub use state::{MemoryState, SeminarState};
