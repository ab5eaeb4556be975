//! Collision detection: is there no sender, one sender, or several?

use std::fmt;

use super::{EngineError, Session};
use crate::transport::Transport;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CollisionVerdict {
    NoSender,
    SingleSender,
    MultipleSenders,
}

impl CollisionVerdict {
    /// Combines the two stage outputs.
    pub fn from_stages(a: bool, b: bool) -> Self {
        match (a, b) {
            (false, _) => CollisionVerdict::NoSender,
            (true, false) => CollisionVerdict::SingleSender,
            (true, true) => CollisionVerdict::MultipleSenders,
        }
    }

    pub fn value(self) -> u8 {
        match self {
            CollisionVerdict::NoSender => 0,
            CollisionVerdict::SingleSender => 1,
            CollisionVerdict::MultipleSenders => 2,
        }
    }
}

impl fmt::Display for CollisionVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

impl<T: Transport> Session<T> {
    /// Stage A is a full-length veto on `want_to_send` (no early stop, so a
    /// sender sees every round). A sender that observed a round where the
    /// others' contribution was 1 inputs 1 to the stage B veto; everyone
    /// else inputs 0. Stage B always runs, so the key cost does not depend
    /// on the outcome of stage A.
    pub async fn run_collision_detection(&mut self, want_to_send: bool) -> Result<CollisionVerdict, EngineError> {
        let stage_a = self.veto_rounds(want_to_send, false).await?;
        let b = want_to_send && stage_a.saw_other_input();
        let stage_b = self.veto_rounds(b, true).await?;
        Ok(CollisionVerdict::from_stages(stage_a.output, stage_b.output))
    }
}
