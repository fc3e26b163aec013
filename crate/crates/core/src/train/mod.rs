//! Training: GAE, rollout buffers, Adam, PPO, evaluation, and the two-stage
//! pipeline (weight search, curriculum).

pub mod adam;
pub mod buffer;
pub mod eval;
pub mod gae;
pub mod ppo;
pub mod stage1;
pub mod stage2;

pub use adam::{Adam, AdamConfig};
pub use eval::{evaluate, SatisfactionRates, SatisfactionThresholds};
pub use ppo::{PpoConfig, PpoTrainer, UpdateStats};
pub use stage1::{run_stage1, Stage1Config, Stage1Report};
pub use stage2::{
    default_periods, make_checkpoint, restore_checkpoint, run_stage2, NullSink, PeriodSpec,
    Stage2Outcome, Stage2State, TrainSink,
};
