//! Game model: state/action/signal/type spaces, payoffs, transitions, and
//! the strategy objects (signaling rules, selection rules, policies, beliefs).

mod enumerate;
mod format;
mod spec;
mod strategy;

pub use enumerate::{enumerate_deviations, Deviation, DEVIATION_CAP};
pub use format::{load_game, load_goal, load_profile, load_rule, save_game, save_goal, save_profile, save_rule};
pub use spec::GameSpec;
pub use strategy::{BeliefSystem, Goal, Policy, Profile, SelectionRule, SignalingRule};
