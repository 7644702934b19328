//! The reinitialization regimes and their round schedules.

pub mod layerwise;
pub mod mask;
pub mod run;
pub mod schedule;

pub use layerwise::{
    compute_block_stats, insert_or_update_lambda, lw_prepare, lw_round, record_init_scales, rescale_all, rescale_blocks, scalar_stats,
    LambdaAction, ReinitStep, SIGMA_FLOOR,
};
pub use mask::{apply_reinit, mask_blocks_from, mask_cardinality, mask_fc, mask_fixed, mask_random, mask_smallest, Mask};
pub use run::{run_method, Evaluator, ReinitEvent, RoundMetrics, RunOutcome, SPEED_THRESHOLDS, STATS_SAMPLE};
pub use schedule::{make_schedule, LwFlags, Method, ReinitPlan, RoundSpec, ScheduleVariant, APPENDIX_A_KEPT};
