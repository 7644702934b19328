use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "BL")]
    Baseline,
    #[serde(rename = "WELSR")]
    Welsr,
    #[serde(rename = "WELS")]
    Wels,
    #[serde(rename = "DSD")]
    Dsd,
    #[serde(rename = "FC")]
    Fc,
    #[serde(rename = "LW")]
    Lw,
    #[serde(rename = "RESCALE_ONLY")]
    RescaleOnly,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Baseline,
        Method::Welsr,
        Method::Wels,
        Method::Dsd,
        Method::Fc,
        Method::Lw,
        Method::RescaleOnly,
    ];

    /// The six regimes compared head to head.
    pub const COMPARED: [Method; 6] = [
        Method::Baseline,
        Method::Welsr,
        Method::Dsd,
        Method::Wels,
        Method::Fc,
        Method::Lw,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Baseline => "BL",
            Method::Welsr => "WELSR",
            Method::Wels => "WELS",
            Method::Dsd => "DSD",
            Method::Fc => "FC",
            Method::Lw => "LW",
            Method::RescaleOnly => "RESCALE_ONLY",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.as_str().eq_ignore_ascii_case(s))
    }

    pub fn uses_mask(self) -> bool {
        matches!(self, Method::Welsr | Method::Wels | Method::Dsd | Method::Fc)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScheduleVariant {
    /// `K * N` rounds, kept block `k = 1..=K`, each repeated `N` times.
    #[default]
    Main,
    /// Five rounds with kept blocks `[1, 1, 2, 2, 3]`.
    AppendixA,
}

pub const APPENDIX_A_KEPT: [usize; 5] = [1, 1, 2, 2, 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LwFlags {
    pub do_rescale: bool,
    pub do_normalize: bool,
    pub freeze_kept: bool,
}

impl Default for LwFlags {
    fn default() -> Self {
        LwFlags {
            do_rescale: true,
            do_normalize: true,
            freeze_kept: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReinitPlan {
    pub method: Method,
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    pub k_blocks: usize,
    pub n_repeats: usize,
    pub steps_per_round: usize,
    #[serde(default)]
    pub schedule: ScheduleVariant,
    #[serde(default)]
    pub lw_flags: LwFlags,
}

fn default_fraction() -> f64 {
    0.2
}

impl ReinitPlan {
    pub fn new(method: Method, k_blocks: usize, n_repeats: usize, steps_per_round: usize) -> Self {
        ReinitPlan {
            method,
            fraction: default_fraction(),
            k_blocks,
            n_repeats,
            steps_per_round,
            schedule: ScheduleVariant::Main,
            lw_flags: LwFlags::default(),
        }
    }

    pub fn with_method(&self, method: Method) -> Self {
        ReinitPlan { method, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_blocks == 0 || self.n_repeats == 0 {
            return Err(LabError::Config("K and N must be >= 1".into()));
        }
        if self.steps_per_round == 0 {
            return Err(LabError::Config("steps_per_round must be positive".into()));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(LabError::Config(format!("fraction {} outside (0, 1]", self.fraction)));
        }
        if self.schedule == ScheduleVariant::AppendixA && self.method == Method::Lw && self.k_blocks < 3 {
            return Err(LabError::Config("the five-round schedule needs K >= 3".into()));
        }
        Ok(())
    }

    /// Number of training rounds of a multi-round method under this plan.
    pub fn rounds(&self) -> usize {
        match self.schedule {
            ScheduleVariant::Main => self.k_blocks * self.n_repeats,
            ScheduleVariant::AppendixA => APPENDIX_A_KEPT.len(),
        }
    }

    /// Total training steps; identical for every method sharing the plan.
    pub fn total_steps(&self) -> usize {
        self.rounds() * self.steps_per_round
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundSpec {
    pub index: usize,
    /// Kept block `k` (1-based) under the layerwise schedule.
    pub kept_block: usize,
    /// Repetition within the current kept block (1-based).
    pub repeat: usize,
    pub steps: usize,
}

impl RoundSpec {
    /// The first visit of a kept block inserts its normalization layer; later
    /// visits update it.
    pub fn first_visit(&self) -> bool {
        self.repeat == 1
    }
}

pub fn make_schedule(plan: &ReinitPlan) -> Result<Vec<RoundSpec>> {
    plan.validate()?;
    if plan.method == Method::Baseline {
        return Ok(vec![RoundSpec {
            index: 0,
            kept_block: plan.k_blocks,
            repeat: 1,
            steps: plan.total_steps(),
        }]);
    }
    let kept: Vec<usize> = match plan.schedule {
        ScheduleVariant::Main => (1..=plan.k_blocks)
            .flat_map(|k| std::iter::repeat_n(k, plan.n_repeats))
            .collect(),
        ScheduleVariant::AppendixA => APPENDIX_A_KEPT.to_vec(),
    };
    let mut rounds = Vec::with_capacity(kept.len());
    for (index, &k) in kept.iter().enumerate() {
        let repeat = kept[..index].iter().filter(|&&p| p == k).count() + 1;
        rounds.push(RoundSpec {
            index,
            kept_block: k,
            repeat,
            steps: plan.steps_per_round,
        });
    }
    Ok(rounds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn main_schedule_nine_rounds() {
        let plan = ReinitPlan::new(Method::Lw, 3, 3, 200);
        let s = make_schedule(&plan).unwrap();
        assert_eq!(s.len(), 9);
        assert_eq!(s.iter().map(|r| r.steps).sum::<usize>(), 1800);
        let kept: Vec<usize> = s.iter().map(|r| r.kept_block).collect();
        assert_eq!(kept, vec![1, 1, 1, 2, 2, 2, 3, 3, 3]);
        let firsts: Vec<bool> = s.iter().map(|r| r.first_visit()).collect();
        assert_eq!(firsts, vec![true, false, false, true, false, false, true, false, false]);
    }

    #[test]
    fn baseline_gets_whole_budget() {
        let plan = ReinitPlan::new(Method::Baseline, 3, 3, 200);
        let s = make_schedule(&plan).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].steps, 1800);
    }

    #[test]
    fn appendix_schedule() {
        let plan = ReinitPlan {
            schedule: ScheduleVariant::AppendixA,
            ..ReinitPlan::new(Method::Lw, 3, 3, 360)
        };
        let s = make_schedule(&plan).unwrap();
        assert_eq!(s.iter().map(|r| r.kept_block).collect::<Vec<_>>(), vec![1, 1, 2, 2, 3]);
        assert_eq!(s.iter().map(|r| r.first_visit()).collect::<Vec<_>>(), vec![true, false, true, false, true]);
        let bl = make_schedule(&plan.with_method(Method::Baseline)).unwrap();
        assert_eq!(bl[0].steps, 1800);
    }

    #[test]
    fn compute_matched_across_methods() {
        let plan = ReinitPlan::new(Method::Lw, 3, 3, 50);
        for m in Method::ALL {
            let s = make_schedule(&plan.with_method(m)).unwrap();
            assert_eq!(s.iter().map(|r| r.steps).sum::<usize>(), 450, "{m}");
        }
    }

    #[test]
    fn zero_budget_rejected() {
        assert!(make_schedule(&ReinitPlan::new(Method::Lw, 3, 3, 0)).is_err());
    }

    #[test]
    fn method_names() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.as_str()), Some(m));
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.as_str()));
        }
    }
}
