use std::fmt;

use crate::simulator::SimError;

/// Steps after which all nodes are replaced by their average.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyncSchedule {
    sync_steps: Vec<usize>,
    h: usize,
    kind: ScheduleKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ScheduleKind {
    Uniform,
    OneShot,
    Explicit,
}

impl SyncSchedule {
    /// `{H, 2H, …}` followed by `T` when `H` does not divide `T`.
    pub fn uniform(h: usize, t: usize) -> Result<Self, SimError> {
        if h == 0 || t == 0 {
            return Err(SimError::Config("H and T must be positive".into()));
        }
        let mut steps: Vec<usize> = (1..=t / h).map(|p| p * h).collect();
        if t % h != 0 {
            steps.push(t);
        }
        Ok(Self { sync_steps: steps, h, kind: ScheduleKind::Uniform })
    }

    /// A single average at the end of training.
    pub fn one_shot(t: usize) -> Result<Self, SimError> {
        if t == 0 {
            return Err(SimError::Config("T must be positive".into()));
        }
        Ok(Self { sync_steps: vec![t], h: t, kind: ScheduleKind::OneShot })
    }

    /// Arbitrary strictly increasing steps ending at `t`, with declared gap
    /// bound `h`.
    pub fn explicit(sync_steps: Vec<usize>, t: usize, h: usize) -> Result<Self, SimError> {
        let s = Self { sync_steps, h, kind: ScheduleKind::Explicit };
        s.validate(t)?;
        Ok(s)
    }

    /// Explicit steps with `H` set to their largest gap.
    pub fn from_steps(sync_steps: Vec<usize>, t: usize) -> Result<Self, SimError> {
        let mut s = Self { sync_steps, h: 1, kind: ScheduleKind::Explicit };
        s.h = s.max_gap().max(1);
        s.validate(t)?;
        Ok(s)
    }

    pub fn validate(&self, t: usize) -> Result<(), SimError> {
        if self.h == 0 {
            return Err(SimError::Config("H must be positive".into()));
        }
        let Some(&last) = self.sync_steps.last() else {
            return Err(SimError::Config("schedule has no synchronization steps".into()));
        };
        if self.sync_steps[0] == 0 {
            return Err(SimError::Config("synchronization steps start at 1".into()));
        }
        if let Some(w) = self.sync_steps.windows(2).find(|w| w[0] >= w[1]) {
            return Err(SimError::Config(format!("synchronization steps not increasing at {} -> {}", w[0], w[1])));
        }
        if last != t {
            return Err(SimError::Config(format!("last synchronization step {last} differs from T = {t}")));
        }
        let gap = self.max_gap();
        if gap > self.h {
            return Err(SimError::Config(format!("gap {gap} between synchronizations exceeds H = {}", self.h)));
        }
        Ok(())
    }

    /// Largest distance between consecutive steps, counting from 0.
    pub fn max_gap(&self) -> usize {
        let mut prev = 0;
        let mut gap = 0;
        for &s in &self.sync_steps {
            gap = gap.max(s.saturating_sub(prev));
            prev = s;
        }
        gap
    }

    pub fn sync_steps(&self) -> &[usize] {
        &self.sync_steps
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn final_step(&self) -> usize {
        *self.sync_steps.last().expect("validated schedules are nonempty")
    }

    pub fn comm_rounds(&self) -> usize {
        self.sync_steps.len()
    }

    pub fn is_sync(&self, t: usize) -> bool {
        self.sync_steps.binary_search(&t).is_ok()
    }

    /// Completed communication rounds after step `t`.
    pub fn rounds_by(&self, t: usize) -> usize {
        self.sync_steps.partition_point(|&s| s <= t)
    }
}

impl fmt::Display for SyncSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ScheduleKind::Uniform => write!(f, "uniform:{}", self.h),
            ScheduleKind::OneShot => f.write_str("one-shot"),
            ScheduleKind::Explicit => {
                let s: Vec<String> = self.sync_steps.iter().map(|v| v.to_string()).collect();
                write!(f, "explicit:{}", s.join(","))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_divisible_and_not() {
        let s = SyncSchedule::uniform(4, 12).unwrap();
        assert_eq!(s.sync_steps(), &[4, 8, 12]);
        let s = SyncSchedule::uniform(5, 12).unwrap();
        assert_eq!(s.sync_steps(), &[5, 10, 12]);
        assert_eq!(s.comm_rounds(), 3);
        assert_eq!(s.rounds_by(9), 1);
        assert_eq!(s.rounds_by(10), 2);
    }

    #[test]
    fn explicit_validation() {
        assert!(SyncSchedule::explicit(vec![2, 5, 9], 9, 4).is_ok());
        assert!(SyncSchedule::explicit(vec![2, 5, 9], 9, 3).is_err());
        assert!(SyncSchedule::explicit(vec![5, 2, 9], 9, 9).is_err());
        assert!(SyncSchedule::explicit(vec![0, 9], 9, 9).is_err());
        assert!(SyncSchedule::explicit(vec![2, 5], 9, 9).is_err());
        assert!(SyncSchedule::explicit(vec![], 9, 9).is_err());
        assert_eq!(SyncSchedule::from_steps(vec![3, 10], 10).unwrap().h(), 7);
    }

    #[test]
    fn one_shot() {
        let s = SyncSchedule::one_shot(7).unwrap();
        assert_eq!((s.sync_steps(), s.h(), s.to_string().as_str()), (&[7][..], 7, "one-shot"));
    }

    proptest! {
        #[test]
        fn uniform_round_count(h in 1usize..50, t in 1usize..2000) {
            let s = SyncSchedule::uniform(h, t).unwrap();
            prop_assert_eq!(s.comm_rounds(), t.div_ceil(h));
            prop_assert!(s.validate(t).is_ok());
            prop_assert!(s.max_gap() <= h);
        }
    }
}
