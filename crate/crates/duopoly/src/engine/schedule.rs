//! Round-range schedules for switching phases on and off mid-run.

use serde::{Deserialize, Serialize};

use super::EngineError;

/// One contiguous range of rounds with a phase enabled or disabled.
/// `to = None` leaves the segment open-ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub from: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<u32>,
    pub enabled: bool,
}

/// Ordered, contiguous, non-overlapping segments starting at round 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Segment>", into = "Vec<Segment>")]
pub struct PhaseSchedule {
    segments: Vec<Segment>,
}

impl PhaseSchedule {
    /// A schedule with one open-ended segment.
    pub fn always(enabled: bool) -> Self {
        PhaseSchedule {
            segments: vec![Segment {
                from: 1,
                to: None,
                enabled,
            }],
        }
    }

    /// Enabled for rounds `1..=switch`, flipped afterwards.
    pub fn switch_after(switch: u32, first: bool) -> Self {
        PhaseSchedule {
            segments: vec![
                Segment {
                    from: 1,
                    to: Some(switch),
                    enabled: first,
                },
                Segment {
                    from: switch + 1,
                    to: None,
                    enabled: !first,
                },
            ],
        }
    }

    pub fn from_segments(segments: Vec<Segment>) -> Result<Self, EngineError> {
        if segments.is_empty() {
            return Err(EngineError::Config(
                "schedule must have at least one segment".to_string(),
            ));
        }
        if segments[0].from != 1 {
            return Err(EngineError::Config(
                "schedule must start at round 1".to_string(),
            ));
        }
        for pair in segments.windows(2) {
            match pair[0].to {
                None => {
                    return Err(EngineError::Config(
                        "only the final schedule segment may be open-ended".to_string(),
                    ))
                }
                Some(to) => {
                    if to < pair[0].from {
                        return Err(EngineError::Config(format!(
                            "schedule segment ends before it starts: {}..{}",
                            pair[0].from, to
                        )));
                    }
                    if pair[1].from != to + 1 {
                        return Err(EngineError::Config(format!(
                            "schedule segments must be contiguous: {} follows {}",
                            pair[1].from, to
                        )));
                    }
                }
            }
        }
        if let Some(last) = segments.last() {
            if let Some(to) = last.to {
                if to < last.from {
                    return Err(EngineError::Config(format!(
                        "schedule segment ends before it starts: {}..{}",
                        last.from, to
                    )));
                }
            }
        }
        Ok(PhaseSchedule { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn enabled_at(&self, round: u32) -> bool {
        self.segments
            .iter()
            .find(|s| round >= s.from && s.to.map_or(true, |to| round <= to))
            .map_or(false, |s| s.enabled)
    }

    /// Whether the schedule assigns a value to every round in
    /// `1..=max_rounds`.
    pub fn covers(&self, max_rounds: u32) -> bool {
        match self.segments.last() {
            Some(last) => last.to.map_or(true, |to| to >= max_rounds),
            None => false,
        }
    }
}

impl TryFrom<Vec<Segment>> for PhaseSchedule {
    type Error = String;

    fn try_from(segments: Vec<Segment>) -> Result<Self, String> {
        PhaseSchedule::from_segments(segments).map_err(|e| e.to_string())
    }
}

impl From<PhaseSchedule> for Vec<Segment> {
    fn from(schedule: PhaseSchedule) -> Vec<Segment> {
        schedule.segments
    }
}
