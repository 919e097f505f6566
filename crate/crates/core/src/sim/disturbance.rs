use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisturbanceKind {
    LiftSlow,
    LiftFast,
    SineLow,
    SineHigh,
    CollideContact,
    CollideFree,
}

impl DisturbanceKind {
    pub const ALL: [DisturbanceKind; 6] = [
        DisturbanceKind::LiftSlow,
        DisturbanceKind::LiftFast,
        DisturbanceKind::SineLow,
        DisturbanceKind::SineHigh,
        DisturbanceKind::CollideContact,
        DisturbanceKind::CollideFree,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DisturbanceKind::LiftSlow => "lift-slow",
            DisturbanceKind::LiftFast => "lift-fast",
            DisturbanceKind::SineLow => "sine-low",
            DisturbanceKind::SineHigh => "sine-high",
            DisturbanceKind::CollideContact => "collide-contact",
            DisturbanceKind::CollideFree => "collide-free",
        }
    }

    pub fn default_profile(self) -> Profile {
        match self {
            DisturbanceKind::LiftSlow => Profile::Lift {
                amplitude: 0.1246,
                velocity: 0.0417,
            },
            DisturbanceKind::LiftFast => Profile::Lift {
                amplitude: 0.1163,
                velocity: 0.1256,
            },
            DisturbanceKind::SineLow => Profile::Sine {
                amplitude: 0.0758,
                frequency: 0.8645,
                cycles: 3.0,
            },
            DisturbanceKind::SineHigh => Profile::Sine {
                amplitude: 0.0435,
                frequency: 2.0024,
                cycles: 6.0,
            },
            DisturbanceKind::CollideContact | DisturbanceKind::CollideFree => Profile::Pulse {
                peak: 40.0,
                duration: 0.3,
                direction: vec![-1.0],
            },
        }
    }

    /// Table-height disturbances act on the surface, collisions on the end effector.
    pub fn moves_table(self) -> bool {
        !matches!(
            self,
            DisturbanceKind::CollideContact | DisturbanceKind::CollideFree
        )
    }
}

impl fmt::Display for DisturbanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DisturbanceKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|k| k.as_str()).collect();
                format!(
                    "unknown disturbance `{s}` (expected one of {}, none)",
                    names.join(", ")
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "kebab-case")]
pub enum Profile {
    /// Surface rises at `velocity` up to `amplitude`, then returns at the same speed.
    Lift { amplitude: f64, velocity: f64 },
    /// `amplitude · sin(2π f τ)` for a whole number of cycles.
    Sine {
        amplitude: f64,
        frequency: f64,
        cycles: f64,
    },
    /// Half-sine force pulse on the end effector. `direction` is padded with
    /// zeros to the task dimension.
    Pulse {
        peak: f64,
        duration: f64,
        direction: Vec<f64>,
    },
}

impl Profile {
    pub fn duration(&self) -> f64 {
        match self {
            Profile::Lift {
                amplitude,
                velocity,
            } => 2.0 * amplitude / velocity,
            Profile::Sine {
                frequency, cycles, ..
            } => cycles / frequency,
            Profile::Pulse { duration, .. } => *duration,
        }
    }

    fn validate(&self) -> Result<(), String> {
        let ok = match self {
            Profile::Lift {
                amplitude,
                velocity,
            } => *amplitude > 0.0 && *velocity > 0.0,
            Profile::Sine {
                amplitude,
                frequency,
                cycles,
            } => *amplitude > 0.0 && *frequency > 0.0 && *cycles > 0.0,
            Profile::Pulse {
                peak,
                duration,
                direction,
            } => peak.is_finite() && *duration > 0.0 && !direction.is_empty(),
        };
        if ok {
            Ok(())
        } else {
            Err(format!("invalid disturbance profile {self:?}"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceEvent {
    pub kind: DisturbanceKind,
    /// s
    pub start: f64,
    #[serde(flatten)]
    pub profile: Profile,
}

impl DisturbanceEvent {
    pub fn new(kind: DisturbanceKind, start: f64) -> Self {
        Self {
            kind,
            start,
            profile: kind.default_profile(),
        }
    }

    pub fn end(&self) -> f64 {
        self.start + self.profile.duration()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceScript {
    #[serde(default)]
    pub events: Vec<DisturbanceEvent>,
}

/// What the environment does to the robot at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentInput {
    /// Surface height offset, m.
    pub height_offset: f64,
    /// m/s
    pub height_rate: f64,
    /// External force applied directly on the end effector, N.
    pub ee_force: DVector<f64>,
}

impl DisturbanceScript {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn validate(&self) -> Result<(), String> {
        for e in &self.events {
            if !(e.start >= 0.0) {
                return Err(format!("{} starts at negative time", e.kind));
            }
            e.profile.validate()?;
        }
        for (i, a) in self.events.iter().enumerate() {
            for b in &self.events[i + 1..] {
                let same_channel = a.kind.moves_table() == b.kind.moves_table();
                if same_channel && a.start < b.end() && b.start < a.end() {
                    return Err(format!(
                        "{} and {} overlap on the same channel",
                        a.kind, b.kind
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Environment input at time `t` for a task space of dimension `dim`.
pub fn apply_disturbance(script: &DisturbanceScript, t: f64, dim: usize) -> EnvironmentInput {
    let mut out = EnvironmentInput {
        height_offset: 0.0,
        height_rate: 0.0,
        ee_force: DVector::zeros(dim),
    };
    for e in &script.events {
        let tau = t - e.start;
        if tau < 0.0 || tau > e.profile.duration() {
            continue;
        }
        match &e.profile {
            Profile::Lift {
                amplitude,
                velocity,
            } => {
                let rise = amplitude / velocity;
                if tau <= rise {
                    out.height_offset += velocity * tau;
                    out.height_rate += velocity;
                } else {
                    out.height_offset += amplitude - velocity * (tau - rise);
                    out.height_rate -= velocity;
                }
            }
            Profile::Sine {
                amplitude,
                frequency,
                ..
            } => {
                let w = 2.0 * std::f64::consts::PI * frequency;
                out.height_offset += amplitude * (w * tau).sin();
                out.height_rate += amplitude * w * (w * tau).cos();
            }
            Profile::Pulse {
                peak,
                duration,
                direction,
            } => {
                let s = peak * (std::f64::consts::PI * tau / duration).sin();
                for (j, d) in direction.iter().enumerate().take(dim) {
                    out.ee_force[j] += s * d;
                }
            }
        }
    }
    out
}

/// Spans `[start, end)` where the desired normal force magnitude stays at or
/// above `threshold` for at least `min_duration` seconds.
pub fn detect_strokes(
    times: &[f64],
    desired_normal: &[f64],
    threshold: f64,
    min_duration: f64,
) -> Vec<(f64, f64)> {
    let mut spans = Vec::new();
    let mut open: Option<f64> = None;
    for (i, (&t, &f)) in times.iter().zip(desired_normal).enumerate() {
        let on = f.abs() >= threshold;
        match (on, open) {
            (true, None) => open = Some(t),
            (false, Some(s)) => {
                if t - s >= min_duration {
                    spans.push((s, t));
                }
                open = None;
            }
            _ => {}
        }
        if i + 1 == times.len() {
            if let Some(s) = open {
                if t - s >= min_duration {
                    spans.push((s, t));
                }
            }
        }
    }
    spans
}

/// Places one event of each requested kind relative to the cleaning strokes:
/// the table disturbances and the in-contact collision go into strokes 1–5
/// (in the order of [`DisturbanceKind::ALL`]), the free-motion collision into
/// the gap after the fifth stroke. `lead` is the delay after stroke onset.
pub fn place_protocol(
    strokes: &[(f64, f64)],
    kinds: &[DisturbanceKind],
    lead: f64,
) -> Result<DisturbanceScript, String> {
    let mut events = Vec::new();
    for &kind in kinds {
        let slot = DisturbanceKind::ALL
            .iter()
            .position(|k| *k == kind)
            .unwrap_or(0);
        let event = if kind == DisturbanceKind::CollideFree {
            let (a, b) = match (strokes.get(4), strokes.get(5)) {
                (Some(a), Some(b)) => (a.1, b.0),
                _ => return Err("free-motion collision needs six strokes in the reference".into()),
            };
            let mut e = DisturbanceEvent::new(kind, 0.0);
            e.start = 0.5 * (a + b) - 0.5 * e.profile.duration();
            e
        } else {
            let s = strokes.get(slot).ok_or_else(|| {
                format!(
                    "{kind} needs at least {} strokes in the reference",
                    slot + 1
                )
            })?;
            let e = DisturbanceEvent::new(kind, s.0 + lead);
            if e.end() > s.1 {
                log::warn!(
                    "{kind} outlasts its stroke ({:.2} s > {:.2} s)",
                    e.end(),
                    s.1
                );
            }
            e
        };
        events.push(event);
    }
    events.sort_by(|a, b| a.start.total_cmp(&b.start));
    let script = DisturbanceScript { events };
    script.validate()?;
    Ok(script)
}
