//! Causal non-coherent accumulation: per-frame body-frame clouds are moved
//! into the global frame and stacked over a trailing time window.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::cloud::{FeaturedCloud, Provenance};
use crate::error::{Error, Result};
use crate::pose::{transform_cloud, Pose};

/// One frame's detections with the pose they were observed from.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameCloud {
    pub cloud: FeaturedCloud,
    pub pose: Pose,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccumulationWindow {
    #[default]
    All,
    /// Keep frames with `t >= t_newest - seconds`.
    Duration(f64),
}

impl AccumulationWindow {
    fn contains(self, t: f64, newest: f64) -> bool {
        match self {
            AccumulationWindow::All => true,
            AccumulationWindow::Duration(d) => t >= newest - d,
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            AccumulationWindow::Duration(d) if !(d >= 0.0) => {
                Err(Error::InvalidParameter(format!("window duration {d} must be >= 0")))
            }
            _ => Ok(()),
        }
    }
}

fn global_cloud(frame: &FrameCloud, index: usize) -> Result<FeaturedCloud> {
    if !frame.t.is_finite() {
        return Err(Error::InvalidInput("non-finite frame timestamp".into()));
    }
    let mut g = transform_cloud(&frame.pose, &frame.cloud)?;
    g.set_source_frames(vec![index; g.len()])?;
    Ok(g)
}

fn union<'a>(provenance: Provenance, clouds: impl Iterator<Item = &'a FeaturedCloud>) -> Result<FeaturedCloud> {
    let mut out = FeaturedCloud::new(provenance);
    out.set_source_frames(Vec::new())?;
    for c in clouds {
        out.extend_from(c)?;
    }
    Ok(out)
}

/// Union of all in-window frames, transformed to the global frame. Each
/// output point records the index of its frame in `frames`.
pub fn accumulate(frames: &[FrameCloud], window: AccumulationWindow) -> Result<FeaturedCloud> {
    window.validate()?;
    if frames.windows(2).any(|w| !(w[1].t >= w[0].t)) {
        return Err(Error::InvalidInput("frame timestamps must be non-decreasing".into()));
    }
    let Some(newest) = frames.last().map(|f| f.t) else {
        return union(Provenance::Nca, std::iter::empty());
    };
    let globals = frames
        .iter()
        .enumerate()
        .filter(|(_, f)| window.contains(f.t, newest))
        .map(|(i, f)| global_cloud(f, i))
        .collect::<Result<Vec<_>>>()?;
    union(frames[0].cloud.provenance(), globals.iter())
}

/// Explicit state of a streaming accumulation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NcaState {
    window: AccumulationWindow,
    held: VecDeque<(f64, FeaturedCloud)>,
    provenance: Option<Provenance>,
    frames_seen: usize,
    last_t: Option<f64>,
}

impl NcaState {
    pub fn new(window: AccumulationWindow) -> Result<Self> {
        window.validate()?;
        Ok(Self {
            window,
            ..Self::default()
        })
    }

    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }

    /// Accumulated cloud at the most recent step.
    pub fn current(&self) -> Result<FeaturedCloud> {
        union(
            self.provenance.unwrap_or(Provenance::Nca),
            self.held.iter().map(|(_, c)| c),
        )
    }
}

/// Feed one frame; returns the accumulation over everything seen so far.
/// On error the state is left untouched.
pub fn stream_step(state: &mut NcaState, frame: &FrameCloud) -> Result<FeaturedCloud> {
    if let Some(last) = state.last_t {
        if !(frame.t >= last) {
            return Err(Error::InvalidInput(format!(
                "frame at t = {} precedes previous frame at t = {last}",
                frame.t
            )));
        }
    }
    if let Some(p) = state.provenance {
        if p != frame.cloud.provenance() {
            return Err(Error::InvalidInput("stream provenance changed".into()));
        }
    }
    let g = global_cloud(frame, state.frames_seen)?;
    state.provenance = Some(frame.cloud.provenance());
    state.frames_seen += 1;
    state.last_t = Some(frame.t);
    state.held.push_back((frame.t, g));
    while let Some(&(t, _)) = state.held.front() {
        if state.window.contains(t, frame.t) {
            break;
        }
        state.held.pop_front();
    }
    state.current()
}
