//! Live head-orientation sessions.
//!
//! A session owns a playback clock and answers every client message with
//! the EPOF and overlay opacity for the latest head orientation at the
//! current frame. All inputs are explicit (message, clock reading), so any
//! state message can be recomputed offline.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use epof_core::epof::epof_unchecked;
use epof_core::global_opacity;
use serde::{Deserialize, Serialize};
use tokio::sync::Notify;

use crate::Video;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ClientMessage {
    Head {
        #[serde(default)]
        t: f64,
        yaw: f64,
        pitch: f64,
        #[serde(default)]
        roll: f64,
    },
    Pause,
    Play,
    Seek {
        frame_idx: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowWeight {
    pub id: usize,
    pub weight: f64,
    pub pof: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMessage {
    State {
        frame_idx: usize,
        epof: f64,
        opacity: f64,
        windows: Vec<WindowWeight>,
    },
    Error {
        reason: String,
    },
}

/// Frame clock driven by wall time, pausable and clamped to the last frame.
#[derive(Debug, Clone, Copy)]
pub struct PlaybackClock {
    fps: f64,
    n_frames: usize,
    anchor: Instant,
    anchor_frame: f64,
    paused: bool,
}

impl PlaybackClock {
    pub fn new(fps: f64, n_frames: usize, now: Instant) -> Self {
        Self {
            fps,
            n_frames,
            anchor: now,
            anchor_frame: 0.0,
            paused: false,
        }
    }

    fn position(&self, now: Instant) -> f64 {
        let last = self.n_frames.saturating_sub(1) as f64;
        let p = if self.paused {
            self.anchor_frame
        } else {
            self.anchor_frame + now.saturating_duration_since(self.anchor).as_secs_f64() * self.fps
        };
        p.min(last)
    }

    pub fn frame_at(&self, now: Instant) -> usize {
        self.position(now).floor() as usize
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    pub fn pause(&mut self, now: Instant) {
        if !self.paused {
            self.anchor_frame = self.position(now);
            self.paused = true;
        }
    }

    pub fn play(&mut self, now: Instant) {
        if self.paused {
            self.anchor = now;
            self.paused = false;
        }
    }

    pub fn seek(&mut self, frame_idx: usize, now: Instant) {
        self.anchor_frame = frame_idx as f64;
        self.anchor = now;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Head {
    yaw: f64,
    pitch: f64,
}

pub struct LiveSession {
    id: u64,
    video: Arc<Video>,
    clock: PlaybackClock,
    head: Head,
    k: usize,
}

impl LiveSession {
    pub fn new(id: u64, video: Arc<Video>, now: Instant) -> Self {
        let clock = PlaybackClock::new(video.fps, video.matrix.n_frames(), now);
        let k = video.k;
        Self {
            id,
            video,
            clock,
            head: Head { yaw: 0.0, pitch: 0.0 },
            k,
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn clock(&self) -> &PlaybackClock {
        &self.clock
    }

    /// Parses and handles one text frame. Malformed input yields an error
    /// message; the session stays usable.
    pub fn handle_text(&mut self, text: &str, now: Instant) -> ServerMessage {
        match serde_json::from_str::<ClientMessage>(text) {
            Ok(msg) => self.handle(msg, now),
            Err(e) => ServerMessage::Error {
                reason: format!("malformed message: {e}"),
            },
        }
    }

    pub fn handle(&mut self, msg: ClientMessage, now: Instant) -> ServerMessage {
        match msg {
            ClientMessage::Head { yaw, pitch, roll, t } => {
                if ![yaw, pitch, roll, t].iter().all(|v| v.is_finite()) {
                    return error("head values must be finite");
                }
                if pitch.abs() > 90.0 {
                    return error(format!("pitch {pitch} outside [-90, 90]"));
                }
                self.head = Head { yaw, pitch };
            }
            ClientMessage::Pause => self.clock.pause(now),
            ClientMessage::Play => self.clock.play(now),
            ClientMessage::Seek { frame_idx } => {
                let n = self.video.matrix.n_frames();
                if frame_idx >= n {
                    return error(format!("frame {frame_idx} out of range (video has {n} frames)"));
                }
                self.clock.seek(frame_idx, now);
            }
        }
        self.state_at(self.clock.frame_at(now))
    }

    /// State for the current head orientation at `frame_idx`.
    pub fn state_at(&self, frame_idx: usize) -> ServerMessage {
        state_for(&self.video, self.head.yaw, self.head.pitch, frame_idx, self.k)
    }
}

fn error(reason: impl Into<String>) -> ServerMessage {
    ServerMessage::Error { reason: reason.into() }
}

/// The state message for one (orientation, frame) pair.
pub fn state_for(video: &Video, yaw: f64, pitch: f64, frame_idx: usize, k: usize) -> ServerMessage {
    let sample = match epof_unchecked((yaw, pitch), frame_idx, &video.matrix, &video.grid, k) {
        Ok(s) => s,
        Err(e) => return error(e.to_string()),
    };
    let opacity = match global_opacity(sample.epof, video.p10, video.p90) {
        Ok(o) => o,
        Err(e) => return error(e.to_string()),
    };
    ServerMessage::State {
        frame_idx,
        epof: sample.epof,
        opacity,
        windows: sample
            .windows
            .iter()
            .map(|&(id, weight)| WindowWeight {
                id: id.0,
                weight,
                pof: f64::from(video.matrix.get(id, frame_idx)),
            })
            .collect(),
    }
}

/// Bounded outgoing queue that drops the oldest message when full.
pub struct Outbox {
    queue: Mutex<VecDeque<String>>,
    capacity: usize,
    notify: Notify,
    dropped: AtomicU64,
    closed: AtomicBool,
}

impl Outbox {
    pub fn new(capacity: usize) -> Arc<Self> {
        Arc::new(Self {
            queue: Mutex::new(VecDeque::with_capacity(capacity)),
            capacity: capacity.max(1),
            notify: Notify::new(),
            dropped: AtomicU64::new(0),
            closed: AtomicBool::new(false),
        })
    }

    pub fn push(&self, msg: String) {
        {
            let mut q = self.queue.lock().unwrap();
            if q.len() == self.capacity {
                q.pop_front();
                self.dropped.fetch_add(1, Ordering::Relaxed);
            }
            q.push_back(msg);
        }
        self.notify.notify_one();
    }

    pub fn drain(&self) -> Vec<String> {
        self.queue.lock().unwrap().drain(..).collect()
    }

    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.queue.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Wakes the consumer for the last time.
    pub fn close(&self) {
        self.closed.store(true, Ordering::Release);
        self.notify.notify_one();
    }

    pub fn is_closed(&self) -> bool {
        self.closed.load(Ordering::Acquire)
    }

    pub async fn wait(&self) {
        self.notify.notified().await;
    }
}
