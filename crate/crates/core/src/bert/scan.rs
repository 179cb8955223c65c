use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::model::FastSpec;
use crate::vocab::{CLS_ID, PAD_ID};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowScore {
    pub start: usize,
    pub len: usize,
    pub confidence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub windows: Vec<WindowScore>,
    /// Largest window confidence.
    pub score: f64,
    pub threshold: f64,
    pub flagged: bool,
}

/// Window start offsets covering a stream of `n` tokens: every `stride`
/// from 0, plus a final window flush with the end when the last stride
/// leaves a tail uncovered. Shorter streams get the single offset 0.
pub fn window_starts(n: usize, window: usize, stride: usize) -> Vec<usize> {
    if n <= window {
        return alloc::vec![0];
    }
    let last = n - window;
    let mut v: Vec<usize> = (0..=last).step_by(stride.max(1)).collect();
    if *v.last().unwrap() != last {
        v.push(last);
    }
    v
}

/// Scores every window of `stream` and flags the stream when the best
/// window reaches `threshold`. Windows shorter than `window` are padded.
pub fn window_scan(model: &FastSpec, stream: &[usize], window: usize, stride: usize, threshold: f64) -> ScanReport {
    let mut windows = Vec::new();
    for start in window_starts(stream.len(), window, stride) {
        let end = (start + window).min(stream.len());
        let mut ids = Vec::with_capacity(window + 1);
        ids.push(CLS_ID);
        ids.extend_from_slice(&stream[start..end]);
        ids.resize(window + 1, PAD_ID);
        windows.push(WindowScore { start, len: end - start, confidence: model.confidence(&ids) });
    }
    let score = windows.iter().map(|w| w.confidence).fold(f64::NEG_INFINITY, f64::max);
    ScanReport { windows, score, threshold, flagged: score >= threshold }
}
