//! Alignment of multi-rate streams onto a uniform grid.

use super::{PipelineError, RawSession};
use crate::geometry::{bracket, interpolate_pose, Pose3, Timestamped};

/// All modalities of one grid instant.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSample {
    /// Session-relative time, starting at 0.
    pub t: f64,
    /// Chest camera pose in the chest world frame, `T^{W_c}_{C_c}`.
    pub chest_world: Pose3,
    /// Hand camera pose in the chest world frame, `T^{W_c}_{C_h}`.
    pub hand_world: Pose3,
    pub marker_distance: f64,
    pub chest_image: Option<String>,
    pub hand_image: Option<String>,
}

/// Nearest sample by timestamp; ties go to the earlier sample.
pub fn nearest<T>(stream: &[Timestamped<T>], t: f64) -> Option<&Timestamped<T>> {
    let j = stream.partition_point(|s| s.t < t);
    let after = stream.get(j);
    let before = j.checked_sub(1).and_then(|i| stream.get(i));
    match (before, after) {
        (Some(b), Some(a)) => Some(if t - b.t <= a.t - t { b } else { a }),
        (b, a) => b.or(a),
    }
}

fn linear(stream: &[Timestamped<f64>], t: f64) -> Option<f64> {
    let (i, s) = bracket(stream, t)?;
    if s == 0.0 || i + 1 >= stream.len() {
        return Some(stream[i].value);
    }
    Some(stream[i].value + (stream[i + 1].value - stream[i].value) * s)
}

/// Builds the grid `start + k / rate_hz` over the intersection of all
/// stream spans. Image streams take part only when non-empty.
pub fn grid_times(session: &RawSession, rate_hz: f64) -> Result<(f64, Vec<f64>), PipelineError> {
    let spans = session.required_spans()?;
    let mut start = spans.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let mut end = spans.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    for imgs in [&session.chest_images, &session.hand_images] {
        if let (Some(a), Some(b)) = (imgs.first(), imgs.last()) {
            start = start.max(a.t);
            end = end.min(b.t);
        }
    }
    if !(end >= start) {
        return Err(PipelineError::EmptyGrid);
    }
    let n = ((end - start) * rate_hz + 1e-9).floor() as usize + 1;
    Ok((start, (0..n).map(|k| k as f64 / rate_hz).collect()))
}

pub fn resample_to_grid(session: &RawSession, rate_hz: f64) -> Result<Vec<AlignedSample>, PipelineError> {
    let (start, grid) = grid_times(session, rate_hz)?;
    let chest = session.chest.poses();
    let hand = session.hand.poses();
    let ext_c = session.extrinsics.chest;
    let ext_h = session.extrinsics.hand;
    let mut out = Vec::with_capacity(grid.len());
    for rel in grid {
        // clamp guards the last grid point against round-off past the span end
        let t = start + rel;
        let t_c = t.min(chest.last().map_or(t, |s| s.t));
        let t_h = t.min(hand.last().map_or(t, |s| s.t));
        let t_m = t.min(session.markers.last().map_or(t, |s| s.t));
        let c = interpolate_pose(&chest, t_c).ok_or(PipelineError::EmptyGrid)?;
        let h = interpolate_pose(&hand, t_h).ok_or(PipelineError::EmptyGrid)?;
        let d = linear(&session.markers, t_m).ok_or(PipelineError::EmptyGrid)?;
        out.push(AlignedSample {
            t: rel,
            chest_world: c.compose(&ext_c),
            hand_world: session.chest_world_from_hand_world.compose(&h).compose(&ext_h),
            marker_distance: d,
            chest_image: nearest(&session.chest_images, t).map(|s| s.value.clone()),
            hand_image: nearest(&session.hand_images, t).map(|s| s.value.clone()),
        });
    }
    Ok(out)
}
