//! Fixtures shared by the benchmarks.

use roadspeed::imaging::{synth_sequence, Frame, Rect, SynthConfig};

/// A single textured frame of the given size with a 96x48 patch at (10, 120).
pub fn bench_frame(width: u32, height: u32) -> Frame {
    let cfg = SynthConfig {
        frame_w: width,
        frame_h: height,
        patch: Rect::new(10, 120, 96, 48),
        velocity: (0, 0),
        n_frames: 1,
        frame_interval_ms: 1000.0 / 30.0,
        seed: 7,
        background: 96,
    };
    synth_sequence(&cfg).expect("valid bench config").remove(0)
}
