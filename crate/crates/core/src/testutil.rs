//! Builders shared by unit tests.

use num_complex::Complex32;

use crate::wire::{ImageFrame, ImageHeader, KSpaceReadout, Meta, Pixels, ReadoutHeader, HEADER_VERSION};

/// Single-coil, two-sample readout; `counter` is stored in the scan counter
/// and the sample values so order can be checked.
pub fn readout(slice: u16, counter: u32) -> KSpaceReadout {
    KSpaceReadout {
        header: ReadoutHeader {
            version: HEADER_VERSION,
            flags: 0,
            scan_counter: counter,
            num_samples: 2,
            num_coils: 1,
            kline_idx: 0,
            slice_idx: slice,
            phase_idx: 0,
            repetition_idx: 0,
            set_idx: 0,
            average_idx: 0,
            sample_time_ns: 0,
            position_mm: [0.0; 3],
            read_dir: [1.0, 0.0, 0.0],
            phase_dir: [0.0, 1.0, 0.0],
            slice_dir: [0.0, 0.0, 1.0],
        },
        samples: vec![Complex32::new(counter as f32, 0.0); 2],
    }
}

/// 2x2 magnitude frame with 1 mm pixels.
pub fn frame(series: u16, slice: u16, phase: u16) -> ImageFrame {
    ImageFrame {
        header: ImageHeader {
            version: HEADER_VERSION,
            flags: 0,
            series_idx: series,
            slice_idx: slice,
            phase_idx: phase,
            rows: 2,
            cols: 2,
            pixel_spacing_mm: [1.0, 1.0],
            slice_thickness_mm: 8.0,
            slice_spacing_mm: 10.0,
            trigger_time_ms: phase as f32 * 40.0,
            position_mm: [0.0; 3],
            row_dir: [1.0, 0.0, 0.0],
            col_dir: [0.0, 1.0, 0.0],
        },
        meta: Meta::new(),
        pixels: Pixels::Magnitude(vec![0.0; 4]),
    }
}
