use super::SAMPLE_RATE;

/// 25 ms at 16 kHz.
pub const WINDOW_LENGTH: usize = 400;
/// 10 ms at 16 kHz.
pub const HOP_LENGTH: usize = 160;

/// One 25 ms analysis window into a sample buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnalysisWindow {
    pub index: usize,
    pub start_sample: usize,
}

impl AnalysisWindow {
    pub fn new(index: usize) -> Self {
        Self {
            index,
            start_sample: index * HOP_LENGTH,
        }
    }

    pub fn len(&self) -> usize {
        WINDOW_LENGTH
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn end_sample(&self) -> usize {
        self.start_sample + WINDOW_LENGTH
    }

    pub fn center_time(&self) -> f64 {
        window_center_time(self.index)
    }

    pub fn samples<'a>(&self, buffer: &'a [i16]) -> &'a [i16] {
        &buffer[self.start_sample..self.end_sample()]
    }
}

pub(crate) fn window_center_time(index: usize) -> f64 {
    (index * HOP_LENGTH + WINDOW_LENGTH / 2) as f64 / SAMPLE_RATE as f64
}

/// Number of full windows in `n` samples: floor((n - 400) / 160) + 1, or 0 if n < 400.
pub fn window_count(n: usize) -> usize {
    if n < WINDOW_LENGTH {
        0
    } else {
        (n - WINDOW_LENGTH) / HOP_LENGTH + 1
    }
}

pub fn frame_stream(num_samples: usize) -> impl ExactSizeIterator<Item = AnalysisWindow> {
    (0..window_count(num_samples)).map(AnalysisWindow::new)
}
