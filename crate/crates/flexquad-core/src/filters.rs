//! Small causal filters shared by the estimator and the explorer:
//! sliding median, first-order low-pass, biquad band-stop, moving average.
//!
//! All filters are plain state machines stepped one sample at a time so a
//! trace replay reproduces them bit for bit.

use std::collections::VecDeque;

/// Sliding-window median. Until the window fills, the median of the samples
/// seen so far is returned (no zero-padding warmup transient).
#[derive(Debug, Clone)]
pub struct MedianFilter {
    window: usize,
    buf: VecDeque<f64>,
}

impl MedianFilter {
    pub fn new(window: usize) -> Self {
        assert!(window >= 1, "median window must be >= 1");
        Self { window, buf: VecDeque::with_capacity(window) }
    }

    pub fn push(&mut self, x: f64) -> f64 {
        if self.buf.len() == self.window {
            self.buf.pop_front();
        }
        self.buf.push_back(x);
        let mut sorted: Vec<f64> = self.buf.iter().copied().collect();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let n = sorted.len();
        if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        }
    }
}

/// First-order low-pass `y += alpha * (x - y)`, seeded with the first sample.
#[derive(Debug, Clone)]
pub struct LowPass {
    alpha: f64,
    state: Option<f64>,
}

impl LowPass {
    pub fn new(alpha: f64) -> Self {
        assert!(alpha > 0.0 && alpha <= 1.0, "low-pass alpha must be in (0, 1]");
        Self { alpha, state: None }
    }

    /// Alpha equivalent to a continuous cutoff frequency at a given sample rate.
    pub fn from_cutoff(cutoff_hz: f64, sample_hz: f64) -> Self {
        let rc = 1.0 / (2.0 * std::f64::consts::PI * cutoff_hz);
        let dt = 1.0 / sample_hz;
        Self::new(dt / (rc + dt))
    }

    pub fn push(&mut self, x: f64) -> f64 {
        let y = match self.state {
            None => x,
            Some(y) => y + self.alpha * (x - y),
        };
        self.state = Some(y);
        y
    }

    pub fn value(&self) -> Option<f64> {
        self.state
    }
}

/// Band-stop biquad (RBJ notch). Unity gain at DC by construction: with a
/// constant input the output converges to the same constant.
#[derive(Debug, Clone)]
pub struct BandStop {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
    primed: bool,
}

impl BandStop {
    /// `center_hz` +/- `half_width_hz` rejected at `sample_hz`.
    pub fn new(center_hz: f64, half_width_hz: f64, sample_hz: f64) -> Self {
        assert!(center_hz > 0.0 && half_width_hz > 0.0);
        assert!(center_hz + half_width_hz < sample_hz / 2.0, "band-stop above Nyquist");
        let w0 = 2.0 * std::f64::consts::PI * center_hz / sample_hz;
        let q = center_hz / (2.0 * half_width_hz);
        let alpha = w0.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self {
            b0: 1.0 / a0,
            b1: -2.0 * w0.cos() / a0,
            b2: 1.0 / a0,
            a1: -2.0 * w0.cos() / a0,
            a2: (1.0 - alpha) / a0,
            x1: 0.0,
            x2: 0.0,
            y1: 0.0,
            y2: 0.0,
            primed: false,
        }
    }

    pub fn push(&mut self, x: f64) -> f64 {
        if !self.primed {
            // Seed the delay line as if the input had been constant at x.
            self.x1 = x;
            self.x2 = x;
            self.y1 = x;
            self.y2 = x;
            self.primed = true;
        }
        let y = self.b0 * x + self.b1 * self.x1 + self.b2 * self.x2 - self.a1 * self.y1 - self.a2 * self.y2;
        self.x2 = self.x1;
        self.x1 = x;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Moving average over the last `window` samples (mean of what has arrived
/// until the window fills).
#[derive(Debug, Clone)]
pub struct MovingAverage {
    window: usize,
    buf: VecDeque<f64>,
    sum: f64,
}

impl MovingAverage {
    pub fn new(window: usize) -> Self {
        assert!(window >= 1);
        Self { window, buf: VecDeque::with_capacity(window), sum: 0.0 }
    }

    pub fn push(&mut self, x: f64) -> f64 {
        if self.buf.len() == self.window {
            self.sum -= self.buf.pop_front().unwrap();
        }
        self.buf.push_back(x);
        self.sum += x;
        self.sum / self.buf.len() as f64
    }

    pub fn value(&self) -> f64 {
        if self.buf.is_empty() {
            0.0
        } else {
            self.sum / self.buf.len() as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn median_kills_single_spike() {
        let mut m = MedianFilter::new(5);
        let mut out = 0.0;
        for &x in &[1.0, 1.0, 100.0, 1.0, 1.0, 1.0, 1.0] {
            out = m.push(x);
        }
        assert_eq!(out, 1.0);
    }

    #[test]
    fn median_partial_window() {
        let mut m = MedianFilter::new(5);
        assert_eq!(m.push(3.0), 3.0);
        assert_eq!(m.push(1.0), 2.0);
        assert_eq!(m.push(2.0), 2.0);
    }

    #[test]
    fn lowpass_step_response() {
        let mut lp = LowPass::new(0.25);
        lp.push(0.0);
        let mut y = 0.0;
        for _ in 0..40 {
            y = lp.push(1.0);
        }
        assert!((y - 1.0).abs() < 1e-4);
    }

    #[test]
    fn bandstop_unity_dc_gain() {
        let mut bs = BandStop::new(7.0, 2.0, 50.0);
        let mut y = 0.0;
        for _ in 0..500 {
            y = bs.push(2.5);
        }
        assert_relative_eq!(y, 2.5, epsilon = 1e-9);
    }

    #[test]
    fn bandstop_attenuates_center_tone() {
        let fs = 50.0;
        let mut bs = BandStop::new(7.0, 2.0, fs);
        let mut peak_in = 0.0f64;
        let mut peak_out = 0.0f64;
        for k in 0..1000 {
            let t = k as f64 / fs;
            let x = (2.0 * std::f64::consts::PI * 7.0 * t).sin();
            let y = bs.push(x);
            if k > 200 {
                peak_in = peak_in.max(x.abs());
                peak_out = peak_out.max(y.abs());
            }
        }
        assert!(peak_out < 0.1 * peak_in, "tone not rejected: {peak_out} vs {peak_in}");
    }

    #[test]
    fn bandstop_passes_slow_signal() {
        let fs = 50.0;
        let mut bs = BandStop::new(7.0, 2.0, fs);
        let mut worst = 0.0f64;
        for k in 0..2000 {
            let t = k as f64 / fs;
            let x = (2.0 * std::f64::consts::PI * 0.2 * t).sin();
            let y = bs.push(x);
            if k > 400 {
                worst = worst.max((y - x).abs());
            }
        }
        assert!(worst < 0.05, "0.2 Hz distorted by {worst}");
    }

    #[test]
    fn moving_average_window() {
        let mut ma = MovingAverage::new(4);
        ma.push(1.0);
        ma.push(2.0);
        assert_relative_eq!(ma.value(), 1.5);
        ma.push(3.0);
        ma.push(4.0);
        assert_relative_eq!(ma.push(5.0), 3.5); // (2+3+4+5)/4
    }
}
