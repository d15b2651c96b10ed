//! Snap event detection on tip trajectories.
//!
//! A sample is a jump when its tip motion exceeds `JUMP_FACTOR` times the
//! median motion of the preceding `MEDIAN_WINDOW` samples, and also exceeds an
//! absolute floor. After a jump the history restarts, because the tip lands
//! on a branch with a very different typical motion (contact vs. free), and
//! nothing is flagged until `MIN_HISTORY` samples of the new branch are in.

/// Ratio over the rolling median that marks a jump.
pub const JUMP_FACTOR: f64 = 10.0;
/// Number of preceding samples in the rolling median.
pub const MEDIAN_WINDOW: usize = 100;
/// Samples of history required before anything can be flagged.
pub const MIN_HISTORY: usize = 5;

/// Streaming form of the jump rule. Fixed-size, allocation-free.
#[derive(Debug, Clone)]
pub struct JumpDetector {
    window: [f64; MEDIAN_WINDOW],
    scratch: [f64; MEDIAN_WINDOW],
    len: usize,
    head: usize,
    min_jump: f64,
}

impl JumpDetector {
    pub fn new(min_jump: f64) -> Self {
        Self {
            window: [0.0; MEDIAN_WINDOW],
            scratch: [0.0; MEDIAN_WINDOW],
            len: 0,
            head: 0,
            min_jump,
        }
    }

    pub fn reset(&mut self) {
        self.len = 0;
        self.head = 0;
    }

    pub fn history(&self) -> usize {
        self.len
    }

    fn median(&mut self) -> f64 {
        let n = self.len;
        let s = &mut self.scratch[..n];
        s.copy_from_slice(&self.window[..n]);
        let mid = n / 2;
        let (lo, m, _) = s.select_nth_unstable_by(mid, f64::total_cmp);
        if n % 2 == 1 {
            *m
        } else {
            let below = lo.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            0.5 * (below + *m)
        }
    }

    /// Motion above which a sample is a jump, once there is enough history.
    pub fn threshold(&mut self) -> Option<f64> {
        if self.len < MIN_HISTORY {
            return None;
        }
        Some((JUMP_FACTOR * self.median()).max(self.min_jump))
    }

    /// Would `motion` be flagged against the current history?
    pub fn is_jump(&mut self, motion: f64) -> bool {
        self.threshold().is_some_and(|t| motion > t)
    }

    pub fn record(&mut self, motion: f64) {
        self.window[self.head] = motion;
        self.head = (self.head + 1) % MEDIAN_WINDOW;
        self.len = (self.len + 1).min(MEDIAN_WINDOW);
    }

    /// Classify and, when not a jump, add to the history.
    pub fn push(&mut self, motion: f64) -> bool {
        let jump = self.is_jump(motion);
        if !jump {
            self.record(motion);
        }
        jump
    }
}

/// Samples bracketing a detected jump: the tip is quasi-static at `before`
/// and has landed by `after`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JumpSpan {
    pub before: usize,
    pub after: usize,
}

/// Offline detection over a sequence of tip gaps.
pub fn detect_jumps(gaps: &[f64], min_jump: f64) -> Vec<JumpSpan> {
    let mut det = JumpDetector::new(min_jump);
    let mut spans = Vec::new();
    for i in 1..gaps.len() {
        let motion = (gaps[i] - gaps[i - 1]).abs();
        if det.push(motion) {
            spans.push(JumpSpan {
                before: i - 1,
                after: i,
            });
            det.reset();
        }
    }
    spans
}
