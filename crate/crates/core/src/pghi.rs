//! Phase gradient heap integration, one frame at a time.
//!
//! Given the synthesis phase of frame `n-1`, the phase of frame `n` is built
//! by spreading phase outward from the strongest known coefficients. A max
//! heap keyed on magnitude holds coefficients whose phase is known. Popping
//! a previous-frame entry integrates along time into the same bin of the
//! current frame (trapezoidal rule on the time derivative). Popping a
//! current-frame entry integrates along frequency into both neighbouring
//! bins (trapezoidal rule on the frequency derivative). Only bins above
//! `tol * max magnitude` of the two frames are integrated; the rest get
//! uniformly random phase.

use std::cmp::Ordering;
use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{param, Error, Result};
use crate::grid::Grid;
use crate::heap::MaxHeap;
use crate::phase_gradient::{princarg, GradientField};

/// Which frame a heap entry refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameTag {
    Previous,
    Current,
}

/// Heap key: magnitude first; on equal magnitudes previous-frame entries win,
/// then the lower bin.
#[derive(Debug, Clone, Copy)]
pub struct HeapEntry {
    pub key: f64,
    pub bin: usize,
    pub tag: FrameTag,
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        let tag_rank = |t: FrameTag| match t {
            FrameTag::Previous => 1u8,
            FrameTag::Current => 0u8,
        };
        self.key
            .total_cmp(&other.key)
            .then_with(|| tag_rank(self.tag).cmp(&tag_rank(other.tag)))
            .then_with(|| other.bin.cmp(&self.bin))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapEntry {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// From the same bin of the previous frame.
    Time,
    /// From bin `m-1` of the current frame to `m`.
    FreqUp,
    /// From bin `m+1` of the current frame to `m`.
    FreqDown,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Time => "time",
            Direction::FreqUp => "freq_up",
            Direction::FreqDown => "freq_down",
        }
    }
}

/// One phase assignment: `target_bin` of `frame` received its phase from
/// `source_bin` (of `frame - 1` for time steps, of `frame` otherwise).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PropagationStep {
    pub frame: usize,
    pub source_bin: usize,
    pub target_bin: usize,
    pub direction: Direction,
}

impl PropagationStep {
    pub fn source_frame(&self) -> usize {
        match self.direction {
            Direction::Time => self.frame - 1,
            _ => self.frame,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PropagationTrace {
    pub steps: Vec<PropagationStep>,
}

impl PropagationTrace {
    pub fn count(&self, direction: Direction) -> usize {
        self.steps
            .iter()
            .filter(|s| s.direction == direction)
            .count()
    }

    pub fn for_frame(&self, frame: usize) -> impl Iterator<Item = &PropagationStep> {
        self.steps.iter().filter(move |s| s.frame == frame)
    }
}

/// Synthesis-side integration constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationParams {
    /// `a_s`, samples.
    pub synthesis_hop: f64,
    /// `b_s = (a_s / a_a) * b_a`.
    pub synthesis_freq_step: f64,
    /// Relative magnitude tolerance.
    pub tol: f64,
    pub seed: u64,
}

impl IntegrationParams {
    fn validate(&self) -> Result<()> {
        if !(self.synthesis_hop > 0.0 && self.synthesis_freq_step > 0.0) {
            return Err(param("synthesis hop and frequency step must be positive"));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(param("tolerance must be positive and finite"));
        }
        Ok(())
    }
}

/// Current-frame inputs to [`PghiState::integrate_frame`].
#[derive(Debug, Clone, Copy)]
pub struct FrameInput<'a> {
    pub magnitude: &'a [f64],
    pub dt: &'a [f64],
    pub df: &'a [f64],
}

#[inline]
pub(crate) fn trapezoid(phase: f64, step: f64, d0: f64, d1: f64) -> f64 {
    princarg(phase + 0.5 * step * (d0 + d1))
}

/// Previous-frame data carried between calls, plus reusable scratch space.
#[derive(Debug, Clone)]
pub struct PghiState {
    prev_phase: Vec<f64>,
    prev_dt: Vec<f64>,
    prev_mag: Vec<f64>,
    params: IntegrationParams,
    rng: ChaCha8Rng,
    frame: usize,
    heap: MaxHeap<HeapEntry>,
    pending: Vec<bool>,
}

impl PghiState {
    /// State positioned after frame 0, whose synthesis phase is `first_phase`.
    pub fn new(
        first_phase: Vec<f64>,
        first_dt: Vec<f64>,
        first_mag: Vec<f64>,
        params: IntegrationParams,
    ) -> Result<Self> {
        params.validate()?;
        let bins = first_phase.len();
        if first_dt.len() != bins || first_mag.len() != bins {
            return Err(Error::Dimension(format!(
                "initial phase/dt/magnitude lengths {bins}/{}/{} differ",
                first_dt.len(),
                first_mag.len()
            )));
        }
        Ok(Self {
            prev_phase: first_phase,
            prev_dt: first_dt,
            prev_mag: first_mag,
            params,
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            frame: 0,
            heap: MaxHeap::with_capacity(2 * bins),
            pending: vec![false; bins],
        })
    }

    pub fn bins(&self) -> usize {
        self.prev_phase.len()
    }

    /// Index of the most recently completed frame.
    pub fn frame(&self) -> usize {
        self.frame
    }

    pub fn prev_phase(&self) -> &[f64] {
        &self.prev_phase
    }

    pub fn params(&self) -> &IntegrationParams {
        &self.params
    }

    /// Computes the synthesis phase of the next frame and advances the state.
    pub fn integrate_frame(
        &mut self,
        input: FrameInput<'_>,
        trace: Option<&mut PropagationTrace>,
    ) -> Result<Vec<f64>> {
        self.integrate_audited(input, trace, |_, _| {})
    }

    /// As [`integrate_frame`](Self::integrate_frame); `audit` sees every popped
    /// entry together with the heap contents left behind.
    pub(crate) fn integrate_audited<F>(
        &mut self,
        input: FrameInput<'_>,
        mut trace: Option<&mut PropagationTrace>,
        mut audit: F,
    ) -> Result<Vec<f64>>
    where
        F: FnMut(&HeapEntry, &[HeapEntry]),
    {
        let bins = self.bins();
        let FrameInput { magnitude, dt, df } = input;
        if magnitude.len() != bins || dt.len() != bins || df.len() != bins {
            return Err(Error::Dimension(format!(
                "frame arrays of length {}/{}/{} do not match {bins} bins",
                magnitude.len(),
                dt.len(),
                df.len()
            )));
        }
        let frame = self.frame + 1;
        let a_s = self.params.synthesis_hop;
        let b_s = self.params.synthesis_freq_step;

        let max = magnitude
            .iter()
            .chain(&self.prev_mag)
            .fold(0.0f64, |acc, &v| acc.max(v));
        let abstol = self.params.tol * max;

        let mut phase = vec![0.0; bins];
        let mut remaining = 0usize;
        for m in 0..bins {
            let significant = magnitude[m] > abstol;
            self.pending[m] = significant;
            if significant {
                remaining += 1;
            } else {
                phase[m] = PI - TAU * self.rng.gen::<f64>();
            }
        }

        self.heap.clear();
        for m in 0..bins {
            if self.pending[m] {
                self.heap.push(HeapEntry {
                    key: self.prev_mag[m],
                    bin: m,
                    tag: FrameTag::Previous,
                });
            }
        }

        while remaining > 0 {
            let top = self
                .heap
                .pop()
                .expect("every pending bin keeps its previous-frame entry in the heap");
            audit(&top, self.heap.as_slice());
            let m = top.bin;
            match top.tag {
                FrameTag::Previous => {
                    if self.pending[m] {
                        phase[m] = trapezoid(self.prev_phase[m], a_s, self.prev_dt[m], dt[m]);
                        self.pending[m] = false;
                        remaining -= 1;
                        self.heap.push(HeapEntry {
                            key: magnitude[m],
                            bin: m,
                            tag: FrameTag::Current,
                        });
                        if let Some(t) = trace.as_deref_mut() {
                            t.steps.push(PropagationStep {
                                frame,
                                source_bin: m,
                                target_bin: m,
                                direction: Direction::Time,
                            });
                        }
                    }
                }
                FrameTag::Current => {
                    if m + 1 < bins && self.pending[m + 1] {
                        phase[m + 1] = trapezoid(phase[m], b_s, df[m], df[m + 1]);
                        self.pending[m + 1] = false;
                        remaining -= 1;
                        self.heap.push(HeapEntry {
                            key: magnitude[m + 1],
                            bin: m + 1,
                            tag: FrameTag::Current,
                        });
                        if let Some(t) = trace.as_deref_mut() {
                            t.steps.push(PropagationStep {
                                frame,
                                source_bin: m,
                                target_bin: m + 1,
                                direction: Direction::FreqUp,
                            });
                        }
                    }
                    if m > 0 && self.pending[m - 1] {
                        phase[m - 1] = trapezoid(phase[m], -b_s, df[m], df[m - 1]);
                        self.pending[m - 1] = false;
                        remaining -= 1;
                        self.heap.push(HeapEntry {
                            key: magnitude[m - 1],
                            bin: m - 1,
                            tag: FrameTag::Current,
                        });
                        if let Some(t) = trace.as_deref_mut() {
                            t.steps.push(PropagationStep {
                                frame,
                                source_bin: m,
                                target_bin: m - 1,
                                direction: Direction::FreqDown,
                            });
                        }
                    }
                }
            }
        }

        self.prev_phase.copy_from_slice(&phase);
        self.prev_dt.copy_from_slice(dt);
        self.prev_mag.copy_from_slice(magnitude);
        self.frame = frame;
        Ok(phase)
    }
}

/// Synthesis phase for every frame. Frame 0 takes `first_phase` (normally
/// the analysis phase); later frames are integrated in order.
pub fn pghi_full(
    magnitude: &Grid,
    first_phase: &[f64],
    gradients: &GradientField,
    params: IntegrationParams,
    mut trace: Option<&mut PropagationTrace>,
) -> Result<Grid> {
    if !magnitude.same_shape(&gradients.dt) || !magnitude.same_shape(&gradients.df) {
        return Err(Error::Dimension(
            "magnitude and gradient grids differ in shape".into(),
        ));
    }
    if magnitude.frames() == 0 {
        return Ok(Grid::zeros(magnitude.bins(), 0));
    }
    let mut out = Grid::zeros(magnitude.bins(), magnitude.frames());
    out.frame_mut(0)
        .copy_from_slice(first_phase_checked(first_phase, magnitude.bins())?);
    let mut state = PghiState::new(
        first_phase.to_vec(),
        gradients.dt.frame(0).to_vec(),
        magnitude.frame(0).to_vec(),
        params,
    )?;
    for n in 1..magnitude.frames() {
        let input = FrameInput {
            magnitude: magnitude.frame(n),
            dt: gradients.dt.frame(n),
            df: gradients.df.frame(n),
        };
        let phase = state.integrate_frame(input, trace.as_deref_mut())?;
        out.frame_mut(n).copy_from_slice(&phase);
    }
    Ok(out)
}

fn first_phase_checked(first_phase: &[f64], bins: usize) -> Result<&[f64]> {
    if first_phase.len() != bins {
        return Err(Error::Dimension(format!(
            "first-frame phase has {} bins, grid has {bins}",
            first_phase.len()
        )));
    }
    Ok(first_phase)
}
