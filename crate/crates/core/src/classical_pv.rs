//! Classical phase vocoder: every bin integrates its own time derivative,
//! with no coupling across frequency.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::pghi::trapezoid;
use crate::phase_gradient::{princarg, GradientField};

/// Integration rule along time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Rule {
    Rectangular,
    #[default]
    Trapezoidal,
}

fn check_len(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("{what}: {a} vs {b} bins")));
    }
    Ok(())
}

/// `phi_s(m, n) = phi_s(m, n-1) + a_s * dt(m, n)`.
pub fn propagate_rect(prev_phase: &[f64], cur_dt: &[f64], synthesis_hop: f64) -> Result<Vec<f64>> {
    check_len(
        "previous phase / current dt",
        prev_phase.len(),
        cur_dt.len(),
    )?;
    Ok(prev_phase
        .iter()
        .zip(cur_dt)
        .map(|(&p, &d)| princarg(p + synthesis_hop * d))
        .collect())
}

/// `phi_s(m, n) = phi_s(m, n-1) + a_s/2 * (dt(m, n-1) + dt(m, n))`.
pub fn propagate_trap(
    prev_phase: &[f64],
    prev_dt: &[f64],
    cur_dt: &[f64],
    synthesis_hop: f64,
) -> Result<Vec<f64>> {
    check_len(
        "previous phase / current dt",
        prev_phase.len(),
        cur_dt.len(),
    )?;
    check_len("previous dt / current dt", prev_dt.len(), cur_dt.len())?;
    Ok(prev_phase
        .iter()
        .zip(prev_dt)
        .zip(cur_dt)
        .map(|((&p, &d0), &d1)| trapezoid(p, synthesis_hop, d0, d1))
        .collect())
}

/// Running state for frame-by-frame use.
#[derive(Debug, Clone)]
pub struct ClassicalState {
    prev_phase: Vec<f64>,
    prev_dt: Vec<f64>,
    rule: Rule,
}

impl ClassicalState {
    pub fn new(first_phase: Vec<f64>, first_dt: Vec<f64>, rule: Rule) -> Result<Self> {
        check_len("initial phase / dt", first_phase.len(), first_dt.len())?;
        Ok(Self {
            prev_phase: first_phase,
            prev_dt: first_dt,
            rule,
        })
    }

    pub fn prev_phase(&self) -> &[f64] {
        &self.prev_phase
    }

    pub fn step(&mut self, cur_dt: &[f64], synthesis_hop: f64) -> Result<Vec<f64>> {
        let phase = match self.rule {
            Rule::Rectangular => propagate_rect(&self.prev_phase, cur_dt, synthesis_hop)?,
            Rule::Trapezoidal => {
                propagate_trap(&self.prev_phase, &self.prev_dt, cur_dt, synthesis_hop)?
            }
        };
        self.prev_phase.copy_from_slice(&phase);
        self.prev_dt.copy_from_slice(cur_dt);
        Ok(phase)
    }
}

/// Synthesis phase for a whole grid; frame 0 takes `first_phase`.
pub fn classical_full(
    first_phase: &[f64],
    gradients: &GradientField,
    synthesis_hop: f64,
    rule: Rule,
) -> Result<Grid> {
    let dt = &gradients.dt;
    let mut out = Grid::zeros(dt.bins(), dt.frames());
    if dt.frames() == 0 {
        return Ok(out);
    }
    check_len("first phase / grid", first_phase.len(), dt.bins())?;
    out.frame_mut(0).copy_from_slice(first_phase);
    let mut state = ClassicalState::new(first_phase.to_vec(), dt.frame(0).to_vec(), rule)?;
    for n in 1..dt.frames() {
        let phase = state.step(dt.frame(n), synthesis_hop)?;
        out.frame_mut(n).copy_from_slice(&phase);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_gradient::Scheme;
    use std::f64::consts::TAU;

    #[test]
    fn zero_hop_keeps_phase() {
        let prev = [0.3, -1.2, 3.0];
        assert_eq!(propagate_rect(&prev, &[0.5, 0.1, 9.0], 0.0).unwrap(), prev);
        assert_eq!(
            propagate_trap(&prev, &[1.0; 3], &[0.5, 0.1, 9.0], 0.0).unwrap(),
            prev
        );
    }

    #[test]
    fn zero_dt_freezes_phase() {
        let prev = [0.3, -1.2, 3.0];
        assert_eq!(
            propagate_trap(&prev, &[0.0; 3], &[0.0; 3], 256.0).unwrap(),
            prev
        );
    }

    #[test]
    fn constant_dt_rules_agree() {
        let prev = [0.3, -1.2, 3.0];
        let dt = [0.01, 0.2, -0.05];
        let r = propagate_rect(&prev, &dt, 100.0).unwrap();
        let t = propagate_trap(&prev, &dt, &dt, 100.0).unwrap();
        for (a, b) in r.iter().zip(&t) {
            assert!(princarg(a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn length_mismatch_errors() {
        assert!(propagate_rect(&[0.0; 3], &[0.0; 2], 1.0).is_err());
        assert!(propagate_trap(&[0.0; 3], &[0.0; 2], &[0.0; 3], 1.0).is_err());
        assert!(ClassicalState::new(vec![0.0; 2], vec![0.0; 3], Rule::Rectangular).is_err());
    }

    #[test]
    fn exact_bin_sinusoid_advances_linearly() {
        // dt = 2 pi m0 / M at the peak bin, so phase advances a_s * 2 pi m0 / M.
        let (m0, fft, a_s) = (12usize, 256usize, 96.0);
        let omega = TAU * m0 as f64 / fft as f64;
        let dt = Grid::from_vec(1, 5, vec![omega; 5]).unwrap();
        let grads = GradientField {
            dt: dt.clone(),
            df: Grid::zeros(1, 5),
            scheme: Scheme::Centered,
        };
        for rule in [Rule::Rectangular, Rule::Trapezoidal] {
            let out = classical_full(&[0.4], &grads, a_s, rule).unwrap();
            for n in 1..5 {
                let d = princarg(out.get(0, n) - out.get(0, n - 1) - a_s * omega);
                assert!(d.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn trapezoid_tracks_linear_chirp_better() {
        // Instantaneous frequency rising linearly; sampled once per hop.
        let (hop, frames) = (64.0, 40usize);
        let (w0, slope) = (0.05, 2e-5);
        let truth = |n: usize| {
            let t = n as f64 * hop;
            w0 * t + 0.5 * slope * t * t
        };
        let dt: Vec<f64> = (0..frames).map(|n| w0 + slope * n as f64 * hop).collect();
        let grads = GradientField {
            dt: Grid::from_vec(1, frames, dt).unwrap(),
            df: Grid::zeros(1, frames),
            scheme: Scheme::Centered,
        };
        let err = |rule| {
            let out = classical_full(&[0.0], &grads, hop, rule).unwrap();
            (0..frames)
                .map(|n| princarg(out.get(0, n) - truth(n)).abs())
                .fold(0.0f64, f64::max)
        };
        let (rect, trap) = (err(Rule::Rectangular), err(Rule::Trapezoidal));
        assert!(trap < 1e-9, "trapezoid is exact for linear dt, got {trap}");
        assert!(rect > 1e-3);
    }
}
