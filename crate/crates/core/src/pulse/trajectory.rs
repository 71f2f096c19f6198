//! Quantum-jump unravelling of the master equation.
//!
//! Between jumps the unnormalised state follows `exp(-i H_eff t)`; its squared
//! norm decreases monotonically, and a jump fires when it falls to a uniform
//! random threshold.

use num_complex::Complex64 as C64;
use rand::Rng;

use super::propagate::PreparedSequence;
use crate::error::{Error, Result};
use crate::tensor::krylov::norm;
use crate::tensor::{expv, BlockSpectrum, CsrMatrix, KrylovOptions, LinearMap};

const MINUS_I: C64 = C64::new(0.0, -1.0);

struct EffectiveMap<'a> {
    h: &'a CsrMatrix,
    norm: f64,
    spectrum: Option<&'a BlockSpectrum>,
}

/// No-jump evolution from a fixed starting state, evaluated at arbitrary times.
struct Segment<'a> {
    map: &'a EffectiveMap<'a>,
    start: Vec<C64>,
    coeffs: Option<Vec<C64>>,
}

impl<'a> Segment<'a> {
    fn new(map: &'a EffectiveMap<'a>, start: Vec<C64>) -> Self {
        let coeffs = map.spectrum.map(|s| s.coefficients(&start));
        Self { map, start, coeffs }
    }

    fn at(&self, t: f64, opts: &KrylovOptions) -> Result<Vec<C64>> {
        match (&self.coeffs, self.map.spectrum) {
            (Some(c), Some(s)) => Ok(s.evolve_coefficients(c, MINUS_I, t)),
            _ => expv(self.map, MINUS_I, t, &self.start, false, opts),
        }
    }
}

impl LinearMap for EffectiveMap<'_> {
    fn dim(&self) -> usize {
        self.h.dim()
    }
    fn apply(&self, x: &[C64], y: &mut [C64]) {
        self.h.matvec(x, y)
    }
    fn norm_estimate(&self) -> f64 {
        self.norm
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryOutcome {
    /// Final state, normalised.
    pub state: Vec<C64>,
    pub jumps: usize,
}

fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

impl PreparedSequence {
    fn effective_maps(&self) -> Result<Vec<EffectiveMap<'_>>> {
        self.pulses
            .iter()
            .map(|p| {
                let l = p
                    .liouvillian()
                    .ok_or_else(|| Error::InvalidArgument("sequence was prepared without dissipators".into()))?;
                let h = l.effective_hamiltonian();
                Ok(EffectiveMap {
                    h,
                    norm: h.one_norm(),
                    spectrum: p.effective_spectrum(),
                })
            })
            .collect()
    }

    fn propagate_eff(&self, map: &EffectiveMap<'_>, t: f64, psi: &[C64]) -> Result<Vec<C64>> {
        match map.spectrum {
            Some(s) => s.apply(MINUS_I, t, psi),
            None => expv(map, MINUS_I, t, psi, false, &self.settings.evolution.krylov),
        }
    }

    /// Unnormalised no-jump evolution through the whole sequence; its squared
    /// norm is the probability that no jump occurs.
    pub fn no_jump(&self, psi0: &[C64]) -> Result<Vec<C64>> {
        let maps = self.effective_maps()?;
        let mut psi = psi0.to_vec();
        for (p, map) in self.pulses.iter().zip(&maps) {
            psi = self.propagate_eff(map, p.duration(), &psi)?;
            if let Some(phase) = p.generator.post_phase() {
                psi.iter_mut().zip(&phase).for_each(|(x, q)| *x *= q);
            }
        }
        Ok(psi)
    }

    /// One trajectory from a normalised pure state. The first jump threshold is
    /// drawn from `[first_floor, 1)`; pass the no-jump probability to sample
    /// trajectories conditioned on at least one jump, or 0 for plain sampling.
    pub fn run_trajectory<R: Rng + ?Sized>(&self, psi0: &[C64], rng: &mut R, first_floor: f64) -> Result<TrajectoryOutcome> {
        let maps = self.effective_maps()?;
        let mut psi = psi0.to_vec();
        let mut threshold = first_floor + (1.0 - first_floor) * rng.random::<f64>();
        let mut jumps = 0;
        for (p, map) in self.pulses.iter().zip(&maps) {
            let mut t_left = p.duration();
            loop {
                let segment = Segment::new(map, psi.clone());
                let end = segment.at(t_left, &self.settings.evolution.krylov)?;
                if norm_sqr(&end) > threshold {
                    psi = end;
                    break;
                }
                let (t_jump, at_jump) = self.find_jump(&segment, t_left, threshold, norm_sqr(&end))?;
                psi = self.jump(&at_jump, rng)?;
                jumps += 1;
                threshold = rng.random::<f64>();
                t_left -= t_jump;
                if t_left <= 0.0 {
                    break;
                }
            }
            if let Some(phase) = p.generator.post_phase() {
                psi.iter_mut().zip(&phase).for_each(|(x, q)| *x *= q);
            }
        }
        let n = norm(&psi);
        psi.iter_mut().for_each(|x| *x /= n);
        Ok(TrajectoryOutcome { state: psi, jumps })
    }

    /// Time at which the squared norm reaches `threshold`, by Illinois regula falsi
    /// on the log-norm.
    fn find_jump(&self, segment: &Segment<'_>, t_max: f64, threshold: f64, end_norm: f64) -> Result<(f64, Vec<C64>)> {
        let opts = &self.settings.evolution.krylov;
        let target = threshold.ln();
        let (mut a, mut fa) = (0.0, norm_sqr(&segment.start).ln() - target);
        let (mut b, mut fb) = (t_max, end_norm.max(f64::MIN_POSITIVE).ln() - target);
        let mut side = 0i8;
        let mut best = (b, segment.at(b, opts)?);
        for _ in 0..60 {
            if (b - a) <= 1e-10 * t_max {
                break;
            }
            let mut t = (a * fb - b * fa) / (fb - fa);
            if !(t > a && t < b) {
                t = 0.5 * (a + b);
            }
            let v = segment.at(t, opts)?;
            let ft = norm_sqr(&v).ln() - target;
            best = (t, v);
            if ft.abs() < 1e-12 {
                break;
            }
            if ft > 0.0 {
                a = t;
                fa = ft;
                if side == 1 {
                    fb *= 0.5;
                }
                side = 1;
            } else {
                b = t;
                fb = ft;
                if side == -1 {
                    fa *= 0.5;
                }
                side = -1;
            }
        }
        Ok(best)
    }

    fn jump<R: Rng + ?Sized>(&self, psi: &[C64], rng: &mut R) -> Result<Vec<C64>> {
        let d = psi.len();
        let mut candidates = Vec::with_capacity(self.collapse.len());
        let mut total = 0.0;
        for c in &self.collapse {
            let mut out = vec![C64::new(0.0, 0.0); d];
            c.matvec(psi, &mut out);
            let w = norm_sqr(&out);
            total += w;
            candidates.push((w, out));
        }
        if !(total > 0.0) {
            return Err(Error::Numerical("jump requested with no available channel".into()));
        }
        let mut pick = rng.random::<f64>() * total;
        let last = candidates.iter().rposition(|(w, _)| *w > 0.0).expect("total weight is positive");
        for (k, (w, out)) in candidates.into_iter().enumerate() {
            if pick < w || k == last {
                let n = w.sqrt();
                return Ok(out.into_iter().map(|x| x / n).collect());
            }
            pick -= w;
        }
        unreachable!("a channel is always selected")
    }
}
