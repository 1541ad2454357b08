//! Cognitive-based Adaptive Optimization (CAO).
//!
//! A measurement-driven optimizer for objectives that can only be sampled
//! with noise. Each iteration fits a linear-in-parameters polynomial
//! surrogate to a sliding window of past measurements, draws random
//! perturbations of the current team state with a decaying gain, discards
//! infeasible ones and moves to the perturbation the surrogate rates best.

use std::collections::{HashSet, VecDeque};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::visibility::TeamConfiguration;

/// Product of up to three state variables; `vars[..degree]` is sorted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Monomial {
    vars: [u32; 3],
    degree: u8,
}

impl Monomial {
    pub const CONSTANT: Monomial = Monomial {
        vars: [0; 3],
        degree: 0,
    };

    pub fn new(vars: &[usize]) -> Self {
        assert!(vars.len() <= 3, "monomials have degree at most 3");
        let mut v = [0u32; 3];
        for (slot, &i) in v.iter_mut().zip(vars) {
            *slot = i as u32;
        }
        v[..vars.len()].sort_unstable();
        Self {
            vars: v,
            degree: vars.len() as u8,
        }
    }

    pub fn degree(&self) -> usize {
        self.degree as usize
    }

    pub fn variables(&self) -> &[u32] {
        &self.vars[..self.degree as usize]
    }

    #[inline]
    fn eval(&self, u: &[f64]) -> f64 {
        let v = &self.vars;
        match self.degree {
            0 => 1.0,
            1 => u[v[0] as usize],
            2 => u[v[0] as usize] * u[v[1] as usize],
            _ => u[v[0] as usize] * u[v[1] as usize] * u[v[2] as usize],
        }
    }
}

/// Number of distinct monomials of degree <= 3 in `dim` variables.
pub fn monomial_count(dim: usize) -> usize {
    // C(dim + 3, 3)
    let d = dim as u128;
    ((d + 3) * (d + 2) * (d + 1) / 6).min(usize::MAX as u128) as usize
}

/// Fixed set of regression functions for the surrogate.
///
/// Always contains the constant term. When the bank is large enough every
/// linear term is included too; the remainder are distinct random quadratic
/// and cubic monomials.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorBank {
    dim: usize,
    terms: Vec<Monomial>,
    seed: u64,
}

impl RegressorBank {
    /// Default bank size for a state of dimension `dim`.
    pub fn default_len(dim: usize) -> usize {
        (2 * dim + 15).min(monomial_count(dim))
    }

    pub fn random(dim: usize, len: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("bank.dim", "state dimension must be positive"));
        }
        if len == 0 {
            return Err(Error::param("cao.bank_size", "must be positive"));
        }
        let available = monomial_count(dim);
        if len > available {
            return Err(Error::param(
                "cao.bank_size",
                format!("{len} exceeds the {available} distinct monomials of degree <= 3"),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut terms = vec![Monomial::CONSTANT];
        let mut linear: Vec<usize> = (0..dim).collect();
        if len < 1 + dim {
            linear.shuffle(&mut rng);
        }
        terms.extend(linear.iter().take(len - 1).map(|&i| Monomial::new(&[i])));

        let needed = len - terms.len();
        let higher = available - 1 - dim;
        if needed > 0 && 2 * needed > higher {
            let mut all = Vec::with_capacity(higher);
            for a in 0..dim {
                for b in a..dim {
                    all.push(Monomial::new(&[a, b]));
                    for c in b..dim {
                        all.push(Monomial::new(&[a, b, c]));
                    }
                }
            }
            all.shuffle(&mut rng);
            terms.extend(all.into_iter().take(needed));
        } else if needed > 0 {
            let mut seen: HashSet<Monomial> = terms.iter().copied().collect();
            while terms.len() < len {
                let degree = if rng.random::<bool>() { 2 } else { 3 };
                let vars: Vec<usize> = (0..degree).map(|_| rng.random_range(0..dim)).collect();
                let m = Monomial::new(&vars);
                if seen.insert(m) {
                    terms.push(m);
                }
            }
        }
        Ok(Self { dim, terms, seed })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn features_into(&self, u: &[f64], out: &mut [f64]) {
        debug_assert_eq!(u.len(), self.dim);
        for (o, t) in out.iter_mut().zip(&self.terms) {
            *o = t.eval(u);
        }
    }

    pub fn features(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.terms.len()];
        self.features_into(u, &mut out);
        out
    }
}

/// One measured configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub state: Vec<f64>,
    pub value: f64,
}

/// Sliding window of the most recent measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    capacity: usize,
    entries: VecDeque<HistoryEntry>,
}

impl History {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            entries: VecDeque::with_capacity(capacity.max(1)),
        }
    }

    pub fn push(&mut self, state: Vec<f64>, value: f64) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(HistoryEntry { state, value });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &HistoryEntry> {
        self.entries.iter()
    }
}

/// Affine map from raw state to the coordinates the monomials are built on.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub center: Vec<f64>,
    pub scale: f64,
}

impl Normalization {
    /// Centers on the mean state and scales by the RMS deviation from it.
    pub fn from_history(history: &History) -> Self {
        let n = history.len() as f64;
        let dim = history.iter().next().map_or(0, |e| e.state.len());
        let mut center = vec![0.0; dim];
        for e in history.iter() {
            for (c, s) in center.iter_mut().zip(&e.state) {
                *c += s / n;
            }
        }
        let mut sq = 0.0;
        for e in history.iter() {
            for (c, s) in center.iter().zip(&e.state) {
                sq += (s - c) * (s - c);
            }
        }
        let rms = (sq / (n * dim.max(1) as f64)).sqrt();
        let scale = if rms > 1e-12 { rms } else { 1.0 };
        Self { center, scale }
    }

    pub fn apply_into(&self, state: &[f64], out: &mut [f64]) {
        let inv = 1.0 / self.scale;
        for ((o, s), c) in out.iter_mut().zip(state).zip(&self.center) {
            *o = (s - c) * inv;
        }
    }
}

/// Fitted surrogate `J(x) ~ theta . phi(normalize(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    pub theta: Vec<f64>,
    pub normalization: Normalization,
}

impl Surrogate {
    pub fn predict(&self, bank: &RegressorBank, state: &[f64]) -> f64 {
        let mut u = vec![0.0; state.len()];
        let mut phi = vec![0.0; bank.len()];
        self.predict_with(bank, state, &mut u, &mut phi)
    }

    fn predict_with(&self, bank: &RegressorBank, state: &[f64], u: &mut [f64], phi: &mut [f64]) -> f64 {
        self.normalization.apply_into(state, u);
        bank.features_into(u, phi);
        phi.iter().zip(&self.theta).map(|(a, b)| a * b).sum()
    }
}

/// Least-squares fit of the bank to the window; minimum-norm when the
/// system is rank deficient.
pub fn fit_surrogate(history: &History, bank: &RegressorBank) -> Result<Surrogate> {
    if history.is_empty() {
        return Err(Error::param("history", "needs at least one measurement"));
    }
    let normalization = Normalization::from_history(history);
    let m = history.len();
    let l = bank.len();
    let mut phi = DMatrix::<f64>::zeros(m, l);
    let mut y = DVector::<f64>::zeros(m);
    let mut u = vec![0.0; bank.dim()];
    let mut row = vec![0.0; l];
    for (r, e) in history.iter().enumerate() {
        if e.state.len() != bank.dim() {
            return Err(Error::param("history", "state dimension does not match the bank"));
        }
        normalization.apply_into(&e.state, &mut u);
        bank.features_into(&u, &mut row);
        for (c, v) in row.iter().enumerate() {
            phi[(r, c)] = *v;
        }
        y[r] = e.value;
    }
    let theta = min_norm_lstsq(phi, &y);
    Ok(Surrogate {
        theta: theta.iter().copied().collect(),
        normalization,
    })
}

/// Pseudo-inverse solution of `a x = b`.
///
/// A column-pivoted QR factorization of `a` (or of its transpose when `a` is
/// wide) reduces the problem to a small square triangular factor. Orthonormal
/// and permutation factors leave the pseudo-inverse intact, so a full-rank
/// factor is solved by substitution and only a rank-deficient one needs an SVD.
pub fn min_norm_lstsq(a: DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return DVector::zeros(n);
    }
    if m >= n {
        // a p = q r  =>  x = p pinv(r) q^T b
        let qr = a.col_piv_qr();
        let mut qtb = b.clone();
        qr.q_tr_mul(&mut qtb);
        let r = qr.r();
        let mut x = pinv_triangular(r, qtb.rows(0, n).into_owned(), false);
        qr.p().inv_permute_rows(&mut x);
        x
    } else {
        // a^T p = q r  =>  a = p r^T q^T  =>  x = q pinv(r^T) p^T b
        let qr = a.transpose().col_piv_qr();
        let mut pb = b.clone();
        qr.p().permute_rows(&mut pb);
        let z = pinv_triangular(qr.r().transpose(), pb, true);
        qr.q() * z
    }
}

/// `pinv(t) b` for a square triangular `t` from a pivoted QR.
fn pinv_triangular(t: DMatrix<f64>, b: DVector<f64>, lower: bool) -> DVector<f64> {
    let n = t.ncols();
    let diag = t.diagonal().map(f64::abs);
    let dmax = diag.max();
    if !(dmax > 0.0) || !dmax.is_finite() {
        return DVector::zeros(n);
    }
    if diag.min() > dmax * 1e-9 {
        let solved = if lower {
            t.solve_lower_triangular(&b)
        } else {
            t.solve_upper_triangular(&b)
        };
        if let Some(x) = solved.filter(|x| x.iter().all(|v| v.is_finite())) {
            return x;
        }
    }
    let svd = t.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * 1e-11 * n as f64;
    svd.solve(&b, eps).unwrap_or_else(|_| DVector::zeros(n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CaoParams {
    /// Candidates per iteration; `None` means `60 N` capped at 200.
    pub candidates: Option<usize>,
    /// Regressor count `L`; `None` means `min(2 * 3N + 15, #monomials)`.
    pub bank_size: Option<usize>,
    /// Extra history `T_h`; `None` means `2 L`.
    pub extra_history: Option<usize>,
    /// Gain `a0 / (k + 1)^gamma`, `a0` in meters.
    pub a0: f64,
    pub gamma: f64,
    pub max_iters: usize,
    /// Standard deviation of the additive measurement noise.
    pub noise_std: f64,
}

impl Default for CaoParams {
    fn default() -> Self {
        Self {
            candidates: None,
            bank_size: None,
            extra_history: None,
            a0: 3.0,
            gamma: 0.6,
            max_iters: 500,
            noise_std: 0.005,
        }
    }
}

impl CaoParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.5 && self.gamma <= 1.0) {
            return Err(Error::param("cao.gamma", "must lie in (0.5, 1]"));
        }
        if !(self.a0 > 0.0 && self.a0.is_finite()) {
            return Err(Error::param("cao.a0", "must be positive"));
        }
        if self.candidates == Some(0) {
            return Err(Error::param("cao.candidates", "must be at least 1"));
        }
        if self.bank_size == Some(0) {
            return Err(Error::param("cao.bank_size", "must be at least 1"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::param("cao.noise_std", "must be >= 0"));
        }
        Ok(())
    }

    /// Fills in the size-dependent defaults for a team of `n_agents`.
    pub fn resolve(&self, n_agents: usize) -> Result<ResolvedCao> {
        self.validate()?;
        if n_agents == 0 {
            return Err(Error::param("n_agents", "must be at least 1"));
        }
        let dim = 3 * n_agents;
        let bank_size = self.bank_size.unwrap_or_else(|| RegressorBank::default_len(dim));
        let extra_history = self.extra_history.unwrap_or(2 * bank_size);
        Ok(ResolvedCao {
            dim,
            candidates: self.candidates.unwrap_or((60 * n_agents).min(200)),
            bank_size,
            extra_history,
            a0: self.a0,
            gamma: self.gamma,
            max_iters: self.max_iters,
        })
    }
}

/// CAO parameters with every size-dependent value fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedCao {
    pub dim: usize,
    pub candidates: usize,
    pub bank_size: usize,
    pub extra_history: usize,
    pub a0: f64,
    pub gamma: f64,
    pub max_iters: usize,
}

impl ResolvedCao {
    /// Perturbation gain at iteration `k`.
    pub fn gain(&self, k: usize) -> f64 {
        self.a0 / ((k + 1) as f64).powf(self.gamma)
    }

    pub fn window(&self) -> usize {
        self.bank_size + self.extra_history
    }
}

/// `count` perturbations `x + alpha * zeta` of every agent, with `zeta`
/// standard normal per coordinate.
pub fn perturb<R: Rng + ?Sized>(
    current: &TeamConfiguration,
    alpha: f64,
    count: usize,
    rng: &mut R,
) -> Vec<TeamConfiguration> {
    let base = current.flatten();
    (0..count)
        .map(|_| {
            let state: Vec<f64> = base
                .iter()
                .map(|&v| v + alpha * rng.sample::<f64, _>(StandardNormal))
                .collect();
            TeamConfiguration::from_flat(&state)
        })
        .collect()
}

/// The candidate set for iteration `k`.
pub fn propose_candidates<R: Rng + ?Sized>(
    current: &TeamConfiguration,
    k: usize,
    params: &ResolvedCao,
    rng: &mut R,
) -> Vec<TeamConfiguration> {
    perturb(current, params.gain(k), params.candidates, rng)
}

/// What the objective reports for one configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    /// The value the optimizer sees.
    pub noisy: f64,
    /// Noise-free value, when the simulator can provide it (reporting only).
    pub truth: Option<f64>,
}

impl Measurement {
    pub fn exact(value: f64) -> Self {
        Self {
            noisy: value,
            truth: Some(value),
        }
    }

    fn reported(&self) -> f64 {
        self.truth.unwrap_or(self.noisy)
    }
}

pub trait Objective {
    fn measure(&mut self, team: &TeamConfiguration) -> Result<Measurement>;
}

impl<F> Objective for F
where
    F: FnMut(&TeamConfiguration) -> Result<Measurement>,
{
    fn measure(&mut self, team: &TeamConfiguration) -> Result<Measurement> {
        self(team)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestSeen {
    pub team: TeamConfiguration,
    pub value: f64,
    pub iteration: usize,
}

#[derive(Debug, Clone)]
pub struct CaoState {
    pub k: usize,
    pub current: TeamConfiguration,
    pub history: History,
    pub theta: Vec<f64>,
    pub best: BestSeen,
    /// Measurement taken at `current`.
    pub last: Measurement,
}

impl CaoState {
    /// Measures the initial configuration (iteration 0).
    pub fn start(
        initial: TeamConfiguration,
        objective: &mut dyn Objective,
        params: &ResolvedCao,
    ) -> Result<Self> {
        let m = objective.measure(&initial)?;
        let mut history = History::new(params.window());
        history.push(initial.flatten(), m.noisy);
        Ok(Self {
            k: 0,
            best: BestSeen {
                team: initial.clone(),
                value: m.reported(),
                iteration: 0,
            },
            current: initial,
            history,
            theta: Vec::new(),
            last: m,
        })
    }
}

/// Outcome of one [`cao_step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Index of the selected candidate, `None` when every candidate was infeasible.
    pub selected: Option<usize>,
    pub feasible_candidates: usize,
    pub measurement: Measurement,
}

/// One CAO iteration: fit, perturb, filter, select, measure.
pub fn cao_step<R: Rng + ?Sized>(
    state: &mut CaoState,
    objective: &mut dyn Objective,
    feasible: &dyn Fn(&TeamConfiguration) -> bool,
    params: &ResolvedCao,
    bank: &RegressorBank,
    rng: &mut R,
) -> Result<StepReport> {
    let surrogate = fit_surrogate(&state.history, bank)?;
    let candidates = propose_candidates(&state.current, state.k, params, rng);

    let mut u = vec![0.0; bank.dim()];
    let mut phi = vec![0.0; bank.len()];
    let mut best: Option<(usize, f64)> = None;
    let mut feasible_count = 0;
    for (j, c) in candidates.iter().enumerate() {
        if !feasible(c) {
            continue;
        }
        feasible_count += 1;
        let v = surrogate.predict_with(bank, &c.flatten(), &mut u, &mut phi);
        let v = if v.is_nan() { f64::NEG_INFINITY } else { v };
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((j, v));
        }
    }
    let selected = best.map(|(j, _)| j);
    let next = match selected {
        Some(j) => candidates[j].clone(),
        None => state.current.clone(),
    };
    let m = objective.measure(&next)?;
    state.history.push(next.flatten(), m.noisy);
    state.k += 1;
    if m.reported() > state.best.value {
        state.best = BestSeen {
            team: next.clone(),
            value: m.reported(),
            iteration: state.k,
        };
    }
    state.current = next;
    state.theta = surrogate.theta;
    state.last = m;
    Ok(StepReport {
        selected,
        feasible_candidates: feasible_count,
        measurement: m,
    })
}

/// One row of a run trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub team: TeamConfiguration,
    pub coverage: Option<f64>,
    pub noisy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    pub best: BestSeen,
}

impl RunTrace {
    /// Largest noise-free value along the trace, falling back to the noisy one.
    pub fn max_value(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.coverage.unwrap_or(r.noisy))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Runs `max_iters` CAO iterations from `initial`, which must be feasible.
pub fn cao_run<R: Rng + ?Sized>(
    initial: TeamConfiguration,
    objective: &mut dyn Objective,
    feasible: &dyn Fn(&TeamConfiguration) -> bool,
    params: &ResolvedCao,
    bank: &RegressorBank,
    rng: &mut R,
) -> Result<RunTrace> {
    if initial.len() * 3 != params.dim || bank.dim() != params.dim {
        return Err(Error::param("cao", "team size does not match the resolved parameters"));
    }
    if !feasible(&initial) {
        return Err(Error::param("initial", "initial configuration is infeasible"));
    }
    let mut state = CaoState::start(initial, objective, params)?;
    let mut rows = Vec::with_capacity(params.max_iters + 1);
    rows.push(TraceRow {
        iter: 0,
        team: state.current.clone(),
        coverage: state.last.truth,
        noisy: state.last.noisy,
    });
    for _ in 0..params.max_iters {
        let report = cao_step(&mut state, objective, feasible, params, bank, rng)?;
        rows.push(TraceRow {
            iter: state.k,
            team: state.current.clone(),
            coverage: report.measurement.truth,
            noisy: report.measurement.noisy,
        });
    }
    Ok(RunTrace {
        rows,
        best: state.best,
    })
}
