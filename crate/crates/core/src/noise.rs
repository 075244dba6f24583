//! Q-Wiener noise diagonal in the Dirichlet eigenbasis, `Q e_k = q_k e_k`.
//!
//! Brownian amplitudes are always drawn in the continuous basis and pushed
//! into `V_h` through `G_{ik} = ⟨e_k, e_i^h⟩`, so every mesh can be driven by
//! the same increments. Random numbers come from counter-based ChaCha8
//! substreams keyed by `(seed, sample, purpose tag)` with the step index as
//! stream id; any sample can be regenerated in isolation.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fem::{FemField, FemSpace};

/// Default series truncation.
pub const DEFAULT_K_TRUNC: usize = 4096;

/// Entries of `G` below this fraction of their column's largest entry, or of
/// the largest entry overall, are transform round-off and dropped.
const COUPLING_DROP_REL: f64 = 1e-10;
const COUPLING_DROP_ABS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceKind {
    /// `q_k = k^{-ρ}`.
    PowerDecay { rho: f64 },
    /// `Q = I`.
    White,
    /// Explicit eigenvalues `q_1, q_2, …`; missing entries are zero.
    Custom { q: Vec<f64>, beta: f64 },
}

/// Regularity index implied by a covariance, i.e. the `β` with
/// `‖A^{(β−1)/2}Q^{1/2}‖_{HS} < ∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ImpliedBeta {
    /// The series converges at this value.
    Attained(f64),
    /// The series converges for every smaller value, but not at it.
    Supremum(f64),
}

impl ImpliedBeta {
    pub fn value(&self) -> f64 {
        match *self {
            ImpliedBeta::Attained(b) | ImpliedBeta::Supremum(b) => b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSpec {
    kind: CovarianceKind,
    k_trunc: usize,
    sqrt_q: Vec<f64>,
}

impl CovarianceSpec {
    pub fn new(kind: CovarianceKind, k_trunc: usize) -> Result<Self> {
        if k_trunc == 0 {
            return Err(Error::arg("noise truncation must be at least 1"));
        }
        let q: Vec<f64> = match &kind {
            CovarianceKind::PowerDecay { rho } => {
                if !(*rho >= 0.0 && rho.is_finite()) {
                    return Err(Error::arg(format!("decay exponent must be ≥ 0, got {rho}")));
                }
                (1..=k_trunc).map(|k| (k as f64).powf(-rho)).collect()
            }
            CovarianceKind::White => vec![1.0; k_trunc],
            CovarianceKind::Custom { q, beta } => {
                if q.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return Err(Error::arg("covariance eigenvalues must be finite and ≥ 0"));
                }
                if !(*beta > 0.0 && *beta <= 1.0) {
                    return Err(Error::arg(format!("β must lie in (0, 1], got {beta}")));
                }
                (0..k_trunc).map(|i| q.get(i).copied().unwrap_or(0.0)).collect()
            }
        };
        Ok(CovarianceSpec {
            kind,
            k_trunc,
            sqrt_q: q.iter().map(|v| v.sqrt()).collect(),
        })
    }

    pub fn power_decay(rho: f64, k_trunc: usize) -> Result<Self> {
        Self::new(CovarianceKind::PowerDecay { rho }, k_trunc)
    }

    pub fn white(k_trunc: usize) -> Result<Self> {
        Self::new(CovarianceKind::White, k_trunc)
    }

    /// `Q = 0`.
    pub fn zero(k_trunc: usize) -> Result<Self> {
        Self::new(CovarianceKind::Custom { q: vec![], beta: 1.0 }, k_trunc)
    }

    pub fn kind(&self) -> &CovarianceKind {
        &self.kind
    }

    pub fn k_trunc(&self) -> usize {
        self.k_trunc
    }

    /// `q_k`, one-based.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        self.sqrt_q[k - 1].powi(2)
    }

    pub fn sqrt_eigenvalues(&self) -> &[f64] {
        &self.sqrt_q
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.sqrt_q.iter().map(|s| s * s).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.sqrt_q.iter().all(|&s| s == 0.0)
    }

    /// `Σ q_k < ∞` for the untruncated sequence.
    pub fn is_trace_class(&self) -> bool {
        match self.kind {
            CovarianceKind::PowerDecay { rho } => rho > 1.0,
            CovarianceKind::White => false,
            CovarianceKind::Custom { .. } => true,
        }
    }

    /// For `q_k = k^{-ρ}` and `λ_k ∝ k²`, `Σ_k λ_k^{β−1} q_k` converges iff
    /// `β < (ρ+1)/2`; the result is capped at 1.
    pub fn implied_beta(&self) -> Result<ImpliedBeta> {
        match self.kind {
            CovarianceKind::PowerDecay { rho } => {
                let b = 0.5 * (rho + 1.0);
                Ok(if b > 1.0 { ImpliedBeta::Attained(1.0) } else { ImpliedBeta::Supremum(b) })
            }
            CovarianceKind::White => Ok(ImpliedBeta::Supremum(0.5)),
            CovarianceKind::Custom { .. } => Err(Error::Unsupported(
                "β cannot be inferred for a custom covariance; supply it explicitly".into(),
            )),
        }
    }

    /// The regularity index used by studies.
    pub fn beta(&self) -> f64 {
        match &self.kind {
            CovarianceKind::Custom { beta, .. } => *beta,
            _ => self.implied_beta().map(|b| b.value()).unwrap_or(1.0),
        }
    }
}

/// Purpose tags separating independent random streams of one sample.
pub mod tags {
    pub const WIENER: u64 = 0x5749_454e;
    pub const EXACT_CONVOLUTION: u64 = 0x434f_4e56;
    pub const INITIAL: u64 = 0x494e_4954;
    pub const AUX: u64 = 0x4155_5821;
}

/// Address of one substream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub sample: u64,
    pub step: u64,
    pub tag: u64,
}

impl StreamKey {
    pub fn new(seed: u64, sample: u64, step: u64, tag: u64) -> Self {
        StreamKey { seed, sample, step, tag }
    }

    pub fn at_step(self, step: u64) -> Self {
        StreamKey { step, ..self }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut bytes = [0u8; 32];
        bytes[0..8].copy_from_slice(&self.seed.to_le_bytes());
        bytes[8..16].copy_from_slice(&self.sample.to_le_bytes());
        bytes[16..24].copy_from_slice(&self.tag.to_le_bytes());
        bytes[24..32].copy_from_slice(&0x7361_6366_656d_2d31u64.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(bytes);
        rng.set_stream(self.step);
        rng
    }
}

/// Fill `out[k]` with `√(q_k dt)·ξ_k`, `ξ_k` i.i.d. standard normal from the
/// substream of `key`. Zero-variance modes still consume their draw.
pub fn fill_increments(spec: &CovarianceSpec, dt: f64, key: StreamKey, out: &mut [f64]) {
    let mut rng = key.rng();
    let sdt = dt.sqrt();
    for (o, s) in out.iter_mut().zip(&spec.sqrt_q) {
        let z: f64 = StandardNormal.sample(&mut rng);
        *o = s * sdt * z;
    }
}

/// Brownian increments `ΔW_k` over consecutive steps, one column per step.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrementBatch {
    pub dt: f64,
    pub k_trunc: usize,
    pub n_steps: usize,
    data: Vec<f64>,
}

impl NoiseIncrementBatch {
    pub fn column(&self, step: usize) -> &[f64] {
        &self.data[step * self.k_trunc..(step + 1) * self.k_trunc]
    }

    /// `ΔW_k` of mode `k ≥ 1` at `step`.
    pub fn entry(&self, k: usize, step: usize) -> f64 {
        self.data[step * self.k_trunc + k - 1]
    }
}

/// Increments for steps `key.step .. key.step + n_steps`.
pub fn sample_increments(
    spec: &CovarianceSpec,
    dt: f64,
    n_steps: usize,
    key: StreamKey,
) -> Result<NoiseIncrementBatch> {
    if !(dt > 0.0) {
        return Err(Error::arg(format!("time step must be positive, got {dt}")));
    }
    let k = spec.k_trunc;
    let mut data = vec![0.0; k * n_steps];
    for (n, col) in data.chunks_mut(k).enumerate() {
        fill_increments(spec, dt, key.at_step(key.step + n as u64), col);
    }
    Ok(NoiseIncrementBatch { dt, k_trunc: k, n_steps, data })
}

/// Sparse `G_{ik} = ⟨e_k, e_i^h⟩` for `k ≤ k_trunc` (compressed columns).
/// On uniform meshes each column has at most one entry: mode `k` aliases
/// onto a single discrete mode.
#[derive(Debug, Clone)]
pub struct ProjectedNoise {
    space_id: u64,
    n: usize,
    k_trunc: usize,
    col_ptr: Vec<usize>,
    rows: Vec<u32>,
    vals: Vec<f64>,
}

impl ProjectedNoise {
    pub fn new(space: &FemSpace, k_trunc: usize) -> Self {
        let g = space.eigen_coupling(k_trunc);
        let mut col_ptr = Vec::with_capacity(k_trunc + 1);
        let mut rows = Vec::new();
        let mut vals = Vec::new();
        col_ptr.push(0);
        let floor = COUPLING_DROP_ABS * g.amax();
        for k in 0..k_trunc {
            let col = g.column(k);
            let tol = (COUPLING_DROP_REL * col.amax()).max(floor);
            for (i, &v) in col.iter().enumerate() {
                if v.abs() > tol {
                    rows.push(i as u32);
                    vals.push(v);
                }
            }
            col_ptr.push(rows.len());
        }
        ProjectedNoise { space_id: space.id(), n: space.dim(), k_trunc, col_ptr, rows, vals }
    }

    pub fn k_trunc(&self) -> usize {
        self.k_trunc
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    fn column(&self, k: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.col_ptr[k], self.col_ptr[k + 1]);
        self.rows[a..b].iter().map(|&r| r as usize).zip(self.vals[a..b].iter().copied())
    }

    /// Discrete-eigenbasis coordinates of `P^h Σ_k a_k e_k`.
    pub fn apply(&self, amplitudes: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (k, &a) in amplitudes.iter().enumerate().take(self.k_trunc) {
            if a == 0.0 {
                continue;
            }
            for (i, g) in self.column(k) {
                out[i] += g * a;
            }
        }
    }

    /// `Σ_k q_k G_{ik} G_{jk}`.
    pub fn projected_covariance(&self, spec: &CovarianceSpec) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(self.n, self.n);
        for k in 0..self.k_trunc.min(spec.k_trunc) {
            let q = spec.sqrt_q[k].powi(2);
            if q == 0.0 {
                continue;
            }
            let (a, b) = (self.col_ptr[k], self.col_ptr[k + 1]);
            for p in a..b {
                for r in a..b {
                    c[(self.rows[p] as usize, self.rows[r] as usize)] += q * self.vals[p] * self.vals[r];
                }
            }
        }
        c
    }
}

/// `P^h(Σ_k a_k e_k)` as a field.
pub fn project_increment(space: &FemSpace, projected: &ProjectedNoise, amplitudes: &[f64]) -> Result<FemField> {
    if projected.space_id != space.id() {
        return Err(Error::arg("coupling matrix was built for a different space"));
    }
    if amplitudes.len() != projected.k_trunc {
        return Err(Error::Dimension { expected: projected.k_trunc, got: amplitudes.len() });
    }
    let mut c = vec![0.0; space.dim()];
    projected.apply(amplitudes, &mut c);
    space.field(space.from_eigen(&c))
}

#[derive(Debug, Clone)]
enum Factor {
    Zero,
    Diagonal(Vec<f64>),
    Lower(DMatrix<f64>),
}

/// Exact one-step sampler of `Z^h(t+dt) = e^{−A_h dt}Z^h(t) + ∫ S^h(t+dt−s)P^h dW(s)`.
///
/// In discrete eigen-coordinates the stochastic integral is centred Gaussian
/// with covariance
/// `C_{ij} = (Σ_k q_k G_{ik}G_{jk})·(1 − e^{−(λ_i^h+λ_j^h)dt})/(λ_i^h+λ_j^h)`,
/// sampled through its Cholesky factor.
#[derive(Debug, Clone)]
pub struct ConvolutionSampler {
    space_id: u64,
    dt: f64,
    decay: Vec<f64>,
    factor: Factor,
}

impl ConvolutionSampler {
    pub fn new(space: &FemSpace, spec: &CovarianceSpec, projected: &ProjectedNoise, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::arg(format!("time step must be positive, got {dt}")));
        }
        if projected.space_id != space.id() {
            return Err(Error::arg("coupling matrix was built for a different space"));
        }
        let cov = convolution_covariance(space, spec, projected, dt);
        let decay = space.eigenvalues().iter().map(|l| (-l * dt).exp()).collect();
        Ok(ConvolutionSampler { space_id: space.id(), dt, decay, factor: cholesky_factor(cov)? })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn decay(&self) -> &[f64] {
        &self.decay
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.factor, Factor::Zero)
    }

    /// One draw of the stochastic integral over a step, eigen-coordinates.
    pub fn sample_into(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        match &self.factor {
            Factor::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            Factor::Diagonal(d) => {
                for (o, s) in out.iter_mut().zip(d) {
                    let z: f64 = StandardNormal.sample(rng);
                    *o = s * z;
                }
            }
            Factor::Lower(l) => {
                let z = DVector::from_fn(l.nrows(), |_, _| StandardNormal.sample(rng));
                let v = l * z;
                out.copy_from_slice(v.as_slice());
            }
        }
    }

    /// `e^{−A_h dt}·state + G`.
    pub fn step(&self, space: &FemSpace, state: &FemField, key: StreamKey) -> Result<FemField> {
        if space.id() != self.space_id {
            return Err(Error::arg("sampler was built for a different space"));
        }
        if state.space_id != space.id() || state.nodal.len() != space.dim() {
            return Err(Error::Dimension { expected: space.dim(), got: state.nodal.len() });
        }
        let mut c = space.to_eigen(&state.nodal);
        let mut noise = vec![0.0; c.len()];
        self.sample_into(&mut key.rng(), &mut noise);
        for ((ci, d), z) in c.iter_mut().zip(&self.decay).zip(&noise) {
            *ci = d * *ci + z;
        }
        space.field(space.from_eigen(&c))
    }
}

/// Covariance of the one-step stochastic integral in eigen-coordinates.
pub fn convolution_covariance(
    space: &FemSpace,
    spec: &CovarianceSpec,
    projected: &ProjectedNoise,
    dt: f64,
) -> DMatrix<f64> {
    let lam = space.eigenvalues();
    let mut c = projected.projected_covariance(spec);
    for j in 0..lam.len() {
        for i in 0..lam.len() {
            if c[(i, j)] != 0.0 {
                let s = lam[i] + lam[j];
                c[(i, j)] *= -(-s * dt).exp_m1() / s;
            }
        }
    }
    c
}

fn cholesky_factor(cov: DMatrix<f64>) -> Result<Factor> {
    let n = cov.nrows();
    let trace = cov.trace();
    if trace == 0.0 {
        return Ok(Factor::Zero);
    }
    let diagonal = (0..n).all(|j| (0..n).all(|i| i == j || cov[(i, j)] == 0.0));
    if diagonal {
        return Ok(Factor::Diagonal((0..n).map(|i| cov[(i, i)].max(0.0).sqrt()).collect()));
    }
    if let Some(ch) = cov.clone().cholesky() {
        return Ok(Factor::Lower(ch.l()));
    }
    let mut reg = cov;
    for i in 0..n {
        reg[(i, i)] += 1e-14 * trace;
    }
    reg.cholesky()
        .map(|ch| Factor::Lower(ch.l()))
        .ok_or_else(|| Error::Numerical("convolution covariance is not positive definite after regularisation".into()))
}

/// One exact step of the discrete stochastic convolution.
pub fn convolution_step(
    space: &FemSpace,
    spec: &CovarianceSpec,
    dt: f64,
    state: &FemField,
    key: StreamKey,
) -> Result<FemField> {
    let projected = ProjectedNoise::new(space, spec.k_trunc());
    ConvolutionSampler::new(space, spec, &projected, dt)?.step(space, state, key)
}

/// Exact stochastic convolutions on several uniform meshes, all driven by the
/// same Wiener path.
///
/// On a uniform mesh mode `k` feeds a single discrete mode `i_ℓ(k)` of level
/// `ℓ`, so the level contributions of `β_k` form a Gaussian vector with
/// `Cov_{ab} = q_k G_a G_b (1 − e^{−(λ_a+λ_b)dt})/(λ_a+λ_b)`. Each step draws
/// one such vector per mode.
#[derive(Debug, Clone)]
pub struct CoupledConvolution {
    dt: f64,
    levels: usize,
    space_ids: Vec<u64>,
    dims: Vec<usize>,
    decay: Vec<Vec<f64>>,
    /// `targets[m·L + ℓ]`: discrete mode fed by the `m`-th active mode on level `ℓ`.
    targets: Vec<u32>,
    /// Row-major `L × L` square-root factor per active mode.
    factors: Vec<f64>,
}

impl CoupledConvolution {
    pub fn new(spaces: &[&FemSpace], projected: &[&ProjectedNoise], spec: &CovarianceSpec, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::arg(format!("time step must be positive, got {dt}")));
        }
        if spaces.is_empty() || spaces.len() != projected.len() {
            return Err(Error::arg("need one coupling matrix per space"));
        }
        let l = spaces.len();
        let k_max = spec.k_trunc.min(projected.iter().map(|p| p.k_trunc).min().unwrap_or(0));
        for (s, p) in spaces.iter().zip(projected) {
            if p.space_id != s.id() {
                return Err(Error::arg("coupling matrix was built for a different space"));
            }
        }
        let mut targets = Vec::new();
        let mut factors = Vec::new();
        let mut gains = vec![0.0; l];
        let mut lams = vec![0.0; l];
        for k in 0..k_max {
            let q = spec.sqrt_q[k].powi(2);
            if q == 0.0 {
                continue;
            }
            let mut rows = vec![0u32; l];
            for (j, (s, p)) in spaces.iter().zip(projected).enumerate() {
                let mut col = p.column(k);
                match (col.next(), col.next()) {
                    (None, _) => gains[j] = 0.0,
                    (Some((i, g)), None) => {
                        rows[j] = i as u32;
                        gains[j] = g;
                        lams[j] = s.eigenvalues()[i];
                    }
                    _ => {
                        return Err(Error::Unsupported(
                            "joint exact convolution needs uniform meshes (one discrete mode per continuous mode)".into(),
                        ))
                    }
                }
            }
            if gains.iter().all(|&g| g == 0.0) {
                continue;
            }
            let cov = DMatrix::from_fn(l, l, |a, b| {
                let s = lams[a] + lams[b];
                q * gains[a] * gains[b] * -(-s * dt).exp_m1() / s
            });
            let eig = cov.symmetric_eigen();
            for a in 0..l {
                for b in 0..l {
                    factors.push(eig.eigenvectors[(a, b)] * eig.eigenvalues[b].max(0.0).sqrt());
                }
            }
            targets.extend_from_slice(&rows);
        }
        Ok(CoupledConvolution {
            dt,
            levels: l,
            space_ids: spaces.iter().map(|s| s.id()).collect(),
            dims: spaces.iter().map(|s| s.dim()).collect(),
            decay: spaces
                .iter()
                .map(|s| s.eigenvalues().iter().map(|lam| (-lam * dt).exp()).collect())
                .collect(),
            targets,
            factors,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn dim(&self, level: usize) -> usize {
        self.dims[level]
    }

    pub fn decay(&self, level: usize) -> &[f64] {
        &self.decay[level]
    }

    /// Whether `space` is level `level` of this sampler.
    pub fn matches(&self, level: usize, space: &FemSpace) -> bool {
        self.space_ids.get(level) == Some(&space.id())
    }

    /// One joint draw; `outs[ℓ]` receives level `ℓ` in eigen-coordinates.
    pub fn sample_into(&self, rng: &mut ChaCha8Rng, outs: &mut [Vec<f64>]) {
        let l = self.levels;
        for o in outs.iter_mut() {
            o.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut z = vec![0.0; l];
        for (f, t) in self.factors.chunks_exact(l * l).zip(self.targets.chunks_exact(l)) {
            for v in z.iter_mut() {
                *v = StandardNormal.sample(rng);
            }
            for ((row, &i), out) in f.chunks_exact(l).zip(t).zip(outs.iter_mut()) {
                let mut w = 0.0;
                for (x, y) in row.iter().zip(&z) {
                    w += x * y;
                }
                out[i as usize] += w;
            }
        }
    }
}
