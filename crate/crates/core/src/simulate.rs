//! Covariance generators and Gaussian sampling for simulation studies.
//!
//! Within-region covariances follow five models built from
//!
//! * `Λ_d`: diagonal with i.i.d. `U(0.5, 2.5)` entries;
//! * `A_d`: unit diagonal, off-diagonals `0.5·Bernoulli(0.5)` inside
//!   consecutive blocks of 10 and zero elsewhere;
//! * `B_d`: tridiagonal with unit diagonal and `0.5` next to it.
//!
//! Models 2–5 take `Λ^{1/2}(M + δI)/(1 + δ)Λ^{1/2}` with `M` one of `A`, `A⁻¹`,
//! `B`, `B⁻¹` and `δ = |λ_min(M)| + 0.05`.
//!
//! Randomness comes from ChaCha8 streams: the master seed keys the generator
//! and `(replicate << 8) | purpose` selects the stream, so every replicate and
//! every purpose within it draws from an independent, reproducible sequence.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dependence::region_pairs;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, inverse, min_eigenvalue, SymmetricMatrix};
use crate::network::Adjacency;
use crate::panel::ComponentPanel;

/// Eigenvalue floor below which an assembled covariance is repaired.
pub const PD_FLOOR: f64 = 1e-8;
/// Extra ridge added beyond `|λ_min|` during repair.
pub const REPAIR_MARGIN: f64 = 0.01;
/// Shift added beyond `|λ_min(M)|` in Models 2–5.
pub const MODEL_SHIFT: f64 = 0.05;
/// Block length of `A_d`.
pub const A_BLOCK: usize = 10;

/// What a random stream is used for within one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    RegionCovariance = 1,
    CrossSignal = 2,
    Sample = 3,
    Truth = 4,
}

/// Independent generator for `(master, replicate, purpose)`.
pub fn stream_rng(master: u64, replicate: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream((replicate << 8) | purpose as u64);
    rng
}

/// Within-region covariance model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Model {
    /// `Λ`.
    Independent = 1,
    /// Built from `A`.
    BlockSparseCovariance = 2,
    /// Built from `A⁻¹`.
    BlockSparsePrecision = 3,
    /// Built from `B`.
    BandedSparseCovariance = 4,
    /// Built from `B⁻¹`.
    BandedSparsePrecision = 5,
}

impl Model {
    pub const ALL: [Model; 5] = [
        Model::Independent,
        Model::BlockSparseCovariance,
        Model::BlockSparsePrecision,
        Model::BandedSparseCovariance,
        Model::BandedSparsePrecision,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for Model {
    type Error = Error;

    fn try_from(id: u8) -> Result<Self> {
        Model::ALL
            .get((id as usize).wrapping_sub(1))
            .copied()
            .ok_or_else(|| Error::Domain(format!("model id {id} outside 1..=5")))
    }
}

impl From<Model> for u8 {
    fn from(m: Model) -> u8 {
        m.id()
    }
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.id())
    }
}

/// Success probability of each cross-block entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalRate {
    /// The same probability for every block.
    Fixed(f64),
    /// `min(1, k / (q_s q_t))`, i.e. `k` nonzero entries expected per block.
    Expected(f64),
}

impl SignalRate {
    pub fn for_block(&self, d: usize) -> f64 {
        match *self {
            SignalRate::Fixed(r) => r,
            SignalRate::Expected(k) => (k / d as f64).min(1.0),
        }
    }
}

/// Law of cross-block entries: each is zero with probability `1 − rate`,
/// otherwise `N(mean_scale·√(log d / n), noise_variance)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalLaw {
    pub rate: SignalRate,
    pub mean_scale: f64,
    /// Variance (not standard deviation) of the nonzero entries.
    pub noise_variance: f64,
    /// Sample size entering the mean.
    pub n: usize,
}

impl SignalLaw {
    /// Two-region power law: 5 expected entries, mean scale 4, variance 0.5.
    pub fn power(n: usize) -> Self {
        Self {
            rate: SignalRate::Expected(5.0),
            mean_scale: 4.0,
            noise_variance: 0.5,
            n,
        }
    }

    /// Network law: 10 expected entries per block, mean scale 4, variance 1.
    pub fn network(n: usize) -> Self {
        Self {
            rate: SignalRate::Expected(10.0),
            mean_scale: 4.0,
            noise_variance: 1.0,
            n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = match self.rate {
            SignalRate::Fixed(r) => r,
            SignalRate::Expected(k) => {
                if !(k >= 0.0) {
                    return Err(Error::Domain(format!("expected count {k} is negative")));
                }
                0.0
            }
        };
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::Domain(format!("signal rate {r} outside [0, 1]")));
        }
        if !(self.noise_variance > 0.0) {
            return Err(Error::Domain(format!(
                "noise variance {} must be positive",
                self.noise_variance
            )));
        }
        if self.n == 0 || !self.mean_scale.is_finite() {
            return Err(Error::Domain("signal law needs n ≥ 1 and a finite mean scale".into()));
        }
        Ok(())
    }
}

/// Generative description of a joint covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceModelSpec {
    pub model: Model,
    pub dims: Vec<usize>,
    pub seed: u64,
    pub signal: Option<SignalLaw>,
}

impl CovarianceModelSpec {
    /// Draws the joint covariance for `edges` from replicate 0's streams.
    pub fn build(&self, edges: &Adjacency) -> Result<JointCovariance> {
        self.build_replicate(edges, 0)
    }

    pub fn build_replicate(&self, edges: &Adjacency, replicate: u64) -> Result<JointCovariance> {
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(Error::Domain("dims must be non-empty and positive".into()));
        }
        let mut rng = stream_rng(self.seed, replicate, Purpose::RegionCovariance);
        let covs = self
            .dims
            .iter()
            .map(|&d| make_region_cov(self.model, d, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let law = self.signal.unwrap_or(SignalLaw {
            rate: SignalRate::Fixed(0.0),
            mean_scale: 0.0,
            noise_variance: 1.0,
            n: 1,
        });
        let mut rng = stream_rng(self.seed, replicate, Purpose::CrossSignal);
        assemble_joint_cov(&covs, edges, &law, &mut rng)
    }
}

/// `Λ_d` as its diagonal.
pub fn make_lambda<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(0.5..2.5)).collect()
}

/// `A_d`; the upper triangle of each block is drawn row by row.
pub fn make_a<R: Rng + ?Sized>(d: usize, rng: &mut R) -> SymmetricMatrix {
    let mut a = SymmetricMatrix::identity(d);
    for start in (0..d).step_by(A_BLOCK) {
        let end = (start + A_BLOCK).min(d);
        for i in start..end {
            for j in i + 1..end {
                if rng.random_bool(0.5) {
                    a.set(i, j, 0.5);
                }
            }
        }
    }
    a
}

/// `B_d`: tridiagonal, entries at distance two or three are zero.
pub fn make_b(d: usize) -> SymmetricMatrix {
    let mut b = SymmetricMatrix::identity(d);
    for i in 1..d {
        b.set(i - 1, i, 0.5);
    }
    b
}

/// `Λ^{1/2}(M + δI)/(1 + δ)Λ^{1/2}` with `δ = |λ_min(M)| + 0.05`.
pub fn shifted_scaled(m: &SymmetricMatrix, lambda: &[f64]) -> Result<SymmetricMatrix> {
    let delta = min_eigenvalue(m)?.abs() + MODEL_SHIFT;
    let mut s = m.clone();
    s.add_ridge(delta);
    let d = s.dim();
    let scaled = DMatrix::from_fn(d, d, |i, j| {
        s.get(i, j) / (1.0 + delta) * (lambda[i] * lambda[j]).sqrt()
    });
    Ok(SymmetricMatrix::from_lower(scaled))
}

/// Redraws `A` until it is comfortably invertible; an adjacency eigenvalue of
/// exactly −2 (e.g. an even cycle) makes `I + A/2` singular.
fn invertible_a<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<SymmetricMatrix> {
    for _ in 0..1000 {
        let a = make_a(d, rng);
        if let Ok(inv) = inverse(a.matrix()) {
            if inv.amax() < 1e8 {
                return Ok(SymmetricMatrix::from_lower(inv));
            }
        }
    }
    Err(Error::Singular)
}

/// Covariance of one region under `model`. `Λ` is drawn before `A`.
pub fn make_region_cov<R: Rng + ?Sized>(model: Model, d: usize, rng: &mut R) -> Result<SymmetricMatrix> {
    let lambda = make_lambda(d, rng);
    let sigma = match model {
        Model::Independent => return Ok(SymmetricMatrix::from_diagonal(&lambda)),
        Model::BlockSparseCovariance => shifted_scaled(&make_a(d, rng), &lambda)?,
        Model::BlockSparsePrecision => shifted_scaled(&invertible_a(d, rng)?, &lambda)?,
        Model::BandedSparseCovariance => shifted_scaled(&make_b(d), &lambda)?,
        Model::BandedSparsePrecision => {
            let inv = inverse(make_b(d).matrix())?;
            shifted_scaled(&SymmetricMatrix::from_lower(inv), &lambda)?
        }
    };
    cholesky(&sigma)?;
    Ok(sigma)
}

/// A `q_s × q_t` cross-covariance block, drawn entry by entry in row-major
/// order. The normal draw happens only for selected entries.
pub fn make_cross_block<R: Rng + ?Sized>(q_s: usize, q_t: usize, law: &SignalLaw, rng: &mut R) -> Result<DMatrix<f64>> {
    law.validate()?;
    let d = q_s * q_t;
    let rate = law.rate.for_block(d);
    let mean = if d > 1 {
        law.mean_scale * ((d as f64).ln() / law.n as f64).sqrt()
    } else {
        0.0
    };
    let normal = Normal::new(mean, law.noise_variance.sqrt()).map_err(|e| Error::Domain(e.to_string()))?;
    let mut block = DMatrix::zeros(q_s, q_t);
    for i in 0..q_s {
        for j in 0..q_t {
            if rate > 0.0 && rng.random_bool(rate) {
                block[(i, j)] = normal.sample(rng);
            }
        }
    }
    Ok(block)
}

/// Joint covariance and the ridge, if any, added to make it positive definite.
#[derive(Debug, Clone)]
pub struct JointCovariance {
    pub matrix: SymmetricMatrix,
    pub repair: Option<f64>,
}

/// Block matrix with `region_covs` on the diagonal and a drawn cross block
/// wherever `edges` has an edge. Blocks are drawn in scan order of the pairs.
/// If `λ_min ≤ 1e−8`, the diagonal is raised by `|λ_min| + 0.01`.
pub fn assemble_joint_cov<R: Rng + ?Sized>(
    region_covs: &[SymmetricMatrix],
    edges: &Adjacency,
    law: &SignalLaw,
    rng: &mut R,
) -> Result<JointCovariance> {
    let p = region_covs.len();
    if edges.p() != p {
        return Err(Error::DimensionMismatch(format!(
            "{p} region covariances but an adjacency over {} regions",
            edges.p()
        )));
    }
    let dims: Vec<usize> = region_covs.iter().map(|c| c.dim()).collect();
    let offsets: Vec<usize> = dims
        .iter()
        .scan(0, |acc, &d| {
            let o = *acc;
            *acc += d;
            Some(o)
        })
        .collect();
    let q: usize = dims.iter().sum();
    let mut m = DMatrix::zeros(q, q);
    for (s, c) in region_covs.iter().enumerate() {
        m.view_mut((offsets[s], offsets[s]), (dims[s], dims[s]))
            .copy_from(c.matrix());
    }
    let mut any_edge = false;
    for (s, t) in region_pairs(p) {
        if edges.get(s, t) {
            any_edge = true;
            let block = make_cross_block(dims[s], dims[t], law, rng)?;
            m.view_mut((offsets[s], offsets[t]), (dims[s], dims[t]))
                .copy_from(&block);
            m.view_mut((offsets[t], offsets[s]), (dims[t], dims[s]))
                .copy_from(&block.transpose());
        }
    }
    let mut matrix = SymmetricMatrix::from_lower(m);
    if !any_edge {
        return Ok(JointCovariance { matrix, repair: None });
    }
    // Cholesky of Σ − floor·I succeeds iff λ_min > floor; the eigensolver is
    // needed only when it fails.
    let mut probe = matrix.clone();
    probe.add_ridge(-PD_FLOOR);
    if cholesky(&probe).is_ok() {
        return Ok(JointCovariance { matrix, repair: None });
    }
    let lmin = min_eigenvalue(&matrix)?;
    if lmin > PD_FLOOR {
        return Ok(JointCovariance { matrix, repair: None });
    }
    let shift = lmin.abs() + REPAIR_MARGIN;
    matrix.add_ridge(shift);
    Ok(JointCovariance {
        matrix,
        repair: Some(shift),
    })
}

/// `n` rows i.i.d. `N(0, cov)`, as `Z Lᵀ` with `Z` filled row by row.
pub fn sample_mvn<R: Rng + ?Sized>(cov: &SymmetricMatrix, n: usize, rng: &mut R) -> Result<ComponentPanel> {
    let l = cholesky(cov)?;
    sample_with_factor(&l, n, rng)
}

/// [`sample_mvn`] with a precomputed lower Cholesky factor.
pub fn sample_with_factor<R: Rng + ?Sized>(l: &DMatrix<f64>, n: usize, rng: &mut R) -> Result<ComponentPanel> {
    let q = l.nrows();
    let z: Vec<f64> = (0..n * q).map(|_| rng.sample(StandardNormal)).collect();
    let z = DMatrix::from_row_slice(n, q, &z);
    ComponentPanel::new(z * l.transpose())
}

/// Region graph with independent edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErdosRenyiSpec {
    pub p: usize,
    pub edge_prob: f64,
    pub seed: u64,
}

/// Draws each pair `s < t` in scan order.
pub fn erdos_renyi(spec: &ErdosRenyiSpec) -> Result<Adjacency> {
    if spec.p < 2 {
        return Err(Error::Domain(format!("need at least two regions, got {}", spec.p)));
    }
    if !(0.0..=1.0).contains(&spec.edge_prob) {
        return Err(Error::Domain(format!(
            "edge probability {} outside [0, 1]",
            spec.edge_prob
        )));
    }
    let mut rng = stream_rng(spec.seed, 0, Purpose::Truth);
    let mut a = Adjacency::empty(spec.p);
    for (s, t) in region_pairs(spec.p) {
        if rng.random_bool(spec.edge_prob) {
            a.set(s, t, true);
        }
    }
    Ok(a)
}
