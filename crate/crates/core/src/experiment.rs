//! Monte Carlo drivers for empirical size, power and network recovery.
//!
//! Replicate `r` draws its region covariances, cross blocks and sample from
//! the streams `(seed, r, purpose)`, and every method sees the same data.
//! Replicates run in parallel and only integer counts are combined, so the
//! reported rates do not depend on the number of worker threads.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dependence::{prepare, scan_prepared, test_prepared, PreparedRegion, TestMethod};
use crate::error::{Error, Result};
use crate::network::{identify_network, Adjacency, MetricTally, NetworkMetrics};
use crate::panel::RegionLayout;
use crate::simulate::{
    erdos_renyi, sample_mvn, stream_rng, CovarianceModelSpec, ErdosRenyiSpec, Model, Purpose, SignalLaw,
};

/// Default number of Monte Carlo replicates.
pub const DEFAULT_REPLICATES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    /// Two regions, no cross covariance.
    Size,
    /// Two regions with a sparse cross block.
    Power,
    /// `p` regions connected along a random graph.
    Network,
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "size" => Ok(Self::Size),
            "power" => Ok(Self::Power),
            "network" => Ok(Self::Network),
            other => Err(Error::Domain(format!("unknown experiment kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub model: Model,
    pub n: usize,
    /// `(q₁, q₂)` for size and power; one width per region for networks.
    pub dims: Vec<usize>,
    pub replicates: usize,
    pub alpha: f64,
    pub methods: Vec<TestMethod>,
    pub seed: u64,
    /// Edge probability of the random truth graph (network only).
    pub edge_prob: f64,
    /// Replaces the default cross-block law of the experiment kind.
    pub signal: Option<SignalLaw>,
    /// Replaces the random truth graph (network only).
    pub truth: Option<Adjacency>,
}

impl ExperimentSpec {
    /// A spec with the defaults: 1000 replicates, `α = 0.05`, Test I only,
    /// edge probability 0.01.
    pub fn new(kind: ExperimentKind, model: Model, n: usize, dims: Vec<usize>, seed: u64) -> Self {
        Self {
            kind,
            model,
            n,
            dims,
            replicates: DEFAULT_REPLICATES,
            alpha: 0.05,
            methods: vec![TestMethod::Test1],
            seed,
            edge_prob: 0.01,
            signal: None,
            truth: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Domain("replicates must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Domain(format!("level {} outside (0, 1)", self.alpha)));
        }
        if self.methods.is_empty() {
            return Err(Error::Domain("no test methods selected".into()));
        }
        if self.dims.contains(&0) {
            return Err(Error::Domain("region widths must be positive".into()));
        }
        if self.n < crate::panel::MIN_SCANS {
            return Err(Error::Domain(format!("sample size {} is too small", self.n)));
        }
        match self.kind {
            ExperimentKind::Size | ExperimentKind::Power => {
                if self.dims.len() != 2 {
                    return Err(Error::Domain(format!(
                        "size and power experiments take two regions, got {}",
                        self.dims.len()
                    )));
                }
            }
            ExperimentKind::Network => {
                if self.dims.len() < 2 {
                    return Err(Error::Domain("a network needs at least two regions".into()));
                }
                if let Some(m) = self.methods.iter().find(|m| !m.is_extreme_value()) {
                    return Err(Error::Domain(format!("{m} has no simultaneous threshold")));
                }
                if let Some(t) = &self.truth {
                    if t.p() != self.dims.len() {
                        return Err(Error::DimensionMismatch(format!(
                            "truth has {} regions, dims list {}",
                            t.p(),
                            self.dims.len()
                        )));
                    }
                }
            }
        }
        if let Some(law) = &self.signal {
            law.validate()?;
        }
        Ok(())
    }

    fn signal_law(&self) -> SignalLaw {
        self.signal.unwrap_or(match self.kind {
            ExperimentKind::Network => SignalLaw::network(self.n),
            _ => SignalLaw::power(self.n),
        })
    }

    /// The graph used for every replicate.
    pub fn truth_graph(&self) -> Result<Adjacency> {
        match self.kind {
            ExperimentKind::Size => Ok(Adjacency::empty(2)),
            ExperimentKind::Power => Ok(Adjacency::complete(2)),
            ExperimentKind::Network => match &self.truth {
                Some(t) => Ok(t.clone()),
                None => erdos_renyi(&ErdosRenyiSpec {
                    p: self.dims.len(),
                    edge_prob: self.edge_prob,
                    seed: self.seed,
                }),
            },
        }
    }
}

/// Summary for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "summary", rename_all = "lowercase")]
pub enum MethodResult {
    /// Rejection frequency of the single pair.
    Rate {
        method: TestMethod,
        rejections: u64,
        rate: f64,
        se: f64,
    },
    /// Network recovery against the truth graph.
    Network {
        method: TestMethod,
        tally: MetricTally,
        metrics: NetworkMetrics,
        nettpr_se: f64,
        fwer_se: f64,
    },
}

impl MethodResult {
    pub fn method(&self) -> TestMethod {
        match self {
            MethodResult::Rate { method, .. } | MethodResult::Network { method, .. } => *method,
        }
    }

    /// Rejection rate, or NETTPR for network experiments.
    pub fn headline(&self) -> f64 {
        match self {
            MethodResult::Rate { rate, .. } => *rate,
            MethodResult::Network { metrics, .. } => metrics.nettpr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub results: Vec<MethodResult>,
    /// Replicates whose joint covariance needed a ridge repair.
    pub repairs: u64,
    pub truth: Adjacency,
    pub seconds: f64,
}

impl ExperimentResult {
    pub fn for_method(&self, number: u8) -> Option<&MethodResult> {
        self.results.iter().find(|r| r.method().number() == number)
    }
}

/// `√(r(1 − r)/R)`.
pub fn binomial_se(rate: f64, replicates: usize) -> f64 {
    (rate * (1.0 - rate) / replicates as f64).sqrt()
}

#[derive(Debug, Clone, Default)]
struct Counts {
    rejections: Vec<u64>,
    tallies: Vec<MetricTally>,
    repairs: u64,
}

impl Counts {
    fn zero(methods: usize) -> Self {
        Counts {
            rejections: vec![0; methods],
            tallies: vec![MetricTally::default(); methods],
            repairs: 0,
        }
    }

    fn merge(mut self, other: Counts) -> Counts {
        for (a, b) in self.rejections.iter_mut().zip(other.rejections) {
            *a += b;
        }
        for (a, b) in self.tallies.iter_mut().zip(other.tallies) {
            *a = a.merge(b);
        }
        self.repairs += other.repairs;
        self
    }
}

fn replicate(spec: &ExperimentSpec, truth: &Adjacency, layout: &RegionLayout, r: u64) -> Result<Counts> {
    let model = CovarianceModelSpec {
        model: spec.model,
        dims: spec.dims.clone(),
        seed: spec.seed,
        signal: Some(spec.signal_law()),
    };
    let joint = model.build_replicate(truth, r)?;
    let mut rng = stream_rng(spec.seed, r, Purpose::Sample);
    let x = sample_mvn(&joint.matrix, spec.n, &mut rng)?;
    let panels = layout.split(x.data())?;
    let mut counts = Counts::zero(spec.methods.len());
    counts.repairs = joint.repair.is_some() as u64;
    for (k, &method) in spec.methods.iter().enumerate() {
        let prepared: Vec<PreparedRegion> = panels.iter().map(|p| prepare(p, method)).collect::<Result<_>>()?;
        match spec.kind {
            ExperimentKind::Size | ExperimentKind::Power => {
                let o = test_prepared(&prepared[0], &prepared[1], (0, 1), spec.alpha, method)?;
                counts.rejections[k] = o.reject as u64;
            }
            ExperimentKind::Network => {
                let outcomes = scan_prepared(&prepared, spec.alpha, method)?;
                let net = identify_network(&outcomes, prepared.len(), spec.alpha)?;
                counts.tallies[k].record(&net.adjacency, truth)?;
            }
        }
    }
    Ok(counts)
}

/// Runs any experiment kind.
pub fn run(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let start = Instant::now();
    let truth = spec.truth_graph()?;
    let layout = RegionLayout::anonymous(spec.dims.clone())?;
    let counts = (0..spec.replicates as u64)
        .into_par_iter()
        .map(|r| replicate(spec, &truth, &layout, r))
        .try_reduce(|| Counts::zero(spec.methods.len()), |a, b| Ok(a.merge(b)))?;
    let reps = spec.replicates;
    let results = spec
        .methods
        .iter()
        .enumerate()
        .map(|(k, &method)| match spec.kind {
            ExperimentKind::Network => {
                let tally = counts.tallies[k];
                let metrics = tally.metrics()?;
                Ok(MethodResult::Network {
                    method,
                    tally,
                    metrics,
                    nettpr_se: binomial_se(metrics.nettpr, reps),
                    fwer_se: binomial_se(metrics.fwer, reps),
                })
            }
            _ => {
                let rate = counts.rejections[k] as f64 / reps as f64;
                Ok(MethodResult::Rate {
                    method,
                    rejections: counts.rejections[k],
                    rate,
                    se: binomial_se(rate, reps),
                })
            }
        })
        .collect::<Result<_>>()?;
    Ok(ExperimentResult {
        spec: spec.clone(),
        results,
        repairs: counts.repairs,
        truth,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn run_kind(spec: &ExperimentSpec, kind: ExperimentKind) -> Result<ExperimentResult> {
    if spec.kind != kind {
        return Err(Error::Domain(format!(
            "expected a {kind:?} experiment, got {:?}",
            spec.kind
        )));
    }
    run(spec)
}

pub fn run_size(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    run_kind(spec, ExperimentKind::Size)
}

pub fn run_power(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    run_kind(spec, ExperimentKind::Power)
}

pub fn run_network(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    run_kind(spec, ExperimentKind::Network)
}

/// [`run`] on a dedicated pool of `threads` workers.
pub fn run_with_threads(spec: &ExperimentSpec, threads: usize) -> Result<ExperimentResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
    pool.install(|| run(spec))
}
