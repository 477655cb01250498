//! Simultaneous testing over all region pairs and the resulting network.
//!
//! An edge `(s, t)` is declared iff `T_st > 2 log{p(p − 1)/2} + q_α`, which
//! keeps the family-wise error rate at `α` asymptotically.

use serde::{Deserialize, Serialize};

use crate::dependence::{region_pairs, TestOutcome};
use crate::error::{Error, Result};
use crate::null_dist::fwer_threshold;

/// Symmetric boolean adjacency over `p` regions with an empty diagonal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "EdgeListRepr", into = "EdgeListRepr")]
pub struct Adjacency {
    p: usize,
    cells: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct EdgeListRepr {
    p: usize,
    edges: Vec<(usize, usize)>,
}

impl From<Adjacency> for EdgeListRepr {
    fn from(a: Adjacency) -> Self {
        EdgeListRepr {
            p: a.p,
            edges: a.edges(),
        }
    }
}

impl TryFrom<EdgeListRepr> for Adjacency {
    type Error = Error;

    fn try_from(r: EdgeListRepr) -> Result<Self> {
        Adjacency::from_edges(r.p, &r.edges)
    }
}

impl Adjacency {
    /// The empty graph.
    pub fn empty(p: usize) -> Self {
        Self {
            p,
            cells: vec![false; p * p],
        }
    }

    pub fn complete(p: usize) -> Self {
        let mut a = Self::empty(p);
        for (s, t) in region_pairs(p) {
            a.set(s, t, true);
        }
        a
    }

    pub fn from_edges(p: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut a = Self::empty(p);
        for &(s, t) in edges {
            if s == t || s >= p || t >= p {
                return Err(Error::Domain(format!("invalid edge ({s}, {t}) for {p} regions")));
            }
            a.set(s, t, true);
        }
        Ok(a)
    }

    /// Builds from a full `p × p` 0/1 grid, which must be symmetric with a
    /// zero diagonal.
    pub fn from_grid(rows: &[Vec<bool>]) -> Result<Self> {
        let p = rows.len();
        let mut a = Self::empty(p);
        for (s, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::DimensionMismatch(format!(
                    "grid row {s} has {} entries, expected {p}",
                    row.len()
                )));
            }
            if row[s] {
                return Err(Error::Domain(format!("self edge at region {s}")));
            }
            for t in 0..p {
                if row[t] != rows[t][s] {
                    return Err(Error::Domain(format!("grid not symmetric at ({s}, {t})")));
                }
            }
            for t in s + 1..p {
                a.set(s, t, row[t]);
            }
        }
        Ok(a)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn get(&self, s: usize, t: usize) -> bool {
        self.cells[s * self.p + t]
    }

    /// Sets both `(s, t)` and `(t, s)`.
    ///
    /// # Panics
    /// If `s == t` or either index is out of range.
    pub fn set(&mut self, s: usize, t: usize, v: bool) {
        assert!(s != t && s < self.p && t < self.p, "invalid edge ({s}, {t})");
        self.cells[s * self.p + t] = v;
        self.cells[t * self.p + s] = v;
    }

    /// Edges `(s, t)` with `s < t`, in scan order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        region_pairs(self.p)
            .into_iter()
            .filter(|&(s, t)| self.get(s, t))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count() / 2
    }

    /// Row-major `p × p` grid.
    pub fn grid(&self) -> Vec<Vec<bool>> {
        self.cells
            .chunks(self.p.max(1))
            .take(self.p)
            .map(|r| r.to_vec())
            .collect()
    }
}

impl AsRef<Adjacency> for Adjacency {
    fn as_ref(&self) -> &Adjacency {
        self
    }
}

/// Estimated region network with the outcomes it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkEstimate {
    pub p: usize,
    pub adjacency: Adjacency,
    /// One outcome per pair, in scan order.
    pub outcomes: Vec<TestOutcome>,
    pub alpha: f64,
    pub threshold: f64,
}

impl AsRef<Adjacency> for NetworkEstimate {
    fn as_ref(&self) -> &Adjacency {
        &self.adjacency
    }
}

/// Applies the simultaneous threshold to a complete set of pairwise outcomes
/// from Test I or Test II.
pub fn identify_network(outcomes: &[TestOutcome], p: usize, alpha: f64) -> Result<NetworkEstimate> {
    let threshold = fwer_threshold(p, alpha)?;
    let pairs = region_pairs(p);
    let mut slot: Vec<Option<&TestOutcome>> = vec![None; pairs.len()];
    for o in outcomes {
        let (s, t) = o.pair;
        if s >= t || t >= p {
            return Err(Error::IncompletePairSet(format!(
                "pair ({s}, {t}) is not an ordered pair of {p} regions"
            )));
        }
        if !o.method.is_extreme_value() {
            return Err(Error::Domain(
                "the simultaneous threshold applies to Tests I and II only".into(),
            ));
        }
        // Position of (s, t) in scan order.
        let k = s * (2 * p - s - 1) / 2 + (t - s - 1);
        if slot[k].replace(o).is_some() {
            return Err(Error::IncompletePairSet(format!("pair ({s}, {t}) appears twice")));
        }
    }
    let mut adjacency = Adjacency::empty(p);
    let mut ordered = Vec::with_capacity(pairs.len());
    for (k, (s, t)) in pairs.into_iter().enumerate() {
        let o = slot[k].ok_or_else(|| Error::IncompletePairSet(format!("pair ({s}, {t}) is missing")))?;
        if o.statistic > threshold {
            adjacency.set(s, t, true);
        }
        ordered.push(o.clone());
    }
    Ok(NetworkEstimate {
        p,
        adjacency,
        outcomes: ordered,
        alpha,
        threshold,
    })
}

/// Accuracy of estimated networks against the truth over replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkMetrics {
    /// Fraction of replicates that recover the truth on every pair.
    pub nettpr: f64,
    /// Fraction of replicates with at least one false edge.
    pub fwer: f64,
    /// False edges over all declared edges, pooled across replicates; 0 when
    /// nothing was declared.
    pub fdr: f64,
}

/// Integer counts behind [`NetworkMetrics`]; merging is order independent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricTally {
    pub replicates: u64,
    pub exact: u64,
    pub with_false_edge: u64,
    pub false_edges: u64,
    pub declared_edges: u64,
}

impl MetricTally {
    pub fn record(&mut self, estimate: &Adjacency, truth: &Adjacency) -> Result<()> {
        if estimate.p() != truth.p() {
            return Err(Error::DimensionMismatch(format!(
                "estimate has {} regions, truth has {}",
                estimate.p(),
                truth.p()
            )));
        }
        let mut false_edges = 0;
        let mut exact = true;
        for (s, t) in region_pairs(truth.p()) {
            let (e, w) = (estimate.get(s, t), truth.get(s, t));
            exact &= e == w;
            if e && !w {
                false_edges += 1;
            }
        }
        self.replicates += 1;
        self.exact += exact as u64;
        self.with_false_edge += (false_edges > 0) as u64;
        self.false_edges += false_edges;
        self.declared_edges += estimate.edge_count() as u64;
        Ok(())
    }

    pub fn merge(mut self, other: MetricTally) -> MetricTally {
        self.replicates += other.replicates;
        self.exact += other.exact;
        self.with_false_edge += other.with_false_edge;
        self.false_edges += other.false_edges;
        self.declared_edges += other.declared_edges;
        self
    }

    pub fn metrics(&self) -> Result<NetworkMetrics> {
        if self.replicates == 0 {
            return Err(Error::EmptyInput("no replicates to score"));
        }
        let r = self.replicates as f64;
        Ok(NetworkMetrics {
            nettpr: self.exact as f64 / r,
            fwer: self.with_false_edge as f64 / r,
            fdr: if self.declared_edges == 0 {
                0.0
            } else {
                self.false_edges as f64 / self.declared_edges as f64
            },
        })
    }
}

/// NETTPR, FWER and FDR of `estimates` against `truth`.
pub fn network_metrics<A: AsRef<Adjacency>>(estimates: &[A], truth: &Adjacency) -> Result<NetworkMetrics> {
    let mut tally = MetricTally::default();
    for e in estimates {
        tally.record(e.as_ref(), truth)?;
    }
    tally.metrics()
}

/// Keeps an edge iff it appears in at least a `quorum` fraction of the
/// subject networks (boundary inclusive).
pub fn group_consensus_network<A: AsRef<Adjacency>>(networks: &[A], quorum: f64) -> Result<Adjacency> {
    let first = networks
        .first()
        .ok_or(Error::EmptyInput("no subject networks"))?
        .as_ref();
    if !(quorum > 0.0 && quorum <= 1.0) {
        return Err(Error::Domain(format!("quorum {quorum} outside (0, 1]")));
    }
    let p = first.p();
    let m = networks.len();
    let mut counts = vec![0usize; p * p];
    for net in networks {
        let net = net.as_ref();
        if net.p() != p {
            return Err(Error::DimensionMismatch(format!(
                "subject networks have {p} and {} regions",
                net.p()
            )));
        }
        for (s, t) in net.edges() {
            counts[s * p + t] += 1;
        }
    }
    // Small slack so that e.g. 17 of 20 meets a quorum of 0.85 despite rounding.
    let needed = quorum * m as f64 - 1e-9;
    let mut out = Adjacency::empty(p);
    for (s, t) in region_pairs(p) {
        if counts[s * p + t] as f64 >= needed {
            out.set(s, t, true);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dependence::TestMethod;

    fn outcome(pair: (usize, usize), statistic: f64) -> TestOutcome {
        TestOutcome {
            pair,
            statistic,
            p_value: 0.5,
            threshold: 0.0,
            reject: false,
            method: TestMethod::Test1,
            d_st: 4,
            argmax: Some((0, 0)),
        }
    }

    fn all_pairs(p: usize, stat: impl Fn((usize, usize)) -> f64) -> Vec<TestOutcome> {
        region_pairs(p).into_iter().map(|pr| outcome(pr, stat(pr))).collect()
    }

    #[test]
    fn adjacency_basics() {
        let a = Adjacency::from_edges(4, &[(2, 0), (1, 3)]).unwrap();
        assert!(a.get(0, 2) && a.get(2, 0) && a.get(3, 1));
        assert_eq!(a.edges(), vec![(0, 2), (1, 3)]);
        assert_eq!(a.edge_count(), 2);
        assert_eq!(Adjacency::from_grid(&a.grid()).unwrap(), a);
        assert!(Adjacency::from_edges(3, &[(1, 1)]).is_err());
        assert_eq!(Adjacency::complete(5).edge_count(), 10);
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(serde_json::from_str::<Adjacency>(&json).unwrap(), a);
    }

    #[test]
    fn no_dependence_gives_empty_network() {
        let net = identify_network(&all_pairs(6, |_| f64::NEG_INFINITY), 6, 0.05).unwrap();
        assert_eq!(net.adjacency, Adjacency::empty(6));
        assert_eq!(net.outcomes.len(), 15);
    }

    #[test]
    fn two_regions_use_marginal_quantile() {
        let q = crate::null_dist::gumbel_quantile(0.05).unwrap();
        let net = identify_network(&all_pairs(2, |_| q + 1e-9), 2, 0.05).unwrap();
        assert_eq!(net.threshold, q);
        assert!(net.adjacency.get(0, 1));
    }

    #[test]
    fn single_strong_pair_among_ninety() {
        let outs = all_pairs(90, |pr| if pr == (10, 47) { 22.0 } else { 0.0 });
        let net = identify_network(&outs, 90, 0.05).unwrap();
        assert!((net.threshold - 21.386_258_331_239_848).abs() < 1e-9);
        assert_eq!(net.adjacency.edges(), vec![(10, 47)]);
    }

    #[test]
    fn incomplete_or_duplicated_pairs_rejected() {
        let mut outs = all_pairs(4, |_| 0.0);
        outs.pop();
        assert!(matches!(
            identify_network(&outs, 4, 0.05),
            Err(Error::IncompletePairSet(_))
        ));
        outs.push(outcome((0, 1), 1.0));
        assert!(matches!(
            identify_network(&outs, 4, 0.05),
            Err(Error::IncompletePairSet(_))
        ));
        let outs = vec![outcome((1, 0), 0.0)];
        assert!(matches!(
            identify_network(&outs, 2, 0.05),
            Err(Error::IncompletePairSet(_))
        ));
    }

    #[test]
    fn outcomes_are_reordered() {
        let mut outs = all_pairs(4, |(s, t)| (s * 10 + t) as f64);
        outs.reverse();
        let net = identify_network(&outs, 4, 0.05).unwrap();
        let pairs: Vec<_> = net.outcomes.iter().map(|o| o.pair).collect();
        assert_eq!(pairs, region_pairs(4));
    }

    #[test]
    fn metrics_on_perfect_and_empty_truth() {
        let truth = Adjacency::from_edges(5, &[(0, 1), (2, 4)]).unwrap();
        let m = network_metrics(&vec![truth.clone(); 7], &truth).unwrap();
        assert_eq!((m.nettpr, m.fwer, m.fdr), (1.0, 0.0, 0.0));

        let empty = Adjacency::empty(5);
        let m = network_metrics(&vec![truth.clone(); 3], &empty).unwrap();
        assert_eq!((m.nettpr, m.fwer, m.fdr), (0.0, 1.0, 1.0));

        let m = network_metrics(&vec![empty.clone(); 3], &truth).unwrap();
        assert_eq!((m.nettpr, m.fwer, m.fdr), (0.0, 0.0, 0.0));
    }

    #[test]
    fn metrics_match_hand_enumeration() {
        // Truth {(0,1)} over p = 3.
        let truth = Adjacency::from_edges(3, &[(0, 1)]).unwrap();
        let est = [
            Adjacency::from_edges(3, &[(0, 1)]).unwrap(),         // exact
            Adjacency::from_edges(3, &[(0, 1), (1, 2)]).unwrap(), // one false of two
            Adjacency::from_edges(3, &[(0, 2), (1, 2)]).unwrap(), // two false of two
        ];
        let m = network_metrics(&est, &truth).unwrap();
        assert_eq!(m.nettpr, 1.0 / 3.0);
        assert_eq!(m.fwer, 2.0 / 3.0);
        assert_eq!(m.fdr, 3.0 / 5.0);
        assert!(network_metrics(&est, &Adjacency::empty(4)).is_err());
        assert!(network_metrics::<Adjacency>(&[], &truth).is_err());
    }

    #[test]
    fn consensus_boundary_is_inclusive() {
        let on = Adjacency::from_edges(3, &[(0, 2)]).unwrap();
        let off = Adjacency::empty(3);
        let mut nets = vec![on.clone(); 17];
        nets.extend(vec![off.clone(); 3]);
        assert_eq!(group_consensus_network(&nets, 0.85).unwrap(), on);
        nets[0] = off.clone();
        assert_eq!(group_consensus_network(&nets, 0.85).unwrap(), off);
        assert_eq!(group_consensus_network(std::slice::from_ref(&on), 0.85).unwrap(), on);
        assert!(group_consensus_network::<Adjacency>(&[], 0.85).is_err());
        assert!(group_consensus_network(&[on], 0.0).is_err());
    }

    #[test]
    fn consensus_matches_counting_oracle() {
        // Edge (s, t) appears in the first (s + 2t) mod 11 of 10 subjects.
        let p = 5;
        let nets: Vec<Adjacency> = (0..10)
            .map(|k| {
                let e: Vec<_> = region_pairs(p)
                    .into_iter()
                    .filter(|&(s, t)| k < (s + 2 * t) % 11)
                    .collect();
                Adjacency::from_edges(p, &e).unwrap()
            })
            .collect();
        for permille in [100, 300, 500, 850, 1000] {
            let quorum = permille as f64 / 1000.0;
            let c = group_consensus_network(&nets, quorum).unwrap();
            for (s, t) in region_pairs(p) {
                let freq = ((s + 2 * t) % 11).min(10);
                assert_eq!(c.get(s, t), freq * 100 >= permille, "({s},{t}) q={quorum}");
            }
        }
    }
}
