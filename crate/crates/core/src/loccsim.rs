//! Finite LOCC protocols as trees of local Kraus measurements.
//!
//! A node's position is its record: the outcome indices on the path from the
//! root. Each internal node holds one party's Kraus operators, child `i`
//! following outcome `i`. Kraus operators may be rectangular, so a party's
//! working dimension can change along a branch.
//!
//! Probabilities are reported per input state: the reach of state `k` at a
//! record `m` is `‖A_m α_k‖² ‖B_m β_k‖²`.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::bases::ProductBasis;
use crate::matkernel::{psd_pinv_sqrt, psd_sqrt, ComplexMatrix, PsdOperator, C64};

/// Frobenius tolerance for `Σ K†K = I`.
pub const COMPLETENESS_TOL: f64 = 1e-10;

/// Tolerance for hitting the stage-I threshold.
pub const STAGE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("no node at record {0:?}")]
    UnknownNode(Vec<usize>),
    #[error("record {0:?} has zero probability for every state")]
    ZeroProbability(Vec<usize>),
    #[error("protocol is invalid: {0}")]
    Invalid(String),
    #[error("protocol dimensions ({0}, {1}) do not match the basis")]
    Dimension(usize, usize),
    #[error("leaf {0:?} has no label and the decision rule needs one")]
    UnlabeledLeaf(Vec<usize>),
    #[error("leaf label {label} at {record:?} is not a state index")]
    BadLabel { record: Vec<usize>, label: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Party {
    Alice,
    Bob,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolNode {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub party: Option<Party>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kraus: Vec<ComplexMatrix>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<ProtocolNode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaf_label: Option<usize>,
    /// Record of the node this one copies in the protocol it was derived from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Vec<usize>>,
}

impl ProtocolNode {
    pub fn leaf(label: Option<usize>) -> Self {
        Self { party: None, kraus: Vec::new(), children: Vec::new(), leaf_label: label, origin: None }
    }

    pub fn measure(party: Party, kraus: Vec<ComplexMatrix>, children: Vec<ProtocolNode>) -> Self {
        Self { party: Some(party), kraus, children, leaf_label: None, origin: None }
    }

    pub fn is_leaf(&self) -> bool {
        self.kraus.is_empty() && self.children.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolTree {
    pub da: usize,
    pub db: usize,
    pub root: ProtocolNode,
}

/// Effective local operators `A_m`, `B_m` of a record.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchOperator {
    pub a: ComplexMatrix,
    pub b: ComplexMatrix,
}

impl BranchOperator {
    pub fn identity(da: usize, db: usize) -> Self {
        Self { a: ComplexMatrix::identity(da), b: ComplexMatrix::identity(db) }
    }

    fn then(&self, party: Party, k: &ComplexMatrix) -> Self {
        match party {
            Party::Alice => Self { a: k * &self.a, b: self.b.clone() },
            Party::Bob => Self { a: self.a.clone(), b: k * &self.b },
        }
    }
}

fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Unnormalized reach `‖A α_k‖² ‖B β_k‖²` of every state.
pub fn reach(s: &ProductBasis, bo: &BranchOperator) -> Vec<f64> {
    s.states().iter().map(|st| norm_sqr(&bo.a.mul_vec(&st.alice)) * norm_sqr(&bo.b.mul_vec(&st.bob))).collect()
}

/// Posterior over states given the record, uniform prior.
pub fn posterior(s: &ProductBasis, bo: &BranchOperator) -> Result<Vec<f64>, SimError> {
    normalized(reach(s, bo)).ok_or(SimError::ZeroProbability(Vec::new()))
}

fn normalized(r: Vec<f64>) -> Option<Vec<f64>> {
    let total: f64 = r.iter().sum();
    (total > 0.0).then(|| r.into_iter().map(|x| x / total).collect())
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub record: Vec<usize>,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub nodes: usize,
    pub leaves: usize,
    pub unlabeled_leaves: usize,
    pub worst_completeness_residual: f64,
    pub violations: Vec<Violation>,
}

impl ProtocolTree {
    pub fn new(da: usize, db: usize, root: ProtocolNode) -> Self {
        Self { da, db, root }
    }

    pub fn node(&self, record: &[usize]) -> Result<&ProtocolNode, SimError> {
        let mut node = &self.root;
        for &i in record {
            node = node.children.get(i).ok_or_else(|| SimError::UnknownNode(record.to_vec()))?;
        }
        Ok(node)
    }

    /// Visits every node in depth-first order with its record and branch operator.
    pub fn walk<F: FnMut(&[usize], &ProtocolNode, &BranchOperator)>(&self, mut f: F) {
        fn go<F: FnMut(&[usize], &ProtocolNode, &BranchOperator)>(
            node: &ProtocolNode,
            record: &mut Vec<usize>,
            bo: &BranchOperator,
            f: &mut F,
        ) {
            f(record, node, bo);
            if let Some(party) = node.party {
                for (i, (k, child)) in node.kraus.iter().zip(&node.children).enumerate() {
                    record.push(i);
                    go(child, record, &bo.then(party, k), f);
                    record.pop();
                }
            }
        }
        go(&self.root, &mut Vec::new(), &BranchOperator::identity(self.da, self.db), &mut f);
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport {
            valid: true,
            nodes: 0,
            leaves: 0,
            unlabeled_leaves: 0,
            worst_completeness_residual: 0.0,
            violations: Vec::new(),
        };
        let mut push = |r: &mut ValidationReport, record: &[usize], message: String| {
            r.valid = false;
            r.violations.push(Violation { record: record.to_vec(), message });
        };
        fn go(
            node: &ProtocolNode,
            record: &mut Vec<usize>,
            dims: (usize, usize),
            r: &mut ValidationReport,
            push: &mut dyn FnMut(&mut ValidationReport, &[usize], String),
        ) {
            r.nodes += 1;
            if node.kraus.is_empty() {
                if !node.children.is_empty() {
                    push(r, record, "children without Kraus operators".into());
                }
                r.leaves += 1;
                if node.leaf_label.is_none() {
                    r.unlabeled_leaves += 1;
                }
                return;
            }
            if node.leaf_label.is_some() {
                push(r, record, "internal node carries a leaf label".into());
            }
            let Some(party) = node.party else {
                push(r, record, "internal node has no acting party".into());
                return;
            };
            if node.kraus.len() != node.children.len() {
                push(r, record, format!("{} Kraus operators but {} children", node.kraus.len(), node.children.len()));
                return;
            }
            let dim = match party {
                Party::Alice => dims.0,
                Party::Bob => dims.1,
            };
            let mut sum = ComplexMatrix::zeros(dim, dim);
            for (i, k) in node.kraus.iter().enumerate() {
                if k.cols() != dim {
                    push(r, record, format!("operator {i} has {} columns, expected {dim}", k.cols()));
                    return;
                }
                sum = &sum + &(&k.adjoint() * k);
            }
            let residual = (&sum - &ComplexMatrix::identity(dim)).frobenius_norm();
            r.worst_completeness_residual = r.worst_completeness_residual.max(residual);
            if residual > COMPLETENESS_TOL {
                push(r, record, format!("completeness residual {residual:e}"));
            }
            for (i, (k, child)) in node.kraus.iter().zip(&node.children).enumerate() {
                let next = match party {
                    Party::Alice => (k.rows(), dims.1),
                    Party::Bob => (dims.0, k.rows()),
                };
                record.push(i);
                go(child, record, next, r, push);
                record.pop();
            }
        }
        go(&self.root, &mut Vec::new(), (self.da, self.db), &mut report, &mut push);
        report
    }

    fn ensure_valid(&self) -> Result<(), SimError> {
        let report = self.validate();
        match report.violations.first() {
            None => Ok(()),
            Some(v) => Err(SimError::Invalid(format!("{:?}: {}", v.record, v.message))),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Ordered products of each party's operators along `record`.
pub fn branch_operator(p: &ProtocolTree, record: &[usize]) -> Result<BranchOperator, SimError> {
    let mut node = &p.root;
    let mut bo = BranchOperator::identity(p.da, p.db);
    for &i in record {
        let (Some(party), Some(k), Some(child)) = (node.party, node.kraus.get(i), node.children.get(i)) else {
            return Err(SimError::UnknownNode(record.to_vec()));
        };
        bo = bo.then(party, k);
        node = child;
    }
    Ok(bo)
}

fn check_dims(p: &ProtocolTree, s: &ProductBasis) -> Result<(), SimError> {
    if (p.da, p.db) != (s.da(), s.db()) {
        return Err(SimError::Dimension(p.da, p.db));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrontierNode {
    pub record: Vec<usize>,
    pub p_max: f64,
    pub p_min: f64,
    /// The branch ended below the threshold.
    pub is_leaf_case: bool,
    /// `p_max` equals the threshold within [`STAGE_TOL`].
    pub exact: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageIFrontier {
    pub threshold: f64,
    pub nodes: Vec<FrontierNode>,
}

impl StageIFrontier {
    /// Every crossing hits the threshold exactly.
    pub fn all_exact(&self) -> bool {
        self.nodes.iter().all(|n| n.is_leaf_case || n.exact)
    }
}

/// Earliest node on each reachable branch whose posterior maximum reaches
/// `1/n + eps`, or the leaf if none does. Zero-probability branches are skipped.
pub fn stage_one_frontier(p: &ProtocolTree, s: &ProductBasis, eps: f64) -> Result<StageIFrontier, SimError> {
    check_dims(p, s)?;
    p.ensure_valid()?;
    let threshold = 1.0 / s.n() as f64 + eps;
    let mut nodes = Vec::new();
    fn go(
        s: &ProductBasis,
        node: &ProtocolNode,
        record: &mut Vec<usize>,
        bo: &BranchOperator,
        threshold: f64,
        out: &mut Vec<FrontierNode>,
    ) {
        let Some(post) = normalized(reach(s, bo)) else { return };
        let p_max = max_of(&post);
        let p_min = post.iter().cloned().fold(f64::INFINITY, f64::min);
        let crossed = p_max >= threshold - STAGE_TOL;
        if crossed || node.is_leaf() {
            out.push(FrontierNode {
                record: record.clone(),
                p_max,
                p_min,
                is_leaf_case: !crossed,
                exact: (p_max - threshold).abs() <= STAGE_TOL,
            });
            return;
        }
        let party = node.party.expect("validated");
        for (i, (k, child)) in node.kraus.iter().zip(&node.children).enumerate() {
            record.push(i);
            go(s, child, record, &bo.then(party, k), threshold, out);
            record.pop();
        }
    }
    go(s, &p.root, &mut Vec::new(), &BranchOperator::identity(p.da, p.db), threshold, &mut nodes);
    Ok(StageIFrontier { threshold, nodes })
}

/// Stamps every node of a copied subtree with its record in the source tree.
fn with_origin(node: &ProtocolNode, record: &mut Vec<usize>) -> ProtocolNode {
    let mut copy = node.clone();
    copy.origin = Some(node.origin.clone().unwrap_or_else(|| record.clone()));
    copy.children = node
        .children
        .iter()
        .enumerate()
        .map(|(i, c)| {
            record.push(i);
            let out = with_origin(c, record);
            record.pop();
            out
        })
        .collect();
    copy
}

/// Smallest `μ ∈ (0, 1]` with `max_k ((1−μ) x_k + μ q_k) = target`, given
/// `max x < target < max q`.
fn crossing_weight(x: &[f64], q: &[f64], target: f64) -> f64 {
    x.iter()
        .zip(q)
        .filter(|(xk, qk)| *qk > *xk && **qk >= target)
        .map(|(xk, qk)| (target - xk) / (qk - xk))
        .fold(1.0, f64::min)
}

/// Rewrites the protocol so that every reachable branch crosses `1/n + eps`
/// exactly while leaving each state's distribution over the original leaves
/// unchanged.
///
/// At the node closest to the root whose child jumps past the threshold, the
/// measurement `{M_i}` is split into a weak first step
/// `F_i = c_i I + t M_i†M_i` (with `Σ c_i = 1 − t`) and a second step
/// `L_{j|i} = √(c_i + t δ_ij) M_j F_i^{+1/2}`. The `c_i` put each jumping
/// outcome exactly on the threshold; outcomes that do not jump get `c_i = 0`.
/// When `F_i` is singular, a projector onto its kernel completes the second
/// step and leads to an unreachable leaf.
pub fn interpolate(p: &ProtocolTree, s: &ProductBasis, eps: f64) -> Result<ProtocolTree, SimError> {
    check_dims(p, s)?;
    p.ensure_valid()?;
    let threshold = 1.0 / s.n() as f64 + eps;

    fn process(
        s: &ProductBasis,
        node: &ProtocolNode,
        record: &mut Vec<usize>,
        bo: &BranchOperator,
        threshold: f64,
    ) -> ProtocolNode {
        let r = reach(s, bo);
        let total: f64 = r.iter().sum();
        let Some(party) = node.party.filter(|_| total > 0.0 && !node.is_leaf()) else {
            return with_origin(node, record);
        };
        let x: Vec<f64> = r.iter().map(|v| v / total).collect();
        if max_of(&x) >= threshold - STAGE_TOL {
            return with_origin(node, record);
        }
        // per outcome: total reach relative to this node and its posterior
        let outcomes: Vec<(f64, Option<Vec<f64>>)> = node
            .kraus
            .iter()
            .map(|k| {
                let rc = reach(s, &bo.then(party, k));
                let sc: f64 = rc.iter().sum();
                (sc / total, normalized(rc))
            })
            .collect();
        let jumps: Vec<Option<f64>> = outcomes
            .iter()
            .map(|(_, q)| match q {
                Some(q) if max_of(q) > threshold + STAGE_TOL => Some(crossing_weight(&x, q, threshold)),
                _ => None,
            })
            .collect();
        if jumps.iter().all(Option::is_none) {
            let mut out = node.clone();
            out.origin = Some(node.origin.clone().unwrap_or_else(|| record.clone()));
            out.children = node
                .kraus
                .iter()
                .zip(&node.children)
                .enumerate()
                .map(|(i, (k, child))| {
                    record.push(i);
                    let c = process(s, child, record, &bo.then(party, k), threshold);
                    record.pop();
                    c
                })
                .collect();
            return out;
        }

        // c_i = t S_i (1 − μ_i)/μ_i for jumping outcomes; Σ c_i = 1 − t fixes t
        let ratios: Vec<f64> = outcomes
            .iter()
            .zip(&jumps)
            .map(|((share, _), mu)| mu.map_or(0.0, |mu| share * (1.0 - mu) / mu))
            .collect();
        let t = 1.0 / (1.0 + ratios.iter().sum::<f64>());
        let c: Vec<f64> = ratios.iter().map(|q| t * q).collect();

        let dim = node.kraus[0].cols();
        let gram: Vec<ComplexMatrix> = node.kraus.iter().map(|k| &k.adjoint() * k).collect();
        let mut first_ops = Vec::with_capacity(node.kraus.len());
        let mut first_children = Vec::with_capacity(node.kraus.len());
        for i in 0..node.kraus.len() {
            let mut fm = gram[i].scale(t);
            for d in 0..dim {
                fm[(d, d)] += C64::new(c[i], 0.0);
            }
            let f = PsdOperator::new(fm.hermitian_part()).expect("sum of PSD terms");
            let root_f = psd_sqrt(&f).into_matrix();
            let pinv = psd_pinv_sqrt(&f);
            let mut second_ops = Vec::new();
            let mut second_children = Vec::new();
            for (j, (mj, child)) in node.kraus.iter().zip(&node.children).enumerate() {
                let lambda = c[i] + if i == j { t } else { 0.0 };
                if lambda == 0.0 {
                    continue;
                }
                second_ops.push(&mj.scale(lambda.sqrt()) * &pinv);
                record.push(j);
                second_children.push(with_origin(child, record));
                record.pop();
            }
            let kernel = &ComplexMatrix::identity(dim) - &(&pinv * &root_f);
            if kernel.frobenius_norm() > 1e-9 {
                second_ops.push(kernel.hermitian_part());
                second_children.push(ProtocolNode::leaf(Some(0)));
            }
            let second = ProtocolNode::measure(party, second_ops, second_children);
            let hits = jumps[i].is_some();
            let bo_i = bo.then(party, &root_f);
            record.push(i);
            let child = if hits {
                second
            } else {
                // not yet at the threshold: keep processing below
                let mut processed = second.clone();
                let mut grand = Vec::with_capacity(second.children.len());
                for (g, (k, gc)) in second.kraus.iter().zip(&second.children).enumerate() {
                    let orig = gc.origin.clone();
                    let mut rec = orig.clone().unwrap_or_else(|| {
                        let mut r = record.clone();
                        r.push(g);
                        r
                    });
                    let mut src = gc.clone();
                    src.origin = orig;
                    grand.push(process(s, &src, &mut rec, &bo_i.then(party, k), threshold));
                }
                processed.children = grand;
                processed
            };
            record.pop();
            first_ops.push(root_f);
            first_children.push(child);
        }
        ProtocolNode::measure(party, first_ops, first_children)
    }

    let root = process(s, &p.root, &mut Vec::new(), &BranchOperator::identity(p.da, p.db), threshold);
    Ok(ProtocolTree::new(p.da, p.db, root))
}

/// How leaves are mapped to guesses.
#[derive(Clone, Debug, PartialEq)]
pub enum Decision {
    /// Most likely state at each leaf, lowest index on ties.
    Map,
    /// The labels stored on the leaves.
    LeafLabels,
    /// Labels by leaf record.
    Explicit(BTreeMap<Vec<usize>, usize>),
}

/// Exact error probability under a uniform prior.
pub fn evaluate_error(p: &ProtocolTree, s: &ProductBasis, decision: &Decision) -> Result<f64, SimError> {
    check_dims(p, s)?;
    p.ensure_valid()?;
    let n = s.n();
    let mut success = 0.0;
    let mut failure: Option<SimError> = None;
    p.walk(|record, node, bo| {
        if !node.is_leaf() || failure.is_some() {
            return;
        }
        let r = reach(s, bo);
        let label = match decision {
            Decision::Map => Some((0..n).fold(0, |best, k| if r[k] > r[best] { k } else { best })),
            Decision::LeafLabels => node.leaf_label,
            Decision::Explicit(map) => map.get(record).copied(),
        };
        match label {
            None if r.iter().all(|&v| v == 0.0) => {}
            None => failure = Some(SimError::UnlabeledLeaf(record.to_vec())),
            Some(k) if k >= n => failure = Some(SimError::BadLabel { record: record.to_vec(), label: k }),
            Some(k) => success += r[k],
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(1.0 - success / n as f64),
    }
}

/// Per state, the probability of each original leaf (keyed by origin record).
pub fn leaf_distributions(p: &ProtocolTree, s: &ProductBasis) -> Result<Vec<BTreeMap<Vec<usize>, f64>>, SimError> {
    check_dims(p, s)?;
    let mut out = vec![BTreeMap::new(); s.n()];
    p.walk(|record, node, bo| {
        if node.is_leaf() {
            let key = node.origin.clone().unwrap_or_else(|| record.to_vec());
            for (k, v) in reach(s, bo).into_iter().enumerate() {
                *out[k].entry(key.clone()).or_insert(0.0) += v;
            }
        }
    });
    Ok(out)
}

pub fn total_variation(p: &BTreeMap<Vec<usize>, f64>, q: &BTreeMap<Vec<usize>, f64>) -> f64 {
    let mut keys: Vec<&Vec<usize>> = p.keys().chain(q.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys.iter().map(|k| (p.get(*k).unwrap_or(&0.0) - q.get(*k).unwrap_or(&0.0)).abs()).sum::<f64>()
}

/// Largest total-variation distance between the leaf distributions of two
/// protocols, over all input states.
pub fn max_distribution_shift(p: &ProtocolTree, q: &ProtocolTree, s: &ProductBasis) -> Result<f64, SimError> {
    let (a, b) = (leaf_distributions(p, s)?, leaf_distributions(q, s)?);
    Ok(a.iter().zip(&b).map(|(x, y)| total_variation(x, y)).fold(0.0, f64::max))
}

/// `Σ_{leaves} A_m†A_m ⊗ B_m†B_m` grouped by label under `decision`.
pub fn povm_elements(p: &ProtocolTree, s: &ProductBasis, decision: &Decision) -> Result<Vec<ComplexMatrix>, SimError> {
    check_dims(p, s)?;
    let dim = p.da * p.db;
    let mut out = vec![ComplexMatrix::zeros(dim, dim); s.n()];
    let mut failure = None;
    p.walk(|record, node, bo| {
        if !node.is_leaf() {
            return;
        }
        let r = reach(s, bo);
        let label = match decision {
            Decision::Map => Some((0..s.n()).fold(0, |best, k| if r[k] > r[best] { k } else { best })),
            Decision::LeafLabels => node.leaf_label,
            Decision::Explicit(map) => map.get(record).copied(),
        };
        match label.filter(|&k| k < s.n()) {
            Some(k) => {
                let e = crate::matkernel::kron(&(&bo.a.adjoint() * &bo.a), &(&bo.b.adjoint() * &bo.b));
                out[k] = &out[k] + &e;
            }
            None => failure = Some(SimError::UnlabeledLeaf(record.to_vec())),
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Rank-one projectors onto the standard basis of `dim`.
pub fn standard_projectors(dim: usize) -> Vec<ComplexMatrix> {
    (0..dim)
        .map(|i| {
            let mut m = ComplexMatrix::zeros(dim, dim);
            m[(i, i)] = C64::new(1.0, 0.0);
            m
        })
        .collect()
}

/// The root is a leaf: no measurement at all.
pub fn trivial_protocol(da: usize, db: usize, label: Option<usize>) -> ProtocolTree {
    ProtocolTree::new(da, db, ProtocolNode::leaf(label))
}

/// One party measures its standard basis and the protocol stops.
pub fn one_round_projective(da: usize, db: usize, party: Party) -> ProtocolTree {
    let dim = if party == Party::Alice { da } else { db };
    let children = (0..dim).map(|_| ProtocolNode::leaf(None)).collect();
    ProtocolTree::new(da, db, ProtocolNode::measure(party, standard_projectors(dim), children))
}

/// Alice then Bob measure their standard bases; leaf `(r, c)` is labelled by
/// `label(r, c)`.
pub fn local_projective(da: usize, db: usize, label: impl Fn(usize, usize) -> Option<usize>) -> ProtocolTree {
    let alice_children = (0..da)
        .map(|r| {
            let leaves = (0..db).map(|c| ProtocolNode::leaf(label(r, c))).collect();
            ProtocolNode::measure(Party::Bob, standard_projectors(db), leaves)
        })
        .collect();
    ProtocolTree::new(da, db, ProtocolNode::measure(Party::Alice, standard_projectors(da), alice_children))
}

/// Standard-basis measurement by both parties, then a guess among the states
/// whose tile contains the observed cell (the lowest index).
pub fn measure_and_guess(s: &ProductBasis) -> ProtocolTree {
    local_projective(s.da(), s.db(), |r, c| s.states().iter().position(|st| st.tile().contains(r, c)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bases::{domino_basis, standard_basis};
    use crate::bounds::{optimal_epsilon, perror_from_eta};
    use crate::matkernel::haar_unitary;
    use crate::measures::{info_gain, MeasurementPair};
    use crate::rng::rng_from_seed;
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    fn random_measurement(dim: usize, outcomes: usize, rng: &mut SeededRng) -> Vec<ComplexMatrix> {
        // blocks of the first `dim` columns of a Haar unitary form a complete set
        let u = haar_unitary(dim * outcomes, rng);
        (0..outcomes).map(|o| ComplexMatrix::from_fn(dim, dim, |r, c| u[(o * dim + r, c)])).collect()
    }

    /// Root: Alice, three outcomes; (0): Bob, two outcomes; (0,1): Alice, two outcomes.
    fn branching_shape(seed: u64) -> ProtocolTree {
        let mut rng = rng_from_seed(seed);
        let deep = ProtocolNode::measure(Party::Alice, random_measurement(3, 2, &mut rng), vec![ProtocolNode::leaf(None); 2]);
        let bob = ProtocolNode::measure(Party::Bob, random_measurement(3, 2, &mut rng), vec![ProtocolNode::leaf(None), deep]);
        let root = ProtocolNode::measure(
            Party::Alice,
            random_measurement(3, 3, &mut rng),
            vec![bob, ProtocolNode::leaf(None), ProtocolNode::leaf(None)],
        );
        ProtocolTree::new(3, 3, root)
    }

    fn random_protocol(seed: u64, depth: usize) -> ProtocolTree {
        fn build(rng: &mut SeededRng, depth: usize, alice_turn: bool) -> ProtocolNode {
            if depth == 0 {
                return ProtocolNode::leaf(None);
            }
            let outcomes = 2 + (rand::Rng::random::<u32>(rng) % 2) as usize;
            let party = if alice_turn { Party::Alice } else { Party::Bob };
            let ops = random_measurement(3, outcomes, rng);
            let children = (0..outcomes).map(|_| build(rng, depth - 1, !alice_turn)).collect();
            ProtocolNode::measure(party, ops, children)
        }
        let mut rng = rng_from_seed(seed);
        ProtocolTree::new(3, 3, build(&mut rng, depth, true))
    }

    #[test]
    fn validation_examples() {
        assert!(one_round_projective(3, 3, Party::Alice).validate().valid);
        let mut p = ComplexMatrix::zeros(3, 3);
        p[(0, 0)] = C64::new(1.0, 0.0);
        let bad = ProtocolTree::new(3, 3, ProtocolNode::measure(Party::Alice, vec![p], vec![ProtocolNode::leaf(None)]));
        let report = bad.validate();
        assert!(!report.valid);
        assert!((report.worst_completeness_residual - 2f64.sqrt()).abs() < 1e-15);
        assert!(report.violations[0].message.contains("completeness"));
        let report = branching_shape(1).validate();
        assert!(report.valid, "{:?}", report.violations);
        assert_eq!((report.nodes, report.leaves), (8, 5));
        assert!(report.worst_completeness_residual < 1e-12);
    }

    #[test]
    fn validation_reports_structure_errors() {
        let mut labelled = one_round_projective(2, 2, Party::Bob);
        labelled.root.leaf_label = Some(0);
        assert!(labelled.validate().violations[0].message.contains("leaf label"));
        let mut missing = one_round_projective(2, 2, Party::Bob);
        missing.root.children.pop();
        assert!(!missing.validate().valid);
        let mut wrong = one_round_projective(2, 3, Party::Bob);
        wrong.root.party = Some(Party::Alice);
        assert!(wrong.validate().violations[0].message.contains("columns"));
    }

    #[test]
    fn branch_operators_follow_the_path() {
        let p = branching_shape(2);
        let root = branch_operator(&p, &[]).unwrap();
        assert_eq!(root, BranchOperator::identity(3, 3));
        let a1 = p.root.kraus[0].clone();
        let b2 = p.root.children[0].kraus[1].clone();
        let bo = branch_operator(&p, &[0, 1]).unwrap();
        assert_eq!(bo.a, a1);
        assert_eq!(bo.b, b2);
        let ak = p.root.children[0].children[1].kraus[1].clone();
        let deep = branch_operator(&p, &[0, 1, 1]).unwrap();
        assert_eq!(deep.a, &ak * &a1);
        assert_eq!(deep.b, b2);
        assert_eq!(branch_operator(&p, &[2, 0]).unwrap_err(), SimError::UnknownNode(vec![2, 0]));
    }

    #[test]
    fn posterior_examples() {
        let s = domino_basis();
        let root = posterior(&s, &BranchOperator::identity(3, 3)).unwrap();
        assert!(root.iter().all(|&p| (p - 1.0 / 9.0).abs() < 1e-15));

        // Alice projects onto |1>, Bob onto |1>
        let p = local_projective(3, 3, |_, _| None);
        let post = posterior(&s, &branch_operator(&p, &[1, 1]).unwrap()).unwrap();
        let supported: Vec<usize> = (0..9).filter(|&k| s.state(k).tile().contains(1, 1)).collect();
        assert_eq!(supported, vec![0]);
        assert_eq!(post[0], 1.0);
        assert!(post[1..].iter().all(|&v| v == 0.0));

        let q = random_protocol(4, 3);
        for rec in [vec![0], vec![1, 0], vec![0, 1, 1]] {
            let bo = branch_operator(&q, &rec).unwrap();
            let post = posterior(&s, &bo).unwrap();
            assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let m = MeasurementPair::new(PsdOperator::from_factor(&bo.a), PsdOperator::from_factor(&bo.b));
            assert!((max_of(&post) - 1.0 / 9.0 - info_gain(&s, &m).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn measure_and_guess_on_domino() {
        let s = domino_basis();
        let p = measure_and_guess(&s);
        let err = evaluate_error(&p, &s, &Decision::LeafLabels).unwrap();
        // enumerate outcomes: one 1x1 tile guessed surely, four dominoes at 1/2
        let oracle = 1.0 - (1.0 + 8.0 * 0.5) / 9.0;
        assert!((err - 4.0 / 9.0).abs() < 1e-12 && (err - oracle).abs() < 1e-12);
        assert!((evaluate_error(&p, &s, &Decision::Map).unwrap() - 4.0 / 9.0).abs() < 1e-12);
        assert!(err >= perror_from_eta(0.125, 9).unwrap().p_error);
    }

    #[test]
    fn local_measurement_discriminates_standard_basis() {
        let s = standard_basis(3, 3);
        let p = measure_and_guess(&s);
        assert_eq!(evaluate_error(&p, &s, &Decision::LeafLabels).unwrap(), 0.0);
        assert_eq!(evaluate_error(&p, &s, &Decision::Map).unwrap(), 0.0);
    }

    #[test]
    fn decision_errors() {
        let s = domino_basis();
        let p = one_round_projective(3, 3, Party::Alice);
        assert!(matches!(evaluate_error(&p, &s, &Decision::LeafLabels), Err(SimError::UnlabeledLeaf(_))));
        let explicit: BTreeMap<Vec<usize>, usize> = [(vec![0], 1), (vec![1], 0), (vec![2], 3)].into();
        let e = evaluate_error(&p, &s, &Decision::Explicit(explicit)).unwrap();
        assert!((e - (1.0 - 3.0 / 9.0)).abs() < 1e-12);
        let t = trivial_protocol(3, 3, Some(0));
        assert!((evaluate_error(&t, &s, &Decision::LeafLabels).unwrap() - 8.0 / 9.0).abs() < 1e-15);
        let bad = trivial_protocol(3, 3, Some(9));
        assert!(matches!(evaluate_error(&bad, &s, &Decision::LeafLabels), Err(SimError::BadLabel { .. })));
    }

    #[test]
    fn frontier_examples() {
        let s = domino_basis();
        let eps = optimal_epsilon(9);
        let f = stage_one_frontier(&trivial_protocol(3, 3, None), &s, eps).unwrap();
        assert_eq!(f.nodes.len(), 1);
        assert!(f.nodes[0].is_leaf_case && f.nodes[0].record.is_empty());

        let f = stage_one_frontier(&local_projective(3, 3, |_, _| None), &s, eps).unwrap();
        assert_eq!(f.nodes.len(), 3);
        for n in &f.nodes {
            assert_eq!(n.record.len(), 1);
            assert!(!n.is_leaf_case && !n.exact);
            assert!((n.p_max - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn one_round_interpolation_hits_threshold() {
        let s = domino_basis();
        let eps = 1.0 / 108.0;
        let p = one_round_projective(3, 3, Party::Alice);
        let q = interpolate(&p, &s, eps).unwrap();
        assert!(q.validate().valid, "{:?}", q.validate().violations);
        assert_eq!(q.root.kraus.len(), 3);
        let f = stage_one_frontier(&q, &s, eps).unwrap();
        assert_eq!(f.nodes.len(), 3);
        for n in &f.nodes {
            assert!((n.p_max - (1.0 / 9.0 + 1.0 / 108.0)).abs() < 1e-9, "{n:?}");
            assert!(n.p_min >= 1.0 / 9.0 - 8.0 * eps - 1e-12);
        }
        assert!(max_distribution_shift(&p, &q, &s).unwrap() < 1e-9);
    }

    #[test]
    fn interpolation_leaves_satisfying_protocols_alone() {
        let s = domino_basis();
        let p = trivial_protocol(3, 3, Some(2));
        let q = interpolate(&p, &s, 0.005).unwrap();
        assert_eq!(q.root.kraus, p.root.kraus);
        assert_eq!(q.root.leaf_label, Some(2));
        // a weak measurement whose outcomes stay below the threshold
        let w = 0.5 + 1e-4;
        let half = |x: f64| ComplexMatrix::from_real_diagonal(&[x.sqrt(), (1.0 - x).sqrt(), 0.5f64.sqrt()]);
        let weak = ProtocolTree::new(
            3,
            3,
            ProtocolNode::measure(Party::Alice, vec![half(w), half(1.0 - w)], vec![ProtocolNode::leaf(None); 2]),
        );
        assert!(weak.validate().valid);
        let q = interpolate(&weak, &s, 0.005).unwrap();
        assert_eq!(q.root.kraus, weak.root.kraus);
        assert_eq!(q.root.children.len(), 2);
    }

    #[test]
    fn interpolation_of_deeper_protocols() {
        let s = domino_basis();
        let eps = optimal_epsilon(9);
        for seed in 0..6 {
            let p = if seed == 0 { measure_and_guess(&s) } else { random_protocol(seed, 3) };
            let q = interpolate(&p, &s, eps).unwrap();
            let report = q.validate();
            assert!(report.valid, "{:?}", report.violations);
            assert!(stage_one_frontier(&q, &s, eps).unwrap().all_exact());
            assert!(max_distribution_shift(&p, &q, &s).unwrap() < 1e-9);
            let e0 = evaluate_error(&p, &s, &Decision::Map).unwrap();
            let e1 = evaluate_error(&q, &s, &Decision::Map).unwrap();
            assert!((e0 - e1).abs() < 1e-9, "{e0} vs {e1}");
            if seed == 0 {
                let l0 = evaluate_error(&p, &s, &Decision::LeafLabels).unwrap();
                let l1 = evaluate_error(&q, &s, &Decision::LeafLabels).unwrap();
                assert!((l0 - l1).abs() < 1e-9);
            }
            let again = interpolate(&q, &s, eps).unwrap();
            assert!(max_distribution_shift(&p, &again, &s).unwrap() < 1e-9);
        }
    }

    #[test]
    fn leaf_operators_resolve_identity() {
        let s = domino_basis();
        let p = random_protocol(9, 3);
        let elements = povm_elements(&p, &s, &Decision::Map).unwrap();
        let mut total = ComplexMatrix::zeros(9, 9);
        for e in &elements {
            assert!(PsdOperator::new(e.clone()).is_ok());
            total = &total + e;
        }
        assert!((&total - &ComplexMatrix::identity(9)).max_abs_entry() < 1e-9);
        let direct = 1.0 - (0..9).map(|k| elements[k].sandwich(&s.state(k).full(), &s.state(k).full()).re).sum::<f64>() / 9.0;
        assert!((direct - evaluate_error(&p, &s, &Decision::Map).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let s = domino_basis();
        let p = interpolate(&branching_shape(5), &s, 0.005).unwrap();
        let text = p.to_json();
        let back = ProtocolTree::from_json(&text).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.to_json(), text);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn reach_is_conserved(seed in any::<u64>()) {
            let s = domino_basis();
            let p = random_protocol(seed, 3);
            let mut bad = 0;
            p.walk(|_, node, bo| {
                if let Some(party) = node.party {
                    let parent = reach(&s, bo);
                    let mut sum = vec![0.0; 9];
                    for k in &node.kraus {
                        for (acc, v) in sum.iter_mut().zip(reach(&s, &bo.then(party, k))) {
                            *acc += v;
                        }
                    }
                    if parent.iter().zip(&sum).any(|(a, b)| (a - b).abs() > 1e-12) {
                        bad += 1;
                    }
                }
            });
            prop_assert_eq!(bad, 0);
        }

        #[test]
        fn simulated_error_respects_the_bound(seed in any::<u64>(), depth in 1usize..4) {
            let s = domino_basis();
            let p = random_protocol(seed, depth);
            let e = evaluate_error(&p, &s, &Decision::Map).unwrap();
            prop_assert!(e >= perror_from_eta(0.125, 9).unwrap().p_error);
        }

        #[test]
        fn interpolation_preserves_statistics(seed in any::<u64>(), eps_scale in 0.05f64..0.95) {
            let s = domino_basis();
            let eps = eps_scale / 72.0;
            let p = random_protocol(seed, 2);
            let q = interpolate(&p, &s, eps).unwrap();
            prop_assert!(q.validate().valid);
            prop_assert!(max_distribution_shift(&p, &q, &s).unwrap() < 1e-9);
            let f = stage_one_frontier(&q, &s, eps).unwrap();
            prop_assert!(f.all_exact());
            for n in f.nodes.iter().filter(|n| n.exact) {
                prop_assert!(n.p_min >= 1.0 / 9.0 - 8.0 * eps - 1e-9);
            }
        }
    }
}
