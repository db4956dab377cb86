use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use nonlocality::bases::{domino_basis, domino_type_basis, rotated_domino_basis, standard_basis, ProductBasis};
use nonlocality::bounds::{certify_basis, domino_report, domino_type_report, optimal_epsilon, rotated_constants, sig12, BoundError};
use nonlocality::estimator::{estimate_eta, upper_bound_construction, EstimatorConfig};
use nonlocality::loccsim::{
    evaluate_error, interpolate, max_distribution_shift, measure_and_guess, one_round_projective, stage_one_frontier, Decision,
    Party, ProtocolTree, StageIFrontier, STAGE_TOL,
};
use nonlocality::matkernel::PsdOperator;
use nonlocality::rng::derive_seed;
use nonlocality::tiling::{analyze, enumerate_domino_tilings, parse_tiling, Tiling, CYCLIC_4X4_LAYOUT, DOMINO_LAYOUT};
use nonlocality::verify::{
    adversarial_rigidity, check_dimbox_rigidity, check_domino_rigidity, check_kkb_conditions, check_pair_of_tiles,
    check_rotated_chain, check_uv_lemma, KkbCandidate, LemmaSuiteResult,
};

use crate::render::Table;
use crate::{Report, Status};

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn parse_dims(text: &str) -> anyhow::Result<(usize, usize)> {
    let (a, b) = text.split_once('x').ok_or_else(|| anyhow!("expected AxB, got `{text}`"))?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

fn load_tiling(path: Option<&Path>, fallback: &str) -> anyhow::Result<Tiling> {
    match path {
        Some(p) => parse_tiling(&read(p)?).with_context(|| format!("invalid tiling in {}", p.display())),
        None => Ok(parse_tiling(fallback)?),
    }
}

/// Basis specs: `domino`, `standard:AxB`, `rotated:t` or `rotated:t1,t2,t3,t4`,
/// `domino-type[:FILE]` (the cyclic 4x4 layout by default), or a JSON file.
pub fn parse_basis(spec: &str) -> anyhow::Result<ProductBasis> {
    let (kind, arg) = match spec.split_once(':') {
        Some((k, a)) => (k, Some(a)),
        None => (spec, None),
    };
    let basis = match (kind, arg) {
        ("domino", None) => domino_basis(),
        ("standard", Some(a)) => {
            let (da, db) = parse_dims(a)?;
            if da == 0 || db == 0 {
                bail!("standard basis needs positive dimensions");
            }
            standard_basis(da, db)
        }
        ("rotated", Some(a)) => {
            let angles: Vec<f64> = a.split(',').map(|t| t.trim().parse::<f64>()).collect::<Result<_, _>>()?;
            let theta = match angles.as_slice() {
                [t] => [*t; 4],
                [a, b, c, d] => [*a, *b, *c, *d],
                _ => bail!("rotated basis takes one or four angles"),
            };
            rotated_domino_basis(theta)?
        }
        ("domino-type", a) => domino_type_basis(&load_tiling(a.map(Path::new), CYCLIC_4X4_LAYOUT)?, None)?,
        _ => {
            let path = Path::new(spec);
            if !path.exists() {
                bail!("unknown basis spec `{spec}`");
            }
            return Ok(ProductBasis::from_json(spec, &read(path)?)?);
        }
    };
    Ok(basis.with_name(spec))
}

fn status(ok: bool) -> Status {
    if ok {
        Status::Ok
    } else {
        Status::Violation
    }
}

#[derive(Args, Debug, Serialize)]
pub struct Table1Args {
    /// Rotation angle of the rotated domino row.
    #[arg(long, default_value_t = PI / 4.0)]
    pub theta: f64,
    /// Tiling-graph diameter of the domino-type row.
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, default_value_t = 4)]
    pub da: usize,
    #[arg(long, default_value_t = 4)]
    pub db: usize,
}

pub fn table1(a: &Table1Args) -> anyhow::Result<Report> {
    let mut domino_type = serde_json::to_value(domino_type_report(a.d, a.da, a.db)?)?;
    domino_type["formula"] = json!("1/(216 D^2 (dA dB)^5)");
    let rows = vec![serde_json::to_value(domino_report())?, domino_type, serde_json::to_value(rotated_constants(a.theta)?)?];
    let table = Table::new(
        &["family", "n", "L", "D", "theta", "c", "eta_lower", "p_error_lower", "epsilon", "c_tight", "p_error_lower_tight", "formula"],
        rows.clone(),
    );
    Ok(Report { body: json!({ "rows": rows }), table, status: Status::Ok })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    All,
    Uv,
    Pair,
    Domino,
    Dimbox,
    Rotated,
    Kkb,
    Adversarial,
}

#[derive(Args, Debug, Serialize)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    pub suite: Suite,
    /// Trials per suite.
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    /// Tiling for the dimension-box suite (cyclic 4x4 layout by default).
    #[arg(long)]
    pub tiling: Option<PathBuf>,
    /// Basis for the pair-of-tiles, adversarial and KKB suites.
    #[arg(long, default_value = "domino")]
    pub basis: String,
    /// Angles for the rotated chain.
    #[arg(long, value_delimiter = ',', default_values_t = [PI / 4.0, PI / 8.0, PI / 12.0])]
    pub thetas: Vec<f64>,
    /// Matrix shapes for the UV suite.
    #[arg(long, value_delimiter = ',', default_values_t = ["1x1".to_string(), "2x2".into(), "2x3".into(), "3x3".into(), "3x4".into(), "4x4".into()])]
    pub uv_dims: Vec<String>,
    /// KKB stabilizer for the analytic candidate.
    #[arg(long, default_value_t = 1e-6)]
    pub kkb_eps: f64,
}

fn suite_row(kind: &str, r: &LemmaSuiteResult) -> Value {
    let params: Vec<String> = r.parameters.iter().map(|(k, v)| format!("{k}={}", sig12(*v))).collect();
    json!({
        "suite": kind,
        "id": format!("{}[{}]", r.lemma_id, params.join(" ")),
        "trials": r.trials,
        "evaluated": r.evaluated,
        "violations": r.violations,
        "worst_margin": r.worst_margin,
        "hypothesis_hit_rate": r.hypothesis_hit_rate,
        "passed": r.passed(),
    })
}

pub fn verify(a: &VerifyArgs, seed: u64) -> anyhow::Result<Report> {
    let want = |s: Suite| a.suite == Suite::All || a.suite == s;
    let mut suites: Vec<(&str, LemmaSuiteResult)> = Vec::new();
    let mut rows = Vec::new();
    let mut body = serde_json::Map::new();
    let mut ok = true;

    if want(Suite::Uv) {
        let dims: Vec<(usize, usize)> = a.uv_dims.iter().map(|d| parse_dims(d)).collect::<anyhow::Result<_>>()?;
        for (k, (m, n)) in dims.into_iter().enumerate() {
            suites.push(("uv", check_uv_lemma(m, n, a.trials, derive_seed(seed, 100 + k as u64))?));
        }
    }
    let basis = if want(Suite::Pair) || want(Suite::Adversarial) || want(Suite::Kkb) { Some(parse_basis(&a.basis)?) } else { None };
    if want(Suite::Pair) {
        let s = basis.as_ref().expect("basis loaded");
        suites.push(("pair", check_pair_of_tiles(s, a.trials, derive_seed(seed, 200))?));
    }
    if want(Suite::Domino) {
        suites.push(("domino", check_domino_rigidity(a.trials, derive_seed(seed, 300))));
    }
    if want(Suite::Dimbox) {
        let t = load_tiling(a.tiling.as_deref(), CYCLIC_4X4_LAYOUT)?;
        suites.push(("dimbox", check_dimbox_rigidity(&t, a.trials, derive_seed(seed, 400))?));
    }
    if want(Suite::Rotated) {
        for (k, &theta) in a.thetas.iter().enumerate() {
            suites.push(("rotated", check_rotated_chain(theta, a.trials, derive_seed(seed, 500 + k as u64))?));
        }
    }
    for (kind, r) in &suites {
        ok &= r.passed();
        rows.push(suite_row(kind, r));
    }
    body.insert("suites".into(), serde_json::to_value(suites.iter().map(|(_, r)| r).collect::<Vec<_>>())?);

    if want(Suite::Adversarial) {
        let s = basis.as_ref().expect("basis loaded");
        let c = certify_basis(s).with_context(|| format!("adversarial search needs a rigidity constant for `{}`", a.basis))?.c;
        let samples = (a.trials / 10).max(100);
        let rep = adversarial_rigidity(s, c, samples, 8, 400, derive_seed(seed, 600));
        ok &= rep.passed();
        rows.push(json!({
            "suite": "adversarial",
            "id": rep.basis_id,
            "trials": rep.evaluations,
            "violations": usize::from(!rep.passed()),
            "worst_margin": rep.min_margin,
            "passed": rep.passed(),
        }));
        body.insert("adversarial".into(), serde_json::to_value(&rep)?);
    }
    if want(Suite::Kkb) {
        let s = basis.as_ref().expect("basis loaded");
        let (da, db) = (s.da(), s.db());
        let identity = KkbCandidate::normalized_for(s, PsdOperator::identity(da), PsdOperator::identity(db))?;
        let construction = upper_bound_construction(s, 0, a.kkb_eps);
        let analytic = KkbCandidate::normalized_for(s, construction.a, construction.b)?;
        let reports = [("identity", identity), ("construction", analytic)]
            .into_iter()
            .map(|(name, cand)| Ok((name, check_kkb_conditions(s, &cand)?)))
            .collect::<anyhow::Result<Vec<_>>>()?;
        for (name, r) in &reports {
            rows.push(json!({
                "suite": "kkb",
                "id": format!("{}:{name}", r.basis_id),
                "worst_margin": r.worst_cross_term,
                "passed": r.all_hold,
                "note": r.note,
            }));
        }
        body.insert(
            "kkb".into(),
            Value::Array(reports.iter().map(|(name, r)| json!({ "candidate": name, "report": r })).collect()),
        );
    }
    body.insert("passed".into(), json!(ok));
    let table = Table::new(
        &["suite", "id", "trials", "evaluated", "violations", "worst_margin", "hypothesis_hit_rate", "passed", "note"],
        rows,
    );
    Ok(Report { body: Value::Object(body), table, status: status(ok) })
}

#[derive(Args, Debug, Serialize)]
pub struct EtaArgs {
    #[arg(long, default_value = "domino")]
    pub basis: String,
    /// Random measurement pairs to sample.
    #[arg(long, default_value_t = 100_000)]
    pub budget: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [1e-4, 1e-5, 1e-6])]
    pub eps_list: Vec<f64>,
    /// Local refinements (one per hundred samples when omitted).
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
}

pub fn eta(a: &EtaArgs, seed: u64) -> anyhow::Result<Report> {
    let s = parse_basis(&a.basis)?;
    let config = EstimatorConfig { restarts: a.restarts, max_iter: a.max_iter, eps_list: a.eps_list.clone() };
    let est = estimate_eta(&s, a.budget, seed, &config)?;
    let row = json!({
        "basis": est.basis_id,
        "samples": est.samples,
        "evaluations": est.evaluations,
        "best_ratio": est.best_ratio,
        "min_evaluated_ratio": est.min_evaluated_ratio,
        "certified_lower": est.certified_lower,
        "certificate_violations": est.certificate_violations,
    });
    let table = Table::new(
        &["basis", "samples", "evaluations", "best_ratio", "min_evaluated_ratio", "certified_lower", "certificate_violations"],
        vec![row],
    );
    let ok = est.certificate_violations == 0;
    Ok(Report { body: serde_json::to_value(&est)?, table, status: status(ok) })
}

#[derive(Args, Debug, Serialize)]
pub struct CertifyArgs {
    #[arg(long, default_value = "domino")]
    pub basis: String,
}

pub fn certify(a: &CertifyArgs) -> anyhow::Result<Report> {
    let s = parse_basis(&a.basis)?;
    let (body, row) = match certify_basis(&s) {
        Ok(r) => {
            let mut row = serde_json::to_value(&r)?;
            row["certified"] = json!(true);
            row["basis"] = json!(s.name());
            (json!({ "basis": s.name(), "certified": true, "report": r }), row)
        }
        Err(BoundError::NoCertificate(reason)) => {
            let row = json!({ "basis": s.name(), "certified": false, "reason": reason });
            (row.clone(), row)
        }
        Err(e) => return Err(e.into()),
    };
    let table = Table::new(&["basis", "certified", "family", "n", "L", "c", "eta_lower", "p_error_lower", "reason"], vec![row]);
    Ok(Report { body, table, status: Status::Ok })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    Domino,
    Cyclic,
}

#[derive(Args, Debug, Serialize)]
pub struct TilingArgs {
    /// Tiling file: one row per line, whitespace-separated tile labels.
    pub file: Option<PathBuf>,
    #[arg(long, value_enum, conflicts_with = "file")]
    pub layout: Option<Layout>,
    /// Enumerate domino tilings of a DAxDB grid instead.
    #[arg(long, conflicts_with_all = ["file", "layout"])]
    pub enumerate: Option<String>,
    /// Keep only irreducible tilings when enumerating.
    #[arg(long, requires = "enumerate")]
    pub irreducible: bool,
}

fn tiling_row(t: &Tiling) -> Value {
    let an = analyze(t);
    json!({
        "da": t.da(),
        "db": t.db(),
        "tiles": t.tiles().len(),
        "irreducible": an.irreducible,
        "diameter": an.diameter.finite(),
        "domino_type": an.domino_type,
        "max_tile_area": an.max_tile_area,
        "layout": t.to_text(),
    })
}

const TILING_COLUMNS: [&str; 8] = ["da", "db", "tiles", "irreducible", "diameter", "domino_type", "max_tile_area", "layout"];

pub fn tiling(a: &TilingArgs) -> anyhow::Result<Report> {
    if let Some(dims) = &a.enumerate {
        let (da, db) = parse_dims(dims)?;
        let tilings: Vec<Tiling> = enumerate_domino_tilings(da, db, a.irreducible)?.collect();
        let rows: Vec<Value> = tilings.par_iter().map(tiling_row).collect();
        let body = json!({ "da": da, "db": db, "irreducible_only": a.irreducible, "count": rows.len(), "tilings": rows });
        return Ok(Report { body, table: Table::new(&TILING_COLUMNS, rows), status: Status::Ok });
    }
    let t = match (&a.file, a.layout) {
        (Some(p), _) => load_tiling(Some(p), "")?,
        (None, Some(Layout::Domino)) => parse_tiling(DOMINO_LAYOUT)?,
        (None, Some(Layout::Cyclic)) | (None, None) => parse_tiling(CYCLIC_4X4_LAYOUT)?,
    };
    let analysis = analyze(&t);
    let body = json!({ "layout": t.to_text(), "analysis": analysis });
    Ok(Report { body, table: Table::new(&TILING_COLUMNS, vec![tiling_row(&t)]), status: Status::Ok })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    /// Both parties measure their standard bases, then guess from the cell.
    MeasureAndGuess,
    OneRoundAlice,
    OneRoundBob,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionRule {
    Map,
    Labels,
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    /// Protocol tree in JSON.
    #[arg(long, conflicts_with = "baseline", required_unless_present = "baseline")]
    pub protocol: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
    #[arg(long, default_value = "domino")]
    pub basis: String,
    /// Stage-I excess over 1/n (the optimal value for the basis size by default).
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, value_enum, default_value_t = DecisionRule::Map)]
    pub decision: DecisionRule,
    /// Write the interpolated protocol here and report its diagnostics.
    #[arg(long)]
    pub interpolate: Option<PathBuf>,
}

fn frontier_summary(f: &StageIFrontier) -> Value {
    let crossings: Vec<_> = f.nodes.iter().filter(|n| !n.is_leaf_case).collect();
    let worst_overshoot = crossings.iter().map(|n| n.p_max - f.threshold).fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))));
    json!({
        "threshold": f.threshold,
        "nodes": f.nodes,
        "crossings": crossings.len(),
        "all_exact": f.all_exact(),
        "worst_overshoot": worst_overshoot,
        "min_p_min": f.nodes.iter().map(|n| n.p_min).fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.min(x)))),
    })
}

pub fn simulate(a: &SimulateArgs) -> anyhow::Result<Report> {
    let s = parse_basis(&a.basis)?;
    let (da, db) = (s.da(), s.db());
    let (p, source) = match (&a.protocol, a.baseline) {
        (Some(path), _) => {
            let p = ProtocolTree::from_json(&read(path)?).with_context(|| format!("malformed protocol in {}", path.display()))?;
            (p, path.display().to_string())
        }
        (None, Some(Baseline::MeasureAndGuess)) => (measure_and_guess(&s), "measure-and-guess".into()),
        (None, Some(Baseline::OneRoundAlice)) => (one_round_projective(da, db, Party::Alice), "one-round-alice".into()),
        (None, Some(Baseline::OneRoundBob)) => (one_round_projective(da, db, Party::Bob), "one-round-bob".into()),
        (None, None) => bail!("either --protocol or --baseline is required"),
    };
    let validation = p.validate();
    if !validation.valid {
        let first = &validation.violations[0];
        bail!("protocol fails validation at {:?}: {}", first.record, first.message);
    }
    let decision = match a.decision {
        DecisionRule::Map => Decision::Map,
        DecisionRule::Labels => Decision::LeafLabels,
    };
    let eps = a.eps.unwrap_or_else(|| optimal_epsilon(s.n()));
    let p_error = evaluate_error(&p, &s, &decision)?;
    let frontier = stage_one_frontier(&p, &s, eps)?;

    let mut row = json!({
        "basis": s.name(),
        "protocol": source,
        "nodes": validation.nodes,
        "leaves": validation.leaves,
        "p_error": p_error,
        "eps": eps,
        "threshold": frontier.threshold,
        "crossings": frontier.nodes.iter().filter(|n| !n.is_leaf_case).count(),
        "all_exact": frontier.all_exact(),
    });
    let mut body = json!({
        "basis": s.name(),
        "protocol": source,
        "validation": validation,
        "p_error": p_error,
        "eps": eps,
        "frontier": frontier_summary(&frontier),
    });
    if let Some(out) = &a.interpolate {
        let q = interpolate(&p, &s, eps)?;
        std::fs::write(out, q.to_json()).with_context(|| format!("cannot write {}", out.display()))?;
        let qf = stage_one_frontier(&q, &s, eps)?;
        let shift = max_distribution_shift(&p, &q, &s)?;
        let q_error = evaluate_error(&q, &s, &decision)?;
        let ok = qf.all_exact() && shift <= STAGE_TOL;
        row["interpolated_p_error"] = json!(q_error);
        row["interpolated_all_exact"] = json!(qf.all_exact());
        row["max_tv_shift"] = json!(shift);
        body["interpolated"] = json!({
            "path": out.display().to_string(),
            "validation": q.validate(),
            "p_error": q_error,
            "frontier": frontier_summary(&qf),
            "max_tv_shift": shift,
            "matches": ok,
        });
    }
    let table = Table::new(
        &[
            "basis",
            "protocol",
            "nodes",
            "leaves",
            "p_error",
            "eps",
            "threshold",
            "crossings",
            "all_exact",
            "interpolated_p_error",
            "interpolated_all_exact",
            "max_tv_shift",
        ],
        vec![row],
    );
    Ok(Report { body, table, status: Status::Ok })
}
