use crate::config::{self, BundleSelect};
use anyhow::Result;
use cocyrot::domination::{domination_report, finest_splitting, Bundle, Verdict};
use cocyrot::path::sample_points;
use cocyrot::perturb::{EllipticSearch, SimpleSpectrum};
use cocyrot::rotation::{cycle_of, ModelockVerdict, RotationEnclosure};
use cocyrot::{BasePoint, Error, InvariantMeasure, Mat, MatrixCocycle, RotationFamilySpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    Inconclusive,
}

/// Everything a command produces; written out by the caller.
pub struct Report {
    pub status: Status,
    pub result: Value,
    /// fixed-column trace
    pub csv: Vec<u8>,
    /// further artifacts as (file suffix, bytes)
    pub extra: Vec<(&'static str, Vec<u8>)>,
}

pub const COMMANDS: [&str; 11] = [
    "rotnum",
    "relrot",
    "dominate",
    "modelock",
    "elliptic",
    "joint-elliptic",
    "simple-spectrum",
    "conjugate",
    "ak-check",
    "svredistribute",
    "equalize",
];

/// Runs `command` on the configuration text and returns the report with the
/// effective seed (the argument overrides the config's; default 0).
pub fn run(command: &str, text: &str, seed: Option<u64>) -> Result<(Report, u64)> {
    macro_rules! go {
        ($cfg:ty, $f:expr) => {{
            let c: $cfg = config::parse(text)?;
            let s = seed.or(c.seed).unwrap_or(0);
            ($f(c, s)?, s)
        }};
    }
    Ok(match command {
        "rotnum" => go!(config::Rotnum, |c, _| rotnum(c)),
        "relrot" => go!(config::Relrot, |c, _| relrot(c)),
        "dominate" => go!(config::Dominate, |c, _| dominate(c)),
        "modelock" => go!(config::Modelock, |c, _| modelock(c)),
        "elliptic" => go!(config::Elliptic, |c, _| elliptic(c)),
        "joint-elliptic" => go!(config::JointElliptic, |c, _| joint_elliptic(c)),
        "simple-spectrum" => go!(config::SimpleSpectrum, |c, _| simple_spectrum(c)),
        "conjugate" => go!(config::Conjugate, |c, _| conjugate(c)),
        "ak-check" => go!(config::AkCheck, |c, _| ak_check(c)),
        "svredistribute" => go!(config::SvRedistribute, svredistribute),
        "equalize" => go!(config::Equalize, |c, _| equalize(c)),
        other => return Err(Error::invalid("command", format!("unknown command {other}")).into()),
    })
}

fn json(v: &impl Serialize) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> cocyrot::Result<()>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    f(&mut out)?;
    Ok(out)
}

fn status(ok: bool) -> Status {
    if ok {
        Status::Ok
    } else {
        Status::Inconclusive
    }
}

fn select_bundle(c: &MatrixCocycle, samples: &[BasePoint], sel: Option<&BundleSelect>) -> Result<Option<Bundle>> {
    let Some(sel) = sel else { return Ok(None) };
    let bundles = finest_splitting(c, samples, sel.n_max)?;
    if sel.index == 0 || sel.index > bundles.len() {
        return Err(Error::invalid("bundle.index", format!("finest splitting has {} bundles (1-based)", bundles.len())).into());
    }
    Ok(Some(bundles[sel.index - 1].clone()))
}

fn samples_or_default(c: &MatrixCocycle, s: Option<Vec<BasePoint>>) -> Vec<BasePoint> {
    s.unwrap_or_else(|| sample_points(c))
}

fn validate_measure(mu: &InvariantMeasure, c: &MatrixCocycle) -> Result<Vec<BasePoint>> {
    mu.validate(&c.base)?;
    Ok(mu.support_points(&c.base))
}

fn enclosure_report(e: RotationEnclosure) -> Result<Report> {
    let csv = csv_bytes(|w| e.write_csv(w))?;
    Ok(Report { status: Status::Ok, result: json(&e)?, csv, extra: Vec::new() })
}

fn rotnum(c: config::Rotnum) -> Result<Report> {
    c.path.validate()?;
    let start = c.path.start_cocycle();
    let support = validate_measure(&c.measure, start)?;
    let bundle = select_bundle(start, &support, c.bundle.as_ref())?;
    enclosure_report(cocyrot::path_rotation_number(&c.path, &c.measure, bundle.as_ref(), &c.options.resolve())?)
}

fn relrot(c: config::Relrot) -> Result<Report> {
    c.a.validate()?;
    c.b.validate()?;
    let support = validate_measure(&c.measure, &c.a)?;
    let bundle = select_bundle(&c.a, &support, c.bundle.as_ref())?;
    enclosure_report(cocyrot::relative_rotation_number(&c.a, &c.b, bundle.as_ref(), &c.measure, &c.options.resolve())?)
}

fn dominate(c: config::Dominate) -> Result<Report> {
    c.cocycle.validate()?;
    let samples = samples_or_default(&c.cocycle, c.samples);
    let r = domination_report(&c.cocycle, &samples, c.n_max, c.margin)?;
    let csv = csv_bytes(|w| r.write_csv(w))?;
    let ok = r.indices.iter().all(|v| v.verdict != Verdict::Inconclusive);
    Ok(Report { status: status(ok), result: json(&r)?, csv, extra: Vec::new() })
}

fn modelock(c: config::Modelock) -> Result<Report> {
    c.cocycle.validate()?;
    let support = validate_measure(&c.measure, &c.cocycle)?;
    let bundle = select_bundle(&c.cocycle, &support, c.bundle.as_ref())?;
    let r = cocyrot::modelock_probe(&c.cocycle, bundle.as_ref(), &c.measure, c.epsilon, c.n_max)?;
    let csv = csv_bytes(|w| r.report.write_csv(w))?;
    Ok(Report { status: status(r.verdict != ModelockVerdict::LockedEvidence), result: json(&r)?, csv, extra: Vec::new() })
}

fn sweep_csv(s: &EllipticSearch) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t_index", "t", "orbit", "discriminant", "det", "theta_lift", "complex"])?;
    for r in &s.log {
        w.write_record([
            r.t_index.to_string(),
            format!("{:e}", r.t),
            r.orbit.clone(),
            format!("{:e}", r.discriminant),
            format!("{:e}", r.det),
            format!("{:e}", r.theta_lift),
            r.complex.to_string(),
        ])?;
    }
    Ok(w.into_inner().map_err(|e| anyhow::anyhow!(e.to_string()))?)
}

fn elliptic(c: config::Elliptic) -> Result<Report> {
    c.cocycle.validate()?;
    let samples = samples_or_default(&c.cocycle, c.samples);
    let bundle = match select_bundle(&c.cocycle, &samples, c.bundle.as_ref())? {
        Some(b) => b,
        None => Bundle::whole(c.cocycle.dim, samples.clone()),
    };
    let s = cocyrot::elliptic_search(&c.cocycle, &bundle, &samples, c.t_range, c.steps)?;
    let csv = sweep_csv(&s)?;
    let log = csv_bytes(|w| s.write_log(w))?;
    Ok(Report { status: status(s.hit.is_some()), result: json(&s)?, csv, extra: vec![("jsonl", log)] })
}

fn joint_elliptic(c: config::JointElliptic) -> Result<Report> {
    c.cocycle.validate()?;
    let support = validate_measure(&c.measure, &c.cocycle)?;
    let samples = c.samples.unwrap_or_else(|| support.clone());
    let all = finest_splitting(&c.cocycle, &samples, c.bundle_n_max)?;
    let mut bundles = Vec::new();
    for (k, &i) in c.bundles.iter().enumerate() {
        if i == 0 || i > all.len() {
            return Err(Error::invalid(format!("bundles[{k}]"), format!("finest splitting has {} bundles (1-based)", all.len())).into());
        }
        bundles.push(all[i - 1].clone());
    }
    let spec = RotationFamilySpec { bundles, depth: c.depth, eta: c.eta, eps_bundle: c.eps_bundle };
    let s = cocyrot::joint_elliptic_search(&c.cocycle, &spec, &samples, &c.measure, c.per_axis, &c.options.resolve())?;
    let csv = csv_bytes(|w| s.theta.write_csv(w))?;
    Ok(Report { status: status(s.succeeded()), result: json(&s)?, csv, extra: Vec::new() })
}

fn spectrum_csv(s: &SimpleSpectrum) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["orbit", "period", "distance", "min_gap"])?;
    for r in &s.log {
        w.write_record([r.orbit.clone(), r.period.to_string(), format!("{:e}", r.distance), format!("{:e}", r.min_gap)])?;
    }
    Ok(w.into_inner().map_err(|e| anyhow::anyhow!(e.to_string()))?)
}

fn simple_spectrum(c: config::SimpleSpectrum) -> Result<Report> {
    c.cocycle.validate()?;
    match cocyrot::simple_spectrum_search(&c.cocycle, c.p_max, c.excursion_budget, c.perturbation_budget, c.eps_split) {
        Ok(s) => Ok(Report { status: Status::Ok, csv: spectrum_csv(&s)?, result: json(&s)?, extra: Vec::new() }),
        Err(Error::BudgetExhausted { best_gap }) => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["orbit", "period", "distance", "min_gap"])?;
            Ok(Report {
                status: Status::Inconclusive,
                result: serde_json::json!({ "budget_exhausted": { "best_gap": best_gap } }),
                csv: w.into_inner().map_err(|e| anyhow::anyhow!(e.to_string()))?,
                extra: Vec::new(),
            })
        }
        Err(e) => Err(e.into()),
    }
}

fn conjugate(c: config::Conjugate) -> Result<Report> {
    c.a.validate()?;
    c.b.validate()?;
    let samples = samples_or_default(&c.a, c.samples);
    let h = cocyrot::conjugate_projective_pair(&c.a, &c.b, &samples, c.knot_count)?;
    let csv = csv_bytes(|w| h.write_csv(w))?;
    Ok(Report { status: status(h.within_tolerance), result: json(&h)?, csv, extra: Vec::new() })
}

fn ak_check(c: config::AkCheck) -> Result<Report> {
    c.path.validate()?;
    let support = validate_measure(&c.measure, c.path.start_cocycle())?;
    let r = cocyrot::ak_consistency_check(&c.path, &c.measure, c.n, &c.options.resolve())?;
    // δ trace from the first cycle of the support
    let zero = Default::default();
    let x = cycle_of(&c.path, &support[0]).swap_remove(0);
    let trace = cocyrot::ak_delta_trace(&c.path, &x, zero, zero, c.n)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["k", "re_delta", "im_delta"])?;
    for (k, d) in trace.iter().enumerate() {
        w.write_record([k.to_string(), format!("{:e}", d.re), format!("{:e}", d.im)])?;
    }
    let csv = w.into_inner().map_err(|e| anyhow::anyhow!(e.to_string()))?;
    Ok(Report { status: status(r.consistent()), result: json(&r)?, csv, extra: Vec::new() })
}

fn matrices(rows: &[Vec<Vec<f64>>]) -> Result<Vec<Mat>> {
    if rows.is_empty() {
        return Err(Error::invalid("matrices", "need at least one matrix").into());
    }
    let d = rows[0].len();
    let mut out = Vec::with_capacity(rows.len());
    for (i, m) in rows.iter().enumerate() {
        if m.len() != d || m.iter().any(|r| r.len() != d) {
            return Err(Error::invalid(format!("matrices[{i}]"), format!("expected {d}x{d}")).into());
        }
        out.push(Mat::from_fn(d, d, |r, c| m[r][c]));
    }
    Ok(out)
}

fn svredistribute(c: config::SvRedistribute, seed: u64) -> Result<Report> {
    let seq = matrices(&c.matrices)?;
    let targets = match c.targets {
        Some(t) => t,
        None => {
            let d = seq[0].nrows();
            let prod = seq.iter().fold(Mat::identity(d, d), |p, a| a * p);
            let mut sig: Vec<f64> = prod.svd(false, false).singular_values.iter().copied().collect();
            sig.sort_by(f64::total_cmp);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z: Vec<f64> = (0..d).map(|_| rng.gen_range(-c.noise..=c.noise)).collect();
            let mean = z.iter().sum::<f64>() / d as f64;
            let mut t: Vec<f64> = sig.iter().zip(&z).map(|(s, z)| s * (z - mean).exp()).collect();
            t.sort_by(f64::total_cmp);
            t
        }
    };
    let r = cocyrot::perturb_to_singular_values(&seq, &targets)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["factor", "distance", "log_distance"])?;
    for (i, (d, l)) in r.distances.iter().zip(&r.log_distances).enumerate() {
        w.write_record([(i + 1).to_string(), format!("{d:e}"), format!("{l:e}")])?;
    }
    let csv = w.into_inner().map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let result = serde_json::json!({ "targets": targets, "redistribution": r });
    Ok(Report { status: Status::Ok, result, csv, extra: Vec::new() })
}

fn equalize(c: config::Equalize) -> Result<Report> {
    let seq = matrices(&c.matrices)?;
    let r = cocyrot::equalize_moduli(&seq)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["i", "modulus_before", "modulus_after"])?;
    for (i, (b, a)) in r.moduli_before.iter().zip(&r.moduli_after).enumerate() {
        w.write_record([(i + 1).to_string(), format!("{b:e}"), format!("{a:e}")])?;
    }
    let csv = w.into_inner().map_err(|e| anyhow::anyhow!(e.to_string()))?;
    Ok(Report { status: Status::Ok, result: json(&r)?, csv, extra: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_named() {
        let err = run("equalize", r#"{"matrices": [[[1.0, 0.0], [0.0, 4.0]]], "matrixes": 1}"#, None).err().unwrap();
        let c = err.downcast_ref::<config::ConfigError>().unwrap();
        assert_eq!(c.field, "matrixes");
    }

    #[test]
    fn nested_type_error_has_path() {
        let err = run("dominate", r#"{"cocycle": {"base": {"kind": "full-shift", "alphabet_size": 2}, "dim": "two"}}"#, None)
            .err()
            .unwrap();
        let c = err.downcast_ref::<config::ConfigError>().unwrap();
        assert_eq!(c.field, "cocycle.dim");
    }

    #[test]
    fn ragged_matrices_rejected() {
        let err = run("equalize", r#"{"matrices": [[[1.0, 0.0], [0.0, 4.0]], [[1.0]]]}"#, None).err().unwrap();
        match err.downcast_ref::<Error>() {
            Some(Error::Invalid { field, .. }) => assert_eq!(field, "matrices[1]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn equalize_diagonal() {
        let (r, _) = run("equalize", r#"{"matrices": [[[1.0, 0.0], [0.0, 4.0]]]}"#, None).unwrap();
        assert_eq!(r.status, Status::Ok);
        assert_eq!(r.result["moduli_after"], serde_json::json!([4.0, 4.0]));
    }

    #[test]
    fn drawn_targets_depend_on_seed_only() {
        let cfg = r#"{"matrices": [[[2.0, 1.0], [0.0, 1.0]], [[1.0, 0.0], [0.5, 3.0]]]}"#;
        let a = run("svredistribute", cfg, Some(7)).unwrap().0.result;
        let b = run("svredistribute", cfg, Some(7)).unwrap().0.result;
        let c = run("svredistribute", cfg, Some(8)).unwrap().0.result;
        assert_eq!(a, b);
        assert_ne!(a["targets"], c["targets"]);
    }
}
