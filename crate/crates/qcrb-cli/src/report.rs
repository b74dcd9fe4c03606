//! Report artifact: structures written by `run`, the CSV projection, and
//! the independent re-verification pass behind `verify-report`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use qcrb_core::matkernel::hermitian_eigen;
use qcrb_core::{CMatrix, Tolerances};

use crate::config::ScenarioConfig;
use crate::matjson::MatrixJson;

pub const ARTIFACT_VERSION: &str = "1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioReport {
    pub artifact_version: String,
    /// Wall-clock time of the run; the only field that differs between
    /// repeated runs of the same scenario.
    pub generated_unix_secs: u64,
    pub scenario: ScenarioConfig,
    pub points: Vec<PointRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fuzz: Option<FuzzReport>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointRecord {
    pub index: usize,
    pub point: PointJson,
    pub fishers: Vec<FisherRecord>,
    pub bounds: Vec<BoundRecord>,
    /// Covariance of the measurement labels as configured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_error: Option<ErrorRecord>,
    /// Covariance after affine label calibration to the parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrated_error: Option<ErrorRecord>,
    pub bound_checks: Vec<BoundCheckRecord>,
    pub audits: Vec<AuditRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McRecord>,
    /// Soft failures: stages that errored without aborting the scenario.
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub real: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FisherRecord {
    /// `sld`, `rld`, `sym_cov`, or `lie_k` (the mixing matrix).
    pub kind: String,
    pub matrix: MatrixJson,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundRecord {
    pub kind: String,
    pub matrix: MatrixJson,
    pub information_rank: usize,
    pub information_full_rank: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorRecord {
    pub r: MatrixJson,
    pub q: MatrixJson,
    pub sigma: MatrixJson,
    pub reference: Vec<[f64; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundCheckRecord {
    pub bound: String,
    pub verdict: String,
    pub min_eig: f64,
    pub max_abs_gap: f64,
    pub scale: f64,
    pub noise_floor: f64,
    /// `tr(R) / tr(B)` — a scalar efficiency summary (1 at attainment).
    pub ratio_trace: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditRecord {
    /// `theorem1`, `theorem2`, `theorem3`, or `regularity`.
    pub name: String,
    /// `ok` when the audit executed; `error` when it could not run.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<String>,
    pub detail: String,
    /// Named diagnostics in a fixed order.
    pub metrics: Vec<Metric>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metric {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McRecord {
    pub samples: usize,
    pub seed: u64,
    pub matrix: MatrixJson,
    /// Largest per-entry standard error.
    pub max_std_error: f64,
    /// Largest entry deviation from the exact matrix.
    pub max_dev_from_exact: f64,
    /// That deviation in units of the entry's standard error.
    pub max_dev_in_std_errors: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuzzReport {
    pub pairs: usize,
    pub max_dim: usize,
    pub seed: u64,
    pub worst_min_eig_helstrom: f64,
    pub worst_min_eig_right: f64,
    pub violations: usize,
    pub records: Vec<FuzzPairRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuzzPairRecord {
    pub index: usize,
    pub dim: usize,
    pub beta: [f64; 2],
    pub min_eig_helstrom: f64,
    pub min_eig_right: f64,
    /// Draws discarded for ill-conditioned calibration before this one.
    pub resampled: u32,
}

pub fn to_json(report: &ScenarioReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serialization");
    s.push('\n');
    s
}

fn csv_f(x: f64) -> String {
    format!("{x:.12e}")
}

/// One row per point per bound comparison; fuzz pairs appear as
/// `pair<i>` rows for the two bounds each.
pub fn to_csv(report: &ScenarioReport) -> String {
    let mut out = String::from("scenario,point,bound,verdict,min_eig,max_abs_gap,ratio_trace\n");
    let name = &report.scenario.name;
    for pt in &report.points {
        for bc in &pt.bound_checks {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                name,
                pt.index,
                bc.bound,
                bc.verdict,
                csv_f(bc.min_eig),
                csv_f(bc.max_abs_gap),
                csv_f(bc.ratio_trace),
            ));
        }
    }
    if let Some(f) = &report.fuzz {
        for rec in &f.records {
            for (bound, me) in [
                ("helstrom", rec.min_eig_helstrom),
                ("right", rec.min_eig_right),
            ] {
                let verdict = if me >= -1e-6 { "Satisfied" } else { "Violated" };
                out.push_str(&format!(
                    "{},pair{},{},{},{},,\n",
                    name,
                    rec.index,
                    bound,
                    verdict,
                    csv_f(me),
                ));
            }
        }
    }
    out
}

fn herm_dev(m: &CMatrix) -> f64 {
    let scale = m.iter().map(|z| z.norm()).fold(0.0f64, f64::max).max(1.0);
    let mut dev = 0.0f64;
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            dev = dev.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    dev / scale
}

struct Verifier {
    tol: Tolerances,
    findings: Vec<String>,
}

impl Verifier {
    fn fail(&mut self, msg: String) {
        self.findings.push(msg);
    }

    fn matrix(&mut self, ctx: &str, mj: &MatrixJson) -> Option<CMatrix> {
        match mj.to_matrix() {
            Ok(m) => Some(m),
            Err(e) => {
                self.fail(format!("{ctx}: {e}"));
                None
            }
        }
    }

    fn hermitian_psd(&mut self, ctx: &str, m: &CMatrix, want_psd: bool) {
        let dev = herm_dev(m);
        if dev > 1e-8 {
            self.fail(format!("{ctx}: not Hermitian (relative deviation {dev:.3e})"));
            return;
        }
        if want_psd {
            let scale = m.iter().map(|z| z.norm()).fold(0.0f64, f64::max).max(1.0);
            match hermitian_eigen(m, &self.tol) {
                Ok(eig) => {
                    let me = eig.min_eig();
                    if me < -1e-8 * scale {
                        self.fail(format!("{ctx}: not PSD (min eigenvalue {me:.3e})"));
                    }
                }
                Err(e) => self.fail(format!("{ctx}: eigendecomposition failed: {e}")),
            }
        }
    }
}

/// Re-derives every internally checkable statement of a report and returns
/// the list of inconsistencies (empty = verified).
pub fn verify_report(text: &str) -> Vec<String> {
    let report: ScenarioReport = match serde_json::from_str(text) {
        Ok(r) => r,
        Err(e) => return vec![format!("report does not parse: {e}")],
    };
    let base = Tolerances::default();
    let tol = match &report.scenario.tolerances {
        Some(ov) => ov.apply(&base),
        None => base,
    };
    let mut v = Verifier {
        tol,
        findings: Vec::new(),
    };

    if report.artifact_version != ARTIFACT_VERSION {
        v.fail(format!(
            "artifact_version: expected {ARTIFACT_VERSION}, found {}",
            report.artifact_version
        ));
    }

    for pt in &report.points {
        let ctx0 = format!("points[{}]", pt.index);
        for f in &pt.fishers {
            let ctx = format!("{ctx0}.fishers[{}]", f.kind);
            if let Some(m) = v.matrix(&ctx, &f.matrix) {
                // The mixing matrix of the group bound is not symmetric.
                if f.kind != "lie_k" {
                    v.hermitian_psd(&ctx, &m, true);
                }
            }
        }
        let mut bound_mats: Vec<(String, CMatrix)> = Vec::new();
        for b in &pt.bounds {
            let ctx = format!("{ctx0}.bounds[{}]", b.kind);
            if let Some(m) = v.matrix(&ctx, &b.matrix) {
                v.hermitian_psd(&ctx, &m, true);
                bound_mats.push((b.kind.clone(), m));
            }
        }
        let mut r_used: Option<CMatrix> = None;
        for (label, er) in [("raw_error", &pt.raw_error), ("calibrated_error", &pt.calibrated_error)]
        {
            if let Some(er) = er {
                let ctx = format!("{ctx0}.{label}");
                let r = v.matrix(&format!("{ctx}.r"), &er.r);
                if let Some(r) = &r {
                    v.hermitian_psd(&format!("{ctx}.r"), r, true);
                }
                if let Some(q) = v.matrix(&format!("{ctx}.q"), &er.q) {
                    v.hermitian_psd(&format!("{ctx}.q"), &q, true);
                }
                if let Some(s) = v.matrix(&format!("{ctx}.sigma"), &er.sigma) {
                    v.hermitian_psd(&format!("{ctx}.sigma"), &s, false);
                }
                if let Some(r) = r {
                    r_used = Some(r);
                }
            }
        }

        for bc in &pt.bound_checks {
            let ctx = format!("{ctx0}.bound_checks[{}]", bc.bound);
            for x in [bc.min_eig, bc.max_abs_gap, bc.scale, bc.noise_floor] {
                if !x.is_finite() {
                    v.fail(format!("{ctx}: non-finite diagnostic"));
                }
            }
            let bound = bound_mats.iter().find(|(k, _)| *k == bc.bound);
            if let (Some(r), Some((_, b))) = (&r_used, bound) {
                if r.shape() == b.shape() {
                    let gap = r - b;
                    match hermitian_eigen(&gap, &v.tol) {
                        Ok(eig) => {
                            let me = eig.min_eig();
                            if (me - bc.min_eig).abs() > 1e-8 * bc.scale.max(1.0) {
                                v.fail(format!(
                                    "{ctx}: stored min_eig {:.6e} but recomputed {:.6e}",
                                    bc.min_eig, me
                                ));
                            }
                        }
                        Err(e) => v.fail(format!("{ctx}: gap eigendecomposition failed: {e}")),
                    }
                } else {
                    v.fail(format!(
                        "{ctx}: error matrix {}x{} incompatible with bound {}x{}",
                        r.nrows(),
                        r.ncols(),
                        b.nrows(),
                        b.ncols()
                    ));
                }
            }
            // Verdict ladder must be reproducible from the stored numbers.
            let attain_tol = (v.tol.attained_rel * bc.scale).max(bc.noise_floor);
            let expect = if bc.max_abs_gap <= attain_tol {
                "Attained"
            } else if bc.min_eig >= -v.tol.psd * bc.scale {
                "Satisfied"
            } else if bc.min_eig >= -10.0 * bc.noise_floor {
                "Inconclusive"
            } else {
                "Violated"
            };
            if bc.verdict != expect {
                v.fail(format!(
                    "{ctx}: verdict `{}` inconsistent with diagnostics (ladder gives `{expect}`)",
                    bc.verdict
                ));
            }
        }

        if let Some(mc) = &pt.mc {
            let ctx = format!("{ctx0}.mc");
            if let Some(m) = v.matrix(&ctx, &mc.matrix) {
                v.hermitian_psd(&ctx, &m, false);
            }
            if mc.samples == 0 {
                v.fail(format!("{ctx}: zero samples"));
            }
        }
    }

    if let Some(f) = &report.fuzz {
        if f.records.len() != f.pairs {
            v.fail(format!(
                "fuzz: {} records for {} pairs",
                f.records.len(),
                f.pairs
            ));
        }
        let mut worst_h = f64::INFINITY;
        let mut worst_r = f64::INFINITY;
        let mut violations = 0usize;
        for rec in &f.records {
            if !rec.min_eig_helstrom.is_finite() || !rec.min_eig_right.is_finite() {
                v.fail(format!("fuzz.records[{}]: non-finite eigenvalue", rec.index));
            }
            worst_h = worst_h.min(rec.min_eig_helstrom);
            worst_r = worst_r.min(rec.min_eig_right);
            if rec.min_eig_helstrom < -1e-6 || rec.min_eig_right < -1e-6 {
                violations += 1;
            }
        }
        if !f.records.is_empty() {
            if (worst_h - f.worst_min_eig_helstrom).abs() > 0.0 {
                v.fail(format!(
                    "fuzz: stored worst_min_eig_helstrom {:.6e} but records give {:.6e}",
                    f.worst_min_eig_helstrom, worst_h
                ));
            }
            if (worst_r - f.worst_min_eig_right).abs() > 0.0 {
                v.fail(format!(
                    "fuzz: stored worst_min_eig_right {:.6e} but records give {:.6e}",
                    f.worst_min_eig_right, worst_r
                ));
            }
        }
        if violations != f.violations {
            v.fail(format!(
                "fuzz: stored {} violations but records contain {violations}",
                f.violations
            ));
        }
    }

    v.findings
}

pub fn complex_to_pairs(v: &[Complex64]) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_and_rows() {
        let report = ScenarioReport {
            artifact_version: ARTIFACT_VERSION.into(),
            generated_unix_secs: 0,
            scenario: serde_json::from_str(
                r#"{"name":"demo","mode":"fuzz","fuzz":{"pairs":1,"max_dim":4,"seed":7}}"#,
            )
            .unwrap(),
            points: vec![],
            fuzz: Some(FuzzReport {
                pairs: 1,
                max_dim: 4,
                seed: 7,
                worst_min_eig_helstrom: 1e-9,
                worst_min_eig_right: 2e-9,
                violations: 0,
                records: vec![FuzzPairRecord {
                    index: 0,
                    dim: 3,
                    beta: [0.1, -0.05],
                    min_eig_helstrom: 1e-9,
                    min_eig_right: 2e-9,
                    resampled: 0,
                }],
            }),
        };
        let csv = to_csv(&report);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "scenario,point,bound,verdict,min_eig,max_abs_gap,ratio_trace");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("demo,pair0,helstrom,Satisfied,"));

        let findings = verify_report(&to_json(&report));
        assert!(findings.is_empty(), "{findings:?}");
    }

    #[test]
    fn verifier_flags_tampered_fuzz_summary() {
        let mut report: ScenarioReport = serde_json::from_str(&to_json(&ScenarioReport {
            artifact_version: ARTIFACT_VERSION.into(),
            generated_unix_secs: 0,
            scenario: serde_json::from_str(
                r#"{"name":"demo","mode":"fuzz","fuzz":{"pairs":1,"max_dim":4,"seed":7}}"#,
            )
            .unwrap(),
            points: vec![],
            fuzz: Some(FuzzReport {
                pairs: 1,
                max_dim: 4,
                seed: 7,
                worst_min_eig_helstrom: 0.0,
                worst_min_eig_right: 0.0,
                violations: 0,
                records: vec![FuzzPairRecord {
                    index: 0,
                    dim: 3,
                    beta: [0.0, 0.0],
                    min_eig_helstrom: 0.0,
                    min_eig_right: 0.0,
                    resampled: 0,
                }],
            }),
        }))
        .unwrap();
        report.fuzz.as_mut().unwrap().worst_min_eig_right = -1.0;
        let findings = verify_report(&to_json(&report));
        assert!(
            findings.iter().any(|f| f.contains("worst_min_eig_right")),
            "{findings:?}"
        );
    }
}
