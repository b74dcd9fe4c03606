//! Scenario execution: per-point bound evaluation, measurement label
//! calibration, structural audits, Monte Carlo agreement, and the seeded
//! randomized property sweep (`mode: "fuzz"`).

use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use qcrb_core::audit::{regularity_check, theorem1_audit, theorem2_audit, theorem3_audit};
use qcrb_core::bounds::{
    check_bound, heisenberg_bound, helstrom_bound, k_matrix, lie_bound, right_bound, Bound,
    BoundVerdict, JacobianMatrix, StructureConstants,
};
use qcrb_core::logderiv::{fisher_rld, fisher_sld, rld, sld, symmetrized_cov};
use qcrb_core::matkernel::hermitian_eigen;
use qcrb_core::povm::{error_matrices, mc_error_matrix, ErrorMatrices};
use qcrb_core::states::DiffDirection;
use qcrb_core::{
    CMatrix, DensityOperator, GeneratorSet, ParamKind, ParamPoint, Povm, PovmKind, StateFamily,
    Tolerances,
};

use crate::config::{build, validate, BuiltScenario, PovmSpec, ScenarioConfig};
use crate::matjson::MatrixJson;
use crate::report::{
    complex_to_pairs, AuditRecord, BoundCheckRecord, BoundRecord, ErrorRecord, FisherRecord,
    FuzzPairRecord, FuzzReport, McRecord, Metric, PointJson, PointRecord, ScenarioReport,
    ARTIFACT_VERSION,
};

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Runs a validated scenario to completion. Per-point numeric problems are
/// recorded in the report, not raised; only setup-level failures error.
pub fn run_scenario(cfg: &ScenarioConfig, base_tol: &Tolerances) -> anyhow::Result<ScenarioReport> {
    if cfg.mode == "fuzz" {
        return run_fuzz(cfg, base_tol);
    }
    let built = build(cfg, base_tol)?;
    let mut points = Vec::with_capacity(built.points.len());
    for (index, p) in built.points.iter().enumerate() {
        points.push(run_point(cfg, &built, index, p));
    }
    Ok(ScenarioReport {
        artifact_version: ARTIFACT_VERSION.into(),
        generated_unix_secs: unix_now(),
        scenario: cfg.clone(),
        points,
        fuzz: None,
    })
}

fn point_json(p: &ParamPoint) -> PointJson {
    match p {
        ParamPoint::Real(v) => PointJson {
            real: Some(v.clone()),
            beta: None,
        },
        ParamPoint::Complex { .. } => PointJson {
            real: None,
            beta: Some(complex_to_pairs(
                &p.betas().expect("complex point exposes betas"),
            )),
        },
    }
}

fn error_record(em: &ErrorMatrices) -> ErrorRecord {
    ErrorRecord {
        r: MatrixJson::from_matrix(&em.r),
        q: MatrixJson::from_matrix(&em.q),
        sigma: MatrixJson::from_matrix(&em.sigma),
        reference: complex_to_pairs(&em.reference),
    }
}

fn metric(name: &str, value: f64) -> Metric {
    Metric {
        name: name.into(),
        value,
    }
}

fn verdict_name(v: BoundVerdict) -> String {
    format!("{v:?}")
}

fn trace_re(m: &CMatrix) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

fn run_point(
    cfg: &ScenarioConfig,
    built: &BuiltScenario,
    index: usize,
    p: &ParamPoint,
) -> PointRecord {
    let tol = &built.tol;
    let fam = &built.family;
    let mut rec = PointRecord {
        index,
        point: point_json(p),
        fishers: Vec::new(),
        bounds: Vec::new(),
        raw_error: None,
        calibrated_error: None,
        bound_checks: Vec::new(),
        audits: Vec::new(),
        mc: None,
        errors: Vec::new(),
    };

    let rho = match fam.evaluate(p) {
        Ok(r) => r,
        Err(e) => {
            rec.errors.push(format!("evaluate: {e}"));
            return rec;
        }
    };

    let mut bound_list: Vec<(String, Bound)> = Vec::new();
    let mut sym_cov_cache: Option<CMatrix> = None;
    for b in &cfg.bounds {
        match compute_bound(b, fam, p, &rho, tol, &mut rec.fishers, &mut sym_cov_cache) {
            Ok(bound) => bound_list.push((b.clone(), bound)),
            Err(e) => rec.errors.push(format!("bound {b}: {e}")),
        }
    }
    for (kind, b) in &bound_list {
        rec.bounds.push(BoundRecord {
            kind: kind.clone(),
            matrix: MatrixJson::from_matrix(&b.matrix),
            information_rank: b.information_rank,
            information_full_rank: b.information_full_rank,
        });
    }

    let Some(povm0) = built.povm.as_ref() else {
        return rec;
    };

    let wants_angles = matches!(
        cfg.povm,
        Some(PovmSpec::Phase {
            angle_labels: true,
            ..
        })
    );
    let eff = if wants_angles {
        match angle_relabel(povm0, &rho) {
            Ok(pv) => pv,
            Err(e) => {
                rec.errors.push(format!("phase relabel: {e}"));
                return rec;
            }
        }
    } else {
        povm0.clone()
    };

    let raw_em = match error_matrices(&eff, &rho, None, tol) {
        Ok(em) => em,
        Err(e) => {
            rec.errors.push(format!("error matrices: {e}"));
            return rec;
        }
    };
    rec.raw_error = Some(error_record(&raw_em));

    let mut used_povm = eff.clone();
    let mut used_em = raw_em;
    if cfg.calibrate {
        match calibrate(fam, &eff, p, tol) {
            Ok(cp) => match error_matrices(&cp, &rho, None, tol) {
                Ok(em) => {
                    rec.calibrated_error = Some(error_record(&em));
                    used_povm = cp;
                    used_em = em;
                }
                Err(e) => rec.errors.push(format!("calibrated error matrices: {e}")),
            },
            Err(e) => rec.errors.push(format!("calibration: {e}")),
        }
    }

    // Verdict slack from the discretization as the state actually sees it:
    // probability mass the truncated outcome set fails to capture. The raw
    // operator completeness residual can be dominated by directions the
    // state never populates (e.g. top Fock modes under a bounded-radius
    // quadrature grid) and would make every verdict vacuous.
    let noise_floor = match eff.outcome_probabilities(&rho) {
        Ok(p) => (1.0 - p.iter().sum::<f64>()).abs(),
        Err(_) => eff.diagnostics().completeness_residual,
    };
    for (kind, b) in &bound_list {
        if used_em.r.shape() != b.matrix.shape() {
            rec.errors.push(format!(
                "bound {kind}: error matrix {}x{} incompatible with bound {}x{}",
                used_em.r.nrows(),
                used_em.r.ncols(),
                b.matrix.nrows(),
                b.matrix.ncols()
            ));
            continue;
        }
        match check_bound(&used_em.r, b, noise_floor, tol) {
            Ok(c) => {
                let tb = trace_re(&b.matrix);
                let ratio = if tb.abs() > f64::MIN_POSITIVE {
                    trace_re(&used_em.r) / tb
                } else {
                    0.0
                };
                rec.bound_checks.push(BoundCheckRecord {
                    bound: kind.clone(),
                    verdict: verdict_name(c.verdict),
                    min_eig: c.min_eig,
                    max_abs_gap: c.max_abs_gap,
                    scale: c.scale,
                    noise_floor: c.noise_floor,
                    ratio_trace: ratio,
                });
            }
            Err(e) => rec.errors.push(format!("bound check {kind}: {e}")),
        }
    }

    match fam.form_name() {
        "canonical_real" => {
            rec.audits.push(audit_theorem1(fam, p, &eff, tol));
            rec.audits.push(audit_regularity(fam, p, &eff, tol));
        }
        "canonical_complex" => {
            rec.audits.push(audit_theorem2(fam, p, &eff, tol));
            rec.audits.push(audit_theorem3(fam, p, &eff, tol));
            rec.audits.push(audit_regularity(fam, p, &eff, tol));
        }
        _ => rec.audits.push(audit_regularity(fam, p, &eff, tol)),
    }

    if let Some(mc) = &cfg.mc {
        let seed = mc.seed.wrapping_add(index as u64);
        match mc_error_matrix(&used_povm, &rho, None, mc.samples, seed) {
            Ok(est) => {
                let mut max_se = 0.0f64;
                let mut max_dev = 0.0f64;
                let mut max_dev_se = 0.0f64;
                for r in 0..est.matrix.nrows() {
                    for c in 0..est.matrix.ncols() {
                        let se = est.std_error[(r, c)];
                        let dev = (est.matrix[(r, c)] - used_em.r[(r, c)]).norm();
                        max_se = max_se.max(se);
                        max_dev = max_dev.max(dev);
                        if dev > 0.0 {
                            max_dev_se = max_dev_se.max(dev / se.max(f64::MIN_POSITIVE));
                        }
                    }
                }
                rec.mc = Some(McRecord {
                    samples: est.samples,
                    seed: est.seed,
                    matrix: MatrixJson::from_matrix(&est.matrix),
                    max_std_error: max_se,
                    max_dev_from_exact: max_dev,
                    max_dev_in_std_errors: max_dev_se,
                });
            }
            Err(e) => rec.errors.push(format!("monte carlo: {e}")),
        }
    }

    rec
}

fn compute_bound(
    name: &str,
    fam: &StateFamily,
    p: &ParamPoint,
    rho: &DensityOperator,
    tol: &Tolerances,
    fishers: &mut Vec<FisherRecord>,
    sym_cov_cache: &mut Option<CMatrix>,
) -> anyhow::Result<Bound> {
    let n = fam.arity();
    match name {
        "helstrom" => {
            let set = sld(fam, p, tol)?;
            let g = fisher_sld(rho, &set)?;
            fishers.push(FisherRecord {
                kind: "sld".into(),
                matrix: MatrixJson::from_matrix(&g.matrix),
            });
            let rows = g.matrix.nrows();
            Ok(helstrom_bound(&g, &JacobianMatrix::identity(rows), tol)?)
        }
        "right" => {
            let set = rld(fam, p, tol)?;
            let h = fisher_rld(rho, &set)?;
            fishers.push(FisherRecord {
                kind: "rld".into(),
                matrix: MatrixJson::from_matrix(&h.matrix),
            });
            Ok(right_bound(&h, &JacobianMatrix::identity(n), tol)?)
        }
        "heisenberg" => {
            let s0 = generator_cov(fam, rho, sym_cov_cache, fishers)?;
            Ok(heisenberg_bound(
                &s0,
                fam.hbar(),
                &JacobianMatrix::identity(n),
                tol,
            )?)
        }
        "lie" => {
            let gens = fam
                .generators()
                .ok_or_else(|| anyhow::anyhow!("family exposes no generators"))?;
            let sc = StructureConstants::from_generators(gens.ops(), fam.hbar(), tol)?;
            let ParamPoint::Real(theta) = p else {
                anyhow::bail!("group bound needs real parameters");
            };
            let k = k_matrix(&sc, theta, tol)?;
            fishers.push(FisherRecord {
                kind: "lie_k".into(),
                matrix: MatrixJson::from_matrix(&k),
            });
            let s0 = generator_cov(fam, rho, sym_cov_cache, fishers)?;
            Ok(lie_bound(
                &s0,
                &k,
                fam.hbar(),
                &JacobianMatrix::identity(n),
                tol,
            )?)
        }
        other => anyhow::bail!("unknown bound `{other}`"),
    }
}

fn generator_cov(
    fam: &StateFamily,
    rho: &DensityOperator,
    cache: &mut Option<CMatrix>,
    fishers: &mut Vec<FisherRecord>,
) -> anyhow::Result<CMatrix> {
    if cache.is_none() {
        let gens = fam
            .generators()
            .ok_or_else(|| anyhow::anyhow!("family exposes no generators"))?;
        let s0 = symmetrized_cov(rho, gens.ops())?;
        fishers.push(FisherRecord {
            kind: "sym_cov".into(),
            matrix: MatrixJson::from_matrix(&s0),
        });
        *cache = Some(s0);
    }
    Ok(cache.as_ref().expect("cached").clone())
}

fn wrap_angle(x: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut y = x % TAU;
    if y > PI {
        y -= TAU;
    } else if y <= -PI {
        y += TAU;
    }
    y
}

/// Replaces unit-phasor labels with real angles wrapped around the measured
/// mean direction, making the labels usable as a scalar estimator.
fn angle_relabel(povm: &Povm, rho: &DensityOperator) -> anyhow::Result<Povm> {
    anyhow::ensure!(
        povm.label_arity() == 1,
        "angle relabeling needs scalar phasor labels, found arity {}",
        povm.label_arity()
    );
    let z = povm.mean_labels(rho)?[0];
    anyhow::ensure!(
        z.norm() > 1e-9,
        "mean phasor is {:.3e}; the direction to wrap around is undefined",
        z.norm()
    );
    let center = z.arg();
    let labels = povm
        .labels()
        .iter()
        .map(|row| {
            vec![Complex64::new(
                center + wrap_angle(row[0].arg() - center),
                0.0,
            )]
        })
        .collect();
    Ok(povm.relabel(labels)?)
}

/// Affinely relabels outcomes so the measurement is locally unbiased for the
/// family parameters at `p`: `w_j = p + J^{-1}(λ_j - m(p))` with `J` the
/// measured mean-map Jacobian. Covariances transform exactly under the
/// affine map, so bound comparisons in parameter coordinates become valid.
fn calibrate(
    fam: &StateFamily,
    povm: &Povm,
    p: &ParamPoint,
    tol: &Tolerances,
) -> anyhow::Result<Povm> {
    let n = fam.arity();
    anyhow::ensure!(
        povm.label_arity() == n,
        "calibration needs one label per parameter: label arity {} vs {} parameters",
        povm.label_arity(),
        n
    );
    let map = |pp: &ParamPoint| povm.mean_labels(&fam.evaluate(pp)?);
    let m0 = map(p)?;
    match fam.kind() {
        ParamKind::Real => {
            let dirs: Vec<DiffDirection> = (0..n).map(DiffDirection::Real).collect();
            let j = JacobianMatrix::from_map(map, p, &dirs, tol.derivative_step)?;
            let jr = DMatrix::<f64>::from_fn(n, n, |r, c| j.matrix[(r, c)].re);
            let jinv = jr.try_inverse().ok_or_else(|| {
                anyhow::anyhow!("mean-map Jacobian is singular; labels cannot be calibrated")
            })?;
            let ParamPoint::Real(coords) = p else {
                unreachable!("real family");
            };
            let labels = povm
                .labels()
                .iter()
                .map(|row| {
                    let dv = DVector::<f64>::from_fn(n, |i, _| (row[i] - m0[i]).re);
                    let w = &jinv * dv;
                    (0..n)
                        .map(|i| Complex64::new(coords[i] + w[i], 0.0))
                        .collect()
                })
                .collect();
            Ok(povm.relabel(labels)?)
        }
        ParamKind::Complex => {
            let dirs: Vec<DiffDirection> = (0..n).map(DiffDirection::Beta).collect();
            let j = JacobianMatrix::from_map(map, p, &dirs, tol.derivative_step)?;
            let jinv = j.matrix.clone().try_inverse().ok_or_else(|| {
                anyhow::anyhow!("mean-map Jacobian is singular; labels cannot be calibrated")
            })?;
            let betas = p.betas()?;
            let labels = povm
                .labels()
                .iter()
                .map(|row| {
                    let dv = DVector::<Complex64>::from_fn(n, |i, _| row[i] - m0[i]);
                    let w = &jinv * dv;
                    (0..n).map(|i| betas[i] + w[i]).collect()
                })
                .collect();
            Ok(povm.relabel(labels)?)
        }
    }
}

fn audit_error(name: &str, e: impl std::fmt::Display) -> AuditRecord {
    AuditRecord {
        name: name.into(),
        status: "error".into(),
        verdict: None,
        detail: e.to_string(),
        metrics: Vec::new(),
    }
}

fn audit_theorem1(fam: &StateFamily, p: &ParamPoint, povm: &Povm, tol: &Tolerances) -> AuditRecord {
    match theorem1_audit(fam, p, povm, tol) {
        Ok(r) => AuditRecord {
            name: "theorem1".into(),
            status: "ok".into(),
            verdict: Some(verdict_name(r.check.verdict)),
            detail: "outcome covariance vs symmetric-information bound under the measurement's \
                     own mean map"
                .into(),
            metrics: vec![
                metric("min_eig", r.check.min_eig),
                metric("max_abs_gap", r.check.max_abs_gap),
                metric("bias", r.bias),
                metric("mean_jacobian_residual", r.mean_jacobian_residual),
                metric("log_hessian_residual", r.log_hessian_residual),
                metric(
                    "max_moment_op_residual",
                    r.moment_op_residuals.iter().copied().fold(0.0, f64::max),
                ),
                metric(
                    "generators_commute",
                    if r.generators_commute { 1.0 } else { 0.0 },
                ),
            ],
        },
        Err(e) => audit_error("theorem1", e),
    }
}

fn audit_theorem2(fam: &StateFamily, p: &ParamPoint, povm: &Povm, tol: &Tolerances) -> AuditRecord {
    match theorem2_audit(fam, p, povm, tol) {
        Ok(r) => AuditRecord {
            name: "theorem2".into(),
            status: "ok".into(),
            verdict: Some(verdict_name(r.check.verdict)),
            detail: "outcome covariance vs right-information bound under the measurement's own \
                     mean map"
                .into(),
            metrics: vec![
                metric("min_eig", r.check.min_eig),
                metric("max_abs_gap", r.check.max_abs_gap),
                metric("bias", r.bias),
                metric("h_cov_residual", r.h_cov_residual),
                metric(
                    "max_right_eigen_residual",
                    r.right_eigen.iter().copied().fold(0.0, f64::max),
                ),
                metric("support_ok", if r.support_ok { 1.0 } else { 0.0 }),
            ],
        },
        Err(e) => audit_error("theorem2", e),
    }
}

fn audit_theorem3(fam: &StateFamily, p: &ParamPoint, povm: &Povm, tol: &Tolerances) -> AuditRecord {
    match theorem3_audit(fam, p, povm, tol) {
        Ok(r) => AuditRecord {
            name: "theorem3".into(),
            status: "ok".into(),
            verdict: Some(verdict_name(r.check.verdict)),
            detail: "mean-square error of linearly corrected labels vs inverse origin \
                     information; a violation indicates the Gaussian premise fails (see bias)"
                .into(),
            metrics: vec![
                metric("min_eig", r.check.min_eig),
                metric("max_abs_gap", r.check.max_abs_gap),
                metric("bias", r.bias),
                metric("gaussian_residual", r.gaussian_residual),
                metric("h_constant_residual", r.h_constant_residual),
            ],
        },
        Err(e) => audit_error("theorem3", e),
    }
}

const REGULARITY_GATE: f64 = 1e-3;

fn audit_regularity(
    fam: &StateFamily,
    p: &ParamPoint,
    povm: &Povm,
    tol: &Tolerances,
) -> AuditRecord {
    match regularity_check(fam, p, povm, tol) {
        Ok(r) => {
            let ok = r.symmetry_residual <= REGULARITY_GATE
                && r.analyticity_residual.map_or(true, |a| a <= REGULARITY_GATE);
            let mut metrics = vec![metric("symmetry_residual", r.symmetry_residual)];
            if let Some(a) = r.analyticity_residual {
                metrics.push(metric("analyticity_residual", a));
            }
            metrics.push(metric("scale", r.scale));
            AuditRecord {
                name: "regularity".into(),
                status: "ok".into(),
                verdict: Some(if ok { "ok".into() } else { "irregular".into() }),
                detail: "derivative symmetry (and holomorphy, for complex parameters) of the \
                         inverse-covariance-weighted mean map"
                    .into(),
                metrics,
            }
        }
        Err(e) => audit_error("regularity", e),
    }
}

// ---------------------------------------------------------------------------
// Randomized property sweep
// ---------------------------------------------------------------------------

fn run_fuzz(cfg: &ScenarioConfig, base_tol: &Tolerances) -> anyhow::Result<ScenarioReport> {
    let issues = validate(cfg);
    if !issues.is_empty() {
        anyhow::bail!("invalid config:\n  {}", issues.join("\n  "));
    }
    let tol = match &cfg.tolerances {
        Some(ov) => ov.apply(base_tol),
        None => base_tol.clone(),
    };
    let spec = cfg.fuzz.as_ref().expect("validated");
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let mut records = Vec::with_capacity(spec.pairs);
    for index in 0..spec.pairs {
        records.push(fuzz_pair(index, &mut rng, spec.max_dim, &tol)?);
    }
    let worst_h = records
        .iter()
        .map(|r| r.min_eig_helstrom)
        .fold(f64::INFINITY, f64::min);
    let worst_r = records
        .iter()
        .map(|r| r.min_eig_right)
        .fold(f64::INFINITY, f64::min);
    let violations = records
        .iter()
        .filter(|r| r.min_eig_helstrom < -1e-6 || r.min_eig_right < -1e-6)
        .count();
    Ok(ScenarioReport {
        artifact_version: ARTIFACT_VERSION.into(),
        generated_unix_secs: unix_now(),
        scenario: cfg.clone(),
        points: Vec::new(),
        fuzz: Some(FuzzReport {
            pairs: spec.pairs,
            max_dim: spec.max_dim,
            seed: spec.seed,
            worst_min_eig_helstrom: worst_h,
            worst_min_eig_right: worst_r,
            violations,
            records,
        }),
    })
}

fn randn(rng: &mut ChaCha12Rng) -> f64 {
    let u1: f64 = loop {
        let u = rng.gen::<f64>();
        if u > 1e-300 {
            break u;
        }
    };
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn rand_cmatrix(rng: &mut ChaCha12Rng, rows: usize, cols: usize) -> CMatrix {
    let mut m = CMatrix::zeros(rows, cols);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for r in 0..rows {
        for c in 0..cols {
            m[(r, c)] = Complex64::new(randn(rng) * s, randn(rng) * s);
        }
    }
    m
}

/// Mixture of two random orthonormal bases (each effect `|u⟩⟨u|/2`) with
/// independent complex Gaussian labels — exactly complete by construction.
fn random_povm(rng: &mut ChaCha12Rng, dim: usize, tol: &Tolerances) -> anyhow::Result<Povm> {
    let mut elements = Vec::with_capacity(2 * dim);
    for _ in 0..2 {
        let q = rand_cmatrix(rng, dim, dim).qr().q();
        for k in 0..dim {
            let v = q.column(k).into_owned();
            elements.push(&v * v.adjoint() * Complex64::new(0.5, 0.0));
        }
    }
    let labels = (0..2 * dim)
        .map(|_| vec![Complex64::new(randn(rng), randn(rng))])
        .collect();
    Ok(Povm::new(
        PovmKind::Finite,
        elements,
        vec![1.0; 2 * dim],
        labels,
        tol,
    )?)
}

fn fuzz_pair(
    index: usize,
    rng: &mut ChaCha12Rng,
    max_dim: usize,
    tol: &Tolerances,
) -> anyhow::Result<FuzzPairRecord> {
    let dim = 2 + (rng.gen::<u64>() as usize) % (max_dim - 1);

    let a = rand_cmatrix(rng, dim, dim);
    let mut m = &a * a.adjoint();
    for i in 0..dim {
        m[(i, i)] += Complex64::new(0.1, 0.0);
    }
    let m = (&m + m.adjoint()).unscale(2.0);
    let tr = m.trace().re;
    let rho0 = DensityOperator::new(m.unscale(tr), tol)?;

    let x = rand_cmatrix(rng, dim, dim) * Complex64::new(0.5, 0.0);
    let fam = StateFamily::canonical_complex(rho0, GeneratorSet::new(vec![x])?, tol)?;
    let beta = Complex64::new(
        0.4 * (rng.gen::<f64>() - 0.5),
        0.4 * (rng.gen::<f64>() - 0.5),
    );
    let p = ParamPoint::from_betas(&[beta]);
    let rho = fam.evaluate(&p)?;

    let g = fisher_sld(&rho, &sld(&fam, &p, tol)?)?;
    let bound_h = helstrom_bound(&g, &JacobianMatrix::identity(2), tol)?;
    let h = fisher_rld(&rho, &rld(&fam, &p, tol)?)?;
    let bound_r = right_bound(&h, &JacobianMatrix::identity(1), tol)?;

    let mut resampled = 0u32;
    let (min_eig_helstrom, min_eig_right) = loop {
        let povm = random_povm(rng, dim, tol)?;
        if let Some(pair) = pair_min_eigs(&fam, &povm, &p, &rho, &bound_h, &bound_r, tol)? {
            break pair;
        }
        resampled += 1;
        anyhow::ensure!(
            resampled <= 200,
            "pair {index}: no well-conditioned random measurement in 200 draws"
        );
    };

    Ok(FuzzPairRecord {
        index,
        dim,
        beta: [beta.re, beta.im],
        min_eig_helstrom,
        min_eig_right,
        resampled,
    })
}

/// Calibrates the random measurement for (a) the real coordinate pair and
/// (b) the complex parameter, then returns the smallest eigenvalues of
/// `R - bound` for the symmetric and right bounds. `None` when the mean map
/// is too ill-conditioned to calibrate reliably (finite-difference Jacobian
/// error would not stay below the acceptance slack).
fn pair_min_eigs(
    fam: &StateFamily,
    povm: &Povm,
    p: &ParamPoint,
    rho: &DensityOperator,
    bound_h: &Bound,
    bound_r: &Bound,
    tol: &Tolerances,
) -> anyhow::Result<Option<(f64, f64)>> {
    let map = |pp: &ParamPoint| povm.mean_labels(&fam.evaluate(pp)?);
    let m0 = map(p)?[0];

    let jc = JacobianMatrix::from_map(map, p, &[DiffDirection::Beta(0)], tol.derivative_step)?;
    let jc00 = jc.matrix[(0, 0)];

    let real_map = |pp: &ParamPoint| -> qcrb_core::Result<Vec<Complex64>> {
        let m = povm.mean_labels(&fam.evaluate(pp)?)?;
        Ok(vec![
            Complex64::new(m[0].re, 0.0),
            Complex64::new(m[0].im, 0.0),
        ])
    };
    let jr = JacobianMatrix::from_map(
        real_map,
        p,
        &[DiffDirection::Gamma(0), DiffDirection::Theta(0)],
        tol.derivative_step,
    )?;
    let jrr = Matrix2::<f64>::from_fn(|r, c| jr.matrix[(r, c)].re);
    let sv = jrr.svd(false, false).singular_values;
    let (smax, smin) = (sv[0].max(sv[1]), sv[0].min(sv[1]));
    if jc00.norm() < 1e-2 || smax < 1e-3 || smin < 1e-2 * smax {
        return Ok(None);
    }

    let ParamPoint::Complex { gamma, theta } = p else {
        anyhow::bail!("fuzz families use complex parameters");
    };
    let jr_inv = jrr.try_inverse().expect("conditioning checked");
    let labels_real = povm
        .labels()
        .iter()
        .map(|row| {
            let v = Vector2::new(row[0].re - m0.re, row[0].im - m0.im);
            let w = jr_inv * v;
            vec![
                Complex64::new(gamma[0] + w[0], 0.0),
                Complex64::new(theta[0] + w[1], 0.0),
            ]
        })
        .collect();
    let em_real = error_matrices(&povm.relabel(labels_real)?, rho, None, tol)?;
    let min_eig_helstrom = hermitian_eigen(&(&em_real.r - &bound_h.matrix), tol)?.min_eig();

    let beta0 = p.betas()?[0];
    let labels_c = povm
        .labels()
        .iter()
        .map(|row| vec![beta0 + (row[0] - m0) / jc00])
        .collect();
    let em_c = error_matrices(&povm.relabel(labels_c)?, rho, None, tol)?;
    let min_eig_right = hermitian_eigen(&(&em_c.r - &bound_r.matrix), tol)?.min_eig();

    Ok(Some((min_eig_helstrom, min_eig_right)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_maps_into_half_open_interval() {
        use std::f64::consts::PI;
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.3) - 0.3).abs() < 1e-15);
        for k in -7..=7 {
            let x = 0.77 + (k as f64) * std::f64::consts::TAU;
            assert!((wrap_angle(x) - 0.77).abs() < 1e-9, "k={k}");
        }
    }

    #[test]
    fn fuzz_pairs_satisfy_both_bounds() {
        let cfg: ScenarioConfig = serde_json::from_str(
            r#"{"name":"f","mode":"fuzz","fuzz":{"pairs":8,"max_dim":5,"seed":11}}"#,
        )
        .unwrap();
        let report = run_scenario(&cfg, &Tolerances::default()).unwrap();
        let f = report.fuzz.expect("fuzz report");
        assert_eq!(f.records.len(), 8);
        assert!(f.violations == 0, "worst h {:.3e} r {:.3e}", f.worst_min_eig_helstrom, f.worst_min_eig_right);
        assert!(f.worst_min_eig_helstrom >= -1e-6);
        assert!(f.worst_min_eig_right >= -1e-6);
        // Dimensions stay within the configured range.
        assert!(f.records.iter().all(|r| (2..=5).contains(&r.dim)));
    }

    #[test]
    fn thermal_spectral_point_attains_symmetric_bound() {
        let cfg: ScenarioConfig = serde_json::from_str(
            r#"{
                "name": "t",
                "dim": 12,
                "family": {
                    "form": "canonical_real",
                    "rho0": {"kind": "thermal", "nbar": 0.4},
                    "generators": [{"kind": "fock_n"}]
                },
                "povm": {"kind": "spectral"},
                "points": {"real": [[0.1]]},
                "bounds": ["helstrom"],
                "mc": {"samples": 20000, "seed": 5}
            }"#,
        )
        .unwrap();
        let report = run_scenario(&cfg, &Tolerances::default()).unwrap();
        assert_eq!(report.points.len(), 1);
        let pt = &report.points[0];
        assert!(pt.errors.is_empty(), "{:?}", pt.errors);
        assert_eq!(pt.bound_checks.len(), 1);
        assert_eq!(pt.bound_checks[0].verdict, "Attained");
        assert!((pt.bound_checks[0].ratio_trace - 1.0).abs() < 1e-6);
        let t1 = pt.audits.iter().find(|a| a.name == "theorem1").unwrap();
        assert_eq!(t1.status, "ok");
        assert_eq!(t1.verdict.as_deref(), Some("Attained"));
        let mc = pt.mc.as_ref().expect("mc record");
        assert!(mc.max_dev_in_std_errors < 6.0, "{}", mc.max_dev_in_std_errors);
        // Calibrated covariance equals the inverse information for the
        // spectral measurement of a commuting exponential family.
        let cal = pt.calibrated_error.as_ref().unwrap().r.to_matrix().unwrap();
        let fisher = pt.fishers[0].matrix.to_matrix().unwrap();
        let prod = (cal[(0, 0)] * fisher[(0, 0)]).re;
        assert!((prod - 1.0).abs() < 1e-8, "R*G = {prod}");
    }
}
