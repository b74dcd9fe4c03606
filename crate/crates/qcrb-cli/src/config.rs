//! Scenario configuration: JSON schema, validation diagnostics, and
//! construction of the core objects a scenario needs.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use qcrb_core::states::{coherent_state, fock_ops, pure_fock, thermal_state};
use qcrb_core::{
    DensityOperator, GeneratorSet, ParamPoint, Povm, PovmKind, StateFamily, Tolerances,
};

use crate::matjson::{vec_from_json, MatrixJson};

fn default_hbar() -> f64 {
    1.0
}

fn default_mode() -> String {
    "standard".into()
}

fn default_true() -> bool {
    true
}

fn default_scale() -> f64 {
    1.0
}

/// One scenario: a family, an optional measurement, a parameter grid, and
/// the bounds to evaluate. `mode: "fuzz"` replaces all of that with a
/// seeded random property sweep described by `fuzz`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default)]
    pub dim: usize,
    #[serde(default = "default_hbar")]
    pub hbar: f64,
    #[serde(default)]
    pub family: Option<FamilySpec>,
    #[serde(default)]
    pub povm: Option<PovmSpec>,
    #[serde(default)]
    pub points: Option<PointsSpec>,
    #[serde(default)]
    pub bounds: Vec<String>,
    /// Affinely recalibrate measurement labels at each grid point so the
    /// measurement is locally unbiased for the parameters before comparing
    /// against the bounds. Disable to compare raw labels as-is.
    #[serde(default = "default_true")]
    pub calibrate: bool,
    #[serde(default)]
    pub mc: Option<McSpec>,
    #[serde(default)]
    pub fuzz: Option<FuzzSpec>,
    #[serde(default)]
    pub tolerances: Option<TolOverrides>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    /// `canonical_real`, `canonical_complex`, or `unitary_shift`.
    pub form: String,
    pub rho0: Rho0Spec,
    pub generators: Vec<GeneratorSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Rho0Spec {
    Vacuum,
    Coherent { alpha: [f64; 2] },
    Thermal { nbar: f64 },
    Explicit { matrix: MatrixJson },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    FockA,
    FockN,
    Pauli {
        axis: String,
        #[serde(default = "default_scale")]
        scale: f64,
    },
    Explicit {
        matrix: MatrixJson,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PovmSpec {
    /// Joint spectral measurement of the family generators.
    Spectral,
    Heterodyne {
        radius: f64,
        grid: usize,
        #[serde(default)]
        completeness_tol: Option<f64>,
    },
    Phase {
        bins: usize,
        /// Replace the unit-phasor labels with angles wrapped around the
        /// measured mean direction at each grid point.
        #[serde(default = "default_true")]
        angle_labels: bool,
    },
    Explicit {
        effects: Vec<MatrixJson>,
        weights: Vec<f64>,
        labels: Vec<Vec<[f64; 2]>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointsSpec {
    /// Real-parameter grid points (for `canonical_real` / `unitary_shift`).
    #[serde(default)]
    pub real: Option<Vec<Vec<f64>>>,
    /// Complex-parameter grid points as `[re, im]` per parameter (for
    /// `canonical_complex`).
    #[serde(default)]
    pub beta: Option<Vec<Vec<[f64; 2]>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSpec {
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuzzSpec {
    pub pairs: usize,
    pub max_dim: usize,
    pub seed: u64,
}

/// Per-field overrides of the numerical tolerances.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolOverrides {
    #[serde(default)]
    pub hermiticity: Option<f64>,
    #[serde(default)]
    pub lyapunov_floor_rel: Option<f64>,
    #[serde(default)]
    pub ald_gap_floor_rel: Option<f64>,
    #[serde(default)]
    pub psd: Option<f64>,
    #[serde(default)]
    pub attained_rel: Option<f64>,
    #[serde(default)]
    pub residual: Option<f64>,
    #[serde(default)]
    pub zero_mean: Option<f64>,
    #[serde(default)]
    pub derivative_step: Option<f64>,
    #[serde(default)]
    pub truncation_tail: Option<f64>,
    #[serde(default)]
    pub povm_completeness_finite: Option<f64>,
    #[serde(default)]
    pub povm_completeness_discretized: Option<f64>,
    #[serde(default)]
    pub pinv_rel: Option<f64>,
    #[serde(default)]
    pub unbiasedness: Option<f64>,
}

impl TolOverrides {
    pub fn apply(&self, base: &Tolerances) -> Tolerances {
        let mut t = base.clone();
        macro_rules! ov {
            ($field:ident) => {
                if let Some(v) = self.$field {
                    t.$field = v;
                }
            };
        }
        ov!(hermiticity);
        ov!(lyapunov_floor_rel);
        ov!(ald_gap_floor_rel);
        ov!(psd);
        ov!(attained_rel);
        ov!(residual);
        ov!(zero_mean);
        ov!(derivative_step);
        ov!(truncation_tail);
        ov!(povm_completeness_finite);
        ov!(povm_completeness_discretized);
        ov!(pinv_rel);
        ov!(unbiasedness);
        t
    }
}

pub const BOUND_NAMES: [&str; 4] = ["helstrom", "right", "heisenberg", "lie"];

fn hermiticity_deviation(m: &DMatrix<Complex64>) -> f64 {
    let scale = m.iter().map(|z| z.norm()).fold(0.0f64, f64::max).max(1.0);
    let mut dev = 0.0f64;
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            dev = dev.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    dev / scale
}

/// Checks every config invariant without executing anything; returns one
/// message per violated field.
pub fn validate(cfg: &ScenarioConfig) -> Vec<String> {
    let mut issues = Vec::new();
    let mut fail = |msg: String| issues.push(msg);

    if cfg.name.trim().is_empty() {
        fail("name: must be non-empty".into());
    }
    match cfg.mode.as_str() {
        "standard" | "fuzz" => {}
        other => fail(format!("mode: unknown mode `{other}` (standard | fuzz)")),
    }
    if cfg.mode == "fuzz" {
        match &cfg.fuzz {
            None => fail("fuzz: required when mode is `fuzz`".into()),
            Some(f) => {
                if f.pairs == 0 {
                    fail("fuzz.pairs: must be >= 1".into());
                }
                if !(2..=8).contains(&f.max_dim) {
                    fail("fuzz.max_dim: must be in 2..=8".into());
                }
            }
        }
        if cfg.family.is_some() || cfg.povm.is_some() || cfg.points.is_some() {
            fail("family/povm/points: ignored in fuzz mode; remove them".into());
        }
        return issues;
    }

    if cfg.dim < 2 {
        fail(format!("dim: dim ≥ 2 required, got {}", cfg.dim));
    }
    if !(cfg.hbar.is_finite() && cfg.hbar > 0.0) {
        fail(format!("hbar: must be positive and finite, got {}", cfg.hbar));
    }

    let family = match &cfg.family {
        None => {
            fail("family: required in standard mode".into());
            return issues;
        }
        Some(f) => f,
    };
    let form_ok = matches!(
        family.form.as_str(),
        "canonical_real" | "canonical_complex" | "unitary_shift"
    );
    if !form_ok {
        fail(format!(
            "family.form: unknown form `{}` (canonical_real | canonical_complex | unitary_shift)",
            family.form
        ));
    }
    let real_kind = family.form != "canonical_complex";

    match &family.rho0 {
        Rho0Spec::Thermal { nbar } => {
            if !(nbar.is_finite() && *nbar >= 0.0) {
                fail(format!("family.rho0.nbar: must be >= 0, got {nbar}"));
            }
        }
        Rho0Spec::Coherent { alpha } => {
            if !alpha[0].is_finite() || !alpha[1].is_finite() {
                fail("family.rho0.alpha: entries must be finite".into());
            }
        }
        Rho0Spec::Explicit { matrix } => match matrix.to_matrix() {
            Err(e) => fail(format!("family.rho0.matrix: {e}")),
            Ok(m) => {
                if m.nrows() != cfg.dim || m.ncols() != cfg.dim {
                    fail(format!(
                        "family.rho0.matrix: shape {}x{} does not match dim {}",
                        m.nrows(),
                        m.ncols(),
                        cfg.dim
                    ));
                } else {
                    let dev = hermiticity_deviation(&m);
                    if dev > 1e-10 {
                        fail(format!(
                            "family.rho0.matrix: not Hermitian (relative deviation {dev:.3e})"
                        ));
                    }
                }
            }
        },
        Rho0Spec::Vacuum => {}
    }

    if family.generators.is_empty() {
        fail("family.generators: at least one generator required".into());
    }
    for (i, g) in family.generators.iter().enumerate() {
        match g {
            GeneratorSpec::Pauli { axis, scale } => {
                if cfg.dim != 2 {
                    fail(format!(
                        "family.generators[{i}]: pauli generators need dim = 2, got {}",
                        cfg.dim
                    ));
                }
                if !matches!(axis.as_str(), "x" | "y" | "z") {
                    fail(format!(
                        "family.generators[{i}].axis: unknown axis `{axis}` (x | y | z)"
                    ));
                }
                if !scale.is_finite() {
                    fail(format!("family.generators[{i}].scale: must be finite"));
                }
            }
            GeneratorSpec::Explicit { matrix } => match matrix.to_matrix() {
                Err(e) => fail(format!("family.generators[{i}].matrix: {e}")),
                Ok(m) => {
                    if m.nrows() != cfg.dim || m.ncols() != cfg.dim {
                        fail(format!(
                            "family.generators[{i}].matrix: shape {}x{} does not match dim {}",
                            m.nrows(),
                            m.ncols(),
                            cfg.dim
                        ));
                    } else if real_kind {
                        let dev = hermiticity_deviation(&m);
                        if dev > 1e-10 {
                            fail(format!(
                                "family.generators[{i}].matrix: real-parameter forms need \
                                 Hermitian generators (relative deviation {dev:.3e})"
                            ));
                        }
                    }
                }
            },
            GeneratorSpec::FockA | GeneratorSpec::FockN => {}
        }
        if real_kind && matches!(g, GeneratorSpec::FockA) {
            fail(format!(
                "family.generators[{i}]: fock_a is not Hermitian; real-parameter forms need \
                 Hermitian generators"
            ));
        }
    }

    let arity = family.generators.len();
    match &cfg.points {
        None => fail("points: required in standard mode".into()),
        Some(pts) => match (&pts.real, &pts.beta, real_kind) {
            (Some(_), Some(_), _) => {
                fail("points: give exactly one of `real` or `beta`, not both".into())
            }
            (None, None, _) => fail("points: give one of `real` or `beta`".into()),
            (Some(rp), None, true) => {
                if rp.is_empty() {
                    fail("points.real: must contain at least one point".into());
                }
                for (i, p) in rp.iter().enumerate() {
                    if p.len() != arity {
                        fail(format!(
                            "points.real[{i}]: has {} coordinates for {arity} parameters",
                            p.len()
                        ));
                    }
                    if p.iter().any(|x| !x.is_finite()) {
                        fail(format!("points.real[{i}]: coordinates must be finite"));
                    }
                }
            }
            (None, Some(bp), false) => {
                if bp.is_empty() {
                    fail("points.beta: must contain at least one point".into());
                }
                for (i, p) in bp.iter().enumerate() {
                    if p.len() != arity {
                        fail(format!(
                            "points.beta[{i}]: has {} coordinates for {arity} parameters",
                            p.len()
                        ));
                    }
                    if p.iter().any(|x| !x[0].is_finite() || !x[1].is_finite()) {
                        fail(format!("points.beta[{i}]: coordinates must be finite"));
                    }
                }
            }
            (Some(_), None, false) => {
                fail("points.real: complex-parameter family takes `beta` points".into())
            }
            (None, Some(_), true) => {
                fail("points.beta: real-parameter family takes `real` points".into())
            }
        },
    }

    if cfg.bounds.is_empty() {
        fail("bounds: request at least one bound".into());
    }
    for b in &cfg.bounds {
        if !BOUND_NAMES.contains(&b.as_str()) {
            fail(format!(
                "bounds: unknown bound `{b}` ({})",
                BOUND_NAMES.join(" | ")
            ));
        }
    }
    if cfg.bounds.iter().any(|b| b == "right") && real_kind {
        fail("bounds: `right` needs a canonical_complex family".into());
    }
    if cfg.bounds.iter().any(|b| b == "helstrom") && !real_kind {
        fail(
            "bounds: `helstrom` scenario checks need a real-parameter family \
             (canonical_real | unitary_shift)"
                .into(),
        );
    }
    if cfg
        .bounds
        .iter()
        .any(|b| b == "heisenberg" || b == "lie")
        && family.form != "unitary_shift"
    {
        fail("bounds: `heisenberg`/`lie` need a unitary_shift family".into());
    }

    match &cfg.povm {
        None => {
            if cfg.mc.is_some() {
                fail("mc: sampling needs a povm".into());
            }
        }
        Some(PovmSpec::Spectral) => {
            if !real_kind {
                fail(
                    "povm: spectral measurement needs Hermitian (real-form) generators"
                        .into(),
                );
            }
        }
        Some(PovmSpec::Heterodyne {
            radius,
            grid,
            completeness_tol,
        }) => {
            if !(radius.is_finite() && *radius > 0.0) {
                fail(format!("povm.radius: must be positive, got {radius}"));
            }
            if *grid < 2 {
                fail(format!("povm.grid: must be >= 2, got {grid}"));
            }
            if let Some(ct) = completeness_tol {
                if !(ct.is_finite() && *ct > 0.0) {
                    fail(format!("povm.completeness_tol: must be positive, got {ct}"));
                }
            }
        }
        Some(PovmSpec::Phase { bins, .. }) => {
            if *bins < 4 * cfg.dim {
                fail(format!(
                    "povm.bins: phase measurement needs bins >= 4*dim = {}, got {bins}",
                    4 * cfg.dim
                ));
            }
        }
        Some(PovmSpec::Explicit {
            effects,
            weights,
            labels,
        }) => {
            if effects.is_empty() {
                fail("povm.effects: must be non-empty".into());
            }
            if weights.len() != effects.len() || labels.len() != effects.len() {
                fail(format!(
                    "povm: {} effects, {} weights, {} label rows — counts must match",
                    effects.len(),
                    weights.len(),
                    labels.len()
                ));
            }
            for (j, e) in effects.iter().enumerate() {
                match e.to_matrix() {
                    Err(err) => fail(format!("povm.effects[{j}]: {err}")),
                    Ok(m) => {
                        if m.nrows() != cfg.dim || m.ncols() != cfg.dim {
                            fail(format!(
                                "povm.effects[{j}]: shape {}x{} does not match dim {}",
                                m.nrows(),
                                m.ncols(),
                                cfg.dim
                            ));
                        } else {
                            let dev = hermiticity_deviation(&m);
                            if dev > 1e-10 {
                                fail(format!(
                                    "povm.effects[{j}]: not Hermitian (relative deviation {dev:.3e})"
                                ));
                            }
                        }
                    }
                }
            }
        }
    }

    if let Some(mc) = &cfg.mc {
        if mc.samples == 0 {
            fail("mc.samples: must be >= 1".into());
        }
    }
    if cfg.fuzz.is_some() {
        fail("fuzz: only allowed with mode `fuzz`".into());
    }
    issues
}

/// The core objects a standard scenario executes on.
pub struct BuiltScenario {
    pub family: StateFamily,
    pub povm: Option<Povm>,
    pub points: Vec<ParamPoint>,
    pub tol: Tolerances,
}

fn pauli(axis: &str, scale: f64) -> DMatrix<Complex64> {
    let z = Complex64::new;
    let entries = match axis {
        "x" => [z(0.0, 0.0), z(1.0, 0.0), z(1.0, 0.0), z(0.0, 0.0)],
        "y" => [z(0.0, 0.0), z(0.0, -1.0), z(0.0, 1.0), z(0.0, 0.0)],
        _ => [z(1.0, 0.0), z(0.0, 0.0), z(0.0, 0.0), z(-1.0, 0.0)],
    };
    DMatrix::from_row_slice(2, 2, &entries).map(|e| e * scale)
}

/// Builds the family, measurement, and grid from a validated config.
pub fn build(cfg: &ScenarioConfig, tol: &Tolerances) -> anyhow::Result<BuiltScenario> {
    let issues = validate(cfg);
    if !issues.is_empty() {
        anyhow::bail!("invalid config:\n  {}", issues.join("\n  "));
    }
    let tol = match &cfg.tolerances {
        Some(ov) => ov.apply(tol),
        None => tol.clone(),
    };
    let family_spec = cfg.family.as_ref().expect("validated");
    let dim = cfg.dim;

    let rho0 = match &family_spec.rho0 {
        Rho0Spec::Vacuum => pure_fock(dim, 0, &tol)?,
        Rho0Spec::Coherent { alpha } => {
            coherent_state(dim, Complex64::new(alpha[0], alpha[1]), &tol)?
        }
        Rho0Spec::Thermal { nbar } => thermal_state(dim, *nbar, &tol)?,
        Rho0Spec::Explicit { matrix } => {
            let m = matrix.to_matrix().map_err(anyhow::Error::msg)?;
            DensityOperator::new(m, &tol)?
        }
    };

    let mut gens = Vec::with_capacity(family_spec.generators.len());
    for g in &family_spec.generators {
        let op = match g {
            GeneratorSpec::FockA => fock_ops(dim)?.a,
            GeneratorSpec::FockN => fock_ops(dim)?.n,
            GeneratorSpec::Pauli { axis, scale } => pauli(axis, *scale),
            GeneratorSpec::Explicit { matrix } => {
                matrix.to_matrix().map_err(anyhow::Error::msg)?
            }
        };
        gens.push(op);
    }
    let gens = GeneratorSet::new(gens)?;
    let gen_ops = gens.ops().to_vec();

    let family = match family_spec.form.as_str() {
        "canonical_real" => StateFamily::canonical_real(rho0, gens, &tol)?,
        "canonical_complex" => StateFamily::canonical_complex(rho0, gens, &tol)?,
        _ => StateFamily::unitary_shift(rho0, gens, cfg.hbar, &tol)?,
    };

    let povm = match &cfg.povm {
        None => None,
        Some(PovmSpec::Spectral) => Some(qcrb_core::povm::builtin_spectral(&gen_ops, &tol)?),
        Some(PovmSpec::Heterodyne {
            radius,
            grid,
            completeness_tol,
        }) => Some(match completeness_tol {
            Some(ct) => {
                qcrb_core::povm::builtin_heterodyne_with_tol(dim, *radius, *grid, *ct, &tol)?
            }
            None => qcrb_core::povm::builtin_heterodyne(dim, *radius, *grid, &tol)?,
        }),
        Some(PovmSpec::Phase { bins, .. }) => {
            Some(qcrb_core::povm::builtin_phase(dim, *bins, &tol)?)
        }
        Some(PovmSpec::Explicit {
            effects,
            weights,
            labels,
        }) => {
            let mut eff = Vec::with_capacity(effects.len());
            for e in effects {
                eff.push(e.to_matrix().map_err(anyhow::Error::msg)?);
            }
            let labels: Vec<Vec<Complex64>> =
                labels.iter().map(|row| vec_from_json(row)).collect();
            Some(Povm::new(
                PovmKind::Finite,
                eff,
                weights.clone(),
                labels,
                &tol,
            )?)
        }
    };

    let points = match cfg.points.as_ref().expect("validated") {
        PointsSpec {
            real: Some(rp),
            beta: None,
        } => rp.iter().map(|p| ParamPoint::Real(p.clone())).collect(),
        PointsSpec {
            real: None,
            beta: Some(bp),
        } => bp
            .iter()
            .map(|p| ParamPoint::from_betas(&vec_from_json(p)))
            .collect(),
        _ => unreachable!("validated"),
    };

    Ok(BuiltScenario {
        family,
        povm,
        points,
        tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> ScenarioConfig {
        serde_json::from_str(
            r#"{
                "name": "t",
                "dim": 4,
                "family": {
                    "form": "canonical_real",
                    "rho0": {"kind": "thermal", "nbar": 0.5},
                    "generators": [{"kind": "fock_n"}]
                },
                "povm": {"kind": "spectral"},
                "points": {"real": [[0.1]]},
                "bounds": ["helstrom"]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn minimal_config_is_valid_and_builds() {
        let cfg = minimal();
        assert!(validate(&cfg).is_empty());
        let built = build(&cfg, &Tolerances::default()).unwrap();
        assert_eq!(built.family.dim(), 4);
        assert_eq!(built.points.len(), 1);
        assert!(built.povm.is_some());
    }

    #[test]
    fn dim_one_is_rejected_with_field_message() {
        let mut cfg = minimal();
        cfg.dim = 1;
        let issues = validate(&cfg);
        assert!(
            issues.iter().any(|m| m.contains("dim ≥ 2")),
            "{issues:?}"
        );
    }

    #[test]
    fn non_hermitian_explicit_rho0_is_rejected() {
        let mut cfg = minimal();
        cfg.dim = 2;
        cfg.family.as_mut().unwrap().rho0 = Rho0Spec::Explicit {
            matrix: MatrixJson {
                rows: 2,
                cols: 2,
                data: vec![[0.5, 0.0], [0.3, 0.2], [0.0, 0.0], [0.5, 0.0]],
            },
        };
        let issues = validate(&cfg);
        assert!(
            issues
                .iter()
                .any(|m| m.contains("family.rho0.matrix") && m.contains("Hermitian")),
            "{issues:?}"
        );
    }

    #[test]
    fn point_kind_must_match_family_kind() {
        let mut cfg = minimal();
        cfg.points = Some(PointsSpec {
            real: None,
            beta: Some(vec![vec![[0.1, 0.0]]]),
        });
        let issues = validate(&cfg);
        assert!(issues.iter().any(|m| m.contains("points.beta")), "{issues:?}");
    }

    #[test]
    fn unknown_fields_fail_parsing() {
        let r = serde_json::from_str::<ScenarioConfig>(r#"{"name":"x","dimension":3}"#);
        assert!(r.is_err());
        let msg = format!("{}", r.unwrap_err());
        assert!(msg.contains("dimension"), "{msg}");
    }

    #[test]
    fn fuzz_mode_validates_its_own_section() {
        let cfg: ScenarioConfig = serde_json::from_str(
            r#"{"name":"f","mode":"fuzz","fuzz":{"pairs":10,"max_dim":6,"seed":1}}"#,
        )
        .unwrap();
        assert!(validate(&cfg).is_empty());
        let bad: ScenarioConfig =
            serde_json::from_str(r#"{"name":"f","mode":"fuzz"}"#).unwrap();
        assert!(validate(&bad).iter().any(|m| m.starts_with("fuzz")));
    }
}
