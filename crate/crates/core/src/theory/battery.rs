//! Randomised batteries of certificates, grouped in named suites.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::certificate::{Residual, TheoryCertificate};
use super::construction::{
    adversarial_instance, build_counterexample, construct_m, solve_lambda, verify_counterexample, ConstructOptions,
    CounterexampleConfig,
};
use super::newton::best_jacobian;
use super::polarization::{monomial_step2, monomial_step3, polarization_check};
use super::relations::{lemma_second_converse, lemma_second_diagonality, lemma_secondb_check, moore_penrose_check, RelationConfig};
use crate::cert_input;
use crate::compfun::generator::{
    AdditiveGenerator, InteractionGenerator, InteractionTerm, PolyMap, PolyTerm, SlotMap, SlotStructure, SmoothMap,
};
use crate::compfun::multi_index::MultiIndex;
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::rng::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    LemmaSecond,
    LemmaSecondb,
    Moore,
    #[serde(rename = "construct-M")]
    ConstructM,
    Lambda,
    Counterexample,
    Polarization,
    Monomial,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::LemmaSecond,
        Suite::LemmaSecondb,
        Suite::Moore,
        Suite::ConstructM,
        Suite::Lambda,
        Suite::Counterexample,
        Suite::Polarization,
        Suite::Monomial,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::LemmaSecond => "lemma-second",
            Suite::LemmaSecondb => "lemma-secondb",
            Suite::Moore => "moore",
            Suite::ConstructM => "construct-M",
            Suite::Lambda => "lambda",
            Suite::Counterexample => "counterexample",
            Suite::Polarization => "polarization",
            Suite::Monomial => "monomial",
        }
    }

    /// Parses a selector; `all` expands to every suite.
    pub fn parse_selector(s: &str) -> Result<Vec<Suite>> {
        if s == "all" {
            return Ok(Suite::ALL.to_vec());
        }
        s.parse().map(|x| vec![x])
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown suite {s:?}; expected one of {}, all",
                Suite::ALL.map(Suite::name).join(", ")
            ))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TheoryConfig {
    pub seed: u64,
    /// Instances for the lemma, Moore–Penrose, lambda and polarization suites.
    pub instances: usize,
    /// Converse instances for the lemma-second suite.
    pub converse_instances: usize,
    /// Instances for the construct-M and counterexample suites.
    pub construct_instances: usize,
    pub d_z: usize,
    pub d_x: usize,
    pub lemma_dims: Vec<usize>,
    pub secondb_d_z: usize,
    pub secondb_d_x: usize,
    pub moore_max_d1: usize,
    pub moore_max_d2: usize,
    pub points: usize,
    pub polarization_tol: f64,
    pub monomial_tol: f64,
    pub moore_tol: f64,
    pub lambda_tol: f64,
    pub allow_below_cubic: bool,
    pub relation: RelationConfig,
    pub secondb_tolerance: f64,
    pub counterexample: CounterexampleConfig,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        TheoryConfig {
            seed: 0,
            instances: 100,
            converse_instances: 50,
            construct_instances: 20,
            d_z: 2,
            d_x: 8,
            lemma_dims: vec![2, 3, 4],
            secondb_d_z: 2,
            secondb_d_x: 6,
            moore_max_d1: 4,
            moore_max_d2: 12,
            points: 100,
            polarization_tol: 1e-8,
            monomial_tol: 1e-10,
            moore_tol: 1e-10,
            lambda_tol: 1e-10,
            allow_below_cubic: false,
            relation: RelationConfig::default(),
            secondb_tolerance: 1e-3,
            counterexample: CounterexampleConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: usize,
    pub failed: usize,
    pub certificates: Vec<TheoryCertificate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryBundle {
    pub passed: usize,
    pub failed: usize,
    pub suites: Vec<SuiteReport>,
}

impl TheoryBundle {
    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }
}

/// Rejects configurations that cannot produce meaningful certificates, before
/// any computation starts.
pub fn check_preconditions(suites: &[Suite], cfg: &TheoryConfig) -> Result<()> {
    let needs_cubic = suites.iter().any(|s| matches!(s, Suite::ConstructM | Suite::Counterexample));
    if cfg.d_z == 0 || cfg.d_x < cfg.d_z {
        return Err(Error::Precondition(format!("need 1 ≤ d_z ≤ d_x, got d_z = {} and d_x = {}", cfg.d_z, cfg.d_x)));
    }
    if needs_cubic && !cfg.allow_below_cubic && cfg.d_x < cfg.d_z.pow(3) {
        return Err(Error::Precondition(format!(
            "d_x = {} violates d_x ≥ d_z^3 = {}",
            cfg.d_x,
            cfg.d_z.pow(3)
        )));
    }
    if suites.contains(&Suite::LemmaSecond) && (cfg.lemma_dims.is_empty() || cfg.lemma_dims.iter().any(|&d| d < 2)) {
        return Err(Error::Precondition("lemma dimensions must be at least 2".into()));
    }
    if suites.contains(&Suite::LemmaSecondb) && cfg.secondb_d_x <= cfg.secondb_d_z {
        return Err(Error::Precondition("lemma-secondb needs d_x > d_z".into()));
    }
    if suites.contains(&Suite::Moore) && (cfg.moore_max_d1 == 0 || cfg.moore_max_d2 < cfg.moore_max_d1) {
        return Err(Error::Precondition("Moore–Penrose dimensions need 1 ≤ d1 ≤ d2".into()));
    }
    Ok(())
}

fn normal(r: &mut Rng) -> f64 {
    r.sample(StandardNormal)
}

pub fn random_matrix(r: &mut Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| normal(r))
}

pub fn random_symmetric(r: &mut Rng, n: usize) -> Mat {
    let g = random_matrix(r, n, n);
    (&g + g.transpose()) * 0.5
}

fn cubic_linear_components(r: &mut Rng, d_z: usize, d_x: usize) -> Result<Vec<SlotMap>> {
    (0..d_z)
        .map(|_| {
            let lin: Vec<f64> = (0..d_x).map(|_| normal(r)).collect();
            let cub: Vec<f64> = (0..d_x).map(|_| 0.3 * normal(r)).collect();
            PolyMap::new(1, d_x, vec![
                PolyTerm { exponent: MultiIndex::new(vec![1]), coeff: lin },
                PolyTerm { exponent: MultiIndex::new(vec![3]), coeff: cub },
            ])
            .map(SlotMap::Poly)
        })
        .collect()
}

/// `f(z) = Σ_j (p_j z_j + q_j z_j³)` with Gaussian `p_j` and `q_j ~ N(0, 0.3²)`.
pub fn random_additive_cubic(r: &mut Rng, d_z: usize, d_x: usize) -> Result<AdditiveGenerator> {
    let comps = cubic_linear_components(r, d_z, d_x)?;
    AdditiveGenerator::new(InteractionGenerator::from_terms(SlotStructure::new(d_z, 1)?, 0, d_x, comps, vec![])?)
}

/// A random additive cubic generator plus the unit cross term `z_1 z_2` in
/// the first output.
pub fn random_cross_term(r: &mut Rng, d_z: usize, d_x: usize) -> Result<InteractionGenerator> {
    let comps = cubic_linear_components(r, d_z, d_x)?;
    let mut alpha = vec![0; d_z];
    alpha[0] = 1;
    alpha[1] = 1;
    let mut coeff = vec![0.0; d_x];
    coeff[0] = 1.0;
    InteractionGenerator::from_terms(SlotStructure::new(d_z, 1)?, 2, d_x, comps, vec![InteractionTerm {
        alpha: MultiIndex::new(alpha),
        coeff,
    }])
}

/// Uniform point in `[-1, 1]^d` where `σ_min(Df) > threshold`.
pub fn well_conditioned_point(f: &dyn SmoothMap, r: &mut Rng, threshold: f64) -> Result<Option<Vec<f64>>> {
    for _ in 0..200 {
        let z: Vec<f64> = (0..f.input_dim()).map(|_| r.random_range(-1.0..1.0)).collect();
        let j = best_jacobian(f, &z, &Default::default())?;
        if linalg::sigma_min(&j) > threshold {
            return Ok(Some(z));
        }
    }
    Ok(None)
}

fn tag(suite: Suite) -> u64 {
    suite as u64 + 1
}

fn instance_rng(cfg: &TheoryConfig, suite: Suite, i: usize) -> Rng {
    rng::stream(rng::mix(cfg.seed, tag(suite)), i as u64)
}

fn lemma_second_instance(cfg: &TheoryConfig, i: usize, converse: bool) -> Result<TheoryCertificate> {
    let suite = Suite::LemmaSecond;
    let d = cfg.lemma_dims[i % cfg.lemma_dims.len()];
    let mut r = instance_rng(cfg, suite, if converse { 1_000_000 + i } else { i });
    loop {
        let cert = if converse {
            let f = random_cross_term(&mut r, d, d)?;
            match well_conditioned_point(&f, &mut r, cfg.relation.sigma_threshold)? {
                Some(z) => lemma_second_converse(&f, &z, &cfg.relation),
                None => continue,
            }
        } else {
            let f = random_additive_cubic(&mut r, d, d)?;
            match well_conditioned_point(&f, &mut r, cfg.relation.sigma_threshold)? {
                Some(z) => lemma_second_diagonality(&f, &z, &cfg.relation),
                None => continue,
            }
        };
        match cert {
            // A point passing the σ filter can still leave the Newton basin
            // inside the stencil; draw a fresh instance.
            Err(Error::Conditioning { .. }) | Err(Error::NonFinite { .. }) => continue,
            other => return other.map(|c| c.with_note(format!("instance {i}"))),
        }
    }
}

fn secondb_instance(cfg: &TheoryConfig, i: usize) -> Result<TheoryCertificate> {
    let mut r = instance_rng(cfg, Suite::LemmaSecondb, i);
    let rel = RelationConfig { tolerance: cfg.secondb_tolerance, ..cfg.relation.clone() };
    loop {
        let f = random_additive_cubic(&mut r, cfg.secondb_d_z, cfg.secondb_d_x)?;
        let Some(z) = well_conditioned_point(&f, &mut r, rel.sigma_threshold)? else { continue };
        match lemma_secondb_check(&f, &z, &rel) {
            Err(Error::Conditioning { .. }) | Err(Error::NonFinite { .. }) => continue,
            other => return other,
        }
    }
}

fn moore_instance(cfg: &TheoryConfig, i: usize) -> Result<TheoryCertificate> {
    let mut r = instance_rng(cfg, Suite::Moore, i);
    let d1 = r.random_range(1..=cfg.moore_max_d1);
    let d2 = r.random_range(d1..=cfg.moore_max_d2);
    let a = random_matrix(&mut r, d1, d2);
    let b = linalg::pinv(&a, 1e-12);
    moore_penrose_check(&a, &b, cfg.moore_tol)
}

fn construct_instance(cfg: &TheoryConfig, i: usize) -> Result<TheoryCertificate> {
    let mut r = instance_rng(cfg, Suite::ConstructM, i);
    let a = random_matrix(&mut r, cfg.d_z, cfg.d_x);
    let bs: Vec<Mat> = (0..cfg.d_z).map(|_| random_symmetric(&mut r, cfg.d_x)).collect();
    let opts = ConstructOptions { allow_below_cubic: cfg.allow_below_cubic };
    let m = construct_m(&a, &bs, &opts)?;
    let am = linalg::max_abs(&(&a * &m - Mat::identity(cfg.d_z, cfg.d_z)));
    let off = bs.iter().map(|b| linalg::max_offdiag_abs(&(m.transpose() * b * &m))).fold(0.0, f64::max);
    Ok(TheoryCertificate::new(
        "construct-M",
        cert_input! { "d_z" => cfg.d_z, "d_x" => cfg.d_x, "instance" => i },
        vec![
            Residual::at_most("am_identity", am, cfg.counterexample.identity_tol),
            Residual::at_most("mbm_offdiag", off, cfg.counterexample.offdiag_tol),
        ],
    ))
}

/// Certificate for the adversarial instance: passes when the construction
/// reports infeasibility, the expected outcome.
pub fn adversarial_certificate(d_x: usize) -> TheoryCertificate {
    let (a, bs) = adversarial_instance(d_x);
    let opts = ConstructOptions { allow_below_cubic: true };
    let (detected, note) = match construct_m(&a, &bs, &opts) {
        Err(Error::Infeasible { column, sigma_min }) => {
            (1.0, format!("expected infeasibility: column {column} singular (sigma_min {sigma_min:e})"))
        }
        Err(e) => (0.0, format!("unexpected error: {e}")),
        Ok(_) => (0.0, "construction unexpectedly succeeded".to_string()),
    };
    TheoryCertificate::new(
        "construct-M-adversarial",
        cert_input! { "d_z" => 2, "d_x" => d_x },
        vec![Residual::at_least("infeasibility_detected", detected, 1.0)],
    )
    .with_note(note)
}

fn lambda_instance(cfg: &TheoryConfig, i: usize) -> Result<TheoryCertificate> {
    let mut r = instance_rng(cfg, Suite::Lambda, i);
    let a = random_matrix(&mut r, cfg.d_z, cfg.d_x);
    let ds: Vec<Mat> = (0..cfg.d_z)
        .map(|_| Mat::from_diagonal(&crate::linalg::Vector::from_fn(cfg.d_z, |_, _| normal(&mut r))))
        .collect();
    let lambdas = solve_lambda(&a, &ds)?;
    let mut err = 0.0f64;
    for (s, d) in ds.iter().enumerate() {
        let mut acc = d.clone();
        for (i, l) in lambdas.iter().enumerate() {
            acc += l * a[(s, i)];
        }
        err = err.max(linalg::max_abs(&acc));
    }
    let off = lambdas.iter().map(linalg::max_offdiag_abs).fold(0.0, f64::max);
    Ok(TheoryCertificate::new(
        "lambda",
        cert_input! { "d_z" => cfg.d_z, "d_x" => cfg.d_x, "instance" => i },
        vec![Residual::at_most("reconstruction", err, cfg.lambda_tol), Residual::at_most("lambda_offdiag", off, 0.0)],
    ))
}

fn counterexample_instance(cfg: &TheoryConfig, i: usize) -> Result<TheoryCertificate> {
    let mut r = instance_rng(cfg, Suite::Counterexample, i);
    let a = random_matrix(&mut r, cfg.d_z, cfg.d_x);
    let bs: Vec<Mat> = (0..cfg.d_z).map(|_| random_symmetric(&mut r, cfg.d_x)).collect();
    let x0: Vec<f64> = (0..cfg.d_x).map(|_| normal(&mut r)).collect();
    let pair = build_counterexample(&a, &bs, &x0, &ConstructOptions { allow_below_cubic: cfg.allow_below_cubic })?;
    let ccfg = CounterexampleConfig { seed: rng::mix(cfg.seed, i as u64), ..cfg.counterexample.clone() };
    verify_counterexample(&pair, &ccfg).map(|c| c.with_note(format!("instance {i}")))
}

fn polarization_instance(cfg: &TheoryConfig, i: usize) -> Result<TheoryCertificate> {
    let mut r = instance_rng(cfg, Suite::Polarization, i);
    let k = 1 + i % 5;
    let d = r.random_range(1..=4);
    let forms: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| normal(&mut r)).collect()).collect();
    let points: Vec<Vec<f64>> = (0..10).map(|_| (0..d).map(|_| normal(&mut r)).collect()).collect();
    polarization_check(&forms, &points, cfg.polarization_tol)
}

fn monomial_instances(cfg: &TheoryConfig) -> Result<Vec<TheoryCertificate>> {
    (0..10)
        .into_par_iter()
        .map(|i| {
            let mut r = instance_rng(cfg, Suite::Monomial, i);
            let k = 1 + (i % 5) as u32;
            let d = r.random_range(2..=5);
            let points: Vec<Vec<f64>> =
                (0..cfg.points).map(|_| (0..d).map(|_| r.random_range(-1.5..1.5)).collect()).collect();
            let mut alpha: Vec<f64> = (0..d).map(|_| if r.random::<f64>() < 0.3 { 0.0 } else { normal(&mut r) }).collect();
            let nz = alpha.iter().filter(|&&a| a != 0.0).count();
            if nz < 2 {
                alpha[0] = 1.0 + r.random::<f64>();
                alpha[d - 1] = -1.0 - r.random::<f64>();
            }
            Ok(vec![monomial_step2(k, &points, cfg.monomial_tol)?, monomial_step3(k, &alpha, &points, cfg.monomial_tol)?])
        })
        .collect::<Result<Vec<Vec<_>>>>()
        .map(|v| v.into_iter().flatten().collect())
}

fn par_instances(n: usize, f: impl Fn(usize) -> Result<TheoryCertificate> + Sync + Send) -> Result<Vec<TheoryCertificate>> {
    (0..n).into_par_iter().map(f).collect()
}

pub fn run_suite(suite: Suite, cfg: &TheoryConfig) -> Result<SuiteReport> {
    check_preconditions(&[suite], cfg)?;
    let certificates = match suite {
        Suite::LemmaSecond => {
            let mut v = par_instances(cfg.instances, |i| lemma_second_instance(cfg, i, false))?;
            v.extend(par_instances(cfg.converse_instances, |i| lemma_second_instance(cfg, i, true))?);
            v
        }
        Suite::LemmaSecondb => par_instances(cfg.instances.min(20), |i| secondb_instance(cfg, i))?,
        Suite::Moore => par_instances(cfg.instances, |i| moore_instance(cfg, i))?,
        Suite::ConstructM => {
            let mut v = par_instances(cfg.construct_instances, |i| construct_instance(cfg, i))?;
            v.push(adversarial_certificate(cfg.d_x.max(8)));
            v
        }
        Suite::Lambda => par_instances(cfg.instances, |i| lambda_instance(cfg, i))?,
        Suite::Counterexample => par_instances(cfg.construct_instances, |i| counterexample_instance(cfg, i))?,
        Suite::Polarization => par_instances(cfg.instances, |i| polarization_instance(cfg, i))?,
        Suite::Monomial => monomial_instances(cfg)?,
    };
    let passed = certificates.iter().filter(|c| c.passed()).count();
    Ok(SuiteReport { suite, passed, failed: certificates.len() - passed, certificates })
}

pub fn run_suites(suites: &[Suite], cfg: &TheoryConfig) -> Result<TheoryBundle> {
    check_preconditions(suites, cfg)?;
    let reports = suites.iter().map(|&s| run_suite(s, cfg)).collect::<Result<Vec<_>>>()?;
    Ok(TheoryBundle {
        passed: reports.iter().map(|r| r.passed).sum(),
        failed: reports.iter().map(|r| r.failed).sum(),
        suites: reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TheoryConfig {
        TheoryConfig { instances: 6, converse_instances: 3, construct_instances: 2, ..Default::default() }
    }

    #[test]
    fn every_suite_passes_on_small_batteries() {
        let cfg = small();
        for s in Suite::ALL {
            let r = run_suite(s, &cfg).unwrap();
            let failing: Vec<_> = r.certificates.iter().filter(|c| !c.passed()).collect();
            assert!(failing.is_empty(), "{s}: {failing:#?}");
        }
    }

    #[test]
    fn batteries_are_deterministic() {
        let cfg = small();
        assert_eq!(run_suite(Suite::Moore, &cfg).unwrap(), run_suite(Suite::Moore, &cfg).unwrap());
    }

    #[test]
    fn below_cubic_dimension_is_rejected() {
        let cfg = TheoryConfig { d_x: 7, ..small() };
        assert!(matches!(run_suite(Suite::ConstructM, &cfg), Err(Error::Precondition(_))));
        assert!(run_suite(Suite::Moore, &cfg).is_ok());
    }

    #[test]
    fn selector_parsing() {
        assert_eq!(Suite::parse_selector("all").unwrap().len(), 8);
        assert_eq!(Suite::parse_selector("construct-M").unwrap(), vec![Suite::ConstructM]);
        assert!(Suite::parse_selector("nope").is_err());
    }
}
