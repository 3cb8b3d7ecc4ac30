use disclab::boltzmann::{
    lambda_mu_matrix_relation, levelset_moments, mu_moment_data, mu_moments,
};
use disclab::fixedpoint::{cd_identity_check, coefficient_error, fixed_point_report, recover_form};
use disclab::polyform::{check_positive, monomials_up_to, HomogeneousForm};
use disclab::sdp::{exact_volume, hierarchy, Domain, LevelResult};
use disclab::special::gamma;
use disclab::spherequad::SphereQuadrature;
use disclab::variational::{entropy_report, first_ward_ratio, ward_residuals};
use disclab::Result;

use crate::report::{Check, Cell, Report, Table};

/// Agreement required between the three partition-function routes.
pub const Z_AGREEMENT: f64 = 1e-6;
pub const FIXED_POINT_LIMIT: f64 = 1e-8;
pub const RECOVERY_LIMIT: f64 = 1e-6;
pub const WARD_LIMIT: f64 = 1e-8;
pub const ENTROPY_GAP_LIMIT: f64 = 1e-8;
pub const CD_LIMIT: f64 = 1e-6;
pub const CD_POINTS: usize = 20;
pub const MATRIX_RELATION_LIMIT: f64 = 1e-8;
const GAMMA_RATIO_LIMIT: f64 = 1e-10;

pub struct Config {
    pub action: HomogeneousForm,
    pub quad: SphereQuadrature,
    pub tol: f64,
    pub seed: u64,
    pub domain: Domain,
}

fn header(r: &mut Report, cfg: &Config) {
    r.field("dim", Cell::Int(cfg.action.dim() as i64));
    r.field("action", cfg.action.to_string());
}

pub fn partition(cfg: &Config) -> Result<Report> {
    check_positive(&cfg.action)?;
    let fp = fixed_point_report(&cfg.action, &cfg.quad)?;
    let mut r = Report::new("partition");
    header(&mut r, cfg);
    r.field("z_direct", fp.z_direct);
    r.field("z_coefficients", fp.z_from_coeffs);
    r.field("z_moments", fp.z_from_moments);
    let dev = |a: f64, b: f64| ((a - b) / b).abs();
    r.field("dev_direct_coefficients", dev(fp.z_direct, fp.z_from_coeffs));
    r.field("dev_direct_moments", dev(fp.z_direct, fp.z_from_moments));
    r.field("dev_coefficients_moments", dev(fp.z_from_coeffs, fp.z_from_moments));
    r.checks.push(Check::at_most("z_agreement", fp.z_spread(), Z_AGREEMENT));
    Ok(r)
}

pub fn moments(cfg: &Config, max_deg: Option<u32>) -> Result<Report> {
    let g = &cfg.action;
    let two_n = g.half_degree()? * 2;
    check_positive(g)?;
    let d = g.dim();
    let alphas = monomials_up_to(d, max_deg.unwrap_or(two_n));
    let mu = mu_moments(g, &alphas, &cfg.quad)?;
    let lev = levelset_moments(g, &alphas, &cfg.quad)?;
    let mut table = Table::new("moments", &["alpha", "mu_moment", "levelset_moment", "ratio", "gamma_factor"]);
    let mut worst: f64 = 0.0;
    for (i, a) in alphas.iter().enumerate() {
        let factor = gamma(1.0 + (d as f64 + a.degree() as f64) / two_n as f64);
        let ratio = (lev[i] != 0.0).then(|| mu[i] / lev[i]);
        if let Some(q) = ratio {
            worst = worst.max((q - factor).abs() / factor);
        }
        table.rows.push(vec![a.to_string().into(), mu[i].into(), lev[i].into(), ratio.into(), factor.into()]);
    }
    let mut r = Report::new("moments");
    header(&mut r, cfg);
    r.tables.push(table);
    r.checks.push(Check::at_most("ratio_equals_gamma_factor", worst, GAMMA_RATIO_LIMIT));
    Ok(r)
}

pub fn recover(cfg: &Config) -> Result<Report> {
    let g = &cfg.action;
    let n = g.half_degree()?;
    check_positive(g)?;
    let (hm, mu) = mu_moment_data(g, &cfg.quad)?;
    let rec = recover_form(&hm, &mu, g.dim(), n)?;
    let mut table = Table::new("coefficients", &["alpha", "given", "recovered", "abs_error"]);
    for a in hm.row_basis.indices() {
        let (x, y) = (g.coefficient(a), rec.coefficient(a));
        table.rows.push(vec![a.to_string().into(), x.into(), y.into(), (x - y).abs().into()]);
    }
    let mut r = Report::new("recover");
    header(&mut r, cfg);
    r.field("recovered", rec.to_string());
    r.tables.push(table);
    r.checks.push(Check::at_most("recovery_error", coefficient_error(g, &rec, &hm.row_basis), RECOVERY_LIMIT));
    Ok(r)
}

pub fn verify(cfg: &Config) -> Result<Report> {
    let g = &cfg.action;
    let n = g.half_degree()?;
    check_positive(g)?;
    let fp = fixed_point_report(g, &cfg.quad)?;
    let ward = ward_residuals(g, &cfg.quad, 2 * n)?;
    let ward_worst = ward.values().fold(0.0f64, |m, &v| m.max(v));
    let first_ward = first_ward_ratio(g, &cfg.quad)?;
    let expected_ward = g.dim() as f64 / (2 * n) as f64;
    let ent = entropy_report(g, &cfg.quad)?;
    let cd = cd_identity_check(g, &cfg.quad, CD_POINTS, cfg.seed)?;
    let rel = lambda_mu_matrix_relation(g, &cfg.quad)?;

    let mut r = Report::new("verify");
    header(&mut r, cfg);
    r.field("recovered", fp.g_recovered.to_string());
    r.field("c2n", fp.c2n);
    r.field("z_direct", fp.z_direct);
    r.field("first_ward_ratio", first_ward);
    r.checks.push(Check::at_most("fixed_point_residual", fp.residual_canonical, FIXED_POINT_LIMIT));
    r.checks.push(Check::at_most("orthonormal_identity", fp.residual_tilde, FIXED_POINT_LIMIT));
    r.checks.push(Check::at_most("round_trip_recovery", fp.recovery_error, RECOVERY_LIMIT));
    r.checks.push(Check::at_most("z_identities", fp.z_spread(), Z_AGREEMENT));
    r.checks.push(Check::at_most("first_ward", (first_ward - expected_ward).abs(), WARD_LIMIT));
    r.checks.push(Check::at_most("ward_residuals", ward_worst, WARD_LIMIT));
    r.checks.push(Check::at_most("entropy_gap", ent.gap, ENTROPY_GAP_LIMIT));
    r.checks.push(Check::at_most("cd_kernel", cd, CD_LIMIT));
    r.checks.push(Check::at_most("matrix_relation", rel, MATRIX_RELATION_LIMIT));
    Ok(r)
}

pub fn entropy(cfg: &Config) -> Result<Report> {
    check_positive(&cfg.action)?;
    let e = entropy_report(&cfg.action, &cfg.quad)?;
    let mut r = Report::new("entropy");
    header(&mut r, cfg);
    r.field("z", e.z);
    r.field("c_star", e.c_star);
    r.field("entropy_primal", e.entropy_primal);
    r.field("entropy_closed", e.entropy_closed);
    r.field("entropy_printed", e.entropy_printed);
    r.field("dual_value", e.dual_value);
    r.field("gap", e.gap);
    r.checks.push(Check::at_most("duality_gap", e.gap, ENTROPY_GAP_LIMIT));
    r.checks.push(Check::at_most(
        "primal_matches_closed_form",
        (e.entropy_primal - e.entropy_closed).abs(),
        ENTROPY_GAP_LIMIT,
    ));
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolumeMode {
    Plain,
    Stokes,
    Compare,
}

fn level_values(levels: &[LevelResult], r: &mut Report, label: &str) -> Vec<Option<f64>> {
    levels
        .iter()
        .map(|l| {
            for w in &l.warnings {
                if !r.warnings.contains(w) {
                    r.warnings.push(w.clone());
                }
            }
            match &l.value {
                Ok(v) => Some(*v),
                Err(e) => {
                    r.warnings.push(format!("{label} t={}: {e}", l.t));
                    None
                }
            }
        })
        .collect()
}

pub fn volume(cfg: &Config, t_max: u32, mode: VolumeMode) -> Result<Report> {
    let g = &cfg.action;
    check_positive(g)?;
    let vol = exact_volume(g, &cfg.quad)?;
    let mut r = Report::new("volume");
    header(&mut r, cfg);
    r.field("tol", cfg.tol);
    let run = |stokes: bool| hierarchy(g, t_max, stokes, cfg.domain, cfg.tol);
    let plain = match mode {
        VolumeMode::Plain | VolumeMode::Compare => level_values(&run(false)?, &mut r, "plain"),
        VolumeMode::Stokes => vec![None; t_max as usize + 1],
    };
    let stokes = match mode {
        VolumeMode::Stokes | VolumeMode::Compare => level_values(&run(true)?, &mut r, "stokes"),
        VolumeMode::Plain => vec![None; t_max as usize + 1],
    };
    let mut table = Table::new("hierarchy", &["t", "rho_t", "delta_t", "vol_exact", "gap_plain", "gap_stokes"]);
    for t in 0..=t_max as usize {
        table.rows.push(vec![
            Cell::Int(t as i64),
            plain[t].into(),
            stokes[t].into(),
            vol.into(),
            plain[t].map(|v| v - vol).into(),
            stokes[t].map(|v| v - vol).into(),
        ]);
    }
    r.tables.push(table);

    let slack = 10.0 * cfg.tol * vol.max(1.0);
    let bounds = |seq: &[Option<f64>]| seq.iter().flatten().all(|&v| v >= vol - slack);
    let monotone = |seq: &[Option<f64>]| {
        let vals: Vec<f64> = seq.iter().flatten().copied().collect();
        vals.windows(2).all(|w| w[1] <= w[0] + slack)
    };
    let solved = |seq: &[Option<f64>]| seq.iter().all(Option::is_some);
    if mode != VolumeMode::Stokes {
        r.checks.push(Check::flag("plain_all_levels_solved", solved(&plain)));
        r.checks.push(Check::flag("plain_upper_bounds_volume", bounds(&plain)));
        r.checks.push(Check::flag("plain_non_increasing", monotone(&plain)));
    }
    if mode != VolumeMode::Plain {
        r.checks.push(Check::flag("stokes_all_levels_solved", solved(&stokes)));
        r.checks.push(Check::flag("stokes_upper_bounds_volume", bounds(&stokes)));
        r.checks.push(Check::flag("stokes_non_increasing", monotone(&stokes)));
    }
    if mode == VolumeMode::Compare {
        let ordered = plain.iter().zip(&stokes).all(|(p, s)| match (p, s) {
            (Some(p), Some(s)) => *s <= p + slack,
            _ => true,
        });
        r.checks.push(Check::flag("stokes_below_plain", ordered));
        if let (Some(p), Some(s)) = (plain[t_max as usize], stokes[t_max as usize]) {
            r.checks.push(Check::flag("final_gap_stokes_le_plain", s - vol <= p - vol + slack));
        }
    }
    Ok(r)
}
