//! Acceptance run: one line per criterion, non-zero exit when any fails.

mod common;

use std::f64::consts::FRAC_2_PI;
use std::time::Instant;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kpo::analysis::{self, GridSpec};
use kpo::config::{logspace, RunConfig};
use kpo::effective::{self, excitation_spectrum, h_eff2};
use kpo::expansion::{exact_real, expand_with, EngineInputs, ExactComplex, ExpandOptions};
use kpo::floquet::{self, control_ramp, SolverSettings, TrackingSettings};
use kpo::fock::{self, CVector};
use kpo::model::{control_to_drive, derive, ModelParams};
use kpo::sweep::{self, PointStatus};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

const BASE: (f64, f64) = (7.5e-4, 1.27e-7);

/// Exact rational of a decimal literal such as "7.5e-4".
fn decimal(s: &str) -> BigRational {
    let (mant, exp) = s.split_once('e').map_or((s, 0i32), |(m, e)| (m, e.parse().unwrap()));
    let (int, frac) = mant.split_once('.').unwrap_or((mant, ""));
    let digits: BigInt = format!("{int}{frac}").parse().unwrap();
    let shift = exp - frac.len() as i32;
    let ten = BigRational::from_integer(BigInt::from(10));
    let mut r = BigRational::from_integer(digits);
    for _ in 0..shift.abs() {
        r = if shift > 0 { r * ten.clone() } else { r / ten.clone() };
    }
    r
}

/// Round half up to `sig` significant figures, returned as (mantissa digits, exponent).
fn round_sig(x: &BigRational, sig: i32) -> (BigInt, i32) {
    let ten = BigRational::from_integer(BigInt::from(10));
    let mut e = 0i32;
    let mut v = x.abs();
    let lo = BigRational::from_integer(BigInt::from(10).pow(sig as u32 - 1));
    let hi = lo.clone() * ten.clone();
    while v < lo {
        v *= ten.clone();
        e -= 1;
    }
    while v >= hi {
        v /= ten.clone();
        e += 1;
    }
    let half = BigRational::new(BigInt::from(1), BigInt::from(2));
    ((v + half).floor().to_integer(), e)
}

fn criterion_1() -> Check {
    let g3 = decimal("7.5e-4");
    let g4 = decimal("1.27e-7");
    let k2 = -(BigRational::new(3.into(), 2.into()) * g4) + BigRational::new(10.into(), 3.into()) * g3.clone() * g3;
    let (m, e) = round_sig(&k2, 4);
    let float = derive(&ModelParams::new(BASE.0, BASE.1, 10)).map_err(err)?.k2;
    ensure(
        m == BigInt::from(1685) && e == -9,
        format!("K2 = {m}e{e} (exact, 4 s.f.), float {float:.6e}, target 1.685e-6"),
    )
}

fn criterion_2() -> Check {
    let (g3, g4, control) = (BASE.0, BASE.1, 13.0);
    let inputs = EngineInputs::exact_at_control(g3, g4, control).map_err(err)?;
    let res = expand_with(&inputs, 2, &ExpandOptions::default()).map_err(err)?;
    let h = res.h_eff_upto(2);
    let q = |n: i64, d: i64| {
        ExactComplex::new(BigRational::new(n.into(), d.into()), BigRational::zero())
    };
    let g3e = exact_real(g3).map_err(err)?;
    let g4e = exact_real(g4).map_err(err)?;
    // 2 Omega_d / (3 omega_o) with omega_o = 1 is the engine's Pi
    let sq = g3e.clone() * inputs.pi.clone();
    let k2 = -(q(3, 2) * g4e) + q(10, 3) * g3e.clone() * g3e;
    let ok = h.coefficient(2, 0, 0) == sq && h.coefficient(0, 2, 0) == sq && h.coefficient(2, 2, 0) == -k2;
    ensure(ok, "a'^2 + a^2 -> g3 2 Omega_d/(3 omega_o), a'^2 a^2 -> -K2, exact rationals".into())
}

struct BaseFloquet {
    levels: Vec<f64>,
    effective: Vec<f64>,
}

fn base_floquet() -> Result<BaseFloquet, String> {
    let base = ModelParams::new(BASE.0, BASE.1, 200);
    let controls = control_ramp(13.0, 0.25);
    let branch = floquet::track_ground_branch(&base, &controls, &TrackingSettings::default()).map_err(err)?;
    let p = control_to_drive(13.0, &base).map_err(err)?;
    let d = derive(&p).map_err(err)?;
    let sol = floquet::solve(&p, &SolverSettings::default()).map_err(err)?;
    let eps0 = branch.last().ok_or("empty branch")?.eps0;
    let levels = floquet::rescaled_quasienergies(&sol, eps0, d.k2).map_err(err)?.iter().map(|l| l.value).collect();
    let effective = excitation_spectrum(&h_eff2(&d, 200).map_err(err)?, d.k2).map_err(err)?.energies();
    Ok(BaseFloquet { levels, effective })
}

fn nearest(values: &[f64], x: f64) -> f64 {
    values.iter().copied().min_by(|a, b| (a - x).abs().total_cmp(&(b - x).abs())).unwrap_or(f64::NAN)
}

fn criterion_3() -> Check {
    let marked = [0.0, 51.25, 97.9, 170.1, 251.74, 364.76];
    let f = base_floquet()?;
    let mut ok = true;
    let mut parts = Vec::new();
    for m in marked {
        let q = nearest(&f.levels, m);
        let e = nearest(&f.effective, q);
        ok &= (q - m).abs() <= 1.0 && (q - e).abs() <= 1.0;
        parts.push(format!("{m}->{q:.2}(eff {e:.2})"));
    }
    ensure(ok, parts.join(" "))
}

fn base_spectrum(control: f64, n: usize) -> Result<effective::ExcitationSpectrum, String> {
    let p = control_to_drive(control, &ModelParams::new(BASE.0, BASE.1, n)).map_err(err)?;
    let d = derive(&p).map_err(err)?;
    excitation_spectrum(&h_eff2(&d, n).map_err(err)?, d.k2).map_err(err)
}

fn criterion_4() -> Check {
    let controls = [6.0, 8.0, 10.0, 12.0, 14.0];
    let gaps: Vec<Vec<f64>> = controls
        .iter()
        .map(|&c| {
            let s = base_spectrum(c, 200)?;
            analysis::kissing_gaps(&s.energies(), &s.parities())
                .map(|g| g.into_iter().map(|(_, v)| v).collect())
                .map_err(err)
        })
        .collect::<Result<_, String>>()?;
    // the ground doublet is degenerate to rounding; take the lowest pair that resolves everywhere
    let pair = (0..gaps.iter().map(Vec::len).min().unwrap_or(0))
        .find(|&k| gaps.iter().all(|g| g[k] > 1e-9))
        .ok_or("no resolvable pair")?;
    let logs: Vec<f64> = gaps.iter().map(|g| g[pair].ln()).collect();
    let monotone = logs.windows(2).all(|w| w[1] < w[0]);
    let mx = controls.iter().sum::<f64>() / 5.0;
    let my = logs.iter().sum::<f64>() / 5.0;
    let slope = controls.iter().zip(&logs).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / controls.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    ensure(
        monotone && slope < -0.5,
        format!("pair {pair}: ln gaps {:?}, slope {slope:.3}", logs.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>()),
    )
}

fn criterion_5() -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for c in [10.0, 20.0, 30.0] {
        let s = base_spectrum(c, 200)?;
        let count = s.count_below(c * c);
        let n_b = effective::esqpt_info(c).map_err(err)?.n_b;
        ok &= count.abs_diff(n_b) <= 1;
        parts.push(format!("control {c}: {count} below vs floor(2c/pi) = {n_b}"));
    }
    ensure(ok, parts.join(", "))
}

fn criterion_6() -> Check {
    let s = base_spectrum(20.0, 200)?;
    let profile = analysis::photon_number_profile(&s.vectors, &s.energies()).map_err(err)?;
    let dip = analysis::find_dip(&profile, 400.0, 0.1).ok_or("no local minimum within 10% of 400")?;
    ensure(
        dip.ratio() < 0.6,
        format!(
            "dip at E = {:.1}: <n> = {:.2}, neighbours two away {:.2}, ratio {:.3}",
            dip.energy,
            dip.photon_number,
            dip.neighbor_mean,
            dip.ratio()
        ),
    )
}

fn avg_ipr(g3: f64, g4: f64, control: f64, n: usize, order: u32) -> Result<f64, String> {
    let p = sweep::ipr_point(&ModelParams::new(g3, g4, n), control, &[order], &SolverSettings::default()).map_err(err)?;
    let (_, r) = p.reports.into_iter().next().ok_or("no report")?;
    r.map(|r| r.average).map_err(err)
}

fn criterion_7() -> Check {
    let checks = [
        ("b", 7.5e-4, 1.27e-7, 10.0, true),
        ("b", 7.5e-4, 1.27e-7, 30.0, true),
        ("d", 0.02, 1e-7, 30.0, false),
        ("a", 2e-5, 8e-6, 10.0, true),
        ("a", 2e-5, 8e-6, 30.0, false),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, g3, g4, c, high) in checks {
        let v = avg_ipr(g3, g4, c, 150, 2)?;
        ok &= if high { v > 0.9 } else { v < 0.5 };
        parts.push(format!("({name}) c={c}: {v:.3}"));
    }
    ensure(ok, parts.join(", "))
}

fn criterion_8() -> Check {
    let corner = sweep::usdist_point(&ModelParams::new(1e-5, 1e-8, 100), 10.0, 2).map_err(err)?;
    let strong = sweep::usdist_point(&ModelParams::new(0.02, 1e-7, 100), 30.0, 2).map_err(err)?;
    let weak = sweep::usdist_point(&ModelParams::new(1e-4, 1e-7, 100), 30.0, 2).map_err(err)?;
    ensure(
        corner < 1e-2 && strong >= 5.0 * weak,
        format!("d(1e-5,1e-8;10) = {corner:.2e}, d(0.02,1e-7;30) = {strong:.3e}, d(1e-4,1e-7;30) = {weak:.3e}, ratio {:.1}", strong / weak),
    )
}

fn criterion_9() -> Check {
    let g3s = logspace(1e-3, 5e-2, 12);
    let orders = [2u32, 4, 6];
    let mut curves: Vec<Vec<Option<f64>>> = vec![Vec::new(); 3];
    for &g3 in &g3s {
        let p = sweep::ipr_point(&ModelParams::new(g3, 1e-7, 100), 30.0, &orders, &SolverSettings::default()).map_err(err)?;
        for (k, (_, r)) in p.reports.iter().enumerate() {
            curves[k].push(r.as_ref().ok().map(|r| r.average));
        }
    }
    let cross: Vec<Option<f64>> = curves.iter().map(|c| sweep::crossing(&g3s, c, 0.5)).collect();
    let inf = |c: Option<f64>| c.unwrap_or(f64::INFINITY);
    let produced6 = curves[2].iter().any(Option::is_some);
    let ok = cross[0].is_some() && inf(cross[1]) > inf(cross[0]) && (!produced6 || inf(cross[2]) >= inf(cross[1]));
    let show = |c: Option<f64>| c.map_or("beyond 5e-2".to_string(), |v| format!("{v:.3e}"));
    ensure(
        ok,
        format!("crossings: order 2 {}, order 4 {}, order 6 {}", show(cross[0]), show(cross[1]), show(cross[2])),
    )
}

fn criterion_10() -> Check {
    let small = control_to_drive(13.0, &ModelParams::new(BASE.0, BASE.1, 8)).map_err(err)?;
    let oracle = common::oracle_propagator(&small, 0.0, small.frame_period(), 1e-13);
    let ours = floquet::propagate_period(&small, &SolverSettings::default()).map_err(err)?.frame_period;
    let oracle_diff = common::max_entry_diff(&oracle, &ours);

    let p = control_to_drive(13.0, &ModelParams::new(BASE.0, BASE.1, 200)).map_err(err)?;
    let d = derive(&p).map_err(err)?;
    let ground = base_spectrum(13.0, 200)?.vector(0);
    let lowest = |steps: usize| -> Result<(Vec<f64>, f64), String> {
        let s = SolverSettings {
            steps_per_drive_period: steps,
            ..Default::default()
        };
        let sol = floquet::solve(&p, &s).map_err(err)?;
        let (k, _) = sol.best_match(&ground);
        let lv = floquet::rescaled_quasienergies(&sol, sol.quasienergies[k], d.k2).map_err(err)?;
        Ok((lv.iter().take(10).map(|l| l.value).collect(), fock::unitarity_defect(&sol.u_t)))
    };
    let (base, defect) = lowest(512)?;
    let (fine, _) = lowest(1024)?;
    let shift = base.iter().zip(&fine).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(
        oracle_diff < 1e-7 && defect < 1e-9 && shift < 0.05,
        format!("N=8 oracle {oracle_diff:.2e}, N=200 unitarity {defect:.2e}, step-halving shift {shift:.2e}"),
    )
}

fn criterion_11() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_origin = 0.0f64;
    for _ in 0..20 {
        let v = CVector::from_fn(40, |_, _| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let v = &v / Complex64::new(v.norm(), 0.0);
        let g = analysis::wigner(&v, &GridSpec::square(0.0, 1)).map_err(err)?;
        let w00 = g.values[(0, 0)];
        worst_origin = worst_origin.max((w00 - FRAC_2_PI * fock::parity_expectation(v.as_slice())).abs());
    }

    let s = base_spectrum(13.0, 200)?;
    let n_b = effective::esqpt_info(13.0).map_err(err)?.n_b;
    let mut norms = Vec::new();
    for k in 0..n_b {
        let psi = s.vector(k);
        let nbar = fock::mean_photon_number(psi.as_slice());
        let hw = analysis::suggested_half_width(nbar);
        let g = analysis::wigner(&psi, &GridSpec::square(hw, analysis::suggested_points(nbar, hw))).map_err(err)?;
        norms.push(g.normalization());
    }
    let norm_ok = norms.iter().all(|v| (0.99..=1.01).contains(v));

    let panels = sweep::wigner_triptychs(
        &ModelParams::new(0.015, 1e-7, 200),
        30.0,
        2,
        &[0, 4],
        &SolverSettings::default(),
        None,
        None,
    )
    .map_err(err)?;
    let mut tri_ok = true;
    let mut tri = Vec::new();
    for p in &panels {
        let (raw, moved) = (p.l2_raw().map_err(err)?, p.l2_transformed().map_err(err)?);
        tri_ok &= moved < raw;
        tri.push(format!("level {}: {moved:.3} < {raw:.3}", p.level));
    }
    let (lo, hi) = norms.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    ensure(
        worst_origin < 1e-8 && norm_ok && tri_ok,
        format!(
            "W(0) vs parity {worst_origin:.1e}, normalization [{lo:.4}, {hi:.4}] over {n_b} states, triptych {}",
            tri.join(", ")
        ),
    )
}

fn criterion_12() -> Check {
    let cfg = RunConfig::from_toml(
        r#"
experiment = "ipr-map"
[model]
g3 = 1e-3
g4 = -1e-7
dim = 150
[control]
min = 10.0
max = 30.0
count = 2
[grid]
g3_min = 1e-5
g3_max = 2e-2
g3_count = 10
g4_min = 1e-8
g4_max = 1e-5
g4_count = 10
g4_sign = -1
"#,
    )
    .map_err(err)?;
    let dir = tempfile::tempdir().map_err(err)?;
    let m = sweep::run(&cfg, dir.path(), false).map_err(err)?;
    m.verify_files(dir.path()).map_err(err)?;
    let failed = m.points.iter().filter(|p| !p.status.is_final()).count();
    let rows = std::fs::read_to_string(dir.path().join("ipr_map.csv")).map_err(err)?;
    let mut kerr_positive = true;
    let mut high = [0usize; 2];
    let mut total = [0usize; 2];
    for line in rows.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let slot = if f[0].parse::<f64>().map_err(err)? < 20.0 { 0 } else { 1 };
        kerr_positive &= f[5].parse::<f64>().map_err(err)? > 0.0;
        total[slot] += 1;
        if f[3].parse::<f64>().is_ok_and(|v| v > 0.9) {
            high[slot] += 1;
        }
    }
    let contours = std::fs::read_to_string(dir.path().join("contours.csv")).map_err(err)?;
    let frac = |k: usize| high[k] as f64 / total[k].max(1) as f64;
    ensure(
        failed == 0 && kerr_positive && !contours.contains("k_zero") && frac(0) > frac(1),
        format!(
            "{} points ({} ok, {} flagged, {failed} failed), K > 0 everywhere: {kerr_positive}, high-I fraction {:.2} at 10 vs {:.2} at 30",
            m.points.len(),
            m.count(PointStatus::Ok),
            m.count(PointStatus::TruncationFlag),
            frac(0),
            frac(1)
        ),
    )
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("Kerr coefficient regression", criterion_1),
        ("engine order-2 gate", criterion_2),
        ("quasienergy-eigenvalue agreement", criterion_3),
        ("spectral kissing", criterion_4),
        ("below-well count", criterion_5),
        ("ESQPT photon-number drop", criterion_6),
        ("IPR region check", criterion_7),
        ("U_S distance limits", criterion_8),
        ("order convergence", criterion_9),
        ("oracle equivalence", criterion_10),
        ("Wigner identities", criterion_11),
        ("negative-g4 map", criterion_12),
    ];
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let id = k + 1;
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {id:>2} {tag} {name} ({:.1}s): {detail}", t.elapsed().as_secs_f64());
    }
    println!("acceptance: {}/{ran} passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
