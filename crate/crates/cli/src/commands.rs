use std::collections::HashMap;
use std::path::Path;

use matched_illum::colorimetry::CmfSet;
use matched_illum::correction::{evaluate_with, DeltaEStats, EvalOptions};
use matched_illum::datasets;
use matched_illum::illuminator::manifest::write_model;
use matched_illum::illuminator::synthetic::{peak_shifts, uv_drift};
use matched_illum::illuminator::{solve_metamer, IlluminatorModel, RenderMode};
use matched_illum::io::spectra_csv;
use matched_illum::matcher::{solve_match, MatchProblem, MatchResult};
use matched_illum::spectral::{Spectrum, Tristimulus};
use matched_illum::synth::{fit_all, macbeth_candidates, synth_rgb};
use matched_illum::Error;
use serde::Serialize;
use serde_json::json;

use crate::config::{read_reflectances, MeasureLight, ModeArg, RunConfig};
use crate::output::{Cell, OutDir};
use crate::Failure;

pub fn characterize(cfg: &mut RunConfig, shift: Option<f64>, out: &OutDir) -> Result<(), Failure> {
    if cfg.illuminator.is_none() {
        let mut s = cfg.synthetic.clone().unwrap_or_default();
        if let Some(nm) = shift {
            if !(nm >= 0.0) {
                return Err(Failure::Usage(format!(
                    "shift must be nonnegative, got {nm}"
                )));
            }
            s = s.with_max_shift(nm);
        }
        cfg.synthetic = Some(s);
    }
    let model = cfg.model()?;
    let x = cfg.cmf()?;
    out.json("config.json", cfg)?;
    write_model(&model, out.path(""), "illuminator")?;

    let shifts = peak_shifts(&model);
    let drift = uv_drift(&model, &x)?;
    let levels = model.levels().len();
    let mut header: Vec<String> = vec![
        "channel".into(),
        "peak_full_nm".into(),
        "max_shift_nm".into(),
    ];
    header.extend((1..levels).map(|j| format!("peak_L{j:02}_nm")));
    let rows: Vec<Vec<Cell>> = shifts
        .iter()
        .map(|s| {
            let mut r: Vec<Cell> = vec![
                s.channel.as_str().into(),
                s.peak_full_nm.into(),
                s.max_shift_nm.into(),
            ];
            r.extend(s.peaks_nm.iter().map(|&p| Cell::from(p)));
            r
        })
        .collect();
    out.csv(
        "peak_shifts.csv",
        &header.iter().map(String::as_str).collect::<Vec<_>>(),
        &rows,
    )?;
    let rows: Vec<Vec<Cell>> = drift
        .iter()
        .map(|d| {
            vec![
                d.channel.as_str().into(),
                d.level.into(),
                d.u.into(),
                d.v.into(),
                d.distance.into(),
            ]
        })
        .collect();
    out.csv(
        "uv_drift.csv",
        &["channel", "level", "u", "v", "distance"],
        &rows,
    )?;

    let max_shift = shifts.iter().map(|s| s.max_shift_nm).fold(0.0, f64::max);
    let identical = identical_channels(&model);
    out.json(
        "characterize.json",
        &json!({
            "channels": model.channels(),
            "levels": model.levels(),
            "names": model.names(),
            "identical_channels": identical,
            "max_peak_shift_nm": max_shift,
            "peak_shifts": shifts,
            "uv_drift": drift,
        }),
    )?;

    println!("{} channels x {} levels", model.channels(), levels);
    for s in &shifts {
        println!(
            "  {:<12} peak {:>6.1} nm  max shift {:>5.1} nm",
            s.channel, s.peak_full_nm, s.max_shift_nm
        );
    }
    for pair in &identical {
        println!("  channels {} and {} are identical", pair[0], pair[1]);
    }
    println!("max peak shift: {max_shift:.1} nm");
    Ok(())
}

/// 1-based pairs of channels with identical spectra at every level.
fn identical_channels(model: &IlluminatorModel) -> Vec<[usize; 2]> {
    let k = model.channels();
    let levels = model.levels().len();
    let mut out = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            if (0..levels).all(|j| model.spectrum(a, j) == model.spectrum(b, j)) {
                out.push([a + 1, b + 1]);
            }
        }
    }
    out
}

pub fn metamer(cfg: &RunConfig, out: &OutDir) -> Result<(), Failure> {
    out.json("config.json", cfg)?;
    let x = cfg.cmf()?;
    let model = cfg.model()?;
    let (name, target) = cfg.target()?;
    let mut sols = Vec::new();
    for mode in cfg.mode.unwrap_or(ModeArg::Complex).modes() {
        let sol = solve_metamer(&model, &target, &x, mode)?;
        println!(
            "{mode}: scale {:.4}, XYZ residual {:.2e}, spectral error {:.4}, weights {}",
            sol.scale,
            sol.xyz_residual,
            sol.spectral_error,
            fmt_weights(sol.weights.as_slice())
        );
        sols.push(sol);
    }
    out.json(
        "metamer.json",
        &json!({ "target": name, "solutions": sols }),
    )?;
    let scaled = target.scaled(sols[0].scale);
    let names: Vec<String> = sols.iter().map(|s| format!("metamer_{}", s.mode)).collect();
    let mut cols: Vec<(&str, &Spectrum)> = vec![("target_scaled", &scaled)];
    cols.extend(
        names
            .iter()
            .map(String::as_str)
            .zip(sols.iter().map(|s| &s.spectrum)),
    );
    out.text("metamer_spd.csv", &spectra_csv(cols))?;
    Ok(())
}

struct Inputs {
    x: CmfSet,
    model: IlluminatorModel,
    target_name: String,
    metamer: Spectrum,
    measure: Spectrum,
}

fn inputs(cfg: &RunConfig) -> Result<Inputs, Failure> {
    let x = cfg.cmf()?;
    let model = cfg.model()?;
    let (target_name, target) = cfg.target()?;
    let metamer = solve_metamer(&model, &target, &x, RenderMode::Complex)?.spectrum;
    let measure = match cfg.measure {
        MeasureLight::Metamer => metamer.clone(),
        MeasureLight::Target => target,
    };
    Ok(Inputs {
        x,
        model,
        target_name,
        metamer,
        measure,
    })
}

fn solve_modes(cfg: &RunConfig, inp: &Inputs, out: &OutDir) -> Result<Vec<MatchResult>, Failure> {
    let q = cfg.camera()?;
    let mut results = Vec::new();
    for mode in cfg.mode.unwrap_or(ModeArg::Both).modes() {
        let mut p = MatchProblem::new(&inp.measure, &q, &inp.x, &inp.model, mode);
        p.tol = cfg.tol();
        p.max_iters = cfg.max_iters();
        match solve_match(&p) {
            Ok(r) => results.push(r),
            Err(e) => {
                if let Error::Oscillation { best, .. } = &e {
                    out.json(&format!("trace_{mode}.json"), best)?;
                }
                return Err(e.into());
            }
        }
    }
    Ok(results)
}

pub fn match_lights(cfg: &RunConfig, out: &OutDir) -> Result<(), Failure> {
    out.json("config.json", cfg)?;
    let inp = inputs(cfg)?;
    let results = solve_modes(cfg, &inp, out)?;
    let mut emitted = Vec::new();
    for r in &results {
        println!(
            "{}: objective {:.6e} after {} iterations (converged: {}), weights {}",
            r.mode,
            r.objective,
            r.iterations,
            r.converged,
            fmt_weights(r.weights.as_slice())
        );
        emitted.push((
            format!("matched_{}", r.mode),
            r.render(&inp.model, RenderMode::Complex)?,
        ));
    }
    out.json(
        "match.json",
        &json!({ "target": inp.target_name, "measure": cfg.measure, "results": results }),
    )?;
    let mut cols: Vec<(&str, &Spectrum)> = vec![("measurement", &inp.measure)];
    cols.extend(emitted.iter().map(|(n, s)| (n.as_str(), s)));
    out.text("matched_spd.csv", &spectra_csv(cols))?;
    Ok(())
}

#[derive(Serialize)]
struct ReportRow {
    set: String,
    light: String,
    #[serde(flatten)]
    stats: DeltaEStats,
}

pub fn evaluate(cfg: &RunConfig, out: &OutDir) -> Result<(), Failure> {
    out.json("config.json", cfg)?;
    let q = cfg.camera()?;
    let inp = inputs(cfg)?;
    let results = solve_modes(cfg, &inp, out)?;
    // Every light is evaluated as the illuminator actually emits it.
    let mut lights = vec![("metamer".to_string(), inp.metamer.clone())];
    for r in &results {
        lights.push((
            r.mode.to_string(),
            r.render(&inp.model, RenderMode::Complex)?,
        ));
    }
    let opts = EvalOptions {
        white_balance: cfg.white_balance,
        holdout_every: cfg.holdout_every,
        ..Default::default()
    };
    let mut rows = Vec::new();
    let mut per_sample = Vec::new();
    for (set, refl) in cfg.reflectance_sets()? {
        for (light, e) in &lights {
            let ev = evaluate_with(&q, &inp.measure, e, &refl, &inp.x, &opts)?;
            for (id, de) in ev.per_sample {
                per_sample.push(vec![
                    set.as_str().into(),
                    light.as_str().into(),
                    id.into(),
                    de.into(),
                ]);
            }
            rows.push(ReportRow {
                set: set.clone(),
                light: light.clone(),
                stats: ev.stats,
            });
        }
    }

    let table: Vec<Vec<Cell>> = rows
        .iter()
        .map(|r| {
            let s = &r.stats;
            vec![
                r.set.as_str().into(),
                r.light.as_str().into(),
                s.n.into(),
                s.mean.into(),
                s.median.into(),
                s.p95.into(),
                s.p99.into(),
                s.max.into(),
            ]
        })
        .collect();
    out.csv(
        "report.csv",
        &["set", "light", "n", "mean", "median", "p95", "p99", "max"],
        &table,
    )?;
    out.csv(
        "per_sample.csv",
        &["set", "light", "id", "delta_e"],
        &per_sample,
    )?;
    let weights: HashMap<String, &[f64]> = results
        .iter()
        .map(|r| (r.mode.to_string(), r.weights.as_slice()))
        .collect();
    out.json(
        "report.json",
        &json!({
            "target": inp.target_name,
            "measure": cfg.measure,
            "weights": weights,
            "rows": rows,
        }),
    )?;

    println!(
        "{:<16} {:<8} {:>5} {:>7} {:>7} {:>7} {:>7} {:>7}",
        "set", "light", "n", "mean", "median", "p95", "p99", "max"
    );
    for r in &rows {
        let s = &r.stats;
        println!(
            "{:<16} {:<8} {:>5} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3}",
            r.set, r.light, s.n, s.mean, s.median, s.p95, s.p99, s.max
        );
    }
    Ok(())
}

pub fn synth(
    cfg: &RunConfig,
    targets: Option<&Path>,
    candidates: Option<&Path>,
    rgb: Option<&Path>,
    out: &OutDir,
) -> Result<(), Failure> {
    out.json(
        "config.json",
        &json!({
            "run": cfg,
            "targets": targets,
            "candidates": candidates,
            "rgb": rgb,
        }),
    )?;
    let targets = match targets {
        Some(p) => read_reflectances(p)?,
        None => datasets::sfu_surrogate(cfg.seed()),
    };
    let cands = match candidates {
        Some(p) => read_reflectances(p)?,
        None => macbeth_candidates(
            &datasets::colorchecker(),
            cfg.achromatic.unwrap_or_default(),
        )?,
    };
    let cand_spectra: Vec<Spectrum> = cands.iter().map(|(_, s)| s.clone()).collect();
    let target_spectra: Vec<Spectrum> = targets.iter().map(|(_, s)| s.clone()).collect();
    let fits = fit_all(&target_spectra, &cand_spectra)?;

    let mut header = vec!["target".to_string(), "rel_error".to_string()];
    for i in 1..=4 {
        header.push(format!("patch_{i}"));
        header.push(format!("coef_{i}"));
    }
    let rows: Vec<Vec<Cell>> = targets
        .iter()
        .zip(&fits)
        .map(|((name, _), f)| {
            let mut r: Vec<Cell> = vec![name.as_str().into(), f.rel_error.into()];
            for slot in 0..4 {
                match (f.indices.get(slot), f.coeffs.get(slot)) {
                    (Some(&i), Some(&c)) => {
                        r.push(cands[i].0.as_str().into());
                        r.push(c.into());
                    }
                    _ => {
                        r.push("".into());
                        r.push("".into());
                    }
                }
            }
            r
        })
        .collect();
    out.csv(
        "fits.csv",
        &header.iter().map(String::as_str).collect::<Vec<_>>(),
        &rows,
    )?;
    let fits_json: Vec<_> = targets
        .iter()
        .zip(&fits)
        .map(|((name, _), f)| {
            json!({
                "target": name,
                "patches": f.indices.iter().map(|&i| cands[i].0.as_str()).collect::<Vec<_>>(),
                "indices": f.indices,
                "coeffs": f.coeffs,
                "rel_error": f.rel_error,
            })
        })
        .collect();
    out.json("fits.json", &fits_json)?;

    if let Some(p) = rgb {
        let measured = read_rgbs(p)?;
        let ordered: Vec<Tristimulus> = cands
            .iter()
            .map(|(name, _)| {
                measured.get(name).copied().ok_or_else(|| {
                    Failure::Usage(format!("{}: no RGB for candidate `{name}`", p.display()))
                })
            })
            .collect::<Result<_, _>>()?;
        let rows: Vec<Vec<Cell>> = targets
            .iter()
            .zip(&fits)
            .map(|((name, _), f)| {
                let t = synth_rgb(f, &ordered);
                vec![name.as_str().into(), t[0].into(), t[1].into(), t[2].into()]
            })
            .collect();
        out.csv("synth_rgb.csv", &["id", "r", "g", "b"], &rows)?;
    }

    let mut errs: Vec<f64> = fits.iter().map(|f| f.rel_error).collect();
    errs.sort_by(f64::total_cmp);
    let pct = |p: f64| matched_illum::correction::percentile_sorted(&errs, p);
    println!(
        "{} targets from {} candidates: relative error median {:.2}%, p75 {:.2}%, max {:.2}%",
        fits.len(),
        cands.len(),
        100.0 * pct(0.5),
        100.0 * pct(0.75),
        100.0 * errs.last().copied().unwrap_or(0.0)
    );
    Ok(())
}

fn read_rgbs(p: &Path) -> Result<HashMap<String, Tristimulus>, Failure> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(p)?;
    let mut out = HashMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = || {
            Failure::Usage(format!(
                "{}: row {} must be `id,r,g,b`",
                p.display(),
                line + 2
            ))
        };
        if rec.len() != 4 {
            return Err(bad());
        }
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad());
        out.insert(
            rec[0].to_string(),
            Tristimulus::new(num(1)?, num(2)?, num(3)?),
        );
    }
    Ok(out)
}

fn fmt_weights(c: &[f64]) -> String {
    let parts: Vec<String> = c.iter().map(|v| format!("{v:.3}")).collect();
    format!("[{}]", parts.join(", "))
}
