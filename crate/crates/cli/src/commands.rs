use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::{json, Map, Value};

use scss::bound::{
    binned_mi, bound_point_with_table, conditional_pdf_table, mi_breakdown_with_table, refinement_check, BoundConfig,
    ConditionalPdfTable, GridSpec, MiForm, UniformGrid,
};
use scss::experiments::{synthetic_laplace_corpus, validate_laplace, SegmentNorm};
use scss::io::cache::{self, cached_table};
use scss::io::checkpoint::{load_checkpoint, save_checkpoint};
use scss::io::csv_out::write_table;
use scss::io::provenance::{write_artifact, Provenance};
use scss::io::{corpus::read_manifest, read_wav, CorpusIndex};
use scss::mixture::{coefficient_pdf_convergence, coefficient_pdf_with};
use scss::sepit::{evaluate, test_set, train, SepItConfig};

use crate::{BoundArgs, CacheAction, CacheArgs, Cli, CoeffArgs, Command, Format, GridArgs, LaplaceArgs, MiArgs, SimulateArgs};

struct Ctx {
    out: PathBuf,
    seed: u64,
    workers: usize,
    format: Format,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Writes a numeric table as `<stem>.csv` plus provenance sidecar, or as
    /// `<stem>.json` with embedded provenance.
    fn emit_table(&self, stem: &str, header: &[&str], rows: &[Vec<f64>], prov: &Provenance) -> Result<PathBuf> {
        match self.format {
            Format::Csv => {
                let path = self.path(&format!("{stem}.csv"));
                write_table(&path, header, rows)?;
                prov.write_sidecar(&path)?;
                Ok(path)
            }
            Format::Json => {
                let path = self.path(&format!("{stem}.json"));
                let data: Vec<Map<String, Value>> = rows
                    .iter()
                    .map(|r| header.iter().zip(r).map(|(h, v)| (h.to_string(), json!(v))).collect())
                    .collect();
                write_artifact(&path, prov, &data)?;
                Ok(path)
            }
        }
    }

    fn emit_json(&self, name: &str, prov: &Provenance, data: &impl serde::Serialize) -> Result<PathBuf> {
        let path = self.path(name);
        write_artifact(&path, prov, data)?;
        Ok(path)
    }
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        log::info!("no --seed given, using {s}");
        s
    });
    std::fs::create_dir_all(&cli.out_dir).with_context(|| format!("creating {}", cli.out_dir.display()))?;
    let ctx = Ctx { out: cli.out_dir.clone(), seed, workers: cli.workers, format: cli.format };
    match &cli.command {
        Command::ValidateLaplace(a) => validate(&ctx, a),
        Command::CoeffPdf(a) => coeff(&ctx, a),
        Command::Bound(a) => bound(&ctx, a),
        Command::Mi(a) => mi(&ctx, a),
        Command::Simulate(a) => simulate(&ctx, a),
        Command::Cache(a) => cache_cmd(&ctx, a),
    }
}

fn validate(ctx: &Ctx, a: &LaplaceArgs) -> Result<()> {
    let norm: SegmentNorm = a.norm.parse()?;
    let (signals, source) = match &a.corpus {
        Some(dir) => {
            let manifest = a.manifest.as_ref().map(read_manifest).transpose()?;
            let index = CorpusIndex::build(dir, manifest.as_ref())?;
            log::info!("{} files indexed, {} skipped", index.len(), index.skipped.len());
            ctx.emit_json("corpus_index.json", &Provenance::new("validate-laplace", ctx.seed, &json!({}))?, &index)?;
            (index.load()?, json!({"corpus": dir}))
        }
        None => (
            synthetic_laplace_corpus(a.signals, a.duration_s, a.sample_rate, ctx.seed)?,
            json!({"synthetic": {"signals": a.signals, "duration_s": a.duration_s, "sample_rate": a.sample_rate}}),
        ),
    };
    let report = validate_laplace(&signals, a.window_ms, a.bins, norm)?;
    let config = json!({"source": source, "window_ms": a.window_ms, "bins": a.bins, "norm": norm});
    let prov = Provenance::new("validate-laplace", ctx.seed, &config)?;
    let rows: Vec<Vec<f64>> = report.rows().iter().map(|r| r.to_vec()).collect();
    let table = ctx.emit_table("laplace_pdf", &["x", "empirical", "laplace", "normal"], &rows, &prov)?;
    ctx.emit_json("laplace_report.json", &prov, &report)?;
    println!(
        "segments {}  samples {}  b {:.6}  sigma {:.6}  KL(Laplace) {:.6}  KL(normal) {:.6}",
        report.segments, report.samples, report.laplace.scale, report.normal.sigma, report.kl_laplace, report.kl_normal
    );
    println!("wrote {}", table.display());
    Ok(())
}

fn coeff(ctx: &Ctx, a: &CoeffArgs) -> Result<()> {
    let config = json!({"c": a.c, "trials": a.trials, "bins": a.bins});
    let prov = Provenance::new("coeff-pdf", ctx.seed, &config)?;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for &c in &a.c {
        let pdf = coefficient_pdf_with(c, a.trials, a.bins, ctx.seed, ctx.workers)?;
        for k in 0..pdf.bins() {
            rows.push(vec![c as f64, pdf.edges()[k], pdf.edges()[k + 1], pdf.density()[k]]);
        }
        let conv = if a.convergence {
            Some(coefficient_pdf_convergence(c, a.trials, a.bins, ctx.seed, ctx.workers)?)
        } else {
            None
        };
        println!("C={c:<3} mean a0 {:.6}{}", pdf.mean(), conv.map(|d| format!("  max change on doubling {d:.3e}")).unwrap_or_default());
        summary.push(json!({"c": c, "mean_a0": pdf.mean(), "max_change_on_doubling": conv}));
    }
    let path = ctx.emit_table("coeff_pdf", &["c", "lo", "hi", "density"], &rows, &prov)?;
    ctx.emit_json("coeff_summary.json", &prov, &summary)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn grid_config(g: &GridArgs, seed: u64, workers: usize) -> BoundConfig {
    BoundConfig {
        trials: g.trials,
        grid: GridSpec {
            m: UniformGrid::new(-g.m_range, g.m_range, g.m_bins),
            v0: UniformGrid::new(-g.v0_range, g.v0_range, g.v0_bins),
            a0: UniformGrid::new(0.0, 1.0, g.a0_bins),
        },
        seed,
        workers,
        ..Default::default()
    }
}

fn table_for(ctx: &Ctx, g: &GridArgs, c: usize, cfg: &BoundConfig) -> Result<ConditionalPdfTable> {
    if g.no_cache {
        return Ok(conditional_pdf_table(c, cfg.trials, &cfg.grid, cfg.seed, cfg.workers)?);
    }
    let dir = g.cache_dir.clone().unwrap_or_else(|| ctx.path("cache"));
    let (table, status) = cached_table(&dir, c, cfg)?;
    log::info!("C={c}: conditional table cache {status:?}");
    Ok(table)
}

fn bound(ctx: &Ctx, a: &BoundArgs) -> Result<()> {
    let cfg = BoundConfig {
        form: a.form.parse()?,
        unit: a.unit.parse()?,
        variance: a.variance.parse()?,
        signal_s: a.signal_s,
        window_s: a.window_ms / 1000.0,
        sample_rate: a.sample_rate,
        ..grid_config(&a.grid, ctx.seed, ctx.workers)
    };
    cfg.grid.validate()?;
    let prov = Provenance::new("bound", ctx.seed, &json!({"c": a.c, "bound": cfg}))?;
    let mut points = Vec::new();
    let mut rows = Vec::new();
    for &c in &a.c {
        let table = table_for(ctx, &a.grid, c, &cfg)?;
        let p = bound_point_with_table(c, &cfg, &table)?;
        let b = &p.breakdown;
        println!(
            "C={c:<3} I = {:.6} {:?}  Var(v0) = {:.4}  bound = {:.3} dB",
            p.result.mi, p.result.mi_unit, p.result.var_v0, p.result.sdr_bound_db
        );
        rows.push(vec![
            c as f64,
            b.mi_nats(cfg.form),
            p.result.mi,
            p.result.var_v0,
            p.result.l_over_w as f64,
            p.result.sdr_bound_db,
            b.mi_nats(MiForm::Marginal),
            b.mi_nats(MiForm::Joint),
            b.mi_nats(MiForm::Literal),
        ]);
        let refine = if a.refine_check { Some(refinement_check(c, &cfg)?) } else { None };
        if let Some(r) = &refine {
            println!("      doubled grids and trials: relative MI change {:.4}", r.relative_change);
        }
        points.push(json!({"point": p, "refinement": refine}));
    }
    let header = [
        "c", "mi_nats", "mi", "var_v0", "l_over_w", "bound_db", "mi_marginal_nats", "mi_joint_nats", "mi_literal_nats",
    ];
    let path = ctx.emit_table("bound_curve", &header, &rows, &prov)?;
    ctx.emit_json("bound.json", &prov, &points)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn mi(ctx: &Ctx, a: &MiArgs) -> Result<()> {
    if let (Some(x), Some(y)) = (&a.x, &a.y) {
        let xs = read_wav(x)?;
        let ys = read_wav(y)?;
        let v = binned_mi(xs.samples(), ys.samples(), a.bins)?;
        let prov = Provenance::new("mi", ctx.seed, &json!({"x": x, "y": y, "bins": a.bins}))?;
        ctx.emit_json("binned_mi.json", &prov, &json!({"mi_nats": v}))?;
        println!("I(x; y) = {v:.6} nats");
        return Ok(());
    }
    let cfg = grid_config(&a.grid, ctx.seed, ctx.workers);
    cfg.grid.validate()?;
    let prov = Provenance::new("mi", ctx.seed, &json!({"c": a.c, "bound": cfg}))?;
    let mut rows = Vec::new();
    for &c in &a.c {
        let table = table_for(ctx, &a.grid, c, &cfg)?;
        let b = mi_breakdown_with_table(c, &cfg, &table)?;
        println!(
            "C={c:<3} h(m) {:.6}  h(m|v0) {:.6}  h(m|v0,a0) {:.6}  E[ln f(a0)] {:.6}  I marginal {:.6}  joint {:.6}  literal {:.6}",
            b.h_mixture,
            b.h_given_target,
            b.h_given_target_and_weight,
            b.mean_log_weight_density,
            b.mi_nats(MiForm::Marginal),
            b.mi_nats(MiForm::Joint),
            b.mi_nats(MiForm::Literal)
        );
        rows.push(vec![
            c as f64,
            b.h_mixture,
            b.h_given_target,
            b.h_given_target_and_weight,
            b.mean_log_weight_density,
            b.lost_mass,
            b.mi_nats(MiForm::Marginal),
            b.mi_nats(MiForm::Joint),
            b.mi_nats(MiForm::Literal),
        ]);
    }
    let header = [
        "c", "h_mixture", "h_given_target", "h_given_target_and_weight", "mean_log_weight_density", "lost_mass",
        "mi_marginal", "mi_joint", "mi_literal",
    ];
    let path = ctx.emit_table("segment_mi", &header, &rows, &prov)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn simulate(ctx: &Ctx, a: &SimulateArgs) -> Result<()> {
    let mut cfg = SepItConfig {
        c: a.c,
        n: a.n,
        k: a.k,
        max_iter: a.max_iter,
        lr: a.lr,
        lr_decay: a.lr_decay,
        steps_per_epoch: a.steps_per_epoch,
        steps: a.steps,
        batch: a.batch,
        crop: a.crop,
        mi_bins: a.mi_bins,
        share_weights: a.share_weights,
        interference_db: a.interference_db,
        source_model: a.source_model.parse()?,
        sample_rate: a.sample_rate,
        seed: ctx.seed,
        ..Default::default()
    };
    cfg.validate()?;
    let test_len = (a.test_seconds * a.sample_rate).round() as usize;
    let need = 10 * a.mi_bins * a.mi_bins;
    if test_len < need {
        bail!(scss::Error::InvalidParameter(format!(
            "test mixtures of {test_len} samples are too short for {} MI bins (need {need})",
            a.mi_bins
        )));
    }

    let (blocks, log) = scss::rng::with_workers(ctx.workers, || -> Result<_> {
        match &a.load {
            Some(p) => {
                let (header, blocks) = load_checkpoint::<f32>(p)?;
                cfg = SepItConfig { seed: ctx.seed, ..header.config };
                Ok((blocks, Vec::new()))
            }
            None => {
                let t = train::<f32>(&cfg)?;
                Ok((t.blocks, t.log))
            }
        }
    })?;
    if a.load.is_none() {
        save_checkpoint(ctx.path("model.scssmdl"), &cfg, &blocks)?;
    }
    let test = test_set::<f32>(&cfg, a.test_mixtures, test_len)?;
    let (report, traces) = scss::rng::with_workers(ctx.workers, || evaluate(&cfg, &blocks, &test))?;

    let config = json!({"sepit": cfg, "test_mixtures": a.test_mixtures, "test_seconds": a.test_seconds, "loaded": a.load});
    let prov = Provenance::new("simulate", ctx.seed, &config)?;
    if !log.is_empty() {
        let rows: Vec<Vec<f64>> = log.iter().map(|e| vec![e.block as f64, e.step as f64, e.lr, e.loss]).collect();
        ctx.emit_table("learning_curve", &["block", "step", "lr", "loss"], &rows, &prov)?;
    }
    let rows: Vec<Vec<f64>> = (0..=cfg.max_iter)
        .map(|j| {
            vec![
                j as f64,
                report.mean_si_sdr[j],
                report.improvement_over_backbone(j),
                report.improvement_over_mixture(j),
                report.mean_mi[j],
            ]
        })
        .collect();
    let path = ctx.emit_table(
        "iterations",
        &["iteration", "mean_si_sdr", "si_sdri_over_backbone", "si_sdri_over_mixture", "mean_mi"],
        &rows,
        &prov,
    )?;
    let trace_data: Vec<Value> = traces
        .iter()
        .zip(&report.stopped_at)
        .zip(&report.stop_reasons)
        .map(|((t, s), r)| json!({"mi": t.mi, "si_sdr": t.si_sdr, "stopped_at": s, "stop_reason": r}))
        .collect();
    ctx.emit_json("traces.json", &prov, &trace_data)?;
    ctx.emit_json("report.json", &prov, &report)?;

    for (j, r) in rows.iter().enumerate() {
        println!("iter {j}: SI-SDR {:.3} dB  gain over backbone {:+.3} dB  MI {:.4}", r[1], r[2], r[4]);
    }
    println!(
        "with stopping rule: {:.3} dB   best fixed iteration {}: {:.3} dB",
        report.sc_si_sdr, report.best_iteration, report.best_si_sdr
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn cache_cmd(ctx: &Ctx, a: &CacheArgs) -> Result<()> {
    let dir = a.dir.clone().unwrap_or_else(|| ctx.path("cache"));
    match a.action {
        CacheAction::List => {
            for e in cache::list(&dir)? {
                let key = e.key.as_ref().map(|k| format!("C={} M={} seed={}", k.c, k.trials, k.seed)).unwrap_or_default();
                let state = e.problem.as_deref().unwrap_or("ok");
                println!("{}  {} bytes  {key}  {state}", display(&e.path), e.bytes);
            }
        }
        CacheAction::Verify => {
            let mut bad = 0;
            for e in cache::list(&dir)? {
                match cache::verify(&e.path) {
                    Ok(()) => println!("ok       {}", display(&e.path)),
                    Err(err) => {
                        bad += 1;
                        println!("corrupt  {}  {err}", display(&e.path));
                    }
                }
            }
            if bad > 0 {
                return Err(scss::Error::Corrupt(format!("{bad} corrupt cache entries")).into());
            }
        }
        CacheAction::Purge => println!("removed {} tables", cache::purge(&dir)?),
    }
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
