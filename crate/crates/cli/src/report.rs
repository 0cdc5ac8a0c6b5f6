//! Plot-ready figure and table files assembled from stage artifacts.

use std::collections::BTreeMap;
use std::io::Write;

use mixcity_core::fmt::fmt_f64;
use mixcity_embed::protocol::ComboSummary;

use crate::stages::{self, Context};
use crate::CliError;

pub const FIG1B: &str = "report/fig1b_pairs.csv";
pub const FIG2: &str = "report/fig2_panels.csv";
pub const FIG3: &str = "report/fig3_lmg.csv";
pub const TABLE1: &str = "report/table1.csv";
pub const FIG5A: &str = "report/fig5a_combos.csv";
pub const FIG5B: &str = "report/fig5b_transfer.csv";

/// Artifacts the report reads; all must exist except the proxy pairs, which
/// are only produced when census zones are configured.
pub const INPUTS: [&str; 7] =
    [stages::PROXY, stages::MIXING_SUMMARY, stages::GROUP_SUMMARY, stages::LMG, stages::REGRESSION, stages::COMBOS, stages::TRANSFER];

/// Cuts shown in the group-comparison panels.
pub const FIG2_CUTS: [&str; 4] = ["income", "age", "caregiver", "work_status"];

type Table = (Vec<String>, Vec<Vec<String>>);

fn read_table(ctx: &Context, rel: &str) -> Result<Table, CliError> {
    let mut r = csv::Reader::from_reader(ctx_open(ctx, rel)?);
    let header = r.headers().map_err(|e| CliError::Io(format!("{rel}: {e}")))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(|e| CliError::Io(format!("{rel}: {e}")))?.iter().map(String::from).collect());
    }
    Ok((header, rows))
}

fn ctx_open(ctx: &Context, rel: &str) -> Result<std::fs::File, CliError> {
    std::fs::File::open(ctx.path(rel)).map_err(|_| CliError::MissingArtifact(format!("{rel}; run the stage that produces it first")))
}

fn write_table(ctx: &Context, rel: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let p = ctx.path(rel);
    if let Some(d) = p.parent() {
        std::fs::create_dir_all(d).map_err(|e| CliError::Io(e.to_string()))?;
    }
    let mut w = csv::Writer::from_path(&p).map_err(|e| CliError::Io(format!("{rel}: {e}")))?;
    w.write_record(header).map_err(|e| CliError::Io(e.to_string()))?;
    for r in rows {
        w.write_record(r).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

fn col(header: &[String], name: &str) -> Result<usize, CliError> {
    header.iter().position(|h| h == name).ok_or_else(|| CliError::Io(format!("missing column '{name}'")))
}

pub fn emit(ctx: &Context) -> Result<Vec<String>, CliError> {
    for rel in &INPUTS[1..] {
        if !ctx.path(rel).exists() {
            return Err(CliError::MissingArtifact(format!("{rel}; run the stage that produces it first")));
        }
    }
    fig1b(ctx)?;

    let (h, rows) = read_table(ctx, stages::GROUP_SUMMARY)?;
    let c = col(&h, "cut")?;
    let rows: Vec<_> = rows.into_iter().filter(|r| FIG2_CUTS.contains(&r[c].as_str())).collect();
    write_table(ctx, FIG2, &h, &rows)?;

    let (h, rows) = read_table(ctx, stages::LMG)?;
    write_table(ctx, FIG3, &h, &rows)?;

    table1(ctx)?;

    let (h, rows) = read_table(ctx, stages::COMBOS)?;
    write_table(ctx, FIG5A, &h, &rows)?;
    let (h, rows) = read_table(ctx, stages::TRANSFER)?;
    write_table(ctx, FIG5B, &h, &rows)?;
    Ok([FIG1B, FIG2, FIG3, TABLE1, FIG5A, FIG5B].map(String::from).to_vec())
}

fn fig1b(ctx: &Context) -> Result<(), CliError> {
    let header: Vec<String> = ["person_id", "weight", "dm_survey", "dm_proxy", "slope", "intercept"].map(String::from).to_vec();
    if !ctx.path(stages::PROXY).exists() {
        return write_table(ctx, FIG1B, &header, &[]);
    }
    let summary: serde_json::Value =
        serde_json::from_reader(ctx_open(ctx, stages::MIXING_SUMMARY)?).map_err(|e| CliError::Io(e.to_string()))?;
    let fit = |k: &str| summary["proxy"][k].as_f64().map(fmt_f64).unwrap_or_default();
    let (slope, intercept) = (fit("slope"), fit("intercept"));
    let (_, rows) = read_table(ctx, stages::PROXY)?;
    let rows: Vec<Vec<String>> = rows
        .into_iter()
        .map(|mut r| {
            r.push(slope.clone());
            r.push(intercept.clone());
            r
        })
        .collect();
    write_table(ctx, FIG1B, &header, &rows)
}

/// Model 1 and model 2 side by side, one row per term in model-2 order, then
/// the fit statistics.
fn table1(ctx: &Context) -> Result<(), CliError> {
    let (h, rows) = read_table(ctx, stages::REGRESSION)?;
    let (m, t, c, s, r2, n) = (col(&h, "model")?, col(&h, "term")?, col(&h, "coef")?, col(&h, "robust_se")?, col(&h, "r2")?, col(&h, "n")?);
    let mut terms: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, String), (String, String)> = BTreeMap::new();
    let mut stats: BTreeMap<String, (String, String)> = BTreeMap::new();
    for r in &rows {
        if r[m] == "model2" && !terms.contains(&r[t]) {
            terms.push(r[t].clone());
        }
        cells.insert((r[m].clone(), r[t].clone()), (r[c].clone(), r[s].clone()));
        stats.insert(r[m].clone(), (r[r2].clone(), r[n].clone()));
    }
    let get = |model: &str, term: &str| cells.get(&(model.to_string(), term.to_string())).cloned().unwrap_or_default();
    let mut out = Vec::new();
    for term in &terms {
        let (c1, s1) = get("model1", term);
        let (c2, s2) = get("model2", term);
        out.push(vec![term.clone(), c1, s1, c2, s2]);
    }
    let stat = |model: &str| stats.get(model).cloned().unwrap_or_default();
    let ((r21, n1), (r22, n2)) = (stat("model1"), stat("model2"));
    out.push(vec!["r2".into(), r21, String::new(), r22, String::new()]);
    out.push(vec!["n".into(), n1, String::new(), n2, String::new()]);
    let header = ["term", "model1_coef", "model1_se", "model2_coef", "model2_se"].map(String::from);
    write_table(ctx, TABLE1, &header, &out)
}

/// `combos.csv`: one row per combo, with the ablation deltas flattened into
/// `ablate_<component>_dloss` / `_dr2` columns.
pub fn write_combo_summary(rows: &[ComboSummary], out: impl Write) -> Result<(), CliError> {
    let comps = ["h_h", "h_a", "h_d"];
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["combo", "n_splits", "mean_r2", "sd_r2", "mae", "mse", "raw_mean_r2"].map(String::from).to_vec();
    for c in comps {
        header.push(format!("ablate_{c}_dloss"));
        header.push(format!("ablate_{c}_dr2"));
    }
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(&header).map_err(io)?;
    for s in rows {
        let mut rec = vec![
            s.combo.clone(),
            s.n_splits.to_string(),
            fmt_f64(s.mean_r2),
            fmt_f64(s.sd_r2),
            fmt_f64(s.mae),
            fmt_f64(s.mse),
            fmt_f64(s.raw_mean_r2),
        ];
        for c in comps {
            match s.ablation.get(c) {
                Some((dl, dr)) => rec.extend([fmt_f64(*dl), fmt_f64(*dr)]),
                None => rec.extend([String::new(), String::new()]),
            }
        }
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}
