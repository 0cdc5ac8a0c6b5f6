use std::io::{Read, Write};

use crate::fmt::{fmt_f64, fmt_opt};

use super::{GroupStat, MixingError, MixingResult, MixingRow, ProxyComparison};

fn csv_err(e: impl std::fmt::Display) -> MixingError {
    MixingError::Input(e.to_string())
}

/// `mixing.csv`: one row per person with variant metadata, exposure vector,
/// DM and NM.
pub fn write_mixing_csv(res: &MixingResult, out: impl Write) -> Result<(), MixingError> {
    let k = res.config.k;
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["person_id", "k", "level", "time_weighted", "exclude_home", "self_inclusion", "formula", "proxy", "income_group"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..k).map(|q| format!("tau_{q}")));
    header.push("dm".into());
    header.push("nm".into());
    w.write_record(&header).map_err(csv_err)?;
    let c = &res.config;
    let self_inc = match c.self_inclusion {
        super::SelfInclusion::Include => "include",
        super::SelfInclusion::LeaveOneOut => "leave_one_out",
    };
    let formula = match c.formula {
        super::MixingFormula::Complement => "complement",
        super::MixingFormula::AsPrinted => "as_printed",
    };
    for r in &res.rows {
        let mut row = vec![
            r.person_id.clone(),
            k.to_string(),
            c.level.to_string(),
            c.visits.time_weighted.to_string(),
            c.visits.exclude_home.to_string(),
            self_inc.to_string(),
            formula.to_string(),
            res.proxy.to_string(),
            r.group.to_string(),
        ];
        row.extend(r.tau.iter().map(|t| fmt_f64(*t)));
        row.push(fmt_f64(r.dm));
        row.push(fmt_opt(r.nm));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

/// Reads the rows of a `mixing.csv` back (values at file precision).
pub fn read_mixing_csv(input: impl Read) -> Result<Vec<MixingRow>, MixingError> {
    let mut rdr = csv::Reader::from_reader(input);
    let h = rdr.headers().map_err(csv_err)?.clone();
    let col = |name: &str| h.iter().position(|c| c == name).ok_or_else(|| MixingError::Input(format!("mixing.csv missing '{name}'")));
    let (cid, cg, cdm, cnm) = (col("person_id")?, col("income_group")?, col("dm")?, col("nm")?);
    let taus: Vec<usize> = h.iter().enumerate().filter(|(_, c)| c.starts_with("tau_")).map(|(i, _)| i).collect();
    let num = |s: &str| s.parse::<f64>().map_err(|_| MixingError::Input(format!("bad number '{s}'")));
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        rows.push(MixingRow {
            person_id: rec[cid].to_string(),
            group: rec[cg].parse().map_err(|_| MixingError::Input(format!("bad group '{}'", &rec[cg])))?,
            tau: taus.iter().map(|&i| num(&rec[i])).collect::<Result<_, _>>()?,
            dm: num(&rec[cdm])?,
            nm: if rec[cnm].is_empty() { None } else { Some(num(&rec[cnm])?) },
        });
    }
    Ok(rows)
}

pub fn write_proxy_csv(cmp: &ProxyComparison, out: impl Write) -> Result<(), MixingError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["person_id", "weight", "dm_survey", "dm_proxy"]).map_err(csv_err)?;
    for p in &cmp.pairs {
        w.write_record([p.person_id.clone(), fmt_f64(p.weight), fmt_f64(p.dm_survey), fmt_f64(p.dm_proxy)])
            .map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

/// `group_summary.csv`: one block of rows per cut.
pub fn write_group_summary(cuts: &[(String, Vec<GroupStat>)], out: impl Write) -> Result<(), MixingError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cut", "group", "n", "weight_sum", "mean", "se", "ci_low", "ci_high", "n_eff"]).map_err(csv_err)?;
    for (cut, stats) in cuts {
        for s in stats {
            w.write_record([
                cut.clone(),
                s.group.clone(),
                s.n.to_string(),
                fmt_f64(s.weight_sum),
                fmt_opt(s.mean),
                fmt_opt(s.se),
                fmt_opt(s.ci_low),
                fmt_opt(s.ci_high),
                fmt_opt(s.n_eff),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(csv_err)
}
