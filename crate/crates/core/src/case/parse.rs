use std::collections::HashSet;

use super::{
    BranchRecord, BusRecord, CaseData, GenRecord, BRANCH_COLUMNS, BUS_COLUMNS, BUS_ISOLATED,
    BUS_PQ, DCLINE_COLUMNS, DCLINE_SHORT_COLUMNS, GEN_COLUMNS,
};
use crate::error::{Error, Result};
use crate::grid::{ControlMode, LccLink};

#[derive(Debug, Clone)]
struct Token {
    text: String,
    line: usize,
}

#[derive(Debug, Clone)]
struct Row {
    line: usize,
    tokens: Vec<Token>,
}

#[derive(Debug, Default)]
struct RawCase {
    name: Option<String>,
    base_mva: Option<(usize, f64)>,
    sections: Vec<(String, usize, Vec<Row>)>,
}

/// Strip a trailing `%` comment, ignoring `%` inside single quotes.
fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '\'' => quoted = !quoted,
            '%' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

fn tokenize_into(text: &str, line: usize, rows: &mut Vec<Row>, current: &mut Vec<Token>) {
    // `;` closes a row; a newline also closes a row (handled by the caller).
    for (i, piece) in text.split(';').enumerate() {
        if i > 0 && !current.is_empty() {
            rows.push(Row {
                line: current[0].line,
                tokens: std::mem::take(current),
            });
        }
        for t in piece
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
        {
            current.push(Token {
                text: t.to_string(),
                line,
            });
        }
    }
}

fn scan(text: &str) -> Result<RawCase> {
    let mut raw = RawCase::default();
    // (section name, start line, rows, pending row tokens)
    let mut open: Option<(String, usize, Vec<Row>, Vec<Token>)> = None;
    let mut in_cell = false;

    for (idx, full_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(full_line);

        if in_cell {
            if line.contains('}') {
                in_cell = false;
            }
            continue;
        }

        if let Some((name, start, mut rows, mut pending)) = open.take() {
            let (body, closed) = match line.find(']') {
                Some(pos) => (&line[..pos], true),
                None => (line, false),
            };
            tokenize_into(body, line_no, &mut rows, &mut pending);
            if !pending.is_empty() {
                rows.push(Row {
                    line: pending[0].line,
                    tokens: std::mem::take(&mut pending),
                });
            }
            if closed {
                raw.sections.push((name, start, rows));
            } else {
                open = Some((name, start, rows, pending));
            }
            continue;
        }

        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("function") {
            if let Some(eq) = rest.find('=') {
                raw.name = Some(rest[eq + 1..].trim().trim_end_matches(';').to_string());
            }
            continue;
        }
        let Some(rest) = trimmed.strip_prefix("mpc.") else {
            continue;
        };
        let Some(eq) = rest.find('=') else {
            return Err(Error::parse(
                line_no,
                format!("expected assignment: {trimmed}"),
            ));
        };
        let key = rest[..eq].trim().to_string();
        let value = rest[eq + 1..].trim();

        if let Some(body) = value.strip_prefix('[') {
            let mut rows = Vec::new();
            let mut pending = Vec::new();
            let (body, closed) = match body.find(']') {
                Some(pos) => (&body[..pos], true),
                None => (body, false),
            };
            tokenize_into(body, line_no, &mut rows, &mut pending);
            if !pending.is_empty() {
                rows.push(Row {
                    line: pending[0].line,
                    tokens: std::mem::take(&mut pending),
                });
            }
            if closed {
                raw.sections.push((key, line_no, rows));
            } else {
                open = Some((key, line_no, rows, pending));
            }
        } else if value.starts_with('{') {
            in_cell = !value.contains('}');
        } else if key == "baseMVA" {
            let v = parse_number(value.trim_end_matches(';').trim(), line_no)?;
            raw.base_mva = Some((line_no, v));
        }
    }

    if let Some((name, start, _, _)) = open {
        return Err(Error::parse(
            start,
            format!("section mpc.{name} is not closed"),
        ));
    }
    Ok(raw)
}

fn parse_number(text: &str, line: usize) -> Result<f64> {
    match text {
        "Inf" | "inf" => Ok(f64::INFINITY),
        "-Inf" | "-inf" => Ok(f64::NEG_INFINITY),
        _ => text
            .parse::<f64>()
            .map_err(|_| Error::parse(line, format!("malformed numeric field '{text}'"))),
    }
}

fn parse_id(token: &Token) -> Result<u32> {
    let v = parse_number(&token.text, token.line)?;
    if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
        return Err(Error::parse(
            token.line,
            format!("bus id '{}' is not a non-negative integer", token.text),
        ));
    }
    Ok(v as u32)
}

fn numbers(row: &Row, min: usize, what: &str) -> Result<Vec<f64>> {
    if row.tokens.len() < min {
        return Err(Error::parse(
            row.line,
            format!(
                "{what} record has {} fields, expected at least {min}",
                row.tokens.len()
            ),
        ));
    }
    row.tokens
        .iter()
        .map(|t| parse_number(&t.text, t.line))
        .collect()
}

fn bus_record(row: &Row) -> Result<BusRecord> {
    let v = numbers(row, BUS_COLUMNS, "bus")?;
    let id = parse_id(&row.tokens[0])?;
    let kind = v[1];
    if kind.fract() != 0.0 || !(BUS_PQ as f64..=BUS_ISOLATED as f64).contains(&kind) {
        return Err(Error::parse(row.line, format!("invalid bus type {kind}")));
    }
    Ok(BusRecord {
        id,
        kind: kind as u8,
        pd: v[2],
        qd: v[3],
        gs: v[4],
        bs: v[5],
        area: v[6],
        vm: v[7],
        va: v[8],
        base_kv: v[9],
        zone: v[10],
        vmax: v[11],
        vmin: v[12],
        extra: v[BUS_COLUMNS..].to_vec(),
    })
}

fn gen_record(row: &Row) -> Result<GenRecord> {
    let v = numbers(row, GEN_COLUMNS, "gen")?;
    Ok(GenRecord {
        bus: parse_id(&row.tokens[0])?,
        pg: v[1],
        qg: v[2],
        qmax: v[3],
        qmin: v[4],
        vg: v[5],
        mbase: v[6],
        status: v[7],
        pmax: v[8],
        pmin: v[9],
        extra: v[GEN_COLUMNS..].to_vec(),
    })
}

fn branch_record(row: &Row) -> Result<BranchRecord> {
    let v = numbers(row, BRANCH_COLUMNS, "branch")?;
    Ok(BranchRecord {
        from: parse_id(&row.tokens[0])?,
        to: parse_id(&row.tokens[1])?,
        r: v[2],
        x: v[3],
        b: v[4],
        rate_a: v[5],
        rate_b: v[6],
        rate_c: v[7],
        ratio: v[8],
        angle: v[9],
        status: v[10],
        angmin: v[11],
        angmax: v[12],
        extra: v[BRANCH_COLUMNS..].to_vec(),
    })
}

fn control_mode(token: &Token) -> Result<ControlMode> {
    let name = token.text.trim_matches(|c| c == '\'' || c == '"');
    match name {
        "P-V" => Ok(ControlMode::PowerVoltage),
        "I-V" => Ok(ControlMode::CurrentVoltage),
        other => {
            let parts: Vec<&str> = other.split('-').collect();
            let known = |p: &str| matches!(p, "P" | "V" | "I" | "A" | "T");
            if parts.len() == 2 && parts.iter().all(|p| known(p)) {
                Err(Error::parse(
                    token.line,
                    format!("control mode '{other}' is not supported (use P-V or I-V)"),
                ))
            } else {
                Err(Error::parse(
                    token.line,
                    format!("unknown control mode '{other}'"),
                ))
            }
        }
    }
}

fn dcline_record(row: &Row) -> Result<LccLink> {
    let n = row.tokens.len();
    if n != DCLINE_COLUMNS && n != DCLINE_SHORT_COLUMNS {
        return Err(Error::parse(
            row.line,
            format!(
                "dcline record has {n} fields, expected {DCLINE_COLUMNS} or {DCLINE_SHORT_COLUMNS}"
            ),
        ));
    }
    let t = &row.tokens;
    let num = |i: usize| parse_number(&t[i].text, t[i].line);
    let count = |i: usize| -> Result<u32> {
        let v = num(i)?;
        if v.fract() != 0.0 || v < 0.0 {
            return Err(Error::parse(t[i].line, "bridge count must be an integer"));
        }
        Ok(v as u32)
    };

    let r_bus = parse_id(&t[0])?;
    let i_bus = parse_id(&t[1])?;
    let link = if n == DCLINE_COLUMNS {
        LccLink {
            r_bus,
            i_bus,
            bridges_r: count(2)?,
            bridges_i: count(3)?,
            control: control_mode(&t[4])?,
            p_set: num(5)?,
            v_set: num(6)?,
            i_set: num(7)?,
            xc_r: num(8)?,
            xc_i: num(9)?,
            r_dc: num(10)?,
            tap_r: num(11)?,
            tap_i: num(12)?,
            tap_step: num(13)?,
            tap_min: num(14)?,
            tap_max: num(15)?,
            alpha_range: [num(16)?, num(17)?],
            gamma_range: [num(18)?, num(19)?],
            in_service: num(20)? > 0.0,
        }
    } else {
        let bridges = count(2)?;
        let xc = num(7)?;
        let tap = num(9)?;
        LccLink {
            r_bus,
            i_bus,
            bridges_r: bridges,
            bridges_i: bridges,
            control: control_mode(&t[3])?,
            p_set: num(4)?,
            v_set: num(5)?,
            i_set: num(6)?,
            xc_r: xc,
            xc_i: xc,
            r_dc: num(8)?,
            tap_r: tap,
            tap_i: tap,
            tap_step: num(10)?,
            tap_min: num(11)?,
            tap_max: num(12)?,
            alpha_range: [num(13)?, num(14)?],
            gamma_range: [num(15)?, num(16)?],
            in_service: num(17)? > 0.0,
        }
    };
    link.validate().map_err(|msg| Error::parse(row.line, msg))?;
    Ok(link)
}

/// Parse a case file.
pub fn parse_case(text: &str) -> Result<CaseData> {
    let raw = scan(text)?;
    let last_line = text.lines().count();
    let section = |name: &str| raw.sections.iter().find(|(n, _, _)| n == name);
    let require = |name: &str| {
        section(name)
            .ok_or_else(|| Error::parse(last_line, format!("missing required section mpc.{name}")))
    };

    let (bmva_line, base_mva) = raw
        .base_mva
        .ok_or_else(|| Error::parse(last_line, "missing required section mpc.baseMVA"))?;
    if !(base_mva > 0.0) {
        return Err(Error::parse(bmva_line, "baseMVA must be positive"));
    }

    let bus_records = require("bus")?
        .2
        .iter()
        .map(bus_record)
        .collect::<Result<Vec<_>>>()?;
    let gen_rows = &require("gen")?.2;
    let gen_records = gen_rows
        .iter()
        .map(gen_record)
        .collect::<Result<Vec<_>>>()?;
    let branch_records = require("branch")?
        .2
        .iter()
        .map(branch_record)
        .collect::<Result<Vec<_>>>()?;
    let dcline_records = match section("dcline") {
        Some((_, _, rows)) => rows.iter().map(dcline_record).collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };

    let ids: HashSet<u32> = bus_records.iter().map(|b| b.id).collect();
    for (g, row) in gen_records.iter().zip(gen_rows) {
        if !ids.contains(&g.bus) {
            return Err(Error::parse(
                row.line,
                format!("gen record references missing bus {}", g.bus),
            ));
        }
    }

    Ok(CaseData {
        name: raw.name.unwrap_or_else(|| "case".to_string()),
        base_mva,
        bus_records,
        gen_records,
        branch_records,
        dcline_records,
    })
}

/// Parse a standalone link table: either an `mpc.dcline = [...]` block or
/// bare rows, one link per line.
pub fn parse_dcline_table(text: &str) -> Result<Vec<LccLink>> {
    if text.contains("mpc.dcline") {
        let raw = scan(text)?;
        let (_, _, rows) = raw
            .sections
            .iter()
            .find(|(n, _, _)| n == "dcline")
            .ok_or_else(|| Error::parse(0, "mpc.dcline section is empty"))?;
        return rows.iter().map(dcline_record).collect();
    }
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let mut current = Vec::new();
        tokenize_into(strip_comment(line), idx + 1, &mut rows, &mut current);
        if !current.is_empty() {
            rows.push(Row {
                line: idx + 1,
                tokens: current,
            });
        }
    }
    rows.iter().map(dcline_record).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TWO_BUS: &str = "\
function mpc = two_bus
mpc.baseMVA = 100;
%% bus data
mpc.bus = [
\t1\t3\t0\t0\t0\t0\t1\t1\t0\t230\t1\t1.1\t0.9;
\t2\t1\t100\t50\t0\t0\t1\t1\t0\t230\t1\t1.1\t0.9;
];
mpc.gen = [
\t1\t0\t0\t300\t-300\t1\t100\t1\t250\t0;
];
mpc.branch = [
\t1\t2\t0\t0.1\t0\t0\t0\t0\t0\t0\t1\t-360\t360;
];
";

    #[test]
    fn minimal_two_bus() {
        let case = parse_case(TWO_BUS).unwrap();
        assert_eq!(case.name, "two_bus");
        assert_eq!(case.base_mva, 100.0);
        assert_eq!(case.bus_records.len(), 2);
        assert_eq!(case.branch_records.len(), 1);
        assert!(case.dcline_records.is_empty());
        assert_eq!(case.bus_records[1].pd, 100.0);
    }

    #[test]
    fn malformed_number_reports_line() {
        let text = TWO_BUS.replace("100\t50", "1O0\t50");
        match parse_case(&text) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 6);
                assert!(message.contains("1O0"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_section() {
        let text = TWO_BUS.replace("mpc.branch", "mpc.branchx");
        let err = parse_case(&text).unwrap_err();
        assert!(err.to_string().contains("mpc.branch"), "{err}");
    }

    #[test]
    fn gen_on_missing_bus() {
        let text = TWO_BUS.replace("\t1\t0\t0\t300", "\t7\t0\t0\t300");
        assert!(matches!(
            parse_case(&text),
            Err(Error::Parse { line: 9, .. })
        ));
    }

    #[test]
    fn table_one_row_short_form() {
        let links = parse_dcline_table(
            "119 120 4 P-V 100 460 0 6.8 6.2 0.7478 0.005 0.6 0.9 15 20 18 20 1\n",
        )
        .unwrap();
        assert_eq!(links.len(), 1);
        let l = &links[0];
        assert_eq!((l.r_bus, l.i_bus), (119, 120));
        assert_eq!((l.bridges_r, l.bridges_i), (4, 4));
        assert_eq!(l.control, ControlMode::PowerVoltage);
        assert_eq!((l.p_set, l.v_set), (100.0, 460.0));
        assert_eq!((l.xc_r, l.xc_i, l.r_dc), (6.8, 6.8, 6.2));
        assert_eq!((l.tap_r, l.tap_i), (0.7478, 0.7478));
        assert_eq!(l.alpha_range, [15.0, 20.0]);
        assert_eq!(l.gamma_range, [18.0, 20.0]);
        assert!(l.in_service);
    }

    #[test]
    fn dcline_control_modes() {
        let row = |mode: &str| {
            format!("1 2 4 {mode} 100 460 0.2 6.8 6.2 0.75 0.005 0.6 0.9 15 20 18 20 1")
        };
        assert_eq!(
            parse_dcline_table(&row("'I-V'")).unwrap()[0].control,
            ControlMode::CurrentVoltage
        );
        let unsupported = parse_dcline_table(&row("A-T")).unwrap_err();
        assert!(
            unsupported.to_string().contains("not supported"),
            "{unsupported}"
        );
        let unknown = parse_dcline_table(&row("X-Y")).unwrap_err();
        assert!(unknown.to_string().contains("unknown control"), "{unknown}");
    }

    #[test]
    fn bad_angle_range_rejected() {
        let err =
            parse_dcline_table("1 2 4 P-V 100 460 0 6.8 6.2 0.75 0.005 0.6 0.9 20 15 18 20 1")
                .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn comments_and_commas() {
        let text = TWO_BUS.replace(
            "\t1\t2\t0\t0.1\t0\t0\t0\t0\t0\t0\t1\t-360\t360;",
            "1, 2, 0, 0.1, 0, 0, 0, 0, 0, 0, 1, -360, 360; % a line",
        );
        let case = parse_case(&text).unwrap();
        assert_eq!(case.branch_records[0].x, 0.1);
    }
}
