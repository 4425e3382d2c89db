//! Fixed-format MPS export and import.
//!
//! Numbers are written in a canonical form of at most 12 characters, chosen
//! as the most significant digits that fit, with trailing zeros trimmed.
//! Because the rendering depends only on the rounded digits and exponent,
//! writing, reading and writing again reproduces the file byte for byte.
//! MPS has no objective sense, so a maximization objective is written
//! negated and flagged by a comment line that the reader understands.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::model::{LinearProgram, ProblemBuilder, RowKind, Sense};
use crate::LpError;

pub const OBJECTIVE_ROW: &str = "OBJ";
const MAX_FLAG: &str = "* OBJSENSE MAX (objective coefficients negated)";
const NAME_LEN: usize = 8;
const NUM_LEN: usize = 12;

/// Canonical rendering of `v` in at most 12 characters.
pub fn format_number(v: f64) -> String {
    assert!(v.is_finite(), "cannot write non-finite number {v}");
    if v == 0.0 {
        return "0".to_string();
    }
    for digits in (1..=NUM_LEN).rev() {
        let sci = format!("{:.*e}", digits - 1, v);
        let (mant, exp) = sci.split_once('e').expect("exponent");
        let exp: i32 = exp.parse().expect("exponent value");
        let negative = mant.starts_with('-');
        let mut ds: String = mant.chars().filter(|c| c.is_ascii_digit()).collect();
        while ds.len() > 1 && ds.ends_with('0') {
            ds.pop();
        }
        let plain = render_plain(negative, &ds, exp);
        let scientific = render_scientific(negative, &ds, exp);
        let pick = if plain.len() <= scientific.len() {
            plain
        } else {
            scientific
        };
        if pick.len() <= NUM_LEN {
            return pick;
        }
    }
    unreachable!("a single digit always fits")
}

fn render_plain(negative: bool, ds: &str, exp: i32) -> String {
    let mut s = String::new();
    if negative {
        s.push('-');
    }
    if exp >= 0 {
        let int_len = exp as usize + 1;
        if ds.len() <= int_len {
            s.push_str(ds);
            s.extend(std::iter::repeat_n('0', int_len - ds.len()));
        } else {
            s.push_str(&ds[..int_len]);
            s.push('.');
            s.push_str(&ds[int_len..]);
        }
    } else {
        s.push_str("0.");
        s.extend(std::iter::repeat_n('0', (-exp - 1) as usize));
        s.push_str(ds);
    }
    s
}

fn render_scientific(negative: bool, ds: &str, exp: i32) -> String {
    let mut s = String::new();
    if negative {
        s.push('-');
    }
    s.push_str(&ds[..1]);
    if ds.len() > 1 {
        s.push('.');
        s.push_str(&ds[1..]);
    }
    let _ = write!(s, "e{exp}");
    s
}

fn check_name(name: &str) -> Result<(), LpError> {
    if name.is_empty() || name.len() > NAME_LEN || name.chars().any(|c| c.is_whitespace()) {
        return Err(LpError::InvalidModel(format!(
            "name {name:?} is not a valid fixed-format MPS name"
        )));
    }
    Ok(())
}

/// Writes `lp` in fixed MPS format.
pub fn write_mps<W: Write>(lp: &LinearProgram, out: W) -> Result<(), LpError> {
    let mut w = std::io::BufWriter::new(out);
    for c in &lp.columns {
        check_name(&c.name)?;
    }
    for r in &lp.rows {
        check_name(&r.name)?;
        if r.name == OBJECTIVE_ROW {
            return Err(LpError::InvalidModel(format!("row name {OBJECTIVE_ROW} is reserved")));
        }
        if !r.rhs.is_finite() {
            return Err(LpError::InvalidModel(format!("row {} has non-finite rhs", r.name)));
        }
    }
    let obj_sign = match lp.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    writeln!(w, "NAME          {}", lp.name)?;
    if lp.sense == Sense::Maximize {
        writeln!(w, "{MAX_FLAG}")?;
    }
    writeln!(w, "ROWS")?;
    writeln!(w, " N  {OBJECTIVE_ROW}")?;
    for r in &lp.rows {
        let k = match r.kind {
            RowKind::Le => "L",
            RowKind::Ge => "G",
            RowKind::Eq => "E",
        };
        writeln!(w, " {k}  {}", r.name)?;
    }
    writeln!(w, "COLUMNS")?;
    let mut in_int = false;
    let mut marker = 0;
    for (j, c) in lp.columns.iter().enumerate() {
        if c.integer != in_int {
            let tag = if c.integer { "'INTORG'" } else { "'INTEND'" };
            writeln!(w, "    {:<8}  {:<8}  {:>12}", format!("M{marker}"), "'MARKER'", tag)?;
            marker += 1;
            in_int = c.integer;
        }
        let mut wrote = false;
        if c.cost != 0.0 {
            let cost = obj_sign * c.cost;
            writeln!(w, "    {:<8}  {:<8}  {:>12}", c.name, OBJECTIVE_ROW, format_number(cost))?;
            wrote = true;
        }
        for (i, a) in lp.matrix.column(j) {
            writeln!(w, "    {:<8}  {:<8}  {:>12}", c.name, lp.rows[i].name, format_number(a))?;
            wrote = true;
        }
        if !wrote {
            writeln!(w, "    {:<8}  {:<8}  {:>12}", c.name, OBJECTIVE_ROW, "0")?;
        }
    }
    if in_int {
        writeln!(w, "    {:<8}  {:<8}  {:>12}", format!("M{marker}"), "'MARKER'", "'INTEND'")?;
    }
    writeln!(w, "RHS")?;
    for r in &lp.rows {
        if r.rhs != 0.0 {
            writeln!(w, "    {:<8}  {:<8}  {:>12}", "RHS", r.name, format_number(r.rhs))?;
        }
    }
    writeln!(w, "BOUNDS")?;
    for c in &lp.columns {
        let mut bound = |kind: &str, v: Option<f64>| -> std::io::Result<()> {
            match v {
                Some(v) => writeln!(w, " {kind} {:<8}  {:<8}  {:>12}", "BND", c.name, format_number(v)),
                None => writeln!(w, " {kind} {:<8}  {}", "BND", c.name),
            }
        };
        let (lo, hi) = (c.lower, c.upper);
        if c.integer && lo == 0.0 && hi == 1.0 {
            bound("BV", None)?;
            continue;
        }
        if lo == hi {
            bound("FX", Some(lo))?;
            continue;
        }
        if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
            bound("FR", None)?;
            continue;
        }
        if lo == f64::NEG_INFINITY {
            bound("MI", None)?;
        } else if lo != 0.0 {
            bound("LO", Some(lo))?;
        }
        if hi.is_finite() {
            bound("UP", Some(hi))?;
        } else if c.integer {
            bound("PL", None)?;
        }
    }
    writeln!(w, "ENDATA")?;
    w.flush()?;
    Ok(())
}

pub fn to_mps_string(lp: &LinearProgram) -> Result<String, LpError> {
    let mut buf = Vec::new();
    write_mps(lp, &mut buf)?;
    Ok(String::from_utf8(buf).expect("MPS output is ASCII"))
}

#[derive(PartialEq)]
enum Section {
    None,
    Rows,
    Columns,
    Rhs,
    Bounds,
}

/// Reads an MPS file written by [`write_mps`] (or any MPS file without
/// RANGES and with whitespace-free names).
pub fn read_mps<R: BufRead>(input: R) -> Result<LinearProgram, LpError> {
    use std::collections::HashMap;
    let err = |line: usize, message: String| LpError::MpsParse { line, message };
    let mut name = String::new();
    let mut maximize = false;
    let mut section = Section::None;
    let mut row_kinds: Vec<(String, RowKind)> = Vec::new();
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut obj_name = String::from(OBJECTIVE_ROW);
    let mut col_index: HashMap<String, usize> = HashMap::new();
    struct Col {
        name: String,
        cost: f64,
        lower: f64,
        upper: f64,
        integer: bool,
        entries: Vec<(usize, f64)>,
    }
    let mut cols: Vec<Col> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut integer = false;
    let mut ended = false;

    for (ln, line) in input.lines().enumerate() {
        let line = line?;
        let lno = ln + 1;
        if line.trim() == MAX_FLAG {
            maximize = true;
            continue;
        }
        if line.starts_with('*') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !line.starts_with(' ') {
            section = match fields[0] {
                "NAME" => {
                    name = fields.get(1).unwrap_or(&"").to_string();
                    Section::None
                }
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "BOUNDS" => Section::Bounds,
                "ENDATA" => {
                    ended = true;
                    break;
                }
                other => return Err(err(lno, format!("unsupported section {other}"))),
            };
            continue;
        }
        let num = |s: &str| -> Result<f64, LpError> {
            s.parse::<f64>()
                .map_err(|_| err(lno, format!("bad number {s:?}")))
        };
        match section {
            Section::None => return Err(err(lno, "data before a section header".into())),
            Section::Rows => {
                if fields.len() != 2 {
                    return Err(err(lno, "ROWS line needs a type and a name".into()));
                }
                let kind = match fields[0] {
                    "N" => {
                        obj_name = fields[1].to_string();
                        continue;
                    }
                    "L" => RowKind::Le,
                    "G" => RowKind::Ge,
                    "E" => RowKind::Eq,
                    t => return Err(err(lno, format!("unknown row type {t}"))),
                };
                if row_index.insert(fields[1].to_string(), row_kinds.len()).is_some() {
                    return Err(err(lno, format!("duplicate row {}", fields[1])));
                }
                row_kinds.push((fields[1].to_string(), kind));
                rhs.push(0.0);
            }
            Section::Columns => {
                if fields.len() >= 3 && fields[1] == "'MARKER'" {
                    integer = match fields[2] {
                        "'INTORG'" => true,
                        "'INTEND'" => false,
                        t => return Err(err(lno, format!("unknown marker {t}"))),
                    };
                    continue;
                }
                if fields.len() != 3 && fields.len() != 5 {
                    return Err(err(lno, "COLUMNS line needs 3 or 5 fields".into()));
                }
                let cname = fields[0];
                let j = match col_index.get(cname) {
                    Some(&j) => j,
                    None => {
                        col_index.insert(cname.to_string(), cols.len());
                        cols.push(Col {
                            name: cname.to_string(),
                            cost: 0.0,
                            lower: 0.0,
                            upper: f64::INFINITY,
                            integer,
                            entries: Vec::new(),
                        });
                        cols.len() - 1
                    }
                };
                for pair in fields[1..].chunks(2) {
                    let v = num(pair[1])?;
                    if pair[0] == obj_name {
                        cols[j].cost += v;
                    } else {
                        let i = *row_index
                            .get(pair[0])
                            .ok_or_else(|| err(lno, format!("unknown row {}", pair[0])))?;
                        cols[j].entries.push((i, v));
                    }
                }
            }
            Section::Rhs => {
                if fields.len() != 3 && fields.len() != 5 {
                    return Err(err(lno, "RHS line needs 3 or 5 fields".into()));
                }
                for pair in fields[1..].chunks(2) {
                    let v = num(pair[1])?;
                    if pair[0] == obj_name {
                        continue;
                    }
                    let i = *row_index
                        .get(pair[0])
                        .ok_or_else(|| err(lno, format!("unknown row {}", pair[0])))?;
                    rhs[i] = v;
                }
            }
            Section::Bounds => {
                if fields.len() < 3 {
                    return Err(err(lno, "BOUNDS line too short".into()));
                }
                let j = *col_index
                    .get(fields[2])
                    .ok_or_else(|| err(lno, format!("unknown column {}", fields[2])))?;
                let value = || -> Result<f64, LpError> {
                    fields
                        .get(3)
                        .ok_or_else(|| err(lno, "bound value missing".into()))
                        .and_then(|s| num(s))
                };
                let c = &mut cols[j];
                match fields[0] {
                    "UP" => c.upper = value()?,
                    "LO" => c.lower = value()?,
                    "FX" => {
                        let v = value()?;
                        c.lower = v;
                        c.upper = v;
                    }
                    "FR" => {
                        c.lower = f64::NEG_INFINITY;
                        c.upper = f64::INFINITY;
                    }
                    "MI" => c.lower = f64::NEG_INFINITY,
                    "PL" => c.upper = f64::INFINITY,
                    "BV" => {
                        c.lower = 0.0;
                        c.upper = 1.0;
                        c.integer = true;
                    }
                    t => return Err(err(lno, format!("unsupported bound type {t}"))),
                }
            }
        }
    }
    if !ended {
        return Err(err(0, "missing ENDATA".into()));
    }
    let sense = if maximize {
        Sense::Maximize
    } else {
        Sense::Minimize
    };
    let sign = if maximize { -1.0 } else { 1.0 };
    let mut b = ProblemBuilder::new(name, sense);
    for c in &cols {
        b.add_column(c.name.clone(), sign * c.cost, c.lower, c.upper, c.integer);
    }
    let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); row_kinds.len()];
    for (j, c) in cols.iter().enumerate() {
        for &(i, v) in &c.entries {
            per_row[i].push((j, v));
        }
    }
    for (i, ((rname, kind), entries)) in row_kinds.into_iter().zip(per_row).enumerate() {
        b.add_row(rname, kind, rhs[i], entries);
    }
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_fit_and_round_trip() {
        for &v in &[
            0.0, 1.0, -1.0, 0.1, 1.0 / 3.0, -2.0 / 3.0, 4285.0, 1e-20, -3.5e17, 123456789012.0,
            1234567890123.0, 9.999999999999999, 0.000012345678901234, 4.7e300, -1e-300,
        ] {
            let s = format_number(v);
            assert!(s.len() <= 12, "{s}");
            let back: f64 = s.parse().unwrap();
            assert_eq!(format_number(back), s);
            assert!((back - v).abs() <= 1e-7 * v.abs(), "{v} -> {s}");
        }
        assert_eq!(format_number(0.5), "0.5");
        assert_eq!(format_number(-4230.0), "-4230");
        assert_eq!(format_number(1.0 / 3.0), "0.3333333333");
    }
}
