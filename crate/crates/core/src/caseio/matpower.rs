//! Reader for MATPOWER case files (`mpc.bus`, `mpc.gen`, `mpc.branch`,
//! `mpc.gencost`, `mpc.baseMVA`).

use std::collections::HashMap;

use super::{Bus, BusId, CaseData, CaseError, CaseGenerator};

const BUS_I: usize = 0;
const PD: usize = 2;
const GEN_BUS: usize = 0;
const GEN_STATUS: usize = 7;
const PMAX: usize = 8;
const PMIN: usize = 9;
const F_BUS: usize = 0;
const T_BUS: usize = 1;
const MODEL: usize = 0;
const NCOST: usize = 3;
const COST: usize = 4;
const POLYNOMIAL: i64 = 2;

#[derive(Debug)]
struct Row {
    line: usize,
    values: Vec<f64>,
}

#[derive(Debug, Default)]
struct RawCase {
    name: Option<String>,
    base_mva: Option<f64>,
    matrices: HashMap<String, Vec<Row>>,
}

fn malformed(matrix: &str, line: usize, row: usize, message: impl Into<String>) -> CaseError {
    CaseError::MalformedMatrix {
        matrix: matrix.to_string(),
        line,
        row,
        message: message.into(),
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn function_name(code: &str) -> Option<String> {
    let rest = code.trim().strip_prefix("function")?;
    let name = rest.split('=').nth(1).unwrap_or(rest).trim();
    (!name.is_empty()).then(|| name.to_string())
}

struct OpenMatrix {
    name: String,
    rows: Vec<Row>,
    current: Vec<f64>,
    current_line: usize,
}

impl OpenMatrix {
    fn finish_row(&mut self) {
        if !self.current.is_empty() {
            self.rows.push(Row {
                line: self.current_line,
                values: std::mem::take(&mut self.current),
            });
        }
    }

    /// Consumes matrix body text; returns true once the closing `]` is seen.
    fn feed(&mut self, text: &str, line: usize) -> Result<bool, CaseError> {
        let (body, closed) = match text.find(']') {
            Some(i) => (&text[..i], true),
            None => (text, false),
        };
        for (k, segment) in body.split(';').enumerate() {
            if k > 0 {
                self.finish_row();
            }
            for token in segment.split(|c: char| c.is_whitespace() || c == ',') {
                if token.is_empty() {
                    continue;
                }
                let value: f64 = token.parse().map_err(|_| {
                    malformed(&self.name, line, self.rows.len() + 1, format!("cannot parse `{token}` as a number"))
                })?;
                if self.current.is_empty() {
                    self.current_line = line;
                }
                self.current.push(value);
            }
        }
        self.finish_row();
        Ok(closed)
    }
}

fn scan(text: &str) -> Result<RawCase, CaseError> {
    let mut raw = RawCase::default();
    let mut open: Option<OpenMatrix> = None;
    for (idx, full_line) in text.lines().enumerate() {
        let line = idx + 1;
        let code = strip_comment(full_line);
        if let Some(m) = open.as_mut() {
            if m.feed(code, line)? {
                let m = open.take().expect("matrix is open");
                raw.matrices.insert(m.name, m.rows);
            }
            continue;
        }
        if raw.name.is_none() {
            if let Some(name) = function_name(code) {
                raw.name = Some(name);
                continue;
            }
        }
        let Some(rest) = code.trim().strip_prefix("mpc.") else {
            continue;
        };
        let Some((field, value)) = rest.split_once('=') else {
            continue;
        };
        let field = field.trim();
        let value = value.trim();
        if let Some(body) = value.strip_prefix('[') {
            let mut m = OpenMatrix {
                name: field.to_string(),
                rows: Vec::new(),
                current: Vec::new(),
                current_line: line,
            };
            if m.feed(body, line)? {
                raw.matrices.insert(m.name, m.rows);
            } else {
                open = Some(m);
            }
        } else if field == "baseMVA" {
            let number = value.trim_end_matches(';').trim();
            let parsed: f64 = number
                .parse()
                .map_err(|_| malformed("baseMVA", line, 1, format!("cannot parse `{number}` as a number")))?;
            raw.base_mva = Some(parsed);
        }
    }
    if let Some(m) = open {
        return Err(malformed(&m.name, m.current_line, m.rows.len() + 1, "matrix is never closed with `]`"));
    }
    Ok(raw)
}

fn take_matrix(raw: &mut RawCase, name: &str) -> Result<Vec<Row>, CaseError> {
    raw.matrices.remove(name).ok_or_else(|| CaseError::MissingMatrix {
        name: name.to_string(),
    })
}

fn require_columns(matrix: &str, rows: &[Row], min: usize) -> Result<(), CaseError> {
    for (i, r) in rows.iter().enumerate() {
        if r.values.len() < min {
            return Err(malformed(
                matrix,
                r.line,
                i + 1,
                format!("expected at least {min} columns, found {}", r.values.len()),
            ));
        }
    }
    Ok(())
}

fn integer(matrix: &str, row: &Row, index: usize, column: usize) -> Result<i64, CaseError> {
    let v = row.values[column];
    if v.is_finite() && v.fract() == 0.0 && v.abs() < 9.0e15 {
        Ok(v as i64)
    } else {
        Err(malformed(
            matrix,
            row.line,
            index + 1,
            format!("column {} must be an integer, found {v}", column + 1),
        ))
    }
}

fn bus_id(matrix: &str, row: &Row, index: usize, column: usize) -> Result<BusId, CaseError> {
    let v = integer(matrix, row, index, column)?;
    BusId::try_from(v).map_err(|_| {
        malformed(
            matrix,
            row.line,
            index + 1,
            format!("column {} must be a non-negative bus id, found {v}", column + 1),
        )
    })
}

fn finite(matrix: &str, row: &Row, index: usize, column: usize) -> Result<f64, CaseError> {
    let v = row.values[column];
    if v.is_finite() {
        Ok(v)
    } else {
        Err(malformed(
            matrix,
            row.line,
            index + 1,
            format!("column {} must be finite, found {v}", column + 1),
        ))
    }
}

/// Quadratic coefficients `(a, b, c)` from one polynomial gencost row.
fn cost_coefficients(row: &Row, index: usize) -> Result<(f64, f64, f64), CaseError> {
    let model = integer("gencost", row, index, MODEL)?;
    let ncost = integer("gencost", row, index, NCOST)?;
    let unsupported = || CaseError::UnsupportedCostModel {
        row: index + 1,
        line: row.line,
        model,
        ncost,
    };
    if model != POLYNOMIAL || !(1..=3).contains(&ncost) {
        return Err(unsupported());
    }
    let n = ncost as usize;
    if row.values.len() < COST + n {
        return Err(malformed(
            "gencost",
            row.line,
            index + 1,
            format!("ncost {n} needs {} columns, found {}", COST + n, row.values.len()),
        ));
    }
    let mut coeffs = [0.0; 3];
    for k in 0..n {
        coeffs[3 - n + k] = finite("gencost", row, index, COST + k)?;
    }
    Ok((coeffs[0], coeffs[1], coeffs[2]))
}

/// Parses a MATPOWER case and converts it to per-unit on `mpc.baseMVA`.
///
/// Out-of-service generators are dropped together with their cost rows.
/// Branch status and electrical parameters are ignored: only the topology is
/// used.
pub fn parse_matpower_case(text: &str) -> Result<CaseData, CaseError> {
    let mut raw = scan(text)?;
    let base = raw.base_mva.ok_or_else(|| CaseError::MissingMatrix {
        name: "baseMVA".into(),
    })?;
    if !(base.is_finite() && base > 0.0) {
        return Err(CaseError::InvalidBaseMva { value: base });
    }
    let bus_rows = take_matrix(&mut raw, "bus")?;
    let gen_rows = take_matrix(&mut raw, "gen")?;
    let branch_rows = take_matrix(&mut raw, "branch")?;
    let cost_rows = take_matrix(&mut raw, "gencost")?;
    require_columns("bus", &bus_rows, PD + 1)?;
    require_columns("gen", &gen_rows, PMIN + 1)?;
    require_columns("branch", &branch_rows, T_BUS + 1)?;
    require_columns("gencost", &cost_rows, COST)?;
    if cost_rows.len() < gen_rows.len() {
        return Err(CaseError::MissingMatrix {
            name: format!("gencost row {} (one per generator)", cost_rows.len() + 1),
        });
    }

    let mut buses = Vec::with_capacity(bus_rows.len());
    for (i, r) in bus_rows.iter().enumerate() {
        buses.push(Bus {
            id: bus_id("bus", r, i, BUS_I)?,
            load: finite("bus", r, i, PD)? / base,
        });
    }

    let mut generators = Vec::with_capacity(gen_rows.len());
    for (i, (r, cost)) in gen_rows.iter().zip(&cost_rows).enumerate() {
        let status = finite("gen", r, i, GEN_STATUS)?;
        let (a, b, c) = cost_coefficients(cost, i)?;
        if status <= 0.0 {
            continue;
        }
        generators.push(CaseGenerator {
            bus: bus_id("gen", r, i, GEN_BUS)?,
            a: a * base * base,
            b: b * base,
            c,
            p_min: finite("gen", r, i, PMIN)? / base,
            p_max: finite("gen", r, i, PMAX)? / base,
        });
    }

    let mut branches = Vec::with_capacity(branch_rows.len());
    for (i, r) in branch_rows.iter().enumerate() {
        branches.push((bus_id("branch", r, i, F_BUS)?, bus_id("branch", r, i, T_BUS)?));
    }

    let case = CaseData {
        name: raw.name.unwrap_or_else(|| "case".into()),
        base_mva: base,
        buses,
        generators,
        branches,
    };
    case.validate()?;
    Ok(case)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = "function mpc = tiny
% comment line
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
\t1\t3\t50\t0;
\t2\t1\t100\t0;
\t3\t1\t0\t0;   % trailing comment
];
mpc.gen = [
\t1\t0\t0\t0\t0\t1\t100\t1\t300\t10;
\t2\t0\t0\t0\t0\t1\t100\t0\t200\t0;
\t3\t0\t0\t0\t0\t1\t100\t1\t200\t0;
];
mpc.branch = [1 2 0.1; 2 3 0.1; 3 1 0.1 0 0 0 0 0 0 0];
mpc.gencost = [
\t2\t0\t0\t3\t0.01\t20\t5;
\t2\t0\t0\t3\t0.02\t10\t0;
\t2\t0\t0\t2\t30\t0;
];
";

    #[test]
    fn parses_and_converts_to_per_unit() {
        let case = parse_matpower_case(TINY).unwrap();
        assert_eq!(case.name, "tiny");
        assert_eq!(case.base_mva, 100.0);
        assert_eq!(case.buses.len(), 3);
        assert_eq!(case.buses[1], Bus { id: 2, load: 1.0 });
        assert_eq!(case.generators.len(), 2, "out-of-service generator is dropped");
        let g = &case.generators[0];
        assert!((g.a - 100.0).abs() < 1e-12);
        assert!((g.b - 2000.0).abs() < 1e-12);
        assert_eq!(g.c, 5.0);
        assert!((g.p_min - 0.1).abs() < 1e-15);
        assert!((g.p_max - 3.0).abs() < 1e-15);
        let linear = &case.generators[1];
        assert_eq!(linear.bus, 3);
        assert_eq!(linear.a, 0.0);
        assert!((linear.b - 3000.0).abs() < 1e-12);
        assert_eq!(case.branches, vec![(1, 2), (2, 3), (3, 1)]);
    }

    #[test]
    fn rejects_piecewise_linear_cost() {
        let text = TINY.replace("\t2\t0\t0\t3\t0.02\t10\t0;", "\t1\t0\t0\t2\t0\t0\t100\t2000;");
        let err = parse_matpower_case(&text).unwrap_err();
        assert!(
            matches!(err, CaseError::UnsupportedCostModel { row: 2, model: 1, ncost: 2, line: 18 }),
            "{err:?}"
        );
    }

    #[test]
    fn rejects_higher_order_polynomial() {
        let text = TINY.replace("\t2\t0\t0\t3\t0.01\t20\t5;", "\t2\t0\t0\t4\t1\t0.01\t20\t5;");
        assert!(matches!(
            parse_matpower_case(&text),
            Err(CaseError::UnsupportedCostModel { row: 1, ncost: 4, .. })
        ));
    }

    #[test]
    fn locates_malformed_rows() {
        let text = TINY.replace("\t2\t1\t100\t0;", "\t2\t1\tabc\t0;");
        let err = parse_matpower_case(&text).unwrap_err();
        assert!(
            matches!(&err, CaseError::MalformedMatrix { matrix, line: 7, row: 2, .. } if matrix == "bus"),
            "{err:?}"
        );
        let text = TINY.replace("\t2\t1\t100\t0;", "\t2\t1;");
        assert!(matches!(
            parse_matpower_case(&text),
            Err(CaseError::MalformedMatrix { line: 7, row: 2, .. })
        ));
    }

    #[test]
    fn rejects_missing_and_dangling() {
        let text = TINY.replace("mpc.gencost", "mpc.other");
        assert!(matches!(parse_matpower_case(&text), Err(CaseError::MissingMatrix { .. })));
        let text = TINY.replace("2 3 0.1;", "2 9 0.1;");
        assert_eq!(
            parse_matpower_case(&text),
            Err(CaseError::DanglingReference { kind: "branch", index: 1, bus: 9 })
        );
        let text = TINY.replace("mpc.branch = [1 2 0.1; 2 3 0.1; 3 1 0.1 0 0 0 0 0 0 0];", "mpc.branch = [1 2 0.1];");
        assert_eq!(parse_matpower_case(&text), Err(CaseError::Disconnected { components: 2 }));
    }

    #[test]
    fn unclosed_matrix_is_reported() {
        let text = "mpc.baseMVA = 1;\nmpc.bus = [\n1 1 0;\n";
        assert!(matches!(
            parse_matpower_case(text),
            Err(CaseError::MalformedMatrix { line: 3, .. })
        ));
    }
}
