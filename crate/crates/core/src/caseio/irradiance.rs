//! Solar irradiance profiles read from two-column CSV (`time_s,irradiance`).

use super::CaseError;

/// Samples normalized so the largest irradiance value is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct IrradianceProfile {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Raw maximum used for normalization, in the file's units.
    pub peak: f64,
}

impl IrradianceProfile {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn parse_field(field: &str) -> Option<f64> {
    field.trim().parse::<f64>().ok()
}

/// Parses the profile. A non-numeric first row is treated as a header.
pub fn load_irradiance_csv(text: &str) -> Result<IrradianceProfile, CaseError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut times = Vec::new();
    let mut raw = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CaseError::MalformedCsv {
            line: e.position().map_or(k + 1, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(k + 1, |p| p.line() as usize);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if record.len() != 2 {
            return Err(CaseError::MalformedCsv {
                line,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let (t, v) = match (parse_field(&record[0]), parse_field(&record[1])) {
            (Some(t), Some(v)) => (t, v),
            _ if k == 0 => continue,
            _ => {
                return Err(CaseError::MalformedCsv {
                    line,
                    message: format!("cannot parse `{}`,`{}` as numbers", &record[0], &record[1]),
                })
            }
        };
        if !t.is_finite() || !v.is_finite() {
            return Err(CaseError::MalformedCsv {
                line,
                message: "values must be finite".into(),
            });
        }
        if v < 0.0 {
            return Err(CaseError::NegativeIrradiance { line, value: v });
        }
        if times.last().is_some_and(|&prev| t <= prev) {
            return Err(CaseError::NonMonotoneTime { line, time: t });
        }
        times.push(t);
        raw.push(v);
    }
    let peak = raw.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(CaseError::EmptyProfile);
    }
    Ok(IrradianceProfile {
        times,
        values: raw.iter().map(|v| v / peak).collect(),
        peak,
    })
}
