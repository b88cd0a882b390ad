use std::io::Write;

use serde::Serialize;

use super::scan::{Equilibrium, EquilibriumKind};
use super::sweep::csv_error;
use crate::error::{Error, Result};
use crate::model::{Assessment, Model};

/// A value as a single line of JSON.
pub fn to_json_line<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string(value).map_err(|e| Error::Io(e.to_string()))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn theta_cell(a: &Assessment) -> String {
    match a {
        Assessment::Joint(t) => opt(t.coordinate()),
        Assessment::PerGroup(ts) => ts
            .iter()
            .map(|t| opt(t.coordinate()))
            .collect::<Vec<_>>()
            .join(";"),
    }
}

/// Comma-separated equilibrium table with a header row.
pub fn equilibria_csv<W: Write>(model: &Model, eqs: &[Equilibrium], out: W) -> Result<()> {
    let ids = model.groups().ids();
    let mut header = vec!["kind".to_string()];
    header.extend(ids.iter().map(|id| format!("pi_{id}")));
    header.extend(
        [
            "theta",
            "stability",
            "residual",
            "derivative",
            "derivative_stable",
            "literal_condition",
            "disagreement",
        ]
        .map(String::from),
    );
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&header).map_err(csv_error)?;
    for e in eqs {
        let kind = match &e.kind {
            EquilibriumKind::FixedPoint => "fixed_point".to_string(),
            EquilibriumKind::LimitCycle { period, .. } => format!("limit_cycle_{period}"),
        };
        let mut rec = vec![kind];
        rec.extend(e.state.rates().iter().map(f64::to_string));
        rec.push(theta_cell(&e.assessment));
        rec.push(to_json_line(&e.stability)?.trim_matches('"').to_string());
        rec.push(e.residual.to_string());
        rec.push(opt(e.derivative));
        rec.push(opt(e.derivative_stable));
        rec.push(opt(e.literal_condition));
        rec.push(e.disagreement.to_string());
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}
