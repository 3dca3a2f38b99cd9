use std::io::Write;

use streamvb::simdata::{SimConfig, Simulator};

use crate::config::simulated_header;
use crate::error::CliError;

/// Writes `cfg.n` simulated records as CSV with a header row.
pub fn write_simulation<W: Write>(cfg: SimConfig, out: W) -> Result<(), CliError> {
    let sim = Simulator::new(cfg)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(simulated_header(cfg.scenario))?;
    let mut fields: Vec<String> = Vec::new();
    for rec in sim.iter() {
        fields.clear();
        fields.push(format!("{}", rec.y));
        fields.extend(rec.x.iter().map(|v| format!("{v}")));
        if let Some(g) = rec.group {
            fields.push(format!("g{g}"));
        }
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}
