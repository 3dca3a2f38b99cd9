//! CSV artifacts. Every file is written to a temporary sibling and renamed
//! into place, so a reader (or a crash) never sees a half-written file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use streamvb::model::{Fitted, ModelSpec, SummaryItem};
use streamvb::special::InverseGammaParams;
use streamvb::summary::{inverse_gamma_density_grid, normal_density_grid, ParamSummary};

use crate::design::Design;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Summary rows in plan order.
pub fn summaries(design: &Design, fitted: &Fitted) -> Vec<ParamSummary> {
    fitted.summarize_all(&design.spec, &design.plan)
}

/// `parameter,mean,sd,q025,q975,n`; numbers use the shortest text that
/// parses back to the same `f64`, in exponent form when very small or large.
pub fn render_summary(design: &Design, fitted: &Fitted) -> String {
    let n = fitted.n();
    let mut s = String::from("parameter,mean,sd,q025,q975,n\n");
    for p in summaries(design, fitted) {
        s.push_str(&format!("{},{:?},{:?},{:?},{:?},{n}\n", p.label, p.mean, p.sd, p.q025, p.q975));
    }
    s
}

pub fn render_curve(design: &Design, fitted: &Fitted, s: usize) -> String {
    let mut out = String::from("x,fit,lo,hi\n");
    for p in design.curve(fitted, s) {
        out.push_str(&format!("{:?},{:?},{:?},{:?}\n", p.x, p.fit, p.lo, p.hi));
    }
    out
}

fn scaled(ig: InverseGammaParams, factor: f64) -> Option<InverseGammaParams> {
    InverseGammaParams::new(ig.shape(), ig.rate() * factor).ok()
}

/// Density grid for one plan item; `None` for inclusion probabilities and
/// items the model does not have.
pub fn density(design: &Design, fitted: &Fitted, item: &SummaryItem) -> Option<Vec<(f64, f64)>> {
    let spec: &ModelSpec = &design.spec;
    match item {
        SummaryItem::Contrast { .. } | SummaryItem::EffectiveCoefficient { .. } => {
            let s = fitted.summarize(spec, item)?;
            (s.sd > 0.0).then(|| normal_density_grid(s.mean, s.sd))
        }
        SummaryItem::ErrorVariance { factor, .. } => {
            Some(inverse_gamma_density_grid(&scaled(fitted.error_variance()?, *factor)?))
        }
        SummaryItem::BlockVariance { block, factor, .. } => {
            Some(inverse_gamma_density_grid(&scaled(fitted.block_variance(spec, *block)?, *factor)?))
        }
        SummaryItem::Inclusion { .. } => None,
    }
}

pub fn render_density(grid: &[(f64, f64)]) -> String {
    let mut out = String::from("x,density\n");
    for (x, d) in grid {
        out.push_str(&format!("{x:?},{d:?}\n"));
    }
    out
}

/// Parameter name made safe for a file name.
pub fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn stems() {
        assert_eq!(file_stem("f_x4@q25"), "f_x4_q25");
        assert_eq!(file_stem("sigma2_eps"), "sigma2_eps");
    }

    #[test]
    fn shortest_float_text_round_trips() {
        for v in [0.1 + 0.2, 1e-300, -2.5e17, std::f64::consts::PI] {
            let s = format!("{v:?}");
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
