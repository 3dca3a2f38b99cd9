//! Turns records into model rows and declares the reported parameters.
//!
//! Row layout for the Gaussian, mixed and logistic models:
//! `[1, linear…, smooth (linear part)…, group indicators…, spline bases…]`,
//! with one random-effect block per group column followed by one per smooth
//! term. The sparse model takes the basis columns as they are.
//!
//! Knots, group levels and scaling maps are all frozen from the buffered
//! prefix.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use streamvb::linreg::LinRegHyper;
use streamvb::lmm::BlockSpec;
use streamvb::model::{Fitted, ModelSpec, SummaryItem};
use streamvb::scaling::AffineMap;
use streamvb::sparse::SparseHyper;
use streamvb::splines::{default_num_knots, SplineBasis};
use streamvb::summary::{contrast_band, CurvePoint};

use crate::config::{ModelKind, RunConfig};
use crate::error::CliError;
use crate::ingest::Record;

/// Points on each emitted curve.
pub const CURVE_POINTS: usize = 101;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothDesign {
    pub name: String,
    pub map: AffineMap,
    pub basis: SplineBasis,
    /// Warm-up minimum, quartiles and maximum on the original scale.
    pub five_numbers: [f64; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDesign {
    pub name: String,
    pub levels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub spec: ModelSpec,
    pub response: AffineMap,
    pub linear: Vec<(String, AffineMap)>,
    pub smooth: Vec<SmoothDesign>,
    pub groups: Vec<GroupDesign>,
    pub basis_names: Vec<String>,
    pub plan: Vec<SummaryItem>,
}

fn five_numbers(values: &[f64]) -> [f64; 5] {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = (s.len() - 1) as f64 * p;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(s.len() - 1);
        s[lo] + (h - lo as f64) * (s[hi] - s[lo])
    };
    [q(0.0), q(0.25), q(0.5), q(0.75), q(1.0)]
}

impl Design {
    /// `warm` supplies knots and scaling maps; `prefix` (which starts with
    /// `warm`) supplies the group levels.
    pub fn build(cfg: &RunConfig, basis_names: &[String], warm: &[Record], prefix: &[Record]) -> Result<Self, CliError> {
        if warm.is_empty() {
            return Err(CliError::Data("empty warm-up sample".into()));
        }
        let column = |j: usize| warm.iter().map(|r| r.x[j]).collect::<Vec<f64>>();
        let map_for = |values: &[f64], name: &str| -> Result<AffineMap, CliError> {
            if cfg.run.scaling {
                AffineMap::from_values(values)
                    .map_err(|e| CliError::Data(format!("cannot scale '{name}' from the warm-up data: {e}")))
            } else {
                Ok(AffineMap::IDENTITY)
            }
        };
        let ys: Vec<f64> = warm.iter().map(|r| r.y).collect();
        let response = if cfg.model == ModelKind::Logistic {
            AffineMap::IDENTITY
        } else {
            map_for(&ys, &cfg.response)?
        };
        let h = &cfg.hyper;

        if cfg.model == ModelKind::Sparse {
            let k = basis_names.len();
            let mut plan = vec![
                SummaryItem::Contrast {
                    label: "intercept".into(),
                    c: unit(k + 1, 0) * response.scale,
                    offset: response.lo,
                },
                SummaryItem::ErrorVariance {
                    label: "sigma2_eps".into(),
                    factor: response.scale.powi(2),
                    log: false,
                },
                SummaryItem::BlockVariance {
                    label: "sigma2_u".into(),
                    block: 0,
                    factor: response.scale.powi(2),
                    log: false,
                },
            ];
            for (j, name) in basis_names.iter().enumerate() {
                plan.push(SummaryItem::Inclusion {
                    label: format!("gamma_{name}"),
                    index: j,
                });
                plan.push(SummaryItem::EffectiveCoefficient {
                    label: format!("coef_{name}"),
                    index: j,
                    factor: response.scale,
                });
            }
            return Ok(Design {
                spec: ModelSpec::Sparse {
                    k,
                    hyper: SparseHyper {
                        sigsq_beta: h.sigsq_beta,
                        a_u: h.a_u,
                        a_eps: h.a_eps,
                        a_rho: h.a_rho,
                        b_rho: h.b_rho,
                    },
                },
                response,
                linear: Vec::new(),
                smooth: Vec::new(),
                groups: Vec::new(),
                basis_names: basis_names.to_vec(),
                plan,
            });
        }

        let nl = cfg.linear.len();
        let mut linear = Vec::new();
        for (j, name) in cfg.linear.iter().enumerate() {
            linear.push((name.clone(), map_for(&column(j), name)?));
        }
        let mut smooth = Vec::new();
        for (s, term) in cfg.smooth.iter().enumerate() {
            let raw = column(nl + s);
            let map = map_for(&raw, &term.column)?;
            let scaled: Vec<f64> = raw.iter().map(|&v| map.apply(v)).collect();
            let k = term.knots.unwrap_or_else(|| default_num_knots(warm.len()));
            let basis = SplineBasis::from_warmup(&scaled, k)
                .map_err(|e| CliError::Data(format!("knots for '{}': {e}", term.column)))?;
            smooth.push(SmoothDesign {
                name: term.column.clone(),
                map,
                basis,
                five_numbers: five_numbers(&raw),
            });
        }
        let mut groups = Vec::new();
        for (g, name) in cfg.groups.iter().enumerate() {
            let mut levels: Vec<String> = Vec::new();
            for r in prefix {
                if !levels.contains(&r.groups[g]) {
                    levels.push(r.groups[g].clone());
                }
            }
            groups.push(GroupDesign {
                name: name.clone(),
                levels,
            });
        }

        let p = 1 + nl + smooth.len();
        let mut block_sizes: Vec<usize> = groups.iter().map(|g| g.levels.len()).collect();
        block_sizes.extend(smooth.iter().map(|s| s.basis.len()));
        let spec = match cfg.model {
            ModelKind::LinReg => ModelSpec::LinReg {
                p,
                hyper: LinRegHyper::new(h.sigsq_beta, h.a_eps)?,
            },
            kind => {
                let r = block_sizes.len();
                let bs = BlockSpec {
                    p,
                    block_sizes,
                    sigsq_beta: h.sigsq_beta,
                    a_eps: h.a_eps,
                    a_u: vec![h.a_u; r],
                };
                bs.validate()?;
                if kind == ModelKind::Logistic {
                    ModelSpec::Logistic(bs)
                } else {
                    ModelSpec::Lmm(bs)
                }
            }
        };

        let mut design = Design {
            spec,
            response,
            linear,
            smooth,
            groups,
            basis_names: Vec::new(),
            plan: Vec::new(),
        };
        design.plan = design.coefficient_plan(cfg.model);
        Ok(design)
    }

    fn fixed_maps(&self) -> impl Iterator<Item = &AffineMap> {
        self.linear.iter().map(|(_, m)| m).chain(self.smooth.iter().map(|s| &s.map))
    }

    fn coefficient_plan(&self, kind: ModelKind) -> Vec<SummaryItem> {
        let dim = self.spec.row_dim();
        let (ly, sy) = (self.response.lo, self.response.scale);
        let mut plan = Vec::new();

        // β₀ = l_y + s_y(β̃₀ − Σ_j β̃_j l_j / s_j)
        let mut c0 = unit(dim, 0) * sy;
        for (j, m) in self.fixed_maps().enumerate() {
            c0[1 + j] = -sy * m.lo / m.scale;
        }
        plan.push(SummaryItem::Contrast {
            label: "intercept".into(),
            c: c0,
            offset: ly,
        });
        for (j, (name, m)) in self.linear.iter().enumerate() {
            plan.push(SummaryItem::Contrast {
                label: name.clone(),
                c: unit(dim, 1 + j) * (sy / m.scale),
                offset: 0.0,
            });
        }
        for (s, sm) in self.smooth.iter().enumerate() {
            for (tag, q) in [("q25", sm.five_numbers[1]), ("q50", sm.five_numbers[2]), ("q75", sm.five_numbers[3])] {
                plan.push(SummaryItem::Contrast {
                    label: format!("f_{}@{tag}", sm.name),
                    c: self.smooth_contrast(s, q),
                    offset: 0.0,
                });
            }
        }
        if kind != ModelKind::Logistic {
            plan.push(SummaryItem::ErrorVariance {
                label: "sigma2_eps".into(),
                factor: sy * sy,
                log: false,
            });
        }
        for (g, gd) in self.groups.iter().enumerate() {
            plan.push(SummaryItem::BlockVariance {
                label: format!("sigma2_u_{}", gd.name),
                block: g,
                factor: sy * sy,
                log: false,
            });
        }
        for (s, sm) in self.smooth.iter().enumerate() {
            plan.push(SummaryItem::BlockVariance {
                label: format!("sigma2_u_{}", sm.name),
                block: self.groups.len() + s,
                factor: (sy / sm.map.scale).powi(2),
                log: false,
            });
        }
        plan
    }

    fn block_offset(&self, block: usize) -> usize {
        let mut at = 1 + self.linear.len() + self.smooth.len();
        let sizes = self
            .groups
            .iter()
            .map(|g| g.levels.len())
            .chain(self.smooth.iter().map(|s| s.basis.len()));
        for size in sizes.take(block) {
            at += size;
        }
        at
    }

    /// Contrast giving smooth term `s` at original-scale `x`, response scale,
    /// up to the intercept.
    pub fn smooth_contrast(&self, s: usize, x: f64) -> DVector<f64> {
        let sm = &self.smooth[s];
        let sy = self.response.scale;
        let mut c = DVector::zeros(self.spec.row_dim());
        c[1 + self.linear.len() + s] = sy * x / sm.map.scale;
        let at = self.block_offset(self.groups.len() + s);
        let z = sm.basis.eval(sm.map.apply(x));
        c.rows_mut(at, z.len()).copy_from(&(z * sy));
        c
    }

    /// Response on the model's scale.
    pub fn y(&self, rec: &Record) -> f64 {
        self.response.apply(rec.y)
    }

    /// Model row for a record; `None` when a group label was not seen in
    /// the prefix.
    pub fn row(&self, rec: &Record) -> Option<DVector<f64>> {
        if let ModelSpec::Sparse { .. } = self.spec {
            return Some(DVector::from_column_slice(&rec.x));
        }
        let mut c = DVector::zeros(self.spec.row_dim());
        c[0] = 1.0;
        for (j, m) in self.fixed_maps().enumerate() {
            c[1 + j] = m.apply(rec.x[j]);
        }
        for (g, gd) in self.groups.iter().enumerate() {
            let level = gd.levels.iter().position(|l| *l == rec.groups[g])?;
            c[self.block_offset(g) + level] = 1.0;
        }
        let nl = self.linear.len();
        for (s, sm) in self.smooth.iter().enumerate() {
            let at = self.block_offset(self.groups.len() + s);
            let x = sm.map.apply(rec.x[nl + s]);
            sm.basis.eval_into(x, &mut c.as_mut_slice()[at..at + sm.basis.len()]);
        }
        Some(c)
    }

    /// Fitted smooth term `s` with its 95% band over the warm-up range.
    pub fn curve(&self, fitted: &Fitted, s: usize) -> Vec<CurvePoint> {
        let (mu, sigma) = fitted.coefficients();
        let [lo, _, _, _, hi] = self.smooth[s].five_numbers;
        (0..CURVE_POINTS)
            .map(|i| {
                let x = lo + (hi - lo) * i as f64 / (CURVE_POINTS - 1) as f64;
                contrast_band(x, &self.smooth_contrast(s, x), mu, sigma)
            })
            .collect()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.plan.iter().map(|i| i.label()).collect()
    }
}

fn unit(dim: usize, j: usize) -> DVector<f64> {
    let mut v = DVector::zeros(dim);
    v[j] = 1.0;
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use streamvb::FitOptions;

    fn rec(y: f64, x: &[f64], g: &[&str]) -> Record {
        Record {
            y,
            x: x.to_vec(),
            groups: g.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn layout_and_unseen_group() {
        let cfg = parse_config("[model]\ntype = lmm\n[columns]\nresponse = y\nlinear = a\nsmooth = b:2\ngroup = g\n").unwrap();
        let warm: Vec<Record> = (0..8).map(|i| rec(i as f64, &[i as f64, (i * i) as f64], &[["u", "v"][i % 2]])).collect();
        let d = Design::build(&cfg, &[], &warm, &warm).unwrap();
        let ModelSpec::Lmm(bs) = &d.spec else { panic!() };
        assert_eq!((bs.p, bs.block_sizes.clone()), (3, vec![2, 2]));
        let row = d.row(&rec(0.0, &[2.0, 30.0], &["v"])).unwrap();
        let knots = d.smooth[0].basis.knots().to_vec();
        let want = [1.0, 2.0, 30.0, 0.0, 1.0, 30.0 - knots[0], 30.0 - knots[1]];
        assert_eq!(row.as_slice(), &want);
        assert!(d.row(&rec(0.0, &[2.0, 3.0], &["w"])).is_none());
        assert_eq!(
            d.labels(),
            vec!["intercept", "a", "f_b@q25", "f_b@q50", "f_b@q75", "sigma2_eps", "sigma2_u_g", "sigma2_u_b"]
        );
    }

    #[test]
    fn scaled_fit_reports_original_scale() {
        // y = 3 + 2a − b exactly (tiny noise), fitted on unit-interval axes.
        let text = "[model]\ntype = linreg\n[columns]\nresponse = y\nlinear = a, b\n[run]\nscaling = on\n";
        let cfg = parse_config(text).unwrap();
        let recs: Vec<Record> = (0..40)
            .map(|i| {
                let a = 10.0 + (i as f64 * 0.37).sin() * 5.0;
                let b = -4.0 + (i as f64 * 1.3).cos() * 2.0;
                let noise = 1e-3 * ((i * 7919) % 13) as f64;
                rec(3.0 + 2.0 * a - b + noise, &[a, b], &[])
            })
            .collect();
        let d = Design::build(&cfg, &[], &recs, &recs).unwrap();
        let rows: Vec<DVector<f64>> = recs.iter().map(|r| d.row(r).unwrap()).collect();
        let c = streamvb::diagnostics::stack_rows(&rows, 3);
        let y: Vec<f64> = recs.iter().map(|r| d.y(r)).collect();
        let out = d.spec.fit_batch(&y, &c, &FitOptions::default()).unwrap();
        let s = out.fitted.summarize_all(&d.spec, &d.plan);
        for (got, want) in s.iter().zip([3.0, 2.0, -1.0]) {
            assert!((got.mean - want).abs() < 0.02, "{} {}", got.label, got.mean);
        }
        assert!(s[3].mean < 1e-4);
    }
}
