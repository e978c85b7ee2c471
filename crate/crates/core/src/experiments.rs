//! Runs a configured experiment and writes `table.txt`, `steps.csv` and VTK files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::adapt::{self, EstimatorKind, MetricsRecord, RefinementKind, RunOutput, StepView};
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};
use crate::timeconsistency::{self, OdeRow};
use crate::vtk::VtkWriter;

#[derive(Debug)]
pub enum Rows {
    Adaptive(Vec<MetricsRecord>),
    Ode(Vec<OdeRow>),
}

/// Result of a run whose configuration was valid. `failure` carries a
/// numerical error; the rows computed before it are kept and written.
#[derive(Debug)]
pub struct Report {
    pub rows: Rows,
    pub failure: Option<Error>,
    pub dir: PathBuf,
}

impl Report {
    pub fn records(&self) -> &[MetricsRecord] {
        match &self.rows {
            Rows::Adaptive(r) => r,
            Rows::Ode(_) => &[],
        }
    }
}

/// Runs `cfg`, writing into `out_root/<name>/`. Configuration errors are
/// returned before anything is written.
pub fn run_experiment(cfg: &ExperimentConfig, out_root: &Path) -> Result<Report> {
    cfg.validate()?;
    let dir = out_root.join(&cfg.name);
    match cfg.kind {
        ExperimentKind::Ode => run_ode(cfg, dir),
        _ => run_adaptive(cfg, dir),
    }
}

fn run_adaptive(cfg: &ExperimentConfig, dir: PathBuf) -> Result<Report> {
    let p = cfg.problem()?;
    let mesh = cfg.mesh()?;
    let vtk_dir = dir.join("vtk");
    let write_vtk = cfg.output.vtk;
    let mut observer = |v: &StepView<'_>| -> Result<()> {
        if !write_vtk {
            return Ok(());
        }
        fs::create_dir_all(&vtk_dir)?;
        let mut w = VtkWriter::new(v.mesh);
        w.point_field("u", v.u);
        if let Some(z) = v.z {
            w.point_field("z", z);
        }
        w.cell_field("eta", v.element);
        let path = vtk_dir.join(format!("step_{:03}.vtk", v.record.step));
        w.write(&path, &format!("{} step {}", cfg.name, v.record.step))?;
        Ok(())
    };
    let out: RunOutput = match cfg.kind {
        ExperimentKind::SingleGoal => {
            let reference = cfg.reference_values().map(|r| r[0]);
            adapt::run_single_goal(&p, &cfg.goals[0], &mesh, &cfg.loop_config, reference, Some(&mut observer))?
        }
        ExperimentKind::Multigoal => {
            let w = cfg.weighting_spec().expect("validated");
            adapt::run_multigoal(&p, &cfg.goals, &w, &mesh, &cfg.loop_config, cfg.reference_values(), Some(&mut observer))?
        }
        ExperimentKind::Ode => unreachable!(),
    };
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("table.txt"), adapt::to_table(&out.records, cfg.title()))?;
    fs::write(dir.join("steps.csv"), adapt::to_csv(&out.records, &cfg.goal_labels()))?;
    Ok(Report { rows: Rows::Adaptive(out.records), failure: out.failure, dir })
}

fn run_ode(cfg: &ExperimentConfig, dir: PathBuf) -> Result<Report> {
    let o = cfg.ode.as_ref().expect("validated");
    let mut rows = Vec::new();
    let mut failure = None;
    for &n in &o.steps {
        match timeconsistency::study(o.model, o.u0, o.t_end, &[n]) {
            Ok(mut r) => rows.append(&mut r),
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("table.txt"), ode_table(&rows, cfg.title()))?;
    fs::write(dir.join("steps.csv"), timeconsistency::to_csv(&rows))?;
    Ok(Report { rows: Rows::Ode(rows), failure, dir })
}

/// Fixed-width table `N | True err | Estimate | Weighted | Consistency | Eff`.
pub fn ode_table(rows: &[OdeRow], title: &str) -> String {
    let width = 8 + 5 * 13;
    let mut s = String::new();
    let _ = writeln!(s, "{title}\n{}", "=".repeat(width));
    let _ = writeln!(s, "{:>8}{:>13}{:>13}{:>13}{:>13}{:>13}", "N", "True err", "Estimate", "Weighted", "Consistency", "Eff");
    let _ = writeln!(s, "{}", "-".repeat(width));
    for r in rows {
        let _ = writeln!(
            s,
            "{:>8}{:>13}{:>13}{:>13}{:>13}{:>13}",
            r.n,
            adapt::e2(r.true_error),
            adapt::e2(r.parts.estimate),
            adapt::e2(r.parts.weighted_residual),
            adapt::e2(r.parts.consistency),
            r.i_eff.map_or_else(|| "-".into(), adapt::e2)
        );
    }
    let _ = writeln!(s, "{}", "=".repeat(width));
    s
}

/// Goal values from a higher-order adaptive run of the same problem.
#[derive(Debug, Clone)]
pub struct ReferenceRun {
    pub values: Vec<f64>,
    pub dofs: usize,
    pub eta_h: f64,
    pub steps: usize,
}

/// Reruns the configured problem adaptively with `Q_degree` primal and
/// `Q_{degree+1}` enriched spaces up to `max_dofs`, without a reference.
pub fn compute_reference(cfg: &ExperimentConfig, degree: usize, max_dofs: usize) -> Result<ReferenceRun> {
    if cfg.kind == ExperimentKind::Ode {
        return Err(Error::Config("ode experiments use the exact solution".into()));
    }
    let mut lc = cfg.loop_config.clone();
    lc.primal_degree = degree;
    lc.enriched_degree = degree + 1;
    lc.estimator = EstimatorKind::Enriched;
    lc.refinement = RefinementKind::Adaptive;
    lc.max_dofs = max_dofs;
    lc.max_steps = lc.max_steps.max(60);
    lc.galerkin_demo = false;
    lc.check_identity = false;
    let p = cfg.problem()?;
    let mesh = cfg.mesh()?;
    let out = match cfg.kind {
        ExperimentKind::SingleGoal => adapt::run_single_goal(&p, &cfg.goals[0], &mesh, &lc, None, None)?,
        _ => adapt::run_multigoal(&p, &cfg.goals, &cfg.weighting_spec().expect("validated"), &mesh, &lc, None, None)?,
    };
    if let Some(e) = out.failure {
        return Err(e);
    }
    let last = out.records.last().ok_or_else(|| Error::Config("reference run produced no steps".into()))?;
    Ok(ReferenceRun { values: last.goal_values.clone(), dofs: last.dofs, eta_h: last.eta_h, steps: out.records.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::bundled;

    #[test]
    fn galerkin_run_writes_one_row() {
        let cfg = bundled("example1_comp1").unwrap().unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let rep = run_experiment(&cfg, tmp.path()).unwrap();
        assert!(rep.failure.is_none());
        assert_eq!(rep.records().len(), 1);
        let table = fs::read_to_string(rep.dir.join("table.txt")).unwrap();
        assert!(table.contains("0.00e+00"));
        assert!(rep.dir.join("vtk/step_000.vtk").exists());
        let csv = fs::read_to_string(rep.dir.join("steps.csv")).unwrap();
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn ode_run_writes_rows() {
        let mut cfg = bundled("ode_consistency").unwrap().unwrap();
        cfg.ode.as_mut().unwrap().steps = vec![4, 8];
        let tmp = tempfile::tempdir().unwrap();
        let rep = run_experiment(&cfg, tmp.path()).unwrap();
        let csv = fs::read_to_string(rep.dir.join("steps.csv")).unwrap();
        assert!(csv.starts_with("N,true_error,estimate,weighted_residual,consistency,I_eff\n"));
        assert_eq!(csv.lines().count(), 3);
        let table = fs::read_to_string(rep.dir.join("table.txt")).unwrap();
        assert!(table.lines().nth(2).unwrap().contains("Consistency"));
    }

    #[test]
    fn config_errors_write_nothing() {
        let mut cfg = bundled("example1_comp2").unwrap().unwrap();
        cfg.loop_config.theta = 2.0;
        let tmp = tempfile::tempdir().unwrap();
        assert!(run_experiment(&cfg, tmp.path()).unwrap_err().is_config());
        assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 0);
    }
}
