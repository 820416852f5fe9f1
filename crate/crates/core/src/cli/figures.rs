use std::f64::consts::TAU;
use std::path::Path;

use nalgebra::{DMatrix, Matrix2, Vector2};
use serde::Serialize;

use super::bundle::{self, Table};
use crate::error::{Error, Result};
use crate::linalg::{psd_sqrt, spd_inverse};
use crate::pipeline::RunConfig;

pub const OUTLINE_POINTS: usize = 64;
pub const FIGURES_DIR: &str = "figures";
pub const POSITION_COORDS: [usize; 2] = [0, 1];

/// Shape of the shadow of `{η : ηᵀQ⁻¹η ≤ 1}` on `coords`: the inverse of the
/// Schur complement of `Q⁻¹` with respect to the remaining coordinates.
/// Singular shapes fall back to the principal submatrix, which is the limit
/// of the same expression.
pub fn project_shape(q: &DMatrix<f64>, coords: [usize; 2]) -> Matrix2<f64> {
    let sub = Matrix2::from_fn(|i, j| q[(coords[i], coords[j])]);
    let n = q.nrows();
    let rest: Vec<usize> = (0..n).filter(|i| !coords.contains(i)).collect();
    let Some(p) = spd_inverse(q) else { return sub };
    let p_aa = Matrix2::from_fn(|i, j| p[(coords[i], coords[j])]);
    let schur = if rest.is_empty() {
        p_aa
    } else {
        let p_ab = DMatrix::from_fn(2, rest.len(), |i, j| p[(coords[i], rest[j])]);
        let p_bb = DMatrix::from_fn(rest.len(), rest.len(), |i, j| p[(rest[i], rest[j])]);
        let Some(p_bb_inv) = spd_inverse(&p_bb) else { return sub };
        let corr = &p_ab * p_bb_inv * p_ab.transpose();
        p_aa - Matrix2::from_fn(|i, j| corr[(i, j)])
    };
    schur.try_inverse().map(|m| (m + m.transpose()) * 0.5).unwrap_or(sub)
}

/// `OUTLINE_POINTS` points of the ellipse `{c + z : zᵀM⁻¹z ≤ 1}` boundary.
pub fn ellipse_outline(center: Vector2<f64>, shape: &Matrix2<f64>) -> Result<Vec<Vector2<f64>>> {
    let root = psd_sqrt(&DMatrix::from_column_slice(2, 2, shape.as_slice()), 1e-9)?;
    let root = Matrix2::from_column_slice(root.as_slice());
    Ok((0..OUTLINE_POINTS)
        .map(|i| {
            let th = TAU * i as f64 / OUTLINE_POINTS as f64;
            center + root * Vector2::new(th.cos(), th.sin())
        })
        .collect())
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct FigureManifest {
    pub nodes: usize,
    pub ellipse_count: usize,
    pub obstacle_count: usize,
    pub sample_count: usize,
    pub points_per_outline: usize,
    pub position_coords: [usize; 2],
    pub final_time: f64,
    pub input_bounds: Vec<f64>,
    pub tol_trajectory: f64,
    pub tol_funnel: f64,
    pub iterations: usize,
    pub files: Vec<String>,
}

/// Position-plane, input and convergence data derived from a solution
/// directory; writes into `<dir>/figures`.
pub fn export(dir: &Path) -> Result<FigureManifest> {
    let cfg: RunConfig = bundle::read_config(&dir.join(bundle::CONFIG_FILE))?;
    let traj = bundle::read_trajectory(&dir.join(bundle::TRAJECTORY_FILE))?;
    let (nx, nu, n) = (traj.nx(), traj.nu(), traj.horizon());
    if nx < 2 {
        return Err(Error::Bundle {
            file: bundle::TRAJECTORY_FILE.into(),
            reason: "position plane needs at least two states".into(),
        });
    }
    let funnel = bundle::read_funnel(&dir.join(bundle::FUNNEL_FILE), nx, nu)?;
    let iter_path = dir.join(bundle::ITERATIONS_FILE);
    if !iter_path.is_file() {
        return Err(Error::Bundle {
            file: iter_path.display().to_string(),
            reason: "missing from the solution directory".into(),
        });
    }
    let iterations = Table::read(&iter_path)?;
    let ver_path = dir.join(bundle::VERIFICATION_FILE);
    let verification = if ver_path.is_file() {
        Some(Table::read(&ver_path)?)
    } else {
        None
    };

    let out = dir.join(FIGURES_DIR);
    std::fs::create_dir_all(&out)?;
    let [cx, cy] = POSITION_COORDS;
    let mut files = Vec::new();
    let mut save = |name: &str, t: &Table| -> Result<()> {
        t.write(&out.join(name))?;
        files.push(name.to_string());
        Ok(())
    };

    let mut nominal = Table::new(header(&["k", "t", "x", "y"]), 1);
    let mut ellipses = Table::new(header(&["node", "point", "x", "y"]), 2);
    for k in 0..=n {
        let c = Vector2::new(traj.x[k][cx], traj.x[k][cy]);
        nominal.push(vec![k as f64, traj.t[k], c.x, c.y]);
        let shape = project_shape(&funnel.scaled_q(k), POSITION_COORDS);
        for (i, p) in ellipse_outline(c, &shape)?.iter().enumerate() {
            ellipses.push(vec![k as f64, i as f64, p.x, p.y]);
        }
    }
    save("fig2_nominal.csv", &nominal)?;
    save("fig2_ellipses.csv", &ellipses)?;

    let mut obstacles = Table::new(header(&["obstacle", "point", "x", "y"]), 2);
    for (o, ob) in cfg.obstacles.iter().enumerate() {
        let shape = Matrix2::new(ob.diameters[0].powi(2) / 4.0, 0.0, 0.0, ob.diameters[1].powi(2) / 4.0);
        for (i, p) in ellipse_outline(Vector2::from(ob.center), &shape)?.iter().enumerate() {
            obstacles.push(vec![o as f64, i as f64, p.x, p.y]);
        }
    }
    save("fig2_obstacles.csv", &obstacles)?;

    let mut inputs_header = vec!["k".to_string(), "t_start".into(), "t_end".into()];
    inputs_header.extend((0..nu).map(|i| format!("u_{i}")));
    let mut inputs = Table::new(inputs_header.clone(), 1);
    for k in 0..n {
        let mut row = vec![k as f64, traj.t[k], traj.t[k + 1]];
        row.extend(traj.u[k].iter());
        inputs.push(row);
    }
    save("fig3_inputs.csv", &inputs)?;

    let mut sample_pos = Table::new(header(&["sample", "node", "x", "y"]), 2);
    let mut sample_inputs_header = vec!["sample".to_string()];
    sample_inputs_header.extend(inputs_header);
    let mut sample_inputs = Table::new(sample_inputs_header, 2);
    let mut sample_count = 0;
    if let Some(v) = &verification {
        let col = |name: &str| {
            v.column(name).ok_or_else(|| Error::Bundle {
                file: bundle::VERIFICATION_FILE.into(),
                reason: format!("no `{name}` column"),
            })
        };
        let (sc, nc) = (col("sample")?, col("node")?);
        let (xc, yc) = (col(&format!("x_{cx}"))?, col(&format!("x_{cy}"))?);
        let uc = (0..nu).map(|i| col(&format!("u_{i}"))).collect::<Result<Vec<_>>>()?;
        for r in &v.rows {
            let (s, k) = (r[sc], r[nc] as usize);
            sample_count = sample_count.max(s as usize + 1);
            sample_pos.push(vec![s, k as f64, r[xc], r[yc]]);
            if k < n {
                let mut row = vec![s, k as f64, traj.t[k], traj.t[k + 1]];
                row.extend(uc.iter().map(|&c| r[c]));
                sample_inputs.push(row);
            }
        }
    }
    save("fig2_samples.csv", &sample_pos)?;
    save("fig3_sample_inputs.csv", &sample_inputs)?;

    let mut convergence = Table::new(header(&["iteration", "delta_t", "delta_f"]), 1);
    let (ic, tc, fc) = ["iteration", "delta_t", "delta_f"]
        .map(|h| iterations.column(h))
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .map(|c| (c[0], c[1], c[2]))
        .ok_or_else(|| Error::Bundle {
            file: bundle::ITERATIONS_FILE.into(),
            reason: "expected iteration, delta_t and delta_f columns".into(),
        })?;
    for r in &iterations.rows {
        convergence.push(vec![r[ic], r[tc], r[fc]]);
    }
    save("fig4_convergence.csv", &convergence)?;

    let manifest = FigureManifest {
        nodes: n,
        ellipse_count: n + 1,
        obstacle_count: cfg.obstacles.len(),
        sample_count,
        points_per_outline: OUTLINE_POINTS,
        position_coords: POSITION_COORDS,
        final_time: traj.t[n],
        input_bounds: cfg.constraints.input_bounds.clone(),
        tol_trajectory: cfg.convergence.tol_trajectory,
        tol_funnel: cfg.convergence.tol_funnel,
        iterations: iterations.rows.len(),
        files,
    };
    bundle::write_json(&out.join("figures.json"), &manifest)?;
    Ok(manifest)
}
