//! Columnar binary dump of a cone and a CSV summary of its optical scalars.
//!
//! Layout (little endian): magic `YMCONE01`, the vertex point and frame
//! (20 f64), `n_theta`, `n_phi`, `n_steps`, `record_every` (u64), `ds`,
//! `s_min_factor` (f64), then per ray the node count (u64) followed by
//! the node records as 32 f64 each: x, L, J_1, J_2, ∇_{J_1}L, ∇_{J_2}L,
//! e_1, e_2.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ConeParams, NullConeBundle, Ray, RayNode, Vertex};
use crate::exec::Exec;
use crate::geometry::{SpacetimeChart, Vec4};
use crate::sphere::SphereGrid;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"YMCONE01";

fn put_f64s(w: &mut impl Write, v: &[f64]) -> std::io::Result<()> {
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn put_u64(w: &mut impl Write, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn get_f64(r: &mut impl Read) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_vec4(r: &mut impl Read) -> std::io::Result<Vec4> {
    Ok([get_f64(r)?, get_f64(r)?, get_f64(r)?, get_f64(r)?])
}

pub fn write_binary(bundle: &NullConeBundle<'_>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let run = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        put_f64s(w, &bundle.vertex.p)?;
        for v in &bundle.vertex.frame {
            put_f64s(w, v)?;
        }
        let p = &bundle.params;
        for v in [p.n_theta, p.n_phi, p.n_steps(), p.record_every] {
            put_u64(w, v as u64)?;
        }
        put_f64s(w, &[p.ds, p.s_min_factor])?;
        for ray in &bundle.rays {
            put_u64(w, ray.nodes.len() as u64)?;
            for n in &ray.nodes {
                for v in [&n.x, &n.l, &n.jac[0], &n.jac[1], &n.dl[0], &n.dl[1], &n.e[0], &n.e[1]] {
                    put_f64s(w, v)?;
                }
            }
        }
        w.flush()
    };
    run(&mut w).map_err(|e| Error::io(path, e))
}

/// Read a cone written by [`write_binary`]. Ring cuts are not stored.
pub fn read_binary<'c>(chart: &'c dyn SpacetimeChart, path: &Path) -> Result<NullConeBundle<'c>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io = |e| Error::io(path, e);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("{} is not a cone file", path.display())));
    }
    let p = get_vec4(&mut r).map_err(io)?;
    let mut frame = [[0.0; 4]; 4];
    for f in frame.iter_mut() {
        *f = get_vec4(&mut r).map_err(io)?;
    }
    let mut ints = [0usize; 4];
    for v in ints.iter_mut() {
        *v = get_u64(&mut r).map_err(io)? as usize;
    }
    let [n_theta, n_phi, n_steps, record_every] = ints;
    let ds = get_f64(&mut r).map_err(io)?;
    let s_min_factor = get_f64(&mut r).map_err(io)?;
    let params = ConeParams {
        n_theta,
        n_phi,
        s_max: n_steps as f64 * ds,
        ds,
        record_every,
        s_min_factor,
        ..ConeParams::default()
    };
    let grid = SphereGrid::new(n_theta, n_phi)?;
    let mut rays = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        let count = get_u64(&mut r).map_err(io)? as usize;
        let mut nodes = Vec::with_capacity(count);
        for _ in 0..count {
            let mut v = [[0.0; 4]; 8];
            for x in v.iter_mut() {
                *x = get_vec4(&mut r).map_err(io)?;
            }
            nodes.push(RayNode { x: v[0], l: v[1], jac: [v[2], v[3]], dl: [v[4], v[5]], e: [v[6], v[7]] });
        }
        rays.push(Ray { nodes, termination: None, renormalization: 0.0, reprojection: 0.0, rings: Vec::new() });
    }
    let shells = (0..=n_steps / record_every.max(1)).map(|k| (k * record_every) as f64 * ds).collect();
    Ok(NullConeBundle { chart, vertex: Vertex { p, frame }, grid, params, shells, rays })
}

/// One row per live node with `s ≥ s_min`.
pub fn write_summary_csv(bundle: &NullConeBundle<'_>, path: &Path, exec: Exec) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["s", "ray", "theta", "phi", "tr_chi", "chi_hat_norm", "area", "lapse", "zeta_1", "zeta_2"])?;
    let rows = exec.map(bundle.n_rays(), |i| -> Result<Vec<Vec<String>>> {
        let mut out = Vec::new();
        for k in 1..bundle.rays[i].nodes.len() {
            if bundle.shells[k] < bundle.s_min() {
                continue;
            }
            let o = bundle.optical_scalars(i, k)?;
            let vals = [o.tr_chi, o.chi_hat_norm(), o.area, o.lapse, o.zeta[0], o.zeta[1]];
            let mut row =
                vec![o.s.to_string(), i.to_string(), bundle.grid.theta(i).to_string(), bundle.grid.phi(i).to_string()];
            row.extend(vals.iter().map(|v| v.to_string()));
            out.push(row);
        }
        Ok(out)
    });
    for r in rows {
        for row in r? {
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
