use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use manifold_descent::{FlowTrace, IterateRecord};
use nalgebra::DVector;

/// Fixed 17-significant-digit scientific notation; round-trips every f64.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn vector(v: &DVector<f64>) -> String {
    v.iter().map(|c| num(*c)).collect::<Vec<_>>().join(",")
}

fn coords_header(n: usize) -> String {
    (1..=n).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",")
}

fn create(path: &Path) -> io::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_trajectory(path: &Path, n: usize, records: &[IterateRecord]) -> io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "k,{},f,V,grad_ftilde_norm,feas_norm,step", coords_header(n))?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.k,
            vector(&r.x),
            num(r.f_val),
            num(r.v_val),
            num(r.grad_ftilde_norm),
            num(r.feas_norm),
            num(r.step)
        )?;
    }
    w.flush()
}

pub fn write_flow(path: &Path, n: usize, trace: &FlowTrace) -> io::Result<()> {
    let mut w = create(path)?;
    let z = trace.z_norms.as_ref();
    write!(w, "t,{},f,V,feas_norm", coords_header(n))?;
    if z.is_some() {
        write!(w, ",z_norm")?;
    }
    writeln!(w)?;
    for i in 0..trace.len() {
        write!(
            w,
            "{},{},{},{},{}",
            num(trace.times[i]),
            vector(&trace.states[i]),
            num(trace.f_vals[i]),
            num(trace.v_vals[i]),
            num(trace.feas_norms[i])
        )?;
        if let Some(z) = z {
            write!(w, ",{}", num(z[i]))?;
        }
        writeln!(w)?;
    }
    w.flush()
}

pub fn write_lines(path: &Path, lines: &[String]) -> io::Result<()> {
    let mut w = create(path)?;
    for line in lines {
        writeln!(w, "{line}")?;
    }
    w.flush()
}
