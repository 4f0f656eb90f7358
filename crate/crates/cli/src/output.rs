use std::io::Write;
use std::path::Path;

use rayforge::flow::GeodesicTrace;
use rayforge::rayf::RayArray;
use rayforge::transform::{Sinogram, VolumeField};
use rayforge::{Error, Result};

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.into())
}

/// CSV writer to a file, or stdout for `-` / no path.
pub fn csv_writer(path: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>> {
    let sink: Box<dyn Write> = match path {
        Some(p) if p != Path::new("-") => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        _ => Box::new(std::io::stdout().lock()),
    };
    Ok(csv::Writer::from_writer(sink))
}

pub fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

/// Rows of `(label, value)` pairs written as a two-column table.
pub fn write_table<W: Write>(w: &mut csv::Writer<W>, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace<W: Write>(w: &mut csv::Writer<W>, trace: &GeodesicTrace) -> Result<()> {
    let rows: Vec<Vec<String>> = trace
        .samples
        .iter()
        .zip(&trace.time)
        .map(|(p, t)| [p.s, p.x.x, p.x.y, p.v.x, p.v.y, *t].into_iter().map(fmt).collect())
        .collect();
    write_table(w, &["s", "x1", "x2", "v1", "v2", "t"], &rows)
}

/// One row per fan sample: indices, angles, then `re`/`im` of every entry.
pub fn write_sinogram_csv<W: Write>(w: &mut csv::Writer<W>, sino: &Sinogram) -> Result<()> {
    let n = sino.dim;
    let mut header = vec!["j".to_string(), "k".to_string(), "theta".to_string(), "alpha".to_string()];
    for r in 0..n {
        for c in 0..n {
            header.push(if n == 1 { "re".into() } else { format!("re_{r}{c}") });
            header.push(if n == 1 { "im".into() } else { format!("im_{r}{c}") });
        }
    }
    let rows: Vec<Vec<String>> = (0..sino.fan.len())
        .map(|idx| {
            let (theta, alpha) = sino.fan.angles(idx);
            let mut row = vec![
                (idx / sino.fan.n_alpha).to_string(),
                (idx % sino.fan.n_alpha).to_string(),
                fmt(theta),
                fmt(alpha),
            ];
            for r in 0..n {
                for c in 0..n {
                    let z = sino.values[idx][(r, c)];
                    row.push(fmt(z.re));
                    row.push(fmt(z.im));
                }
            }
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(w, &header, &rows)
}

/// `[N, N, 2, ny, nx]` array, the same layout the scene reader accepts for
/// gridded potentials.
pub fn volume_to_rayf(q: &VolumeField) -> Result<RayArray> {
    let (n, nodes) = (q.dim, q.grid.len());
    let mut data = vec![0.0; n * n * 2 * nodes];
    for (node, m) in q.values.iter().enumerate() {
        for r in 0..n {
            for c in 0..n {
                let k = 2 * (r * n + c);
                data[k * nodes + node] = m[(r, c)].re;
                data[(k + 1) * nodes + node] = m[(r, c)].im;
            }
        }
    }
    RayArray::new(vec![n as u32, n as u32, 2, q.grid.ny as u32, q.grid.nx as u32], data)
}

/// Binary 8-bit PGM of `|q_rc|` per matrix entry, scaled to the entry's
/// maximum, top row first.
pub fn write_pgms(q: &VolumeField, prefix: &Path) -> Result<Vec<std::path::PathBuf>> {
    let (nx, ny) = (q.grid.nx, q.grid.ny);
    let mut written = Vec::new();
    for r in 0..q.dim {
        for c in 0..q.dim {
            let mags: Vec<f64> = q.values.iter().map(|m| m[(r, c)].norm()).collect();
            let max = mags.iter().copied().fold(0.0, f64::max);
            let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
            let mut bytes = format!("P5\n{nx} {ny}\n255\n").into_bytes();
            for j in (0..ny).rev() {
                bytes.extend((0..nx).map(|i| (mags[q.grid.index(i, j)] * scale).round() as u8));
            }
            let mut name = prefix.as_os_str().to_owned();
            name.push(format!("_{r}{c}.pgm"));
            let path = std::path::PathBuf::from(name);
            std::fs::write(&path, bytes)?;
            written.push(path);
        }
    }
    Ok(written)
}
