//! ASCII PLY export, whole-cloud or streamed in chunks.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geom::{PointCloud, Vec3};

/// Fixed header comments; a one-point cloud without normals is a 14-line file.
const COMMENTS: [&str; 3] = ["generated by dynrecon", "units meters", "frame world"];

fn write_header<W: Write>(out: &mut W, count: usize, normals: bool) -> std::io::Result<()> {
    writeln!(out, "ply")?;
    writeln!(out, "format ascii 1.0")?;
    for c in COMMENTS {
        writeln!(out, "comment {c}")?;
    }
    writeln!(
        out,
        "comment normals {}",
        if normals { "present" } else { "absent" }
    )?;
    writeln!(out, "element vertex {count}")?;
    for p in ["x", "y", "z"] {
        writeln!(out, "property double {p}")?;
    }
    if normals {
        for p in ["nx", "ny", "nz"] {
            writeln!(out, "property double {p}")?;
        }
    }
    writeln!(out, "element face 0")?;
    writeln!(out, "property list uchar int vertex_indices")?;
    writeln!(out, "end_header")
}

fn write_vertex<W: Write>(out: &mut W, p: &Vec3, n: Option<&Vec3>) -> std::io::Result<()> {
    // `{}` on f64 is the shortest exact round-trip form
    write!(out, "{} {} {}", p.x, p.y, p.z)?;
    if let Some(n) = n {
        write!(out, " {} {} {}", n.x, n.y, n.z)?;
    }
    writeln!(out)
}

pub fn write_ply(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    if cloud.is_empty() {
        return Err(Error::Insufficient("cannot write an empty cloud".into()));
    }
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    write_header(&mut out, cloud.len(), cloud.normals.is_some()).map_err(io)?;
    for (i, p) in cloud.points.iter().enumerate() {
        write_vertex(&mut out, p, cloud.normals.as_ref().map(|n| &n[i])).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Appends points to a side file and writes the final PLY on
/// [`finish`](Self::finish), so memory stays bounded by one chunk.
pub struct PlyStreamWriter {
    path: PathBuf,
    body_path: PathBuf,
    body: BufWriter<File>,
    count: usize,
    normals: bool,
}

impl PlyStreamWriter {
    pub fn create(path: impl AsRef<Path>, normals: bool) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut body_path = path.clone().into_os_string();
        body_path.push(".body");
        let body_path = PathBuf::from(body_path);
        let body = BufWriter::new(File::create(&body_path).map_err(|e| Error::io(&body_path, e))?);
        Ok(PlyStreamWriter {
            path,
            body_path,
            body,
            count: 0,
            normals,
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn append(&mut self, chunk: &PointCloud) -> Result<()> {
        let normals = match (&chunk.normals, self.normals) {
            (Some(n), true) => Some(n),
            (None, false) => None,
            _ => {
                return Err(Error::InvalidParameter(
                    "chunk normals do not match the stream".into(),
                ))
            }
        };
        for (i, p) in chunk.points.iter().enumerate() {
            write_vertex(&mut self.body, p, normals.map(|n| &n[i]))
                .map_err(|e| Error::io(&self.body_path, e))?;
        }
        self.count += chunk.len();
        Ok(())
    }

    /// Writes header and body to the target path; returns the vertex count.
    pub fn finish(mut self) -> Result<usize> {
        self.body
            .flush()
            .map_err(|e| Error::io(&self.body_path, e))?;
        drop(self.body);
        if self.count == 0 {
            let _ = fs::remove_file(&self.body_path);
            return Err(Error::Insufficient("cannot write an empty cloud".into()));
        }
        let io = |e| Error::io(&self.path, e);
        let mut out = BufWriter::new(File::create(&self.path).map_err(io)?);
        write_header(&mut out, self.count, self.normals).map_err(io)?;
        let mut body = File::open(&self.body_path).map_err(|e| Error::io(&self.body_path, e))?;
        std::io::copy(&mut body, &mut out).map_err(io)?;
        out.flush().map_err(io)?;
        fs::remove_file(&self.body_path).map_err(|e| Error::io(&self.body_path, e))?;
        Ok(self.count)
    }
}

/// Reads files written by this module (ASCII, vertex element first).
pub fn read_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = BufReader::new(file).lines().enumerate();
    let mut next = || -> Result<Option<(usize, String)>> {
        match lines.next() {
            Some((i, l)) => Ok(Some((i + 1, l.map_err(|e| Error::io(path, e))?))),
            None => Ok(None),
        }
    };
    match next()? {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(err(1, "missing `ply` magic".into())),
    }
    let mut count = None;
    let mut props = Vec::new();
    let mut in_vertex = false;
    loop {
        let (n, l) = next()?.ok_or_else(|| err(0, "header not terminated".into()))?;
        let words: Vec<&str> = l.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["format", fmt, _] if *fmt != "ascii" => {
                return Err(err(n, format!("unsupported format {fmt}")))
            }
            ["element", "vertex", c] => {
                count = Some(
                    c.parse::<usize>()
                        .map_err(|_| err(n, format!("bad vertex count {c:?}")))?,
                );
                in_vertex = true;
            }
            ["element", ..] => in_vertex = false,
            ["property", _, name] if in_vertex => props.push(name.to_string()),
            _ => {}
        }
    }
    let count = count.ok_or_else(|| err(0, "no vertex element".into()))?;
    let col = |name: &str| props.iter().position(|p| p == name);
    let (x, y, z) = match (col("x"), col("y"), col("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(err(0, "vertex element lacks x/y/z".into())),
    };
    let normal_cols = match (col("nx"), col("ny"), col("nz")) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        _ => None,
    };
    let mut points = Vec::with_capacity(count);
    let mut normals = Vec::new();
    for _ in 0..count {
        let (n, l) = next()?.ok_or_else(|| err(0, format!("expected {count} vertices")))?;
        let vals: Vec<f64> = l
            .split_whitespace()
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| err(n, format!("not a number: {v:?}")))
            })
            .collect::<Result<_>>()?;
        if vals.len() != props.len() {
            return Err(err(
                n,
                format!("expected {} values, found {}", props.len(), vals.len()),
            ));
        }
        points.push(Vec3::new(vals[x], vals[y], vals[z]));
        if let Some((a, b, c)) = normal_cols {
            normals.push(Vec3::new(vals[a], vals[b], vals[c]));
        }
    }
    let cloud = PointCloud::new(points);
    if normal_cols.is_some() {
        cloud.with_normals(normals)
    } else {
        Ok(cloud)
    }
}
