//! Solution dumps: a plain-text header plus a raw little-endian `f64` file.
//!
//! Header layout (one item per line):
//!
//! ```text
//! octree-dump 1
//! dim <2|3>
//! block_size <N>
//! domain_lo <x> <y> <z>
//! domain_size <s>
//! data_file <name>
//! cell_order x-fastest
//! num_blocks <B>
//! block <level> <i> <j> <k> <offset>
//! ...
//! ```
//!
//! Blocks appear level-major, then in lexicographic block coordinate order.
//! `offset` counts `f64` values from the start of the data file; every block
//! contributes `N^dim` interior values, x fastest.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::TreeMesh;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DumpBlock {
    pub level: usize,
    pub coord: [i64; 3],
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DumpHeader {
    pub dim: usize,
    pub block_size: usize,
    pub domain_lo: [f64; 3],
    pub domain_size: f64,
    pub data_file: String,
    pub blocks: Vec<DumpBlock>,
}

/// Writes `<stem>.txt` and `<stem>.f64` into `dir` for the interiors of
/// all blocks of `data`.
pub fn write_dump(mesh: &TreeMesh, data: &[f64], dir: &Path, stem: &str) -> Result<()> {
    let l = mesh.layout();
    let data_name = format!("{stem}.f64");
    let header_path = dir.join(format!("{stem}.txt"));
    let data_path = dir.join(&data_name);

    let mut h = String::new();
    let d = mesh.domain();
    h.push_str("octree-dump 1\n");
    h.push_str(&format!("dim {}\n", mesh.dim()));
    h.push_str(&format!("block_size {}\n", l.n));
    h.push_str(&format!("domain_lo {:e} {:e} {:e}\n", d.lo[0], d.lo[1], d.lo[2]));
    h.push_str(&format!("domain_size {:e}\n", d.size));
    h.push_str(&format!("data_file {data_name}\n"));
    h.push_str("cell_order x-fastest\n");
    h.push_str(&format!("num_blocks {}\n", mesh.num_blocks()));
    let per_block = l.interior_cells();
    for (id, b) in mesh.blocks().iter().enumerate() {
        h.push_str(&format!(
            "block {} {} {} {} {}\n",
            b.level,
            b.coord[0],
            b.coord[1],
            b.coord[2],
            id * per_block
        ));
    }
    fs::write(&header_path, h).map_err(|e| Error::io(&header_path, e))?;

    let file = fs::File::create(&data_path).map_err(|e| Error::io(&data_path, e))?;
    let mut w = BufWriter::new(file);
    for id in 0..mesh.num_blocks() {
        let base = id * l.size;
        for (_, li, _) in l.interior() {
            w.write_all(&data[base + li].to_le_bytes())
                .map_err(|e| Error::io(&data_path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&data_path, e))?;
    Ok(())
}

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Structure(format!("dump header: {}", msg.into()))
}

/// Reads a dump header and its data file (relative to the header).
pub fn read_dump(header_path: &Path) -> Result<(DumpHeader, Vec<f64>)> {
    let text = fs::read_to_string(header_path).map_err(|e| Error::io(header_path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some("octree-dump 1") {
        return Err(parse_err("missing magic line"));
    }
    let mut field = |key: &str| -> Result<Vec<String>> {
        let line = lines.next().ok_or_else(|| parse_err(format!("missing {key}")))?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(parse_err(format!("expected {key}, got {line:?}")));
        }
        Ok(parts.map(str::to_owned).collect())
    };
    fn num<T: std::str::FromStr>(s: &str) -> Result<T> {
        s.parse().map_err(|_| parse_err(format!("bad number {s:?}")))
    }
    let dim = num(&field("dim")?[0])?;
    let block_size = num(&field("block_size")?[0])?;
    let lo = field("domain_lo")?;
    let domain_lo = [num(&lo[0])?, num(&lo[1])?, num(&lo[2])?];
    let domain_size = num(&field("domain_size")?[0])?;
    let data_file = field("data_file")?[0].clone();
    field("cell_order")?;
    let nb: usize = num(&field("num_blocks")?[0])?;
    let mut blocks = Vec::with_capacity(nb);
    for _ in 0..nb {
        let f = field("block")?;
        if f.len() != 5 {
            return Err(parse_err("block record needs 5 fields"));
        }
        blocks.push(DumpBlock {
            level: num(&f[0])?,
            coord: [num(&f[1])?, num(&f[2])?, num(&f[3])?],
            offset: num(&f[4])?,
        });
    }
    let data_path = header_path.parent().unwrap_or(Path::new(".")).join(&data_file);
    let bytes = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((
        DumpHeader {
            dim,
            block_size,
            domain_lo,
            domain_size,
            data_file,
            blocks,
        },
        values,
    ))
}
