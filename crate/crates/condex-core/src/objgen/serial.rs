//! Plain-text object files.
//!
//! One header block followed by one line per occupied cell. Floats print via
//! Rust's shortest round-trip formatting, so write/read/write is byte-stable.

use std::fmt::Write as _;
use std::path::Path;

use super::{Cell, HeterogeneousObject, PlanarPose};
use crate::error::{CoreError, Result};

const MAGIC: &str = "condex-object";
const VERSION: u32 = 1;

pub fn object_to_text(obj: &HeterogeneousObject) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {VERSION}");
    let _ = writeln!(out, "category {}", obj.category_id);
    let _ = writeln!(out, "instance {}", obj.instance_id);
    let _ = writeln!(out, "seed {}", obj.provenance_seed);
    let _ = writeln!(out, "flipped {}", u8::from(obj.flipped));
    let _ = writeln!(out, "cell_size {}", obj.cell_size);
    let _ = writeln!(out, "pose {} {} {}", obj.pose.x, obj.pose.y, obj.pose.rotation);
    let _ = writeln!(out, "grid {} {} {}", obj.rows, obj.cols, obj.occupied_count());
    for (r, c, cell) in obj.occupied_cells() {
        let _ = writeln!(
            out,
            "cell {r} {c} {} {} {}",
            cell.height, cell.mass, cell.friction
        );
    }
    out
}

pub fn object_from_text(text: &str) -> Result<HeterogeneousObject> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| fmt_err("empty object file"))?;
    let mut tok = header.split_whitespace();
    if tok.next() != Some(MAGIC) {
        return Err(fmt_err("not an object file (bad magic)"));
    }
    let version: u32 = parse(tok.next(), "version")?;
    if version != VERSION {
        return Err(fmt_err(format!("unsupported object version {version}")));
    }

    let category_id: u32 = field(&mut lines, "category")?.parse_one()?;
    let instance_id: u64 = field(&mut lines, "instance")?.parse_one()?;
    let provenance_seed: u64 = field(&mut lines, "seed")?.parse_one()?;
    let flipped: u8 = field(&mut lines, "flipped")?.parse_one()?;
    let cell_size: f64 = field(&mut lines, "cell_size")?.parse_one()?;
    let pose_f = field(&mut lines, "pose")?;
    let pose_vals: Vec<f64> = pose_f.parse_all(3)?;
    let grid_f = field(&mut lines, "grid")?;
    let grid_vals: Vec<usize> = grid_f.parse_all(3)?;
    let (rows, cols, count) = (grid_vals[0], grid_vals[1], grid_vals[2]);
    if rows == 0 || cols == 0 || rows.saturating_mul(cols) > 1 << 20 {
        return Err(fmt_err(format!("implausible grid {rows}x{cols}")));
    }

    let mut cells = vec![Cell::EMPTY; rows * cols];
    let mut seen = 0_usize;
    for line in lines {
        let f = Fields::parse(line, "cell")?;
        let r: usize = parse(f.values.first().copied(), "cell row")?;
        let c: usize = parse(f.values.get(1).copied(), "cell col")?;
        if r >= rows || c >= cols {
            return Err(fmt_err(format!("cell ({r}, {c}) outside {rows}x{cols} grid")));
        }
        let nums: Vec<f64> = f.values[2..]
            .iter()
            .map(|v| v.parse().map_err(|_| fmt_err(format!("bad float {v:?}"))))
            .collect::<Result<_>>()?;
        if nums.len() != 3 {
            return Err(fmt_err("cell wants height mass friction"));
        }
        let slot = &mut cells[r * cols + c];
        if slot.occupied {
            return Err(fmt_err(format!("duplicate cell ({r}, {c})")));
        }
        *slot = Cell {
            occupied: true,
            height: nums[0],
            mass: nums[1],
            friction: nums[2],
        };
        seen += 1;
    }
    if seen != count {
        return Err(fmt_err(format!("expected {count} cells, found {seen}")));
    }

    Ok(HeterogeneousObject {
        category_id,
        instance_id,
        cell_size,
        rows,
        cols,
        cells,
        pose: PlanarPose {
            x: pose_vals[0],
            y: pose_vals[1],
            rotation: pose_vals[2],
        },
        provenance_seed,
        flipped: flipped != 0,
    })
}

pub fn save_object(path: &Path, obj: &HeterogeneousObject) -> Result<()> {
    Ok(std::fs::write(path, object_to_text(obj))?)
}

pub fn load_object(path: &Path) -> Result<HeterogeneousObject> {
    object_from_text(&std::fs::read_to_string(path)?)
}

struct Fields<'a> {
    key: &'a str,
    values: Vec<&'a str>,
}

impl<'a> Fields<'a> {
    fn parse(line: &'a str, want: &str) -> Result<Fields<'a>> {
        let mut tok = line.split_whitespace();
        let key = tok.next().ok_or_else(|| fmt_err("blank line"))?;
        if key != want {
            return Err(fmt_err(format!("expected {want:?}, found {key:?}")));
        }
        Ok(Fields {
            key,
            values: tok.collect(),
        })
    }

    fn parse_one<T: std::str::FromStr>(&self) -> Result<T> {
        if self.values.len() != 1 {
            return Err(fmt_err(format!("{} wants one value", self.key)));
        }
        parse(Some(self.values[0]), self.key)
    }

    fn parse_all<T: std::str::FromStr>(&self, n: usize) -> Result<Vec<T>> {
        if self.values.len() != n {
            return Err(fmt_err(format!("{} wants {n} values", self.key)));
        }
        self.values.iter().map(|v| parse(Some(v), self.key)).collect()
    }
}

fn field<'a>(lines: &mut impl Iterator<Item = &'a str>, want: &str) -> Result<Fields<'a>> {
    let line = lines
        .next()
        .ok_or_else(|| fmt_err(format!("missing {want:?} line")))?;
    Fields::parse(line, want)
}

fn parse<T: std::str::FromStr>(tok: Option<&str>, what: &str) -> Result<T> {
    tok.ok_or_else(|| fmt_err(format!("missing {what}")))?
        .parse()
        .map_err(|_| fmt_err(format!("bad {what}")))
}

fn fmt_err(msg: impl Into<String>) -> CoreError {
    CoreError::Format(msg.into())
}
