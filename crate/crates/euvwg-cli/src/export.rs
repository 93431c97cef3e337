//! Field and efficiency artifacts. Two field formats: a plain CSV for
//! plotting tools and a raw little-endian binary that round-trips bit
//! exactly. Every writer goes through a temp file and rename so a crash
//! never leaves a half-written artifact behind.

use std::fs;
use std::io::Read as _;
use std::path::Path;

use euvwg::matching::{FieldGrid, OrderTable};
use euvwg::numerics::{c64, C64};
use euvwg::{Error, Result};

const RAW_MAGIC: &[u8; 4] = b"EUVF";
const RAW_VERSION: u32 = 1;

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// One scalar field component on a rectangle, x-fastest.
pub struct FieldExport<'a> {
    pub component: &'a str,
    pub grid: &'a FieldGrid,
}

impl FieldExport<'_> {
    fn check(&self) -> Result<()> {
        let want = self.grid.xs.len() * self.grid.zs.len();
        if self.grid.values.len() != want {
            return Err(Error::Shape(format!(
                "field grid holds {} values for a {} x {} rectangle",
                self.grid.values.len(),
                self.grid.xs.len(),
                self.grid.zs.len()
            )));
        }
        Ok(())
    }
}

/// `component,x,z,re,im` with round-tripping float formatting.
pub fn write_field_csv(path: &Path, field: &FieldExport) -> Result<()> {
    field.check()?;
    let grid = field.grid;
    let mut out = String::from("component,x,z,re,im\n");
    for (iz, &z) in grid.zs.iter().enumerate() {
        for (ix, &x) in grid.xs.iter().enumerate() {
            let v = grid.values[ix + grid.xs.len() * iz];
            out.push_str(&format!(
                "{},{x:e},{z:e},{:e},{:e}\n",
                field.component, v.re, v.im
            ));
        }
    }
    write_atomic(path, out.as_bytes())
}

/// Binary layout, all little endian: magic `EUVF`, version u32, component
/// name (u32 length + utf8), nx u32, nz u32, xs, zs, then (re, im) f64
/// pairs x-fastest.
pub fn write_field_raw(path: &Path, field: &FieldExport) -> Result<()> {
    field.check()?;
    let grid = field.grid;
    let mut out = Vec::with_capacity(32 + 16 * grid.values.len());
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&RAW_VERSION.to_le_bytes());
    let name = field.component.as_bytes();
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name);
    out.extend_from_slice(&(grid.xs.len() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.zs.len() as u32).to_le_bytes());
    for &x in &grid.xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for &z in &grid.zs {
        out.extend_from_slice(&z.to_le_bytes());
    }
    for v in &grid.values {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    write_atomic(path, &out)
}

pub struct OwnedField {
    pub component: String,
    pub grid: FieldGrid,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at + n;
        let s = self
            .bytes
            .get(self.at..end)
            .ok_or_else(|| Error::Shape(format!("raw field truncated at byte {}", self.at)))?;
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(8 * n)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Inverse of [`write_field_raw`], used to verify exports bit for bit.
pub fn read_field_raw(path: &Path) -> Result<OwnedField> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, at: 0 };
    if cur.take(4)? != RAW_MAGIC {
        return Err(Error::Shape("not a raw field file".into()));
    }
    let version = cur.u32()?;
    if version != RAW_VERSION {
        return Err(Error::Shape(format!("raw field version {version} unsupported")));
    }
    let name_len = cur.u32()? as usize;
    let component = String::from_utf8(cur.take(name_len)?.to_vec())
        .map_err(|_| Error::Shape("raw field component name is not utf8".into()))?;
    let nx = cur.u32()? as usize;
    let nz = cur.u32()? as usize;
    let xs = cur.f64s(nx)?;
    let zs = cur.f64s(nz)?;
    let flat = cur.f64s(2 * nx * nz)?;
    if cur.at != bytes.len() {
        return Err(Error::Shape("raw field has trailing bytes".into()));
    }
    let values = flat.chunks_exact(2).map(|p| c64(p[0], p[1])).collect();
    Ok(OwnedField {
        component,
        grid: FieldGrid { xs, zs, values },
    })
}

/// `m,n,reflectance,transmittance`, one row per retained order.
pub fn write_orders_csv(path: &Path, table: &OrderTable) -> Result<()> {
    let mut out = String::from("m,n,reflectance,transmittance\n");
    for (i, &(m, n)) in table.orders.iter().enumerate() {
        out.push_str(&format!(
            "{m},{n},{:e},{:e}\n",
            table.reflectance[i], table.transmittance[i]
        ));
    }
    write_atomic(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_grid() -> FieldGrid {
        let xs = vec![0.0, 0.5, 1.0];
        let zs = vec![-2.0, -1.0];
        let values = (0..6)
            .map(|i| c64(0.1 * i as f64 + 0.123456789012345678, -1.0 / (i as f64 + 3.0)))
            .collect();
        FieldGrid { xs, zs, values }
    }

    #[test]
    fn raw_export_round_trips_bit_for_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.bin");
        let grid = sample_grid();
        write_field_raw(&path, &FieldExport { component: "Ey", grid: &grid }).unwrap();
        let back = read_field_raw(&path).unwrap();
        assert_eq!(back.component, "Ey");
        assert_eq!(back.grid.xs, grid.xs);
        assert_eq!(back.grid.zs, grid.zs);
        for (a, b) in back.grid.values.iter().zip(&grid.values) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
        assert!(!dir.path().join("field.bin.tmp").exists());
    }

    #[test]
    fn csv_rows_follow_grid_order_and_reparse_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.csv");
        let grid = sample_grid();
        write_field_csv(&path, &FieldExport { component: "Ey", grid: &grid }).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 6);
        assert_eq!(lines[0], "component,x,z,re,im");
        // Row 1 + ix + nx*iz carries values[ix + nx*iz].
        let fields: Vec<&str> = lines[1 + 2 + 3].split(',').collect();
        assert_eq!(fields[0], "Ey");
        assert_eq!(fields[1].parse::<f64>().unwrap(), 1.0);
        assert_eq!(fields[2].parse::<f64>().unwrap(), -1.0);
        let v = grid.values[5];
        assert_eq!(fields[3].parse::<f64>().unwrap().to_bits(), v.re.to_bits());
        assert_eq!(fields[4].parse::<f64>().unwrap().to_bits(), v.im.to_bits());
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut grid = sample_grid();
        grid.values.pop();
        let err = write_field_csv(
            &dir.path().join("bad.csv"),
            &FieldExport { component: "Ey", grid: &grid },
        );
        assert!(err.is_err());
    }

    #[test]
    fn order_tables_export_with_totals_intact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("orders.csv");
        let table = OrderTable {
            orders: vec![(-1, 0), (0, 0), (1, 0)],
            reflectance: vec![0.25, 0.5, 0.0],
            transmittance: vec![0.0, 0.125, 0.125],
        };
        write_orders_csv(&path, &table).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut total = 0.0;
        for line in text.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            total += f[2].parse::<f64>().unwrap() + f[3].parse::<f64>().unwrap();
        }
        assert!((total - 1.0).abs() < 1e-15);
        assert!(text.starts_with("m,n,reflectance,transmittance\n"));
    }
}
