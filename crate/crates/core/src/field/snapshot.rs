//! `VXL1` binary snapshots.
//!
//! Layout (little-endian): magic `VXL1`, `u32 n`, `f64 box_length`,
//! `f64 time`, `f64 viscosity`, `u8 kind`, then the physical values of each
//! component in turn, x index varying fastest.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use ndarray::Array3;

use super::{Grid, ScalarField, TensorField3, VectorField};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"VXL1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    Scalar,
    Vector,
    Tensor,
}

impl FieldKind {
    fn tag(self) -> u8 {
        match self {
            FieldKind::Scalar => 0,
            FieldKind::Vector => 1,
            FieldKind::Tensor => 2,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(FieldKind::Scalar),
            1 => Ok(FieldKind::Vector),
            2 => Ok(FieldKind::Tensor),
            other => Err(Error::Snapshot(format!("unknown field kind tag {other}"))),
        }
    }

    pub fn components(self) -> usize {
        match self {
            FieldKind::Scalar => 1,
            FieldKind::Vector => 3,
            FieldKind::Tensor => 9,
        }
    }
}

/// Decoded snapshot: header values plus the physical component arrays.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub grid: Arc<Grid>,
    pub time: f64,
    pub viscosity: f64,
    pub kind: FieldKind,
    pub components: Vec<Array3<f64>>,
}

impl Snapshot {
    pub fn from_vector(v: &VectorField, time: f64, viscosity: f64) -> Self {
        Snapshot {
            grid: v.grid().clone(),
            time,
            viscosity,
            kind: FieldKind::Vector,
            components: v.values().into_iter().collect(),
        }
    }

    pub fn from_scalar(f: &ScalarField, time: f64, viscosity: f64) -> Self {
        Snapshot {
            grid: f.grid().clone(),
            time,
            viscosity,
            kind: FieldKind::Scalar,
            components: vec![f.values().into_owned()],
        }
    }

    pub fn from_tensor(t: &TensorField3, time: f64, viscosity: f64) -> Self {
        Snapshot {
            grid: t.grid().clone(),
            time,
            viscosity,
            kind: FieldKind::Tensor,
            components: t.values(),
        }
    }

    pub fn to_vector(&self) -> Result<VectorField> {
        if self.kind != FieldKind::Vector {
            return Err(Error::Snapshot(format!("expected a vector snapshot, found {:?}", self.kind)));
        }
        let mut it = self
            .components
            .iter()
            .map(|c| ScalarField::physical(&self.grid, c.clone()));
        VectorField::new([
            it.next().expect("three components")?,
            it.next().expect("three components")?,
            it.next().expect("three components")?,
        ])
    }

    pub fn to_scalar(&self) -> Result<ScalarField> {
        if self.kind != FieldKind::Scalar {
            return Err(Error::Snapshot(format!("expected a scalar snapshot, found {:?}", self.kind)));
        }
        ScalarField::physical(&self.grid, self.components[0].clone())
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let n = self.grid.n();
        w.write_all(MAGIC)?;
        w.write_all(&(n as u32).to_le_bytes())?;
        w.write_all(&self.grid.box_length().to_le_bytes())?;
        w.write_all(&self.time.to_le_bytes())?;
        w.write_all(&self.viscosity.to_le_bytes())?;
        w.write_all(&[self.kind.tag()])?;
        let mut buf = Vec::with_capacity(n * n * n * 8);
        for c in &self.components {
            buf.clear();
            for k in 0..n {
                for j in 0..n {
                    for i in 0..n {
                        buf.extend_from_slice(&c[[i, j, k]].to_le_bytes());
                    }
                }
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Snapshot(format!("bad magic {magic:?}")));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let n = u32::from_le_bytes(b4) as usize;
        let mut read_f64 = |r: &mut dyn Read| -> Result<f64> {
            r.read_exact(&mut b8)?;
            Ok(f64::from_le_bytes(b8))
        };
        let box_length = read_f64(&mut r)?;
        let time = read_f64(&mut r)?;
        let viscosity = read_f64(&mut r)?;
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let kind = FieldKind::from_tag(tag[0])?;
        let grid = Grid::new(n, box_length)?;

        let mut bytes = vec![0u8; n * n * n * 8];
        let mut components = Vec::with_capacity(kind.components());
        for _ in 0..kind.components() {
            r.read_exact(&mut bytes)?;
            let mut a = Array3::zeros((n, n, n));
            let mut chunks = bytes.chunks_exact(8);
            for k in 0..n {
                for j in 0..n {
                    for i in 0..n {
                        let chunk = chunks.next().expect("sized buffer");
                        a[[i, j, k]] = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
                    }
                }
            }
            components.push(a);
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Snapshot("trailing bytes after field data".into()));
        }
        Ok(Snapshot {
            grid,
            time,
            viscosity,
            kind,
            components,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Snapshot::read_from(std::io::BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_round_trip_is_bitwise() {
        let g = Grid::new(8, 3.0).unwrap();
        let v = VectorField::from_fn(&g, |x, y, z| [x, y * y, (x + z).sin()]);
        let snap = Snapshot::from_vector(&v, 1.25, 1e-3);
        let mut bytes = Vec::new();
        snap.write_to(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 4 + 4 + 8 * 3 + 1 + 3 * 512 * 8);
        let back = Snapshot::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back.time, 1.25);
        assert_eq!(back.viscosity, 1e-3);
        assert_eq!(back.grid.box_length(), 3.0);
        let w = back.to_vector().unwrap();
        for d in 0..3 {
            assert_eq!(*w.component(d).values(), *v.component(d).values());
        }
    }

    #[test]
    fn x_index_is_fastest() {
        let g = Grid::periodic(8).unwrap();
        let f = ScalarField::from_fn(&g, |x, _, _| x);
        let mut bytes = Vec::new();
        Snapshot::from_scalar(&f, 0.0, 0.0).write_to(&mut bytes).unwrap();
        let first = f64::from_le_bytes(bytes[33..41].try_into().unwrap());
        let second = f64::from_le_bytes(bytes[41..49].try_into().unwrap());
        assert_eq!(first, 0.0);
        assert_eq!(second, g.coordinate(1));
    }

    #[test]
    fn rejects_corrupt_input() {
        assert!(Snapshot::read_from(&b"VXL2"[..]).is_err());
        let g = Grid::periodic(8).unwrap();
        let mut bytes = Vec::new();
        Snapshot::from_scalar(&ScalarField::zeros(&g), 0.0, 0.0)
            .write_to(&mut bytes)
            .unwrap();
        bytes.truncate(bytes.len() - 1);
        assert!(Snapshot::read_from(bytes.as_slice()).is_err());
        bytes.push(0);
        bytes.push(0);
        assert!(Snapshot::read_from(bytes.as_slice()).is_err());
    }
}
