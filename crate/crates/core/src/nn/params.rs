use std::io::{Read, Write};

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};

const CHECKPOINT_MAGIC: &[u8; 4] = b"FGPV";
const CHECKPOINT_VERSION: u32 = 1;

/// One named array inside a [`ParamVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl ParamArray {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self {
            name: name.into(),
            shape,
            data,
        }
    }

    pub fn from_matrix(name: impl Into<String>, m: &Array2<f64>) -> Self {
        Self::new(name, vec![m.nrows(), m.ncols()], m.iter().copied().collect())
    }

    pub fn from_vector(name: impl Into<String>, v: &Array1<f64>) -> Self {
        Self::new(name, vec![v.len()], v.to_vec())
    }

    pub fn to_matrix(&self) -> Result<Array2<f64>> {
        match self.shape[..] {
            [r, c] => Ok(Array2::from_shape_vec((r, c), self.data.clone()).expect("shape")),
            _ => Err(Error::Schema(format!(
                "{} has shape {:?}, expected a matrix",
                self.name, self.shape
            ))),
        }
    }

    pub fn to_vector(&self) -> Result<Array1<f64>> {
        match self.shape[..] {
            [_] => Ok(Array1::from(self.data.clone())),
            _ => Err(Error::Schema(format!(
                "{} has shape {:?}, expected a vector",
                self.name, self.shape
            ))),
        }
    }
}

/// Ordered collection of named real arrays; the unit of aggregation,
/// optimization and checkpointing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector {
    arrays: Vec<ParamArray>,
}

impl ParamVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, array: ParamArray) {
        debug_assert!(self.get(&array.name).is_none(), "duplicate {}", array.name);
        self.arrays.push(array);
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ParamArray> {
        self.arrays.iter()
    }

    pub fn iter_mut(&mut self) -> std::slice::IterMut<'_, ParamArray> {
        self.arrays.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.arrays.iter().map(|a| a.name.as_str())
    }

    pub fn num_values(&self) -> usize {
        self.arrays.iter().map(|a| a.data.len()).sum()
    }

    pub fn get(&self, name: &str) -> Option<&ParamArray> {
        self.arrays.iter().find(|a| a.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamArray> {
        self.arrays.iter_mut().find(|a| a.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&ParamArray> {
        self.get(name)
            .ok_or_else(|| Error::Schema(format!("missing array {name}")))
    }

    /// `(name, shape)` pairs in order.
    pub fn schema(&self) -> Vec<(String, Vec<usize>)> {
        self.arrays
            .iter()
            .map(|a| (a.name.clone(), a.shape.clone()))
            .collect()
    }

    pub fn check_same_schema(&self, other: &ParamVector) -> Result<()> {
        if self.arrays.len() != other.arrays.len() {
            return Err(Error::Schema(format!(
                "{} arrays vs {}",
                self.arrays.len(),
                other.arrays.len()
            )));
        }
        for (a, b) in self.arrays.iter().zip(&other.arrays) {
            if a.name != b.name || a.shape != b.shape {
                return Err(Error::Schema(format!(
                    "{}{:?} vs {}{:?}",
                    a.name, a.shape, b.name, b.shape
                )));
            }
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            arrays: self
                .arrays
                .iter()
                .map(|a| ParamArray::new(a.name.clone(), a.shape.clone(), vec![0.0; a.data.len()]))
                .collect(),
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &ParamVector) -> Result<()> {
        self.check_same_schema(other)?;
        for (a, b) in self.arrays.iter_mut().zip(&other.arrays) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += alpha * y;
            }
        }
        Ok(())
    }

    pub fn add(&self, other: &ParamVector) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(1.0, other)?;
        Ok(out)
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in &mut self.arrays {
            a.data.iter_mut().for_each(|x| *x *= alpha);
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.scale(alpha);
        out
    }

    pub fn norm(&self) -> f64 {
        self.arrays
            .iter()
            .flat_map(|a| a.data.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs_diff(&self, other: &ParamVector) -> Result<f64> {
        self.check_same_schema(other)?;
        Ok(self
            .arrays
            .iter()
            .zip(&other.arrays)
            .flat_map(|(a, b)| a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max))
    }

    /// Copy with every name prefixed by `prefix.`.
    pub fn prefixed(&self, prefix: &str) -> Self {
        Self {
            arrays: self
                .arrays
                .iter()
                .map(|a| ParamArray::new(format!("{prefix}.{}", a.name), a.shape.clone(), a.data.clone()))
                .collect(),
        }
    }

    /// Arrays whose names start with `prefix.`, with the prefix removed.
    pub fn strip_prefix(&self, prefix: &str) -> Self {
        let p = format!("{prefix}.");
        Self {
            arrays: self
                .arrays
                .iter()
                .filter_map(|a| {
                    a.name.strip_prefix(&p).map(|rest| {
                        ParamArray::new(rest.to_string(), a.shape.clone(), a.data.clone())
                    })
                })
                .collect(),
        }
    }

    pub fn extend(&mut self, other: ParamVector) {
        for a in other.arrays {
            self.push(a);
        }
    }

    /// Subset restricted to the given names, in the order of `self`.
    pub fn select(&self, names: &[&str]) -> Self {
        Self {
            arrays: self
                .arrays
                .iter()
                .filter(|a| names.contains(&a.name.as_str()))
                .cloned()
                .collect(),
        }
    }

    /// Overwrites arrays of `self` with the same-named arrays of `other`.
    /// Every array in `other` must exist in `self` with the same shape.
    pub fn overwrite_from(&mut self, other: &ParamVector) -> Result<()> {
        for src in &other.arrays {
            let dst = self
                .get_mut(&src.name)
                .ok_or_else(|| Error::Schema(format!("unknown array {}", src.name)))?;
            if dst.shape != src.shape {
                return Err(Error::Schema(format!(
                    "{}: shape {:?} vs {:?}",
                    src.name, dst.shape, src.shape
                )));
            }
            dst.data.copy_from_slice(&src.data);
        }
        Ok(())
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.arrays.len() as u32).to_le_bytes())?;
        for a in &self.arrays {
            w.write_all(&(a.name.len() as u32).to_le_bytes())?;
            w.write_all(a.name.as_bytes())?;
            w.write_all(&(a.shape.len() as u32).to_le_bytes())?;
            for &d in &a.shape {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in &a.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Invalid("not a parameter checkpoint".into()));
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Invalid(format!("unsupported checkpoint version {version}")));
        }
        let count = read_u32(&mut r)?;
        let mut pv = ParamVector::new();
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::Invalid("checkpoint name is not utf-8".into()))?;
            let ndim = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            let len: usize = shape.iter().product();
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                data.push(f64::from_le_bytes(b));
            }
            pv.push(ParamArray::new(name, shape, data));
        }
        Ok(pv)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Deterministic initialization for a schema.
///
/// Matrices get Glorot-uniform values; vectors named `*.gamma` or
/// `*.running_var` are ones; every other vector is zero.
pub fn init_params(schema: &[(String, Vec<usize>)], rng: &mut impl Rng) -> ParamVector {
    let mut pv = ParamVector::new();
    for (name, shape) in schema {
        let len: usize = shape.iter().product();
        let data = match shape[..] {
            [fan_in, fan_out] => {
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..len).map(|_| rng.gen_range(-a..=a)).collect()
            }
            _ if name.ends_with("gamma") || name.ends_with("running_var") => vec![1.0; len],
            _ => vec![0.0; len],
        };
        pv.push(ParamArray::new(name.clone(), shape.clone(), data));
    }
    pv
}
