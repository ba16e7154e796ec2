use crate::error::{Error, Result};

/// One two-phase sample. Phase-1 variables (`y`, `z`) are present for every
/// unit; the covariate vector `x` is present exactly when `r = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoPhaseDataset {
    x_dim: usize,
    z_dim: usize,
    y: Vec<f64>,
    z: Vec<f64>,
    r: Vec<bool>,
    pi: Vec<f64>,
    x: Vec<f64>,
}

/// Borrowed view of one unit.
#[derive(Clone, Copy, Debug)]
pub struct Unit<'a> {
    pub y: f64,
    pub z: &'a [f64],
    pub r: bool,
    pub pi: f64,
    pub x: Option<&'a [f64]>,
}

impl Unit<'_> {
    /// Horvitz–Thompson weight `r/π`.
    pub fn ht_weight(&self) -> f64 {
        if self.r {
            1.0 / self.pi
        } else {
            0.0
        }
    }

    /// The same unit with phase-2 data hidden.
    pub fn phase1(&self) -> Self {
        Self { x: None, ..*self }
    }
}

impl TwoPhaseDataset {
    pub fn new(x_dim: usize, z_dim: usize) -> Self {
        Self {
            x_dim,
            z_dim,
            y: Vec::new(),
            z: Vec::new(),
            r: Vec::new(),
            pi: Vec::new(),
            x: Vec::new(),
        }
    }

    pub fn with_capacity(x_dim: usize, z_dim: usize, n: usize) -> Self {
        Self {
            x_dim,
            z_dim,
            y: Vec::with_capacity(n),
            z: Vec::with_capacity(n * z_dim),
            r: Vec::with_capacity(n),
            pi: Vec::with_capacity(n),
            x: Vec::with_capacity(n * x_dim),
        }
    }

    /// Append a unit. `x` must be `Some` exactly when the unit is sampled.
    pub fn push(&mut self, y: f64, z: &[f64], pi: f64, x: Option<&[f64]>) -> Result<()> {
        if !(pi > 0.0 && pi <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "inclusion probability {pi} outside (0, 1]"
            )));
        }
        if z.len() != self.z_dim {
            return Err(Error::InvalidInput(format!(
                "z has length {} but dataset expects {}",
                z.len(),
                self.z_dim
            )));
        }
        self.y.push(y);
        self.z.extend_from_slice(z);
        self.pi.push(pi);
        match x {
            Some(x) => {
                if x.len() != self.x_dim {
                    return Err(Error::InvalidInput(format!(
                        "x has length {} but dataset expects {}",
                        x.len(),
                        self.x_dim
                    )));
                }
                self.r.push(true);
                self.x.extend_from_slice(x);
            }
            None => {
                self.r.push(false);
                self.x.extend(std::iter::repeat_n(f64::NAN, self.x_dim));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn x_dim(&self) -> usize {
        self.x_dim
    }

    pub fn z_dim(&self) -> usize {
        self.z_dim
    }

    pub fn n_sampled(&self) -> usize {
        self.r.iter().filter(|&&r| r).count()
    }

    pub fn unit(&self, i: usize) -> Unit<'_> {
        let r = self.r[i];
        Unit {
            y: self.y[i],
            z: &self.z[i * self.z_dim..(i + 1) * self.z_dim],
            r,
            pi: self.pi[i],
            x: r.then(|| &self.x[i * self.x_dim..(i + 1) * self.x_dim]),
        }
    }

    pub fn units(&self) -> impl Iterator<Item = Unit<'_>> + '_ {
        (0..self.len()).map(move |i| self.unit(i))
    }

    pub fn sampled(&self) -> impl Iterator<Item = Unit<'_>> + '_ {
        self.units().filter(|u| u.r)
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn r(&self) -> &[bool] {
        &self.r
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    /// Copy keeping only the listed units, in the listed order.
    pub fn subset(&self, keep: &[usize]) -> Self {
        let mut out = Self::with_capacity(self.x_dim, self.z_dim, keep.len());
        for &i in keep {
            let u = self.unit(i);
            out.y.push(u.y);
            out.z.extend_from_slice(u.z);
            out.r.push(u.r);
            out.pi.push(u.pi);
            out.x
                .extend_from_slice(&self.x[i * self.x_dim..(i + 1) * self.x_dim]);
        }
        out
    }

    /// Leave-one-out copy.
    pub fn without(&self, unit: usize) -> Self {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| i != unit).collect();
        self.subset(&keep)
    }

    /// Concatenate datasets of identical shape.
    pub fn concat(parts: &[&TwoPhaseDataset]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidInput("nothing to concatenate".into()))?;
        let mut out = Self::new(first.x_dim, first.z_dim);
        for p in parts {
            if p.x_dim != first.x_dim || p.z_dim != first.z_dim {
                return Err(Error::InvalidInput("dataset shapes differ".into()));
            }
            out.y.extend_from_slice(&p.y);
            out.z.extend_from_slice(&p.z);
            out.r.extend_from_slice(&p.r);
            out.pi.extend_from_slice(&p.pi);
            out.x.extend_from_slice(&p.x);
        }
        Ok(out)
    }
}
