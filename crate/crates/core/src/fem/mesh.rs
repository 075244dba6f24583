use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Lower bound `c` in `min element length ≥ c·h`.
pub const QUASI_UNIFORMITY: f64 = 0.5;

/// Largest node displacement (fraction of the uniform spacing) accepted by
/// [`Mesh1D::jittered`]; keeps every jittered mesh quasi-uniform with `c = 0.5`.
pub const MAX_JITTER: f64 = 1.0 / 6.0;

/// Partition `0 = x_0 < x_1 < … < x_{N} = L` of the interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    nodes: Vec<f64>,
    h: f64,
    uniform: bool,
}

impl Mesh1D {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(Error::Mesh(format!(
                "need at least one interior node, got {} nodes",
                nodes.len()
            )));
        }
        if nodes[0] != 0.0 {
            return Err(Error::Mesh(format!("first node must be 0, got {}", nodes[0])));
        }
        let length = *nodes.last().unwrap();
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::Mesh(format!("last node must be a positive length, got {length}")));
        }
        let mut h: f64 = 0.0;
        let mut h_min = f64::INFINITY;
        for (e, w) in nodes.windows(2).enumerate() {
            let len = w[1] - w[0];
            if !(len > 0.0) {
                return Err(Error::Mesh(format!("degenerate element {e}: length {len}")));
            }
            h = h.max(len);
            h_min = h_min.min(len);
        }
        if h_min < QUASI_UNIFORMITY * h {
            return Err(Error::Mesh(format!(
                "mesh not quasi-uniform: min element {h_min} < {QUASI_UNIFORMITY}·h = {}",
                QUASI_UNIFORMITY * h
            )));
        }
        let uniform = (h - h_min) <= 1e-12 * h;
        Ok(Mesh1D { nodes, h, uniform })
    }

    /// `elements` equal elements on `[0, length]`.
    pub fn uniform(length: f64, elements: usize) -> Result<Self> {
        if elements < 2 {
            return Err(Error::Mesh(format!("need at least 2 elements, got {elements}")));
        }
        let step = length / elements as f64;
        let mut nodes: Vec<f64> = (0..=elements).map(|j| j as f64 * step).collect();
        nodes[elements] = length;
        Self::new(nodes)
    }

    /// Uniform mesh with `h = length / 2^level`.
    pub fn dyadic(length: f64, level: u32) -> Result<Self> {
        Self::uniform(length, 1usize << level)
    }

    /// Uniform nodes displaced by at most `jitter · (length/elements)`.
    pub fn jittered(length: f64, elements: usize, jitter: f64, seed: u64) -> Result<Self> {
        if !(0.0..=MAX_JITTER).contains(&jitter) {
            return Err(Error::Mesh(format!("jitter must lie in [0, {MAX_JITTER}], got {jitter}")));
        }
        if elements < 2 {
            return Err(Error::Mesh(format!("need at least 2 elements, got {elements}")));
        }
        let step = length / elements as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut nodes: Vec<f64> = (0..=elements).map(|j| j as f64 * step).collect();
        for x in nodes.iter_mut().take(elements).skip(1) {
            *x += jitter * step * rng.random_range(-1.0..=1.0);
        }
        nodes[elements] = length;
        Self::new(nodes)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn length(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Maximum element length.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    pub fn elements(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Number of interior nodes, the dimension of `V_h`.
    pub fn interior_count(&self) -> usize {
        self.nodes.len() - 2
    }

    pub fn interior_nodes(&self) -> &[f64] {
        &self.nodes[1..self.nodes.len() - 1]
    }

    pub fn element_length(&self, e: usize) -> f64 {
        self.nodes[e + 1] - self.nodes[e]
    }

    /// Value at `x` of the piecewise-linear function with the given interior
    /// nodal values (zero at both ends).
    pub fn evaluate(&self, interior: &[f64], x: f64) -> f64 {
        let n = self.nodes.len();
        if x <= 0.0 || x >= self.length() {
            return 0.0;
        }
        let e = match self
            .nodes
            .binary_search_by(|p| p.partial_cmp(&x).unwrap())
        {
            Ok(j) => return nodal(interior, j, n),
            Err(j) => j - 1,
        };
        let (xl, xr) = (self.nodes[e], self.nodes[e + 1]);
        let t = (x - xl) / (xr - xl);
        (1.0 - t) * nodal(interior, e, n) + t * nodal(interior, e + 1, n)
    }
}

#[inline]
pub(crate) fn nodal(interior: &[f64], global: usize, n_nodes: usize) -> f64 {
    if global == 0 || global == n_nodes - 1 {
        0.0
    } else {
        interior[global - 1]
    }
}
