//! Feed-forward Q-network `input -> hidden (ReLU) -> actions (linear)` with
//! analytic gradients. Parameters live in one flat buffer laid out as
//! `W1 (hidden x input, row-major) | b1 | W2 (actions x hidden, row-major) | b2`.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::kpi::KPI_DIM;
use crate::ransim::SchedulerOption;
use crate::seed::seeded_rng;
use crate::{Error, Result};

pub const HIDDEN_UNITS: usize = 32;
const CHECKPOINT_MAGIC: &str = "QNET v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub input: usize,
    pub hidden: usize,
    pub actions: usize,
}

impl Dims {
    pub const DEFAULT: Dims = Dims {
        input: KPI_DIM,
        hidden: HIDDEN_UNITS,
        actions: SchedulerOption::COUNT,
    };

    pub fn param_count(&self) -> usize {
        self.hidden * self.input + self.hidden + self.actions * self.hidden + self.actions
    }

    fn offsets(&self) -> [usize; 4] {
        let b1 = self.hidden * self.input;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.actions * self.hidden;
        [0, b1, w2, b2]
    }
}

macro_rules! layer_views {
    ($t:ty) => {
        impl $t {
            pub fn dims(&self) -> Dims {
                self.dims
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.data
            }

            pub fn as_mut_slice(&mut self) -> &mut [f64] {
                &mut self.data
            }

            pub fn w1(&self) -> &[f64] {
                let [_, b1, _, _] = self.dims.offsets();
                &self.data[..b1]
            }

            pub fn b1(&self) -> &[f64] {
                let [_, b1, w2, _] = self.dims.offsets();
                &self.data[b1..w2]
            }

            pub fn w2(&self) -> &[f64] {
                let [_, _, w2, b2] = self.dims.offsets();
                &self.data[w2..b2]
            }

            pub fn b2(&self) -> &[f64] {
                let [_, _, _, b2] = self.dims.offsets();
                &self.data[b2..]
            }

            pub fn w1_mut(&mut self) -> &mut [f64] {
                let [_, b1, _, _] = self.dims.offsets();
                &mut self.data[..b1]
            }

            pub fn b1_mut(&mut self) -> &mut [f64] {
                let [_, b1, w2, _] = self.dims.offsets();
                &mut self.data[b1..w2]
            }

            pub fn w2_mut(&mut self) -> &mut [f64] {
                let [_, _, w2, b2] = self.dims.offsets();
                &mut self.data[w2..b2]
            }

            pub fn b2_mut(&mut self) -> &mut [f64] {
                let [_, _, _, b2] = self.dims.offsets();
                &mut self.data[b2..]
            }
        }
    };
}

/// Weights and biases of one Q-network.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetParams {
    dims: Dims,
    data: Vec<f64>,
}

/// `dQ(s, a) / dtheta`, laid out like [`QNetParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    dims: Dims,
    data: Vec<f64>,
}

layer_views!(QNetParams);
layer_views!(Gradient);

impl Gradient {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.param_count()],
        }
    }
}

/// Glorot-uniform weights, zero biases, for the default 58-32-5 shape.
pub fn init_params(seed: u64) -> QNetParams {
    QNetParams::glorot(Dims::DEFAULT, seed)
}

impl QNetParams {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.param_count()],
        }
    }

    pub fn glorot(dims: Dims, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let mut p = Self::zeros(dims);
        let l1 = (6.0 / (dims.input + dims.hidden) as f64).sqrt();
        for w in p.w1_mut() {
            *w = rng.random_range(-l1..l1);
        }
        let l2 = (6.0 / (dims.hidden + dims.actions) as f64).sqrt();
        for w in p.w2_mut() {
            *w = rng.random_range(-l2..l2);
        }
        p
    }

    pub fn from_vec(dims: Dims, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.param_count() {
            return Err(Error::Shape(format!(
                "{} values for a network of {} parameters",
                data.len(),
                dims.param_count()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite parameter {v}")));
        }
        Ok(Self { dims, data })
    }

    fn check_state(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.dims.input {
            return Err(Error::Shape(format!(
                "state has {} entries, network expects {}",
                state.len(),
                self.dims.input
            )));
        }
        Ok(())
    }

    fn hidden_pre(&self, state: &[f64]) -> Vec<f64> {
        let d = self.dims;
        self.w1()
            .chunks_exact(d.input)
            .zip(self.b1())
            .map(|(row, b)| b + row.iter().zip(state).map(|(w, s)| w * s).sum::<f64>())
            .collect()
    }

    /// Action values `W2 relu(W1 s + b1) + b2`.
    pub fn forward(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.check_state(state)?;
        let h: Vec<f64> = self.hidden_pre(state).into_iter().map(|z| z.max(0.0)).collect();
        Ok(self
            .w2()
            .chunks_exact(self.dims.hidden)
            .zip(self.b2())
            .map(|(row, b)| b + row.iter().zip(&h).map(|(w, x)| w * x).sum::<f64>())
            .collect())
    }

    /// Gradient of output `action` alone; other outputs contribute nothing.
    pub fn backward(&self, state: &[f64], action: usize) -> Result<Gradient> {
        let mut g = Gradient::zeros(self.dims);
        self.accumulate_gradient(state, action, 1.0, &mut g)?;
        Ok(g)
    }

    /// Adds `scale * dQ(state, action)/dtheta` into `grad`.
    pub fn accumulate_gradient(&self, state: &[f64], action: usize, scale: f64, grad: &mut Gradient) -> Result<()> {
        self.check_state(state)?;
        let d = self.dims;
        if action >= d.actions {
            return Err(Error::InvalidArgument(format!(
                "action index {action} not below {}",
                d.actions
            )));
        }
        if grad.dims != d {
            return Err(Error::Shape("gradient shape differs from network".into()));
        }
        let pre = self.hidden_pre(state);
        let w2_row = &self.w2()[action * d.hidden..(action + 1) * d.hidden];
        // dQ/dh_j = W2[a, j]; ReLU passes it only where the unit is on.
        let delta: Vec<f64> = pre
            .iter()
            .zip(w2_row)
            .map(|(&z, &w)| if z > 0.0 { w } else { 0.0 })
            .collect();

        let [_, b1, w2, b2] = d.offsets();
        let g = &mut grad.data;
        for (j, &dj) in delta.iter().enumerate() {
            if dj != 0.0 {
                let row = &mut g[j * d.input..(j + 1) * d.input];
                for (gw, s) in row.iter_mut().zip(state) {
                    *gw += scale * dj * s;
                }
                g[b1 + j] += scale * dj;
            }
        }
        let w2_row = &mut g[w2 + action * d.hidden..w2 + (action + 1) * d.hidden];
        for (gw, z) in w2_row.iter_mut().zip(&pre) {
            *gw += scale * z.max(0.0);
        }
        g[b2 + action] += scale;
        Ok(())
    }

    /// `theta += scale * grad`.
    pub fn apply_gradient(&mut self, grad: &Gradient, scale: f64) -> Result<()> {
        if grad.dims != self.dims {
            return Err(Error::Shape("gradient shape differs from network".into()));
        }
        for (p, g) in self.data.iter_mut().zip(&grad.data) {
            *p += scale * g;
        }
        Ok(())
    }

    /// `self = (1 - tau) * self + tau * online`.
    pub fn soft_update(&mut self, online: &QNetParams, tau: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::InvalidArgument(format!("tau {tau} outside [0, 1]")));
        }
        if online.dims != self.dims {
            return Err(Error::Shape("soft update between networks of different shape".into()));
        }
        for (t, o) in self.data.iter_mut().zip(&online.data) {
            *t = (1.0 - tau) * *t + tau * o;
        }
        Ok(())
    }

    /// Text checkpoint: a `QNET v1 <in> <hidden> <actions>` header, then W1 rows,
    /// b1, W2 rows and b2, one line each. Values use shortest round-trip decimals.
    pub fn to_text(&self) -> String {
        let d = self.dims;
        let mut out = format!("{CHECKPOINT_MAGIC} {} {} {}\n", d.input, d.hidden, d.actions);
        let mut line = |vals: &[f64]| {
            let mut first = true;
            for v in vals {
                if !first {
                    out.push(' ');
                }
                first = false;
                write!(out, "{v}").expect("write to String");
            }
            out.push('\n');
        };
        self.w1().chunks_exact(d.input).for_each(&mut line);
        line(self.b1());
        self.w2().chunks_exact(d.hidden).for_each(&mut line);
        line(self.b2());
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Checkpoint("empty checkpoint".into()))?;
        let dims_str = header
            .strip_prefix(CHECKPOINT_MAGIC)
            .ok_or_else(|| Error::Checkpoint(format!("bad header `{header}`")))?;
        let parsed: Vec<usize> = dims_str
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| Error::Checkpoint(format!("bad header `{header}`")))
            })
            .collect::<Result<_>>()?;
        let [input, hidden, actions] = parsed[..] else {
            return Err(Error::Checkpoint(format!("bad header `{header}`")));
        };
        let dims = Dims { input, hidden, actions };
        let expected_lines = [(hidden, input), (1, hidden), (actions, hidden), (1, actions)];
        let mut data = Vec::with_capacity(dims.param_count());
        let mut line_no = 1;
        for (rows, width) in expected_lines {
            for _ in 0..rows {
                line_no += 1;
                let line = lines
                    .next()
                    .ok_or_else(|| Error::Checkpoint(format!("truncated at line {line_no}")))?;
                let before = data.len();
                for tok in line.split_whitespace() {
                    data.push(
                        tok.parse::<f64>()
                            .map_err(|_| Error::Checkpoint(format!("line {line_no}: bad value `{tok}`")))?,
                    );
                }
                if data.len() - before != width {
                    return Err(Error::Checkpoint(format!(
                        "line {line_no}: {} values, expected {width}",
                        data.len() - before
                    )));
                }
            }
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(Error::Checkpoint("trailing data after b2".into()));
        }
        Self::from_vec(dims, data).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}
