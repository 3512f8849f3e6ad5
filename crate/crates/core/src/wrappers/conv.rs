use std::collections::{BTreeSet, VecDeque};

use crate::env::{BoxedEnv, Environment, StepOutcome};
use crate::error::{Error, Result};
use crate::spec::{gcd, ConvMode, WrapperSpec};

pub const DEFAULT_MDS_TOLERANCE: f64 = 1e-9;

/// Finite-support weights `w_0..w_L` of a history aggregator `z_t = sum_i w_i s_{t-i}`.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvolutionKernel {
    Real(Vec<f64>),
    Modular { weights: Vec<u64>, modulus: u64 },
}

/// Inverse of `a` modulo `n`, if it exists.
pub fn mod_inverse(a: u64, n: u64) -> Option<u64> {
    let (mut old_r, mut r) = (a as i128 % n as i128, n as i128);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
    }
    (old_r == 1).then(|| old_s.rem_euclid(n as i128) as u64)
}

impl ConvolutionKernel {
    pub fn real(weights: Vec<f64>) -> Result<Self> {
        match weights.first() {
            Some(&w0) if w0 != 0.0 && weights.iter().all(|w| w.is_finite()) => Ok(ConvolutionKernel::Real(weights)),
            _ => Err(Error::NonInvertibleKernel("real kernel needs finite weights and w_0 != 0".into())),
        }
    }

    pub fn modular(weights: Vec<u64>, modulus: u64) -> Result<Self> {
        if modulus < 2 {
            return Err(Error::NonInvertibleKernel(format!("modulus {modulus} < 2")));
        }
        match weights.first() {
            Some(&w0) if gcd(w0 % modulus, modulus) == 1 => {
                let weights = weights.into_iter().map(|w| w % modulus).collect();
                Ok(ConvolutionKernel::Modular { weights, modulus })
            }
            _ => Err(Error::NonInvertibleKernel(format!("w_0 must be coprime with {modulus}"))),
        }
    }

    pub fn from_wrapper(spec: &WrapperSpec) -> Result<Self> {
        match spec {
            WrapperSpec::StateConv { w, mode: ConvMode::Real } => Self::real(w.clone()),
            WrapperSpec::StateConv { w, mode: ConvMode::Mod(n) } => {
                Self::modular(w.iter().map(|&x| x as u64).collect(), *n)
            }
            WrapperSpec::RewardDelay { .. } => {
                Err(Error::InvalidSpec("reward_delay is not a convolution kernel".into()))
            }
        }
    }

    /// Number of taps `L + 1`.
    pub fn len(&self) -> usize {
        match self {
            ConvolutionKernel::Real(w) => w.len(),
            ConvolutionKernel::Modular { weights, .. } => weights.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn toeplitz(&self, t: usize) -> ToeplitzView {
        ToeplitzView::new(self, t)
    }
}

/// A state or observation sequence in the kernel's arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub enum Sequence {
    Real(Vec<Vec<f64>>),
    Modular(Vec<u64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Real(Vec<f64>),
    Modular(u64),
}

impl Sequence {
    pub fn len(&self) -> usize {
        match self {
            Sequence::Real(v) => v.len(),
            Sequence::Modular(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `z_t` for the last index `t` of `states`.
pub fn convolve_state(kernel: &ConvolutionKernel, states: &Sequence) -> Result<Value> {
    if states.is_empty() {
        return Err(Error::IndexOutOfRange("empty state sequence".into()));
    }
    let t = states.len() - 1;
    match (kernel, states) {
        (ConvolutionKernel::Real(w), Sequence::Real(s)) => {
            let dim = s[t].len();
            let mut z = vec![0.0; dim];
            for (i, wi) in w.iter().enumerate().take(t + 1) {
                let si = &s[t - i];
                if si.len() != dim {
                    return Err(Error::IndexOutOfRange("state dimensions differ".into()));
                }
                for (zc, sc) in z.iter_mut().zip(si) {
                    *zc += wi * sc;
                }
            }
            Ok(Value::Real(z))
        }
        (ConvolutionKernel::Modular { weights, modulus }, Sequence::Modular(s)) => {
            let n = *modulus as u128;
            let z = weights
                .iter()
                .enumerate()
                .take(t + 1)
                .fold(0u128, |acc, (i, &w)| (acc + w as u128 * (s[t - i] as u128 % n)) % n);
            Ok(Value::Modular(z as u64))
        }
        _ => Err(Error::ArithmeticModeMismatch),
    }
}

/// `z_{0:t} = W_t s_{0:t}` for every prefix.
pub fn convolve_all(kernel: &ConvolutionKernel, states: &Sequence) -> Result<Sequence> {
    let n = states.len();
    match states {
        Sequence::Real(s) => (1..=n)
            .map(|len| match convolve_state(kernel, &Sequence::Real(s[..len].to_vec()))? {
                Value::Real(z) => Ok(z),
                Value::Modular(_) => unreachable!(),
            })
            .collect::<Result<_>>()
            .map(Sequence::Real),
        Sequence::Modular(s) => (1..=n)
            .map(|len| match convolve_state(kernel, &Sequence::Modular(s[..len].to_vec()))? {
                Value::Modular(z) => Ok(z),
                Value::Real(_) => unreachable!(),
            })
            .collect::<Result<_>>()
            .map(Sequence::Modular),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Column {
    Real(Vec<f64>),
    Modular(Vec<u64>),
}

/// The lower-triangular Toeplitz matrix `W_t` (first column `w_0..w_t`) and the first
/// column `c_0..c_t` of its inverse, which is Toeplitz as well.
#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzView {
    kernel: ConvolutionKernel,
    size: usize,
    inverse: Column,
}

impl ToeplitzView {
    pub fn new(kernel: &ConvolutionKernel, t: usize) -> Self {
        let size = t + 1;
        let inverse = match kernel {
            ConvolutionKernel::Real(w) => {
                let wj = |j: usize| w.get(j).copied().unwrap_or(0.0);
                let mut c = vec![0.0; size];
                c[0] = 1.0 / w[0];
                for i in 1..size {
                    let acc: f64 = (1..=i.min(w.len() - 1)).map(|j| wj(j) * c[i - j]).sum();
                    c[i] = -acc / w[0];
                }
                Column::Real(c)
            }
            ConvolutionKernel::Modular { weights, modulus } => {
                let n = *modulus as u128;
                let inv0 = mod_inverse(weights[0], *modulus).expect("kernel invariant") as u128;
                let mut c = vec![0u64; size];
                c[0] = inv0 as u64;
                for i in 1..size {
                    let acc = (1..=i.min(weights.len() - 1))
                        .fold(0u128, |a, j| (a + weights[j] as u128 * c[i - j] as u128) % n);
                    c[i] = ((n - acc) % n * inv0 % n) as u64;
                }
                Column::Modular(c)
            }
        };
        ToeplitzView { kernel: kernel.clone(), size, inverse }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn inverse_column_real(&self) -> Option<&[f64]> {
        match &self.inverse {
            Column::Real(c) => Some(c),
            Column::Modular(_) => None,
        }
    }

    pub fn inverse_column_modular(&self) -> Option<&[u64]> {
        match &self.inverse {
            Column::Modular(c) => Some(c),
            Column::Real(_) => None,
        }
    }

    /// Dense `W_t` as reals (modular weights are given as their residues).
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        let w: Vec<f64> = match &self.kernel {
            ConvolutionKernel::Real(w) => w.clone(),
            ConvolutionKernel::Modular { weights, .. } => weights.iter().map(|&x| x as f64).collect(),
        };
        dense_lower_toeplitz(&w, self.size)
    }

    pub fn inverse_matrix(&self) -> Vec<Vec<f64>> {
        let c: Vec<f64> = match &self.inverse {
            Column::Real(c) => c.clone(),
            Column::Modular(c) => c.iter().map(|&x| x as f64).collect(),
        };
        dense_lower_toeplitz(&c, self.size)
    }
}

fn dense_lower_toeplitz(col: &[f64], size: usize) -> Vec<Vec<f64>> {
    (0..size)
        .map(|i| (0..size).map(|j| if i >= j { col.get(i - j).copied().unwrap_or(0.0) } else { 0.0 }).collect())
        .collect()
}

/// Recovers `s_{0:t}` from `z_{0:t}` by forward substitution.
pub fn deconvolve(kernel: &ConvolutionKernel, observations: &Sequence) -> Result<Sequence> {
    match (kernel, observations) {
        (ConvolutionKernel::Real(w), Sequence::Real(z)) => {
            if w[0] == 0.0 {
                return Err(Error::NonInvertibleKernel("w_0 = 0".into()));
            }
            let mut s: Vec<Vec<f64>> = Vec::with_capacity(z.len());
            for (t, zt) in z.iter().enumerate() {
                let mut st = zt.clone();
                for (i, wi) in w.iter().enumerate().skip(1).take(t) {
                    for (x, prev) in st.iter_mut().zip(&s[t - i]) {
                        *x -= wi * prev;
                    }
                }
                st.iter_mut().for_each(|x| *x /= w[0]);
                s.push(st);
            }
            Ok(Sequence::Real(s))
        }
        (ConvolutionKernel::Modular { weights, modulus }, Sequence::Modular(z)) => {
            let n = *modulus as u128;
            let inv0 = mod_inverse(weights[0], *modulus)
                .ok_or_else(|| Error::NonInvertibleKernel(format!("w_0 not a unit mod {modulus}")))?
                as u128;
            let mut s: Vec<u64> = Vec::with_capacity(z.len());
            for (t, &zt) in z.iter().enumerate() {
                let acc = weights
                    .iter()
                    .enumerate()
                    .skip(1)
                    .take(t)
                    .fold(0u128, |a, (i, &w)| (a + w as u128 * s[t - i] as u128) % n);
                s.push(((zt as u128 % n + n - acc) % n * inv0 % n) as u64);
            }
            Ok(Sequence::Modular(s))
        }
        _ => Err(Error::ArithmeticModeMismatch),
    }
}

/// Past indices whose observations are needed to decode `s_t`: `{t - j : |c_j| > eps}`.
pub fn mds_of_kernel(kernel: &ConvolutionKernel, t: usize, eps: f64) -> Result<BTreeSet<usize>> {
    match kernel {
        ConvolutionKernel::Real(w) if w[0] == 0.0 => return Err(Error::NonInvertibleKernel("w_0 = 0".into())),
        ConvolutionKernel::Modular { weights, modulus } if gcd(weights[0], *modulus) != 1 => {
            return Err(Error::NonInvertibleKernel(format!("w_0 not a unit mod {modulus}")))
        }
        _ => {}
    }
    let view = ToeplitzView::new(kernel, t);
    Ok(match &view.inverse {
        Column::Real(c) => c.iter().enumerate().filter(|(_, x)| x.abs() > eps).map(|(j, _)| t - j).collect(),
        Column::Modular(c) => c.iter().enumerate().filter(|(_, &x)| x != 0).map(|(j, _)| t - j).collect(),
    })
}

/// Emits `z_t = sum_i w_i s_{t-i}` in place of the inner observation `s_t`, keeping a
/// ring buffer of the last `L + 1` inner observations.
pub struct StateConvEnv {
    inner: BoxedEnv,
    kernel: ConvolutionKernel,
    history: VecDeque<Vec<f64>>,
}

impl StateConvEnv {
    pub fn new(inner: BoxedEnv, kernel: ConvolutionKernel) -> Self {
        let cap = kernel.len();
        StateConvEnv { inner, kernel, history: VecDeque::with_capacity(cap) }
    }

    pub fn kernel(&self) -> &ConvolutionKernel {
        &self.kernel
    }

    fn observe(&mut self, s: Vec<f64>) -> Result<Vec<f64>> {
        if self.history.len() == self.kernel.len() {
            self.history.pop_back();
        }
        self.history.push_front(s);
        match &self.kernel {
            ConvolutionKernel::Real(w) => {
                let mut z = vec![0.0; self.history[0].len()];
                for (wi, si) in w.iter().zip(&self.history) {
                    for (zc, sc) in z.iter_mut().zip(si) {
                        *zc += wi * sc;
                    }
                }
                Ok(z)
            }
            ConvolutionKernel::Modular { weights, modulus } => {
                let n = *modulus as u128;
                let mut z = vec![0u128; self.history[0].len()];
                for (&wi, si) in weights.iter().zip(&self.history) {
                    for (zc, &sc) in z.iter_mut().zip(si) {
                        if sc.fract() != 0.0 || sc < 0.0 || sc >= *modulus as f64 {
                            return Err(Error::ArithmeticModeMismatch);
                        }
                        *zc = (*zc + wi as u128 * sc as u128) % n;
                    }
                }
                Ok(z.into_iter().map(|x| x as f64).collect())
            }
        }
    }
}

impl Environment for StateConvEnv {
    fn reset(&mut self, episode: u64) -> Vec<f64> {
        self.history.clear();
        let s0 = self.inner.reset(episode);
        // the inner env produced discrete values when the wrapper was built for it
        self.observe(s0).expect("observation in kernel domain")
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        let out = self.inner.step(action)?;
        let observation = self.observe(out.observation)?;
        Ok(StepOutcome { observation, ..out })
    }

    fn num_actions(&self) -> usize {
        self.inner.num_actions()
    }

    fn horizon(&self) -> usize {
        self.inner.horizon()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn real_value(v: Value) -> Vec<f64> {
        match v {
            Value::Real(z) => z,
            Value::Modular(_) => panic!("expected real"),
        }
    }

    fn matvec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        m.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    #[test]
    fn convolve_examples() {
        let k = ConvolutionKernel::real(vec![1.0, 0.5]).unwrap();
        let s = Sequence::Real(vec![vec![0.2], vec![0.4]]);
        let z = real_value(convolve_state(&k, &s).unwrap());
        assert!((z[0] - 0.5).abs() < 1e-15);
        // against the dense W_1 product
        let dense = matvec(&k.toeplitz(1).matrix(), &[0.2, 0.4]);
        assert!((dense[1] - z[0]).abs() < 1e-15);

        let id = ConvolutionKernel::real(vec![1.0]).unwrap();
        let s = Sequence::Real(vec![vec![0.3, 0.1], vec![0.9, 0.7]]);
        assert_eq!(real_value(convolve_state(&id, &s).unwrap()), vec![0.9, 0.7]);

        let m = ConvolutionKernel::modular(vec![1, 1], 5).unwrap();
        assert_eq!(convolve_state(&m, &Sequence::Modular(vec![3, 4])).unwrap(), Value::Modular(2));
    }

    #[test]
    fn mode_mismatch() {
        let m = ConvolutionKernel::modular(vec![1, 1], 5).unwrap();
        assert_eq!(convolve_state(&m, &Sequence::Real(vec![vec![0.1]])).unwrap_err(), Error::ArithmeticModeMismatch);
    }

    #[test]
    fn modular_deconvolve_example() {
        let m = ConvolutionKernel::modular(vec![1, 1], 5).unwrap();
        assert_eq!(deconvolve(&m, &Sequence::Modular(vec![3, 2])).unwrap(), Sequence::Modular(vec![3, 4]));
        // brute force over s_1
        let s1: Vec<u64> = (0..5).filter(|s| (s + 3) % 5 == 2).collect();
        assert_eq!(s1, vec![4]);
    }

    #[test]
    fn invalid_kernels() {
        assert!(ConvolutionKernel::real(vec![0.0, 1.0]).is_err());
        assert!(ConvolutionKernel::modular(vec![2, 1], 4).is_err());
        assert!(ConvolutionKernel::modular(vec![3, 1], 4).is_ok());
        assert_eq!(mod_inverse(3, 4), Some(3));
        assert_eq!(mod_inverse(2, 4), None);
    }

    #[test]
    fn geometric_inverse_column() {
        for w in [0.5, -0.75, 1.0, -1.0] {
            let k = ConvolutionKernel::real(vec![1.0, w]).unwrap();
            let view = k.toeplitz(10);
            let c = view.inverse_column_real().unwrap();
            for (j, cj) in c.iter().enumerate() {
                assert!((cj - (-w).powi(j as i32)).abs() < 1e-12);
            }
            if w > 0.0 {
                assert!(c.windows(2).all(|p| p[0] * p[1] < 0.0));
            } else {
                assert!(c.iter().all(|&x| x > 0.0));
            }
        }
    }

    #[test]
    fn inverse_column_satisfies_convolution_identity() {
        let k = ConvolutionKernel::real(vec![2.0, -0.5, 0.25]).unwrap();
        let c = k.toeplitz(40).inverse_column_real().unwrap().to_vec();
        let w = [2.0, -0.5, 0.25];
        for i in 0..=40 {
            let s: f64 = (0..=i.min(2)).map(|j| w[j] * c[i - j]).sum();
            assert!((s - if i == 0 { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
        let m = ConvolutionKernel::modular(vec![3, 4, 1], 7).unwrap();
        let view = m.toeplitz(20);
        let c = view.inverse_column_modular().unwrap();
        for i in 0..=20usize {
            let s: u64 = (0..=i.min(2)).map(|j| [3u64, 4, 1][j] * c[i - j]).sum::<u64>() % 7;
            assert_eq!(s, u64::from(i == 0));
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn dense_product_is_identity() {
        let k = ConvolutionKernel::real(vec![1.0, 0.9375]).unwrap();
        let view = k.toeplitz(256);
        let w = view.matrix();
        let winv = view.inverse_matrix();
        // spot rows; full 257^3 is slow at opt-level 1
        for i in [0usize, 1, 17, 128, 256] {
            for j in 0..=256 {
                let v: f64 = (0..=256).map(|l| w[i][l] * winv[l][j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-9, "({i},{j}) {v}");
            }
        }
    }

    #[test]
    fn round_trip_random_sequences() {
        let mut rng = RngStream::new(5, 0);
        let kernels = [
            ConvolutionKernel::real(vec![1.0, 0.5]).unwrap(),
            ConvolutionKernel::real(vec![1.0, -1.0]).unwrap(),
            ConvolutionKernel::real(vec![1.0, 0.25, -0.5]).unwrap(),
        ];
        for trial in 0..1000 {
            let kernel = &kernels[trial % kernels.len()];
            let len = 1 + rng.below(40);
            let dim = 1 + rng.below(3);
            let s: Vec<Vec<f64>> = (0..len).map(|_| (0..dim).map(|_| rng.uniform01()).collect()).collect();
            let z = convolve_all(kernel, &Sequence::Real(s.clone())).unwrap();
            let Sequence::Real(back) = deconvolve(kernel, &z).unwrap() else { panic!() };
            for (a, b) in back.iter().flatten().zip(s.iter().flatten()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        let m = ConvolutionKernel::modular(vec![2, 3, 1], 5).unwrap();
        for _ in 0..200 {
            let s: Vec<u64> = (0..1 + rng.below(30)).map(|_| rng.below(5) as u64).collect();
            let z = convolve_all(&m, &Sequence::Modular(s.clone())).unwrap();
            assert_eq!(deconvolve(&m, &z).unwrap(), Sequence::Modular(s));
        }
    }

    #[test]
    fn kernel_mds_examples() {
        let id = ConvolutionKernel::real(vec![1.0, 0.0]).unwrap();
        assert_eq!(mds_of_kernel(&id, 12, DEFAULT_MDS_TOLERANCE).unwrap(), BTreeSet::from([12]));
        let half = ConvolutionKernel::real(vec![1.0, 0.5]).unwrap();
        let d = mds_of_kernel(&half, 64, DEFAULT_MDS_TOLERANCE).unwrap();
        assert_eq!(d, (35..=64).collect());
        let full = ConvolutionKernel::real(vec![1.0, 1.0]).unwrap();
        assert_eq!(mds_of_kernel(&full, 9, DEFAULT_MDS_TOLERANCE).unwrap(), (0..=9).collect());
    }
}
