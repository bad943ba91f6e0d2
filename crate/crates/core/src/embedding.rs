//! Small dense-vector helpers shared by every module.
//!
//! Embeddings are plain `Vec<f64>`; all of the arithmetic in the engine is a
//! handful of dot products and weighted sums, so a full linear-algebra type is
//! only used where matrices show up (see [`crate::reasoning::WeightBundle`]).

/// A d-dimensional concept or instruction vector.
pub type Embedding = Vec<f64>;

/// Dot product. Callers are responsible for checking dimensions first.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn zeros(dim: usize) -> Embedding {
    vec![0.0; dim]
}

/// `acc += weight * v`
#[inline]
pub fn add_scaled(acc: &mut [f64], weight: f64, v: &[f64]) {
    debug_assert_eq!(acc.len(), v.len());
    for (a, x) in acc.iter_mut().zip(v) {
        *a += weight * x;
    }
}

pub fn is_zero(v: &[f64]) -> bool {
    v.iter().all(|x| *x == 0.0)
}

pub fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Arithmetic mean of equal-length vectors. Returns `None` for an empty input.
pub fn mean<'a, I>(vectors: I) -> Option<Embedding>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut iter = vectors.into_iter();
    let first = iter.next()?;
    let mut acc = first.to_vec();
    let mut count = 1usize;
    for v in iter {
        add_scaled(&mut acc, 1.0, v);
        count += 1;
    }
    let inv = 1.0 / count as f64;
    acc.iter_mut().for_each(|x| *x *= inv);
    Some(acc)
}

/// Numerically stable softmax of `scale * logits`.
///
/// With `scale * logits` all equal the result is exactly uniform.
pub fn softmax_scaled(logits: &[f64], scale: f64) -> Vec<f64> {
    if logits.is_empty() {
        return Vec::new();
    }
    let scaled: Vec<f64> = logits.iter().map(|l| scale * l).collect();
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if *v <= b => {}
            _ => best = Some((i, *v)),
        }
    }
    best.map(|(i, _)| i)
}
