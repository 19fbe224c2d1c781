use crate::scalar::Scalar;

/// Right-continuous empirical CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf<T> {
    sorted: Vec<T>,
}

impl<T: Scalar> Ecdf<T> {
    /// Returns `None` for an empty sample.
    pub fn new(scores: &[T]) -> Option<Self> {
        if scores.is_empty() {
            return None;
        }
        let mut sorted = scores.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("scores must not be NaN"));
        Some(Ecdf { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Fraction of the sample that is `<= x`.
    pub fn eval(&self, x: T) -> T {
        let count = self.sorted.partition_point(|&s| s <= x);
        T::from_usize_lossy(count) / T::from_usize_lossy(self.sorted.len())
    }

    pub fn sorted(&self) -> &[T] {
        &self.sorted
    }
}

/// `∫ |F_a(x) - F_b(x)|² dx`, evaluated exactly.
///
/// Both CDFs are step functions with jumps only at observed scores, so the
/// integrand is constant between consecutive pooled breakpoints and zero
/// outside `[min, max]`.
pub fn t_l2<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    sort(&mut a);
    sort(&mut b);
    t_l2_sorted(&a, &b)
}

fn sort<T: Scalar>(v: &mut [T]) {
    v.sort_by(|x, y| x.partial_cmp(y).expect("scores must not be NaN"));
}

/// [`t_l2`] on pre-sorted inputs.
pub(crate) fn t_l2_sorted<T: Scalar>(a: &[T], b: &[T]) -> T {
    if a.is_empty() || b.is_empty() {
        return T::zero();
    }
    let (na, nb) = (T::from_usize_lossy(a.len()), T::from_usize_lossy(b.len()));
    let (mut i, mut j) = (0usize, 0usize);
    let mut total = T::zero();
    let mut prev: Option<(T, T)> = None; // (breakpoint, squared difference)
    while i < a.len() || j < b.len() {
        let v = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        if let Some((pv, sq)) = prev {
            total += sq * (v - pv);
        }
        let d = T::from_usize_lossy(i) / na - T::from_usize_lossy(j) / nb;
        prev = Some((v, d * d));
    }
    total
}
