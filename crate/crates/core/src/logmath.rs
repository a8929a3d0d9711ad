//! Log-domain arithmetic helpers.

/// `ln(e^a + e^b)` without overflow; handles `-inf` operands.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(Σ e^x)` over an iterator. Returns `-inf` for an empty input.
pub fn log_sum_exp<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Shift log-weights in place so that they exp-sum to one. Returns the
/// log normalizer that was subtracted.
pub fn normalize_log_weights(weights: &mut [f64]) -> f64 {
    let norm = log_sum_exp(weights.iter().copied());
    if norm.is_finite() {
        for w in weights.iter_mut() {
            *w -= norm;
        }
    }
    norm
}

/// Natural log clamped away from `-inf` for strictly positive inputs that
/// underflowed; zero stays `-inf`.
pub fn ln_or_neg_inf(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Serde adapter for log weights: JSON has no infinities, so `-inf` is
/// written as `null` and read back from it.
pub mod serde_log_weight {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(w: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *w == f64::NEG_INFINITY {
            s.serialize_none()
        } else {
            s.serialize_f64(*w)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}
