use crate::error::{Error, Result};
use crate::rng::Rng;

/// Deterministic shuffle followed by a contiguous train/val/test split.
///
/// Validation and test sizes are `round(n * fraction)`; training takes the
/// remainder.
pub fn split_dataset<T>(mut items: Vec<T>, fractions: [f64; 3], seed: u64) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    if items.is_empty() {
        return Err(Error::InvalidArgument("cannot split an empty dataset".into()));
    }
    if fractions.iter().any(|f| !(*f >= 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "split fractions {fractions:?} must be non-negative and sum to 1"
        )));
    }
    let n = items.len();
    Rng::new(seed).shuffle(&mut items);
    let val = ((n as f64 * fractions[1]).round() as usize).min(n);
    let test = ((n as f64 * fractions[2]).round() as usize).min(n - val);
    let train = n - val - test;
    let test_items = items.split_off(train + val);
    let val_items = items.split_off(train);
    Ok((items, val_items, test_items))
}
