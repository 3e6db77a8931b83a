use crate::error::{Error, Result};

/// Range `[lo, hi]` (1-based, inclusive) of finest patches forming the size-`p_i`
/// ancestor of finest patch `m`.
///
/// `lo = ⌊(m−1)·p_k/p_i⌋·(p_i/p_k) + 1`, `hi = (⌊(m−1)·p_k/p_i⌋ + 1)·(p_i/p_k)`.
pub fn ancestor(m: usize, finest: usize, size: usize) -> Result<(usize, usize)> {
    if size < finest {
        return Err(Error::AncestorTooFine {
            ancestor: size,
            finest,
        });
    }
    if m == 0 || finest == 0 || !size.is_multiple_of(finest) {
        return Err(Error::arg(format!(
            "ancestor(m={m}, p_k={finest}, p_i={size}) is undefined"
        )));
    }
    let ratio = size / finest;
    let block = (m - 1) * finest / size;
    Ok((block * ratio + 1, (block + 1) * ratio))
}
