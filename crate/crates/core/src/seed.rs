//! Named sub-streams of one master seed.

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the sub-stream `name` (e.g. "scene", "init", "batch").
pub fn derive(master: u64, name: &str) -> u64 {
    name.bytes().fold(mix(master), |acc, b| mix(acc ^ b as u64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_differ_and_repeat() {
        assert_eq!(derive(1, "scene"), derive(1, "scene"));
        assert_ne!(derive(1, "scene"), derive(1, "train"));
        assert_ne!(derive(1, "scene"), derive(2, "scene"));
    }
}
