//! SplitMix64 — the scenario noise generator.
//!
//! Hand-rolled on purpose: simulation results must be bit-identical across
//! platforms and releases, so the generator is part of the artifact's
//! contract rather than an external dependency. SplitMix64 (Steele, Lea &
//! Flood's `splitmix64`) is tiny, passes BigCrush, and has published
//! reference outputs that the tests pin.

/// 64-bit SplitMix generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw in `(0, 1]` — never zero, so it is safe under `ln`.
    pub fn next_unit_open_low(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 1.0) * 2f64.powi(-53)
    }

    /// Uniform draw in `[0, 1)`.
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * 2f64.powi(-53)
    }
}

/// One standard-normal draw via the Box–Muller transform (cosine branch).
/// Consumes exactly two generator outputs, keeping tick substreams aligned.
pub fn gaussian(rng: &mut SplitMix64) -> f64 {
    let u1 = rng.next_unit_open_low();
    let u2 = rng.next_unit();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
