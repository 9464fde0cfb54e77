//! Pinching-antenna NOMA downlink toolkit.
//!
//! A base station feeds `N` dielectric waveguides stretched along the x-axis
//! at height `d`; on each waveguide a single pinching antenna (PA) can slide
//! to any position `x ∈ [0, x_max]` and radiates the guided signal to `K`
//! single-antenna users on the ground plane, which are served jointly via
//! power-domain NOMA. Waveguide propagation imposes a phase rotation
//! `2π x / λ_g` and, for lossy dielectrics, an amplitude decay `e^(−α_D x)`.
//!
//! The crate provides, bottom-up:
//!
//! * [`phys`] — guided-wave constants, the frequency-dependent attenuation
//!   constant of a lossy dielectric waveguide, and end-to-end channel
//!   coefficients (lossy and lossless).
//! * [`rate`] — SINR / per-user rate / sum-rate evaluation under successive
//!   interference cancellation, plus constraint feasibility checking.
//! * [`conic`] — a small self-contained conic-program model and a first-order
//!   operator-splitting solver over the homogeneous self-dual embedding,
//!   supporting zero, nonnegative, second-order, PSD and exponential cones.
//! * [`sca`] — the two successive-convex-approximation subproblems (precoder
//!   SDR and PA placement), rank-one extraction, and their inner loops.
//! * [`ao`] — the outer alternating optimization driver and the comparison
//!   schemes (ideal / naive pinching, conventional fixed array).
//! * [`harness`] — scenario configuration, seeded Monte-Carlo sweeps, a
//!   brute-force grid oracle, and CSV/JSON result emission.

pub mod ao;
pub mod conic;
pub mod harness;
pub mod phys;
pub mod rate;
pub mod sca;
