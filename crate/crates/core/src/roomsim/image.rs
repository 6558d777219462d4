//! Mirror-image room impulse responses for rectangular rooms.
//!
//! Sources are mirrored across the six walls; each image contributes a
//! fractional-delay tap attenuated by the wall reflection coefficient
//! raised to the number of bounces and by spherical spreading `1/(4 pi d)`.
//!
//! Wall absorption is uniform. The Norris-Eyring relation gives the
//! starting value (the Sabine relation overshoots absorption badly once
//! `0.161 V / (S T)` approaches 1 and would decay several times too
//! fast), but in a non-cubic room the specular image field decays
//! non-exponentially: the late tail is carried by near-axial image
//! chains along the widest wall pair and runs slower than any
//! mean-free-path formula predicts. The reflection coefficient is
//! therefore calibrated per room and target: a cheap low-rate probe
//! response is simulated, its backward-integrated decay measured, and
//! log(beta) rescaled until the -60 dB crossing lands on the requested
//! reverberation time. The result is cached per room geometry and
//! target. The Sabine value still serves as the feasibility bound:
//! targets that would need average absorption above 1 are rejected.

use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::{Mutex, OnceLock};

use crate::{Error, Result};

/// Speed of sound used throughout, in m/s.
pub const SPEED_OF_SOUND: f64 = 343.0;

/// Half-width of the windowed-sinc fractional-delay kernel, in samples.
const KERNEL_HALF_WIDTH: usize = 4;

/// Per-image amplitude cutoff relative to the direct path (-80 dB).
const IMAGE_AMPLITUDE_CUTOFF: f64 = 1e-4;

/// Average Sabine absorption implied by a reverberation target:
/// `0.161 V / (S rt60)`. Values above 1 mean the target is physically
/// unreachable for the room.
pub fn sabine_absorption(room: [f64; 3], rt60: f64) -> f64 {
    let [lx, ly, lz] = room;
    let volume = lx * ly * lz;
    let surface = 2.0 * (lx * ly + lx * lz + ly * lz);
    0.161 * volume / (surface * rt60)
}

fn check_inside(room: [f64; 3], point: [f64; 3], what: &str) -> Result<()> {
    for (axis, (&p, &l)) in point.iter().zip(&room).enumerate() {
        if !(p > 0.0 && p < l) {
            return Err(Error::Geometry(format!(
                "{what} coordinate {axis} = {p} is not strictly inside the room (0, {l})"
            )));
        }
    }
    Ok(())
}

fn euclid(a: [f64; 3], b: [f64; 3]) -> f64 {
    a.iter()
        .zip(&b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Add one fractional-delay tap at sample position `center` (possibly
/// non-integer) using a Hann-windowed sinc of support +/-4 samples.
///
/// The kernel is centered on the nearest integer sample so the residual
/// offset stays in [-1/2, 1/2], where `sin(pi frac)` keeps full relative
/// precision; `sin(pi x)` and the window cosine are then expanded around
/// that offset so only three trigonometric evaluations are needed per
/// tap insertion regardless of kernel width.
fn add_tap(h: &mut [f64], center: f64, amplitude: f64) {
    // cos(pi n / 4) and sin(pi n / 4) for tap offsets n = -4..=4.
    const COS_N4: [f64; 9] = [
        -1.0,
        -FRAC_1_SQRT_2,
        0.0,
        FRAC_1_SQRT_2,
        1.0,
        FRAC_1_SQRT_2,
        0.0,
        -FRAC_1_SQRT_2,
        -1.0,
    ];
    const SIN_N4: [f64; 9] = [
        0.0,
        -FRAC_1_SQRT_2,
        -1.0,
        -FRAC_1_SQRT_2,
        0.0,
        FRAC_1_SQRT_2,
        1.0,
        FRAC_1_SQRT_2,
        0.0,
    ];

    let base = center.round();
    let frac = center - base;
    let base = base as isize;
    let sin_pf = (PI * frac).sin();
    let cos_qf = (PI * frac / 4.0).cos();
    let sin_qf = (PI * frac / 4.0).sin();

    for n in -4isize..=4 {
        let i = base + n;
        if i < 0 || i as usize >= h.len() {
            continue;
        }
        let x = n as f64 - frac;
        if x.abs() >= 4.0 {
            continue;
        }
        let sinc = if x == 0.0 {
            1.0
        } else {
            // sin(pi (n - frac)) = -(-1)^n sin(pi frac)
            let s = if n % 2 == 0 { -sin_pf } else { sin_pf };
            s / (PI * x)
        };
        let idx = (n + 4) as usize;
        let window = 0.5 * (1.0 + COS_N4[idx] * cos_qf + SIN_N4[idx] * sin_qf);
        h[i as usize] += amplitude * sinc * window;
    }
}

/// Room impulse response between one source and one microphone.
///
/// `rt60 = 0` produces the direct path only. `max_order` caps the total
/// number of wall bounces per image; `None` derives the cap from the
/// -80 dB amplitude cutoff. The first significant tap lands at
/// `distance / c * fs` samples with amplitude `1 / (4 pi distance)`.
pub fn image_method_rir(
    room: [f64; 3],
    source: [f64; 3],
    mic: [f64; 3],
    rt60: f64,
    max_order: Option<usize>,
    fs: u32,
) -> Result<Vec<f64>> {
    if room.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::Geometry(format!(
            "room dimensions must be positive and finite, got {room:?}"
        )));
    }
    check_inside(room, source, "source")?;
    check_inside(room, mic, "microphone")?;
    if fs == 0 {
        return Err(Error::InvalidParameter("sample rate must be positive".into()));
    }
    if !(rt60 >= 0.0 && rt60.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "rt60 must be finite and non-negative, got {rt60}"
        )));
    }

    let fs_f = fs as f64;
    let direct_dist = euclid(source, mic);
    if direct_dist < 1e-3 {
        return Err(Error::Geometry(
            "source and microphone coincide; spherical spreading is undefined".into(),
        ));
    }
    let direct_delay = direct_dist / SPEED_OF_SOUND;

    if rt60 == 0.0 {
        let n = (direct_delay * fs_f).ceil() as usize + KERNEL_HALF_WIDTH + 2;
        let mut h = vec![0.0; n];
        add_tap(&mut h, direct_delay * fs_f, 1.0 / (4.0 * PI * direct_dist));
        return Ok(h);
    }

    let sabine = sabine_absorption(room, rt60);
    if sabine > 1.0 {
        return Err(Error::InfeasibleRt60 {
            rt60,
            absorption: sabine,
        });
    }
    let ln_beta = calibrated_log_beta(room, rt60, max_order);
    Ok(rir_with_log_beta(room, source, mic, rt60, max_order, fs, ln_beta))
}

/// The image-source loop proper, with the reflection coefficient given
/// as `ln(beta)`. Inputs are assumed validated and `rt60 > 0`.
fn rir_with_log_beta(
    room: [f64; 3],
    source: [f64; 3],
    mic: [f64; 3],
    rt60: f64,
    max_order: Option<usize>,
    fs: u32,
    ln_beta: f64,
) -> Vec<f64> {
    let fs_f = fs as f64;
    let direct_delay = euclid(source, mic) / SPEED_OF_SOUND;
    let beta = ln_beta.exp();

    // Response long enough that the energy decay is unbiased past the
    // -60 dB point, plus propagation and kernel margins.
    let t_len = 1.4 * rt60 + direct_delay + 0.005;
    let n = (t_len * fs_f).ceil() as usize + KERNEL_HALF_WIDTH + 2;
    let max_dist = (n + KERNEL_HALF_WIDTH) as f64 / fs_f * SPEED_OF_SOUND;

    let order_cap = match max_order {
        Some(o) => o,
        None => (IMAGE_AMPLITUDE_CUTOFF.ln() / beta.ln()).ceil() as usize,
    };

    // beta^e lookup for every reachable bounce count.
    let ranges: Vec<isize> = room
        .iter()
        .map(|&l| (max_dist / (2.0 * l)).ceil() as isize + 1)
        .collect();
    let max_exponent: usize = ranges.iter().map(|&r| 2 * r as usize + 1).sum();
    let beta_pow: Vec<f64> = (0..=max_exponent).map(|e| beta.powi(e as i32)).collect();

    let mut h = vec![0.0; n];
    let gain = 1.0 / (4.0 * PI);
    for mx in -ranges[0]..=ranges[0] {
        for qx in 0..2isize {
            let dx = (1 - 2 * qx) as f64 * source[0] - mic[0] + (2 * mx) as f64 * room[0];
            let ox = (mx - qx).unsigned_abs() + mx.unsigned_abs();
            for my in -ranges[1]..=ranges[1] {
                for qy in 0..2isize {
                    let dy =
                        (1 - 2 * qy) as f64 * source[1] - mic[1] + (2 * my) as f64 * room[1];
                    let oy = (my - qy).unsigned_abs() + my.unsigned_abs();
                    let dxy2 = dx * dx + dy * dy;
                    for mz in -ranges[2]..=ranges[2] {
                        for qz in 0..2isize {
                            let oz = (mz - qz).unsigned_abs() + mz.unsigned_abs();
                            let order = ox + oy + oz;
                            if order > order_cap {
                                continue;
                            }
                            let dz = (1 - 2 * qz) as f64 * source[2] - mic[2]
                                + (2 * mz) as f64 * room[2];
                            let dist = (dxy2 + dz * dz).sqrt();
                            if dist > max_dist {
                                continue;
                            }
                            add_tap(
                                &mut h,
                                dist / SPEED_OF_SOUND * fs_f,
                                beta_pow[order] * gain / dist,
                            );
                        }
                    }
                }
            }
        }
    }
    h
}

/// Sample rate for calibration probes; the decay time being measured is
/// in seconds, so a coarse rate keeps the probes cheap.
const PROBE_FS: u32 = 8000;

/// Reflection coefficient (as its logarithm) whose simulated decay
/// crosses -60 dB at the requested reverberation time, found by probing
/// the room with the Norris-Eyring value and rescaling. Cached per
/// room, target, and order cap.
fn calibrated_log_beta(room: [f64; 3], rt60: f64, max_order: Option<usize>) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<[u64; 6], f64>>> = OnceLock::new();
    let key = [
        room[0].to_bits(),
        room[1].to_bits(),
        room[2].to_bits(),
        rt60.to_bits(),
        max_order.is_some() as u64,
        max_order.unwrap_or(0) as u64,
    ];
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(&v) = cache.lock().unwrap().get(&key) {
        return v;
    }

    // Norris-Eyring starting point:
    // 1 - alpha = exp(-0.161 V / (S rt60)), beta = sqrt(1 - alpha).
    let mut ln_beta = -sabine_absorption(room, rt60) / 2.0;

    // Fixed probe geometry: interior points with no symmetry to the
    // walls, scaled to the room.
    let src = [0.314 * room[0], 0.431 * room[1], 0.377 * room[2]];
    let mic = [0.618 * room[0], 0.569 * room[1], 0.643 * room[2]];
    for _ in 0..5 {
        let probe = rir_with_log_beta(room, src, mic, rt60, max_order, PROBE_FS, ln_beta);
        let Some(t60) = decay_time_to(&probe, PROBE_FS, 60.0) else {
            break;
        };
        let ratio = t60 / rt60;
        if (ratio - 1.0).abs() <= 0.03 {
            break;
        }
        // The crossing time scales inversely with the decay rate, which
        // is proportional to -ln(beta).
        ln_beta *= ratio;
    }

    cache.lock().unwrap().insert(key, ln_beta);
    ln_beta
}

/// Backward-integrated energy decay curve in dB relative to the total
/// energy (the Schroeder integral).
pub fn schroeder_decay_db(rir: &[f64]) -> Vec<f64> {
    let mut tail_energy: Vec<f64> = Vec::with_capacity(rir.len());
    let mut acc = 0.0;
    for &x in rir.iter().rev() {
        acc += x * x;
        tail_energy.push(acc);
    }
    tail_energy.reverse();
    let total = acc.max(f64::MIN_POSITIVE);
    tail_energy
        .into_iter()
        .map(|e| 10.0 * (e / total).max(1e-300).log10())
        .collect()
}

/// Time at which the energy decay curve first drops `drop_db` below its
/// start, in seconds. `None` when the response never decays that far.
pub fn decay_time_to(rir: &[f64], fs: u32, drop_db: f64) -> Option<f64> {
    let edc = schroeder_decay_db(rir);
    edc.iter()
        .position(|&db| db <= -drop_db)
        .map(|i| i as f64 / fs as f64)
}
