#![allow(clippy::needless_range_loop, clippy::type_complexity)]

mod common;

use common::*;
use ivex_core::stft::{analyze, synthesize};
use ivex_core::{StftConfig, Waveform};
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn noise(seed: u64, channels: usize, n: usize) -> Waveform {
    let mut r = rng(seed);
    let chans = (0..channels).map(|_| (0..n).map(|_| StandardNormal.sample(&mut r)).collect()).collect();
    Waveform::new(16000, chans).unwrap()
}

fn interior_error(a: &Waveform, b: &Waveform, margin: usize) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (x, y) in a.channels.iter().zip(&b.channels) {
        for i in margin..x.len() - margin {
            num += (x[i] - y[i]).powi(2);
            den += x[i] * x[i];
        }
    }
    (num / den).sqrt()
}

#[test]
fn round_trip_default_and_alternative_configs() {
    for cfg in [StftConfig::default(), StftConfig::new(1024, 256).unwrap()] {
        let x = noise(40, 2, 40000);
        let y = synthesize(&analyze(&x, &cfg).unwrap(), &cfg, 16000, Some(x.len())).unwrap();
        assert_eq!(y.len(), x.len());
        assert!(interior_error(&x, &y, cfg.frame_len) <= 1e-6);
    }
}

#[test]
fn bins_and_frames_follow_the_config() {
    let cfg = StftConfig::new(128, 32).unwrap();
    let x = noise(41, 3, 1000);
    let s = analyze(&x, &cfg).unwrap();
    assert_eq!(s.num_freqs(), 65);
    assert_eq!(s.num_channels(), 3);
    assert_eq!(s.num_frames(), cfg.num_frames(1000));
    assert!(cfg.synthesis_len(s.num_frames()) >= 1000);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn analysis_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let cfg = StftConfig::new(64, 16).unwrap();
        let x = noise(seed, 1, 500);
        let y = noise(seed.wrapping_add(1), 1, 500);
        let mix: Vec<f64> = x.channels[0].iter().zip(&y.channels[0]).map(|(u, v)| a * u + b * v).collect();
        let sm = analyze(&Waveform::new(16000, vec![mix]).unwrap(), &cfg).unwrap();
        let (sx, sy) = (analyze(&x, &cfg).unwrap(), analyze(&y, &cfg).unwrap());
        for ((m, p), q) in sm.as_slice().iter().zip(sx.as_slice()).zip(sy.as_slice()) {
            prop_assert!((m - (p * a + q * b)).norm() <= 1e-10);
        }
    }

    #[test]
    fn round_trip_any_signal(seed in any::<u64>(), frame_pow in 5u32..9, overlap in prop::sample::select(vec![2usize, 4])) {
        let frame = 1usize << frame_pow;
        let cfg = StftConfig::new(frame, frame / overlap).unwrap();
        let x = noise(seed, 2, 20 * frame);
        let y = synthesize(&analyze(&x, &cfg).unwrap(), &cfg, 16000, Some(x.len())).unwrap();
        prop_assert!(interior_error(&x, &y, frame) <= 1e-6);
    }
}
