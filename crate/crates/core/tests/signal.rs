mod common;

use common::random_seq;
use dpd_forge::signal::{
    frame_count, frame_sequence, split_dataset, split_lengths, IqSample, IqSequence, DEFAULT_SPLIT,
};
use dpd_forge::Error;
use proptest::prelude::*;

fn ramp(n: usize) -> IqSequence {
    IqSequence::new(
        (0..n)
            .map(|k| IqSample::new(k as f64, -(k as f64)))
            .collect(),
        1.0,
    )
    .unwrap()
}

#[test]
fn five_samples_three_wide_stride_one() {
    let x = ramp(5);
    let f = frame_sequence(&x, &x, 3, 1).unwrap();
    let starts: Vec<usize> = f.frames.iter().map(|fr| fr.start_index).collect();
    assert_eq!(starts, vec![0, 1, 2]);
}

#[test]
fn default_dataset_frame_count() {
    assert_eq!(frame_count(38_400, 50, 1), 38_351);
}

#[test]
fn trailing_sample_is_dropped() {
    let x = ramp(6);
    let f = frame_sequence(&x, &x, 3, 2).unwrap();
    let starts: Vec<usize> = f.frames.iter().map(|fr| fr.start_index).collect();
    assert_eq!(starts, vec![0, 2]);
    assert!(f
        .frames
        .iter()
        .all(|fr| fr.input.iter().all(|s| s.i != 5.0)));
}

#[test]
fn framing_rejects_bad_arguments() {
    let x = ramp(6);
    assert!(matches!(
        frame_sequence(&x, &ramp(5), 3, 1),
        Err(Error::LengthMismatch { .. })
    ));
    assert!(frame_sequence(&x, &x, 7, 1).is_err());
    assert!(frame_sequence(&x, &x, 3, 0).is_err());
}

#[test]
fn default_split_lengths() {
    assert_eq!(
        split_lengths(38_400, DEFAULT_SPLIT).unwrap(),
        (23_040, 7_680, 7_680)
    );
    assert_eq!(split_lengths(10, DEFAULT_SPLIT).unwrap(), (6, 2, 2));
    assert_eq!(split_lengths(11, DEFAULT_SPLIT).unwrap(), (6, 2, 3));
}

#[test]
fn split_rejects_bad_ratios_and_tiny_inputs() {
    let x = ramp(10);
    assert!(split_dataset(&x, &x, (0.5, 0.2, 0.2)).is_err());
    assert!(split_dataset(&ramp(2), &ramp(2), DEFAULT_SPLIT).is_err());
}

#[test]
fn split_is_contiguous_and_ordered() {
    let x = ramp(11);
    let s = split_dataset(&x, &x, DEFAULT_SPLIT).unwrap();
    let joined: Vec<IqSample> = [&s.train, &s.validation, &s.test]
        .iter()
        .flat_map(|p| p.input.samples().to_vec())
        .collect();
    assert_eq!(joined, x.samples());
}

#[test]
fn samples_must_be_finite() {
    assert!(IqSequence::new(vec![IqSample::new(f64::NAN, 0.0)], 1.0).is_err());
    assert!(IqSequence::new(vec![], 1.0).is_err());
    assert!(IqSequence::new(vec![IqSample::ZERO], 0.0).is_err());
}

proptest! {
    #[test]
    fn frame_count_and_overlap(n in 1usize..200, t in 1usize..40, s in 1usize..40) {
        prop_assume!(t <= n && s <= t);
        let x = random_seq(n, 1.0, n as u64);
        let f = frame_sequence(&x, &x, t, s).unwrap();
        prop_assert_eq!(f.frames.len(), (n - t) / s + 1);
        for (k, w) in f.frames.windows(2).enumerate() {
            prop_assert_eq!(w[1].start_index - w[0].start_index, s);
            prop_assert_eq!(&w[0].input[s..], &w[1].input[..t - s], "frame {}", k);
        }
        if s == 1 {
            prop_assert_eq!(f.frames.len(), n - t + 1);
        }
    }

    #[test]
    fn frames_reassemble_the_covered_region(n in 1usize..200, t in 1usize..30, s in 1usize..30) {
        prop_assume!(t <= n && s <= t);
        let x = random_seq(n, 1.0, 7 + n as u64);
        let f = frame_sequence(&x, &x, t, s).unwrap();
        let mut rebuilt: Vec<IqSample> = f.frames.iter().flat_map(|fr| fr.input[..s].to_vec()).collect();
        let last = f.frames.last().unwrap();
        rebuilt.extend_from_slice(&last.input[s..]);
        let covered = last.start_index + t;
        prop_assert_eq!(&rebuilt[..], &x.samples()[..covered]);
    }

    #[test]
    fn split_preserves_order_and_count(n in 3usize..5000) {
        let x = random_seq(n, 1.0, n as u64);
        let y = random_seq(n, 1.0, 1 + n as u64);
        let s = split_dataset(&x, &y, DEFAULT_SPLIT).unwrap();
        prop_assert_eq!(s.train.len() + s.validation.len() + s.test.len(), n);
        prop_assert_eq!(s.train.len(), (0.6 * n as f64 + 1e-9).floor() as usize);
        prop_assert_eq!(s.validation.len(), (0.2 * n as f64 + 1e-9).floor() as usize);
        let (_, v0, t0) = s.offsets();
        prop_assert_eq!(s.test.output.samples()[0], y.samples()[t0]);
        prop_assert_eq!(s.validation.input.samples()[0], x.samples()[v0]);
    }
}
