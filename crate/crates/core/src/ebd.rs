//! Effective bit depth reduction by right shift and the naive left-shift
//! inverse used as the network's residual baseline.

use crate::error::{Error, Result};
use crate::video::Frame;

fn check_shift(frame: &Frame, shift: u32) -> Result<()> {
    let cbd = frame.bit_depth().cbd();
    if shift >= cbd {
        return Err(Error::InvalidShift { shift, cbd });
    }
    Ok(())
}

/// Drops the `shift` least significant bits of every sample (truncating
/// right shift). The result is tagged with the reduced effective depth.
pub fn ebd_down(frame: &Frame, shift: u32) -> Result<Frame> {
    check_shift(frame, shift)?;
    let depth = frame.bit_depth();
    if shift >= depth.ebd() {
        return Err(Error::InvalidShift {
            shift,
            cbd: depth.cbd(),
        });
    }
    let mut out = frame.map_samples(|v| v >> shift);
    out.set_bit_depth(depth.with_ebd(depth.ebd() - shift));
    Ok(out)
}

/// Left-shifts every sample by `shift`, clipping to the coding range. No LSB
/// replication: the lost bits are left for the network to restore.
pub fn ebd_up_naive(frame: &Frame, shift: u32) -> Result<Frame> {
    check_shift(frame, shift)?;
    let depth = frame.bit_depth();
    let max = depth.max_coded() as u32;
    let mut out = frame.map_samples(|v| ((v as u32) << shift).min(max) as u16);
    out.set_bit_depth(depth.with_ebd((depth.ebd() + shift).min(depth.cbd())));
    Ok(out)
}

/// Naive up-shift back to full effective depth, whatever the current tag.
pub fn ebd_restore_naive(frame: &Frame) -> Result<Frame> {
    ebd_up_naive(frame, frame.bit_depth().shift())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video::{BitDepthConfig, ChromaFormat};

    fn single(v: u16, depth: BitDepthConfig) -> Frame {
        Frame::filled(2, 2, ChromaFormat::C444, depth, [v, v, v]).unwrap()
    }

    fn full10() -> BitDepthConfig {
        BitDepthConfig::full(10).unwrap()
    }

    fn reduced10() -> BitDepthConfig {
        BitDepthConfig::new(10, 9).unwrap()
    }

    #[test]
    fn down_examples() {
        for (v, want) in [(1023, 511), (0, 0), (514, 257)] {
            let out = ebd_down(&single(v, full10()), 1).unwrap();
            assert!(out.planes().iter().all(|p| p.data().iter().all(|&s| s == want)));
            assert_eq!(out.bit_depth(), reduced10());
        }
    }

    #[test]
    fn up_examples() {
        let out = ebd_up_naive(&single(511, reduced10()), 1).unwrap();
        assert_eq!(out.y.get(0, 0), 1022);
        assert_eq!(out.bit_depth(), full10());
        let out = ebd_up_naive(&single(0, reduced10()), 1).unwrap();
        assert_eq!(out.cr.get(1, 1), 0);
    }

    #[test]
    fn up_clips_to_coded_range() {
        // Codec overshoot above the reduced range must not wrap.
        let out = ebd_up_naive(&single(600, reduced10()), 1).unwrap();
        assert_eq!(out.y.get(0, 0), 1023);
    }

    #[test]
    fn invalid_shift() {
        let f = single(5, full10());
        assert!(matches!(
            ebd_down(&f, 10),
            Err(Error::InvalidShift { shift: 10, cbd: 10 })
        ));
        assert!(ebd_up_naive(&f, 12).is_err());
    }

    #[test]
    fn exhaustive_round_trip_bound() {
        for cbd in 2..=12u32 {
            let depth = BitDepthConfig::full(cbd).unwrap();
            for shift in 0..cbd {
                let values: Vec<u16> = (0..(1u32 << cbd)).map(|v| v as u16).collect();
                let n = values.len();
                let frame = Frame::new(
                    crate::video::Plane::new(n, 1, values.clone()).unwrap(),
                    crate::video::Plane::new(n, 1, values.clone()).unwrap(),
                    crate::video::Plane::new(n, 1, values.clone()).unwrap(),
                    ChromaFormat::C444,
                    depth,
                )
                .unwrap();
                let down = ebd_down(&frame, shift).unwrap();
                let up = ebd_up_naive(&down, shift).unwrap();
                let bound = (1u32 << shift) - 1;
                for (a, b) in values.iter().zip(up.y.data()) {
                    assert!((*a as i32 - *b as i32).unsigned_abs() <= bound);
                }
                // down is monotone, up strictly monotone on the reduced range
                assert!(down.y.data().windows(2).all(|w| w[0] <= w[1]));
                let ramp = Frame::filled(1, 1, ChromaFormat::C444, down.bit_depth(), [0; 3]).unwrap();
                let reduced_max = down.bit_depth().max_effective();
                let ups: Vec<u16> = (0..=reduced_max)
                    .map(|r| ebd_up_naive(&ramp.map_samples(|_| r), shift).unwrap().y.get(0, 0))
                    .collect();
                assert!(ups.windows(2).all(|w| w[0] < w[1]));
                // down(up(r)) == r for reduced values
                let again = ebd_down(&up, shift).unwrap();
                assert_eq!(again.y.data(), down.y.data());
            }
        }
    }
}
