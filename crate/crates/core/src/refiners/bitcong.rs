//! A small bit-congruence segmenter used as a stand-in base segmentation.

use crate::model::{Message, Segmentation};

pub const DEFAULT_SIGMA: f64 = 0.6;

fn bit_congruence(a: u8, b: u8) -> f64 {
    f64::from(8 - (a ^ b).count_ones()) / 8.0
}

fn gaussian_smooth(xs: &[f64], sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    (0..xs.len() as isize)
        .map(|i| {
            let mut num = 0.0;
            let mut den = 0.0;
            for d in -radius..=radius {
                let j = i + d;
                if j >= 0 && (j as usize) < xs.len() {
                    let w = kernel[(d + radius) as usize];
                    num += w * xs[j as usize];
                    den += w;
                }
            }
            num / den
        })
        .collect()
}

/// Cuts where the smoothed change of bit congruence between neighboring
/// byte pairs has a local minimum followed by a rise.
pub fn bit_congruence_segmenter(msg: &Message, sigma: f64) -> Segmentation {
    let p = &msg.payload;
    if p.len() < 3 || !(sigma > 0.0) {
        return Segmentation::unsegmented(msg.id);
    }
    let bc: Vec<f64> = p.windows(2).map(|w| bit_congruence(w[0], w[1])).collect();
    let delta: Vec<f64> = bc.windows(2).map(|w| w[1] - w[0]).collect();
    let s = gaussian_smooth(&delta, sigma);
    let cuts = (0..s.len().saturating_sub(1))
        .filter(|&j| (j == 0 || s[j] < s[j - 1]) && s[j + 1] > s[j])
        .map(|j| j + 2);
    Segmentation::from_offsets(msg.id, cuts, p.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(b: &[u8]) -> Message {
        Message::new(0, b.to_vec(), "t").unwrap()
    }

    #[test]
    fn constant_payload_has_no_cuts() {
        assert!(bit_congruence_segmenter(&m(&[7; 12]), DEFAULT_SIGMA).cuts().is_empty());
    }

    #[test]
    fn single_transition() {
        let s = bit_congruence_segmenter(&m(&[0, 0, 0, 0xff, 0xff, 0xff]), DEFAULT_SIGMA);
        assert_eq!(s.cuts(), &[3]);
    }

    #[test]
    fn short_messages() {
        assert!(bit_congruence_segmenter(&m(&[1, 2]), DEFAULT_SIGMA).cuts().is_empty());
        assert!(bit_congruence_segmenter(&m(&[1]), DEFAULT_SIGMA).cuts().is_empty());
    }
}
