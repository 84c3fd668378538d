use nalgebra::DMatrix;

use super::afsb::{afsb_forward, AfsbConfig, AfsbWeights};
use super::OverlapTimeline;
use crate::error::{Error, Result};
use crate::scoring::timeline::Interval;
use crate::signal::MultiChannelAudio;

/// Maps frame features `T_f x D` to per-frame overlap probabilities.
pub trait FrameEncoder {
    fn encode(&self, features: &DMatrix<f64>) -> Result<Vec<f64>>;
}

/// `p_t = sigmoid(w . x_t + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticScorer {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticScorer {
    pub fn from_afsb(weights: &AfsbWeights) -> Self {
        Self {
            weights: weights.scorer.clone(),
            bias: weights.scorer_bias,
        }
    }
}

impl FrameEncoder for LogisticScorer {
    fn encode(&self, features: &DMatrix<f64>) -> Result<Vec<f64>> {
        if features.ncols() != self.weights.len() {
            return Err(Error::Dimension(format!(
                "scorer expects {} features, got {}",
                self.weights.len(),
                features.ncols()
            )));
        }
        Ok((0..features.nrows())
            .map(|t| {
                let z: f64 = features
                    .row(t)
                    .iter()
                    .zip(&self.weights)
                    .map(|(x, w)| x * w)
                    .sum::<f64>()
                    + self.bias;
                1.0 / (1.0 + (-z).exp())
            })
            .collect())
    }
}

/// Hysteresis thresholds and duration gates, durations in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeParams {
    pub onset: f64,
    pub offset: f64,
    pub min_on: f64,
    pub min_off: f64,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            onset: 0.7,
            offset: 0.6,
            min_on: 0.1,
            min_off: 0.1,
        }
    }
}

/// Turns frame probabilities into overlap intervals. A region opens when
/// the probability reaches `onset` and closes when it drops below
/// `offset`; gaps shorter than `min_off` are filled, then regions shorter
/// than `min_on` are dropped. Frame `j` spans `[j, j+1) / frame_rate`.
pub fn decode_probabilities(
    probabilities: &[f64],
    frame_rate: f64,
    duration: f64,
    params: &DecodeParams,
) -> Result<OverlapTimeline> {
    if let Some((j, p)) = probabilities
        .iter()
        .enumerate()
        .find(|(_, p)| !(0.0..=1.0).contains(*p))
    {
        return Err(Error::Contract(format!(
            "encoder produced probability {p} at frame {j}, outside [0, 1]"
        )));
    }
    if !(params.offset <= params.onset) {
        return Err(Error::InvalidArgument("offset threshold must not exceed onset threshold".into()));
    }
    let time = |j: usize| (j as f64 / frame_rate).min(duration);
    let mut regions: Vec<Interval> = Vec::new();
    let mut start: Option<usize> = None;
    for (j, p) in probabilities.iter().enumerate() {
        match start {
            None if *p >= params.onset => start = Some(j),
            Some(s) if *p < params.offset => {
                regions.push(Interval::new(time(s), time(j)));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        regions.push(Interval::new(time(s), time(probabilities.len())));
    }

    let mut filled: Vec<Interval> = Vec::with_capacity(regions.len());
    for r in regions {
        match filled.last_mut() {
            Some(last) if r.onset - last.offset < params.min_off => last.offset = r.offset,
            _ => filled.push(r),
        }
    }
    filled.retain(|r| r.duration() >= params.min_on - 1e-9);
    Ok(OverlapTimeline::new(filled))
}

/// Runs the AFSB front end, the frame encoder and the decoder.
pub fn detect_overlap(
    audio: &MultiChannelAudio,
    weights: &AfsbWeights,
    config: &AfsbConfig,
    encoder: &dyn FrameEncoder,
    params: &DecodeParams,
) -> Result<OverlapTimeline> {
    let features = afsb_forward(audio, weights, config)?;
    let probabilities = encoder.encode(&features)?;
    if probabilities.len() != features.nrows() {
        return Err(Error::Contract(format!(
            "encoder returned {} probabilities for {} frames",
            probabilities.len(),
            features.nrows()
        )));
    }
    decode_probabilities(&probabilities, config.frame_rate(), audio.duration(), params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn step(n: usize, on: std::ops::Range<usize>, value: f64) -> Vec<f64> {
        (0..n).map(|j| if on.contains(&j) { value } else { 0.0 }).collect()
    }

    #[test]
    fn silence_decodes_to_nothing() {
        let t = decode_probabilities(&[0.0; 500], 100.0, 5.0, &DecodeParams::default()).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn step_input() {
        let p = step(500, 200..300, 1.0);
        let t = decode_probabilities(&p, 100.0, 5.0, &DecodeParams::default()).unwrap();
        assert_eq!(t.intervals().len(), 1);
        let iv = t.intervals()[0];
        assert!((iv.onset - 2.0).abs() <= 0.01 + 1e-12);
        assert!((iv.offset - 3.0).abs() <= 0.01 + 1e-12);
    }

    #[test]
    fn short_burst_is_gated() {
        let p = step(300, 100..105, 0.8);
        assert!(decode_probabilities(&p, 100.0, 3.0, &DecodeParams::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn hysteresis_keeps_region_open() {
        let mut p = step(300, 100..200, 0.9);
        p[150] = 0.65;
        let t = decode_probabilities(&p, 100.0, 3.0, &DecodeParams::default()).unwrap();
        assert_eq!(t.intervals().len(), 1);
    }

    #[test]
    fn out_of_range_probability_is_a_contract_violation() {
        let err = decode_probabilities(&[0.2, 1.3], 100.0, 1.0, &DecodeParams::default());
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    proptest! {
        #[test]
        fn output_respects_duration_gates(p in proptest::collection::vec(0.0f64..=1.0, 1..400)) {
            let params = DecodeParams::default();
            let t = decode_probabilities(&p, 100.0, p.len() as f64 / 100.0, &params).unwrap();
            let ivs = t.intervals();
            for iv in ivs {
                prop_assert!(iv.duration() >= params.min_on - 1e-9);
            }
            for w in ivs.windows(2) {
                prop_assert!(w[1].onset - w[0].offset >= params.min_off - 1e-9);
            }
        }
    }
}
