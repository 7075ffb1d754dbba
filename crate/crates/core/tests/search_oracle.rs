use proptest::prelude::*;
use tlscene::annotation::{DetectionRecord, FrameAnnotation, VideoAnnotation};
use tlscene::datagen::{TemplateSpec, TlvTemplate};
use tlscene::search::{oracle_intervals, search, InvalidFramePolicy, SceneInterval, SearchConfig};

fn clean_video(masks: &[u8], labels: &[String]) -> VideoAnnotation {
    let frames = masks
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let dets = labels
                .iter()
                .enumerate()
                .filter(|(k, _)| m >> k & 1 == 1)
                .map(|(_, l)| DetectionRecord { proposition: l.clone(), raw_confidence: 1.0 });
            FrameAnnotation::new(i as u64, i as f64 / 25.0, dets).unwrap()
        })
        .collect();
    VideoAnnotation::new("p", 25.0, frames).unwrap()
}

fn spans(v: &[SceneInterval]) -> Vec<(u64, u64)> {
    v.iter().map(|i| (i.start_frame, i.end_frame)).collect()
}

/// Frames biased towards long runs, so until-windows actually occur.
fn runs() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec((0u8..8, 1usize..40), 1..60)
        .prop_map(|rs| rs.into_iter().flat_map(|(m, n)| std::iter::repeat_n(m, n)).take(2000).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn search_matches_oracle_on_clean_videos(masks in runs(), t in 0usize..5, reset in any::<bool>(), merge in any::<bool>()) {
        let ts = TemplateSpec::with_defaults(TlvTemplate::ALL[t]);
        let video = clean_video(&masks, &ts.propositions);
        let policy = if reset { InvalidFramePolicy::Reset } else { InvalidFramePolicy::Skip };
        let cfg = SearchConfig::<f64> { invalid_frame_policy: policy, merge_adjacent: merge, ..SearchConfig::default() };
        let spec = ts.spec();
        let found = search(&video, &spec, &cfg).unwrap();
        let oracle = oracle_intervals(&video, &spec, &cfg).unwrap();
        prop_assert_eq!(spans(&found), spans(&oracle));
        for w in found.windows(2) {
            prop_assert!(w[0].end_frame < w[1].start_frame);
        }
        prop_assert!(found.iter().all(|i| i.start_frame <= i.end_frame && i.end_frame < masks.len() as u64));
        prop_assert!(found.iter().all(|i| i.probability == 1.0));
    }

    #[test]
    fn single_and_double_precision_agree(masks in runs(), t in 0usize..5) {
        let ts = TemplateSpec::with_defaults(TlvTemplate::ALL[t]);
        let video = clean_video(&masks, &ts.propositions);
        let a = search(&video, &ts.spec(), &SearchConfig::<f64>::default()).unwrap();
        let b = search(&video, &ts.spec(), &SearchConfig::<f32>::default()).unwrap();
        prop_assert_eq!(spans(&a), spans(&b));
    }
}

#[test]
fn search_is_deterministic() {
    let ts = TemplateSpec::with_defaults(TlvTemplate::AAndBUntilC);
    let masks: Vec<u8> = (0..500u32).map(|i| ((i * 7 + i / 13) % 8) as u8).collect();
    let video = clean_video(&masks, &ts.propositions);
    let cfg = SearchConfig::<f64>::default();
    let a = serde_json::to_string(&search(&video, &ts.spec(), &cfg).unwrap()).unwrap();
    let b = serde_json::to_string(&search(&video, &ts.spec(), &cfg).unwrap()).unwrap();
    assert_eq!(a, b);
}
