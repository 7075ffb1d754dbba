use proptest::prelude::*;
use tlscene::annotation::{read_annotations, write_annotations, DetectionRecord, ReadOptions};
use tlscene::calibration::{CalibrationFile, CalibrationParams};
use tlscene::spec_lang::parse_spec;
use tlscene::{FrameAnnotation, VideoAnnotation};

const LABELS: [&str; 4] = ["person", "car", "traffic light", "dog \"quoted\""];

fn video_strategy() -> impl Strategy<Value = VideoAnnotation> {
    let frame = prop::collection::vec((0..LABELS.len(), 0.0f64..=1.0), 0..4);
    (prop::collection::vec(frame, 1..40), prop::sample::select(vec![10.0, 24.0, 25.0, 29.97, 30.0])).prop_map(
        |(frames, fps)| {
            let frames = frames
                .into_iter()
                .enumerate()
                .map(|(i, dets)| {
                    let dets = dets
                        .into_iter()
                        .map(|(l, c)| DetectionRecord { proposition: LABELS[l].to_string(), raw_confidence: c });
                    FrameAnnotation::new(i as u64, i as f64 / fps, dets).unwrap()
                })
                .collect();
            VideoAnnotation::new("v", fps, frames).unwrap()
        },
    )
}

proptest! {
    #[test]
    fn annotations_survive_write_then_read(video in video_strategy()) {
        let mut buf = Vec::new();
        write_annotations(&video, &mut buf).unwrap();
        let back = read_annotations(&buf[..], &ReadOptions { video_id: "v".into(), fps: Some(video.fps) }).unwrap();
        prop_assert_eq!(back, video);
    }

    #[test]
    fn calibration_file_is_lossless(k in 0.1f64..50.0, y0 in 0.0f64..1.0, lo in 0.0f64..0.5, hi in 0.5f64..1.0) {
        let params = CalibrationParams::new(k, y0, lo, hi).unwrap();
        let mut buf = Vec::new();
        CalibrationFile::from_params("m", &params).write(&mut buf).unwrap();
        let back: CalibrationParams<f64> = CalibrationFile::read(&buf[..]).unwrap().params().unwrap();
        prop_assert_eq!(back, params);
    }
}

#[test]
fn printed_specs_reparse_to_the_same_tree() {
    for text in [
        r#""a" U "b""#,
        r#"P>=0.8 [G ("a" -> F "b")]"#,
        r#"P<0.1 [X X "a" & !"b" | "c"]"#,
        r#"("a" U "b") U ("c" U "d")"#,
        r#"¬"a" ∨ ◇ □ "b""#,
        r#"F ("a" & X "b" & X X "c")"#,
        r#""with \"quote\" \\ slash""#,
    ] {
        let spec = parse_spec(text).unwrap();
        let printed = spec.to_string();
        let again = parse_spec(&printed).unwrap_or_else(|e| panic!("{printed}: {e}"));
        assert_eq!(again.surface(), spec.surface(), "{text} -> {printed}");
        assert_eq!(again.to_json(), spec.to_json());
    }
}
