use std::fs;

use adaptive_bacf::eval::{
    emit_results, evaluate, load_sequence, parse_trajectory, run_ope, EvalResult,
};
use adaptive_bacf::toy::{write_toy, ToyKind};
use adaptive_bacf::{BoundingBox, ConfigFile, Error, ParseErrorKind, TrackerConfig};

fn boxes(n: usize) -> Vec<BoundingBox> {
    (0..n)
        .map(|i| BoundingBox::from_top_left(1.0 + i as f64 / 3.0, 2.5 + 0.1 * i as f64, 20.0 + i as f64 / 7.0, 18.0).unwrap())
        .collect()
}

fn result_for(traj: &[BoundingBox]) -> EvalResult {
    let gt: Vec<_> = traj.iter().copied().map(Some).collect();
    evaluate("demo", traj, &gt).unwrap()
}

#[test]
fn emitted_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let traj = boxes(12);
    let result = result_for(&traj);
    let cfg = ConfigFile::from_config(&TrackerConfig::default()).to_table().unwrap();
    emit_results(&result, dir.path(), Some(&cfg)).unwrap();

    let back = parse_trajectory(&dir.path().join("trajectory.txt")).unwrap();
    assert_eq!(back.len(), traj.len());
    for (a, b) in back.iter().zip(&traj) {
        let (pa, pb) = (a.top_left(), b.top_left());
        for (x, y) in [(pa.0, pb.0), (pa.1, pb.1), (pa.2, pb.2), (pa.3, pb.3)] {
            assert!((x - y).abs() <= 1e-9);
        }
    }

    let curves = fs::read_to_string(dir.path().join("curves.csv")).unwrap();
    let lines: Vec<&str> = curves.lines().collect();
    assert_eq!(lines[0], "curve,threshold,value");
    assert_eq!(lines.len(), 1 + 51 + 21);
    assert_eq!(lines[1], "precision,0,1");
    assert_eq!(lines[52], "success,0.00,1");
    assert_eq!(lines[72], "success,1.00,1");

    let summary: toml::Table = fs::read_to_string(dir.path().join("summary.toml")).unwrap().parse().unwrap();
    assert_eq!(summary["name"].as_str(), Some("demo"));
    assert_eq!(summary["frames"].as_integer(), Some(12));
    assert_eq!(summary["auc"].as_float(), Some(1.0));
    assert_eq!(summary["failures"].as_integer(), Some(0));
    let echoed = ConfigFile::parse(&toml::to_string(&summary["config"]).unwrap()).unwrap();
    assert_eq!(TrackerConfig::from_file(&echoed).unwrap(), TrackerConfig::default());

    let timing: toml::Table = fs::read_to_string(dir.path().join("timing.toml")).unwrap().parse().unwrap();
    assert!(timing.contains_key("fps"));
}

#[test]
fn degenerate_annotations_are_skipped() {
    let dir = tempfile::tempdir().unwrap();
    write_toy(dir.path(), ToyKind::Moving, 1).unwrap();
    let gt_path = dir.path().join("groundtruth_rect.txt");
    let text = fs::read_to_string(&gt_path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    lines[5] = "0 0 0 0".into();
    lines[6] = "10\t12\t-1\t5".into();
    fs::write(&gt_path, lines.join("\n")).unwrap();
    let seq = load_sequence(dir.path()).unwrap();
    assert_eq!(seq.len(), 60);
    assert!(seq.ground_truth[5].is_none() && seq.ground_truth[6].is_none());
    let traj: Vec<BoundingBox> = seq.ground_truth.iter().map(|g| g.unwrap_or(seq.ground_truth[0].unwrap())).collect();
    let r = evaluate("x", &traj, &seq.ground_truth).unwrap();
    assert_eq!(r.evaluated_frames, 58);
    assert_eq!(r.auc, 1.0);
}

#[test]
fn malformed_sequences_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        load_sequence(dir.path()),
        Err(Error::Parse { kind: ParseErrorKind::MissingFile, .. })
    ));

    write_toy(dir.path(), ToyKind::Moving, 1).unwrap();
    let gt_path = dir.path().join("groundtruth_rect.txt");
    let text = fs::read_to_string(&gt_path).unwrap();
    fs::write(&gt_path, text.lines().take(59).collect::<Vec<_>>().join("\n")).unwrap();
    assert!(matches!(
        load_sequence(dir.path()),
        Err(Error::Parse { kind: ParseErrorKind::CountMismatch { ground_truth: 59, frames: 60 }, .. })
    ));

    let mut lines: Vec<&str> = text.lines().collect();
    lines[3] = "1,2,x,4";
    fs::write(&gt_path, lines.join("\n")).unwrap();
    match load_sequence(dir.path()) {
        Err(Error::Parse { line, kind: ParseErrorKind::NonNumeric(_), .. }) => assert_eq!(line, 4),
        other => panic!("{other:?}"),
    }
    lines[3] = "1,2,3";
    fs::write(&gt_path, lines.join("\n")).unwrap();
    assert!(matches!(
        load_sequence(dir.path()),
        Err(Error::Parse { kind: ParseErrorKind::WrongArity(3), .. })
    ));
}

#[test]
fn one_pass_evaluation_on_a_written_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let seq_dir = dir.path().join("moving");
    write_toy(&seq_dir, ToyKind::Moving, 7).unwrap();
    let seq = load_sequence(&seq_dir).unwrap();
    assert_eq!(seq.name, "moving");
    let result = run_ope(&TrackerConfig::default(), &seq, None).unwrap();
    assert_eq!(result.trajectory.len(), 60);
    assert_eq!(result.trajectory[0], seq.ground_truth[0].unwrap());
    assert!(result.mean_iou > 0.6);
    assert!(result.fps > 0.0);
}
