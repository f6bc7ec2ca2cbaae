use std::collections::{BTreeMap, BTreeSet};

use attend_core::analysis::graded;
use attend_core::io::{parse_dataset, write_dataset, ParseOptions};
use attend_core::model::ParticipantId;
use attend_core::peer::{build_social_network, peer_trend, PeerStatistic};
use attend_core::score::{score_against_truth, PipelineView};
use attend_core::stats::{self, PerformanceGroup};
use attend_core::{generate, run_pipeline, PipelineConfig, SimConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small(seed: u64) -> SimConfig {
    SimConfig {
        seed,
        n_students: 100,
        n_courses: 5,
        courses_per_student: 2,
        weeks: 4,
        ..SimConfig::default()
    }
}

#[test]
fn emitted_files_reparse_strictly_and_give_the_same_matrix() {
    let sim = generate(&small(1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &sim.dataset).unwrap();
    let options = ParseOptions {
        strict: true,
        weeks: 4,
        window: None,
    };
    let (parsed, report) = parse_dataset(dir.path(), &options).unwrap();
    assert!(report.rejected.is_empty());
    assert_eq!(parsed.fixes.len(), sim.dataset.fixes.len());
    assert_eq!(parsed.scans.len(), sim.dataset.scans.len());
    assert_eq!(parsed.grades, sim.dataset.grades);
    let config = PipelineConfig::default();
    let a = run_pipeline(&sim.dataset, &config).unwrap();
    let b = run_pipeline(&parsed, &config).unwrap();
    assert_eq!(a.matrix, b.matrix);
}

#[test]
fn more_gps_noise_never_helps_location() {
    let mut worse = 0;
    for seed in 0..20 {
        let mean_error = |gps_sigma: f64| {
            let sim = generate(&SimConfig { gps_sigma, ..small(seed) }).unwrap();
            let out = run_pipeline(&sim.dataset, &PipelineConfig::default()).unwrap();
            let errors = attend_core::pipeline::evaluate_accuracy(&out.estimates).unwrap().distances;
            stats::mean(&errors).unwrap()
        };
        worse += usize::from(mean_error(100.0) >= mean_error(25.0));
    }
    assert!(worse >= 19, "{worse}/20");
}

#[test]
fn shuffled_attendees_fall_to_the_base_rate() {
    let sim = generate(&small(4)).unwrap();
    let out = run_pipeline(&sim.dataset, &PipelineConfig::default()).unwrap();
    let locations = out.location_table();
    let original = out.attendee_table();
    let mut attendees = original.clone();
    let matrix = out.matrix.clone();

    let view = |attendees| PipelineView {
        source_run_id: &sim.truth.run_id,
        locations: &locations,
        attendees,
        matrix: &matrix,
    };
    let honest = score_against_truth(view(&original), &sim.truth).unwrap();

    // Replace each bin's attendees by a random roster subset of the same size.
    let rosters: BTreeMap<_, Vec<ParticipantId>> = sim
        .dataset
        .rosters
        .iter()
        .map(|r| (r.course.clone(), r.participants.iter().cloned().collect()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for ((session, _), people) in attendees.iter_mut() {
        let k = people.len();
        let roster = &rosters[&session.course];
        *people = roster.choose_multiple(&mut rng, k).cloned().collect::<BTreeSet<_>>();
    }
    let shuffled = score_against_truth(view(&attendees), &sim.truth).unwrap();

    let present: usize = sim.truth.tables.presence.values().flat_map(|p| p.values()).flatten().filter(|&&b| b).count();
    let slots: usize = sim.truth.tables.presence.values().flat_map(|p| p.values()).map(Vec::len).sum();
    let base = present as f64 / slots as f64;
    assert!(honest.precision > 0.99);
    assert!((shuffled.precision - base).abs() < 0.03, "{} vs {base}", shuffled.precision);
    assert!(shuffled.recall < honest.recall - 0.1);
}

#[test]
fn homophilous_peer_trends_keep_low_performers_below() {
    let (mut below, mut weeks) = (0, 0);
    for seed in 0..20 {
        let sim = generate(&SimConfig {
            seed,
            homophily: 0.8,
            ..SimConfig::default()
        })
        .unwrap();
        let out = run_pipeline(&sim.dataset, &PipelineConfig::default()).unwrap();
        let net = build_social_network(&sim.dataset.messages);
        let trend = peer_trend(&out.matrix, &net, &graded(&sim.dataset.grades), false, PeerStatistic::Mean);
        let low = &trend[&PerformanceGroup::Low];
        let high = &trend[&PerformanceGroup::High];
        for (l, h) in low.iter().zip(high) {
            assert_eq!(l.week, h.week);
            weeks += 1;
            below += usize::from(l.mean < h.mean);
        }
    }
    let share = below as f64 / weeks as f64;
    assert!(share >= 0.8, "{below}/{weeks}");
}

#[test]
fn simulated_network_reaches_target_degree_and_grade_shares() {
    let sim = generate(&SimConfig {
        seed: 2,
        n_students: 2000,
        n_courses: 20,
        weeks: 1,
        no_show_prob: 0.0,
        ..SimConfig::default()
    })
    .unwrap();
    let net = build_social_network(&sim.dataset.messages);
    let per_student = 2.0 * net.edge_count() as f64 / 2000.0;
    assert!((per_student - 4.4).abs() < 0.01, "{per_student}");
    let grades = graded(&sim.dataset.grades);
    let n = grades.len() as f64;
    let share = |g: PerformanceGroup| grades.values().filter(|&&x| PerformanceGroup::of(x) == g).count() as f64 / n;
    assert!((share(PerformanceGroup::Low) - 0.22).abs() < 0.02);
    assert!((share(PerformanceGroup::Moderate) - 0.41).abs() < 0.02);
    assert!((share(PerformanceGroup::High) - 0.37).abs() < 0.02);
}
