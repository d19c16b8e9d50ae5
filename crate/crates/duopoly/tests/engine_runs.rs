//! End-to-end engine runs with scripted policies: stopping behavior,
//! simultaneity, schedules, and split-run determinism.

use std::path::Path;

use duopoly::detect::VerdictKind;
use duopoly::engine::{
    self, PhaseSchedule, ResumeOverrides, RunConfig, CHECKPOINT_FILE, ROUNDS_FILE,
    STRATEGIES_FILE, TRANSCRIPTS_FILE,
};
use duopoly::market::{derive_market, profit};
use duopoly::policy::{Policy, PolicySpec};
use duopoly::runlog::{read_jsonl, RunLogLine, TranscriptLogLine};

fn read_rounds(dir: &Path) -> Vec<RunLogLine> {
    read_jsonl(&dir.join(ROUNDS_FILE)).unwrap()
}

#[test]
fn constant_pair_stops_at_the_first_full_window() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = RunConfig::new(
        "constant-pair",
        (PolicySpec::constant(7.0), PolicySpec::constant(7.0)),
    );
    config.max_rounds = 500;
    let result = engine::run(&config, dir.path()).unwrap();
    assert_eq!(result.rounds_executed, 400);
    for verdict in &result.verdicts {
        assert_eq!(verdict.kind, VerdictKind::Converged { center: 7.0 });
        assert_eq!(verdict.evaluated_at, 400);
    }
    assert_eq!(result.collusion.unwrap().formed_at, Some(100));
    let lines = read_rounds(dir.path());
    assert_eq!(lines.len(), 800);
}

#[test]
fn myopic_pair_converges_to_the_equilibrium() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = RunConfig::new(
        "myopic-pair",
        (PolicySpec::myopic(), PolicySpec::myopic()),
    );
    config.max_rounds = 600;
    let result = engine::run(&config, dir.path()).unwrap();
    assert!(result.rounds_executed <= 450);
    for verdict in &result.verdicts {
        match verdict.kind {
            VerdictKind::Converged { center } => assert!((center - 6.0).abs() < 1e-3),
            other => panic!("expected convergence, got {other:?}"),
        }
    }
    for line in read_rounds(dir.path()) {
        if line.round >= 50 {
            assert!(
                (line.price - 6.0).abs() < 1e-3,
                "round {} price {}",
                line.round,
                line.price
            );
        }
    }
}

#[test]
fn grim_trigger_pair_holds_the_cartel_price() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = RunConfig::new(
        "grim-pair",
        (
            PolicySpec::grim_trigger(8.0, 6.0, 0.2),
            PolicySpec::grim_trigger(8.0, 6.0, 0.2),
        ),
    );
    config.initial_prices = (8.0, 8.0);
    config.max_rounds = 500;
    let result = engine::run(&config, dir.path()).unwrap();
    assert_eq!(result.rounds_executed, 400);
    for verdict in &result.verdicts {
        assert_eq!(verdict.kind, VerdictKind::Converged { center: 8.0 });
    }
    let market = derive_market(config.market).unwrap();
    for line in read_rounds(dir.path()) {
        assert_eq!(line.price, 8.0);
        assert!((line.profit - 3600.0).abs() < 1e-9);
        let out = profit(&market, line.price, line.rival_price);
        let recomputed = if line.firm == 1 { out.pi1 } else { out.pi2 };
        assert!((recomputed - line.profit).abs() < 1e-9);
    }
}

#[test]
fn grim_trigger_punishes_a_constant_defector() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = RunConfig::new(
        "grim-vs-constant",
        (
            PolicySpec::grim_trigger(8.0, 6.0, 0.2),
            PolicySpec::constant(6.0),
        ),
    );
    config.initial_prices = (8.0, 8.0);
    config.max_rounds = 450;
    engine::run(&config, dir.path()).unwrap();
    let lines = read_rounds(dir.path());
    let firm1: Vec<&RunLogLine> = lines.iter().filter(|l| l.firm == 1).collect();
    assert_eq!(firm1[0].price, 8.0, "no trigger before the defection is seen");
    for line in &firm1[1..] {
        assert_eq!(line.price, 6.0, "round {} should punish", line.round);
    }
}

/// Swapping which slot a policy occupies (with mirrored costs and
/// initial prices) must mirror the logs exactly: neither agent can see
/// the other's current-round choice.
#[test]
fn decision_order_does_not_leak_information() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let mut config_a = RunConfig::new(
        "mirror-a",
        (
            PolicySpec::grim_trigger(8.0, 6.0, 0.2),
            PolicySpec::myopic(),
        ),
    );
    config_a.initial_prices = (8.0, 3.0);
    config_a.max_rounds = 120;
    let mut config_b = RunConfig::new(
        "mirror-a",
        (
            PolicySpec::myopic(),
            PolicySpec::grim_trigger(8.0, 6.0, 0.2),
        ),
    );
    config_b.initial_prices = (3.0, 8.0);
    config_b.max_rounds = 120;

    engine::run(&config_a, dir_a.path()).unwrap();
    engine::run(&config_b, dir_b.path()).unwrap();
    let a = read_rounds(dir_a.path());
    let b = read_rounds(dir_b.path());
    assert_eq!(a.len(), b.len());
    for (round_a, round_b) in a.chunks(2).zip(b.chunks(2)) {
        // Firm 1 in run A plays the role firm 2 plays in run B.
        for (line_a, line_b) in [(&round_a[0], &round_b[1]), (&round_a[1], &round_b[0])] {
            assert_eq!(line_a.round, line_b.round);
            assert_eq!(line_a.firm, 3 - line_b.firm);
            assert_eq!(line_a.price, line_b.price);
            assert_eq!(line_a.demand, line_b.demand);
            assert_eq!(line_a.profit, line_b.profit);
            assert_eq!(line_a.rival_price, line_b.rival_price);
        }
    }
}

fn q_learning_config(run_id: &str, rounds: u32) -> RunConfig {
    let mut config = RunConfig::new(
        run_id,
        (PolicySpec::q_learning(), PolicySpec::q_learning()),
    );
    config.seed = 42;
    config.max_rounds = rounds;
    config
}

#[test]
fn split_runs_reproduce_the_uninterrupted_log_byte_for_byte() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let split: u32 = rng.gen_range(50..550);
        let full_dir = tempfile::tempdir().unwrap();
        let mut config = q_learning_config("split-run", 600);
        config.checkpoint_at = Some(split);
        let full = engine::run(&config, full_dir.path()).unwrap();
        assert_eq!(full.rounds_executed, 600, "run must not stop early");

        let resume_dir = tempfile::tempdir().unwrap();
        let checkpoint = full_dir.path().join(format!("checkpoint-{split:06}.json"));
        engine::resume(&checkpoint, &ResumeOverrides::default(), resume_dir.path()).unwrap();

        for file in [ROUNDS_FILE, STRATEGIES_FILE] {
            let full_text = std::fs::read_to_string(full_dir.path().join(file)).unwrap();
            let tail_text = std::fs::read_to_string(resume_dir.path().join(file)).unwrap();
            let prefix: String = full_text
                .lines()
                .filter(|line| {
                    let parsed: serde_json::Value = serde_json::from_str(line).unwrap();
                    parsed["round"].as_u64().unwrap() <= split as u64
                })
                .map(|line| format!("{line}\n"))
                .collect();
            let stitched = format!("{prefix}{tail_text}");
            assert_eq!(
                stitched, full_text,
                "{file} differs for split at round {split}"
            );
        }
    }
}

/// A straight run with a mid-run schedule flip equals checkpointing at
/// the flip and resuming with the flipped schedule.
#[test]
fn scheduled_flip_equals_checkpoint_resume() {
    // Straight run: discussion enabled for rounds 1..=400, off after.
    let straight_dir = tempfile::tempdir().unwrap();
    let mut straight = q_learning_config("comm-ablation", 600);
    straight.conversation = PhaseSchedule::switch_after(400, true);
    engine::run(&straight, straight_dir.path()).unwrap();

    // Same protocol via checkpoint + resume with overrides.
    let first_dir = tempfile::tempdir().unwrap();
    let mut first = q_learning_config("comm-ablation", 400);
    first.conversation = PhaseSchedule::always(true);
    engine::run(&first, first_dir.path()).unwrap();
    let resume_dir = tempfile::tempdir().unwrap();
    let overrides = ResumeOverrides {
        conversation: Some(PhaseSchedule::switch_after(400, true)),
        max_rounds: Some(600),
        ..ResumeOverrides::default()
    };
    engine::resume(
        &first_dir.path().join(CHECKPOINT_FILE),
        &overrides,
        resume_dir.path(),
    )
    .unwrap();

    let straight_lines = read_rounds(straight_dir.path());
    let mut stitched = read_rounds(first_dir.path());
    stitched.extend(read_rounds(resume_dir.path()));
    // Run ids and schedules match; logs must agree line by line.
    assert_eq!(straight_lines.len(), stitched.len());
    for (a, b) in straight_lines.iter().zip(&stitched) {
        assert_eq!(a, b);
    }
    // Phase markers flip exactly at the boundary.
    for line in &straight_lines {
        assert_eq!(line.conversed, line.round <= 400);
    }
}

#[test]
fn planning_enabled_mid_run_reflects_at_the_next_period_multiple() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = q_learning_config("planning-ablation", 200);
    config.planning = PhaseSchedule::switch_after(100, false);
    engine::run(&config, dir.path()).unwrap();
    let lines = read_rounds(dir.path());
    for line in &lines {
        let expected = line.round > 100 && line.round % 20 == 0;
        assert_eq!(
            line.reflected, expected,
            "round {} reflected marker",
            line.round
        );
    }
    // Q-learning reflections produce strategy digests on those rounds.
    assert!(lines
        .iter()
        .any(|l| l.round == 120 && l.strategy_digest.is_some()));
    assert!(lines
        .iter()
        .all(|l| l.round != 100 || l.strategy_digest.is_none()));
}

#[test]
fn echo_pair_exchanges_three_pairs_per_round() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = RunConfig::new(
        "echo-pair",
        (PolicySpec::constant(7.0), PolicySpec::constant(7.0)),
    );
    config.conversation = PhaseSchedule::always(true);
    config.max_rounds = 2;
    let policies = [
        Policy::Echo {
            price: 7.0,
            opener: "hello from one".to_string(),
        },
        Policy::Echo {
            price: 7.0,
            opener: "hello from two".to_string(),
        },
    ];
    engine::run_with_policies(&config, policies, dir.path()).unwrap();
    let transcripts: Vec<TranscriptLogLine> =
        read_jsonl(&dir.path().join(TRANSCRIPTS_FILE)).unwrap();
    assert_eq!(transcripts.len(), 2);
    for t in &transcripts {
        assert_eq!(t.messages.len(), 6, "three pairs then the cap");
    }
    // The initiator alternates with round parity.
    assert_eq!(transcripts[0].messages[0].speaker, "Ed");
    assert_eq!(transcripts[0].messages[0].text, "hello from one");
    assert_eq!(transcripts[1].messages[0].speaker, "Gill");
    assert_eq!(transcripts[1].messages[0].text, "hello from two");
}

#[test]
fn declined_turn_ends_the_discussion() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = RunConfig::new(
        "echo-vs-mute",
        (PolicySpec::constant(7.0), PolicySpec::constant(7.0)),
    );
    config.conversation = PhaseSchedule::always(true);
    config.max_rounds = 2;
    let policies = [
        Policy::Constant { price: 7.0 },
        Policy::Echo {
            price: 7.0,
            opener: "anyone there?".to_string(),
        },
    ];
    engine::run_with_policies(&config, policies, dir.path()).unwrap();
    let transcripts: Vec<TranscriptLogLine> =
        read_jsonl(&dir.path().join(TRANSCRIPTS_FILE)).unwrap();
    // Round 1: the mute firm initiates and declines; nothing is said.
    // Round 2: the echo firm opens, the mute firm declines the reply.
    assert_eq!(transcripts.len(), 1);
    assert_eq!(transcripts[0].round, 2);
    assert_eq!(transcripts[0].messages.len(), 1);
    assert_eq!(transcripts[0].messages[0].text, "anyone there?");
}

#[test]
fn mute_agents_leave_no_transcript_lines() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = RunConfig::new(
        "mute-conversation",
        (PolicySpec::constant(7.0), PolicySpec::constant(7.0)),
    );
    config.conversation = PhaseSchedule::always(true);
    config.max_rounds = 5;
    engine::run(&config, dir.path()).unwrap();
    let transcripts: Vec<TranscriptLogLine> =
        read_jsonl(&dir.path().join(TRANSCRIPTS_FILE)).unwrap();
    assert!(transcripts.is_empty());
    // But the phase marker still records that the phase was scheduled.
    assert!(read_rounds(dir.path()).iter().all(|l| l.conversed));
}

#[test]
fn resume_rejects_out_of_whitelist_changes() {
    let original = RunConfig::new(
        "whitelist",
        (PolicySpec::constant(7.0), PolicySpec::constant(7.0)),
    );
    let mut changed = original.clone();
    changed.market.c2 = 5.0;
    assert!(ResumeOverrides::from_config_diff(&original, &changed).is_err());

    let mut allowed = original.clone();
    allowed.max_rounds = 700;
    allowed.conversation = PhaseSchedule::always(true);
    let overrides = ResumeOverrides::from_config_diff(&original, &allowed).unwrap();
    assert_eq!(overrides.max_rounds, Some(700));
    assert!(overrides.conversation.is_some());
    assert!(overrides.planning.is_none());
    assert!(overrides.io_mode.is_none());
}

#[test]
fn locked_run_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join(".lock"), "").unwrap();
    let config = RunConfig::new(
        "locked",
        (PolicySpec::constant(7.0), PolicySpec::constant(7.0)),
    );
    let err = engine::run(&config, dir.path()).err().unwrap();
    assert!(matches!(err, engine::EngineError::Locked(_)));
}

#[test]
fn corrupted_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = RunConfig::new(
        "corrupt",
        (PolicySpec::constant(7.0), PolicySpec::constant(7.0)),
    );
    config.max_rounds = 10;
    engine::run(&config, dir.path()).unwrap();
    let path = dir.path().join(CHECKPOINT_FILE);
    let text = std::fs::read_to_string(&path).unwrap();
    // Flip one history price inside the body.
    let tampered = text.replacen("7.0", "7.1", 1);
    assert_ne!(text, tampered);
    std::fs::write(&path, tampered).unwrap();
    let err = engine::resume(&path, &ResumeOverrides::default(), dir.path())
        .err()
        .unwrap();
    assert!(matches!(err, engine::EngineError::ChecksumMismatch));
}

#[test]
fn hard_stop_caps_a_run_at_two_thousand_rounds() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = q_learning_config("hard-stop", 2600);
    // Loosen nothing: the learner's exploration keeps prices wild enough
    // that neither stationarity test fires.
    config.max_rounds = 2600;
    let result = engine::run(&config, dir.path()).unwrap();
    assert_eq!(result.rounds_executed, 2000);
}
