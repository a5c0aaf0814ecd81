use derev_core::verify::{run_suite, CheckOutcome, Suite};

fn assert_all_pass(outcomes: &[CheckOutcome]) {
    assert!(!outcomes.is_empty());
    for o in outcomes {
        println!("{o}");
    }
    let failed: Vec<_> = outcomes.iter().filter(|o| !o.passed).collect();
    assert!(failed.is_empty(), "{failed:#?}");
}

#[test]
fn dsp_suite_passes() {
    assert_all_pass(&run_suite(Suite::Dsp));
}

#[test]
fn reverb_suite_passes() {
    assert_all_pass(&run_suite(Suite::Reverb));
}

#[test]
fn losses_suite_passes() {
    let out = run_suite(Suite::Losses);
    assert_eq!(out.len(), 4);
    assert_all_pass(&out);
}

#[test]
fn suite_names_parse() {
    for (s, want) in [
        ("gradcheck", Suite::Gradcheck),
        ("DSP", Suite::Dsp),
        ("reverb", Suite::Reverb),
        ("losses", Suite::Losses),
        ("all", Suite::All),
    ] {
        assert_eq!(s.parse::<Suite>().unwrap(), want);
    }
    assert!("everything".parse::<Suite>().is_err());
}
