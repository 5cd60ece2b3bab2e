//! Exercises the C ABI end to end through the exported symbols.

use std::ffi::{CStr, CString};
use std::ptr;

use tact_ffi::*;

fn write_dataset(dir: &std::path::Path) {
    let triples = "\
a\tr0\tb
b\tr1\tc
c\tr0\td
d\tr1\ta
a\tr0\tc
b\tr0\td
";
    std::fs::write(dir.join("train.txt"), triples).unwrap();
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(tact_last_error()).to_string_lossy().into_owned() }
}

#[test]
fn version_is_non_empty() {
    let v = unsafe { CStr::from_ptr(tact_version()) };
    assert!(!v.to_bytes().is_empty());
}

#[test]
fn full_cycle_train_save_load_score_rank() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path());

    unsafe {
        let mut graph: *mut TactGraph = ptr::null_mut();
        let dir_c = c(dir.path().to_str().unwrap());
        assert_eq!(tact_graph_load_dir(dir_c.as_ptr(), &mut graph), TactStatus::Ok);
        assert_eq!(tact_graph_num_entities(graph), 4);
        assert_eq!(tact_graph_num_relations(graph), 2);
        assert_eq!(tact_graph_num_triples(graph), 6);

        let parts = c("ngr");
        let variant = c("full");
        let opts = TactTrainOptions {
            dim: 4,
            layers: 1,
            hops: 2,
            epochs: 2,
            batch_size: 4,
            n_neg: 1,
            lr: 0.01,
            margin: 2.0,
            rel_neg_prob: -1.0,
            seed: 3,
            parts: parts.as_ptr(),
            variant: variant.as_ptr(),
        };
        let mut model: *mut TactModel = ptr::null_mut();
        assert_eq!(tact_train(graph, &opts, &mut model), TactStatus::Ok);

        let ckpt_path = c(dir.path().join("model.json").to_str().unwrap());
        assert_eq!(tact_model_save(model, ckpt_path.as_ptr()), TactStatus::Ok);

        let mut reloaded: *mut TactModel = ptr::null_mut();
        assert_eq!(tact_model_load(ckpt_path.as_ptr(), &mut reloaded), TactStatus::Ok);

        let mut session: *mut TactSession = ptr::null_mut();
        assert_eq!(tact_session_create(reloaded, graph, &mut session), TactStatus::Ok);

        let (h, r, t) = (c("a"), c("r0"), c("b"));
        let mut score = f64::NAN;
        assert_eq!(
            tact_session_score(session, h.as_ptr(), r.as_ptr(), t.as_ptr(), &mut score),
            TactStatus::Ok
        );
        assert!(score.is_finite());

        // Scoring through a freshly trained handle and through the
        // save/load round trip must agree bit for bit.
        let mut session2: *mut TactSession = ptr::null_mut();
        assert_eq!(tact_session_create(model, graph, &mut session2), TactStatus::Ok);
        let mut score2 = f64::NAN;
        assert_eq!(
            tact_session_score(session2, h.as_ptr(), r.as_ptr(), t.as_ptr(), &mut score2),
            TactStatus::Ok
        );
        assert_eq!(score.to_bits(), score2.to_bits());

        let mut rank = 0.0;
        assert_eq!(
            tact_session_relation_rank(session, h.as_ptr(), r.as_ptr(), t.as_ptr(), &mut rank),
            TactStatus::Ok
        );
        assert!(rank >= 1.0);

        tact_session_free(session);
        tact_session_free(session2);
        tact_model_free(model);
        tact_model_free(reloaded);
        tact_graph_free(graph);
    }
}

#[test]
fn errors_set_status_and_message() {
    unsafe {
        let mut graph: *mut TactGraph = ptr::null_mut();
        let missing = c("/nonexistent/dataset");
        assert_eq!(
            tact_graph_load_dir(missing.as_ptr(), &mut graph),
            TactStatus::Io
        );
        assert!(last_error().contains("train.txt"));

        assert_eq!(
            tact_graph_load_dir(ptr::null(), &mut graph),
            TactStatus::NullArgument
        );

        let mut model: *mut TactModel = ptr::null_mut();
        assert_eq!(
            tact_train(ptr::null(), ptr::null(), &mut model),
            TactStatus::NullArgument
        );

        let bogus = c("/nonexistent/ckpt.json");
        assert_eq!(
            tact_model_load(bogus.as_ptr(), &mut model),
            TactStatus::Io
        );
    }
}

#[test]
fn unknown_names_report_vocab_errors() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path());
    unsafe {
        let mut graph: *mut TactGraph = ptr::null_mut();
        let dir_c = c(dir.path().to_str().unwrap());
        assert_eq!(tact_graph_load_dir(dir_c.as_ptr(), &mut graph), TactStatus::Ok);

        let mut model: *mut TactModel = ptr::null_mut();
        let opts = TactTrainOptions {
            dim: 4,
            layers: 1,
            hops: 2,
            epochs: 1,
            batch_size: 4,
            n_neg: 1,
            lr: 0.01,
            margin: 2.0,
            rel_neg_prob: -1.0,
            seed: 0,
            parts: ptr::null(),
            variant: ptr::null(),
        };
        assert_eq!(tact_train(graph, &opts, &mut model), TactStatus::Ok);

        let mut session: *mut TactSession = ptr::null_mut();
        assert_eq!(tact_session_create(model, graph, &mut session), TactStatus::Ok);

        let (h, r, t) = (c("a"), c("not_a_relation"), c("b"));
        let mut score = 0.0;
        assert_eq!(
            tact_session_score(session, h.as_ptr(), r.as_ptr(), t.as_ptr(), &mut score),
            TactStatus::Vocab
        );
        assert!(last_error().contains("not_a_relation"));

        tact_session_free(session);
        tact_model_free(model);
        tact_graph_free(graph);
    }
}
