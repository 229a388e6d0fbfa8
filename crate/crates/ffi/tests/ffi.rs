//! Exercises the C ABI through the exported functions, as a C caller would.

use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use vie_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(vie_last_error()) }.to_string_lossy().into_owned()
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn generate(n: usize, rate: f64, seed: u64) -> *mut VieDataset {
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { vie_dataset_generate(c("longtailed").as_ptr(), n, rate, seed, &mut d) }, VieStatus::Ok);
    d
}

fn features(d: *const VieDataset) -> Vec<f64> {
    let len = unsafe { vie_dataset_rows(d) * vie_dataset_cols(d) };
    let mut x = vec![0.0; len];
    assert_eq!(unsafe { vie_dataset_features(d, x.as_mut_ptr(), len) }, VieStatus::Ok);
    x
}

fn labels(d: *const VieDataset) -> Vec<u32> {
    let n = unsafe { vie_dataset_rows(d) };
    let mut y = vec![0; n];
    assert_eq!(unsafe { vie_dataset_labels(d, y.as_mut_ptr(), n) }, VieStatus::Ok);
    y
}

fn predict(m: *const VieModel, x: &[f64], cols: usize, seed: u64) -> (VieStatus, Vec<f64>) {
    let rows = x.len() / cols;
    let k = unsafe { vie_model_classes(m) };
    let mut out = vec![0.0; rows * k];
    let s = unsafe { vie_model_predict_proba(m, x.as_ptr(), rows, cols, seed, 1, out.as_mut_ptr(), out.len()) };
    (s, out)
}

#[test]
fn dataset_handles_round_trip() {
    let d = generate(1000, 0.05, 2);
    unsafe {
        assert_eq!(vie_dataset_rows(d), 1000);
        assert_eq!(vie_dataset_cols(d), 8);
        let mut rate = 0.0;
        assert_eq!(vie_dataset_event_rate(d, &mut rate), VieStatus::Ok);
        assert!((rate - 0.05).abs() < 1e-12);

        let (mut tr, mut va, mut te) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
        assert_eq!(vie_dataset_split(d, 0, &mut tr, &mut va, &mut te), VieStatus::Ok);
        assert_eq!(vie_dataset_rows(tr) + vie_dataset_rows(va) + vie_dataset_rows(te), 1000);

        let dir = tempfile::tempdir().unwrap();
        let path = c(dir.path().join("d.csv").to_str().unwrap());
        assert_eq!(vie_dataset_write_csv(te, path.as_ptr()), VieStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(vie_dataset_read_csv(path.as_ptr(), &mut back), VieStatus::Ok);
        assert_eq!(features(back), features(te));
        assert_eq!(labels(back), labels(te));

        let x = [0.5, 1.0, -2.0, 3.0];
        let y = [0u32, 1];
        let mut small = ptr::null_mut();
        assert_eq!(vie_dataset_from_arrays(x.as_ptr(), 2, 2, y.as_ptr(), &mut small), VieStatus::Ok);
        assert_eq!(features(small), x);

        for h in [d, tr, va, te, back, small] {
            vie_dataset_free(h);
        }
        vie_dataset_free(ptr::null_mut());
    }
}

#[test]
fn train_predict_save_load() {
    let d = generate(1500, 0.05, 4);
    unsafe {
        let (mut tr, mut va, mut te) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
        assert_eq!(vie_dataset_split(d, 1, &mut tr, &mut va, &mut te), VieStatus::Ok);
        let config = c("epochs = 1\nmax_iterations = 3\nbins = 10\n# comment\nseed = 5");
        let mut m = ptr::null_mut();
        let s = vie_model_train(tr, va, c("vie").as_ptr(), config.as_ptr(), &mut m);
        assert_eq!(s, VieStatus::Ok, "{}", last_error());
        assert_eq!(last_error(), "");
        assert_eq!(vie_model_input_dim(m), 8);
        assert_eq!(vie_model_classes(m), 2);

        let x = features(te);
        let (s, p) = predict(m, &x, 8, 9);
        assert_eq!(s, VieStatus::Ok);
        assert!(p.chunks(2).all(|r| (r[0] + r[1] - 1.0).abs() < 1e-12 && r[1] > 0.0 && r[1] < 1.0));
        assert_eq!(predict(m, &x, 8, 9).1, p, "same seed, same predictions");

        let dir = tempfile::tempdir().unwrap();
        let path = c(dir.path().join("m.ckpt").to_str().unwrap());
        assert_eq!(vie_model_save(m, path.as_ptr()), VieStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(vie_model_load(path.as_ptr(), &mut back), VieStatus::Ok);
        assert_eq!(predict(back, &x, 8, 9).1, p);

        let risk: Vec<f64> = p.chunks(2).map(|r| r[1]).collect();
        let y = labels(te);
        let mut auc = f64::NAN;
        assert_eq!(vie_roc_auc(risk.as_ptr(), y.as_ptr(), y.len(), &mut auc), VieStatus::Ok);
        let y_usize: Vec<usize> = y.iter().map(|&l| l as usize).collect();
        assert_eq!(auc, vie::metrics::roc_auc(&risk, &y_usize).unwrap());
        let mut ap = f64::NAN;
        assert_eq!(vie_auprc(risk.as_ptr(), y.as_ptr(), y.len(), &mut ap), VieStatus::Ok);
        assert!(ap > 0.0 && ap <= 1.0);

        for h in [m, back] {
            vie_model_free(h);
        }
        for h in [d, tr, va, te] {
            vie_dataset_free(h);
        }
    }
}

#[test]
fn status_codes_and_messages() {
    unsafe {
        let mut d = ptr::null_mut();
        assert_eq!(vie_dataset_generate(ptr::null(), 10, 0.1, 0, &mut d), VieStatus::NullPointer);
        assert!(last_error().contains("null"));
        assert_eq!(vie_dataset_generate(c("nope").as_ptr(), 10, 0.1, 0, &mut d), VieStatus::Contract);
        assert!(last_error().contains("unknown generator"));
        assert_eq!(vie_dataset_generate(c("longtailed").as_ptr(), 10, 1.5, 0, &mut d), VieStatus::Contract);
        assert!(d.is_null());

        let bad = [0xffu8, 0];
        assert_eq!(vie_dataset_read_csv(bad.as_ptr().cast(), &mut d), VieStatus::InvalidUtf8);
        assert_eq!(vie_dataset_read_csv(c("/no/such/file.csv").as_ptr(), &mut d), VieStatus::Io);

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "x0,y\n1.0,notalabel\n").unwrap();
        assert_eq!(vie_dataset_read_csv(c(p.to_str().unwrap()).as_ptr(), &mut d), VieStatus::Parse);
        let ckpt = dir.path().join("bad.ckpt");
        std::fs::write(&ckpt, "garbage\n").unwrap();
        let mut m = ptr::null_mut();
        assert_eq!(vie_model_load(c(ckpt.to_str().unwrap()).as_ptr(), &mut m), VieStatus::Parse);

        let data = generate(500, 0.1, 1);
        let (mut tr, mut va, mut te) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
        assert_eq!(vie_dataset_split(data, 0, &mut tr, &mut va, &mut te), VieStatus::Ok);
        assert_eq!(vie_model_train(tr, va, c("bogus").as_ptr(), ptr::null(), &mut m), VieStatus::Contract);
        assert_eq!(vie_model_train(tr, va, c("vae").as_ptr(), c("epochs = x").as_ptr(), &mut m), VieStatus::Contract);
        assert_eq!(vie_model_train(tr, va, c("vae").as_ptr(), c("no_such_key = 1").as_ptr(), &mut m), VieStatus::Contract);
        let config = c("epochs = 1\nmax_iterations = 1");
        assert_eq!(vie_model_train(tr, va, c("vae").as_ptr(), config.as_ptr(), &mut m), VieStatus::Ok);

        let x = [0.0; 6];
        assert_eq!(predict(m, &x, 3, 0).0, VieStatus::Mismatch);
        assert!(last_error().contains("expects 8 features"));
        let mut short = [0.0; 1];
        let xs = features(te);
        let s = vie_model_predict_proba(m, xs.as_ptr(), vie_dataset_rows(te), 8, 0, 1, short.as_mut_ptr(), 1);
        assert_eq!(s, VieStatus::Contract);
        let mut out = vec![0.0; 2 * vie_dataset_rows(te)];
        let s = vie_model_predict_proba(m, xs.as_ptr(), vie_dataset_rows(te), 8, 0, 0, out.as_mut_ptr(), out.len());
        assert_eq!(s, VieStatus::Contract);

        let mut auc = 0.0;
        assert_eq!(vie_roc_auc([0.1, 0.2].as_ptr(), [1u32, 1].as_ptr(), 2, &mut auc), VieStatus::Contract);
        assert_eq!(vie_model_input_dim(ptr::null()), 0);
        assert_eq!(vie_dataset_rows(ptr::null()), 0);

        vie_model_free(m);
        for h in [data, tr, va, te] {
            vie_dataset_free(h);
        }
        assert!(!CStr::from_ptr(vie_version()).to_str().unwrap().is_empty());
    }
}

#[test]
fn generated_header_declares_the_api_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/vie.h");
    let text = std::fs::read_to_string(&header).expect("build script writes include/vie.h");
    for name in [
        "typedef struct VieDataset VieDataset",
        "typedef struct VieModel VieModel",
        "VIE_STATUS_OK = 0",
        "VIE_STATUS_PANIC = 9",
        "vie_model_predict_proba",
        "vie_dataset_generate",
        "vie_last_error",
        "vie_auprc",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    // a C translation unit including the header must type-check
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"vie.h\"\nint main(void) { VieDataset *d = 0; VieStatus s = vie_dataset_generate(\"longtailed\", 10, 0.1, 0, &d);\n\
         vie_dataset_free(d); return s == VIE_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    match Command::new("cc").arg("-fsyntax-only").arg("-Wall").arg("-Werror").arg("-I").arg(header.parent().unwrap()).arg(&src).output() {
        Ok(o) => assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr)),
        Err(e) => eprintln!("skipping C syntax check: no C compiler ({e})"),
    }
}
