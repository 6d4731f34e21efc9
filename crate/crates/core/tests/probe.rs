//! Throwaway calibration probe — not part of the suite; deleted after use.

use std::path::Path;

use revgen_core::checkpoint::Snapshot;
use revgen_core::data::{load_mnist_split, Dataset};
use revgen_core::eval::{effective_dims, generate_class_samples, train_classifier, Classifier};
use revgen_core::training::{load_ot_model, stream, STREAM_EVAL, STREAM_INIT};
use revgen_core::Rng;

#[test]
#[ignore]
fn probe_cal7a() {
    let ckpt = std::env::var("PROBE_CKPT").unwrap_or("/tmp/cal7a/ckpt-final.rgck".into());
    let snap = Snapshot::load(Path::new(&ckpt)).unwrap();
    let (_, net, priors) = load_ot_model(&snap).unwrap();
    let dims = effective_dims(&priors, 0.01);
    println!("effective dims per class @0.01: {dims:?}");
    for (c, cp) in priors.classes.iter().enumerate() {
        let mut s: Vec<f64> = cp.std().data().iter().map(|&v| v as f64).collect();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        println!(
            "class {c}: std max {:.4} p8 {:.4} p64 {:.4} median {:.4} min {:.4}",
            s[0],
            s[7],
            s[63],
            s[s.len() / 2],
            s[s.len() - 1]
        );
    }

    if std::env::var("PROBE_STDS_ONLY").is_ok() {
        return;
    }
    let mnist = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist");
    let test: Dataset<f32> = load_mnist_split(&mnist, false).unwrap();
    let all: Vec<usize> = (0..test.len()).collect();
    let xs = test.gather_images(&all).unwrap();
    let ys = test.labels.as_ref().unwrap();
    let [_, ic, ih, iw] = xs.dims4().unwrap();
    let mut judge =
        Classifier::<f32>::new(&mut Rng::new(0x77).split2(STREAM_INIT, 0), ic * ih * iw, 10);
    let mut jrng = Rng::new(0x77).split2(STREAM_INIT, 1);
    let loss = train_classifier(&mut judge, &xs, ys, 12, 64, &mut jrng).unwrap();
    let jacc = judge.accuracy(&xs, ys).unwrap();
    println!("judge: loss {loss:.4}, accuracy on its own split {jacc:.4}");

    let per_class = 50;
    let mut per = Vec::new();
    let mut hits = 0usize;
    for (c, cp) in priors.classes.iter().enumerate() {
        let gen =
            generate_class_samples(&net, cp, &mut stream(0x78, STREAM_EVAL, c), per_class).unwrap();
        let preds = judge.predict(&gen).unwrap();
        let h = preds.iter().filter(|&&p| p == c).count();
        per.push(h);
        hits += h;
    }
    println!("per-class hits/{per_class}: {per:?}");
    println!("assignment accuracy: {:.3}", hits as f64 / 500.0);
}
