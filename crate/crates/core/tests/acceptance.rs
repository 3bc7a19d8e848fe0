//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the criteria share the
//! synthesized sequences instead of regenerating them per test.

use std::path::Path;
use std::time::Instant;

use dsm_core::codec::{self, CompressionSpec};
use dsm_core::estimators::{self, ActivityMap};
use dsm_core::frames::FrameSequence;
use dsm_core::metrics::{self, Roi, SsimParams};
use dsm_core::pipeline::{self, TreeManifest};
use dsm_core::rng::CounterRng;
use dsm_core::scenario::ScenarioConfig;
use dsm_core::synth::{self, SynthesisConfig, TauField};
use ndarray::{Array2, Array3, ArrayView3};

const SIZE: usize = 256;
const N_FRAMES: usize = 256;
const LAG: usize = 10;
const CONSTANT_SEED: u64 = 20_200_901;
const LOGOS_SEED: u64 = 31_415;
const GAUSSIAN_SEED: u64 = 27_182;
const SERIES_SEED: u64 = 16_180;

/// Pilot-derived discrimination threshold for logo vs background S1.
const REGION_CONTRAST_MIN: f64 = 1.3;

const REFERENCE_JPG_SSI: [(u8, f64); 3] = [(70, 0.955), (30, 0.783), (10, 0.503)];
const REFERENCE_JP2_SSI: [(f64, f64); 3] = [(2.0, 0.992), (3.0, 0.925), (6.0, 0.639)];
const SSI_TOLERANCE: f64 = 0.15;

struct Outcome {
    id: usize,
    pass: bool,
    detail: String,
}

fn report(id: usize, pass: bool, detail: String) -> Outcome {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("criterion {id:>2}: {tag}  {detail}");
    Outcome { id, pass, detail }
}

// ---- criterion 1: brute-force reference loops -----------------------------

fn series(stack: &Array3<f64>, r: usize, c: usize) -> Vec<f64> {
    (0..stack.dim().0).map(|i| stack[[i, r, c]]).collect()
}

fn brute_mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mut mean = 0.0;
    for v in x {
        mean += v;
    }
    mean /= n;
    let mut var = 0.0;
    for v in x {
        var += (v - mean) * (v - mean);
    }
    (mean, var / n)
}

fn brute_s1(x: &[f64], m: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len() - m {
        s += (x[i] - x[i + m]).abs();
    }
    s / (x.len() - m) as f64
}

fn brute_s2(x: &[f64], m: usize, q: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len() - m {
        let den = x[i] + x[i + m] + q;
        if den != 0.0 {
            s += (x[i] - x[i + m]).abs() / den;
        }
    }
    s / (x.len() - m) as f64
}

fn brute_rho(stack: &Array3<f64>, m: usize) -> f64 {
    let (n, h, w) = stack.dim();
    let mut total = 0.0;
    let mut count = 0;
    for r in 0..h {
        for c in 0..w {
            let x = series(stack, r, c);
            let (mean, var) = brute_mean_var(&x);
            if var < 1e-12 {
                continue;
            }
            let mut s = 0.0;
            for i in 0..n - m {
                s += (x[i] - mean) * (x[i + m] - mean);
            }
            total += s / var / (n - m) as f64;
            count += 1;
        }
    }
    total / count as f64
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let rng = CounterRng::new(1);
    let mut worst = 0.0f64;
    let mut checks = 0usize;
    let mut track = |a: f64, b: f64| {
        let d = (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
        if a != b {
            worst = worst.max(d);
        }
        checks += 1;
    };
    for trial in 0..200u64 {
        let base = trial * 1000;
        let stack = Array3::from_shape_fn((8, 4, 4), |(i, r, c)| {
            (rng.uniform(base + (i * 16 + r * 4 + c) as u64) * 256.0).floor()
        });
        let view: ArrayView3<f64> = stack.view();
        let stats = estimators::pixel_stats_stack(view).unwrap();
        for m in 1..8 {
            let s1 = estimators::msf_s1_stack(view, m).unwrap();
            let s2 = estimators::msf_s2_stack(view, m, 1.0).unwrap();
            let s1n = estimators::msf_s1_norm_stack(view, m).unwrap();
            for r in 0..4 {
                for c in 0..4 {
                    let x = series(&stack, r, c);
                    let (mean, var) = brute_mean_var(&x);
                    track(s1.values[[r, c]], brute_s1(&x, m));
                    track(s2.values[[r, c]], brute_s2(&x, m, 1.0));
                    let sn = if var.sqrt() < 1e-12 { 0.0 } else { brute_s1(&x, m) / var.sqrt() };
                    track(s1n.values[[r, c]], sn);
                    if m == 1 {
                        track(stats.mean[[r, c]], mean);
                        track(stats.variance[[r, c]], var);
                    }
                }
            }
        }
        let curve = estimators::temporal_corr_stack(view, 7).unwrap();
        for m in 0..=7 {
            track(curve.rho[m], brute_rho(&stack, m));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        worst <= 1e-12 && secs < 10.0,
        format!("{checks} comparisons, worst relative error {worst:.2e}, {secs:.2} s"),
    )
}

// ---- shared sequences ------------------------------------------------------

struct ConstantRun {
    bmp: FrameSequence,
    jpg10: FrameSequence,
    jp2_6: FrameSequence,
    synth_secs: f64,
}

fn constant_run() -> ConstantRun {
    let start = Instant::now();
    let cfg = SynthesisConfig::new(SIZE, SIZE, N_FRAMES, TauField::constant(SIZE, SIZE, 20.0).unwrap(), CONSTANT_SEED);
    let bmp = synth::synthesize(&cfg).unwrap();
    let synth_secs = start.elapsed().as_secs_f64();
    let (jpg10, _) = codec::roundtrip_sequence(&bmp, CompressionSpec::Jpeg { quality: 10 }).unwrap();
    let (jp2_6, _) = codec::roundtrip_sequence(&bmp, CompressionSpec::Jpeg2000 { ratio: 6.0 }).unwrap();
    ConstantRun {
        bmp,
        jpg10,
        jp2_6,
        synth_secs,
    }
}

fn criterion_2(run: &ConstantRun) -> Outcome {
    let start = Instant::now();
    let curve = estimators::temporal_corr(&run.bmp, 40).unwrap();
    let secs = run.synth_secs + start.elapsed().as_secs_f64();
    let rho = &curve.rho;
    let max_rise = rho.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let at20 = rho[20];
    let pass = rho[0] == 1.0 && max_rise < 0.02 && (0.22..=0.42).contains(&at20) && secs < 120.0;
    report(
        2,
        pass,
        format!(
            "rho(0) = {}, largest rise {max_rise:.4}, rho(20) = {at20:.4} (model {:.4}), {secs:.1} s",
            rho[0],
            (-1.0f64).exp()
        ),
    )
}

fn criterion_3(run: &ConstantRun) -> Outcome {
    let bmp = estimators::temporal_corr(&run.bmp, 40).unwrap();
    let jpg = estimators::temporal_corr(&run.jpg10, 40).unwrap();
    let jp2 = estimators::temporal_corr(&run.jp2_6, 40).unwrap();
    let dj = jpg.max_abs_deviation(&bmp);
    let d2 = jp2.max_abs_deviation(&bmp);
    report(
        3,
        dj > 0.01 && d2 > 0.01,
        format!("max |jpg Q10 - bmp| = {dj:.4}, max |jp2 eta6 - bmp| = {d2:.4}"),
    )
}

fn criterion_8(run: &ConstantRun) -> Outcome {
    let bmp = estimators::msf_s1(&run.bmp, LAG).unwrap();
    let jpg = estimators::msf_s1(&run.jpg10, LAG).unwrap();
    let hb = metrics::estimate_histogram(&bmp, metrics::DEFAULT_HISTOGRAM_BINS).unwrap();
    let hj = metrics::estimate_histogram(&jpg, metrics::DEFAULT_HISTOGRAM_BINS).unwrap();
    let (mb, sb) = bmp.valid_mean_std().unwrap();
    let (mj, sj) = jpg.valid_mean_std().unwrap();
    let shift = (mj - mb).abs() / mb;
    report(
        8,
        sj < sb && shift > 0.005 && hb.total() == 65_536 && hj.total() == 65_536,
        format!("S1 std bmp {sb:.3} vs jpg {sj:.3}; mean bmp {mb:.3} vs jpg {mj:.3} ({:.1}% shift)", shift * 100.0),
    )
}

// ---- logos pipeline --------------------------------------------------------

struct LogosRun {
    analysis: pipeline::SetAnalysis,
    foreground: Array2<bool>,
    background: Array2<bool>,
    sizes: Vec<codec::SizeReport>,
    bmp: FrameSequence,
    secs: f64,
}

fn logos_run(out: &Path, scenario: &ScenarioConfig) -> LogosRun {
    let start = Instant::now();
    let summary = pipeline::simulate(scenario, out).unwrap();
    let analysis = pipeline::analyze_tree(out, None, None, SsimParams::default()).unwrap().remove(0);
    let (_, masks) = scenario.layout_fields().unwrap();
    let manifest = TreeManifest::load(out).unwrap();
    let bmp = pipeline::load_variant(out, CompressionSpec::Bmp, manifest.channel, 1.0).unwrap();
    LogosRun {
        analysis,
        foreground: masks.foreground,
        background: masks.background,
        sizes: summary.sizes.into_iter().next().unwrap(),
        bmp,
        secs: start.elapsed().as_secs_f64(),
    }
}

fn contrasts(run: &LogosRun) -> Vec<(String, f64)> {
    run.analysis
        .variants
        .iter()
        .map(|v| {
            let c = metrics::region_contrast(&v.map, run.foreground.view(), run.background.view()).unwrap();
            (v.spec.label(), c)
        })
        .collect()
}

fn criterion_4(run: &LogosRun) -> Outcome {
    let cs = contrasts(run);
    let pass = cs.len() == 7 && cs.iter().all(|(_, c)| *c > REGION_CONTRAST_MIN);
    let detail = cs.iter().map(|(l, c)| format!("{l} {c:.3}")).collect::<Vec<_>>().join(", ");
    report(4, pass, format!("logo/background S1 ratio: {detail}"))
}

fn mean_ssi(run: &LogosRun, spec: CompressionSpec) -> f64 {
    run.analysis
        .variants
        .iter()
        .find(|v| v.spec == spec)
        .and_then(|v| v.ssi.as_ref())
        .map(|s| s.mean_ssi)
        .expect("variant analyzed")
}

fn criterion_5(run: &LogosRun) -> Outcome {
    let jpg: Vec<f64> = REFERENCE_JPG_SSI.iter().map(|&(q, _)| mean_ssi(run, CompressionSpec::Jpeg { quality: q })).collect();
    let jp2: Vec<f64> = REFERENCE_JP2_SSI.iter().map(|&(r, _)| mean_ssi(run, CompressionSpec::Jpeg2000 { ratio: r })).collect();
    let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    let ballpark = REFERENCE_JPG_SSI
        .iter()
        .map(|p| p.1)
        .zip(&jpg)
        .chain(REFERENCE_JP2_SSI.iter().map(|p| p.1).zip(&jp2))
        .all(|(reference, ours)| (reference - ours).abs() <= SSI_TOLERANCE);

    // jp2 encoded at the achieved size of each jpg setting
    let gt = run.analysis.ground_truth();
    let reference = run.sizes[0].reference_bytes as f64;
    let mut matched = Vec::new();
    for (k, &(q, _)) in REFERENCE_JPG_SSI.iter().enumerate() {
        let jpg_report = run.sizes.iter().find(|r| r.spec == CompressionSpec::Jpeg { quality: q }).unwrap();
        let eta = reference / jpg_report.mean_bytes();
        let (seq, rep) = codec::roundtrip_sequence(&run.bmp, CompressionSpec::Jpeg2000 { ratio: eta }).unwrap();
        let size_match = (rep.mean_bytes() / jpg_report.mean_bytes() - 1.0).abs() <= 0.10;
        let map = estimators::msf_s1(&seq, LAG).unwrap();
        let ssi = metrics::ssi_map(&map, gt, SsimParams::default()).unwrap().mean_ssi;
        matched.push((q, eta, ssi, jpg[k], size_match));
    }
    let matched_ok = matched.iter().all(|&(_, _, j2, jp, ok)| ok && j2 >= jp);
    let pass = decreasing(&jpg) && decreasing(&jp2) && ballpark && matched_ok;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/");
    let m = matched
        .iter()
        .map(|(q, eta, j2, jp, ok)| format!("Q{q}~eta{eta:.1}: jp2 {j2:.3} vs jpg {jp:.3}{}", if *ok { "" } else { " (size off)" }))
        .collect::<Vec<_>>()
        .join("; ");
    report(
        5,
        pass,
        format!("mean SSI jpg Q70/30/10 {} (reference 0.955/0.783/0.503), jp2 eta2/3/6 {} (reference 0.992/0.925/0.639); matched size: {m}", fmt(&jpg), fmt(&jp2)),
    )
}

fn criterion_6(run: &LogosRun) -> Outcome {
    let cs = contrasts(run);
    let mut worst_block = f64::NEG_INFINITY;
    let mut block_ok = true;
    for v in &run.analysis.variants {
        let logo_mean = region_mean(&v.map, &run.foreground);
        let blocks = metrics::aligned_block_means(&v.map, run.background.view(), 8).unwrap();
        let top = blocks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        worst_block = worst_block.max(top / logo_mean);
        block_ok &= top <= logo_mean;
    }
    let pass = cs.iter().all(|(_, c)| *c > REGION_CONTRAST_MIN) && block_ok;
    let detail = cs.iter().map(|(l, c)| format!("{l} {c:.3}")).collect::<Vec<_>>().join(", ");
    report(
        6,
        pass,
        format!("gaussian beam, S2: logo/background ratio {detail}; hottest background block / logo mean {worst_block:.3}"),
    )
}

fn region_mean(map: &ActivityMap, mask: &Array2<bool>) -> f64 {
    let mut s = 0.0;
    let mut n = 0;
    for ((v, ok), m) in map.values.iter().zip(map.valid.iter()).zip(mask.iter()) {
        if *ok && *m {
            s += v;
            n += 1;
        }
    }
    s / n as f64
}

fn criterion_7(run: &LogosRun) -> Outcome {
    let bmp = &run.sizes[0];
    let bmp_ok = bmp.frame_bytes.iter().all(|&b| b == 65_536 + 1078);
    let jpg10 = run.sizes.iter().find(|r| r.spec == CompressionSpec::Jpeg { quality: 10 }).unwrap();
    let kb = jpg10.mean_bytes() / 1000.0;
    let jpg_ok = (7.0..=13.0).contains(&kb);
    let mut jp2_detail = Vec::new();
    let mut jp2_ok = true;
    for r in run.sizes.iter().filter(|r| matches!(r.spec, CompressionSpec::Jpeg2000 { .. })) {
        let CompressionSpec::Jpeg2000 { ratio } = r.spec else { unreachable!() };
        let worst = r.ratios().iter().map(|a| (a / ratio - 1.0).abs()).fold(0.0, f64::max);
        jp2_ok &= worst <= 0.15;
        jp2_detail.push(format!("eta{ratio}: mean {:.3}, worst frame off {:.1}%", r.mean_ratio(), worst * 100.0));
    }
    report(
        7,
        bmp_ok && jpg_ok && jp2_ok,
        format!(
            "bmp {} B (65536 + 1078 header/palette); jpg Q10 mean {kb:.2} KB; {}",
            bmp.frame_bytes[0],
            jp2_detail.join(", ")
        ),
    )
}

// ---- criterion 9: decaying-activity stand-in ------------------------------

fn criterion_9() -> Outcome {
    const SERIES_SIZE: usize = 128;
    const SERIES_FRAMES: usize = 128;
    // slow activity, as in drying-droplet recordings
    let taus = [30.0, 55.0, 100.0, 180.0, 330.0];
    let roi = Roi::centered((SERIES_SIZE, SERIES_SIZE), 100, 100);
    let mut bmp_s = Vec::new();
    let mut jpg_s = Vec::new();
    let mut jp2_s = Vec::new();
    let mut quality = None;
    let mut jpg_ratio = 0.0;
    for (k, &tau) in taus.iter().enumerate() {
        let cfg = SynthesisConfig::new(
            SERIES_SIZE,
            SERIES_SIZE,
            SERIES_FRAMES,
            TauField::constant(SERIES_SIZE, SERIES_SIZE, tau).unwrap(),
            SERIES_SEED + k as u64,
        );
        let bmp = synth::synthesize(&cfg).unwrap();
        let q = *quality.get_or_insert_with(|| codec::jpeg_quality_for_ratio(&bmp, 10.0, 8).unwrap());
        let (jpg, jpg_report) = codec::roundtrip_sequence(&bmp, CompressionSpec::Jpeg { quality: q }).unwrap();
        jpg_ratio += jpg_report.mean_ratio() / taus.len() as f64;
        let (jp2, _) = codec::roundtrip_sequence(&bmp, CompressionSpec::Jpeg2000 { ratio: 10.0 }).unwrap();
        for (seq, out) in [(&bmp, &mut bmp_s), (&jpg, &mut jpg_s), (&jp2, &mut jp2_s)] {
            let map = estimators::msf_s1(seq, LAG).unwrap();
            out.push(metrics::roi_mean(&map, roi).unwrap());
        }
    }
    let dec = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    let above = jp2_s.iter().zip(&bmp_s).all(|(j, b)| j >= b);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(" ");
    report(
        9,
        dec(&bmp_s) && dec(&jpg_s) && dec(&jp2_s) && above,
        format!(
            "ROI S1 over 5 sets: bmp [{}], jpg Q{} (eta {:.1}) [{}], jp2 eta10 [{}]",
            fmt(&bmp_s),
            quality.unwrap(),
            jpg_ratio,
            fmt(&jpg_s),
            fmt(&jp2_s)
        ),
    )
}

// ---- criterion 10: determinism ---------------------------------------------

fn tree_files(root: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn criterion_10(first: &Path, second: &Path, scenario: &ScenarioConfig, pipeline_secs: f64) -> Outcome {
    let start = Instant::now();
    pipeline::simulate(scenario, second).unwrap();
    pipeline::analyze_tree(second, None, None, SsimParams::default()).unwrap();
    let a = tree_files(first);
    let b = tree_files(second);
    let compared: Vec<_> = a
        .iter()
        .filter(|p| p.starts_with("bmp") || p.extension().is_some_and(|e| e == "csv"))
        .collect();
    let identical = a == b
        && compared
            .iter()
            .all(|p| std::fs::read(first.join(p)).unwrap() == std::fs::read(second.join(p)).unwrap());
    let secs = pipeline_secs;
    report(
        10,
        identical && secs < 600.0,
        format!(
            "{} bmp/csv files byte-identical across runs: {identical}; criteria 2-6 took {secs:.0} s (rerun {:.0} s)",
            compared.len(),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn main() {
    let total = Instant::now();
    let mut outcomes = vec![criterion_1()];

    let pipeline_start = Instant::now();
    let constant = constant_run();
    outcomes.push(criterion_2(&constant));
    outcomes.push(criterion_3(&constant));
    let constant_secs = pipeline_start.elapsed().as_secs_f64();

    let work = tempfile::tempdir().unwrap();
    let logos = ScenarioConfig::logos(SIZE, N_FRAMES, LOGOS_SEED);
    let run = logos_run(&work.path().join("logos_a"), &logos);
    outcomes.push(criterion_4(&run));
    outcomes.push(criterion_5(&run));

    let mut gaussian = ScenarioConfig::preset("logos-gaussian", SIZE, N_FRAMES, GAUSSIAN_SEED).unwrap();
    gaussian.analysis.lag = LAG;
    let grun = logos_run(&work.path().join("gaussian"), &gaussian);
    outcomes.push(criterion_6(&grun));
    let pipeline_secs = constant_secs + run.secs + grun.secs;

    outcomes.push(criterion_7(&run));
    outcomes.push(criterion_8(&constant));
    outcomes.push(criterion_9());
    outcomes.push(criterion_10(&work.path().join("logos_a"), &work.path().join("logos_b"), &logos, pipeline_secs));

    outcomes.sort_by_key(|o| o.id);
    let failed: Vec<_> = outcomes.iter().filter(|o| !o.pass).collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.0} s",
        outcomes.len() - failed.len(),
        outcomes.len(),
        total.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        for o in &failed {
            eprintln!("failed criterion {}: {}", o.id, o.detail);
        }
        std::process::exit(1);
    }
}
