//! Acceptance suite: one test per criterion, each printing a PASS line
//! with its measured numbers (assertion failures mark the criterion FAIL).
//!
//! Criteria 4-6 share one desk-scale training fixture (200 train / 50 test
//! phantoms at 64x64, sigma 0.03, default architecture and optimizer),
//! built once on first use.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the
//! per-criterion lines.

use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use num_complex::Complex64;

use proxmri::denoiser::{
    jacobian_penalty_estimate, load_weights, net_backward, net_forward, proximator_forward,
    save_weights, DenoiserWeights, NetConfig, TrainConfig, TrainMeta,
};
use proxmri::forward::{apply_a, apply_ah, simulate_acquisition, ForwardModel, KSpaceData};
use proxmri::metrics::{psnr, ssim};
use proxmri::numerics::ComplexImage;
use proxmri::phantom::{add_gaussian_noise, build_dataset, generate_coil_maps, CoilMaps, Dataset};
use proxmri::recon::{
    lambda_sweep, recon_fista_l1wavelet, recon_fista_with_objective, recon_pgd, recon_sense,
    recon_zero_filled, ReconConfig,
};
use proxmri::rng::{derive_seed, purpose, Rng};
use proxmri::sampling::{cartesian1d_mask, radial_mask, random2d_mask, SamplingMask};

const SIZE: usize = 64;
const TRAIN_SECONDS_BOUND: f64 = 20.0 * 60.0;

struct Fixture {
    train: Dataset,
    test: Dataset,
    maps: CoilMaps,
    weights: DenoiserWeights,
    train_seconds: f64,
}

static FIXTURE: OnceLock<Fixture> = OnceLock::new();

fn fixture() -> &'static Fixture {
    FIXTURE.get_or_init(|| {
        let (train, test) = build_dataset(0, 200, 50, SIZE).expect("dataset");
        let maps = generate_coil_maps(0, 4, SIZE).expect("maps");
        let start = Instant::now();
        let outcome =
            proxmri::denoiser::train(&train, &NetConfig::default(), &TrainConfig::default())
                .expect("training");
        let train_seconds = start.elapsed().as_secs_f64();
        eprintln!(
            "[fixture] desk-scale training finished in {:.1} s (final loss {:.5})",
            train_seconds,
            outcome.loss_trace.last().unwrap()
        );
        Fixture { train, test, maps, weights: outcome.weights, train_seconds }
    })
}

fn preset_masks() -> Vec<(&'static str, SamplingMask)> {
    vec![
        ("cartesian1d-30%", cartesian1d_mask(SIZE, SIZE, 0.3, 12, 1).expect("cartesian")),
        ("random2d-20%", random2d_mask(SIZE, SIZE, 0.2, 12, 2).expect("random")),
        ("radial-40", radial_mask(SIZE, SIZE, 40).expect("radial")),
    ]
}

fn random_image(h: usize, w: usize, seed: u64) -> ComplexImage {
    let mut rng = Rng::from_seed(seed);
    ComplexImage::from_fn(h, w, |_, _| Complex64::new(rng.normal(), rng.normal())).unwrap()
}

fn random_kspace(coils: usize, h: usize, w: usize, seed: u64) -> KSpaceData {
    let mut rng = Rng::from_seed(seed);
    KSpaceData::new(
        coils,
        h,
        w,
        (0..coils * h * w)
            .map(|_| Complex64::new(rng.normal(), rng.normal()))
            .collect(),
    )
    .unwrap()
}

fn single_coil(h: usize, w: usize) -> CoilMaps {
    CoilMaps::new(1, h, w, vec![Complex64::new(1.0, 0.0); h * w]).unwrap()
}

#[test]
fn criterion_01_operator_correctness() {
    let start = Instant::now();

    // Adjoint identity across every preset mask x coil-count combination.
    let mut worst_rel: f64 = 0.0;
    for (name, mask) in preset_masks() {
        for coils in [1usize, 4] {
            let maps = generate_coil_maps(3, coils, SIZE).unwrap();
            let model = ForwardModel::new(mask.clone(), maps).unwrap();
            let x = random_image(SIZE, SIZE, 10);
            let y = random_kspace(coils, SIZE, SIZE, 11);
            let ax = apply_a(&model, &x).unwrap();
            let ahy = apply_ah(&model, &y).unwrap();
            let rel = (ax.inner(&y) - x.inner(&ahy)).norm() / (ax.norm() * y.norm());
            assert!(rel < 1e-10, "{name} x {coils} coils: adjoint error {rel}");
            worst_rel = worst_rel.max(rel);
        }
    }

    // Dense assembled-matrix oracle at 8x8.
    let maps = generate_coil_maps(5, 2, 8).unwrap();
    let mask = random2d_mask(8, 8, 0.5, 2, 7).unwrap();
    let model = ForwardModel::new(mask, maps).unwrap();
    let n = 64;
    let mut matrix = vec![vec![Complex64::new(0.0, 0.0); n]; 2 * n];
    for j in 0..n {
        let mut e = ComplexImage::zeros(8, 8).unwrap();
        e.data_mut()[j] = Complex64::new(1.0, 0.0);
        let col = apply_a(&model, &e).unwrap();
        for (i, &v) in col.data().iter().enumerate() {
            matrix[i][j] = v;
        }
    }
    let x = random_image(8, 8, 21);
    let y = random_kspace(2, 8, 8, 22);
    let ax = apply_a(&model, &x).unwrap();
    let mut max_err: f64 = 0.0;
    for (i, row) in matrix.iter().enumerate() {
        let direct: Complex64 = row.iter().zip(x.data().iter()).map(|(m, v)| m * v).sum();
        max_err = max_err.max((direct - ax.data()[i]).norm());
    }
    let ahy = apply_ah(&model, &y).unwrap();
    for j in 0..n {
        let direct: Complex64 = matrix
            .iter()
            .zip(y.data().iter())
            .map(|(row, v)| row[j].conj() * v)
            .sum();
        max_err = max_err.max((direct - ahy.data()[j]).norm());
    }
    assert!(max_err < 1e-10, "dense-matrix mismatch {max_err}");

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "criterion 1 took {elapsed:.1} s (> 10 s)");
    println!(
        "ACCEPTANCE 1 PASS: adjoint identity worst {worst_rel:.2e} (< 1e-10), dense oracle worst {max_err:.2e} (< 1e-10), {elapsed:.1} s"
    );
}

#[test]
fn criterion_02_gradient_correctness() {
    let start = Instant::now();
    let config = NetConfig { filters: 2, depth: 2, unroll_steps: 1, inner_alpha: 0.5 };
    let mut weights = DenoiserWeights::init(config, 13).unwrap();
    let x = random_image(8, 8, 14);
    let u = random_image(8, 8, 15);

    let (grads, _) = net_backward(&weights, &x, &u).unwrap();
    let loss = |w: &DenoiserWeights| net_forward(w, &x).unwrap().inner(&u).re;

    let mut rng = Rng::from_seed(77);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let idx = rng.below(weights.params.len() as u64) as usize;
        let orig = weights.params[idx];
        weights.params[idx] = orig + h;
        let plus = loss(&weights);
        weights.params[idx] = orig - h;
        let minus = loss(&weights);
        weights.params[idx] = orig;
        let fd = (plus - minus) / (2.0 * h);
        let scale = fd.abs().max(grads[idx].abs()).max(1e-8);
        let rel = (fd - grads[idx]).abs() / scale;
        assert!(rel < 1e-6, "weight {idx}: relative gradient error {rel}");
        worst = worst.max(rel);
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "criterion 2 took {elapsed:.1} s (> 30 s)");
    println!(
        "ACCEPTANCE 2 PASS: 20 finite-difference probes, worst relative error {worst:.2e} (< 1e-6), {elapsed:.1} s"
    );
}

#[test]
fn criterion_03_penalty_estimator() {
    // Tiny net: Hutchinson vs exhaustive column probing.
    let config = NetConfig { filters: 2, depth: 2, unroll_steps: 2, inner_alpha: 0.5 };
    let weights = DenoiserWeights::init(config, 23).unwrap();
    let x = random_image(8, 8, 24);
    let eps = 1e-6;
    let base = proximator_forward(&weights, &x).unwrap();
    let mut exact = 0.0;
    let hw = 64;
    for j in 0..2 * hw {
        let mut probe = x.clone();
        let z = probe.data_mut();
        let idx = j % hw;
        if j < hw {
            z[idx] += Complex64::new(eps, 0.0);
        } else {
            z[idx] += Complex64::new(0.0, eps);
        }
        let moved = proximator_forward(&weights, &probe).unwrap();
        exact += moved
            .data()
            .iter()
            .zip(base.data().iter())
            .map(|(a, b)| ((a - b) / eps).norm_sqr())
            .sum::<f64>();
    }
    let estimate = jacobian_penalty_estimate(&weights, &x, 1e-3, 256, 5).unwrap();
    let rel = (estimate - exact).abs() / exact;
    assert!(rel < 0.15, "tiny net: estimate {estimate} vs column-probed {exact} ({rel:.3})");

    // Identity network: J = I on 2*H*W components.
    let identity = DenoiserWeights::zeros(NetConfig::default()).unwrap();
    let img = fixture_free_phantom();
    let est = jacobian_penalty_estimate(&identity, &img, 1e-3, 256, 6).unwrap();
    let target = 2.0 * (SIZE * SIZE) as f64;
    let rel_id = (est - target).abs() / target;
    assert!(rel_id < 0.15, "identity net: estimate {est} vs {target} ({rel_id:.3})");

    println!(
        "ACCEPTANCE 3 PASS: Hutchinson vs column probing off by {:.1}% (< 15%), identity net off by {:.1}% (< 15%)",
        rel * 100.0,
        rel_id * 100.0
    );
}

fn fixture_free_phantom() -> ComplexImage {
    proxmri::phantom::generate_phantom(3, SIZE).unwrap()
}

#[test]
fn criterion_04_training_efficacy_and_determinism() {
    let fx = fixture();
    assert!(
        fx.train_seconds < TRAIN_SECONDS_BOUND,
        "training took {:.0} s (> {TRAIN_SECONDS_BOUND} s)",
        fx.train_seconds
    );

    // Denoising gain on the held-out set.
    let sigma = TrainConfig::default().noise_sigma;
    let mut gain_sum = 0.0;
    for (i, clean) in fx.test.images.iter().enumerate() {
        let noisy = add_gaussian_noise(clean, sigma, derive_seed(99, purpose::IMAGE_NOISE, i as u64)).unwrap();
        let denoised = proximator_forward(&fx.weights, &noisy).unwrap();
        gain_sum += psnr(&denoised, clean).unwrap() - psnr(&noisy, clean).unwrap();
    }
    let mean_gain = gain_sum / fx.test.images.len() as f64;
    assert!(mean_gain >= 3.0, "mean denoising gain {mean_gain:.2} dB (< 3 dB)");

    // Bit-identical weights on a full deterministic re-run.
    let start = Instant::now();
    let rerun = proxmri::denoiser::train(&fx.train, &NetConfig::default(), &TrainConfig::default())
        .expect("training rerun");
    let rerun_seconds = start.elapsed().as_secs_f64();
    assert!(
        rerun_seconds < TRAIN_SECONDS_BOUND,
        "training re-run took {rerun_seconds:.0} s (> {TRAIN_SECONDS_BOUND} s)"
    );
    assert_eq!(
        fx.weights.params, rerun.weights.params,
        "re-run produced different weights"
    );

    println!(
        "ACCEPTANCE 4 PASS: mean denoising gain {:.2} dB (>= 3 dB), training {:.0} s and re-run {:.0} s (< 1200 s), weights bit-identical",
        mean_gain, fx.train_seconds, rerun_seconds
    );
}

#[test]
fn criterion_05_reconstruction_efficacy() {
    let fx = fixture();
    let start = Instant::now();
    let cfg = ReconConfig::default(); // lambda 0.1, step 1.0, 100 iterations

    let mut summary = String::new();
    for (name, mask) in preset_masks() {
        let model = ForwardModel::new(mask.clone(), fx.maps.clone()).unwrap();
        let (mut pgd_sum, mut zf_sum, mut fista_sum) = (0.0, 0.0, 0.0);
        let n = fx.test.images.len() as f64;
        for image in &fx.test.images {
            let y = simulate_acquisition(image, &fx.maps, &mask, 0.0, 0).unwrap();
            let zf = recon_zero_filled(&model, &y).unwrap();
            let (pgd, _) = recon_pgd(&model, &y, Some(&fx.weights), &cfg, None).unwrap();
            let fista = recon_fista_l1wavelet(&model, &y, 0.005, cfg.iterations).unwrap();
            zf_sum += psnr(&zf, image).unwrap();
            pgd_sum += psnr(&pgd, image).unwrap();
            fista_sum += psnr(&fista, image).unwrap();
        }
        let (pgd, zf, fista) = (pgd_sum / n, zf_sum / n, fista_sum / n);
        assert!(
            pgd >= zf + 2.0,
            "{name}: PGD {pgd:.2} dB not 2 dB above zero-filled {zf:.2} dB"
        );
        assert!(
            pgd >= fista - 0.5,
            "{name}: PGD {pgd:.2} dB more than 0.5 dB below FISTA {fista:.2} dB"
        );
        summary.push_str(&format!(
            " [{name}: pgd {pgd:.2} zf {zf:.2} fista {fista:.2} dB, gap to fista {:+.2}]",
            pgd - fista
        ));
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 600.0, "criterion 5 took {elapsed:.0} s (> 600 s)");
    println!("ACCEPTANCE 5 PASS:{summary}, {elapsed:.0} s");
}

#[test]
fn criterion_06_lambda_behavior() {
    let fx = fixture();
    let mask = radial_mask(SIZE, SIZE, 40).unwrap();
    let model = ForwardModel::new(mask.clone(), fx.maps.clone()).unwrap();
    let reference = &fx.test.images[0];
    let y = simulate_acquisition(reference, &fx.maps, &mask, 0.0, 0).unwrap();

    let lambdas = [0.0, 0.05, 0.1, 0.2, 0.5];
    let iterations = 100;
    let rows = lambda_sweep(&model, &y, &fx.weights, &lambdas, iterations, reference).unwrap();
    assert_eq!(rows.len(), lambdas.len() * iterations);

    let final_row = |lambda: f64| {
        rows.iter()
            .find(|r| r.lambda == lambda && r.iter == iterations)
            .expect("final row")
    };
    let sense_psnr = final_row(0.0).psnr_db;
    let mut best_lambda = 0.0;
    let mut best_psnr = f64::NEG_INFINITY;
    for &l in &[0.05, 0.1, 0.2] {
        let p = final_row(l).psnr_db;
        if p > best_psnr {
            best_psnr = p;
            best_lambda = l;
        }
    }
    assert!(
        best_psnr > sense_psnr,
        "best lambda {best_lambda} PSNR {best_psnr:.2} dB does not exceed SENSE {sense_psnr:.2} dB"
    );
    let best_ssim = final_row(best_lambda).ssim;
    let smooth_ssim = final_row(0.5).ssim;
    assert!(
        best_ssim - smooth_ssim >= 0.01,
        "lambda 0.5 SSIM {smooth_ssim:.4} not at least 0.01 below best {best_ssim:.4}"
    );
    println!(
        "ACCEPTANCE 6 PASS: best lambda {best_lambda} at {best_psnr:.2} dB > SENSE {sense_psnr:.2} dB; SSIM drop at lambda 0.5: {:.4} (>= 0.01)",
        best_ssim - smooth_ssim
    );
}

#[test]
fn criterion_07_limiting_cases() {
    // lambda = 0 is bit-identical to the SENSE iteration.
    let maps = generate_coil_maps(3, 4, SIZE).unwrap();
    let mask = radial_mask(SIZE, SIZE, 40).unwrap();
    let model = ForwardModel::new(mask.clone(), maps.clone()).unwrap();
    let truth = fixture_free_phantom();
    let y = simulate_acquisition(&truth, &maps, &mask, 0.0, 0).unwrap();
    let cfg = ReconConfig { lambda: 0.0, iterations: 50, ..ReconConfig::default() };
    let (pgd0, _) = recon_pgd(&model, &y, None, &cfg, None).unwrap();
    let sense = recon_sense(&model, &y, &cfg).unwrap();
    assert_eq!(pgd0, sense, "lambda=0 PGD differs from SENSE");

    // Full-mask single-coil: exact in one step.
    let maps1 = single_coil(SIZE, SIZE);
    let full = SamplingMask::full(SIZE, SIZE);
    let y_full = simulate_acquisition(&truth, &maps1, &full, 0.0, 0).unwrap();
    let model_full = ForwardModel::new(full.clone(), maps1.clone()).unwrap();
    let one = ReconConfig { lambda: 0.0, iterations: 1, ..ReconConfig::default() };
    let (x1, _) = recon_pgd(&model_full, &y_full, None, &one, None).unwrap();
    let rel = x1.sub(&truth).norm() / truth.norm();
    assert!(rel < 1e-10, "one-step full-mask error {rel}");

    // FISTA with zero l1 weight and full sampling reproduces the truth.
    let fista = recon_fista_l1wavelet(&model_full, &y_full, 0.0, 30).unwrap();
    let rel_f = fista.sub(&truth).norm() / truth.norm();
    assert!(rel_f < 1e-8, "FISTA zero-weight error {rel_f}");

    println!(
        "ACCEPTANCE 7 PASS: lambda=0 bit-identical to SENSE; one-step full-mask error {rel:.2e} (< 1e-10); FISTA l1=0 error {rel_f:.2e} (< 1e-8)"
    );
}

#[test]
fn criterion_08_fista_objective_monotone() {
    let truth = fixture_free_phantom();
    let maps = generate_coil_maps(3, 4, SIZE).unwrap();
    let mut worst: f64 = f64::NEG_INFINITY;
    for (name, mask) in preset_masks() {
        let model = ForwardModel::new(mask.clone(), maps.clone()).unwrap();
        let y = simulate_acquisition(&truth, &maps, &mask, 0.0, 0).unwrap();
        let (_, objectives) = recon_fista_with_objective(&model, &y, 0.005, 100).unwrap();
        for i in 5..objectives.len() {
            let rise = objectives[i] - objectives[i - 1];
            assert!(
                rise <= 1e-9,
                "{name}: objective rose by {rise:.2e} at iteration {}",
                i + 1
            );
            worst = worst.max(rise);
        }
    }
    println!(
        "ACCEPTANCE 8 PASS: FISTA objective nonincreasing after iteration 5 on all presets (worst step {worst:.2e} <= 1e-9)"
    );
}

#[test]
fn criterion_09_serialization_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let img = fixture_free_phantom();
    let maps = generate_coil_maps(1, 4, SIZE).unwrap();
    let mask = random2d_mask(SIZE, SIZE, 0.2, 12, 3).unwrap();
    let y = simulate_acquisition(&img, &maps, &mask, 0.01, 4).unwrap();
    let mut weights = DenoiserWeights::init(NetConfig::default(), 5).unwrap();
    weights.meta = TrainMeta { sigma: 0.03, epochs: 7, seed: 5 };

    let p_img = dir.path().join("x.cim");
    proxmri::io::write_image(&img, &p_img).unwrap();
    assert_eq!(proxmri::io::read_image(&p_img).unwrap(), img);

    let p_maps = dir.path().join("c.cmp");
    proxmri::io::write_coil_maps(&maps, &p_maps).unwrap();
    assert_eq!(proxmri::io::read_coil_maps(&p_maps).unwrap().data(), maps.data());

    let p_y = dir.path().join("y.ksp");
    proxmri::io::write_kspace(&y, &p_y).unwrap();
    assert_eq!(proxmri::io::read_kspace(&p_y).unwrap(), y);

    let p_mask = dir.path().join("m.msk");
    proxmri::io::write_mask(&mask, &p_mask).unwrap();
    assert_eq!(proxmri::io::read_mask(&p_mask).unwrap().data(), mask.data());

    let p_w = dir.path().join("w.wgt");
    save_weights(&weights, &p_w).unwrap();
    assert_eq!(load_weights(&p_w).unwrap(), weights);

    // Corrupted magic bytes are format errors for every reader.
    for (path, kind) in [
        (&p_img, "image"),
        (&p_maps, "maps"),
        (&p_y, "kspace"),
        (&p_mask, "mask"),
        (&p_w, "weights"),
    ] {
        let mut bytes = std::fs::read(path).unwrap();
        bytes[0] ^= 0xff;
        std::fs::write(path, bytes).unwrap();
        let err = match kind {
            "image" => proxmri::io::read_image(path).unwrap_err(),
            "maps" => proxmri::io::read_coil_maps(path).unwrap_err(),
            "kspace" => proxmri::io::read_kspace(path).unwrap_err(),
            "mask" => proxmri::io::read_mask(path).unwrap_err(),
            _ => load_weights(path).unwrap_err(),
        };
        assert!(
            matches!(err, proxmri::Error::Format(_)),
            "{kind}: corrupted magic not a format error: {err}"
        );
    }
    println!("ACCEPTANCE 9 PASS: all five formats round-trip bit-exactly; corrupted magic rejected with format errors");
}

/// Demo pipeline configuration: a complete, reduced-scale experiment (the
/// full desk-scale figures are covered by criteria 4-6; this criterion
/// checks plumbing, runtime, and byte-level reproducibility).
const PIPELINE_CONFIG: &str = "\
size = 64
coils = 4
seed = 0
n_train = 60
n_test = 12
mask_kind = radial
spokes = 40
acs = 12
kspace_sigma = 0
sigma = 0.03
filters = 16
depth = 4
unroll_steps = 3
inner_alpha = 0.5
lr = 0.001
batch = 8
epochs = 40
probes = 1
probe_eps = 0.001
lambda = 0.1
step_size = 1.0
iterations = 100
l1_lambda = 0.005
lambdas = 0,0.05,0.1,0.2,0.5
methods = zerofill,sense,fista,pgd
out_dir = run
";

fn run_pipeline(dir: &Path) -> f64 {
    std::fs::write(dir.join("exp.cfg"), PIPELINE_CONFIG).unwrap();
    let start = Instant::now();
    for args in [
        vec!["phantom", "--config", "exp.cfg"],
        vec!["mask", "gen", "--config", "exp.cfg"],
        vec!["acquire", "--config", "exp.cfg"],
        vec!["train", "--config", "exp.cfg"],
        vec!["recon", "--method", "pgd", "--config", "exp.cfg"],
        vec!["eval", "--config", "exp.cfg"],
        vec!["sweep", "--config", "exp.cfg"],
    ] {
        let out = std::process::Command::new(env!("CARGO_BIN_EXE_proxmri"))
            .args(&args)
            .current_dir(dir)
            .output()
            .expect("spawn");
        assert!(
            out.status.success(),
            "pipeline stage {:?} failed: {}",
            args,
            String::from_utf8_lossy(&out.stderr)
        );
    }
    start.elapsed().as_secs_f64()
}

fn dir_digest(root: &Path) -> Vec<(String, u64, u64)> {
    // (relative path, length, FNV-1a of contents) for every file.
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let bytes = std::fs::read(&path).unwrap();
                let mut hash: u64 = 0xcbf29ce484222325;
                for b in &bytes {
                    hash ^= *b as u64;
                    hash = hash.wrapping_mul(0x100000001b3);
                }
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                files.push((rel, bytes.len() as u64, hash));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn criterion_10_full_pipeline_determinism() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let secs_a = run_pipeline(dir_a.path());
    let secs_b = run_pipeline(dir_b.path());
    assert!(secs_a < 1800.0, "pipeline took {secs_a:.0} s (> 1800 s)");
    assert!(secs_b < 1800.0, "pipeline re-run took {secs_b:.0} s (> 1800 s)");

    let digest_a = dir_digest(&dir_a.path().join("run"));
    let digest_b = dir_digest(&dir_b.path().join("run"));
    assert!(!digest_a.is_empty());
    assert_eq!(digest_a.len(), digest_b.len());
    for (a, b) in digest_a.iter().zip(digest_b.iter()) {
        assert_eq!(a, b, "pipeline output differs between runs: {a:?} vs {b:?}");
    }
    println!(
        "ACCEPTANCE 10 PASS: pipeline completed in {secs_a:.0} s and {secs_b:.0} s (< 1800 s each); {} output files byte-identical",
        digest_a.len()
    );
}
