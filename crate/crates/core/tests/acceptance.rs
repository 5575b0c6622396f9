//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the report is always printed.

mod oracles;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use mcv::driver::{run_mcv, McvConfig, PermutationKind};
use mcv::geometry::{Lattice, Offset, Pixel, PixelSet, Window};
use mcv::imageio::ImageBuffer;
use mcv::metrics::rand_index;
use mcv::mrf::{calibrate_rho, energy, evaluate, gibbs_distribution, tau_rho_consistency, MrfModel, Patch, Region};
use mcv::partition::{canonicalize, connected_components, merge_step, merge_step_parallel, Partition};
use mcv::pyramid::{centered_patch, downsample, pyramid_evaluate, structuring_weights, PyramidEvaluator};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use oracles::{bfs_components, first_occurrence, merge_set_form, rand_brute};

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn lat(w: u32, h: u32) -> Lattice {
    Lattice::new(w, h).unwrap()
}

fn row_window(r: i32) -> Window {
    Window::from_offsets((-r..=r).map(|dx| Offset::new(dx, 0))).unwrap()
}

fn random_mask(rng: &mut ChaCha8Rng, n: usize) -> Vec<bool> {
    let density = rng.gen_range(0.2..0.8);
    (0..n).map(|_| rng.gen_bool(density)).collect()
}

fn c1_components_match_bfs() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let l = lat(16, 16);
    let start = Instant::now();
    for case in 0..500 {
        let mask = random_mask(&mut rng, l.len());
        let s = PixelSet::from_mask(l, mask.clone()).unwrap();
        let order: Vec<Pixel> = s.pixels().collect();
        let got = canonicalize(&connected_components(&s, &Window::nine(), &order).unwrap());
        let want = bfs_components(&mask, 16, 16, true);
        check(got.labels() == want.as_slice(), format!("mask {case} differs from BFS"))?;
    }
    let t = start.elapsed();
    check(t < Duration::from_secs(5), format!("took {t:?}"))?;
    Ok(format!("500 masks equal, {:.0} ms", t.as_secs_f64() * 1e3))
}

fn c2_order_independence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let l = lat(16, 16);
    for case in 0..50 {
        let s = PixelSet::from_mask(l, random_mask(&mut rng, l.len())).unwrap();
        let mut order: Vec<Pixel> = s.pixels().collect();
        let reference = canonicalize(&connected_components(&s, &Window::nine(), &order).unwrap());
        for _ in 0..10 {
            order.shuffle(&mut rng);
            let got = canonicalize(&connected_components(&s, &Window::nine(), &order).unwrap());
            check(got == reference, format!("mask {case} depends on visiting order"))?;
        }
    }
    Ok("50 masks x 10 orders identical".into())
}

fn c3_merge_set_vs_label() -> Outcome {
    // The split example: blocks {1,2,3}{4,5,6}, x = 3, both windows ±1.
    let l = lat(6, 1);
    let p = Partition::from_vec(l, vec![0, 0, 0, 1, 1, 1]).unwrap();
    let out = canonicalize(&merge_step(Pixel::new(3, 1), &p, &row_window(1), &row_window(1)).unwrap());
    check(out.labels() == [0, 1, 1, 1, 2, 2], format!("1x6 example gave {:?}", out.labels()))?;
    let by_oracle = merge_set_form(p.labels(), 6, (2, 0), &|dx, dy| dy == 0 && dx.abs() <= 1, &|dx, dy| {
        dy == 0 && dx.abs() <= 1
    });
    check(by_oracle == out.labels(), "oracle disagrees on the 1x6 example")?;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..200 {
        let (w, h) = (rng.gen_range(1..=8u32), rng.gen_range(1..=8u32));
        let k = rng.gen_range(1..=5u32);
        let labels: Vec<u32> = (0..w * h).map(|_| rng.gen_range(0..k)).collect();
        let p = Partition::from_vec(lat(w, h), labels.clone()).unwrap();
        let x = (rng.gen_range(0..w) as usize, rng.gen_range(0..h) as usize);
        let r0 = rng.gen_range(0..=1i64);
        let rp = rng.gen_range(0..=3i64);
        let got = canonicalize(
            &merge_step(
                Pixel::new(x.0 as u32 + 1, x.1 as u32 + 1),
                &p,
                &Window::square(r0 as u32),
                &Window::square(rp as u32),
            )
            .unwrap(),
        );
        let want = merge_set_form(
            &labels,
            w as usize,
            x,
            &|dx, dy| dx.abs() <= r0 && dy.abs() <= r0,
            &|dx, dy| dx.abs() <= rp && dy.abs() <= rp,
        );
        check(got.labels() == want.as_slice(), format!("case {case} differs from the set form"))?;
    }
    Ok("1x6 split reproduced; 200 random partitions agree".into())
}

fn c4_parallel_equals_sequential() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..200 {
        let (w, h) = (rng.gen_range(1..=40u32), rng.gen_range(1..=40u32));
        let k = rng.gen_range(1..=12u32);
        let labels: Vec<u32> = (0..w * h).map(|_| rng.gen_range(0..k)).collect();
        let p = Partition::from_vec(lat(w, h), labels).unwrap();
        let x = Pixel::new(rng.gen_range(1..=w), rng.gen_range(1..=h));
        let w0 = if rng.gen_bool(0.5) { Window::nine() } else { Window::five() };
        let psi = Window::square(rng.gen_range(0..=16));
        let seq = merge_step(x, &p, &w0, &psi).unwrap();
        for workers in [1, 2, 3, 8] {
            let par = merge_step_parallel(x, &p, &w0, &psi, workers).unwrap();
            check(par.labels() == seq.labels(), format!("case {case}, {workers} workers"))?;
        }
    }
    Ok("200 cases x {1,2,3,8} workers bitwise equal".into())
}

fn c5_energy_ground_truths() -> Outcome {
    let g = Window::nine();
    let model = MrfModel::new(g.clone());
    let constant = Patch::from_rows(&[&[4.0; 5], &[4.0; 5], &[4.0; 5]]).unwrap();
    let u = energy(&constant, &model).unwrap();
    check(u == 0.0, format!("constant patch U = {u}"))?;

    let spike = Patch::from_rows(&[&[0.0, 1.0, 0.0]]).unwrap();
    let u = energy(&spike, &MrfModel::new(row_window(1))).unwrap();
    check(u == 3.0, format!("[0,1,0] gave U = {u}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..200 {
        let (w, h) = (rng.gen_range(1..=7usize), rng.gen_range(1..=7usize));
        let mask: Vec<bool> = (0..w * h).map(|_| rng.gen_bool(0.85)).collect();
        let Ok(region) = Region::new(w, h, mask) else { continue };
        if region.is_empty() {
            continue;
        }
        let samples: Vec<f64> = (0..w * h).map(|_| rng.gen_range(0..=255) as f64).collect();
        let p = Patch::new(region, 1, samples).unwrap();
        let base = energy(&p, &model).unwrap();
        let c = rng.gen_range(-1000..=1000) as f64;
        let shifted = energy(&p.map(|v| v + c), &model).unwrap();
        check(shifted == base, format!("case {case}: shift by {c} changed U from {base} to {shifted}"))?;
        let a: f64 = rng.gen_range(-8.0..8.0);
        let scaled = energy(&p.map(|v| a * v), &model).unwrap();
        let want = a * a * base;
        let rel = (scaled - want).abs() / want.abs().max(f64::MIN_POSITIVE);
        check(base == 0.0 && scaled == 0.0 || rel <= 1e-9, format!("case {case}: scale error {rel:e}"))?;
    }
    Ok("U(const)=0, U([0,1,0])=3, shift exact, scale within 1e-9".into())
}

fn c6_gibbs_consistency() -> Outcome {
    let mut tables = 0usize;
    let mut worst = 0.0f64;
    let mut cases: Vec<(Region, usize)> = Vec::new();
    for k in 2..=16usize {
        for n in 1..=16usize {
            if (k as u64).checked_pow(n as u32).is_none_or(|s| s > 1 << 16) {
                continue;
            }
            for w in 1..=n {
                if n % w == 0 {
                    cases.push((Region::rect(w, n / w), k));
                }
            }
        }
    }
    for bits in 1u32..(1 << 9) {
        let mask: Vec<bool> = (0..9).map(|i| bits >> i & 1 == 1).collect();
        cases.push((Region::new(3, 3, mask).unwrap(), 2));
    }
    for (region, k) in cases {
        let values: Vec<Vec<f64>> = (0..k).map(|v| vec![v as f64]).collect();
        for (t, rho) in [(1.0, 0.0), (1.0, 0.25), (0.5, 1.0), (3.0, 0.6)] {
            let model = MrfModel::new(Window::nine()).with_temperature(t).unwrap().with_rho(rho).unwrap();
            let table = gibbs_distribution(&region, &values, &model).unwrap();
            let sum: f64 = table.probabilities().iter().sum();
            worst = worst.max((sum - 1.0).abs());
            check((sum - 1.0).abs() <= 1e-12, format!("probabilities sum to {sum}"))?;
            check(
                tau_rho_consistency(&region, &values, &model).unwrap(),
                format!("threshold mismatch on {}x{} region, |V| = {k}", region.width(), region.height()),
            )?;
            tables += 1;
        }
    }
    Ok(format!("{tables} tables consistent, max |sum - 1| = {worst:e}"))
}

fn c7_metropolis() -> Outcome {
    let region = Region::rect(2, 1);
    let values = vec![vec![0.0], vec![1.0]];
    let model = MrfModel::new(Window::nine());
    let table = gibbs_distribution(&region, &values, &model).unwrap();
    let exact = table.mean_energy() / 2.0;
    let est = calibrate_rho(&region, &values, &model, 100_000, 7).unwrap();
    let err = (est.rho - exact).abs();
    check(err <= 3.0 * est.std_error, format!("estimate {} vs exact {exact}, SE {}", est.rho, est.std_error))?;
    Ok(format!("estimate {:.5} vs exact {exact:.5} (SE {:.5})", est.rho, est.std_error))
}

fn c8_pyramid_exact() -> Outcome {
    let g = Window::nine();
    let weights = structuring_weights(&g, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut accepted = 0;
    let mut total = 0;
    for level in 1..=3u32 {
        let model = MrfModel::new(g.clone()).with_rho(rng.gen_range(5.0..60.0)).unwrap();
        let pe = PyramidEvaluator::new(&g, None, model.clone(), 3).unwrap();
        for case in 0..100 {
            // Random image, random centre: about half the patches clip.
            let l = lat(rng.gen_range(3..=12), rng.gen_range(3..=12));
            let spread = rng.gen_range(1.0..40.0);
            let img = ImageBuffer::from_fn(l, 255, |_| rng.gen_range(0.0..spread)).unwrap();
            let center = rng.gen_range(0..l.len());
            let patch = centered_patch(&img, center, &g.dilate(level).unwrap());

            let mut lowered = patch.clone();
            for j in (1..level).rev() {
                lowered = downsample(&lowered, &g, &weights, &g.dilate(j).unwrap()).unwrap();
            }
            let want = evaluate(&lowered, &model).unwrap();
            let got = pyramid_evaluate(&patch, level, &pe).unwrap();
            check(got == want, format!("level {level}, case {case}: decision differs"))?;
            let (ue, un) = (energy(&lowered, &model).unwrap(), pe.energy(&patch, level).unwrap());
            check(ue == un, format!("level {level}, case {case}: energy {un} vs {ue}"))?;
            accepted += want as usize;
            total += 1;
        }
    }
    Ok(format!("{total} patches exact ({accepted} accepted)"))
}

fn quadrant_image(n: u32, values: [f64; 4], noise: f64, seed: u64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImageBuffer::from_fn(lat(n, n), 255, |p| {
        let k = usize::from(p.col > n / 2) + 2 * usize::from(p.row > n / 2);
        values[k] + if noise > 0.0 { rng.gen_range(-noise..noise) } else { 0.0 }
    })
    .unwrap()
}

fn c9_recovery() -> Outcome {
    let start = Instant::now();
    let img = quadrant_image(32, [20.0, 90.0, 160.0, 230.0], 0.0, 0);
    let cfg = McvConfig {
        permutation: PermutationKind::Raster,
        model: MrfModel::new(Window::nine()).with_rho(1.0).unwrap(),
        ..Default::default()
    };
    let seq = run_mcv(&img, &cfg).unwrap();
    let truth: Vec<u32> = lat(32, 32)
        .pixels()
        .map(|p| u32::from(p.col > 16) + 2 * u32::from(p.row > 16))
        .collect();
    check(
        seq.last().labels() == first_occurrence(&truth).as_slice(),
        format!("quadrants not recovered: {} regions", seq.last().block_count()),
    )?;

    let constant = ImageBuffer::from_fn(lat(16, 16), 255, |_| 128.0).unwrap();
    let seq = run_mcv(&constant, &McvConfig::default()).unwrap();
    check(seq.last().block_count() == 1, format!("constant image ends with {} regions", seq.last().block_count()))?;
    let t = start.elapsed();
    check(t < Duration::from_secs(10), format!("took {t:?}"))?;
    Ok(format!("quadrants exact, constant image one region, {:.0} ms", t.as_secs_f64() * 1e3))
}

fn levels_to_single_digit(img: &ImageBuffer, cfg: &McvConfig) -> usize {
    let seq = run_mcv(img, cfg).unwrap();
    seq.stats.iter().position(|s| s.regions < 10).map_or(usize::MAX, |i| i + 1)
}

fn c10_stability() -> Outcome {
    let img = quadrant_image(64, [40.0, 110.0, 180.0, 250.0], 3.0, 10);
    let runs: Vec<Partition> = (1..=5u64)
        .map(|seed| run_mcv(&img, &McvConfig { seed, ..Default::default() }).unwrap().last().clone())
        .collect();
    let mut min_ri = 1.0f64;
    for a in 0..runs.len() {
        for b in a + 1..runs.len() {
            min_ri = min_ri.min(rand_index(&runs[a], &runs[b]).unwrap());
        }
    }
    check(min_ri >= 0.95, format!("minimum pairwise Rand index {min_ri}"))?;

    let constant = ImageBuffer::from_fn(lat(16, 16), 255, |_| 128.0).unwrap();
    let raster = levels_to_single_digit(&constant, &McvConfig { permutation: PermutationKind::Raster, ..Default::default() });
    let random: Vec<usize> =
        (0..5u64).map(|seed| levels_to_single_digit(&constant, &McvConfig { seed, ..Default::default() })).collect();
    check(
        random.iter().all(|&r| r <= raster),
        format!("random needs {random:?} levels, raster {raster}"),
    )?;
    Ok(format!("min pairwise RI {min_ri:.4}; levels to <10 regions: random {random:?}, raster {raster}"))
}

fn c11_rand_index() -> Outcome {
    let a = Partition::from_vec(lat(3, 1), vec![0, 0, 1]).unwrap();
    let b = Partition::from_vec(lat(3, 1), vec![0, 1, 1]).unwrap();
    let ri = rand_index(&a, &b).unwrap();
    check(ri == 1.0 / 3.0, format!("three-pixel case gave {ri}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..100 {
        let (w, h) = loop {
            let (w, h) = (rng.gen_range(1..=8u32), rng.gen_range(1..=8u32));
            if w * h >= 2 {
                break (w, h);
            }
        };
        let (k1, k2) = (rng.gen_range(1..=6u32), rng.gen_range(1..=6u32));
        let l1: Vec<u32> = (0..w * h).map(|_| rng.gen_range(0..k1)).collect();
        let l2: Vec<u32> = (0..w * h).map(|_| rng.gen_range(0..k2)).collect();
        let got = rand_index(
            &Partition::from_vec(lat(w, h), l1.clone()).unwrap(),
            &Partition::from_vec(lat(w, h), l2.clone()).unwrap(),
        )
        .unwrap();
        let want = rand_brute(&l1, &l2);
        check(got == want, format!("case {case}: {got} vs {want}"))?;
    }
    Ok("1/3 case exact; 100 random pairs equal the pairwise count".into())
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 11] = [
        ("connected components match BFS", c1_components_match_bfs),
        ("visiting order independence", c2_order_independence),
        ("merge set form equals label form", c3_merge_set_vs_label),
        ("parallel merge equals sequential", c4_parallel_equals_sequential),
        ("energy ground truths", c5_energy_ground_truths),
        ("Gibbs threshold consistency", c6_gibbs_consistency),
        ("Metropolis calibration", c7_metropolis),
        ("pyramid equivalence", c8_pyramid_exact),
        ("segmentation recovery", c9_recovery),
        ("permutation stability", c10_stability),
        ("Rand index oracle", c11_rand_index),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
