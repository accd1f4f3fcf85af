//! Acceptance gate: one test per shipped guarantee. Each test prints a
//! "criterion N: PASS" line with the measured quantity (visible under
//! --nocapture); a failed assert is the corresponding FAIL.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rating_influence::dataset::{
    synthesize_cohort, Bq, Effect, Sampling, Side, SynthSpec,
};
use rating_influence::encoder::{
    decode_profile, encode_profile, to_raw_channels, write_pgm, LabeledImageSet,
};
use rating_influence::grouping::{
    apply_request, chance_baseline, default_groupings, group_by_explicit_thresholds,
    group_three_most_even, group_two_by_mean,
};
use rating_influence::influence::{grouping_tests, round_half_away};
use rating_influence::nn::{
    adam_step, backward, canonical_network, forward, init_parameters, loss_softmax_xent, predict,
    Activation, Batch, LayerSpec, NetworkSpec, Parameters, Tensor, ADAM_BETA1, ADAM_BETA2,
    ADAM_EPS, ADAM_LR,
};
use rating_influence::seed;
use rating_influence::special::{erf, reg_beta, reg_gamma_lower};
use rating_influence::stats::{
    anova_one_way, kendall_tau_b_with_mode, kruskal_wallis, wilcoxon_rank_sum_with, PValueMode,
    RankConfig, Stars,
};
use rating_influence::trainer::{run_experiment, TrainConfig};

#[test]
fn criterion_1_architecture_audit() {
    let t0 = Instant::now();
    let net = canonical_network(2);
    let audit = net.audit().expect("canonical network audits");
    let got: Vec<(&str, Vec<usize>, usize)> = audit
        .iter()
        .map(|l| (l.name, l.output_shape.dims(), l.params))
        .collect();
    let want: Vec<(&str, Vec<usize>, usize)> = vec![
        ("rescale", vec![20, 25, 3], 0),
        ("conv", vec![20, 25, 16], 448),
        ("max_pool", vec![10, 12, 16], 0),
        ("conv", vec![10, 12, 32], 4640),
        ("max_pool", vec![5, 6, 32], 0),
        ("conv", vec![5, 6, 64], 18496),
        ("max_pool", vec![2, 3, 64], 0),
        ("flatten", vec![384], 0),
        ("dense", vec![128], 49280),
        ("dense", vec![2], 258),
    ];
    assert_eq!(got, want);
    let total = net.total_params().expect("total params");
    assert_eq!(total, audit.iter().map(|l| l.params).sum::<usize>());
    assert_eq!(total, 448 + 4640 + 18496 + 49280 + 258);
    assert!(t0.elapsed() < Duration::from_secs(1));
    println!(
        "criterion 1: PASS (10 layers, {total} parameters, {:?})",
        t0.elapsed()
    );
}

/// Flat addressing of every parameter scalar in a network.
struct ParamCoord {
    slot: usize,
    is_bias: bool,
    idx: usize,
}

fn param_coords(params: &Parameters) -> Vec<ParamCoord> {
    let mut coords = Vec::new();
    for (slot, s) in params.slots.iter().enumerate() {
        for (is_bias, t) in [(false, &s.weight), (true, &s.bias)] {
            if let Some(t) = t {
                for idx in 0..t.value.len() {
                    coords.push(ParamCoord { slot, is_bias, idx });
                }
            }
        }
    }
    coords
}

fn coord_value(params: &Parameters, c: &ParamCoord) -> f64 {
    let slot = &params.slots[c.slot];
    let t = if c.is_bias { &slot.bias } else { &slot.weight };
    t.as_ref().unwrap().value.data[c.idx]
}

fn set_coord(params: &mut Parameters, c: &ParamCoord, v: f64) {
    let slot = &mut params.slots[c.slot];
    let t = if c.is_bias { &mut slot.bias } else { &mut slot.weight };
    t.as_mut().unwrap().value.data[c.idx] = v;
}

fn batch_loss(net: &NetworkSpec, params: &Parameters, batch: &Batch) -> f64 {
    let logits = predict(net, params, &batch.inputs).expect("forward");
    loss_softmax_xent(&logits, &batch.labels).0
}

/// Checks analytic gradients against central differences over every
/// parameter. Coordinates whose one-sided slopes disagree are sitting on a
/// rectifier/pool kink where the derivative jumps; they are skipped and
/// counted, and the skip budget is asserted tiny.
fn gradient_check(net: &NetworkSpec, param_seed: u64, batch: &Batch) -> (f64, usize, usize) {
    let params = init_parameters(net, param_seed).expect("init");
    let (logits, cache) = forward(net, &params, batch).expect("forward");
    let (_, dl) = loss_softmax_xent(&logits, &batch.labels);
    let grads = backward(net, &params, &cache, &dl, false);
    let l0 = batch_loss(net, &params, batch);

    let h = 1e-5;
    let mut max_rel: f64 = 0.0;
    let mut checked = 0usize;
    let mut skipped = 0usize;
    let mut work = params.clone();
    for c in param_coords(&params) {
        let gslot = &grads.slots[c.slot];
        let g = if c.is_bias { &gslot.bias } else { &gslot.weight };
        let analytic = g.as_ref().expect("gradient present").data[c.idx];
        let v0 = coord_value(&params, &c);
        set_coord(&mut work, &c, v0 + h);
        let lp = batch_loss(net, &work, batch);
        set_coord(&mut work, &c, v0 - h);
        let lm = batch_loss(net, &work, batch);
        set_coord(&mut work, &c, v0);
        let numeric = (lp - lm) / (2.0 * h);
        let one_sided_gap = ((lp - l0) / h - (l0 - lm) / h).abs();
        if one_sided_gap > 1e-3 * (1.0 + numeric.abs()) {
            skipped += 1;
            continue;
        }
        let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-3);
        max_rel = max_rel.max(rel);
        checked += 1;
    }
    (max_rel, checked, skipped)
}

fn raw_batch(shape: (usize, usize, usize), n: usize, labels: Vec<usize>, seed_v: u64) -> Batch {
    let mut rng = seed::stream(seed_v, 0);
    let len = n * shape.0 * shape.1 * shape.2;
    let data: Vec<f64> = (0..len)
        .map(|_| seed::uniform_range(&mut rng, 0.0, 255.0))
        .collect();
    Batch {
        inputs: Tensor::from_vec(&[n, shape.0, shape.1, shape.2], data),
        labels,
    }
}

#[test]
fn criterion_2_gradient_check() {
    let t0 = Instant::now();
    let relu = Activation::Relu;
    let ident = Activation::Identity;

    // Width-reduced full stack: same layer sequence as the canonical
    // classifier with 4/6/8 conv channels and a 16-unit hidden layer.
    let reduced = NetworkSpec {
        input: (20, 25, 3),
        layers: vec![
            LayerSpec::Rescale { factor: 1.0 / 255.0 },
            LayerSpec::Conv { filters: 4 },
            LayerSpec::MaxPool,
            LayerSpec::Conv { filters: 6 },
            LayerSpec::MaxPool,
            LayerSpec::Conv { filters: 8 },
            LayerSpec::MaxPool,
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 16, activation: relu },
            LayerSpec::Dense { units: 2, activation: ident },
        ],
    };
    // Every layer type in isolation (softmax loss reads the flattened
    // output directly, so conv/pool grads are checked without a dense
    // layer in the way).
    let conv_only = NetworkSpec {
        input: (4, 5, 2),
        layers: vec![LayerSpec::Conv { filters: 3 }, LayerSpec::Flatten],
    };
    let conv_pool = NetworkSpec {
        input: (4, 6, 1),
        layers: vec![LayerSpec::Conv { filters: 2 }, LayerSpec::MaxPool, LayerSpec::Flatten],
    };
    let rescale_conv = NetworkSpec {
        input: (3, 4, 1),
        layers: vec![
            LayerSpec::Rescale { factor: 1.0 / 255.0 },
            LayerSpec::Conv { filters: 2 },
            LayerSpec::Flatten,
        ],
    };
    let dense_ident = NetworkSpec {
        input: (2, 3, 1),
        layers: vec![LayerSpec::Flatten, LayerSpec::Dense { units: 5, activation: ident }],
    };
    let dense_relu = NetworkSpec {
        input: (2, 3, 1),
        layers: vec![LayerSpec::Flatten, LayerSpec::Dense { units: 4, activation: relu }],
    };

    let cases: Vec<(&str, NetworkSpec, Batch)> = vec![
        ("reduced stack", reduced.clone(), raw_batch(reduced.input, 2, vec![0, 1], 11)),
        ("conv", conv_only.clone(), raw_batch(conv_only.input, 2, vec![3, 17], 12)),
        ("conv+pool", conv_pool.clone(), raw_batch(conv_pool.input, 2, vec![1, 7], 13)),
        ("rescale+conv", rescale_conv.clone(), raw_batch(rescale_conv.input, 2, vec![2, 9], 14)),
        ("dense linear", dense_ident.clone(), raw_batch(dense_ident.input, 3, vec![0, 4, 2], 15)),
        ("dense relu", dense_relu.clone(), raw_batch(dense_relu.input, 3, vec![0, 3, 1], 16)),
    ];

    let mut worst: f64 = 0.0;
    let mut total_checked = 0usize;
    for (name, net, batch) in &cases {
        let (max_rel, checked, skipped) = gradient_check(net, 41, batch);
        assert!(checked > 0, "{name}: nothing checked");
        assert!(
            skipped * 100 <= checked,
            "{name}: {skipped} kink skips vs {checked} checked"
        );
        assert!(
            max_rel <= 1e-4,
            "{name}: max relative gradient error {max_rel:.3e}"
        );
        worst = worst.max(max_rel);
        total_checked += checked;
    }
    assert!(t0.elapsed() < Duration::from_secs(60));
    println!(
        "criterion 2: PASS ({} nets, {total_checked} parameters, worst rel err {worst:.2e}, {:?})",
        cases.len(),
        t0.elapsed()
    );
}

fn draw_continuous(rng: &mut impl rand_core::Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| seed::uniform_f64(rng)).collect()
}

fn draw_grid(rng: &mut impl rand_core::Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| seed::uniform_usize(rng, 11) as f64 / 10.0).collect()
}

fn is_constant(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] == w[1])
}

#[test]
fn criterion_3_statistical_oracles() {
    let t0 = Instant::now();

    // Worked values, four decimal places.
    let kw = kruskal_wallis(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
    assert!((kw.statistic - 4.5714).abs() < 5e-5, "H = {}", kw.statistic);
    assert!((kw.p_value - 0.1017).abs() < 5e-5, "p = {}", kw.p_value);
    let an = anova_one_way(&[vec![0.0, 1.0], vec![2.0, 3.0]]).unwrap();
    assert!((an.statistic - 8.0).abs() < 5e-5, "F = {}", an.statistic);
    assert!((an.p_value - 0.1056).abs() < 5e-5, "p = {}", an.p_value);

    let exact = RankConfig { mode: PValueMode::Exact, ..RankConfig::default() };
    let approx = RankConfig { mode: PValueMode::Approximate, ..RankConfig::default() };

    // Continuous (tie-free) instances: the exact route must match complete
    // enumeration to within f64 noise and the normal approximation must sit
    // inside the calibrated 0.02 band.
    let mut rng = seed::stream(0xACC3, 1);
    for _ in 0..220 {
        let m = 6 + seed::uniform_usize(&mut rng, 3);
        let n = 6 + seed::uniform_usize(&mut rng, 3);
        let a = draw_continuous(&mut rng, m);
        let b = draw_continuous(&mut rng, n);
        let oracle = common::wilcoxon_exact_p_by_enumeration(&a, &b);
        let e = wilcoxon_rank_sum_with(&a, &b, exact).unwrap();
        assert!((e.p_value - oracle).abs() <= 1e-12, "exact {} vs {oracle}", e.p_value);
        let ap = wilcoxon_rank_sum_with(&a, &b, approx).unwrap();
        assert!((ap.p_value - oracle).abs() <= 0.02, "approx {} vs {oracle}", ap.p_value);

        let k = 6 + seed::uniform_usize(&mut rng, 3);
        let x = draw_continuous(&mut rng, k);
        let y = draw_continuous(&mut rng, k);
        let oracle = common::kendall_exact_p_by_enumeration(&x, &y);
        let e = kendall_tau_b_with_mode(&x, &y, PValueMode::Exact).unwrap();
        assert!((e.p_value - oracle).abs() <= 1e-12, "exact {} vs {oracle}", e.p_value);
        let ap = kendall_tau_b_with_mode(&x, &y, PValueMode::Approximate).unwrap();
        assert!((ap.p_value - oracle).abs() <= 0.02, "approx {} vs {oracle}", ap.p_value);
    }

    // Tied instances on the 11-point grid: exact route only (the normal
    // approximation degrades under heavy ties by design).
    let mut rng = seed::stream(0xACC3, 2);
    let mut tied_done = 0;
    while tied_done < 120 {
        let m = 4 + seed::uniform_usize(&mut rng, 5);
        let n = 4 + seed::uniform_usize(&mut rng, 5);
        let a = draw_grid(&mut rng, m);
        let b = draw_grid(&mut rng, n);
        let e = wilcoxon_rank_sum_with(&a, &b, exact).unwrap();
        let oracle = common::wilcoxon_exact_p_by_enumeration(&a, &b);
        assert!((e.p_value - oracle).abs() <= 1e-12, "tied exact {} vs {oracle}", e.p_value);

        let k = 5 + seed::uniform_usize(&mut rng, 4);
        let x = draw_grid(&mut rng, k);
        let y = draw_grid(&mut rng, k);
        if is_constant(&x) || is_constant(&y) {
            continue;
        }
        let e = kendall_tau_b_with_mode(&x, &y, PValueMode::Exact).unwrap();
        let oracle = common::kendall_exact_p_by_enumeration(&x, &y);
        assert!((e.p_value - oracle).abs() <= 1e-12, "tied exact {} vs {oracle}", e.p_value);
        tied_done += 1;
    }

    // H and F statistics against independent recomputation.
    let mut rng = seed::stream(0xACC3, 3);
    for i in 0..220 {
        let k = 2 + seed::uniform_usize(&mut rng, 3);
        let groups: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                let len = 2 + seed::uniform_usize(&mut rng, 7);
                draw_continuous(&mut rng, len)
            })
            .collect();
        let h = kruskal_wallis(&groups).unwrap().statistic;
        let h_oracle = common::kruskal_wallis_h_by_rank_anova(&groups);
        assert!((h - h_oracle).abs() <= 1e-10, "instance {i}: H {h} vs {h_oracle}");
        let f = anova_one_way(&groups).unwrap().statistic;
        let f_oracle = common::anova_f_by_raw_moments(&groups);
        assert!((f - f_oracle).abs() <= 1e-10, "instance {i}: F {f} vs {f_oracle}");
    }

    assert!(t0.elapsed() < Duration::from_secs(60));
    println!(
        "criterion 3: PASS (220 continuous + 120 tied + 220 k-group instances, {:?})",
        t0.elapsed()
    );
}

#[test]
fn criterion_4_special_functions() {
    let t0 = Instant::now();
    let mut points = 0usize;
    let mut worst: f64 = 0.0;

    // 34 erf points spanning [-4, 4].
    for k in 0..34 {
        let x = -4.0 + 8.0 * k as f64 / 33.0;
        let diff = (erf(x) - common::erf_by_quadrature(x)).abs();
        worst = worst.max(diff);
        assert!(diff <= 1e-10, "erf({x}): off by {diff:.3e}");
        points += 1;
    }

    // 33 regularized lower gamma points: shape x scale sweep.
    for &s in &[0.5, 1.0, 1.5, 2.5, 4.0, 8.0, 12.5, 20.0, 35.0, 50.0, 75.0] {
        let xs: Vec<f64> = [0.3, 1.0, 2.7].iter().map(|f| s * f).collect();
        let oracle = common::reg_gamma_lower_by_quadrature_at(s, &xs);
        for (&x, &want) in xs.iter().zip(&oracle) {
            let got = reg_gamma_lower(s, x).unwrap();
            let diff = (got - want).abs();
            worst = worst.max(diff);
            assert!(diff <= 1e-10, "P({s}, {x}): off by {diff:.3e}");
            points += 1;
        }
    }

    // 33 regularized beta points: around each distribution's mean.
    let pairs = [
        (0.5, 0.5),
        (0.5, 2.0),
        (2.0, 0.5),
        (1.0, 1.0),
        (1.0, 3.0),
        (3.0, 1.0),
        (2.0, 2.0),
        (2.0, 5.0),
        (5.0, 2.0),
        (8.0, 3.0),
        (10.0, 10.0),
    ];
    for &(a, b) in &pairs {
        let mu = a / (a + b);
        for x in [mu / 2.0, mu, (1.0 + mu) / 2.0] {
            let got = reg_beta(a, b, x).unwrap();
            let diff = (got - common::reg_beta_by_quadrature(a, b, x)).abs();
            worst = worst.max(diff);
            assert!(diff <= 1e-10, "I_{x}({a}, {b}): off by {diff:.3e}");
            points += 1;
        }
    }
    assert_eq!(points, 100);

    // Symmetry identity on a denser deterministic grid.
    for &(a, b) in &pairs {
        for j in 1..16 {
            let x = j as f64 / 16.0;
            let lhs = reg_beta(a, b, x).unwrap();
            let rhs = 1.0 - reg_beta(b, a, 1.0 - x).unwrap();
            assert!((lhs - rhs).abs() <= 1e-12, "symmetry at ({a}, {b}, {x})");
        }
    }

    assert!(t0.elapsed() < Duration::from_secs(10));
    println!(
        "criterion 4: PASS (100 quadrature points, worst |diff| {worst:.2e}, {:?})",
        t0.elapsed()
    );
}

#[test]
fn criterion_5_grouping_goldens() {
    let spec = SynthSpec::from_json(include_str!("../data/default_synth_spec.json")).unwrap();
    // Exact-quota sampling pins every marginal, so the seed is arbitrary.
    let cohort = synthesize_cohort(&spec, 987654).unwrap();
    assert_eq!(cohort.len(), 673);

    let requests = default_groupings();
    let sizes: Vec<Vec<usize>> = requests
        .iter()
        .map(|r| apply_request(&cohort, r).unwrap().sizes)
        .collect();
    let want: Vec<Vec<usize>> = vec![
        vec![263, 410],
        vec![218, 207, 248],
        vec![219, 454],
        vec![364, 309],
        vec![274, 399],
        vec![190, 271, 212],
        vec![318, 355],
        vec![240, 229, 204],
        vec![201, 472],
        vec![143, 214, 316],
        vec![123, 550],
        vec![333, 340],
        vec![225, 231, 217],
    ];
    assert_eq!(sizes, want);

    // The automatic rules land on the same partitions, with one documented
    // exception: for BQ7 the most-even three-way split is (201,284,188) at
    // cuts (7,9), strictly more even than the default table's (143,214,316).
    for bq in [Bq::Bq1, Bq::Bq2, Bq::Bq4, Bq::Bq5, Bq::Bq6, Bq::Bq7, Bq::Bq8] {
        let auto = group_two_by_mean(&cohort, bq).unwrap();
        let row = requests
            .iter()
            .position(|r| r.bq == bq && r.arity == 2)
            .unwrap();
        assert_eq!(auto.sizes, want[row], "{bq} two-group auto rule");
    }
    for bq in [Bq::Bq1, Bq::Bq5, Bq::Bq6] {
        let auto = group_three_most_even(&cohort, bq).unwrap();
        let row = requests
            .iter()
            .position(|r| r.bq == bq && r.arity == 3)
            .unwrap();
        assert_eq!(auto.sizes, want[row], "{bq} three-group auto rule");
    }
    let bq7 = group_three_most_even(&cohort, Bq::Bq7).unwrap();
    assert_eq!(bq7.thresholds, vec![7, 9]);
    assert_eq!(bq7.sizes, vec![201, 284, 188]);

    // Chance baselines, two-decimal rendering, published order.
    let chances: Vec<String> = requests
        .iter()
        .filter(|r| r.bq != Bq::Bq9)
        .map(|r| {
            let g = apply_request(&cohort, r).unwrap();
            format!("{:.2}", round_half_away(chance_baseline(&g).value, 2))
        })
        .collect();
    let want_chances = ["0.61", "0.37", "0.67", "0.54", "0.59", "0.40", "0.53", "0.36", "0.70", "0.47", "0.82"];
    assert_eq!(chances, want_chances);

    println!("criterion 5: PASS (13 grouping rows, 11 chance baselines)");
}

#[test]
fn criterion_6_encoding_goldens() {
    let t0 = Instant::now();
    let header = b"P5\n25 20\n255\n";

    let zero = write_pgm(&encode_profile(&[0.0; 20]));
    let mut want = header.to_vec();
    want.extend_from_slice(&[0u8; 500]);
    assert_eq!(zero, want);
    assert_eq!(zero.len(), 513);

    let one = write_pgm(&encode_profile(&[1.0; 20]));
    let mut want = header.to_vec();
    want.extend_from_slice(&[0xFFu8; 500]);
    assert_eq!(one, want);

    // A single 0.5 rating on the first statement: its 5x5 block at the top
    // left holds byte 128, everything else stays black.
    let mut ratings = [0.0; 20];
    ratings[0] = 0.5;
    let img = encode_profile(&ratings);
    for y in 0..20 {
        for x in 0..25 {
            let wantb = if y < 5 && x < 5 { 128 } else { 0 };
            assert_eq!(img.pixels[y * 25 + x], wantb, "pixel ({y}, {x})");
        }
    }

    // Decode-encode identity across 1000 random grid profiles.
    let mut rng = seed::stream(0x6006, 0);
    for _ in 0..1000 {
        let mut p = [0.0; 20];
        for r in &mut p {
            *r = seed::uniform_usize(&mut rng, 11) as f64 / 10.0;
        }
        assert_eq!(decode_profile(&encode_profile(&p)), p);
    }

    assert!(t0.elapsed() < Duration::from_secs(5));
    println!("criterion 6: PASS (3 golden images, 1000 round trips, {:?})", t0.elapsed());
}

fn quota(pairs: &[(i64, f64)]) -> BTreeMap<i64, f64> {
    pairs.iter().copied().collect()
}

/// 673 respondents with a 340/333 split on the age question at cut 40;
/// `shift` > 0 plants a mean shift on five statements for the older group.
fn planted_spec(shift: f64) -> SynthSpec {
    let nine_point = quota(&[
        (1, 75.0),
        (2, 75.0),
        (3, 75.0),
        (4, 75.0),
        (5, 75.0),
        (6, 75.0),
        (7, 75.0),
        (8, 74.0),
        (9, 74.0),
    ]);
    let binary = quota(&[(1, 340.0), (2, 333.0)]);
    let mut backgrounds = BTreeMap::new();
    backgrounds.insert(Bq::Bq1, nine_point.clone());
    backgrounds.insert(Bq::Bq2, binary.clone());
    backgrounds.insert(Bq::Bq4, binary.clone());
    backgrounds.insert(Bq::Bq5, nine_point.clone());
    backgrounds.insert(Bq::Bq6, nine_point.clone());
    backgrounds.insert(Bq::Bq7, nine_point);
    backgrounds.insert(Bq::Bq8, binary);
    backgrounds.insert(
        Bq::Bq9,
        quota(&[(20, 140.0), (30, 200.0), (45, 183.0), (60, 150.0)]),
    );
    let effects = if shift != 0.0 {
        vec![Effect {
            es: vec![3, 7, 11, 15, 19],
            bq: Bq::Bq9,
            cut: 40,
            side: Side::AtOrAbove,
            shift,
        }]
    } else {
        Vec::new()
    };
    SynthSpec {
        size: 673,
        sampling: Sampling::ExactQuota,
        backgrounds,
        ratings: vec![vec![1.0; 11]],
        effects,
    }
}

#[test]
fn criterion_7_end_to_end_discrimination() {
    let t0 = Instant::now();

    // Planted cohort: the five shifted statements must reach *** and the
    // classifier must beat chance by a clear margin over 100 sequences.
    let planted = synthesize_cohort(&planted_spec(0.3), 20240601).unwrap();
    let grouping = group_by_explicit_thresholds(&planted, Bq::Bq9, &[40]).unwrap();
    assert_eq!(grouping.sizes, vec![340, 333]);
    let chance = chance_baseline(&grouping).value;

    let (rank_tests, _) = grouping_tests(&planted, &grouping).unwrap();
    for es in [3usize, 7, 11, 15, 19] {
        assert_eq!(
            rank_tests[es - 1].stars,
            Stars::Three,
            "ES{es}: p = {}",
            rank_tests[es - 1].p_value
        );
    }

    let images = LabeledImageSet::from_grouping(&planted, &grouping);
    let cfg = TrainConfig { master_seed: 0xE2E, ..TrainConfig::default() };
    let result = run_experiment(&images, &cfg).unwrap();
    let mean_acc = result.aggregate.val_acc.mean;
    assert!(
        mean_acc >= chance + 0.10,
        "planted: mean val acc {mean_acc:.4} vs chance {chance:.4}"
    );

    // Null cohort: accuracy stays at chance and the star rate across 200
    // fresh draws matches the 5% false-positive budget (20 tests -> 1).
    let null_spec = planted_spec(0.0);
    let null = synthesize_cohort(&null_spec, 20240601).unwrap();
    let null_grouping = group_by_explicit_thresholds(&null, Bq::Bq9, &[40]).unwrap();
    let null_images = LabeledImageSet::from_grouping(&null, &null_grouping);
    let null_cfg = TrainConfig { sequences: 10, master_seed: 7, ..TrainConfig::default() };
    let null_result = run_experiment(&null_images, &null_cfg).unwrap();
    let null_acc = null_result.aggregate.val_acc.mean;
    assert!(
        (null_acc - chance).abs() <= 0.05,
        "null: mean val acc {null_acc:.4} vs chance {chance:.4}"
    );

    let mut star_total = 0usize;
    for s in 0..200 {
        let cohort = synthesize_cohort(&null_spec, s).unwrap();
        let g = group_by_explicit_thresholds(&cohort, Bq::Bq9, &[40]).unwrap();
        let (tests, _) = grouping_tests(&cohort, &g).unwrap();
        star_total += tests.iter().filter(|t| t.stars != Stars::None).count();
    }
    let star_mean = star_total as f64 / 200.0;
    assert!(
        (0.6..=1.4).contains(&star_mean),
        "false-positive mean {star_mean:.3} outside 1 +- 0.4"
    );

    println!(
        "criterion 7: PASS (planted acc {mean_acc:.3} vs chance {chance:.3}, null acc {null_acc:.3}, fp mean {star_mean:.2}, {:?})",
        t0.elapsed()
    );
}

#[test]
fn criterion_8_determinism_across_thread_counts() {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_rating-influence");

    let spec = serde_json::to_string(&planted_spec(0.3)).unwrap();
    let spec_path = dir.path().join("spec.json");
    std::fs::write(&spec_path, spec).unwrap();
    let groupings_path = dir.path().join("groupings.json");
    std::fs::write(
        &groupings_path,
        r#"[{"bq": "BQ9", "arity": 2, "cuts": [40]}, {"bq": "BQ2", "arity": 2, "cuts": [2]}]"#,
    )
    .unwrap();
    let config_path = dir.path().join("train.json");
    std::fs::write(&config_path, r#"{"sequences": 2, "max_epochs": 3}"#).unwrap();

    let cohort_path = dir.path().join("cohort.csv");
    let status = std::process::Command::new(bin)
        .args(["synth", spec_path.to_str().unwrap(), "-o", cohort_path.to_str().unwrap(), "--seed", "5"])
        .status()
        .unwrap();
    assert!(status.success());

    let mut reports = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("out{threads}"));
        let status = std::process::Command::new(bin)
            .args([
                "--threads",
                threads,
                "analyze",
                cohort_path.to_str().unwrap(),
                "--groupings",
                groupings_path.to_str().unwrap(),
                "--config",
                config_path.to_str().unwrap(),
                "--seed",
                "99",
                "--output",
                out.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success(), "analyze --threads {threads}");
        reports.push(std::fs::read(out.join("report.json")).unwrap());
    }
    assert!(!reports[0].is_empty());
    assert_eq!(reports[0], reports[1], "report.json differs across thread counts");

    println!(
        "criterion 8: PASS (report.json byte-identical across --threads 1/4, {} bytes, {:?})",
        reports[0].len(),
        t0.elapsed()
    );
}

#[test]
fn criterion_9_overfit_sanity() {
    let t0 = Instant::now();
    // Eight distinct profiles with arbitrary labels; the residue pattern
    // makes every pair differ in most blocks.
    let profiles: Vec<[f64; 20]> = (0..8)
        .map(|i| {
            let mut p = [0.0; 20];
            for (j, r) in p.iter_mut().enumerate() {
                *r = ((i * 7 + j * 3) % 11) as f64 / 10.0;
            }
            p
        })
        .collect();
    for i in 0..8 {
        for j in (i + 1)..8 {
            assert_ne!(profiles[i], profiles[j], "profiles {i} and {j} collide");
        }
    }
    let labels = vec![0usize, 1, 1, 0, 1, 0, 0, 1];
    let mut data = Vec::with_capacity(8 * 20 * 25 * 3);
    for p in &profiles {
        data.extend(to_raw_channels(&encode_profile(p)));
    }
    let batch = Batch {
        inputs: Tensor::from_vec(&[8, 20, 25, 3], data),
        labels: labels.clone(),
    };

    let net = canonical_network(2);
    let mut params = init_parameters(&net, 77).unwrap();
    let mut reached_at = None;
    for epoch in 1..=500 {
        let (logits, cache) = forward(&net, &params, &batch).unwrap();
        let (_, dl) = loss_softmax_xent(&logits, &batch.labels);
        let grads = backward(&net, &params, &cache, &dl, false);
        adam_step(&mut params, &grads, ADAM_LR, ADAM_BETA1, ADAM_BETA2, ADAM_EPS);

        let logits = predict(&net, &params, &batch.inputs).unwrap();
        let correct = (0..8)
            .filter(|&i| {
                let row = &logits.data[i * 2..(i + 1) * 2];
                let pred = if row[1] > row[0] { 1 } else { 0 };
                pred == labels[i]
            })
            .count();
        if correct == 8 {
            reached_at = Some(epoch);
            break;
        }
    }
    let epoch = reached_at.expect("memorization within 500 epochs");
    assert!(t0.elapsed() < Duration::from_secs(60));
    println!(
        "criterion 9: PASS (100% training accuracy at epoch {epoch}, {:?})",
        t0.elapsed()
    );
}
