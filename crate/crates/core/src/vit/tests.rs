//! Model-level checks on the toy configuration.

use super::*;

fn toy_model(seed: u64) -> (FloatWeights, IntModel) {
    let cfg = ModelConfig::toy();
    let w = FloatWeights::random(&cfg, seed).unwrap().fake_quant();
    let calib = synthetic_images(&cfg, 8, seed + 1000);
    let m = IntModel::calibrate(&w, &calib).unwrap();
    (w, m)
}

#[test]
fn forward_is_deterministic() {
    let (_, m) = toy_model(1);
    let img = &synthetic_images(&m.config, 1, 5)[0];
    assert_eq!(m.forward(img).unwrap(), m.forward(img).unwrap());
}

#[test]
fn runtime_macs_match_analytic_count() {
    let (_, m) = toy_model(2);
    let img = &synthetic_images(&m.config, 1, 6)[0];
    let mut stats = RunStats::default();
    m.forward_with(img, Some(&mut stats), None).unwrap();
    assert_eq!(stats.macs, OpCount::for_config(&m.config).macs());
    assert!(stats.max_abs_acc < 1 << 31);
}

#[test]
fn trace_sites_match_float_reference() {
    let (w, m) = toy_model(3);
    let img = &synthetic_images(&m.config, 1, 7)[0];
    let (mut ti, mut tf) = (Trace::default(), Trace::default());
    m.forward_with(img, None, Some(&mut ti)).unwrap();
    forward_float(&w, img, Some(&mut tf)).unwrap();
    let names_i: Vec<&str> = ti.names().collect();
    let names_f: Vec<&str> = tf.names().collect();
    let mut a = names_i.clone();
    let mut b = names_f.clone();
    a.sort();
    b.sort();
    assert_eq!(a, b);
    let errs = compare(&ti, &tf);
    assert_eq!(errs.len(), names_i.len());
    // the first LayerNorm sees quantized inputs only; its error is a few output steps
    let ln = errs.iter().find(|e| e.site == "block0.ln1").unwrap();
    assert!(ln.max_abs <= 4.0 * m.blocks[0].scales.ln1, "{ln:?}");
}

#[test]
fn zero_weight_block_is_pure_residual() {
    let cfg = ModelConfig::toy();
    let mut w = FloatWeights::random(&cfg, 4).unwrap();
    for b in &mut w.blocks {
        for l in [&mut b.qkv, &mut b.proj, &mut b.fc1, &mut b.fc2] {
            l.weight.iter_mut().for_each(|v| *v = 0.0);
            l.bias.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let m = IntModel::calibrate(&w, &synthetic_images(&cfg, 4, 9)).unwrap();
    let img = &synthetic_images(&cfg, 1, 10)[0];
    let mut tr = Trace::default();
    m.forward_with(img, None, Some(&mut tr)).unwrap();
    let x = m.quantize_image(img).unwrap();
    let _ = x;
    let embed = tr.get("embed").unwrap();
    let s = m.embed_scale;
    let xi: Vec<i32> = embed.iter().map(|v| (v / s).round() as i32).collect();
    let mid = mha_block(&m, 0, &xi).unwrap();
    let scale_ratio = m.blocks[0].scales.x / m.blocks[0].scales.mid;
    for (a, b) in mid.iter().zip(&xi) {
        assert_eq!(*a, (*b as f64 * scale_ratio).round_ties_even() as i32);
    }
    let out = mlp_block(&m, 0, &mid).unwrap();
    let ratio = m.blocks[0].scales.mid / m.blocks[0].scales.out;
    for (a, b) in out.iter().zip(&mid) {
        assert_eq!(*a, (*b as f64 * ratio).round_ties_even() as i32);
    }
}

#[test]
fn gelu_table_is_applied_elementwise() {
    let (_, m) = toy_model(5);
    let b = &m.blocks[0];
    for a in [-5000i64, -10, 0, 10, 5000] {
        let v = b.gelu.lookup(a);
        let (lo, hi) = crate::quant::qrange(m.config.act_bits);
        assert!((lo..=hi).contains(&v));
    }
}

#[test]
fn class_token_model_runs() {
    let cfg = ModelConfig::toy().with_class_token(true);
    let w = FloatWeights::random(&cfg, 6).unwrap();
    let m = IntModel::calibrate(&w, &synthetic_images(&cfg, 4, 11)).unwrap();
    let l = m.forward(&synthetic_images(&cfg, 1, 12)[0]).unwrap();
    assert_eq!(l.values.len(), cfg.classes);
}
