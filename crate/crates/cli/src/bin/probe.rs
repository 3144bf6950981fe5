//! Temporary diagnostic: per-head disagreement statistics for a checkpoint.

use std::path::Path;

use evico::heads::{evidential_maps, vanilla_maps, Activation};
use evico::netmodel::ModelParams;
use evico::synthdata;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let checkpoint = &args[1];
    let data_dir = &args[2];
    let activation = match args.get(3).map(String::as_str) {
        Some("exp") => Activation::Exp,
        Some("relu") => Activation::Relu,
        _ => Activation::Softplus,
    };

    let model: ModelParams<f64> = ModelParams::load(Path::new(checkpoint)).unwrap();
    let ds = synthdata::load(Path::new(data_dir)).unwrap();

    for (name, samples) in [
        ("unlabeled-train", ds.train.iter().filter(|s| s.mask.is_none()).collect::<Vec<_>>()),
        ("test", ds.test.iter().collect::<Vec<_>>()),
    ] {
        let mut n_dis = 0usize;
        let mut n_total = 0usize;
        let mut dis_e_right = 0usize;
        let mut dis_v_right = 0usize;
        let mut w_dis = 0.0f64;
        let mut w_agree = 0.0f64;
        let mut n_agree = 0usize;
        // accuracy at disagreements stratified by w quartile
        let mut strat = [[0usize; 3]; 4]; // [quartile][count, e_right, v_right]
        // fused-decision attribution where exactly one head is correct
        let mut only_e_right = 0usize; // evidential right, vanilla wrong
        let mut fused_saved_e = 0usize; // ... and fused followed evidential
        let mut only_v_right = 0usize;
        let mut fused_saved_v = 0usize;
        // confidence scales: mean max-prob per head over all pixels
        let mut sum_conf_e = 0.0f64;
        let mut sum_conf_v = 0.0f64;

        for s in &samples {
            // masks exist on the original generated data even for unlabeled;
            // in the stored dataset unlabeled train masks are None, so re-use
            // test gt only where available.
            let gt = match &s.mask {
                Some(m) => m.clone(),
                None => continue,
            };
            let (ih, iw) = (s.image.shape()[1], s.image.shape()[2]);
            let batch =
                evico::Array64::from_vec(vec![1, 1, ih, iw], s.image.data().to_vec()).unwrap();
            let logits = model.infer(&batch).unwrap();
            let ev = evidential_maps(&logits.evidential, activation).unwrap();
            let va = vanilla_maps(&logits.vanilla).unwrap();
            let k = model.classes();
            let (h, w) = (gt.height(), gt.width());
            let pe = ev.prob.data();
            let pv = va.data();
            let conf = ev.confidence.data();
            for p in 0..h * w {
                let mut ae = 0usize;
                let mut av = 0usize;
                for c in 1..k {
                    if pe[c * h * w + p] > pe[ae * h * w + p] {
                        ae = c;
                    }
                    if pv[c * h * w + p] > pv[av * h * w + p] {
                        av = c;
                    }
                }
                let g = gt.data()[p] as usize;
                let wc = conf[p];
                n_total += 1;
                sum_conf_e += pe[ae * h * w + p];
                sum_conf_v += pv[av * h * w + p];
                let mut af = 0usize;
                for c in 1..k {
                    let fc = pe[c * h * w + p] + pv[c * h * w + p];
                    let ff = pe[af * h * w + p] + pv[af * h * w + p];
                    if fc > ff {
                        af = c;
                    }
                }
                if ae == g && av != g {
                    only_e_right += 1;
                    if af == g {
                        fused_saved_e += 1;
                    }
                } else if av == g && ae != g {
                    only_v_right += 1;
                    if af == g {
                        fused_saved_v += 1;
                    }
                }
                if ae != av {
                    n_dis += 1;
                    w_dis += wc;
                    if ae == g {
                        dis_e_right += 1;
                    }
                    if av == g {
                        dis_v_right += 1;
                    }
                    let q = ((wc * 4.0).floor() as usize).min(3);
                    strat[q][0] += 1;
                    if ae == g {
                        strat[q][1] += 1;
                    }
                    if av == g {
                        strat[q][2] += 1;
                    }
                } else {
                    n_agree += 1;
                    w_agree += wc;
                }
            }
        }
        if n_total == 0 {
            println!("{name}: no masked samples");
            continue;
        }
        println!(
            "{name}: {} px, disagree {:.2}% | at disagreements: evid right {:.1}%, vanilla right {:.1}% | mean w: dis {:.3} agree {:.3}",
            n_total,
            100.0 * n_dis as f64 / n_total as f64,
            100.0 * dis_e_right as f64 / n_dis.max(1) as f64,
            100.0 * dis_v_right as f64 / n_dis.max(1) as f64,
            w_dis / n_dis.max(1) as f64,
            w_agree / n_agree.max(1) as f64
        );
        println!(
            "  mean argmax prob: evid {:.3} vanilla {:.3} | only-evid-right {} px (fused follows {:.1}%) | only-vanilla-right {} px (fused follows {:.1}%)",
            sum_conf_e / n_total as f64,
            sum_conf_v / n_total as f64,
            only_e_right,
            100.0 * fused_saved_e as f64 / only_e_right.max(1) as f64,
            only_v_right,
            100.0 * fused_saved_v as f64 / only_v_right.max(1) as f64
        );
        for (q, row) in strat.iter().enumerate() {
            println!(
                "  w in [{:.2},{:.2}): {} px, evid right {:.1}%, vanilla right {:.1}%",
                q as f64 * 0.25,
                (q + 1) as f64 * 0.25,
                row[0],
                100.0 * row[1] as f64 / row[0].max(1) as f64,
                100.0 * row[2] as f64 / row[0].max(1) as f64
            );
        }
    }
}
