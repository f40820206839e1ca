use frmc::partial::{apply_noise, generate_instance, CompletionConfig, NoiseSpec};
use frmc::pipeline::{complete_noiseless, complete_noisy};

fn main() {
    // fully observed 20x24 r=2
    let (truth, sample) = generate_instance(20, 24, 2, 1.0, 3).unwrap();
    let mut cfg = CompletionConfig::for_rank(2);
    cfg.seed = 1;
    let res = complete_noiseless(&sample, &cfg).unwrap();
    let eval = res.eval_against(&truth);
    println!("full-obs: k_r={} k_c={} r_v={} cliques={} rank={} resid={:.3e} fit={:.3e}",
        res.face.k_row, res.face.k_col, res.r_v, res.cliques_found, eval.rank, eval.residual, res.initial.fit_error);

    // noisy 80x100
    let (truth, sample) = generate_instance(80, 100, 2, 0.5, 13).unwrap();
    let noisy = apply_noise(&sample, &truth, &NoiseSpec::new(1e-3, 4).unwrap()).unwrap();
    let mut cfg = CompletionConfig::for_rank(2);
    cfg.seed = 5;
    let res = complete_noisy(&noisy, &cfg).unwrap();
    let eval = res.eval_against(&truth);
    println!("noisy: k_r={} k_c={} r_v={} rank={} resid={:.3e} init fit={:.3e} refined={}",
        res.face.k_row, res.face.k_col, res.r_v, eval.rank, eval.residual, res.initial.fit_error,
        res.refined.is_some());
    if let Some(ref rep) = res.refined {
        println!("  refined fit={:.3e} tau={:?} mult={:?} conv={}", rep.fit_error, rep.tau, rep.multiplier, rep.converged);
    }
}
