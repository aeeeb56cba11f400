use plap_core::experiments::*;
use plap_core::prior::{covariance_for_sample, sample_logconductivity, SampleId};
use plap_core::seed::{derive_seed, Stream};
use plap_core::sensitivity::assemble_jacobians;
use plap_core::*;

fn main() {
    let opts = SolverOptions { max_newton_steps: 300, ..Default::default() };
    let members = 100;
    let ctx = build_context(128, 240, 8, 7, opts).unwrap();
    let base = ConductivityField::homogeneous(ctx.fem.partition().clone(), Parametrization::Std);
    let model = covariance_for_sample(ctx.fem.partition(), SampleId::D).unwrap();
    let kappas = sample_logconductivity(&model, members, derive_seed(7, Stream::SampleDraw, 3)).unwrap();
    let p = 1.5;
    let mut errs2 = Vec::new();
    let mut warm = warm_state(members);
    for &tau in &[0.1, 0.0] {
        let params = EnergyParams::new(p, tau).unwrap();
        let (jacs, u0) = assemble_jacobians(&ctx.fem, &base, &params, 8, &[Parametrization::Std], &ctx.opts).unwrap();
        let (meas, w, _) = measure_members(&ctx.fem, &kappas, &params, 8, &ctx.opts, warm);
        warm = w;
        let x0 = nalgebra::DVector::from_element(jacs[0].cols(), 1.0);
        let errs: Vec<f64> = meas.iter().enumerate().map(|(k, mv)| {
            let mv = mv.as_ref().unwrap();
            let x = kappas[k].map(|v: f64| v.exp());
            let pred = u0.values() + &jacs[0].matrix * (x - &x0);
            (mv.values() - pred).norm() / mv.values().norm()
        }).collect();
        println!("tau={tau}: mean={:.4}", errs.iter().sum::<f64>() / 100.0);
        errs2.push(errs);
    }
    let mut idx: Vec<usize> = (0..members).collect();
    idx.sort_by(|&a, &b| errs2[1][b].partial_cmp(&errs2[1][a]).unwrap());
    println!("top members by e(tau=0):");
    for &i in idx.iter().take(8) {
        println!("  m{i}: e0={:.2} e01={:.2} diff={:+.2}  kappa mean={:+.2} max|k|={:.2}",
            errs2[1][i], errs2[0][i], errs2[1][i]-errs2[0][i],
            kappas[i].mean(), kappas[i].amax());
    }
    let gap: f64 = (0..members).map(|i| errs2[1][i]-errs2[0][i]).sum::<f64>()/100.0;
    println!("mean gap = {gap:.4}");
}
