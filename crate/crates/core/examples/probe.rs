use yprsim::kernels::SpectralConstants;
use yprsim::model::encodings::build_six_state_jc;
use yprsim::model::presets;
use yprsim::simulator::default_burn_in;

fn main() {
    let six = build_six_state_jc(10.0).unwrap();
    let sc = SpectralConstants::new(10.0).unwrap();
    println!("u_minus={:.6} u_plus={:.6} v_minus={:.6} v_plus={:.6}", sc.u_minus, sc.u_plus, sc.v_minus, sc.v_plus);
    let mut eigs: Vec<f64> = six.generator.complex_eigenvalues().iter().map(|z| {
        assert!(z.im.abs() < 1e-9, "complex eigenvalue {z}");
        z.re
    }).collect();
    eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    println!("6-state eigenvalues at r=10: {eigs:?}");
    // pairwise sums of decay rates (the modes of [A,A](t))
    let rates: Vec<f64> = eigs.iter().map(|&l| -l).collect();
    let mut sums: Vec<f64> = Vec::new();
    for i in 0..rates.len() {
        for j in i..rates.len() {
            let s = rates[i] + rates[j];
            if s > 1e-9 && !sums.iter().any(|&x: &f64| (x - s).abs() < 1e-6) {
                sums.push(s);
            }
        }
    }
    sums.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!("candidate decay rates of [A,A]: {sums:?}");
    println!("kimura burn-in: {}", default_burn_in(&presets::kimura_cpg()).unwrap());
    println!("asymmetric burn-in: {}", default_burn_in(&presets::survey_params()[6].1).unwrap());
}
