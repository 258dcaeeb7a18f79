// probe: 3-level translational task for layer-wise probing
use drm_core::deep::{DeepLevel, DeepRm};
use drm_core::linalg::Matrix;
use drm_core::probe::{probe_layers, spearman};
use drm_core::relax::relax_deep;
use drm_core::rng::SeedStream;
use drm_core::shallow::uniform_prior;

fn shift_level(in_dim: usize, shifts: &[usize], noise: f64) -> DeepLevel<f64> {
    let out_dim = in_dim + shifts.iter().max().unwrap();
    let transforms = shifts
        .iter()
        .map(|&s| {
            let mut m = Matrix::zeros(out_dim, in_dim);
            for j in 0..in_dim {
                m.set(j + s, j, 1.0);
            }
            m
        })
        .collect();
    DeepLevel {
        transforms,
        biases: vec![vec![0.0; out_dim]; shifts.len()],
        noise_diag: vec![noise; out_dim],
        prior: uniform_prior(shifts.len()),
    }
}

fn main() {
    for sigma in [0.1_f64, 0.3, 0.5] {
        let level3 = shift_level(2, &[0, 4], 1e-6);
        let level2 = shift_level(6, &[0, 2], 1e-6);
        let level1 = shift_level(8, &[0, 1], 1e-6);
        let model = DeepRm::new(
            uniform_prior(4),
            vec![1.0, 0.2, 0.2, 1.0, 0.9, 0.9, 0.5, 0.1],
            2,
            vec![level3, level2, level1],
            sigma * sigma,
        )
        .unwrap();
        let net = relax_deep(&model, None);
        let mut rng = SeedStream::new(77);
        let n = 1200;
        let mut input = Vec::new();
        let mut reps: Vec<Vec<Vec<f64>>> = vec![Vec::new(); 4]; // L1, L2, L3, scores
        let mut class = Vec::new();
        let mut gs: Vec<Vec<usize>> = vec![Vec::new(); 3];
        for _ in 0..n {
            let s = model.sample(None, true, &mut rng);
            let fwd = net.forward(&s.image).unwrap();
            input.push(s.image.clone());
            for l in 0..3 {
                reps[l].push(fwd.outputs[l].clone());
            }
            reps[3].push(fwd.outputs[3].clone());
            class.push(s.path.class_id);
            for l in 0..3 {
                gs[l].push(s.path.nuisance_ids[l]);
            }
        }
        let layers = vec![
            ("input".to_string(), input),
            ("l1".to_string(), reps[0].clone()),
            ("l2".to_string(), reps[1].clone()),
            ("l3".to_string(), reps[2].clone()),
            ("scores".to_string(), reps[3].clone()),
        ];
        let targets = vec![
            ("class".to_string(), class),
            ("g3_top".to_string(), gs[0].clone()),
            ("g2".to_string(), gs[1].clone()),
            ("g1_fine".to_string(), gs[2].clone()),
        ];
        let report = probe_layers(&layers, &targets, 5).unwrap();
        println!("sigma {sigma}:");
        for (v, name) in report.variable_names.iter().enumerate() {
            let profile: Vec<f64> = report.accuracy.iter().map(|row| row[v]).collect();
            let depths: Vec<f64> = (0..profile.len()).map(|i| i as f64).collect();
            println!(
                "  {name}: {:?} rho {:.2}",
                profile.iter().map(|a| (a * 100.0).round() / 100.0).collect::<Vec<_>>(),
                spearman(&depths, &profile)
            );
        }
    }
}
