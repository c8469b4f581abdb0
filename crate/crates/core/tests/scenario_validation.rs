use nalgebra::dvector;
use netsp::oracle::{estimate_violation, solve_lp_by_vertices};
use netsp::problems::{halfspace_lp, sampled_halfspace_family};
use netsp::rng::{stream, Purpose};
use netsp::scenario::{partition_samples_with, sample_complexity, PartitionRule, SampleComplexityParams, Support};

const OFFSETS: (f64, f64) = (0.5, 1.5);

fn counts(required: u64, nodes: usize) -> Vec<usize> {
    let caps = vec![required; nodes];
    let p = partition_samples_with(required, &caps, PartitionRule::Proportional).unwrap();
    p.counts.iter().map(|&c| c as usize).collect()
}

#[test]
fn scenario_solution_meets_violation_level() {
    let params = SampleComplexityParams::new(0.1, 1e-3, 2).unwrap();
    let n_bin = sample_complexity(&params).unwrap();
    let family = sampled_halfspace_family(2).unwrap();
    let support = Support::UnitDirection { dim: 2, offset_lo: OFFSETS.0, offset_hi: OFFSETS.1 };
    for seed in 0..5 {
        let problem = halfspace_lp(dvector![1.0, 0.5], 10.0, OFFSETS, &counts(n_bin, 4), seed).unwrap();
        let sol = solve_lp_by_vertices(&problem).unwrap();
        let mut rng = stream(seed, Purpose::Validation, 0);
        let est = estimate_violation(&sol.theta, &family, &support, 20_000, &mut rng).unwrap();
        assert!(
            est.probability <= params.epsilon + 3.0 * est.std_error,
            "seed {seed}: {} > {}",
            est.probability,
            params.epsilon
        );
    }
}
