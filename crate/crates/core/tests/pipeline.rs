use batchuq::assess::BatchEstimates;
use batchuq::confidence::ConfidenceRegion;
use batchuq::{stream, BatchLayout, Functional, Method, NormOrder, Overlap, SampleSeries, SizePolicy, TableSource};
use rand::Rng;
use rand_distr::StandardNormal;

fn ar1(n: usize, phi: f64, seed: u64, k: u64) -> SampleSeries {
    let mut rng = stream::rng(seed, "ar1", n as u64, k);
    let mut x = 0.0;
    let mut out = Vec::with_capacity(n);
    for _ in 0..200 + n {
        let z: f64 = rng.sample(StandardNormal);
        x = phi * x + z;
        out.push(x);
    }
    SampleSeries::univariate(out.split_off(200)).unwrap()
}

#[test]
fn mean_intervals_cover_on_dependent_data() {
    let tables = TableSource::new(None, 20_000, 1024, 2).unwrap();
    let n = 2000;
    let reps = 300;
    for method in [Method::Ob1, Method::Ob2] {
        let layout = BatchLayout::from_policy(n, SizePolicy::Fraction(0.1), Overlap::None).unwrap();
        let hits = (0..reps)
            .filter(|&k| {
                let s = ar1(n, 0.5, 9, k);
                ConfidenceRegion::build(&s, &layout, &Functional::Mean, method, NormOrder::L2, 0.1, &tables)
                    .unwrap()
                    .contains(&[0.0])
                    .unwrap()
            })
            .count();
        let cov = hits as f64 / reps as f64;
        let se = (0.9f64 * 0.1 / reps as f64).sqrt();
        assert!((cov - 0.9).abs() < 4.0 * se, "{method}: coverage {cov}");
    }
}

#[test]
fn two_dimensional_regions() {
    let tables = TableSource::new(None, 5_000, 512, 2).unwrap();
    let n = 1000;
    let mut rng = stream::rng(4, "bivariate", 0, 0);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            vec![a, 0.5 * a + b]
        })
        .collect();
    let s = SampleSeries::from_rows(&rows).unwrap();
    let layout = BatchLayout::from_policy(n, SizePolicy::Fraction(0.2), Overlap::Full).unwrap();
    let f = Functional::quantiles(vec![0.5, 0.5]).unwrap();
    for p in [NormOrder::L1, NormOrder::L2, NormOrder::LInf] {
        let r = ConfidenceRegion::build(&s, &layout, &f, Method::Ob1, p, 0.05, &tables).unwrap();
        assert!(r.contains(r.center()).unwrap());
        assert!(!r.contains(&[10.0, 10.0]).unwrap());
        assert!(r.interval().is_err());
    }
    let e = BatchEstimates::compute(&s, &layout, &f).unwrap().ensemble(Method::Ob1);
    assert_eq!(e.estimate_error_quantiles(&[0.8]).unwrap().len(), 2);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    use batchuq::harness::{self, ExperimentPlan};
    let plan = ExperimentPlan {
        n_grid: vec![300],
        macro_reps: 24,
        side_reps: 40,
        truth_n: 20_000,
        ..ExperimentPlan::gamma()
    };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let tables = TableSource::new(None, 3000, 256, 8).unwrap();
            harness::run_experiment(&plan, &tables).unwrap()
        })
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(serde_json::to_string(&one).unwrap(), serde_json::to_string(&run(2)).unwrap());
}
