use tripkg::synth::{generate, SynthConfig};
use tripkg::trip_data::{build_profiles, parse_trips, split_periods};

#[test]
fn default_population_mostly_has_potential_destinations() {
    let mut fractions = Vec::new();
    for seed in 0..20 {
        let out = generate(&SynthConfig {
            seed,
            ..SynthConfig::default()
        })
        .unwrap();
        let potentials = out.potential_destinations();
        let with = potentials.values().filter(|p| !p.is_empty()).count();
        fractions.push(with as f64 / out.vehicle_groups.len() as f64);
    }
    let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
    let worst = fractions.iter().copied().fold(1.0, f64::min);
    assert!(mean >= 0.9 && worst >= 0.85, "mean {mean:.3}, worst {worst:.3}, {fractions:?}");
}

#[test]
fn emitted_trips_reparse_into_the_same_windows() {
    let cfg = SynthConfig {
        num_individuals: 120,
        seed: 4,
        ..SynthConfig::default()
    };
    let out = generate(&cfg).unwrap();
    let files = out.files();
    let trips = &files.iter().find(|(n, _)| *n == "trips.csv").unwrap().1;
    let records = parse_trips(trips.as_bytes(), &out.zones).unwrap();
    let periods = split_periods(&records, &out.split);
    assert_eq!(periods.discarded, 0);
    assert_eq!(periods.observed, out.observed);
    assert_eq!(build_profiles(&periods.observed, &periods.future), out.profiles);
}
