use edgegae::io::{dataset::dataset_to_string, format_coord, heatmap::heatmap_to_string, parse_dataset, parse_heatmap};
use edgegae_core::tsp::{Instance, Point};
use edgegae_core::Heatmap;
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = Instance> {
    (4usize..30).prop_flat_map(|n| {
        (
            prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), n),
            Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
        )
            .prop_map(|(xy, order)| {
                let coords = xy.into_iter().map(|(x, y)| Point::new(x, y)).collect();
                Instance::new(0, coords).unwrap().with_tour(order).unwrap()
            })
    })
}

proptest! {
    #[test]
    fn coordinates_round_trip_exactly(x in 0.0f64..=1.0) {
        prop_assert_eq!(format_coord(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn dataset_round_trip(mut data in prop::collection::vec(instance(), 0..8)) {
        for (i, inst) in data.iter_mut().enumerate() {
            inst.id = i as u64;
        }
        let text = dataset_to_string(&data).unwrap();
        prop_assert_eq!(parse_dataset(&text).unwrap(), data);
    }

    #[test]
    fn heatmap_round_trip(n in 2usize..12, raw in prop::collection::vec((0usize..100, 0usize..100, 0.0f64..=1.0), 0..60)) {
        let (edges, probs): (Vec<_>, Vec<_>) = raw.into_iter().map(|(s, d, p)| ((s % n, (s + 1 + d % (n - 1)) % n), p)).unzip();
        let h = Heatmap::new(n, edges, probs).unwrap();
        prop_assert_eq!(parse_heatmap(&heatmap_to_string(&h)).unwrap(), h);
    }
}
