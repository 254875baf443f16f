use annorank::geometry::{
    assign_ranks, assign_ranks_multi, center_distance, iou, ranks_from_overlap_and_distance, BBox,
    RankLabel,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Counts unit pixels covered by each integer box.
fn raster_iou(a: [i64; 4], b: [i64; 4]) -> f64 {
    let lo_x = a[0].min(b[0]);
    let hi_x = a[2].max(b[2]);
    let lo_y = a[1].min(b[1]);
    let hi_y = a[3].max(b[3]);
    let inside = |r: [i64; 4], x: i64, y: i64| x >= r[0] && x < r[2] && y >= r[1] && y < r[3];
    let (mut inter, mut union) = (0u64, 0u64);
    for y in lo_y..hi_y {
        for x in lo_x..hi_x {
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            inter += (ia && ib) as u64;
            union += (ia || ib) as u64;
        }
    }
    inter as f64 / union as f64
}

fn random_int_box(rng: &mut ChaCha8Rng) -> [i64; 4] {
    let x1 = rng.gen_range(0..60);
    let y1 = rng.gen_range(0..60);
    [x1, y1, x1 + rng.gen_range(1..40), y1 + rng.gen_range(1..40)]
}

fn to_box(r: [i64; 4]) -> BBox {
    BBox::new(r[0] as f64, r[1] as f64, r[2] as f64, r[3] as f64).unwrap()
}

#[test]
fn iou_matches_pixel_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let (a, b) = (random_int_box(&mut rng), random_int_box(&mut rng));
        let want = raster_iou(a, b);
        let got = iou(&to_box(a), &to_box(b));
        assert!((got - want).abs() < 1e-3, "{a:?} {b:?}: {got} vs {want}");
    }
}

#[test]
fn distance_example() {
    let a = BBox::new(0.0, 0.0, 2.0, 2.0).unwrap();
    let b = BBox::new(3.0, 5.0, 7.0, 9.0).unwrap();
    // centres (1, 1) and (5, 7)
    assert_eq!(center_distance(&a, &b), 52f64.sqrt());
}

#[test]
fn rank_order_fixture() {
    let gt = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
    let cands = [
        BBox::new(50.0, 50.0, 60.0, 60.0).unwrap(), // far
        BBox::new(5.0, 0.0, 15.0, 10.0).unwrap(),   // iou 1/3
        BBox::new(20.0, 0.0, 30.0, 10.0).unwrap(),  // near, no overlap
        BBox::new(0.0, 0.0, 10.0, 10.0).unwrap(),   // exact
    ];
    let r: Vec<u32> = assign_ranks(&cands, &gt)
        .into_iter()
        .map(RankLabel::value)
        .collect();
    assert_eq!(r, [4, 2, 3, 1]);
}

#[test]
fn multiple_ground_truths_use_best_match() {
    let gts = [
        BBox::new(0.0, 0.0, 10.0, 10.0).unwrap(),
        BBox::new(100.0, 0.0, 110.0, 10.0).unwrap(),
    ];
    let cands = [
        BBox::new(100.0, 0.0, 110.0, 10.0).unwrap(),
        BBox::new(2.0, 0.0, 12.0, 10.0).unwrap(),
        BBox::new(60.0, 0.0, 70.0, 10.0).unwrap(),
    ];
    let r: Vec<u32> = assign_ranks_multi(&cands, &gts)
        .into_iter()
        .map(RankLabel::value)
        .collect();
    assert_eq!(r, [1, 2, 3]);
}

#[test]
fn tied_keys_break_by_index() {
    let r = ranks_from_overlap_and_distance(&[(0.0, 5.0), (0.4, 1.0), (0.0, 5.0), (0.4, 9.0)]);
    let r: Vec<u32> = r.into_iter().map(RankLabel::value).collect();
    assert_eq!(r, [3, 1, 4, 2]);
}

fn arb_box() -> impl Strategy<Value = BBox> {
    (
        -100.0..100.0f64,
        -100.0..100.0f64,
        0.01..80.0f64,
        0.01..80.0f64,
    )
        .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h).unwrap())
}

proptest! {
    #[test]
    fn iou_is_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
        let v = iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v, iou(&b, &a));
        prop_assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn iou_is_scale_and_shift_invariant(a in arb_box(), b in arb_box(), s in 0.5..4.0f64, t in -50.0..50.0f64) {
        let map = |r: &BBox| BBox::new(r.x1() * s + t, r.y1() * s - t, r.x2() * s + t, r.y2() * s - t).unwrap();
        prop_assert!((iou(&map(&a), &map(&b)) - iou(&a, &b)).abs() < 1e-9);
    }

    #[test]
    fn ranks_are_a_permutation(cands in prop::collection::vec(arb_box(), 1..30), gt in arb_box()) {
        let mut r: Vec<u32> = assign_ranks(&cands, &gt).into_iter().map(RankLabel::value).collect();
        r.sort_unstable();
        prop_assert_eq!(r, (1..=cands.len() as u32).collect::<Vec<_>>());
    }

    #[test]
    fn overlapping_candidates_outrank_the_rest(cands in prop::collection::vec(arb_box(), 1..30), gt in arb_box()) {
        let r = assign_ranks(&cands, &gt);
        for (i, a) in cands.iter().enumerate() {
            for (j, b) in cands.iter().enumerate() {
                let (ia, ib) = (iou(a, &gt), iou(b, &gt));
                if ia > ib {
                    prop_assert!(r[i] < r[j]);
                }
                if ia == 0.0 && ib == 0.0 && center_distance(a, &gt) < center_distance(b, &gt) {
                    prop_assert!(r[i] < r[j]);
                }
            }
        }
    }
}
