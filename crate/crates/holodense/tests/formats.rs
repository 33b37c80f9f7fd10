use holodense::hexfloat::{self, Hf};
use holodense::wire::{word_from_json, word_to_json};
use holodense_core::linalg::CMatrix;
use holodense_core::{AffineMap, AutWord, Overshear, Poly, Shear, C64};
use proptest::prelude::*;

fn c64() -> impl Strategy<Value = C64> {
    (any::<f64>(), -3.0f64..3.0).prop_filter_map("finite", |(re, im)| re.is_finite().then(|| C64::new(re.clamp(-1e3, 1e3), im)))
}

fn word() -> impl Strategy<Value = AutWord> {
    let prim = (0u8..3, prop::collection::vec(c64(), 2), prop::collection::vec(c64(), 2), prop::collection::vec(c64(), 3), prop::collection::vec(c64(), 4))
        .prop_map(|(k, v, l, h, m)| -> Option<holodense_core::Primitive> {
            let h = Poly::new(h);
            match k {
                0 => Shear::new(&v, &l, h).ok().map(Into::into),
                1 => Overshear::new(&v, &l, &[C64::new(1.0, 0.0), C64::new(0.5, -0.5)], h).ok().map(Into::into),
                _ => {
                    let rows = vec![vec![C64::new(1.0, 0.0) + m[0] * 1e-3, m[1] * 1e-3], vec![m[2] * 1e-3, C64::new(1.0, 0.0) + m[3] * 1e-3]];
                    AffineMap::new(CMatrix::from_rows(&rows), v).ok().map(Into::into)
                }
            }
        });
    prop::collection::vec(prim, 0..5).prop_map(|ps| AutWord::from_primitives(2, ps.into_iter().flatten().collect()).unwrap())
}

proptest! {
    #[test]
    fn hexfloat_round_trips_bits(bits in any::<u64>()) {
        let x = f64::from_bits(bits);
        let back = hexfloat::parse(&hexfloat::format(x)).unwrap();
        if x.is_nan() {
            prop_assert!(back.is_nan());
        } else {
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }

    #[test]
    fn hf_json_round_trips(x in any::<f64>().prop_filter("not nan", |x| !x.is_nan())) {
        let text = serde_json::to_string(&Hf(x)).unwrap();
        let back: Hf = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back.0.to_bits(), x.to_bits());
    }

    #[test]
    fn words_round_trip_exactly(w in word()) {
        let text = word_to_json(&w);
        let back = word_from_json(&text).unwrap();
        prop_assert_eq!(&back, &w);
        prop_assert_eq!(word_to_json(&back), text);
    }
}

#[test]
fn decimal_numbers_are_accepted() {
    let h: Hf = serde_json::from_str("0.5").unwrap();
    assert_eq!(h.0, 0.5);
    let h: Hf = serde_json::from_str("\"0x1.8p-1\"").unwrap();
    assert_eq!(h.0, 0.75);
}

#[test]
fn malformed_words_are_rejected() {
    assert!(word_from_json("{").is_err());
    let bad = r#"{"n":2,"primitives":[{"kind":"shear","v":[["0x0p+0","0x0p+0"],["0x0p+0","0x0p+0"]],"form":[["0x1p+0","0x0p+0"],["0x0p+0","0x0p+0"]],"h":[]}]}"#;
    assert!(word_from_json(bad).is_err());
}
