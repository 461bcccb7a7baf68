use std::path::Path;

use alpha_measure_cli::ScenarioConfig;
use proptest::prelude::*;
use serde_json::{Map, Value};

const BUNDLED: &str = include_str!("../examples/disc_quarter.json");

/// Re-serializes `v` with object keys in the order given by `order`.
fn shuffled(v: &Value, order: &mut impl FnMut(usize) -> usize, indent: bool) -> String {
    fn walk(v: &Value, order: &mut dyn FnMut(usize) -> usize, out: &mut String, indent: bool) {
        match v {
            Value::Object(m) => {
                let mut keys: Vec<&String> = m.keys().collect();
                for i in (1..keys.len()).rev() {
                    keys.swap(i, order(i + 1));
                }
                out.push('{');
                for (j, k) in keys.iter().enumerate() {
                    if j > 0 {
                        out.push(',');
                    }
                    if indent {
                        out.push_str("\n  ");
                    }
                    out.push_str(&serde_json::to_string(k).unwrap());
                    out.push_str(if indent { ": " } else { ":" });
                    walk(&m[*k], order, out, indent);
                }
                out.push('}');
            }
            Value::Array(a) => {
                out.push('[');
                for (j, x) in a.iter().enumerate() {
                    if j > 0 {
                        out.push_str(", ");
                    }
                    walk(x, order, out, indent);
                }
                out.push(']');
            }
            other => out.push_str(&serde_json::to_string(other).unwrap()),
        }
    }
    let mut out = String::new();
    walk(v, order, &mut out, indent);
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hash_ignores_key_order_and_layout(picks in proptest::collection::vec(any::<usize>(), 64), indent in any::<bool>()) {
        let base: Value = serde_json::from_str(BUNDLED).unwrap();
        let mut it = picks.into_iter().cycle();
        let mut order = |n: usize| it.next().unwrap() % n;
        let text = shuffled(&base, &mut order, indent);
        let origin = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/disc_quarter.json");
        let a = ScenarioConfig::from_json_str(BUNDLED, &origin).unwrap();
        let b = ScenarioConfig::from_json_str(&text, &origin).unwrap();
        prop_assert_eq!(a.hash, b.hash);
    }

    #[test]
    fn hash_tracks_the_seed(seed in 0u64..1_000_000) {
        let mut v: Map<String, Value> = serde_json::from_str(BUNDLED).unwrap();
        let origin = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/disc_quarter.json");
        let base = ScenarioConfig::from_json_str(BUNDLED, &origin).unwrap();
        v.insert("seed".into(), Value::from(seed));
        let changed = ScenarioConfig::from_json_str(&Value::Object(v).to_string(), &origin).unwrap();
        prop_assert_eq!(seed == 7, changed.hash == base.hash);
    }
}
