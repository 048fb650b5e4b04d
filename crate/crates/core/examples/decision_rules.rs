//! Applies the detection, tool and technique rules to hand-picked
//! probabilities, including the boundary cases.
//!
//! cargo run --example decision_rules

use obfscan::detector::{is_obfuscated, resolve_techniques, resolve_tool, TechniqueProbs, ToolProbs};

fn main() {
    for p in [0.9, 0.5, 0.4999] {
        println!("p_obfuscated {p:<7} -> obfuscated: {}", is_obfuscated(p));
    }
    println!();
    for p in [[0.4, 0.3, 0.2], [0.9, 0.6, 0.1], [0.7, 0.7, 0.1], [0.1, 0.7, 0.7], [0.1, 0.2, 0.5]] {
        println!("tool probs {p:?} -> {}", resolve_tool(&ToolProbs::new(p)));
    }
    println!();
    for p in [[0.6, 0.5, 0.51], [0.0, 0.0, 0.0], [1.0, 1.0, 1.0]] {
        println!("technique probs {p:?} -> {}", resolve_techniques(&TechniqueProbs::new(p)));
    }
}
