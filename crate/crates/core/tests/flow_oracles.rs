mod common;

use std::time::Instant;

use common::{interior_epe, shifted, textured, to_frame};
use synthact::flow::{estimate_flow, FlowParams};

#[test]
fn integer_shifts_are_recovered() {
    let n = 128;
    let base = textured(n, 42);
    let a = to_frame(n, &base);
    for (dx, dy) in [(2, 0), (1, 1), (0, 3), (-3, 2)] {
        let b = to_frame(n, &shifted(n, &base, dx, dy));
        let t = Instant::now();
        let f = estimate_flow(&a, &b, &FlowParams::default()).unwrap();
        let secs = t.elapsed().as_secs_f64();
        let epe = interior_epe(n, &f.u, &f.v, dx as f64, dy as f64);
        println!("shift ({dx},{dy}): epe {epe:.4} px in {secs:.3} s");
        assert!(epe < 0.25, "shift ({dx},{dy}) epe {epe}");
        assert!(secs < 10.0);
    }
}
