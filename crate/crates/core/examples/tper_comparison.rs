//! Time-per-efficiency-ratio between two methods: relative time cost
//! divided by relative pool size.

use sirerag::evaluation::tper;

fn main() -> sirerag::Result<()> {
    // (dataset, TPQ of the larger pool, TPQ of the smaller pool, pool sizes)
    let rows = [
        ("MuSiQue", 2.653, 1.560, 35070, 12371),
        ("2WikiMultiHopQA", 1.974, 1.437, 19100, 6939),
        ("HotpotQA", 2.319, 1.502, 29934, 10031),
    ];
    for (name, ta, tb, pa, pb) in rows {
        println!("{name:<16} TPER {:.3}", tper(ta, tb, pa, pb)?);
    }
    Ok(())
}
