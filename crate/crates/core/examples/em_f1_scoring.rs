//! Answer normalization and the EM / token-F1 scores.

use sirerag::evaluation::{normalize_answer, score_em_f1};

fn main() -> sirerag::Result<()> {
    let cases: [(&str, &[&str]); 5] = [
        ("The Nicholas Bacon.", &["Nicholas Bacon"]),
        ("Sir Nicholas Bacon", &["Nicholas Bacon"]),
        ("London, England", &["York House", "London"]),
        ("an apple", &["Apple!"]),
        ("Tudor", &["Lord Keeper of the Great Seal"]),
    ];
    for (pred, golds) in cases {
        let golds: Vec<String> = golds.iter().map(|s| s.to_string()).collect();
        let (em, f1) = score_em_f1(pred, &golds)?;
        println!("{:<22} -> {:<18} em={em} f1={f1:.3}", format!("{pred:?}"), format!("{:?}", normalize_answer(pred)));
    }
    Ok(())
}
