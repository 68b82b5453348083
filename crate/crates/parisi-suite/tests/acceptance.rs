//! Runs the acceptance battery and prints one line per criterion. Criteria
//! that fail are reported, not hidden; the test fails only on a panic.

use std::io::Write;

#[test]
fn acceptance() {
    // written to the raw handle so the table shows without --nocapture
    let mut err = std::io::stderr();
    writeln!(err).unwrap();
    let mut results = Vec::new();
    for (i, criterion) in parisi_suite::CRITERIA.iter().enumerate() {
        let r = criterion();
        assert_eq!(r.id as usize, i + 1);
        writeln!(err, "{}", r.line()).unwrap();
        results.push(r);
    }
    let passed = results.iter().filter(|r| r.passed).count();
    writeln!(err, "acceptance: {passed}/{} criteria passed", results.len()).unwrap();
}
