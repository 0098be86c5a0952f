//! Acceptance criterion 10: re-running the shipped suite produces
//! byte-identical CSV bodies (the wall_ms column is the one timing cell
//! and is masked before comparison).

use std::collections::BTreeMap;
use std::path::Path;

use mixdense_cli::runner::run_suite;

/// CSV text with every `wall_ms` cell blanked, keyed by the header.
fn masked(text: &str) -> String {
    let mut lines = text.lines();
    let header = match lines.next() {
        Some(h) => h,
        None => return String::new(),
    };
    let wall_col = header.split(',').position(|c| c == "wall_ms");
    let mut out = String::from(header);
    out.push('\n');
    for line in lines {
        match wall_col {
            Some(col) => {
                let cells: Vec<&str> = line.split(',').collect();
                let mut masked_cells: Vec<String> =
                    cells.iter().map(|c| c.to_string()).collect();
                if col < masked_cells.len() {
                    masked_cells[col] = String::new();
                }
                out.push_str(&masked_cells.join(","));
            }
            None => out.push_str(line),
        }
        out.push('\n');
    }
    out
}

fn collect_csvs(dir: &Path, root: &Path, into: &mut BTreeMap<String, String>) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            collect_csvs(&path, root, into);
        } else if path.extension().is_some_and(|e| e == "csv") {
            let rel = path.strip_prefix(root).unwrap().display().to_string();
            let text = std::fs::read_to_string(&path).unwrap();
            into.insert(rel, masked(&text));
        }
    }
}

#[test]
fn criterion_10_suite_rerun_is_byte_identical() {
    let suite_src = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../suites/acceptance.toml");
    let suite_text = std::fs::read_to_string(&suite_src).expect("shipped suite present");

    let mut bodies = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let suite_path = dir.path().join("acceptance.toml");
        std::fs::write(&suite_path, &suite_text).unwrap();
        let outcome = run_suite(&suite_path).unwrap();
        assert_eq!(outcome.runs.len(), 5, "shipped suite runs all five modes");
        let mut csvs = BTreeMap::new();
        collect_csvs(dir.path(), dir.path(), &mut csvs);
        assert!(csvs.len() >= 7, "expected per-run CSVs plus summary, got {}", csvs.len());
        bodies.push(csvs);
    }
    let (first, second) = (&bodies[0], &bodies[1]);
    assert_eq!(
        first.keys().collect::<Vec<_>>(),
        second.keys().collect::<Vec<_>>(),
        "both invocations must produce the same files"
    );
    let mut identical = true;
    for (name, body) in first {
        if second[name] != *body {
            identical = false;
            eprintln!("criterion 10: {name} differs between runs");
        }
    }
    println!(
        "criterion 10 (determinism): {} — {} CSV bodies compared (wall_ms masked)",
        if identical { "PASS" } else { "FAIL" },
        first.len()
    );
    assert!(identical, "suite outputs must be byte-identical");
}
