mod common;

use common::tiny;
use shapetune::runner::journal::{read_journal, LandscapeRecord};
use shapetune::runner::{export, load_sweep, run_sweep, ExportKind};

#[test]
fn sweep_journals_every_training_and_exports() {
    let exp = tiny(&[]);
    let dir = tempfile::tempdir().unwrap();
    let grid = run_sweep(&exp, dir.path()).unwrap();
    let journal = read_journal::<LandscapeRecord>(&dir.path().join("landscape.jsonl")).unwrap();
    assert_eq!(journal.records.len(), 4 * 4 * 2);
    assert!(grid.cells.iter().flatten().all(|c| c.failed || c.n == 2));
    assert_eq!(load_sweep(&exp, dir.path()).unwrap(), grid);
    // frozen parameters stay at their defaults
    for r in &journal.records {
        assert_eq!(r.values["dist"], 100.0);
        assert_eq!(r.values["batch_size"], 100.0);
    }
    let files = export(&exp, dir.path(), ExportKind::Landscape).unwrap();
    let bytes: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(f).unwrap()).collect();
    export(&exp, dir.path(), ExportKind::Landscape).unwrap();
    for (f, b) in files.iter().zip(&bytes) {
        assert_eq!(&std::fs::read(f).unwrap(), b);
    }
    let text = String::from_utf8(bytes[0].clone()).unwrap();
    assert!(text.starts_with("learning_rate[log],vel[linear],mean,std,n,failed\n"));
    assert_eq!(text.lines().count(), 17);
}
