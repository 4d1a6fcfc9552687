use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use flowsched::dataset::load_instance;
use flowsched::samples::toy_project;
use flowsched::ssgs::{execute_list, PriorityList};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

#[test]
fn toy_psplib_file_matches_sample() {
    assert_eq!(load_instance(&fixture("toy.sm")).unwrap(), toy_project());
}

#[test]
fn toy_list_file_gives_makespan_15() {
    let toy = load_instance(&fixture("toy.sm")).unwrap();
    let list = PriorityList::read(
        &toy,
        BufReader::new(File::open(fixture("toy.list")).unwrap()),
    )
    .unwrap();
    let s = execute_list(&toy, &list, &toy.durations()).unwrap();
    assert_eq!(s.start, vec![0, 0, 0, 6, 2, 2, 11, 15]);
}
