use std::fs;
use std::path::Path;

use gacm_core::engine::corpus::{self, standard_schema};
use gacm_core::rulelang::{parse_rules, print_rules};

fn fixpoint(name: &str, src: &str) {
    let schema = standard_schema();
    let parsed = parse_rules(src, &schema).unwrap_or_else(|e| panic!("{name}: {e}"));
    assert!(!parsed.is_empty(), "{name}");
    let printed = print_rules(&parsed);
    let reparsed = parse_rules(&printed, &schema).unwrap_or_else(|e| panic!("{name} reprinted: {e}\n{printed}"));
    assert_eq!(reparsed, parsed, "{name}");
    assert_eq!(print_rules(&reparsed), printed, "{name}");
}

#[test]
fn bundled_rules_reach_a_fixpoint() {
    for (name, src) in corpus::SOURCES {
        fixpoint(name, src);
    }
}

#[test]
fn transcribed_listings_parse_and_reach_a_fixpoint() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/listings");
    let mut names: Vec<_> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    assert_eq!(names.len(), 8);
    for path in names {
        let src = fs::read_to_string(&path).unwrap();
        fixpoint(&path.display().to_string(), &src);
    }
}

#[test]
fn listing_shapes() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/listings");
    let read = |f: &str| parse_rules(&fs::read_to_string(dir.join(f)).unwrap(), &standard_schema()).unwrap();
    let add = read("add-customs-pcas.drl");
    assert_eq!(add[0].name, "Rule add customs Pcas");
    assert_eq!((add[0].salience, add[0].patterns.len(), add[0].actions.len()), (0, 1, 1));
    let perms = read("pars-permissions.drl");
    assert_eq!((perms[0].salience, perms[0].patterns.len()), (-100, 4));
    let conflicts = read("conflicts-remove-barca.drl");
    assert_eq!((conflicts[0].salience, conflicts[0].patterns.len()), (-60, 5));
    let sealed = read("sealed-resources.drl");
    assert_eq!((sealed[0].patterns.len(), sealed[0].actions.len()), (5, 3));
}
