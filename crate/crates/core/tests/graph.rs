use std::path::Path;

use gacm_core::config::PolicyBuilder;
use gacm_core::engine::evaluate;
use gacm_core::graph::{build_graph, check_well_typed, export_graph, GraphFormat};
use gacm_core::model::{EntityKind, Priority};

fn golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap();
    assert_eq!(actual, expected, "{name} differs; rerun with UPDATE_GOLDEN=1 after checking the output");
}

#[test]
fn nurse_prohibition_dot() {
    let mut b = PolicyBuilder::new();
    b.principal("n1", "C. Espinosa", "RN")
        .named(EntityKind::Category, "nurse", "Nurse")
        .named(EntityKind::Category, "nurse_rn", "Registered nurse")
        .edge("nurse_rn", "nurse")
        .named(EntityKind::Action, "create", "Create")
        .named(EntityKind::Resource, "prescription", "Prescription")
        .pca("n1", "nurse")
        .barca("nurse_rn", "create", "prescription");
    let policy = b.build().unwrap();
    let eval = evaluate(&policy, &[], Priority::Permissions).unwrap();
    let g = build_graph(&eval.pars, &policy.registry);
    check_well_typed(&g).unwrap();
    let dot = export_graph(&g, GraphFormat::Dot);
    assert_eq!(dot.matches("style=dashed").count(), 1);
    golden("nurse-deny.dot", &dot);
    golden("nurse-deny.json", &export_graph(&g, GraphFormat::NodeLink));
}
