use earthvl_core::qa::{QAPair, QType};
use earthvl_web::DemoScene;

#[test]
fn rotated_cross_keeps_direction_answer() {
    let s = DemoScene::build("cross", 3).unwrap();
    let r = s.apply("rot90cw").unwrap();
    let dira = |qa: &[QAPair]| qa.iter().find(|q| q.qtype == QType::DirA).unwrap().answer.clone();
    assert_eq!(dira(s.qa()), "E--W and N--S");
    assert_eq!(dira(r.qa()), dira(&r.regenerate().unwrap()));
}

#[test]
fn rgba_has_four_bytes_per_cell() {
    let s = DemoScene::build("blobs", 1).unwrap();
    assert_eq!(s.rgba().len(), s.width() * s.height() * 4);
}

#[test]
fn unknown_inputs_are_errors() {
    assert!(DemoScene::build("nope", 0).is_err());
    assert!(DemoScene::build("cross", 0).unwrap().apply("spin").is_err());
}
