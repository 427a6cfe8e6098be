// Writes a bundle in the binary container, reads it back, and converts
// a CSV matrix on the way.
//
// ```bash
// cargo run --example tensor_roundtrip
// ```

use uosr::tensorio::{
    decode_matrix, encode_matrix, load_matrix, parse_matrix_csv, write_matrix, EvaluationBundle, Format,
    LabelVector,
};

pub fn run_example() -> uosr::Result<()> {
    let logits = parse_matrix_csv("2.0,0.1,-1.0\n0.3,0.2,0.9\n")?;
    let bytes = encode_matrix(&logits);
    println!("header {:02X?}", &bytes[..7]);
    println!("{} bytes for a {}x{} matrix", bytes.len(), logits.rows(), logits.cols());
    assert_eq!(decode_matrix(&bytes)?, logits);

    let dir = std::env::temp_dir().join(format!("uosr-roundtrip-{}", std::process::id()));
    let path = dir.join("logits.bin");
    std::fs::create_dir_all(&dir).map_err(|e| uosr::Error::Io { path: dir.clone(), source: e })?;
    write_matrix(&logits, &path)?;
    assert_eq!(load_matrix(&path, Format::Binary)?, logits);

    let bundle = EvaluationBundle {
        test_logits: Some(logits),
        test_labels: LabelVector(vec![0, 1]),
        ..EvaluationBundle::default()
    };
    let written = bundle.save(dir.join("bundle"))?;
    let back = EvaluationBundle::load_dir(dir.join("bundle"))?;
    assert_eq!(back, bundle);
    println!("bundle files: {:?}", written.iter().filter_map(|p| p.file_name()).collect::<Vec<_>>());
    let _ = std::fs::remove_dir_all(&dir);
    Ok(())
}

fn main() -> uosr::Result<()> {
    run_example()
}
