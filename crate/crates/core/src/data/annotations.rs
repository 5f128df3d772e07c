use super::DataError;

/// One annotated position: pedestrian `ped_id` stands at `(x, y)` meters in
/// frame `frame_id`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnotationRecord {
    pub frame_id: u64,
    pub ped_id: u64,
    pub x: f64,
    pub y: f64,
}

/// Parses annotation text. Records come back sorted by (frame, ped); blank
/// and `#`-comment lines are skipped; malformed lines and duplicate
/// (frame, ped) pairs are rejected.
pub fn parse_annotations(text: &str) -> Result<Vec<AnnotationRecord>, DataError> {
    let mut records = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(DataError::Parse {
                line,
                msg: format!("expected 4 fields `frame ped x y`, got {}", fields.len()),
            });
        }
        let frame_id: u64 = fields[0]
            .parse()
            .map_err(|_| DataError::Parse { line, msg: format!("bad frame id {:?}", fields[0]) })?;
        let ped_id: u64 = fields[1]
            .parse()
            .map_err(|_| DataError::Parse { line, msg: format!("bad pedestrian id {:?}", fields[1]) })?;
        if ped_id == 0 {
            return Err(DataError::Parse { line, msg: "pedestrian id must be positive".into() });
        }
        let x: f64 = fields[2]
            .parse()
            .map_err(|_| DataError::Parse { line, msg: format!("bad x coordinate {:?}", fields[2]) })?;
        let y: f64 = fields[3]
            .parse()
            .map_err(|_| DataError::Parse { line, msg: format!("bad y coordinate {:?}", fields[3]) })?;
        records.push(AnnotationRecord { frame_id, ped_id, x, y });
    }
    records.sort_by_key(|r| (r.frame_id, r.ped_id));
    for pair in records.windows(2) {
        if pair[0].frame_id == pair[1].frame_id && pair[0].ped_id == pair[1].ped_id {
            return Err(DataError::Integrity(format!(
                "duplicate record for frame {} pedestrian {}",
                pair[0].frame_id, pair[0].ped_id
            )));
        }
    }
    Ok(records)
}

/// Serializes records in the annotation format; `parse_annotations` of the
/// output reproduces the input exactly.
pub fn write_annotations(records: &[AnnotationRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&format!("{} {} {} {}\n", r.frame_id, r.ped_id, r.x, r.y));
    }
    out
}

/// Constant stride of the annotated frame sequence, or `None` when fewer than
/// two distinct frames exist. A non-constant stride is an integrity error.
pub fn frame_step(records: &[AnnotationRecord]) -> Result<Option<u64>, DataError> {
    let mut frames: Vec<u64> = records.iter().map(|r| r.frame_id).collect();
    frames.sort_unstable();
    frames.dedup();
    if frames.len() < 2 {
        return Ok(None);
    }
    let step = frames[1] - frames[0];
    if step == 0 {
        return Err(DataError::Integrity("zero frame stride".into()));
    }
    for pair in frames.windows(2) {
        if pair[1] - pair[0] != step {
            return Err(DataError::Integrity(format!(
                "frames are not an arithmetic sequence: stride {} between {} and {}, expected {}",
                pair[1] - pair[0],
                pair[0],
                pair[1],
                step
            )));
        }
    }
    Ok(Some(step))
}
