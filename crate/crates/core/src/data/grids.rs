use super::DataError;

/// Channel-major raster of `[channels, height, width]` values in [0, 1];
/// the stand-in for a scene frame.
#[derive(Debug, Clone)]
pub struct FrameRaster {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

/// Integer class-id grid with ids in `[0, class_count)`.
#[derive(Debug, Clone)]
pub struct SemanticGrid {
    pub height: usize,
    pub width: usize,
    pub class_count: usize,
    pub ids: Vec<u32>,
}

fn header<'a>(
    text: &'a str,
    magic: &str,
) -> Result<(usize, usize, usize, std::str::Lines<'a>), DataError> {
    let mut lines = text.lines();
    let first = lines.next().ok_or_else(|| DataError::Format(format!("{magic}: empty file")))?;
    if first.trim() != format!("{magic} 1") {
        return Err(DataError::Format(format!("{magic}: bad magic line {first:?} (expected `{magic} 1`)")));
    }
    let dims = lines.next().ok_or_else(|| DataError::Format(format!("{magic}: missing dimension line")))?;
    let parts: Vec<&str> = dims.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(DataError::Format(format!("{magic}: dimension line must be `H W C`, got {dims:?}")));
    }
    let parse = |s: &str| -> Result<usize, DataError> {
        s.parse::<usize>().map_err(|_| DataError::Format(format!("{magic}: bad dimension {s:?}")))
    };
    let (h, w, c) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
    if h == 0 || w == 0 || c == 0 {
        return Err(DataError::Format(format!("{magic}: dimensions must be positive, got {h} {w} {c}")));
    }
    Ok((h, w, c, lines))
}

/// Parses the `SGRID` semantic class-grid format.
pub fn parse_sgrid(text: &str) -> Result<SemanticGrid, DataError> {
    let (h, w, c, lines) = header(text, "SGRID")?;
    let mut ids = Vec::with_capacity(h * w);
    let mut rows = 0;
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<&str> = line.split_whitespace().collect();
        if row.len() != w {
            return Err(DataError::Format(format!("SGRID: row {rows} has {} ids, expected {w}", row.len())));
        }
        for s in row {
            let id: u32 = s.parse().map_err(|_| DataError::Format(format!("SGRID: bad class id {s:?}")))?;
            if id as usize >= c {
                return Err(DataError::Format(format!("SGRID: class id {id} out of range for {c} classes")));
            }
            ids.push(id);
        }
        rows += 1;
    }
    if rows != h {
        return Err(DataError::Format(format!("SGRID: got {rows} rows, expected {h}")));
    }
    Ok(SemanticGrid { height: h, width: w, class_count: c, ids })
}

pub fn write_sgrid(grid: &SemanticGrid) -> String {
    let mut out = format!("SGRID 1\n{} {} {}\n", grid.height, grid.width, grid.class_count);
    for r in 0..grid.height {
        let row: Vec<String> =
            (0..grid.width).map(|c| grid.ids[r * grid.width + c].to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// Parses the `FGRID` frame-raster format (channel-major rows).
pub fn parse_fgrid(text: &str) -> Result<FrameRaster, DataError> {
    let (h, w, c, lines) = header(text, "FGRID")?;
    let mut data = Vec::with_capacity(c * h * w);
    let mut rows = 0;
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<&str> = line.split_whitespace().collect();
        if row.len() != w {
            return Err(DataError::Format(format!("FGRID: row {rows} has {} values, expected {w}", row.len())));
        }
        for s in row {
            let v: f64 = s.parse().map_err(|_| DataError::Format(format!("FGRID: bad value {s:?}")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(DataError::Format(format!("FGRID: value {v} outside [0, 1]")));
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows != c * h {
        return Err(DataError::Format(format!("FGRID: got {rows} rows, expected {} (H rows per channel)", c * h)));
    }
    Ok(FrameRaster { channels: c, height: h, width: w, data })
}

pub fn write_fgrid(raster: &FrameRaster) -> String {
    let mut out = format!("FGRID 1\n{} {} {}\n", raster.height, raster.width, raster.channels);
    for ch in 0..raster.channels {
        for r in 0..raster.height {
            let base = (ch * raster.height + r) * raster.width;
            let row: Vec<String> =
                raster.data[base..base + raster.width].iter().map(|v| v.to_string()).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    out
}

/// Nearest-neighbor resample of a class grid onto a `target_h x target_w`
/// grid. Only exact integer up/down factors per dimension are accepted.
pub fn nearest_resample(grid: &SemanticGrid, target_h: usize, target_w: usize) -> Result<Vec<u32>, DataError> {
    let ok = |src: usize, dst: usize| dst % src == 0 || src % dst == 0;
    if !ok(grid.height, target_h) || !ok(grid.width, target_w) {
        return Err(DataError::Config(format!(
            "semantic grid {}x{} does not align with raster {target_h}x{target_w} by an integer factor",
            grid.height, grid.width
        )));
    }
    let mut out = Vec::with_capacity(target_h * target_w);
    for r in 0..target_h {
        let sr = r * grid.height / target_h;
        for c in 0..target_w {
            let sc = c * grid.width / target_w;
            out.push(grid.ids[sr * grid.width + sc]);
        }
    }
    Ok(out)
}

/// One-hot expansion of class ids to a `[classes, h, w]` channel-major buffer.
pub fn one_hot(ids: &[u32], h: usize, w: usize, classes: usize) -> Vec<f64> {
    let mut out = vec![0.0; classes * h * w];
    for (i, &id) in ids.iter().enumerate() {
        out[id as usize * h * w + i] = 1.0;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgrid_header_and_shape() {
        let g = parse_sgrid("SGRID 1\n2 3 4\n0 1 2\n3 0 1\n").unwrap();
        assert_eq!((g.height, g.width, g.class_count), (2, 3, 4));
        assert_eq!(g.ids, vec![0, 1, 2, 3, 0, 1]);
    }

    #[test]
    fn sgrid_class_id_out_of_range() {
        let err = parse_sgrid("SGRID 1\n1 2 4\n0 4\n").unwrap_err();
        assert!(matches!(err, DataError::Format(_)), "{err}");
    }

    #[test]
    fn sgrid_bad_magic() {
        assert!(matches!(parse_sgrid("SGRID 2\n1 1 1\n0\n"), Err(DataError::Format(_))));
        assert!(matches!(parse_sgrid("FGRID 1\n1 1 1\n0\n"), Err(DataError::Format(_))));
    }

    #[test]
    fn one_hot_uniform_grid_fills_single_channel() {
        let hot = one_hot(&[0, 0, 0, 0], 2, 2, 3);
        assert_eq!(&hot[0..4], &[1.0, 1.0, 1.0, 1.0]);
        assert!(hot[4..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fgrid_round_trip() {
        let raster = FrameRaster {
            channels: 2,
            height: 2,
            width: 3,
            data: vec![0.0, 0.25, 0.5, 1.0, 0.125, 0.75, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
        };
        let parsed = parse_fgrid(&write_fgrid(&raster)).unwrap();
        assert_eq!(parsed.data, raster.data);
        assert_eq!((parsed.channels, parsed.height, parsed.width), (2, 2, 3));
    }

    #[test]
    fn fgrid_rejects_out_of_range_values() {
        assert!(matches!(parse_fgrid("FGRID 1\n1 2 1\n0.5 1.5\n"), Err(DataError::Format(_))));
    }

    #[test]
    fn sgrid_round_trip() {
        let g = SemanticGrid { height: 3, width: 2, class_count: 5, ids: vec![0, 4, 2, 1, 3, 3] };
        let parsed = parse_sgrid(&write_sgrid(&g)).unwrap();
        assert_eq!(parsed.ids, g.ids);
        assert_eq!(parsed.class_count, 5);
    }

    #[test]
    fn resample_integer_upscale_repeats_cells() {
        let g = SemanticGrid { height: 2, width: 2, class_count: 2, ids: vec![0, 1, 1, 0] };
        let up = nearest_resample(&g, 4, 4).unwrap();
        assert_eq!(up, vec![0, 0, 1, 1, 0, 0, 1, 1, 1, 1, 0, 0, 1, 1, 0, 0]);
    }

    #[test]
    fn resample_non_integer_factor_rejected() {
        let g = SemanticGrid { height: 2, width: 2, class_count: 2, ids: vec![0, 1, 1, 0] };
        assert!(matches!(nearest_resample(&g, 3, 4), Err(DataError::Config(_))));
    }
}
