//! Feature-grid file format "GFC1": magic, version, config echo, record
//! count, grid dims, feature dim, then per record an id and L x D values
//! stored as 32-bit little-endian floats (widened to f64 in memory).

use super::{DataError, DataResult};
use crate::attention::FeatureGrid;
use std::fs;
use std::path::Path;

const MAGIC: &[u8; 4] = b"GFC1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub image_id: String,
    pub grid: FeatureGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub echo: String,
    pub grid_h: usize,
    pub grid_w: usize,
    pub d: usize,
    pub records: Vec<FeatureRecord>,
}

impl FeatureFile {
    pub fn find(&self, image_id: &str) -> Option<&FeatureRecord> {
        self.records.iter().find(|r| r.image_id == image_id)
    }
}

pub fn write_feature_file(path: &Path, file: &FeatureFile) -> DataResult<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(file.echo.len() as u32).to_le_bytes());
    buf.extend_from_slice(file.echo.as_bytes());
    buf.extend_from_slice(&(file.records.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(file.grid_h as u32).to_le_bytes());
    buf.extend_from_slice(&(file.grid_w as u32).to_le_bytes());
    buf.extend_from_slice(&(file.d as u32).to_le_bytes());
    for rec in &file.records {
        if rec.grid.grid_h != file.grid_h || rec.grid.grid_w != file.grid_w || rec.grid.d != file.d
        {
            return Err(DataError::Format(format!(
                "record '{}' disagrees with the declared grid geometry",
                rec.image_id
            )));
        }
        buf.extend_from_slice(&(rec.image_id.len() as u32).to_le_bytes());
        buf.extend_from_slice(rec.image_id.as_bytes());
        for &v in rec.grid.values() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_feature_file(path: &Path) -> DataResult<FeatureFile> {
    let bytes = fs::read(path)?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> DataResult<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(DataError::Format("feature file ends early".into()));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    let u32_at = |pos: &mut usize| -> DataResult<u32> {
        Ok(u32::from_le_bytes(take(pos, 4)?.try_into().unwrap()))
    };
    if take(&mut pos, 4)? != MAGIC {
        return Err(DataError::Format("not a GFC1 feature file".into()));
    }
    let version = u32_at(&mut pos)?;
    if version != VERSION {
        return Err(DataError::Format(format!(
            "unsupported feature file version {version}"
        )));
    }
    let echo_len = u32_at(&mut pos)? as usize;
    let echo = String::from_utf8(take(&mut pos, echo_len)?.to_vec())
        .map_err(|_| DataError::Format("config echo is not utf-8".into()))?;
    let count = u32_at(&mut pos)? as usize;
    let grid_h = u32_at(&mut pos)? as usize;
    let grid_w = u32_at(&mut pos)? as usize;
    let d = u32_at(&mut pos)? as usize;
    let l = grid_h * grid_w;
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let id_len = u32_at(&mut pos)? as usize;
        let image_id = String::from_utf8(take(&mut pos, id_len)?.to_vec())
            .map_err(|_| DataError::Format("image id is not utf-8".into()))?;
        let mut values = Vec::with_capacity(l * d);
        for _ in 0..l * d {
            let raw = take(&mut pos, 4)?;
            values.push(f32::from_le_bytes(raw.try_into().unwrap()) as f64);
        }
        let grid = FeatureGrid::new(grid_h, grid_w, d, values)
            .map_err(|e| DataError::Format(format!("record '{image_id}': {e}")))?;
        records.push(FeatureRecord { image_id, grid });
    }
    Ok(FeatureFile {
        echo,
        grid_h,
        grid_w,
        d,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureFile {
        let grid = |offset: f64| {
            // Values already at f32 precision, as the extractor guarantees.
            let values: Vec<f64> = (0..2 * 2 * 3)
                .map(|i| ((i as f32) * 0.25 + offset as f32) as f64)
                .collect();
            FeatureGrid::new(2, 2, 3, values).unwrap()
        };
        FeatureFile {
            echo: "seed=7 variant=split".into(),
            grid_h: 2,
            grid_w: 2,
            d: 3,
            records: vec![
                FeatureRecord {
                    image_id: "img00000".into(),
                    grid: grid(0.0),
                },
                FeatureRecord {
                    image_id: "img00001".into(),
                    grid: grid(1.0),
                },
            ],
        }
    }

    #[test]
    fn round_trip_reproduces_values_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.gfc");
        let file = sample();
        write_feature_file(&path, &file).unwrap();
        let back = read_feature_file(&path).unwrap();
        assert_eq!(back, file);
        // Writing the read copy reproduces the bytes.
        let path2 = dir.path().join("f2.gfc");
        write_feature_file(&path2, &back).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn geometry_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut file = sample();
        file.records[1].grid = FeatureGrid::new(1, 2, 3, vec![0.0; 6]).unwrap();
        assert!(write_feature_file(&dir.path().join("bad.gfc"), &file).is_err());
    }
}
