//! `TOPODS01` container: magic, `u32` manifest length, JSON manifest, then one
//! checksummed little-endian record per sample.

use std::fs;
use std::path::Path;

use crate::density::DensityField;
use crate::fea::FieldImage;
use crate::problem::{BoundarySpec, LoadShape, PointLoad, ProblemKind, ProblemSpec, N_FFT};
use crate::{Error, Result};

use super::{Dataset, DatasetManifest, Sample};

pub const MAGIC: &[u8; 8] = b"TOPODS01";
pub const FORMAT_VERSION: u32 = 1;

pub(super) const LAYOUT: &str = "per record: u64 seed; u32 bc_mask, load_ex, load_ey, iterations; \
i32 angle_index (-1 none); u32 shape code (0 static); f64 fx, fy, vf, gt_compliance, threshold; \
f64 x10 fft (dynamic only); f32 sed, vm, topology, each nely*nelx row-major with ey = 0 the top row; \
u32 CRC32 of the preceding record bytes";

fn record_bytes(s: &Sample, out: &mut Vec<u8>) {
    out.extend_from_slice(&s.seed.to_le_bytes());
    let l = &s.spec.load;
    for v in [
        s.spec.bc.mask as u32,
        l.ex as u32,
        l.ey as u32,
        s.iterations,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let angle = l.angle_index.map_or(-1i32, |a| a as i32);
    out.extend_from_slice(&angle.to_le_bytes());
    out.extend_from_slice(&s.spec.shape.map_or(0, |sh| sh.code()).to_le_bytes());
    for v in [l.fx, l.fy, s.spec.vf, s.gt_compliance, s.threshold] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(f) = &s.fft {
        for v in f {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for arr in [&s.fields.sed, &s.fields.vm, &s.topology.values] {
        for &v in arr.iter() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
}

/// Serialize a dataset to bytes.
pub fn to_bytes(ds: &Dataset) -> Result<Vec<u8>> {
    let mut m = ds.manifest.clone();
    m.count = ds.samples.len();
    m.seeds = ds.samples.iter().map(|s| s.seed).collect();
    let json = serde_json::to_vec(&m)?;
    let mut out = Vec::with_capacity(12 + json.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    let mut rec = Vec::new();
    for s in &ds.samples {
        if s.spec.grid != m.grid || s.kind() != m.kind {
            return Err(Error::Schema(format!(
                "sample {} does not match the manifest",
                s.seed
            )));
        }
        if s.fft.is_some() != (m.kind == ProblemKind::Dynamic) {
            return Err(Error::Schema(format!(
                "sample {} FFT presence disagrees with kind",
                s.seed
            )));
        }
        rec.clear();
        record_bytes(s, &mut rec);
        out.extend_from_slice(&rec);
        out.extend_from_slice(&crc32fast::hash(&rec).to_le_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Truncated(format!(
                "{what}: need {n} bytes at offset {}, {} left",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn i32(&mut self, what: &str) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let b = self.take(4 * n, what)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
}

/// Parse a dataset from bytes; `path` only labels errors.
pub fn from_bytes(buf: &[u8], path: &Path) -> Result<Dataset> {
    let mut r = Reader { buf, pos: 0 };
    let magic = r.take(8, "magic").map_err(|_| Error::BadMagic {
        path: path.to_path_buf(),
        expected: "TOPODS01",
    })?;
    if magic != MAGIC {
        if magic.starts_with(b"TOPODS") {
            let found = std::str::from_utf8(&magic[6..])
                .ok()
                .and_then(|s| s.parse().ok())
                .unwrap_or(0);
            return Err(Error::Version {
                found,
                expected: FORMAT_VERSION,
            });
        }
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: "TOPODS01",
        });
    }
    let len = r.u32("manifest length")? as usize;
    let manifest: DatasetManifest = serde_json::from_slice(r.take(len, "manifest")?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Version {
            found: manifest.format_version,
            expected: FORMAT_VERSION,
        });
    }
    if manifest.seeds.len() != manifest.count {
        return Err(Error::Schema(format!(
            "manifest lists {} seeds for {} records",
            manifest.seeds.len(),
            manifest.count
        )));
    }
    let grid = manifest.grid;
    let n = grid.n_elements();
    let dynamic = manifest.kind == ProblemKind::Dynamic;
    let mut samples = Vec::with_capacity(manifest.count);
    for i in 0..manifest.count {
        let start = r.pos;
        let what = format!("record {i}");
        let seed = r.u64(&what)?;
        let mask = r.u32(&what)?;
        let ex = r.u32(&what)? as usize;
        let ey = r.u32(&what)? as usize;
        let iterations = r.u32(&what)?;
        let angle = r.i32(&what)?;
        let shape_code = r.u32(&what)?;
        let fx = r.f64(&what)?;
        let fy = r.f64(&what)?;
        let vf = r.f64(&what)?;
        let gt_compliance = r.f64(&what)?;
        let threshold = r.f64(&what)?;
        let fft = if dynamic {
            let mut f = [0.0; N_FFT];
            for v in &mut f {
                *v = r.f64(&what)?;
            }
            Some(f)
        } else {
            None
        };
        let sed = r.f32s(n, &what)?;
        let vm = r.f32s(n, &what)?;
        let topo = r.f32s(n, &what)?;
        let end = r.pos;
        let stored = r.u32(&what)?;
        let computed = crc32fast::hash(&buf[start..end]);
        if stored != computed {
            return Err(Error::Checksum {
                record: i,
                stored,
                computed,
            });
        }
        let shape = match shape_code {
            0 => None,
            c => Some(
                LoadShape::from_code(c)
                    .ok_or_else(|| Error::Schema(format!("record {i}: load shape code {c}")))?,
            ),
        };
        if shape.is_some() != dynamic {
            return Err(Error::Schema(format!(
                "record {i}: load shape disagrees with dataset kind"
            )));
        }
        if seed != manifest.seeds[i] {
            return Err(Error::Schema(format!(
                "record {i}: seed {seed} not the manifest's {}",
                manifest.seeds[i]
            )));
        }
        let angle_index = match angle {
            -1 => None,
            a @ 0..=5 => Some(a as u8),
            a => return Err(Error::Schema(format!("record {i}: angle index {a}"))),
        };
        let spec = ProblemSpec {
            grid,
            bc: BoundarySpec { mask: mask as u16 },
            load: PointLoad {
                ex,
                ey,
                fx,
                fy,
                angle_index,
            },
            vf,
            shape,
        };
        samples.push(Sample {
            seed,
            spec,
            fields: FieldImage {
                nelx: grid.nelx,
                nely: grid.nely,
                sed,
                vm,
            },
            topology: DensityField::from_values(&grid, topo)?,
            gt_compliance,
            fft,
            threshold,
            iterations,
        });
    }
    if r.pos != buf.len() {
        return Err(Error::Schema(format!(
            "{} trailing bytes after the last record",
            buf.len() - r.pos
        )));
    }
    Ok(Dataset { manifest, samples })
}

pub fn write_dataset(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(ds)?).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&buf, path)
}
