use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::{CameraIntrinsics, DepthFrame};
use crate::pose::Pose;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: byte {offset}: {detail}")]
    Parse {
        file: PathBuf,
        offset: usize,
        detail: String,
    },
    #[error("dataset in {0} is empty")]
    Empty(PathBuf),
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

/// One frame of ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFrame {
    pub depth: DepthFrame,
    /// Camera-space joints (mm).
    pub joints_mm: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub joints: usize,
    pub width: usize,
    pub height: usize,
    pub intrinsics: CameraIntrinsics,
    pub frames: Vec<RawFrame>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_owned(),
        source,
    }
}

pub fn depth_file_name(index: usize) -> String {
    format!("depth_{index:06}.pgm")
}

/// 16-bit binary PGM, big-endian samples, depth rounded to whole millimetres.
pub fn encode_pgm(frame: &DepthFrame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", frame.width, frame.height).into_bytes();
    out.reserve(frame.depth.len() * 2);
    for &d in &frame.depth {
        let v = d.round().clamp(0.0, 65535.0) as u16;
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

/// Parse a 16-bit PGM into `(width, height, samples)`.
pub fn decode_pgm(bytes: &[u8], file: &Path) -> Result<(usize, usize, Vec<u16>), DatasetError> {
    let err = |offset: usize, detail: String| DatasetError::Parse {
        file: file.to_owned(),
        offset,
        detail,
    };
    let mut pos = 0;
    let token = |pos: &mut usize| -> Result<(usize, String), DatasetError> {
        while *pos < bytes.len() {
            if bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            } else if bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            } else {
                break;
            }
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(err(start, "unexpected end of header".into()));
        }
        Ok((start, String::from_utf8_lossy(&bytes[start..*pos]).into_owned()))
    };
    let (at, magic) = token(&mut pos)?;
    if magic != "P5" {
        return Err(err(at, format!("expected magic P5, found `{magic}`")));
    }
    let number = |pos: &mut usize, what: &str| -> Result<usize, DatasetError> {
        let (at, t) = token(pos)?;
        t.parse::<usize>()
            .map_err(|_| err(at, format!("expected {what}, found `{t}`")))
    };
    let width = number(&mut pos, "width")?;
    let height = number(&mut pos, "height")?;
    let maxval_at = pos;
    let maxval = number(&mut pos, "maxval")?;
    if maxval != 65535 {
        return Err(err(maxval_at, format!("expected 16-bit maxval 65535, found {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the samples.
    pos += 1;
    let need = width * height * 2;
    if bytes.len() < pos + need {
        return Err(err(
            bytes.len(),
            format!("expected {need} sample bytes, found {}", bytes.len().saturating_sub(pos)),
        ));
    }
    if bytes.len() > pos + need {
        return Err(err(pos + need, "trailing bytes after samples".into()));
    }
    let samples = bytes[pos..]
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok((width, height, samples))
}

/// Write `meta.txt`, one PGM per frame and `joints.csv` into `dir`.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let k = dataset.intrinsics;
    let meta = format!(
        "joints={}\nwidth={}\nheight={}\nfx={}\nfy={}\ncx={}\ncy={}\ncount={}\nunits=mm\n",
        dataset.joints,
        dataset.width,
        dataset.height,
        k.fx,
        k.fy,
        k.cx,
        k.cy,
        dataset.frames.len()
    );
    let path = dir.join("meta.txt");
    fs::write(&path, meta).map_err(io_err(&path))?;

    let mut csv = String::from("frame,joint,x_mm,y_mm,z_mm\n");
    for (i, frame) in dataset.frames.iter().enumerate() {
        let path = dir.join(depth_file_name(i));
        fs::write(&path, encode_pgm(&frame.depth)).map_err(io_err(&path))?;
        for (j, p) in frame.joints_mm.joints().iter().enumerate() {
            csv.push_str(&format!("{i},{j},{},{},{}\n", p[0], p[1], p[2]));
        }
    }
    let path = dir.join("joints.csv");
    fs::write(&path, csv).map_err(io_err(&path))
}

struct Meta {
    joints: usize,
    width: usize,
    height: usize,
    intrinsics: CameraIntrinsics,
    count: usize,
}

fn parse_meta(text: &str, file: &Path) -> Result<Meta, DatasetError> {
    let mut values = std::collections::HashMap::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        if !trimmed.is_empty() {
            let (k, v) = trimmed.split_once('=').ok_or_else(|| DatasetError::Parse {
                file: file.to_owned(),
                offset,
                detail: format!("expected key=value, found `{trimmed}`"),
            })?;
            values.insert(k.trim().to_owned(), (offset, v.trim().to_owned()));
        }
        offset += line.len();
    }
    let get = |key: &str| {
        values.get(key).cloned().ok_or_else(|| DatasetError::Parse {
            file: file.to_owned(),
            offset: text.len(),
            detail: format!("missing key `{key}`"),
        })
    };
    fn num<T: std::str::FromStr>(file: &Path, key: &str, (offset, v): (usize, String)) -> Result<T, DatasetError> {
        v.parse().map_err(|_| DatasetError::Parse {
            file: file.to_owned(),
            offset,
            detail: format!("bad value `{v}` for `{key}`"),
        })
    }
    let (units_at, units) = get("units")?;
    if units != "mm" {
        return Err(DatasetError::Parse {
            file: file.to_owned(),
            offset: units_at,
            detail: format!("unsupported units `{units}`"),
        });
    }
    let intrinsics = CameraIntrinsics::new(
        num(file, "fx", get("fx")?)?,
        num(file, "fy", get("fy")?)?,
        num(file, "cx", get("cx")?)?,
        num(file, "cy", get("cy")?)?,
    )
    .map_err(|e| DatasetError::Invalid(e.to_string()))?;
    Ok(Meta {
        joints: num(file, "joints", get("joints")?)?,
        width: num(file, "width", get("width")?)?,
        height: num(file, "height", get("height")?)?,
        intrinsics,
        count: num(file, "count", get("count")?)?,
    })
}

fn parse_joints(text: &str, file: &Path, joints: usize, count: usize) -> Result<Vec<Pose>, DatasetError> {
    let err = |offset: usize, detail: String| DatasetError::Parse {
        file: file.to_owned(),
        offset,
        detail,
    };
    let mut lines = text.split_inclusive('\n');
    let header = lines.next().unwrap_or("");
    if header.trim_end() != "frame,joint,x_mm,y_mm,z_mm" {
        return Err(err(0, format!("unexpected header `{}`", header.trim_end())));
    }
    let mut offset = header.len();
    let mut poses: Vec<Vec<[f64; 3]>> = Vec::with_capacity(count);
    for line in lines {
        let row = line.trim_end();
        if !row.is_empty() {
            let fields: Vec<&str> = row.split(',').collect();
            if fields.len() != 5 {
                return Err(err(offset, format!("expected 5 fields, found {}", fields.len())));
            }
            let frame: usize = fields[0]
                .parse()
                .map_err(|_| err(offset, format!("bad frame index `{}`", fields[0])))?;
            let joint: usize = fields[1]
                .parse()
                .map_err(|_| err(offset, format!("bad joint index `{}`", fields[1])))?;
            let mut p = [0.0; 3];
            for k in 0..3 {
                p[k] = fields[2 + k]
                    .parse()
                    .map_err(|_| err(offset, format!("bad coordinate `{}`", fields[2 + k])))?;
            }
            let open = poses.last().is_some_and(|p| p.len() < joints);
            if open {
                if frame != poses.len() - 1 {
                    let have = poses.last().map_or(0, |p| p.len());
                    return Err(err(
                        offset,
                        format!("frame {} has {have} joints, expected {joints}", poses.len() - 1),
                    ));
                }
            } else {
                if frame != poses.len() {
                    return Err(err(offset, format!("expected frame {}, found {frame}", poses.len())));
                }
                poses.push(Vec::with_capacity(joints));
            }
            let current = poses.last_mut().expect("pushed above");
            if joint != current.len() {
                return Err(err(
                    offset,
                    format!("expected joint {} of frame {frame}, found {joint}", current.len()),
                ));
            }
            current.push(p);
        }
        offset += line.len();
    }
    if let Some(last) = poses.last() {
        if last.len() != joints {
            return Err(err(
                offset,
                format!("frame {} has {} joints, expected {joints}", poses.len() - 1, last.len()),
            ));
        }
    }
    if poses.len() != count {
        return Err(err(offset, format!("found {} frames, meta declares {count}", poses.len())));
    }
    poses
        .into_iter()
        .enumerate()
        .map(|(i, p)| Pose::new(p).map_err(|e| DatasetError::Invalid(format!("frame {i}: {e}"))))
        .collect()
}

/// Read a directory written by [`write_dataset`].
pub fn read_dataset(dir: &Path) -> Result<Dataset, DatasetError> {
    let meta_path = dir.join("meta.txt");
    if !meta_path.exists() {
        let empty = fs::read_dir(dir).map_err(io_err(dir))?.next().is_none();
        return Err(if empty {
            DatasetError::Empty(dir.to_owned())
        } else {
            DatasetError::Io {
                path: meta_path,
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "missing meta.txt"),
            }
        });
    }
    let meta_text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
    let meta = parse_meta(&meta_text, &meta_path)?;
    if meta.count == 0 {
        return Err(DatasetError::Empty(dir.to_owned()));
    }
    let joints_path = dir.join("joints.csv");
    let joints_text = fs::read_to_string(&joints_path).map_err(io_err(&joints_path))?;
    let poses = parse_joints(&joints_text, &joints_path, meta.joints, meta.count)?;

    let mut frames = Vec::with_capacity(meta.count);
    for (i, joints_mm) in poses.into_iter().enumerate() {
        let path = dir.join(depth_file_name(i));
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let (w, h, samples) = decode_pgm(&bytes, &path)?;
        if (w, h) != (meta.width, meta.height) {
            return Err(DatasetError::Parse {
                file: path,
                offset: 3,
                detail: format!("image is {w}x{h}, meta declares {}x{}", meta.width, meta.height),
            });
        }
        let depth = DepthFrame::new(w, h, samples.into_iter().map(f64::from).collect(), meta.intrinsics)
            .map_err(|e| DatasetError::Invalid(e.to_string()))?;
        frames.push(RawFrame { depth, joints_mm });
    }
    Ok(Dataset {
        joints: meta.joints,
        width: meta.width,
        height: meta.height,
        intrinsics: meta.intrinsics,
        frames,
    })
}

/// `frame,joint,x_mm,y_mm,z_mm` rows for a list of poses.
pub fn poses_csv(poses: &[Pose]) -> String {
    let mut csv = String::from("frame,joint,x_mm,y_mm,z_mm\n");
    for (i, pose) in poses.iter().enumerate() {
        for (j, p) in pose.joints().iter().enumerate() {
            csv.push_str(&format!("{i},{j},{},{},{}\n", p[0], p[1], p[2]));
        }
    }
    csv
}
